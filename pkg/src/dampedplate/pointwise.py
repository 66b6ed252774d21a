"""Pointwise scalar functions built from a whitelist: polynomial plus sines.

``f(s) = sum_i a_i s**i + sum_j A_j sin(w_j s)``

Configs describe nonlinearities and damping coefficients this way so a
run is reproducible without executing user code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P


@dataclass(frozen=True)
class Pointwise:
    poly: tuple[float, ...] = ()
    sines: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        poly = tuple(float(a) for a in self.poly)
        # trailing zeros would inflate the reported degree
        while poly and poly[-1] == 0.0:
            poly = poly[:-1]
        sines = tuple((float(a), float(w)) for a, w in self.sines if a != 0.0)
        for a, w in sines:
            if w == 0.0:
                raise ValueError("sine frequency must be nonzero")
        if not all(np.isfinite(poly)) or not all(np.isfinite(sines).ravel() if sines else [True]):
            raise ValueError("pointwise function coefficients must be finite")
        object.__setattr__(self, "poly", poly)
        object.__setattr__(self, "sines", sines)

    @classmethod
    def constant(cls, value: float) -> "Pointwise":
        return cls(poly=(value,))

    @classmethod
    def from_config(cls, obj) -> "Pointwise":
        """Accept a number (constant) or ``{poly = [...], sin = [[amp, freq], ...]}``."""
        if isinstance(obj, (int, float)):
            return cls.constant(float(obj))
        if isinstance(obj, dict):
            unknown = set(obj) - {"poly", "sin"}
            if unknown:
                raise KeyError(f"unknown pointwise-function keys: {sorted(unknown)}")
            sines = obj.get("sin", [])
            if any(len(pair) != 2 for pair in sines):
                raise ValueError("each 'sin' entry must be [amplitude, frequency]")
            return cls(tuple(obj.get("poly", ())), tuple(tuple(p) for p in sines))
        raise TypeError(f"cannot build a pointwise function from {obj!r}")

    def to_config(self) -> dict:
        out: dict = {"poly": list(self.poly)}
        if self.sines:
            out["sin"] = [list(p) for p in self.sines]
        return out

    @property
    def is_zero(self) -> bool:
        return not self.poly and not self.sines

    @property
    def is_constant(self) -> bool:
        return len(self.poly) <= 1 and not self.sines

    @property
    def degree(self) -> int:
        """Polynomial degree (-1 for the zero polynomial); sines are bounded."""
        return len(self.poly) - 1

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = P.polyval(s, self.poly) if self.poly else np.zeros_like(s)
        for a, w in self.sines:
            out = out + a * np.sin(w * s)
        return out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        out = P.polyval(s, P.polyder(self.poly)) if len(self.poly) > 1 else np.zeros_like(s)
        for a, w in self.sines:
            out = out + a * w * np.cos(w * s)
        return out

    def antiderivative(self, s):
        """Primitive vanishing at zero."""
        s = np.asarray(s, dtype=float)
        out = P.polyval(s, P.polyint(self.poly)) if self.poly else np.zeros_like(s)
        for a, w in self.sines:
            out = out + a * (1.0 - np.cos(w * s)) / w
        return out

    def liminf_ratio(self) -> float:
        """``liminf_{|s|->inf} f(s)/s``; used for the coercivity admission checks."""
        d = self.degree
        if d <= 0:
            return 0.0
        lead = self.poly[-1]
        if d == 1:
            return lead
        if d % 2 == 0:
            return -np.inf
        return np.inf if lead > 0 else -np.inf

    def range_on(self, lo: float, hi: float, samples: int = 513) -> tuple[float, float]:
        vals = self(np.linspace(lo, hi, samples))
        return float(vals.min()), float(vals.max())


ZERO = Pointwise()
