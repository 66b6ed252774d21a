"""Empirical constants for difference estimates between two trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..integrator import PairedTrajectories


class ConsistencyError(ArithmeticError):
    pass


@dataclass
class QuasiStabilityFit:
    """Minimal ``C(gamma)`` with ``|y1 - y2|_H^2(t) <= C * RHS_gamma(t)`` on all samples.

    ``RHS_gamma(t) = |y1 - y2|_H^2(0) exp(-gamma t) + int_0^t exp(-gamma (t - s)) |u1 - u2|^2(s) ds``.
    """

    gammas: np.ndarray
    C: np.ndarray
    n_samples: int
    meta: dict = field(default_factory=dict)

    def constant(self, gamma: float) -> float:
        i = int(np.argmin(np.abs(self.gammas - gamma)))
        if not np.isclose(self.gammas[i], gamma):
            raise KeyError(f"gamma {gamma} not on the fitted grid")
        return float(self.C[i])


def _rhs(times, lhs0, zsq, gamma):
    out = np.empty_like(zsq)
    acc = 0.0
    out[0] = lhs0
    for k in range(1, len(times)):
        h = times[k] - times[k - 1]
        decay = np.exp(-gamma * h)
        acc = decay * acc + 0.5 * h * (decay * zsq[k - 1] + zsq[k])
        out[k] = lhs0 * np.exp(-gamma * (times[k] - times[0])) + acc
    return out


def quasi_stability_series(times, lhs, zsq, gammas) -> np.ndarray:
    times, lhs, zsq = (np.asarray(a, dtype=float) for a in (times, lhs, zsq))
    C = np.zeros(len(gammas))
    for i, g in enumerate(gammas):
        rhs = _rhs(times, lhs[0], zsq, g)
        pos = lhs > 0
        if np.any(pos & (rhs <= 0)):
            raise ConsistencyError("right-hand side vanishes while the trajectories differ")
        C[i] = float(np.max(lhs[pos] / rhs[pos])) if np.any(pos) else 0.0
    return C


def quasi_stability_fit(pairs: PairedTrajectories | list[PairedTrajectories], gammas=(0.01, 0.05, 0.1, 0.2),
                        every: int = 1) -> QuasiStabilityFit:
    """Fit ``C`` per ``gamma`` over one or several pairs (the max over pairs).

    ``every`` subsamples the recorded time grid, which is how stability of
    ``C`` under grid refinement is checked.
    """
    pairs = [pairs] if isinstance(pairs, PairedTrajectories) else list(pairs)
    gammas = np.sort(np.asarray(gammas, dtype=float))
    C = np.zeros(len(gammas))
    n = 0
    for p in pairs:
        sl = slice(None, None, every)
        C = np.maximum(C, quasi_stability_series(p.times[sl], p.h_distance_sq[sl], p.u_difference_sq[sl], gammas))
        n += len(p.times[sl])
    return QuasiStabilityFit(gammas, C, n, {"pairs": len(pairs), "every": every})


@dataclass
class GronwallFit:
    """``E_z(t) <= b E_z(0) exp(c t)`` on the recorded window."""

    b: float
    c: float
    window: tuple[float, float]
    holds: bool


def difference_bound_fit(pairs: PairedTrajectories | list[PairedTrajectories], t_max: float | None = None) -> GronwallFit:
    """Fit ``c`` as the least-squares growth rate of ``log E_z`` and take the minimal ``b``."""
    pairs = [pairs] if isinstance(pairs, PairedTrajectories) else list(pairs)
    ts, rs = [], []
    for p in pairs:
        ez = p.difference_energy
        if ez[0] <= 0:
            if np.any(ez > 0):
                raise ConsistencyError("difference energy grew from zero")
            continue
        keep = p.times <= (t_max if t_max is not None else np.inf)
        ratio = ez[keep] / ez[0]
        pos = ratio > 0
        ts.append(p.times[keep][pos] - p.times[0])
        rs.append(np.log(ratio[pos]))
    if not ts:
        return GronwallFit(1.0, 0.0, (0.0, 0.0), True)
    t, r = np.concatenate(ts), np.concatenate(rs)
    c = float(np.polyfit(t, r, 1)[0]) if len(t) > 1 and np.ptp(t) > 0 else 0.0
    b = float(np.exp(np.max(r - c * t)))
    return GronwallFit(b, c, (float(t.min()), float(t.max())), bool(np.isfinite(b) and np.isfinite(c)))
