"""State-dependent damping ``D(u, u_t)`` and empirical probes of its structure.

Supported terms (any combination, subject to :meth:`DampingSpec.check`):

* Kelvin--Voigt ``Delta[sigma0(u) Delta u_t]`` (plate operator, theta = 1);
* structural ``-div[sigma1(u, grad u) grad u_t]`` with
  ``sigma1 = sigma10(u) + sigma11(u) |grad u|^r``;
* friction ``g0(u) u_t + g1(u) |u_t|^(m-1) u_t`` (``m = friction_power``);
* wave nonlocal ``sigma0(|u|_eta) (-Delta u_t) + sigma1(u) u_t``.

Each term is tested against the basis with the same trapezoid quadrature
used for the dissipation rate, so ``(D(u, v), v)`` equals a positively
weighted sum of pointwise nonnegative quantities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forces import SpecError, random_field
from .pointwise import Pointwise
from .spectral import DomainSpec, ModalField, OperatorA, basis_for

SAMPLE_RANGE = 10.0


@dataclass(frozen=True)
class DampingSpec:
    theta: float = 1.0
    sigma0: Pointwise | None = None
    sigma10: Pointwise | None = None
    sigma11: Pointwise | None = None
    structural_r: float = 1.0
    g0: Pointwise | None = None
    g1: Pointwise | None = None
    friction_power: float = 3.0
    wave_sigma0: Pointwise | None = None
    wave_eta: float = 0.5
    wave_sigma1: Pointwise | None = None
    test_mode: bool = False

    @property
    def has_kelvin_voigt(self) -> bool:
        return self.sigma0 is not None

    @property
    def has_structural(self) -> bool:
        return self.sigma10 is not None or self.sigma11 is not None

    @property
    def has_friction(self) -> bool:
        return self.g0 is not None or self.g1 is not None

    @property
    def has_wave(self) -> bool:
        return self.wave_sigma0 is not None or self.wave_sigma1 is not None

    @property
    def is_empty(self) -> bool:
        return not (self.has_kelvin_voigt or self.has_structural or self.has_friction or self.has_wave)

    @property
    def linear_in_velocity(self) -> bool:
        return self.g1 is None

    def friction_exponents(self) -> tuple[float, float]:
        """``(q1, q2)`` growth exponents of the friction term in the velocity variable."""
        q1 = 0.0
        if self.g0 is not None and not self.g0.is_constant:
            q1 = 1.0
        if self.g1 is not None and not self.g1.is_constant:
            q1 = max(q1, self.friction_power)
        q2 = self.friction_power - 1.0 if self.g1 is not None else 0.0
        return q1, q2

    def check(self, domain: DomainSpec, kind: str = "plate", sample_range: float = SAMPLE_RANGE) -> None:
        """Raise :class:`SpecError` naming the first violated admissibility rule."""
        th = self.theta
        if not 0.0 < th <= 1.0:
            raise SpecError("theta-range", f"damping exponent theta must lie in (0, 1], got {th}")
        if self.is_empty and not self.test_mode:
            raise SpecError("damping-empty", "no damping term is on; set test_mode = true to allow D = 0")
        lo, hi = -sample_range, sample_range
        if self.has_kelvin_voigt:
            if kind != "plate":
                raise SpecError("kelvin-voigt-operator", "Kelvin-Voigt damping needs the plate operator")
            if th != 1.0:
                raise SpecError("kelvin-voigt-theta", f"Kelvin-Voigt damping requires theta = 1, got {th}")
            if self.sigma0.range_on(lo, hi)[0] <= 0:
                raise SpecError("kelvin-voigt-positivity", "sigma0(s) > 0 required on the sampled range")
        if self.has_structural:
            for name, fn in (("sigma10", self.sigma10), ("sigma11", self.sigma11)):
                if fn is not None and fn.range_on(lo, hi)[0] < 0:
                    raise SpecError("structural-nonnegative", f"{name}(s) >= 0 required on the sampled range")
            if self.sigma11 is not None:
                if th == 0.5:
                    raise SpecError(
                        "structural-theta-half",
                        "theta = 1/2 requires a structural coefficient independent of grad u (sigma11 off)",
                    )
                if self.structural_r < 1:
                    raise SpecError("structural-exponent", f"structural exponent r >= 1 required, got {self.structural_r}")
        if self.has_friction:
            for name, fn in (("g0", self.g0), ("g1", self.g1)):
                if fn is not None and fn.range_on(lo, hi)[0] < 0:
                    raise SpecError("friction-sign", f"{name}(s) >= 0 required so that g(u, v) v >= 0")
            if self.friction_power < 1:
                raise SpecError("friction-sign", f"friction power must be >= 1, got {self.friction_power}")
            q1, q2 = self.friction_exponents()
            if th == 1.0:
                if q2 > 2:
                    raise SpecError("friction-growth", f"q2 <= 2 required by the friction growth condition, got {q2}")
                if q1 > 4:
                    raise SpecError("friction-growth", f"q1 <= 4 required by the friction growth condition, got {q1}")
            else:
                if q2 >= 2:
                    raise SpecError("friction-growth", f"q2 < 2 required by the friction growth condition for theta < 1, got {q2}")
                if q1 >= 3:
                    raise SpecError("friction-growth", f"q1 < 3 required by the friction growth condition for theta < 1, got {q1}")
        if self.has_wave:
            if kind != "wave":
                raise SpecError("wave-nonlocal-operator", "nonlocal wave damping needs the wave operator")
            if th != 1.0:
                raise SpecError("wave-nonlocal-theta", f"nonlocal wave damping acts with theta = 1, got {th}")
            if not self.wave_eta < 1:
                raise SpecError("wave-eta", f"nonlocal norm index eta < 1 required, got {self.wave_eta}")
            if self.wave_sigma0 is not None and self.wave_sigma0.range_on(0.0, hi)[0] <= 0:
                raise SpecError("wave-sigma0-positivity", "sigma0(s) > 0 required for the nonlocal coefficient")
            if self.wave_sigma1 is not None:
                if self.wave_sigma1.range_on(lo, hi)[0] < 0:
                    raise SpecError("wave-sigma1-sign", "sigma1(s) >= 0 required")
                if self.wave_sigma1.degree - 1 >= 3:
                    raise SpecError(
                        "wave-damping-growth",
                        f"sigma1 Lipschitz growth exponent q1 < 3 required, got {self.wave_sigma1.degree - 1}",
                    )


def _midrange(vals) -> float:
    return 0.5 * (float(np.max(vals)) + float(np.min(vals)))


class Damping:
    """Evaluator for a :class:`DampingSpec` on coefficient arrays.

    Terms that are linear in ``v`` with constant coefficients are diagonal
    in the sine basis and are applied modally; the rest go through the grid.
    """

    def __init__(self, spec: DampingSpec, A: OperatorA):
        self.spec = spec
        self.A = A
        self.basis = basis_for(A.domain)
        self.mu = self.basis.mu
        self.zero = spec.is_empty
        s = spec
        diag = np.zeros(A.domain.shape)
        self.kv_grid = s.has_kelvin_voigt and not s.sigma0.is_constant
        if s.has_kelvin_voigt and not self.kv_grid:
            diag += s.sigma0(0.0) * self.mu**2
        self.structural_grid = s.has_structural and (s.sigma11 is not None or not s.sigma10.is_constant)
        if s.has_structural and not self.structural_grid:
            diag += s.sigma10(0.0) * self.mu
        self.g0_grid = s.g0 is not None and not s.g0.is_constant
        if s.g0 is not None and not self.g0_grid:
            diag += s.g0(0.0)
        self.ws1_grid = s.wave_sigma1 is not None and not s.wave_sigma1.is_constant
        if s.wave_sigma1 is not None and not self.ws1_grid:
            diag += s.wave_sigma1(0.0)
        self.diag = diag
        self.needs_u = self.kv_grid or self.structural_grid or self.g0_grid or s.g1 is not None or self.ws1_grid

    def _sigma1(self, ug, cu):
        s, b = self.spec, self.basis
        sig = s.sigma10(ug) if s.sigma10 is not None else 0.0
        if s.sigma11 is not None:
            g2 = sum(g * g for g in b.gradient(cu))
            sig = sig + s.sigma11(ug) * g2 ** (0.5 * s.structural_r)
        return sig

    def _friction(self, ug, vg):
        # grid part of g(u, v): g0 only when it varies with u
        s = self.spec
        g = 0.0
        if self.g0_grid:
            g = s.g0(ug) * vg
        if s.g1 is not None:
            g = g + s.g1(ug) * np.abs(vg) ** (s.friction_power - 1.0) * vg
        return g

    def _wave_coeff(self, cu) -> float:
        s = self.spec
        norm = float(np.sqrt(np.sum(self.mu**s.wave_eta * cu * cu)))
        return float(s.wave_sigma0(norm))

    def apply(self, cu: np.ndarray, cv: np.ndarray) -> np.ndarray:
        s, b = self.spec, self.basis
        if self.zero:
            return np.zeros_like(cv)
        out = self.diag * cv
        if s.wave_sigma0 is not None:
            out += self._wave_coeff(cu) * self.mu * cv
        if not self.needs_u:
            return out
        ug = b.synth(cu)
        if self.kv_grid:
            lap_v = b.synth(-self.mu * cv)
            out += -self.mu * b.analyse(s.sigma0(ug) * lap_v)
        if self.structural_grid:
            sig = self._sigma1(ug, cu)
            out += b.neg_divergence([sig * g for g in b.gradient(cv)])
        vg = None
        if self.g0_grid or s.g1 is not None:
            vg = b.synth(cv)
            out += b.analyse(self._friction(ug, vg))
        if self.ws1_grid:
            vg = b.synth(cv) if vg is None else vg
            out += b.analyse(s.wave_sigma1(ug) * vg)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("damping produced non-finite values")
        return out

    def rate(self, cu: np.ndarray, cv: np.ndarray) -> float:
        """``(D(u, v), v)``: diagonal terms modally, the rest as a grid quadrature of nonnegative densities."""
        s, b = self.spec, self.basis
        if self.zero:
            return 0.0
        total = float(np.sum(self.diag * cv * cv))
        if s.wave_sigma0 is not None:
            total += self._wave_coeff(cu) * float(np.sum(self.mu * cv * cv))
        if not self.needs_u:
            return total
        ug = b.synth(cu)
        dens = 0.0
        if self.kv_grid:
            lap_v = b.synth(-self.mu * cv)
            dens = dens + s.sigma0(ug) * lap_v * lap_v
        if self.structural_grid:
            dens = dens + self._sigma1(ug, cu) * sum(g * g for g in b.gradient(cv))
        vg = None
        if self.g0_grid or s.g1 is not None:
            vg = b.synth(cv)
            dens = dens + self._friction(ug, vg) * vg
        if self.ws1_grid:
            vg = b.synth(cv) if vg is None else vg
            dens = dens + s.wave_sigma1(ug) * vg * vg
        if not np.isscalar(dens):
            total += b.quad(dens)
        return float(total)

    def proxy(self, cu: np.ndarray) -> np.ndarray:
        """Diagonal linear damping frozen at ``u``, treated implicitly by the integrator."""
        s = self.spec
        diag = self.diag.copy()
        if self.zero:
            return diag
        if s.wave_sigma0 is not None:
            diag += self._wave_coeff(cu) * self.mu
        if not self.needs_u:
            return diag
        ug = self.basis.synth(cu)
        if self.kv_grid:
            diag += _midrange(s.sigma0(ug)) * self.mu**2
        if self.structural_grid:
            diag += _midrange(np.broadcast_to(self._sigma1(ug, cu), ug.shape)) * self.mu
        if self.g0_grid:
            diag += _midrange(s.g0(ug))
        if self.ws1_grid:
            diag += _midrange(s.wave_sigma1(ug))
        return diag


def make_damping(spec: DampingSpec, A: OperatorA) -> Damping:
    return Damping(spec, A)


# ---------------------------------------------------------------------------
# Field-level API and probes
# ---------------------------------------------------------------------------


def apply_damping(spec: DampingSpec, A: OperatorA, u: ModalField, v: ModalField) -> ModalField:
    if u.domain != v.domain or u.domain != A.domain:
        raise ValueError("fields live on different discretisations")
    return ModalField(make_damping(spec, A).apply(u.coeffs, v.coeffs), u.domain)


def dissipation_rate(spec: DampingSpec, A: OperatorA, u: ModalField, v: ModalField) -> float:
    return make_damping(spec, A).rate(u.coeffs, v.coeffs)


def _snorm(lam, c, s):
    return float(np.sqrt(np.sum(lam**s * c * c)))


def _sample_state(A, rng, rho, n_modes):
    frac = rng.uniform(0.05, 0.95)
    r = rho * rng.uniform(0.2, 1.0)
    u = random_field(A, rng, r * np.sqrt(frac), s=1.0, n_modes=n_modes).coeffs
    v = random_field(A, rng, r * np.sqrt(1.0 - frac), s=0.0, n_modes=n_modes).coeffs
    return u, v


@dataclass
class CoercivityReport:
    rho: float
    alpha: float
    beta: float
    samples: int
    worst_sample: dict
    violation: bool


def coercivity_probe(spec: DampingSpec, A: OperatorA, rho: float, samples: int = 100,
                     seed: int = 0, n_modes: int | None = None) -> CoercivityReport:
    """Empirical ``alpha``, ``beta`` with ``(D,v) >= alpha |v|_theta^2`` and ``|D|_-theta <= beta |v|_theta``."""
    if rho <= 0 or samples < 1:
        raise ValueError("need rho > 0 and samples >= 1")
    d = make_damping(spec, A)
    rng = np.random.default_rng(seed)
    lam, th = A.eigenvalues, spec.theta
    n_modes = n_modes or min(A.domain.size, 24)
    alpha, beta, worst = np.inf, 0.0, {}
    for _ in range(samples):
        u, v = _sample_state(A, rng, rho, n_modes)
        dv = d.apply(u, v)
        vt = _snorm(lam, v, th)
        if vt == 0:
            continue
        ratio = d.rate(u, v) / vt**2
        if ratio < alpha:
            alpha, worst = ratio, {"u_norm1": _snorm(lam, u, 1.0), "v_norm": _snorm(lam, v, 0.0)}
        beta = max(beta, _snorm(lam, dv, -th) / vt)
    return CoercivityReport(rho, float(alpha), float(beta), samples, worst, bool(alpha <= 0))


@dataclass
class LipschitzReport:
    rho: float
    gamma: float
    c_monotone: float
    c_lipschitz: float
    min_monotone: float
    delta: float
    samples: int


def lipschitz_probe(spec: DampingSpec, A: OperatorA, rho: float, samples: int = 100, seed: int = 0,
                    delta: float = 0.25, n_modes: int | None = None, pairs=None) -> LipschitzReport:
    """Empirical constants for the monotonicity-type lower bound and the Lipschitz upper bound.

    Half of the random pairs share the displacement, which isolates the
    velocity monotonicity constant ``gamma``; the remaining pairs fix the
    displacement-coupling constants. Explicit ``pairs`` of
    ``(u1, v1, u2, v2)`` arrays may be supplied instead.
    """
    d = make_damping(spec, A)
    rng = np.random.default_rng(seed)
    lam, th = A.eigenvalues, spec.theta
    n_modes = n_modes or min(A.domain.size, 24)
    if pairs is None:
        pairs = []
        for i in range(samples):
            u1, v1 = _sample_state(A, rng, rho, n_modes)
            u2, v2 = _sample_state(A, rng, rho, n_modes)
            if i % 2 == 0:
                u2 = u1
            pairs.append((u1, v1, u2, v2))
    rows = []
    for u1, v1, u2, v2 in pairs:
        dd = d.apply(u1, v1) - d.apply(u2, v2)
        dv, du = v1 - v2, u1 - u2
        rows.append((float(np.sum(dd * dv)), _snorm(lam, dv, th), _snorm(lam, du, 1.0 - delta),
                     _snorm(lam, du, 1.0), _snorm(lam, dd, -th), _snorm(lam, v1, th), _snorm(lam, v2, th)))
    same = [r for r in rows if r[2] == 0 and r[1] > 0]
    gamma = min((r[0] / r[1] ** 2 for r in same), default=np.nan)
    min_mono = min((r[0] for r in same), default=0.0)
    c_mono, c_lip = 0.0, 0.0
    g = gamma if np.isfinite(gamma) else 0.0
    for mono, dvt, du_d, du1, dd_t, v1t, v2t in rows:
        if du_d > 0:
            c_mono = max(c_mono, (g * dvt**2 - mono) / (du_d**2 * (1 + v1t**2 + v2t**2)))
        du_l = du_d if th == 1.0 else du1
        den = dvt + du_l * (1 + v1t + v2t)
        if den > 0:
            c_lip = max(c_lip, dd_t / den)
    return LipschitzReport(rho, float(gamma), float(max(c_mono, 0.0)), float(c_lip), float(min_mono), delta, len(rows))
