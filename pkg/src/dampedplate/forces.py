"""Nonlinear elastic forces ``F(u)`` and their potentials ``Pi(u)``.

Every force is assembled so that, at the discrete level, it is the exact
gradient of the discrete potential with respect to the modal coefficients:
Nemytskii terms and fluxes are evaluated on the quadrature grid and tested
against (derivatives of) the basis with the same quadrature that defines
the potential. That makes the Galerkin system an exact gradient system,
which the integrator relies on for its energy identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .pointwise import ZERO, Pointwise
from .spectral import (
    DomainSpec,
    GridField,
    ModalField,
    OperatorA,
    basis_for,
    build_operator,
)

VARIANTS = ("kirchhoff", "karman", "berger", "wave")


class SpecError(ValueError):
    """A model or damping description violates an admissibility rule.

    ``rule`` is a short stable identifier of the violated condition.
    """

    def __init__(self, rule: str, message: str):
        super().__init__(f"[{rule}] {message}")
        self.rule = rule
        self.message = message


class ForceEvaluationError(ArithmeticError):
    pass


class AiryConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Closed description of the force model.

    ``load`` is the transverse load ``p`` (plate variants) or the source
    ``f`` (wave variant). ``phi`` is the Nemytskii nonlinearity used by
    the Kirchhoff and wave variants.
    """

    variant: str
    kappa: float = 0.0
    q: float = 2.0
    r: float = 0.0
    mu: float = 0.0
    phi: Pointwise = ZERO
    gamma: float = 0.0
    load: GridField | None = None
    f0: ModalField | None = None
    airy_bc: str = "hinged"
    airy_tol: float = 1e-9
    airy_maxiter: int = 20000

    @property
    def operator_kind(self) -> str:
        return "wave" if self.variant == "wave" else "plate"

    def check(self, domain: DomainSpec) -> None:
        """Raise :class:`SpecError` naming the first violated admissibility rule."""
        v = self.variant
        if v not in VARIANTS:
            raise SpecError("model-variant", f"unknown model variant {v!r}; expected one of {VARIANTS}")
        mu1 = float(basis_for(domain).mu.min())
        if v == "kirchhoff":
            if self.kappa < 0:
                raise SpecError("kirchhoff-kappa", f"Kirchhoff stiffness kappa >= 0 required, got {self.kappa}")
            if not (self.q > self.r >= 0):
                raise SpecError(
                    "kirchhoff-exponents",
                    f"Kirchhoff flux exponents must satisfy q > r >= 0, got q={self.q}, r={self.r}",
                )
            if not self.phi.liminf_ratio() > -(mu1**2):
                raise SpecError(
                    "kirchhoff-phi-coercivity",
                    "source coercivity liminf phi(s)/s > -lambda_1^2 violated "
                    f"(lambda_1 = {mu1:.6g} is the first Dirichlet-Laplacian eigenvalue)",
                )
        elif v == "karman":
            if domain.dimension != 2:
                raise SpecError("karman-dimension", "the von Karman bracket needs a 2-D domain")
            if self.airy_bc not in ("hinged", "clamped"):
                raise SpecError("karman-airy-bc", f"airy_bc must be 'hinged' or 'clamped', got {self.airy_bc!r}")
        elif v == "berger":
            if not self.kappa > 0:
                raise SpecError("berger-kappa", f"Berger stiffness kappa > 0 required, got {self.kappa}")
        elif v == "wave":
            deriv_growth = self.phi.degree - 1
            if deriv_growth >= 4:
                raise SpecError(
                    "wave-source-growth",
                    f"wave source must satisfy |phi'(s)| <= C(1+|s|^q) with q < 4; polynomial degree "
                    f"{self.phi.degree} gives q = {deriv_growth}",
                )
            if not self.phi.liminf_ratio() > -mu1:
                raise SpecError(
                    "wave-source-coercivity",
                    f"wave source coercivity liminf phi(s)/s > -lambda_1 violated (lambda_1 = {mu1:.6g})",
                )


# ---------------------------------------------------------------------------
# Force evaluators on raw coefficient arrays
# ---------------------------------------------------------------------------


class Force:
    """Base evaluator. ``force`` and ``potential`` act on coefficient arrays."""

    def __init__(self, spec: ModelSpec, A: OperatorA):
        self.spec = spec
        self.A = A
        self.basis = basis_for(A.domain)
        if spec.load is not None:
            if spec.load.domain != A.domain:
                raise ValueError("load lives on a different discretisation")
            self.load = self.basis.analyse(spec.load.values)
        else:
            self.load = np.zeros(A.domain.shape)

    def force(self, c: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def potential(self, c: np.ndarray) -> float:
        raise NotImplementedError

    def _finite(self, arr: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(arr)):
            raise ForceEvaluationError(f"{self.spec.variant} force produced non-finite values")
        return arr


class ZeroForce(Force):
    def force(self, c):
        return np.zeros_like(c)

    def potential(self, c):
        return 0.0


class KirchhoffForce(Force):
    def force(self, c):
        s, b = self.spec, self.basis
        out = -self.load.copy()
        if s.kappa != 0.0:
            grads = b.gradient(c)
            g2 = sum(g * g for g in grads)
            with np.errstate(over="ignore", invalid="ignore"):
                coef = s.kappa * (g2 ** (0.5 * s.q) - s.mu * g2 ** (0.5 * s.r))
                out += b.neg_divergence([coef * g for g in grads])
        if not s.phi.is_zero:
            with np.errstate(over="ignore", invalid="ignore"):
                out += b.analyse(s.phi(b.synth(c)))
        return self._finite(out)

    def potential(self, c):
        s, b = self.spec, self.basis
        dens = 0.0
        if s.kappa != 0.0:
            g2 = sum(g * g for g in b.gradient(c))
            dens = s.kappa / (s.q + 2) * g2 ** (0.5 * s.q + 1)
            if s.mu != 0.0:
                dens = dens - s.kappa * s.mu / (s.r + 2) * g2 ** (0.5 * s.r + 1)
        if not s.phi.is_zero:
            dens = dens + s.phi.antiderivative(b.synth(c))
        total = b.quad(dens) if not np.isscalar(dens) else 0.0
        return float(total - np.sum(self.load * c))


def _second_derivatives(b, c):
    kx2, ky2 = b.k2
    return b.synth(-kx2 * c), b.synth(-ky2 * c), b.synth(c, (1, 1))


def bracket_grids(d1, d2):
    """``[u, v]`` from second-derivative grids ``(xx, yy, xy)`` of each argument."""
    return d1[0] * d2[1] + d1[1] * d2[0] - 2.0 * d1[2] * d2[2]


class _ClampedAiry:
    """13-point finite-difference bilaplacian with ``v = dv/dn = 0``, solved by CG."""

    def __init__(self, domain: DomainSpec, tol: float, maxiter: int):
        m = domain.oversample * domain.n
        hx, hy = (L / m for L in domain.lengths)
        k = m - 1

        def second(h):
            return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(k, k)) / h**2

        def fourth(h):
            main = np.full(k, 6.0)
            # ghost reflection v_{-1} = v_1 encodes the zero normal derivative
            main[0] = main[-1] = 7.0
            return sp.diags([np.ones(k - 2), -4.0 * np.ones(k - 1), main, -4.0 * np.ones(k - 1), np.ones(k - 2)],
                            [-2, -1, 0, 1, 2]) / h**4

        eye = sp.identity(k)
        self.matrix = (sp.kron(fourth(hx), eye) + 2.0 * sp.kron(second(hx), second(hy))
                       + sp.kron(eye, fourth(hy))).tocsr()
        self.k = k
        self.tol = tol
        self.maxiter = maxiter
        self.grid_shape = domain.grid_shape
        self.h = (hx, hy)

    def solve(self, source: np.ndarray) -> np.ndarray:
        """Solve ``Delta^2 v = source`` (grid values); returns v on the full grid."""
        rhs = source[1:-1, 1:-1].ravel()
        out = np.zeros(self.grid_shape)
        if not np.any(rhs):
            return out
        sol, info = spla.cg(self.matrix, rhs, rtol=self.tol, atol=0.0, maxiter=self.maxiter)
        res = np.linalg.norm(self.matrix @ sol - rhs) / np.linalg.norm(rhs)
        if info != 0 or res > self.tol * 10:
            raise AiryConvergenceError(f"clamped Airy CG did not converge (info={info}, rel. residual {res:.3g})")
        out[1:-1, 1:-1] = sol.reshape(self.k, self.k)
        return out


class KarmanForce(Force):
    def __init__(self, spec, A):
        super().__init__(spec, A)
        if A.domain.dimension != 2:
            raise SpecError("karman-dimension", "the von Karman bracket needs a 2-D domain")
        b = self.basis
        self._clamped = (
            _ClampedAiry(A.domain, spec.airy_tol, spec.airy_maxiter) if spec.airy_bc == "clamped" else None
        )
        if spec.f0 is not None and np.any(spec.f0.coeffs):
            self.f0 = _second_derivatives(b, spec.f0.coeffs)
        else:
            self.f0 = None

    def airy(self, c, d2u=None):
        """Airy stress function on the grid and modally: ``Delta^2 v = -[u, u]``."""
        b = self.basis
        d2u = d2u if d2u is not None else _second_derivatives(b, c)
        src = bracket_grids(d2u, d2u)
        if self._clamped is None:
            vk = -b.analyse(src) / self.A.eigenvalues
            return b.synth(vk), vk, src
        vg = self._clamped.solve(-src)
        return vg, b.analyse(vg), src

    def force(self, c):
        b = self.basis
        kx2, ky2 = b.k2
        d2u = _second_derivatives(b, c)
        vg, _, _ = self.airy(c, d2u)
        # -Q([u, e_k] v): the exact discrete gradient of the Airy energy
        out = (ky2 * b.analyse(vg * d2u[0]) + kx2 * b.analyse(vg * d2u[1])
               + 2.0 * b.analyse(vg * d2u[2], (1, 1)))
        if self.f0 is not None:
            ug = b.synth(c)
            f = self.f0
            # -1/2 Q([e_k, F0] u) - 1/2 Q([u, F0] e_k)
            sym = (-kx2 * b.analyse(ug * f[1]) - ky2 * b.analyse(ug * f[0])
                   - 2.0 * b.analyse(ug * f[2], (1, 1)))
            out -= 0.5 * sym + 0.5 * b.analyse(bracket_grids(d2u, f))
        return self._finite(out - self.load)

    def potential(self, c):
        b = self.basis
        d2u = _second_derivatives(b, c)
        vg, vk, src = self.airy(c, d2u)
        if self._clamped is None:
            airy_energy = 0.25 * float(np.sum(self.A.eigenvalues * vk**2))
        else:
            airy_energy = -0.25 * b.quad(vg * src)
        total = airy_energy
        if self.f0 is not None:
            total -= 0.5 * b.quad(bracket_grids(d2u, self.f0) * b.synth(c))
        return float(total - np.sum(self.load * c))


class BergerForce(Force):
    def force(self, c):
        s, mu = self.spec, self.A.laplace
        g = float(np.sum(mu * c * c))
        return (s.kappa * g - s.gamma) * mu * c - self.load

    def potential(self, c):
        s, mu = self.spec, self.A.laplace
        g = float(np.sum(mu * c * c))
        return 0.25 * s.kappa * g * g - 0.5 * s.gamma * g - float(np.sum(self.load * c))


class WaveForce(Force):
    def force(self, c):
        b = self.basis
        out = -self.load.copy()
        if not self.spec.phi.is_zero:
            with np.errstate(over="ignore", invalid="ignore"):
                out += b.analyse(self.spec.phi(b.synth(c)))
        return self._finite(out)

    def potential(self, c):
        b = self.basis
        val = b.quad(self.spec.phi.antiderivative(b.synth(c))) if not self.spec.phi.is_zero else 0.0
        return float(val - np.sum(self.load * c))


_EVALUATORS = {"kirchhoff": KirchhoffForce, "karman": KarmanForce, "berger": BergerForce, "wave": WaveForce}


def make_force(spec: ModelSpec | None, A: OperatorA) -> Force:
    """Evaluator for ``spec`` on operator ``A``; ``None`` gives ``F = 0``."""
    if spec is None:
        return ZeroForce(ModelSpec("berger", kappa=1.0), A)
    if spec.operator_kind != A.kind:
        raise SpecError(
            "operator-kind", f"{spec.variant} model needs a {spec.operator_kind} operator, got {A.kind}"
        )
    return _EVALUATORS[spec.variant](spec, A)


# ---------------------------------------------------------------------------
# Field-level API
# ---------------------------------------------------------------------------


def _operator(u: ModalField, spec: ModelSpec) -> OperatorA:
    return build_operator(u.domain, spec.operator_kind)


def _apply(u: ModalField, spec: ModelSpec, variant: str) -> ModalField:
    if spec.variant != variant:
        raise SpecError("model-variant", f"expected a {variant} spec, got {spec.variant}")
    return ModalField(make_force(spec, _operator(u, spec)).force(u.coeffs), u.domain)


def kirchhoff_force(u: ModalField, spec: ModelSpec) -> ModalField:
    """``-kappa div(|grad u|^q grad u - mu |grad u|^r grad u) + phi(u) - p``."""
    return _apply(u, spec, "kirchhoff")


def karman_force(u: ModalField, spec: ModelSpec) -> ModalField:
    """``-[u, v(u) + F0] - p`` with the Airy function ``v(u)``."""
    return _apply(u, spec, "karman")


def berger_force(u: ModalField, spec: ModelSpec) -> ModalField:
    """``-(kappa int|grad u|^2 - Gamma) Delta u - p``."""
    return _apply(u, spec, "berger")


def wave_force(u: ModalField, spec: ModelSpec) -> ModalField:
    return _apply(u, spec, "wave")


def force(u: ModalField, spec: ModelSpec) -> ModalField:
    return _apply(u, spec, spec.variant)


def potential(u: ModalField, spec: ModelSpec) -> float:
    return make_force(spec, _operator(u, spec)).potential(u.coeffs)


def nemytskii(u: ModalField, func: Pointwise) -> GridField:
    """Pointwise composition ``x -> func(u(x))`` on the quadrature grid."""
    b = basis_for(u.domain)
    return GridField(func(b.synth(u.coeffs)), u.domain)


def karman_bracket(u: ModalField, v: ModalField) -> GridField:
    if u.domain.dimension != 2:
        raise ValueError("the von Karman bracket needs a 2-D domain")
    if u.domain != v.domain:
        raise ValueError("fields live on different discretisations")
    b = basis_for(u.domain)
    return GridField(bracket_grids(_second_derivatives(b, u.coeffs), _second_derivatives(b, v.coeffs)), u.domain)


def airy_solve(u: ModalField, bc: str = "hinged", tol: float = 1e-9, maxiter: int = 20000) -> ModalField:
    """Airy stress function ``v`` with ``Delta^2 v + [u, u] = 0``, projected to modal form."""
    if u.domain.dimension != 2:
        raise ValueError("the Airy problem needs a 2-D domain")
    spec = ModelSpec("karman", airy_bc=bc, airy_tol=tol, airy_maxiter=maxiter)
    f = KarmanForce(spec, build_operator(u.domain, "plate"))
    return ModalField(f.airy(u.coeffs)[1], u.domain)


def clamped_airy_grid(u: ModalField, tol: float = 1e-9, maxiter: int = 20000) -> GridField:
    """Finite-difference clamped Airy solution on the full grid (boundary nodes included)."""
    spec = ModelSpec("karman", airy_bc="clamped", airy_tol=tol, airy_maxiter=maxiter)
    f = KarmanForce(spec, build_operator(u.domain, "plate"))
    return GridField(f.airy(u.coeffs)[0], u.domain)


# ---------------------------------------------------------------------------
# Probes
# ---------------------------------------------------------------------------


def random_field(A: OperatorA, rng: np.random.Generator, radius: float = 1.0, s: float = 1.0,
                 n_modes: int | None = None) -> ModalField:
    """Gaussian field in the lowest ``n_modes`` sorted modes with ``|u|_s = radius``."""
    n_modes = n_modes or min(A.domain.size, 12)
    c = np.zeros(A.domain.size)
    idx = A.order[:n_modes]
    lam = A.eigenvalues.ravel()[idx]
    c[idx] = rng.standard_normal(n_modes) / np.sqrt(lam ** s)
    norm = np.sqrt(np.sum(A.eigenvalues.ravel() ** s * c**2))
    if norm > 0:
        c *= radius / norm
    return ModalField(c.reshape(A.domain.shape), A.domain)


def gradient_consistency_probe(spec: ModelSpec, u: ModalField, w: ModalField,
                               steps=(1e-3, 1e-4, 1e-5)) -> float:
    """Relative mismatch between ``(F(u), w)`` and a central difference of ``Pi``."""
    f = make_force(spec, _operator(u, spec))
    exact = float(np.sum(f.force(u.coeffs) * w.coeffs))
    best = np.inf
    for h in steps:
        fd = (f.potential(u.coeffs + h * w.coeffs) - f.potential(u.coeffs - h * w.coeffs)) / (2 * h)
        scale = max(abs(exact), abs(fd), np.finfo(float).tiny)
        best = min(best, abs(fd - exact) / scale)
    return float(best)


@dataclass
class PotentialProbeReport:
    lipschitz: dict[float, float]
    eta: float
    constant: float
    feasible: bool
    samples: int
    max_violation: float
    constants_by_radius: dict[float, float] = field(default_factory=dict)


def potential_bound_probe(spec: ModelSpec, domain: DomainSpec, samples: int = 50,
                          radii=(0.5, 1.0, 2.0, 4.0, 8.0), eta: float = 0.25, theta: float = 1.0,
                          delta: float = 0.25, seed: int = 0) -> PotentialProbeReport:
    """Empirical constants for the lower bound ``eta |u|_1^2 + Pi(u) + C >= 0`` and local Lipschitz ratios.

    ``C`` is the smallest constant satisfying the bound on the sample at each
    radius; the bound is reported infeasible when that constant keeps growing
    at the largest radius.
    """
    if samples < 1:
        raise ValueError("sample count must be >= 1")
    A = build_operator(domain, spec.operator_kind)
    f = make_force(spec, A)
    rng = np.random.default_rng(seed)
    lam = A.eigenvalues
    consts, lips = {}, {}
    for rho in radii:
        need, lip = 0.0, 0.0
        for _ in range(samples):
            u1 = random_field(A, rng, rho * rng.uniform(0.1, 1.0)).coeffs
            u2 = random_field(A, rng, rho * rng.uniform(0.1, 1.0)).coeffs
            val = eta * float(np.sum(lam * u1 * u1)) + f.potential(u1)
            need = max(need, -val)
            df = f.force(u1) - f.force(u2)
            du = u1 - u2
            num = np.sqrt(np.sum(lam ** (-theta) * df * df))
            den = np.sqrt(np.sum(lam ** (1.0 - delta) * du * du))
            if den > 0:
                lip = max(lip, num / den)
        consts[float(rho)] = need
        lips[float(rho)] = lip
    vals = list(consts.values())
    growth = vals[-1] - vals[-2] if len(vals) > 1 else 0.0
    feasible = growth <= 1e-9 * (1.0 + abs(vals[-2] if len(vals) > 1 else 0.0))
    return PotentialProbeReport(
        lipschitz=lips, eta=eta, constant=vals[-1], feasible=bool(feasible), samples=samples * len(radii),
        max_violation=float(max(growth, 0.0)), constants_by_radius=consts,
    )
