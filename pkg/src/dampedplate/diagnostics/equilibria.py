"""Stationary points of ``A u + F(u) = 0`` and their linear stability."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..forces import ModelSpec, make_force
from ..spectral import ModalField, OperatorA

log = logging.getLogger(__name__)

N_LIN = 64


class EquilibriumNotFound(ArithmeticError):
    def __init__(self, message: str, best: "EquilibriumResult | None" = None):
        super().__init__(message)
        self.best = best


@dataclass
class EquilibriumResult:
    phi: ModalField
    residual: float
    margin: float
    iterations: int
    converged: bool
    energy: float = float("nan")
    min_eigenvalue: float = float("nan")
    morse_index: int = 0

    def coefficient(self, rank: int, A: OperatorA) -> float:
        return float(self.phi.coeffs.ravel()[A.order[rank]])


@dataclass
class MarginReport:
    """Smallest singular value of the truncated linearisation ``A + F'(phi)``."""

    margin: float
    normalized: float
    min_eigenvalue: float
    morse_index: int
    n_lin: int
    eigenvalues: np.ndarray = field(repr=False)

    def __float__(self):
        return self.margin


def residual_norm(A: OperatorA, g: np.ndarray) -> float:
    """``|g|_{-1} = |A^{-1/2} g|``."""
    return float(np.sqrt(np.sum(g * g / A.eigenvalues)))


def _gradient(A, force, c):
    return A.eigenvalues * c + force.force(c)


def _jacobian(A, force, c, idx, base=None):
    """Forward-difference Jacobian of ``F`` restricted to the flat modal indices ``idx``."""
    flat = c.ravel()
    base = force.force(c).ravel() if base is None else base
    h = 1e-6 * (1.0 + float(np.sqrt(np.sum(A.eigenvalues * c * c))))
    J = np.empty((len(idx), len(idx)))
    for j, k in enumerate(idx):
        pert = flat.copy()
        pert[k] += h
        J[:, j] = (force.force(pert.reshape(c.shape)).ravel()[idx] - base[idx]) / h
    if not np.all(np.isfinite(J)):
        raise FloatingPointError("non-finite Jacobian entries")
    return J


def find_equilibrium(A: OperatorA, model: ModelSpec | None, guess: ModalField | None = None, tol: float = 1e-10,
                     n_lin: int = N_LIN, max_iter: int = 50) -> EquilibriumResult:
    """Damped Newton for ``A u + F(u) = 0``.

    The Jacobian is assembled by forward differences on the ``n_lin``
    lowest modes; higher modes use the diagonal ``A``.
    """
    force = make_force(model, A)
    c = np.zeros(A.domain.shape) if guess is None else np.array(guess.coeffs, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ValueError("initial guess must be finite")
    n_lin = min(n_lin, A.domain.size)
    idx = A.order[:n_lin]
    rest = np.ones(A.domain.size, dtype=bool)
    rest[idx] = False
    lam = A.eigenvalues.ravel()
    g = _gradient(A, force, c)
    res = residual_norm(A, g)
    it = 0
    while res > tol and it < max_iter:
        it += 1
        J = _jacobian(A, force, c, idx, base=(g - A.eigenvalues * c).ravel())
        J[np.diag_indices(n_lin)] += lam[idx]
        step = np.empty(A.domain.size)
        gf = g.ravel()
        try:
            step[idx] = np.linalg.solve(J, -gf[idx])
        except np.linalg.LinAlgError:
            step[idx] = -np.linalg.lstsq(J, gf[idx], rcond=None)[0]
        step[rest] = -gf[rest] / lam[rest]
        step = step.reshape(c.shape)
        alpha = 1.0
        while True:
            trial = c + alpha * step
            try:
                g_trial = _gradient(A, force, trial)
                res_trial = residual_norm(A, g_trial)
            except (ArithmeticError, FloatingPointError):
                res_trial = np.inf
            if res_trial < res or alpha < 1e-6:
                break
            alpha *= 0.5
        if not res_trial < res:
            log.debug("line search stalled at residual %.3g", res)
            break
        c, g, res = trial, g_trial, res_trial
    phi = ModalField(c, A.domain)
    result = EquilibriumResult(phi, res, float("nan"), it, res <= tol)
    # independent re-evaluation of the residual
    result.residual = residual_norm(A, _gradient(A, make_force(model, A), c))
    result.converged = result.residual <= tol
    result.energy = 0.5 * float(np.sum(A.eigenvalues * c * c)) + force.potential(c)
    if not result.converged:
        raise EquilibriumNotFound(f"Newton did not reach |G|_-1 <= {tol:g} (got {result.residual:.3g} "
                                  f"after {it} iterations)", result)
    rep = hyperbolicity_margin(A, model, phi, n_lin)
    result.margin, result.min_eigenvalue, result.morse_index = rep.margin, rep.min_eigenvalue, rep.morse_index
    return result


def hyperbolicity_margin(A: OperatorA, model: ModelSpec | None, phi: ModalField, n_lin: int = N_LIN) -> MarginReport:
    force = make_force(model, A)
    n_lin = min(n_lin, A.domain.size)
    idx = A.order[:n_lin]
    c = phi.coeffs
    J = _jacobian(A, force, c, idx)
    lam = A.eigenvalues.ravel()[idx]
    J[np.diag_indices(n_lin)] += lam
    sv = np.linalg.svd(J, compute_uv=False)
    eig = np.linalg.eigvalsh(0.5 * (J + J.T))
    smin = float(sv.min())
    return MarginReport(smin, smin / float(lam.max()), float(eig[0]), int(np.sum(eig < 0)), n_lin, eig)


def _h_dist(A, a, b):
    d = a - b
    return float(np.sqrt(np.sum(A.eigenvalues * d * d)))


def default_guesses(A: OperatorA, n_modes: int = 4, amplitudes=(0.5, 1.0, 2.0), seeds=range(4)) -> list[ModalField]:
    """Zero, signed multiples of the lowest modes and a few random fields."""
    from ..forces import random_field

    out = [ModalField.zeros(A.domain)]
    for k in range(min(n_modes, A.domain.size)):
        for a in amplitudes:
            for sgn in (1.0, -1.0):
                out.append(A.sorted_mode(k, sgn * a))
    for s in seeds:
        out.append(random_field(A, np.random.default_rng(1000 + s), radius=np.sqrt(A.lambda1)))
    return out


def find_equilibria(A: OperatorA, model: ModelSpec | None, guesses: list[ModalField] | None = None,
                    tol: float = 1e-10, n_lin: int = N_LIN, dedup: float = 1e-6) -> list[EquilibriumResult]:
    """Multi-start Newton; distinct converged equilibria sorted by energy."""
    found: list[EquilibriumResult] = []
    for g in guesses if guesses is not None else default_guesses(A):
        try:
            r = find_equilibrium(A, model, g, tol, n_lin)
        except EquilibriumNotFound:
            continue
        c = r.phi.coeffs
        norm = float(np.sqrt(np.sum(A.eigenvalues * c * c)))
        if all(_h_dist(A, c, f.phi.coeffs) > dedup * (1.0 + norm) for f in found):
            found.append(r)
    found.sort(key=lambda r: (r.energy, float(r.phi.coeffs.ravel()[A.order[0]])))
    return found
