"""Exponential approach to an equilibrium, fitted on a recorded trajectory."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..integrator import Trajectory
from ..spectral import ModalField, OperatorA

TRANSIENT_FRACTION = 0.2


class NotSettled(RuntimeError):
    """The trajectory ended farther than the threshold from every equilibrium."""

    def __init__(self, message: str, distance: float, threshold: float):
        super().__init__(message)
        self.distance = distance
        self.threshold = threshold


@dataclass
class DecayFit:
    equilibrium: ModalField
    equilibrium_index: int
    gamma: float
    C: float
    window: tuple[float, float]
    r_squared: float
    n_points: int
    threshold: float
    final_distance: float
    transient_fraction: float = TRANSIENT_FRACTION

    @property
    def settled(self) -> bool:
        return self.final_distance <= self.threshold


def h_distance(A: OperatorA, traj: Trajectory, phi: np.ndarray) -> np.ndarray:
    """``|S(t) y - (phi, 0)|_H`` at every sample."""
    du = traj.u - phi[None]
    axes = tuple(range(1, du.ndim))
    return np.sqrt(np.sum(A.eigenvalues[None] * du * du, axis=axes) + np.sum(traj.v * traj.v, axis=axes))


def separation_threshold(A: OperatorA, equilibria: list[np.ndarray]) -> float:
    """Half the smallest pairwise phase-space distance between equilibria."""
    if len(equilibria) < 2:
        return math.nan
    best = math.inf
    for i in range(len(equilibria)):
        for j in range(i):
            d = equilibria[i] - equilibria[j]
            best = min(best, float(np.sqrt(np.sum(A.eigenvalues * d * d))))
    return 0.5 * best


def decay_rate_fit(traj: Trajectory, equilibria: list, A: OperatorA,
                   transient_fraction: float = TRANSIENT_FRACTION, floor: float = 1e-11) -> DecayFit:
    """Least-squares fit of ``log |S(t) y - e|_H`` against ``t`` after the transient.

    ``equilibria`` may hold :class:`ModalField` objects, arrays, or results
    with a ``phi`` attribute. Samples whose distance has reached the
    round-off floor ``floor * (1 + |e|_H)`` are dropped.
    """
    if not equilibria:
        raise ValueError("need at least one equilibrium")
    eqs = [np.asarray(getattr(getattr(e, "phi", e), "coeffs", e), dtype=float) for e in equilibria]
    finals = [h_distance(A, traj, e)[-1] for e in eqs]
    k = int(np.argmin(finals))
    phi = eqs[k]
    dist = h_distance(A, traj, phi)
    thr = separation_threshold(A, eqs)
    if not math.isfinite(thr):
        thr = 0.5 * float(dist[0]) if dist[0] > 0 else math.inf
    if dist[-1] > thr:
        raise NotSettled(f"final distance {dist[-1]:.3g} to the nearest equilibrium exceeds {thr:.3g}",
                         float(dist[-1]), thr)
    e_norm = float(np.sqrt(np.sum(A.eigenvalues * phi * phi)))
    eq_field = ModalField(phi, A.domain)
    if float(dist.max()) <= floor * (1.0 + e_norm):
        return DecayFit(eq_field, k, math.inf, 0.0, (float(traj.times[0]), float(traj.times[-1])), 1.0, 0, thr,
                        float(dist[-1]), transient_fraction)
    start = int(math.ceil(transient_fraction * len(dist)))
    keep = np.arange(len(dist)) >= start
    keep &= dist > floor * (1.0 + e_norm)
    t, y = traj.times[keep], np.log(dist[keep])
    if len(t) < 3:
        raise ValueError("too few post-transient samples above the round-off floor for a decay fit")
    slope, intercept = np.polyfit(t, y, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(eq_field, k, float(-slope), float(np.exp(intercept)), (float(t[0]), float(t[-1])), r2, len(t),
                    thr, float(dist[-1]), transient_fraction)
