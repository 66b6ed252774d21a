"""Modal observables: completeness defect and determining-modes experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..integrator import StatePair
from ..problem import Problem
from ..spectral import OperatorA


def completeness_defect(A: OperatorA, N: int) -> float:
    """``sup |u|`` over ``|u|_1 <= 1`` with ``(u, e_j) = 0`` for the first ``N`` sorted modes."""
    if not 0 <= N < A.domain.size:
        raise ValueError(f"N must lie in 0..{A.domain.size - 1}, got {N}")
    return float(A.sorted_eigenvalues[N] ** -0.5)


def window_integral(times: np.ndarray, values: np.ndarray, width: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """``int_t^{t+width} values ds`` (trapezoid) for every sample ``t`` whose window fits.

    ``values`` may carry trailing axes; integration is along axis 0.
    """
    cum = np.concatenate([np.zeros((1,) + values.shape[1:]),
                          np.cumsum(0.5 * np.diff(times)[(...,) + (None,) * (values.ndim - 1)]
                                    * (values[1:] + values[:-1]), axis=0)])
    ends = np.searchsorted(times, times + width - 1e-12 * max(width, 1.0))
    ok = ends < len(times)
    starts = np.nonzero(ok)[0]
    return times[starts], cum[ends[ok]] - cum[starts]


@dataclass
class DeterminingModesReport:
    times: np.ndarray
    full_difference: np.ndarray
    modal: dict[int, np.ndarray]
    window_times: np.ndarray
    table: list[dict] = field(default_factory=list)
    threshold: int | None = None


def determining_modes_experiment(problem: Problem, seeds=(1, 2), T: float = 10.0, stride: float = 0.05,
                                 modes=(1, 2, 4, 8), radius: float = 1.0, decay_factor: float = 1e-2,
                                 states: tuple[StatePair, StatePair] | None = None) -> DeterminingModesReport:
    """Evolve two trajectories and compare modal-difference decay with full decay.

    ``m_N(t) = max_{j <= N} int_t^{t+1} |(u1 - u2, e_j)|^2 ds``. A series
    counts as decayed when its final value is below ``decay_factor`` times
    its initial value. The table is observational; nothing is asserted.
    """
    A = problem.A
    a, b = states if states is not None else (problem.random_state(s, radius) for s in seeds)
    pair = problem.difference_evolve(a, b, T, stride)
    times = pair.times
    z = (pair.first.u - pair.second.u).reshape(len(times), -1)[:, A.order]
    full = np.sqrt(pair.h_distance_sq)
    wt, integrals = window_integral(times, z * z, 1.0)
    modal = {}
    table = []
    full_decays = bool(full[0] == 0 or full[-1] <= decay_factor * full[0])
    threshold = None
    for N in sorted(set(int(m) for m in modes)):
        if not 1 <= N <= A.domain.size:
            continue
        m = integrals[:, :N].max(axis=1) if len(wt) else np.zeros(0)
        modal[N] = m
        modal_decays = bool(len(m) == 0 or m[0] == 0 or m[-1] <= decay_factor * m[0])
        table.append({"N": N, "modal_decays": modal_decays, "full_decays": full_decays,
                      "modal_initial": float(m[0]) if len(m) else 0.0, "modal_final": float(m[-1]) if len(m) else 0.0})
        if modal_decays and full_decays and threshold is None:
            threshold = N
    return DeterminingModesReport(times, full, modal, wt, table, threshold)
