"""Post-transient state clouds and their correlation dimension."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from ..problem import Problem
from .regularity import RegularityProfile, regularity_profile

DEGENERATE_DIAMETER = 1e-12


@dataclass
class DimensionEstimate:
    dimension: float
    degenerate: bool
    eps: np.ndarray = field(repr=False)
    corr: np.ndarray = field(repr=False)
    scaling_range: tuple[float, float] = (np.nan, np.nan)
    slope_low: float = np.nan
    slope_high: float = np.nan

    @property
    def slope_spread(self) -> float:
        """Spread of the slope over neighbouring thirds of the usable range."""
        vals = [s for s in (self.slope_low, self.dimension, self.slope_high) if np.isfinite(s)]
        return float(np.ptp(vals)) if vals else np.nan


@dataclass
class AttractorSample:
    points: np.ndarray
    times: np.ndarray
    seeds: np.ndarray
    M: int
    transient: float
    estimate: DimensionEstimate | None = None
    regularity: dict = field(default_factory=dict)


def _slope(x, y):
    if len(x) < 2 or np.ptp(x) == 0:
        return np.nan
    return float(np.polyfit(x, y, 1)[0])


def correlation_dimension(points: np.ndarray | AttractorSample, M: int | None = None, n_eps: int = 40,
                          min_pairs: int = 10) -> DimensionEstimate:
    """Grassberger--Procaccia slope of ``log C(eps)`` against ``log eps``.

    The usable range runs from the smallest pair distance (floored at
    ``1e-12`` times the diameter) to the diameter, restricted to radii
    where at least ``min_pairs`` pairs are counted; the estimate is the
    slope over its central third in log scale.
    """
    if isinstance(points, AttractorSample):
        pts = points.points
    else:
        pts = np.asarray(points, dtype=float)
    if M is not None:
        pts = pts[:, :M] if pts.shape[1] > M else pts
    if len(pts) < 2:
        return DimensionEstimate(0.0, True, np.zeros(0), np.zeros(0))
    d = pdist(pts)
    diam = float(d.max())
    if diam <= DEGENERATE_DIAMETER:
        return DimensionEstimate(0.0, True, np.zeros(0), np.zeros(0))
    d.sort()
    lo = max(float(d[0]), 1e-12 * diam)
    eps = np.geomspace(lo, diam, n_eps)
    corr = np.searchsorted(d, eps, side="right") / len(d)
    usable = corr * len(d) >= min_pairs
    le, lc = np.log(eps[usable]), np.log(corr[usable])
    if len(le) < 3:
        return DimensionEstimate(0.0, False, eps, corr)
    a, b = le[0], le[-1]
    edges = a + (b - a) * np.array([0.0, 1 / 3, 2 / 3, 1.0])
    thirds = [(le >= edges[i] - 1e-12) & (le <= edges[i + 1] + 1e-12) for i in range(3)]
    mid = thirds[1]
    dim = _slope(le[mid], lc[mid])
    if not np.isfinite(dim):
        dim = _slope(le, lc)
    return DimensionEstimate(max(dim, 0.0), False, eps, corr, (float(np.exp(edges[1])), float(np.exp(edges[2]))),
                             _slope(le[thirds[0]], lc[thirds[0]]), _slope(le[thirds[2]], lc[thirds[2]]))


def project_h(problem: Problem, u: np.ndarray, v: np.ndarray, M: int) -> np.ndarray:
    """Coordinates ``(lambda_j^{1/2} u_j, v_j)`` on the first ``M`` sorted modes."""
    A = problem.A
    idx = A.order[:M]
    lam = A.eigenvalues.ravel()[idx]
    n = len(u)
    return np.hstack([np.sqrt(lam) * u.reshape(n, -1)[:, idx], v.reshape(n, -1)[:, idx]])


def attractor_sample(problem: Problem, seeds=(0, 1, 2), transient: float = 10.0, horizon: float = 20.0,
                     stride: float = 0.1, M: int = 8, radius: float = 1.0, velocity_radius: float = 0.0,
                     estimate: bool = True) -> AttractorSample:
    if not horizon > transient:
        raise ValueError("horizon must exceed the transient")
    pts, times, who, profiles = [], [], [], []
    for s in seeds:
        tr = problem.evolve(problem.random_state(int(s), radius, velocity_radius), horizon, stride)
        keep = tr.times >= transient - 1e-12
        pts.append(project_h(problem, tr.u[keep], tr.v[keep], M))
        times.append(tr.times[keep])
        who.append(np.full(int(keep.sum()), int(s)))
        profiles.append(regularity_profile(tr, problem, transient))
    sample = AttractorSample(np.vstack(pts), np.concatenate(times), np.concatenate(who), M, transient)
    sample.regularity = {
        name: float(max(getattr(p, name)[p.post].max() for p in profiles))
        for name in RegularityProfile.SERIES
    }
    if estimate:
        sample.estimate = correlation_dimension(sample)
    return sample
