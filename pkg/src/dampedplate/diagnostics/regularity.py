"""Smoothness norms along a trajectory."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..integrator import System, Trajectory


@dataclass
class RegularityProfile:
    """Per-sample ``|u|_{2-theta}``, ``|u_t|_1`` and ``|u_tt|`` with envelopes.

    ``running_*`` is the maximum from the transient up to each sample;
    ``tail_*`` is the supremum from each sample to the end, a
    nonincreasing envelope that exposes eventual decay.
    """

    SERIES = ("u_norm", "v_norm", "a_norm")

    times: np.ndarray
    u_norm: np.ndarray
    v_norm: np.ndarray
    a_norm: np.ndarray
    transient: float
    running: dict = field(default_factory=dict)
    tail: dict = field(default_factory=dict)

    @property
    def post(self) -> np.ndarray:
        return self.times >= self.transient - 1e-12

    def bounded(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, k))) for k in self.SERIES)

    def decayed(self, factor: float = 0.5) -> dict[str, bool]:
        """Whether each tail envelope ends below ``factor`` times its post-transient start."""
        out = {}
        for k in self.SERIES:
            env = self.tail[k][self.post]
            out[k] = bool(len(env) > 0 and env[-1] <= factor * env[0])
        return out


def _norms(system: System, u: np.ndarray, v: np.ndarray):
    lam, th = system.lam, system.theta
    n = len(u)
    axes = tuple(range(1, u.ndim))
    un = np.sqrt(np.sum(lam ** (2.0 - th) * u * u, axis=axes))
    vn = np.sqrt(np.sum(lam * v * v, axis=axes))
    an = np.array([np.sqrt(np.sum(system.acceleration(u[i], v[i]) ** 2)) for i in range(n)])
    return un, vn, an


def regularity_profile(traj: Trajectory, problem_or_system, transient: float = 0.0) -> RegularityProfile:
    """``u_tt`` is reconstructed from the equation, ``-(D(u, u_t) + A u + F(u))``."""
    system = problem_or_system if isinstance(problem_or_system, System) else problem_or_system.system()
    un, vn, an = _norms(system, traj.u, traj.v)
    prof = RegularityProfile(traj.times, un, vn, an, transient)
    post = prof.post
    for k in prof.SERIES:
        s = getattr(prof, k)
        run = np.full_like(s, np.nan)
        run[post] = np.maximum.accumulate(s[post]) if post.any() else s[post]
        prof.running[k] = run
        prof.tail[k] = np.maximum.accumulate(s[::-1])[::-1]
    return prof


def acceleration_series(traj: Trajectory, problem_or_system) -> np.ndarray:
    system = problem_or_system if isinstance(problem_or_system, System) else problem_or_system.system()
    return np.array([system.acceleration(traj.u[i], traj.v[i]) for i in range(len(traj))])
