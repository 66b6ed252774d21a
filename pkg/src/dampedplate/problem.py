"""A fully specified dynamical system: operator, force, damping and stepping settings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .damping import DampingSpec
from .forces import ModelSpec, random_field
from .integrator import IntegratorSettings, StatePair, System, Trajectory, evolve, difference_evolve
from .spectral import ModalField, OperatorA


@dataclass(frozen=True, eq=False)
class Problem:
    A: OperatorA
    model: ModelSpec | None
    damping: DampingSpec
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)

    @property
    def domain(self):
        return self.A.domain

    def system(self) -> System:
        return System(self.A, self.model, self.damping, self.settings)

    def random_state(self, seed: int, radius: float = 1.0, velocity_radius: float = 0.0,
                     n_modes: int = 8) -> StatePair:
        """Random state with ``|u|_1 = radius`` and ``|v| = velocity_radius`` on the lowest modes."""
        rng = np.random.default_rng(seed)
        n_modes = min(n_modes, self.domain.size)
        u = random_field(self.A, rng, radius, s=1.0, n_modes=n_modes)
        v = (random_field(self.A, rng, velocity_radius, s=0.0, n_modes=n_modes) if velocity_radius > 0
             else ModalField.zeros(self.domain))
        return StatePair(u, v, 0.0)

    def evolve(self, state: StatePair, T: float, stride: float | None = None, meta: dict | None = None) -> Trajectory:
        return evolve(state, T, self.A, self.model, self.damping, self.settings, stride, meta)

    def difference_evolve(self, a: StatePair, b: StatePair, T: float, stride: float | None = None):
        return difference_evolve(a, b, T, self.A, self.model, self.damping, self.settings, stride)

    def h_norm(self, cu: np.ndarray, cv: np.ndarray) -> float:
        """Phase-space norm ``(|A^{1/2} u|^2 + |v|^2)^{1/2}``."""
        return float(np.sqrt(np.sum(self.A.eigenvalues * cu * cu) + np.sum(cv * cv)))
