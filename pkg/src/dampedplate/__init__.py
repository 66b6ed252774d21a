"""Spectral Galerkin simulation of damped plate and wave equations.

Modules:

* :mod:`~dampedplate.spectral` -- sine basis, the operator ``A`` and norms.
* :mod:`~dampedplate.forces` -- Kirchhoff, von Karman, Berger and wave forces.
* :mod:`~dampedplate.damping` -- damping operators and their probes.
* :mod:`~dampedplate.integrator` -- energy-consistent time stepping.
* :mod:`~dampedplate.diagnostics` -- equilibria, decay, dimension and regularity.
* :mod:`~dampedplate.cli` -- configuration, outputs and the command line.
"""

from .spectral import (
    DomainSpec,
    GridField,
    ModalField,
    OperatorA,
    ResolutionError,
    apply_fractional,
    build_operator,
    inner,
    norm_s,
    project,
    to_grid,
    to_modal,
)
from .pointwise import Pointwise
from .forces import ModelSpec, SpecError, force, potential
from .damping import DampingSpec, apply_damping, dissipation_rate
from .integrator import IntegratorSettings, StatePair, Trajectory, difference_evolve, energy_residual, evolve, step

__version__ = "0.1.0"

__all__ = [
    "DomainSpec", "GridField", "ModalField", "OperatorA", "ResolutionError", "apply_fractional",
    "build_operator", "inner", "norm_s", "project", "to_grid", "to_modal", "Pointwise", "ModelSpec",
    "SpecError", "force", "potential", "DampingSpec", "apply_damping", "dissipation_rate",
    "IntegratorSettings", "StatePair", "Trajectory", "difference_evolve", "energy_residual", "evolve", "step",
]
