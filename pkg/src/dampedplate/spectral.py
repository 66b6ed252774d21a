"""Discrete Hilbert-space layer: hinged sine eigenbasis, fractional norms, transforms.

Fields live in two representations:

* modal -- coefficients ``c_k`` of ``u = sum_k c_k e_k`` where ``e_k`` are
  L2-normalised products of ``sqrt(2/L) sin(k pi x / L)``;
* grid -- point values on a closed tensor grid ``x_j = j L / M``,
  ``j = 0..M`` with ``M = oversample * n``.

Trapezoid quadrature on that grid integrates every trigonometric
polynomial of frequency below ``2M`` exactly, so the synthesis/analysis
pair is an exact inverse on the resolved modes and products of two
resolved fields (and their derivatives) are integrated without aliasing.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DomainSpec",
    "OperatorA",
    "ModalField",
    "GridField",
    "SineBasis",
    "basis_for",
    "build_operator",
    "apply_fractional",
    "norm_s",
    "inner",
    "project",
    "to_grid",
    "to_modal",
    "gradient",
    "quadrature",
]


class ResolutionError(ValueError):
    """Raised when fields on incompatible discretisations are combined."""


@dataclass(frozen=True)
class DomainSpec:
    """Rectangle (or interval) with hinged boundary and its discretisation.

    ``n`` is the number of sine modes per dimension; the quadrature grid
    has ``oversample * n + 1`` nodes per dimension including both ends.
    """

    dimension: int = 2
    lengths: tuple[float, ...] = (1.0, 1.0)
    n: int = 16
    oversample: int = 2

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        lengths = tuple(float(x) for x in self.lengths)
        if len(lengths) == 1 and self.dimension == 2:
            lengths = lengths * 2
        if len(lengths) != self.dimension:
            raise ValueError(f"need {self.dimension} side lengths, got {len(lengths)}")
        if any(not np.isfinite(x) or x <= 0 for x in lengths):
            raise ValueError(f"side lengths must be positive, got {lengths}")
        object.__setattr__(self, "lengths", lengths)
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"resolution N must be an integer >= 2, got {self.n}")
        if int(self.oversample) != self.oversample or self.oversample < 2:
            raise ValueError(f"oversampling factor must be an integer >= 2, got {self.oversample}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "oversample", int(self.oversample))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dimension

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.oversample * self.n + 1,) * self.dimension

    @property
    def size(self) -> int:
        return self.n**self.dimension


class SineBasis:
    """Per-axis synthesis/analysis matrices for one :class:`DomainSpec`.

    ``deriv`` selectors are tuples with one entry per axis: 0 means the
    sine function itself, 1 its first derivative (a scaled cosine).
    """

    def __init__(self, domain: DomainSpec):
        self.domain = domain
        n, m = domain.n, domain.oversample * domain.n
        self.x, self.wavenumbers, self.weights = [], [], []
        self._synth, self._anal = [], []
        for length in domain.lengths:
            x = np.arange(m + 1) * length / m
            k = np.arange(1, n + 1) * np.pi / length
            w = np.full(m + 1, length / m)
            w[0] = w[-1] = 0.5 * length / m
            sin = np.sqrt(2.0 / length) * np.sin(np.outer(x, k))
            sin[0] = 0.0
            sin[-1] = 0.0
            cos = np.sqrt(2.0 / length) * np.cos(np.outer(x, k)) * k
            self.x.append(x)
            self.wavenumbers.append(k)
            self.weights.append(w)
            self._synth.append((sin, cos))
            self._anal.append(((sin * w[:, None]).T.copy(), (cos * w[:, None]).T.copy()))
        if domain.dimension == 2:
            self.weight_grid = np.outer(self.weights[0], self.weights[1])
            kx, ky = np.meshgrid(self.wavenumbers[0], self.wavenumbers[1], indexing="ij")
            self.k2 = (kx**2, ky**2)
            self.kxky = kx * ky
        else:
            self.weight_grid = self.weights[0]
            self.k2 = (self.wavenumbers[0] ** 2,)
        # Dirichlet-Laplacian eigenvalues mu_k
        self.mu = sum(self.k2)

    def synth(self, c: np.ndarray, deriv: Sequence[int] | None = None) -> np.ndarray:
        deriv = deriv or (0,) * self.domain.dimension
        if self.domain.dimension == 1:
            return self._synth[0][deriv[0]] @ c
        return self._synth[0][deriv[0]] @ c @ self._synth[1][deriv[1]].T

    def analyse(self, g: np.ndarray, deriv: Sequence[int] | None = None) -> np.ndarray:
        """Quadrature inner products of ``g`` with each (differentiated) basis function."""
        deriv = deriv or (0,) * self.domain.dimension
        if self.domain.dimension == 1:
            return self._anal[0][deriv[0]] @ g
        return self._anal[0][deriv[0]] @ g @ self._anal[1][deriv[1]].T

    def quad(self, g: np.ndarray) -> float:
        if self.domain.dimension == 1:
            return float(self.weights[0] @ g)
        return float(self.weights[0] @ g @ self.weights[1])

    def gradient(self, c: np.ndarray) -> tuple[np.ndarray, ...]:
        if self.domain.dimension == 1:
            return (self.synth(c, (1,)),)
        return self.synth(c, (1, 0)), self.synth(c, (0, 1))

    def neg_divergence(self, flux: Sequence[np.ndarray]) -> np.ndarray:
        """Modal coefficients of ``-div(flux)`` in weak form, ``(flux, grad e_k)``."""
        if self.domain.dimension == 1:
            return self.analyse(flux[0], (1,))
        return self.analyse(flux[0], (1, 0)) + self.analyse(flux[1], (0, 1))

    def laplacian_grid(self, c: np.ndarray) -> np.ndarray:
        return self.synth(-self.mu * c)


@functools.lru_cache(maxsize=32)
def basis_for(domain: DomainSpec) -> SineBasis:
    return SineBasis(domain)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")


class ModalField:
    """Coefficients of a field in the sine eigenbasis. Immutable value type."""

    __slots__ = ("coeffs", "domain")

    def __init__(self, coeffs, domain: DomainSpec):
        arr = np.array(coeffs, dtype=float)
        if arr.shape != domain.shape:
            if arr.size == domain.size:
                arr = arr.reshape(domain.shape)
            else:
                raise ResolutionError(f"coefficient shape {arr.shape} does not match {domain.shape}")
        _check_finite(arr, "ModalField")
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)
        object.__setattr__(self, "domain", domain)

    def __setattr__(self, name, value):
        raise AttributeError("ModalField is immutable")

    @classmethod
    def zeros(cls, domain: DomainSpec) -> "ModalField":
        return cls(np.zeros(domain.shape), domain)

    @classmethod
    def mode(cls, domain: DomainSpec, index: Sequence[int] | int, value: float = 1.0) -> "ModalField":
        """Field ``value * e_k`` for a 1-based multi-index ``k``."""
        if isinstance(index, (int, np.integer)):
            index = (int(index),)
        index = tuple(int(i) for i in index)
        if len(index) != domain.dimension or any(i < 1 or i > domain.n for i in index):
            raise IndexError(f"mode index {index} outside 1..{domain.n}")
        c = np.zeros(domain.shape)
        c[tuple(i - 1 for i in index)] = value
        return cls(c, domain)

    def _other(self, other) -> np.ndarray:
        if isinstance(other, ModalField):
            if other.domain != self.domain:
                raise ResolutionError("fields live on different discretisations")
            return other.coeffs
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else ModalField(self.coeffs + o, self.domain)

    def __sub__(self, other):
        o = self._other(other)
        return NotImplemented if o is NotImplemented else ModalField(self.coeffs - o, self.domain)

    def __mul__(self, a):
        if isinstance(a, (int, float, np.floating, np.integer)):
            return ModalField(self.coeffs * float(a), self.domain)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1.0 / float(a))

    def __neg__(self):
        return ModalField(-self.coeffs, self.domain)

    def __repr__(self):
        return f"ModalField(shape={self.coeffs.shape}, max|c|={np.abs(self.coeffs).max():.3g})"


class GridField:
    """Point values on the closed quadrature grid."""

    __slots__ = ("values", "domain")

    def __init__(self, values, domain: DomainSpec):
        arr = np.array(values, dtype=float)
        if arr.shape != domain.grid_shape:
            raise ResolutionError(f"grid shape {arr.shape} does not match {domain.grid_shape}")
        _check_finite(arr, "GridField")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "domain", domain)

    def __setattr__(self, name, value):
        raise AttributeError("GridField is immutable")

    @classmethod
    def from_function(cls, domain: DomainSpec, func) -> "GridField":
        b = basis_for(domain)
        mesh = np.meshgrid(*b.x, indexing="ij")
        return cls(np.broadcast_to(func(*mesh), domain.grid_shape), domain)

    @property
    def points(self) -> tuple[np.ndarray, ...]:
        return tuple(basis_for(self.domain).x)

    def __repr__(self):
        return f"GridField(shape={self.values.shape})"


@dataclass(frozen=True, eq=False)
class OperatorA:
    """Eigenvalue table of the stiffness operator.

    ``kind`` is ``"plate"`` for the squared Dirichlet Laplacian and
    ``"wave"`` for the Dirichlet Laplacian itself. ``order`` is the flat
    index permutation sorting eigenvalues ascending, ties broken by
    lexicographic multi-index.
    """

    kind: str
    domain: DomainSpec
    eigenvalues: np.ndarray
    laplace: np.ndarray
    order: np.ndarray

    @property
    def sorted_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues.ravel()[self.order]

    @property
    def lambda1(self) -> float:
        return float(self.sorted_eigenvalues[0])

    def multi_index(self, rank: int) -> tuple[int, ...]:
        """1-based multi-index of the mode at position ``rank`` (0-based) in sorted order."""
        return tuple(int(i) + 1 for i in np.unravel_index(self.order[rank], self.domain.shape))

    def sorted_mode(self, rank: int, value: float = 1.0) -> ModalField:
        return ModalField.mode(self.domain, self.multi_index(rank), value)


def build_operator(domain: DomainSpec, kind: str = "plate") -> OperatorA:
    if kind not in ("plate", "wave"):
        raise ValueError(f"operator kind must be 'plate' or 'wave', got {kind!r}")
    if domain.n < 2:
        raise ValueError("resolution N must be >= 2")
    mu = basis_for(domain).mu.copy()
    lam = mu**2 if kind == "plate" else mu.copy()
    order = np.argsort(lam.ravel(), kind="stable")
    for arr in (mu, lam, order):
        arr.flags.writeable = False
    return OperatorA(kind, domain, lam, mu, order)


def _check_same(A: OperatorA, u: ModalField) -> None:
    if u.domain != A.domain:
        raise ResolutionError("field and operator live on different discretisations")


def apply_fractional(A: OperatorA, s: float, u: ModalField) -> ModalField:
    """``A^{s/2} u``; negative ``s`` smooths."""
    _check_same(A, u)
    return ModalField(A.eigenvalues ** (0.5 * s) * u.coeffs, u.domain)


def norm_s(A: OperatorA, u: ModalField, s: float) -> float:
    _check_same(A, u)
    return float(np.sqrt(np.sum(A.eigenvalues**s * u.coeffs**2)))


def inner(u: ModalField, v: ModalField) -> float:
    if u.domain != v.domain:
        raise ResolutionError("fields live on different discretisations")
    return float(np.sum(u.coeffs * v.coeffs))


def projector_mask(A: OperatorA, m: int) -> np.ndarray:
    if not 0 <= m <= A.domain.size:
        raise ValueError(f"projection size {m} outside 0..{A.domain.size}")
    mask = np.zeros(A.domain.size, dtype=bool)
    mask[A.order[:m]] = True
    return mask.reshape(A.domain.shape)


def project(A: OperatorA, u: ModalField, m: int) -> ModalField:
    """Keep the ``m`` modes lowest in sorted-eigenvalue order."""
    _check_same(A, u)
    return ModalField(np.where(projector_mask(A, m), u.coeffs, 0.0), u.domain)


def to_grid(u: ModalField) -> GridField:
    return GridField(basis_for(u.domain).synth(u.coeffs), u.domain)


def to_modal(g: GridField) -> ModalField:
    return ModalField(basis_for(g.domain).analyse(g.values), g.domain)


def gradient(u: ModalField) -> tuple[GridField, ...]:
    return tuple(GridField(d, u.domain) for d in basis_for(u.domain).gradient(u.coeffs))


def quadrature(g: GridField) -> float:
    """Trapezoid-rule integral of a grid field over the domain."""
    return basis_for(g.domain).quad(g.values)
