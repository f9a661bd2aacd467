"""Periodic-torus spectral toolkit.

Conventions used by every other module:

* The domain is the torus [0, L)^d sampled on n points per axis, mesh h = L/n.
  Every integral is the quadrature h^d * sum over grid points; every norm
  inherits that weight.
* Angular frequencies are 2*pi*m/L for m in the usual DFT layout
  (0, 1, ..., n/2-1, -n/2, ..., -1), so the symbol of (1 - Laplacian)^(a/2)
  is exactly (1 + |xi|^2)^(a/2) on resolved modes.
* The forward transform is h^(d*r) * fftn and the inverse is its exact
  inverse, which makes Parseval hold in the form
  h^(d*r) * sum |f|^2 == L^(-d*r) * sum |fhat|^2.

A Field is a complex tensor with ``rank`` particle slots; slot j owns the d
consecutive axes [j*d, (j+1)*d).  Flattened in row-major order this is indexed
by (slot 1 point, ..., slot r point).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .budget import TensorBudget, default_budget


@dataclass(frozen=True)
class GridSpec:
    """Discretization of the periodic box [0, L)^d with n points per axis."""

    dim: int
    n: int
    L: float

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def num_points(self) -> int:
        """Points of one particle slot, n^d."""
        return self.n**self.dim

    @cached_property
    def points(self) -> np.ndarray:
        """1d coordinate array along one axis."""
        return self.h * np.arange(self.n)

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies along one axis, DFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def k2(self) -> np.ndarray:
        """|xi|^2 on one slot, shape (n,)*dim."""
        mats = np.meshgrid(*([self.frequencies**2] * self.dim), indexing="ij")
        return sum(mats)

    def slot_axes(self, slot: int) -> tuple[int, ...]:
        return tuple(range(slot * self.dim, (slot + 1) * self.dim))

    def slot_shape(self, rank: int) -> tuple[int, ...]:
        return (self.n,) * (self.dim * rank)


def make_grid(dim: int, n: int, L: float = 2.0 * np.pi) -> GridSpec:
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if n % 2 != 0 or n < 4:
        raise ValueError(f"n must be even and >= 4, got {n}")
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    return GridSpec(dim=dim, n=int(n), L=float(L))


@dataclass
class Field:
    """Complex tensor over ``rank`` particle slots of a common grid."""

    grid: GridSpec
    rank: int
    data: np.ndarray

    def __post_init__(self):
        expected = self.grid.slot_shape(self.rank)
        if self.data.shape != expected:
            if self.data.size == np.prod(expected, dtype=int):
                self.data = self.data.reshape(expected)
            else:
                raise ValueError(
                    f"data has {self.data.size} entries, rank {self.rank} needs "
                    f"{np.prod(expected, dtype=int)}"
                )
        if self.data.dtype != np.complex128:
            self.data = self.data.astype(np.complex128)

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def copy(self) -> "Field":
        return Field(self.grid, self.rank, self.data.copy())

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.rank, self.data + other.data)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.rank, self.data - other.data)

    def __mul__(self, c) -> "Field":
        return Field(self.grid, self.rank, self.data * c)

    __rmul__ = __mul__


def field_from_flat(grid: GridSpec, rank: int, flat: np.ndarray,
                    budget: TensorBudget | None = None) -> Field:
    budget = budget or default_budget()
    budget.check_elements(grid.num_points**rank, "field")
    return Field(grid, rank, np.asarray(flat, dtype=np.complex128))


def zero_field(grid: GridSpec, rank: int) -> Field:
    return Field(grid, rank, np.zeros(grid.slot_shape(rank), dtype=np.complex128))


# ---------------------------------------------------------------------------
# Transforms and Fourier multipliers


def dft_forward(f: Field) -> Field:
    """Quadrature-weighted DFT over all slots (h^(d*rank) * fftn)."""
    scale = f.grid.h ** (f.grid.dim * f.rank)
    return Field(f.grid, f.rank, np.fft.fftn(f.data) * scale)


def dft_inverse(f: Field) -> Field:
    scale = f.grid.h ** (f.grid.dim * f.rank)
    return Field(f.grid, f.rank, np.fft.ifftn(f.data) / scale)


def _slot_multiplier(grid: GridSpec, values: np.ndarray, slot: int, rank: int) -> np.ndarray:
    """Broadcast a one-slot multiplier (shape (n,)*d) to the full-rank shape."""
    shape = [1] * (grid.dim * rank)
    for i, ax in enumerate(grid.slot_axes(slot)):
        shape[ax] = grid.n
    return values.reshape(shape)


def apply_multiplier(f: Field, per_slot: Sequence[np.ndarray | None]) -> Field:
    """Multiply each slot's spectrum by the given symbol (None skips a slot)."""
    active = [s for s, m in enumerate(per_slot) if m is not None]
    if not active:
        return f.copy()
    axes = [ax for s in active for ax in f.grid.slot_axes(s)]
    spec = np.fft.fftn(f.data, axes=axes)
    for s in active:
        spec *= _slot_multiplier(f.grid, per_slot[s], s, f.rank)
    return Field(f.grid, f.rank, np.fft.ifftn(spec, axes=axes))


def bessel_multiply(f: Field, alpha: float, slots: Iterable[int] | None = None) -> Field:
    """Apply (1 - Laplacian)^(alpha/2) on the selected slots (default: all)."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0:
        return f.copy()
    chosen = set(range(f.rank)) if slots is None else set(slots)
    sym = (1.0 + f.grid.k2) ** (alpha / 2.0)
    return apply_multiplier(f, [sym if s in chosen else None for s in range(f.rank)])


def free_propagate(f: Field, t: float, signs: Sequence[int] | None = None) -> Field:
    """Free Schroedinger flow, slot spectrum times exp(-i*sign*t*|xi|^2).

    sign +1 is exp(i*t*Laplacian); -1 its inverse.  Default is +1 on every
    slot.
    """
    if t == 0:
        return f.copy()
    if signs is None:
        signs = [1] * f.rank
    if len(signs) != f.rank:
        raise ValueError("one sign per slot required")
    per_slot = [np.exp(-1j * s * t * f.grid.k2) for s in signs]
    return apply_multiplier(f, per_slot)


# ---------------------------------------------------------------------------
# Norms, inner products, random data


def l2_norm(f: Field) -> float:
    w = f.grid.h ** (f.grid.dim * f.rank)
    return float(np.sqrt(w * np.sum(np.abs(f.data) ** 2)))


def inner(f: Field, g: Field) -> complex:
    w = f.grid.h ** (f.grid.dim * f.rank)
    return complex(w * np.sum(np.conj(f.data) * g.data))


def sobolev_norm_field(f: Field, alpha: float) -> float:
    """H^alpha norm of a field, the multiplier applied to every slot."""
    return l2_norm(bessel_multiply(f, alpha))


def normalized(f: Field) -> Field:
    nrm = l2_norm(f)
    if nrm == 0:
        raise ValueError("cannot normalize the zero field")
    return Field(f.grid, f.rank, f.data / nrm)


def random_low_mode_field(grid: GridSpec, rank: int, rng: np.random.Generator,
                          max_mode: int | None = None, decay: float = 1.0,
                          unit_norm: bool = True,
                          budget: TensorBudget | None = None) -> Field:
    """Seeded random field with spectrum supported on |m| <= max_mode per axis.

    Smooth by construction (Gaussian mode decay), so resolution studies are
    not starved by unresolved content.  Default max_mode is n//4.
    """
    budget = budget or default_budget()
    budget.check_elements(grid.num_points**rank, "random field")
    if max_mode is None:
        max_mode = grid.n // 4
    modes = np.fft.fftfreq(grid.n, d=1.0 / grid.n)  # integer mode numbers
    keep_1d = np.abs(modes) <= max_mode
    weight_1d = np.exp(-0.5 * (modes / (decay * max(max_mode, 1))) ** 2) * keep_1d
    full = np.ones(grid.slot_shape(rank))
    for slot in range(rank):
        for ax in grid.slot_axes(slot):
            shape = [1] * (grid.dim * rank)
            shape[ax] = grid.n
            full = full * weight_1d.reshape(shape)
    spec = rng.standard_normal(full.shape) + 1j * rng.standard_normal(full.shape)
    data = np.fft.ifftn(spec * full)
    f = Field(grid, rank, data)
    return normalized(f) if unit_norm else f
