"""k-particle density kernels and truncated hierarchy states.

A Marginal stores the kernel gamma(x_1..x_k; x'_1..x'_k) as a complex tensor
whose first k slots are the unprimed variables and last k slots the primed
ones.  The quadrature-weighted matrix h^(d*k) * reshape((n^d)^k, (n^d)^k) is
the operator acting on one-slot L^2, so its trace, eigenvalues and singular
values are the operator-level quantities.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .budget import TensorBudget, default_budget
from .grid import (Field, GridSpec, bessel_multiply, free_propagate,
                   l2_norm)


@dataclass
class Marginal:
    grid: GridSpec
    k: int
    kernel: np.ndarray

    def __post_init__(self):
        expected = self.grid.slot_shape(2 * self.k)
        if self.kernel.shape != expected:
            self.kernel = self.kernel.reshape(expected)
        if self.kernel.dtype != np.complex128:
            self.kernel = self.kernel.astype(np.complex128)

    @property
    def rows(self) -> int:
        return self.grid.num_points**self.k

    def as_field(self) -> Field:
        return Field(self.grid, 2 * self.k, self.kernel)

    def as_matrix(self) -> np.ndarray:
        return self.kernel.reshape(self.rows, self.rows)

    def weighted_matrix(self) -> np.ndarray:
        """Matrix of the integral operator, quadrature weight included."""
        return self.as_matrix() * self.grid.h ** (self.grid.dim * self.k)

    def copy(self) -> "Marginal":
        return Marginal(self.grid, self.k, self.kernel.copy())

    def __add__(self, other: "Marginal") -> "Marginal":
        self._check_compatible(other)
        return Marginal(self.grid, self.k, self.kernel + other.kernel)

    def __sub__(self, other: "Marginal") -> "Marginal":
        self._check_compatible(other)
        return Marginal(self.grid, self.k, self.kernel - other.kernel)

    def __mul__(self, c) -> "Marginal":
        return Marginal(self.grid, self.k, self.kernel * c)

    __rmul__ = __mul__

    def _check_compatible(self, other: "Marginal") -> None:
        if self.grid != other.grid or self.k != other.k:
            raise ValueError("marginals live on different grids or levels")


def zero_marginal(grid: GridSpec, k: int) -> Marginal:
    return Marginal(grid, k, np.zeros(grid.slot_shape(2 * k), dtype=np.complex128))


_LABELS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _tensor_product(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = factors[0]
    for f in factors[1:]:
        out = np.tensordot(out, f, axes=0)
    return out


# ---------------------------------------------------------------------------
# Constructors


def pure_product_marginal(phi: Field, k: int,
                          budget: TensorBudget | None = None) -> Marginal:
    """Rank-one product kernel, prod_j phi(x_j) * conj(phi(x'_j))."""
    if phi.rank != 1:
        raise ValueError("phi must be a rank-1 field")
    if k < 1:
        raise ValueError("k must be >= 1")
    budget = budget or default_budget()
    budget.check_elements(phi.grid.num_points ** (2 * k), f"product kernel k={k}")
    kern = _tensor_product([phi.data] * k + [np.conj(phi.data)] * k)
    return Marginal(phi.grid, k, kern)


def mixture_marginal(atoms: Iterable[tuple[float, Field]] | object, k: int,
                     budget: TensorBudget | None = None) -> Marginal:
    """Convex combination of product kernels from (weight, wavefunction) pairs.

    Accepts either an iterable of pairs or any object exposing ``.pairs()``
    (e.g. a de Finetti mixture).
    """
    pairs = atoms.pairs() if hasattr(atoms, "pairs") else list(atoms)
    if not pairs:
        raise ValueError("mixture must have at least one atom")
    out = None
    for w, phi in pairs:
        if w < 0:
            raise ValueError("mixture weights must be nonnegative")
        term = pure_product_marginal(phi, k, budget=budget)
        out = term * w if out is None else out + term * w
    return out


# ---------------------------------------------------------------------------
# Reductions and norms


def partial_trace_at(gamma: Marginal, pos: int) -> Marginal:
    """Trace out the particle at 0-based position ``pos`` (weight h^d)."""
    k, d = gamma.k, gamma.grid.dim
    if k < 2:
        raise ValueError("partial trace needs k >= 2 (use trace for k = 1)")
    if not 0 <= pos < k:
        raise ValueError(f"position {pos} out of range for k={k}")
    labels = list(_LABELS[: 2 * k * d])
    for i in range(d):
        labels[(k + pos) * d + i] = labels[pos * d + i]
    out_labels = [lab for ax, lab in enumerate(labels)
                  if ax // d not in (pos, k + pos)]
    sub = "".join(labels) + "->" + "".join(out_labels)
    contracted = np.einsum(sub, gamma.kernel)
    return Marginal(gamma.grid, k - 1, contracted * gamma.grid.h**d)


def partial_trace(gamma: Marginal) -> Marginal:
    """Trace out the last particle pair."""
    return partial_trace_at(gamma, gamma.k - 1)


def trace(gamma: Marginal) -> complex:
    w = gamma.grid.h ** (gamma.grid.dim * gamma.k)
    return complex(np.trace(gamma.as_matrix()) * w)


def sobolev_norm(gamma: Marginal, alpha: float) -> float:
    """Hilbert-Schmidt Sobolev norm, the order-alpha multiplier on all slots."""
    return l2_norm(bessel_multiply(gamma.as_field(), alpha))


def trace_sobolev_norm(gamma: Marginal, alpha: float,
                       budget: TensorBudget | None = None) -> float:
    """Trace norm of the Hermitian part of the multiplier-dressed operator."""
    budget = budget or default_budget()
    budget.check_eig_rows(gamma.rows, f"trace norm k={gamma.k}")
    dressed = bessel_multiply(gamma.as_field(), alpha) if alpha > 0 else gamma.as_field()
    m = Marginal(gamma.grid, gamma.k, dressed.data).weighted_matrix()
    herm = 0.5 * (m + m.conj().T)
    return float(np.sum(np.abs(np.linalg.eigvalsh(herm))))


def psd_defect(gamma: Marginal, budget: TensorBudget | None = None) -> float:
    """max(0, -lambda_min) of the Hermitized operator; 0 means psd."""
    budget = budget or default_budget()
    budget.check_eig_rows(gamma.rows, f"psd defect k={gamma.k}")
    m = gamma.weighted_matrix()
    herm = 0.5 * (m + m.conj().T)
    lam_min = float(np.linalg.eigvalsh(herm)[0])
    return max(0.0, -lam_min)


def is_positive_semidefinite(gamma: Marginal, rtol: float = 1e-10) -> bool:
    """psd up to the eigensolver noise floor, scaled by the kernel's trace."""
    scale = abs(trace(gamma)) or 1.0
    return psd_defect(gamma) <= rtol * scale


def hermiticity_defect(gamma: Marginal) -> float:
    k, d = gamma.k, gamma.grid.dim
    swap = list(range(k * d, 2 * k * d)) + list(range(k * d))
    adj = np.conj(np.transpose(gamma.kernel, swap))
    return float(np.max(np.abs(gamma.kernel - adj)))


def _permute_kernel(kernel: np.ndarray, k: int, d: int,
                    perm_unprimed: Sequence[int], perm_primed: Sequence[int]) -> np.ndarray:
    axes = []
    for slot in perm_unprimed:
        axes.extend(range(slot * d, (slot + 1) * d))
    for slot in perm_primed:
        axes.extend(range((k + slot) * d, (k + slot + 1) * d))
    return np.transpose(kernel, axes)


def permutation_defect(gamma: Marginal) -> float:
    """Max deviation under adjacent transpositions of either variable block."""
    k, d = gamma.k, gamma.grid.dim
    if k == 1:
        return 0.0
    worst = 0.0
    ident = list(range(k))
    for i in range(k - 1):
        swapped = ident.copy()
        swapped[i], swapped[i + 1] = swapped[i + 1], swapped[i]
        for pu, pp in ((swapped, ident), (ident, swapped)):
            moved = _permute_kernel(gamma.kernel, k, d, pu, pp)
            worst = max(worst, float(np.max(np.abs(gamma.kernel - moved))))
    return worst


def hermitize(gamma: Marginal) -> Marginal:
    k, d = gamma.k, gamma.grid.dim
    swap = list(range(k * d, 2 * k * d)) + list(range(k * d))
    adj = np.conj(np.transpose(gamma.kernel, swap))
    return Marginal(gamma.grid, k, 0.5 * (gamma.kernel + adj))


def symmetrize(gamma: Marginal) -> Marginal:
    """Project onto the kernels invariant under independent slot permutations
    of the unprimed and primed blocks, then Hermitize.  Idempotent."""
    k, d = gamma.k, gamma.grid.dim
    perms = list(itertools.permutations(range(k)))
    acc = np.zeros_like(gamma.kernel)
    for pu in perms:
        for pp in perms:
            acc += _permute_kernel(gamma.kernel, k, d, pu, pp)
    acc /= len(perms) ** 2
    return hermitize(Marginal(gamma.grid, k, acc))


def free_propagate_marginal(gamma: Marginal, t: float) -> Marginal:
    """Conjugate by the free flow: +1 signs on unprimed, -1 on primed slots."""
    signs = [1] * gamma.k + [-1] * gamma.k
    return Marginal(gamma.grid, gamma.k,
                    free_propagate(gamma.as_field(), t, signs).data)


def free_generator(gamma: Marginal) -> Marginal:
    """Kernel of the commutator with the (negative) Laplacian: the additive
    symbol sum |xi_j|^2 - sum |xi'_j|^2 applied in Fourier space."""
    g, k, d = gamma.grid, gamma.k, gamma.grid.dim
    symbol = np.zeros(g.slot_shape(2 * k))
    for slot in range(2 * k):
        shape = [1] * (2 * k * d)
        for ax in g.slot_axes(slot):
            shape[ax] = g.n
        sign = 1.0 if slot < k else -1.0
        symbol = symbol + sign * g.k2.reshape(shape)
    out = np.fft.ifftn(symbol * np.fft.fftn(gamma.kernel))
    return Marginal(g, k, out)


def weakstar_metric(gamma_a: Marginal, gamma_b: Marginal,
                    observables: Sequence[Marginal]) -> float:
    """Sum of 2^(-i) |Tr J_i (a - b)| over a finite test-operator family.

    Observables are rescaled to operator norm <= 1 before pairing.
    """
    diff = (gamma_a - gamma_b).weighted_matrix()
    total = 0.0
    for i, obs in enumerate(observables, start=1):
        m = obs.weighted_matrix()
        norm = np.linalg.norm(m, 2)
        if norm > 1.0:
            m = m / norm
        total += 2.0 ** (-i) * abs(np.trace(m @ diff))
    return float(total)


# ---------------------------------------------------------------------------
# Hierarchy states


@dataclass
class HierarchyState:
    """Finite truncated sequence (gamma^(1), ..., gamma^(K)) with a geometric
    level weight xi used by the hierarchy norms.  Entries above K are zero by
    convention."""

    entries: list[Marginal]
    xi: float = 0.5

    def __post_init__(self):
        if not self.entries:
            raise ValueError("hierarchy state needs at least one level")
        grid = self.entries[0].grid
        for j, m in enumerate(self.entries, start=1):
            if m.grid != grid:
                raise ValueError("all levels must share one grid")
            if m.k != j:
                raise ValueError(f"entry {j} has particle number {m.k}")
        if not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")

    @property
    def grid(self) -> GridSpec:
        return self.entries[0].grid

    @property
    def K(self) -> int:
        return len(self.entries)

    def entry(self, k: int) -> Marginal:
        """1-based accessor; levels above K are identically zero."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if k <= self.K:
            return self.entries[k - 1]
        return zero_marginal(self.grid, k)

    def copy(self) -> "HierarchyState":
        return HierarchyState([m.copy() for m in self.entries], self.xi)

    def __add__(self, other: "HierarchyState") -> "HierarchyState":
        if self.K != other.K:
            raise ValueError("states truncated at different levels")
        return HierarchyState([a + b for a, b in zip(self.entries, other.entries)],
                              self.xi)

    def __sub__(self, other: "HierarchyState") -> "HierarchyState":
        if self.K != other.K:
            raise ValueError("states truncated at different levels")
        return HierarchyState([a - b for a, b in zip(self.entries, other.entries)],
                              self.xi)

    def __mul__(self, c) -> "HierarchyState":
        return HierarchyState([m * c for m in self.entries], self.xi)

    __rmul__ = __mul__


def zero_state(grid: GridSpec, K: int, xi: float = 0.5) -> HierarchyState:
    return HierarchyState([zero_marginal(grid, k) for k in range(1, K + 1)], xi)


def factorized_state(phi: Field, K: int, xi: float = 0.5,
                     budget: TensorBudget | None = None) -> HierarchyState:
    return HierarchyState([pure_product_marginal(phi, k, budget=budget)
                           for k in range(1, K + 1)], xi)


def mixture_state(atoms, K: int, xi: float = 0.5,
                  budget: TensorBudget | None = None) -> HierarchyState:
    return HierarchyState([mixture_marginal(atoms, k, budget=budget)
                           for k in range(1, K + 1)], xi)


def hierarchy_norm(state: HierarchyState, alpha: float,
                   flavor: str = "hilbert_schmidt") -> float:
    """Sum over levels of xi^k times the level norm of the chosen flavor."""
    if flavor == "hilbert_schmidt":
        per_k = (sobolev_norm(m, alpha) for m in state.entries)
    elif flavor == "trace":
        per_k = (trace_sobolev_norm(m, alpha) for m in state.entries)
    else:
        raise ValueError(f"unknown flavor {flavor!r}")
    return float(sum(state.xi**k * v for k, v in enumerate(per_k, start=1)))


def admissibility_defect(state: HierarchyState) -> list[float]:
    """HS norms of Tr_(k+1) gamma^(k+1) - gamma^(k) for k = 1..K-1."""
    if state.K < 2:
        raise ValueError("admissibility needs K >= 2")
    out = []
    for k in range(1, state.K):
        residual = partial_trace(state.entry(k + 1)) - state.entry(k)
        out.append(sobolev_norm(residual, 0.0))
    return out


def random_hermitian_marginal(grid: GridSpec, k: int, rng: np.random.Generator,
                              max_mode: int | None = None,
                              symmetric: bool = False,
                              budget: TensorBudget | None = None) -> Marginal:
    """Seeded smooth Hermitian test kernel (optionally permutation symmetric)."""
    from .grid import random_low_mode_field
    raw = random_low_mode_field(grid, 2 * k, rng, max_mode=max_mode,
                                unit_norm=False, budget=budget)
    gamma = hermitize(Marginal(grid, k, raw.data))
    if symmetric and k > 1:
        gamma = symmetrize(gamma)
    nrm = sobolev_norm(gamma, 0.0)
    return gamma * (1.0 / nrm) if nrm > 0 else gamma
