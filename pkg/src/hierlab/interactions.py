"""Collision operators coupling hierarchy levels.

Contact (delta-limit) operators restrict the consumed particle pair to the
diagonal; finite-N operators convolve with a rescaled potential instead.
Both follow one convention: integrals are h^d-weighted sums, and the delta
surrogate is a single grid-point mass of height 1/h^d, so the two factors
cancel and the delta-potential case reproduces the contact operator exactly.

Primed-variable (minus) operators reuse the unprimed index logic with the
potential argument moved to the primed slot; plus and minus parts are mutual
adjoints.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .budget import TensorBudget, default_budget
from .grid import Field, GridSpec
from .marginals import _LABELS, HierarchyState, Marginal, zero_marginal


# ---------------------------------------------------------------------------
# Scaled potentials


@dataclass
class PotentialSpec:
    """Base profile plus its strength-scaled, argument-compressed realization
    N^(d*beta) * V(N^beta x) sampled back onto the grid."""

    grid: GridSpec
    profile: Field
    beta: float
    big_n: int
    kappa0: float
    realized: Field
    width: float | None = None
    resolvable: bool = True
    mass_ratio: float = 1.0


def gaussian_profile(grid: GridSpec, width: float, images: int = 3) -> Field:
    """Centered Gaussian of the given width, periodized per axis."""
    x = grid.points
    offsets = np.arange(-images, images + 1) * grid.L
    axis_val = np.exp(-0.5 * ((x[:, None] - offsets[None, :]) / width) ** 2).sum(axis=1)
    val = axis_val
    for _ in range(grid.dim - 1):
        val = np.multiply.outer(val, axis_val)
    return Field(grid, 1, val.astype(np.complex128))


def bump_profile(grid: GridSpec, width: float) -> Field:
    """Compactly supported smooth bump of the given radius."""
    x = grid.points
    centered = np.minimum(x, grid.L - x)  # torus distance to the origin
    axes = np.meshgrid(*([centered] * grid.dim), indexing="ij")
    r2 = sum(ax**2 for ax in axes)
    val = np.zeros_like(r2)
    inside = r2 < width**2
    val[inside] = np.exp(-1.0 / (1.0 - r2[inside] / width**2))
    return Field(grid, 1, val.astype(np.complex128))


PROFILES = {"gaussian": gaussian_profile, "bump": bump_profile}


def _check_profile(profile: Field) -> None:
    data = profile.data
    if np.max(np.abs(data.imag)) > 1e-12 * max(np.max(np.abs(data)), 1e-300):
        raise ValueError("potential profile must be real")
    if np.min(data.real) < -1e-12 * max(np.max(data.real), 1e-300):
        raise ValueError("potential profile must be nonnegative")
    flipped = data
    for ax in range(data.ndim):
        flipped = np.flip(np.roll(flipped, -1, axis=ax), axis=ax)
    if np.max(np.abs(data - flipped)) > 1e-10 * max(np.max(np.abs(data)), 1e-300):
        raise ValueError("potential profile must be even under x -> -x")


def realize_potential(profile: Field, beta: float, big_n: int,
                      normalize: bool = True, width: float | None = None) -> PotentialSpec:
    """Build the desk realization of N^(d*beta) * V(N^beta x): the profile's
    spectral data, evaluated at frequencies shrunk by N^(-beta), inverted back
    to the grid.

    Compressing the bump in space is stretching its spectrum; doing the
    scaling on the spectral side keeps the quadrature mass of the realization
    equal to the profile's mass exactly (the zero mode is untouched), which is
    what makes the concentration limit measurable on a fixed grid.  With
    ``normalize`` the profile is first rescaled to unit quadrature mass, so
    the coupling constant kappa0 (the mass) defaults to 1.
    """
    if not 0 < beta < 0.25:
        raise ValueError(f"beta must lie in (0, 1/4), got {beta}")
    if big_n < 1:
        raise ValueError("N must be >= 1")
    _check_profile(profile)
    grid = profile.grid
    d = grid.dim
    base = profile.data.real.astype(np.float64)
    mass = float(grid.h**d * base.sum())
    if mass <= 0:
        raise ValueError("potential profile must have positive mass")
    if normalize:
        base = base / mass
        mass = 1.0

    scale = float(big_n) ** beta
    # Centered coordinates put the bump at the origin, so the spectral sum
    # below is the quadrature transform of the bump itself.
    centered = (grid.points + grid.L / 2.0) % grid.L - grid.L / 2.0
    # A[m, i] = h * exp(-i (freq_m / scale) x_i), one axis at a time.
    eval_mat = grid.h * np.exp(-1j * np.outer(grid.frequencies / scale, centered))
    spec = base.astype(np.complex128)
    for ax in range(d):
        spec = np.tensordot(eval_mat, spec, axes=([1], [ax]))
        spec = np.moveaxis(spec, 0, ax)
    # enforce an exactly even (hence real) realization; the grid point at
    # -L/2 has no mirror partner and would otherwise leave odd residue
    for ax in range(d):
        spec = 0.5 * (spec + np.roll(np.flip(spec, axis=ax), 1, axis=ax))
    realized = np.fft.ifftn(spec.real).real / grid.h**d

    realized_mass = float(grid.h**d * realized.sum())
    mass_ratio = realized_mass / mass
    resolvable = True
    # support heuristic: the bump spans about 4*width, under-resolved when
    # the compressed support covers fewer than 4 mesh cells
    if width is not None and 4.0 * width / scale < 4.0 * grid.h:
        resolvable = False
        warnings.warn(
            f"scaled potential support {4.0 * width / scale:.3g} is below 4 "
            f"mesh cells; the realization is under-resolved at N={big_n}",
            RuntimeWarning, stacklevel=2)
    return PotentialSpec(grid=grid, profile=Field(grid, 1, base), beta=beta,
                         big_n=big_n, kappa0=mass, realized=Field(grid, 1, realized),
                         width=width, resolvable=resolvable, mass_ratio=mass_ratio)


def delta_surrogate(grid: GridSpec, big_n: int = 1, beta: float = 0.2) -> PotentialSpec:
    """Unit-mass point potential: one grid-point spike of height 1/h^d.

    Contracting against it reduces the finite-N operator to the contact one.
    """
    data = np.zeros(grid.slot_shape(1), dtype=np.complex128)
    data[(0,) * grid.dim] = 1.0 / grid.h**grid.dim
    spike = Field(grid, 1, data)
    return PotentialSpec(grid=grid, profile=spike, beta=beta, big_n=big_n,
                         kappa0=1.0, realized=spike.copy())


def potential_difference_tensor(realized: Field) -> np.ndarray:
    """W[a, b] = V(x_a - x_b) on the torus, shape (n,)*(2d)."""
    grid = realized.grid
    n, d = grid.n, grid.dim
    diff = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    index_arrays = []
    for ax in range(d):
        shape = [1] * (2 * d)
        shape[ax] = n
        shape[d + ax] = n
        index_arrays.append(diff.reshape(shape))
    return realized.data.real[tuple(index_arrays)]


# ---------------------------------------------------------------------------
# Contact (delta-limit) collision operators


def _restrict_pair(gamma: Marginal, source_axis_slot: int) -> Marginal:
    """Set both halves of the last particle pair equal to the variable held by
    ``source_axis_slot`` (a slot index into the rank-2(k+1) kernel) and drop
    the pair."""
    kp1, d = gamma.k, gamma.grid.dim
    k = kp1 - 1
    labels = list(_LABELS[: 2 * kp1 * d])
    for i in range(d):
        src = labels[source_axis_slot * d + i]
        labels[k * d + i] = src              # consumed unprimed slot
        labels[(2 * kp1 - 1) * d + i] = src  # consumed primed slot
    out_labels = [lab for ax, lab in enumerate(labels)
                  if ax // d not in (k, 2 * kp1 - 1)]
    sub = "".join(labels) + "->" + "".join(out_labels)
    return Marginal(gamma.grid, k, np.einsum(sub, gamma.kernel))


def gp_collision(gamma_next: Marginal, j: int, sign: str) -> Marginal:
    """Contact contraction of a (k+1)-particle kernel down to k particles.

    '+' restricts the consumed pair to x_j, '-' to x'_j; the difference of the
    two is the level-coupling term of the contact hierarchy.
    """
    k = gamma_next.k - 1
    if not 1 <= j <= k:
        raise ValueError(f"j={j} out of range for k={k}")
    if sign == "+":
        return _restrict_pair(gamma_next, j - 1)
    if sign == "-":
        return _restrict_pair(gamma_next, gamma_next.k + j - 1)
    raise ValueError("sign must be '+' or '-'")


def gp_collision_full(gamma_next: Marginal, j: int) -> Marginal:
    return gp_collision(gamma_next, j, "+") - gp_collision(gamma_next, j, "-")


def gp_collision_level(gamma_next: Marginal) -> Marginal:
    """Sum over j of the full contact operator, one hierarchy level down."""
    k = gamma_next.k - 1
    out = zero_marginal(gamma_next.grid, k)
    for j in range(1, k + 1):
        out = out + gp_collision_full(gamma_next, j)
    return out


def gp_collision_sum(state: HierarchyState, kappa0: float = 1.0) -> HierarchyState:
    """Contact collision term of the whole state; level k reads level k+1,
    the top level reads the implicit zero entry."""
    comps = []
    for k in range(1, state.K + 1):
        comps.append(gp_collision_level(state.entry(k + 1)) * kappa0)
    return HierarchyState(comps, state.xi)


# ---------------------------------------------------------------------------
# Finite-N collision operators


def _main_contract(gamma: Marginal, pot: PotentialSpec, slot: int) -> Marginal:
    """h^d sum_y V(x_slot - y) gamma(..., y; ..., y) with the pair diagonal."""
    kp1, d = gamma.k, gamma.grid.dim
    k = kp1 - 1
    labels = list(_LABELS[: 2 * kp1 * d])
    for i in range(d):
        labels[(2 * kp1 - 1) * d + i] = labels[k * d + i]  # primed y = unprimed y
    y_labels = [labels[k * d + i] for i in range(d)]
    out_labels = [lab for ax, lab in enumerate(labels)
                  if ax // d not in (k, 2 * kp1 - 1)]
    v_labels = [labels[slot * d + i] for i in range(d)] + y_labels
    sub = "".join(v_labels) + "," + "".join(labels) + "->" + "".join(out_labels)
    w = potential_difference_tensor(pot.realized)
    contracted = np.einsum(sub, w, gamma.kernel)
    return Marginal(gamma.grid, k, contracted * gamma.grid.h**d)


def bbgky_collision_main(gamma_next: Marginal, j: int, sign: str,
                         pot: PotentialSpec) -> Marginal:
    """Finite-N analogue of the contact contraction: convolve the diagonal of
    the consumed pair against the realized potential centered at x_j ('+') or
    x'_j ('-')."""
    k = gamma_next.k - 1
    if not 1 <= j <= k:
        raise ValueError(f"j={j} out of range for k={k}")
    if sign == "+":
        return _main_contract(gamma_next, pot, j - 1)
    if sign == "-":
        return _main_contract(gamma_next, pot, gamma_next.k + j - 1)
    raise ValueError("sign must be '+' or '-'")


def bbgky_main_level(gamma_next: Marginal, pot: PotentialSpec,
                     weighted: bool = True, plus_only: bool = False) -> Marginal:
    """Sum over j of the finite-N main operator, with the (N-k)/N weight."""
    k = gamma_next.k - 1
    out = zero_marginal(gamma_next.grid, k)
    for j in range(1, k + 1):
        term = bbgky_collision_main(gamma_next, j, "+", pot)
        if not plus_only:
            term = term - bbgky_collision_main(gamma_next, j, "-", pot)
        out = out + term
    if weighted:
        out = out * ((pot.big_n - k) / pot.big_n)
    return out


def bbgky_collision_error(gamma: Marginal, i: int, j: int, sign: str,
                          pot: PotentialSpec) -> Marginal:
    """Same-level term: multiply the kernel by V(x_i - x_j) (or primed pair)."""
    k, d = gamma.k, gamma.grid.dim
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    if not (1 <= i < j <= k):
        raise ValueError(f"need 1 <= i < j <= k, got i={i}, j={j}, k={k}")
    w = potential_difference_tensor(pot.realized)
    offset = 0 if sign == "+" else k
    # w's axes are (x_i axes, x_j axes) and i < j, so the target positions are
    # increasing and a singleton-padded reshape broadcasts it into the kernel
    full_shape = [1] * (2 * k * d)
    for ax in range(d):
        full_shape[(offset + i - 1) * d + ax] = gamma.grid.n
        full_shape[(offset + j - 1) * d + ax] = gamma.grid.n
    return Marginal(gamma.grid, k, gamma.kernel * w.reshape(full_shape))


def bbgky_error_level(gamma: Marginal, pot: PotentialSpec,
                      weighted: bool = True) -> Marginal:
    """Sum over pairs i<j of plus-minus error terms, with the 1/N weight."""
    k = gamma.k
    out = zero_marginal(gamma.grid, k)
    for i in range(1, k + 1):
        for j in range(i + 1, k + 1):
            out = out + bbgky_collision_error(gamma, i, j, "+", pot)
            out = out - bbgky_collision_error(gamma, i, j, "-", pot)
    if weighted:
        out = out * (1.0 / pot.big_n)
    return out


def bbgky_rhs(state: HierarchyState, pot: PotentialSpec) -> HierarchyState:
    """Collision part of the finite-N hierarchy: weighted main term reading one
    level up plus weighted same-level error term.  Levels above N are zero."""
    if state.K > pot.big_n:
        raise ValueError(f"state truncated at K={state.K} > N={pot.big_n}")
    comps = []
    for k in range(1, state.K + 1):
        term = zero_marginal(state.grid, k)
        if k < state.K:
            term = term + bbgky_main_level(state.entry(k + 1), pot)
        if k >= 2:
            term = term + bbgky_error_level(state.entry(k), pot)
        comps.append(term)
    return HierarchyState(comps, state.xi)


# ---------------------------------------------------------------------------
# Momentum-space oracle


def collision_fourier_oracle(gamma_next: Marginal, t: float,
                             pot: PotentialSpec | None = None,
                             budget: TensorBudget | None = None) -> Marginal:
    """Evaluate (plus-main at j=1) applied to the freely propagated kernel
    entirely in the momentum domain.

    The free flow is a phase, the pair diagonal becomes a convolution against
    the potential's spectrum at the summed dual variable, and the consumed
    momentum re-enters the first unprimed slot as a shift.  With no potential
    the spectrum factor is identically one (the delta limit).  Used as an
    independent cross-check of the spatial-domain path.
    """
    budget = budget or default_budget()
    grid = gamma_next.grid
    kp1, d, n = gamma_next.k, grid.dim, grid.n
    k = kp1 - 1
    if k < 1:
        raise ValueError("need a kernel with at least 2 particles")
    if kp1 > 3:
        raise ValueError("oracle supports up to 3 particles upstairs")
    budget.check_elements(grid.num_points ** (2 * kp1), "fourier oracle input")

    spec = np.fft.fftn(gamma_next.kernel)
    if t != 0.0:
        for slot in range(kp1):
            shape = [1] * (2 * kp1 * d)
            for i, ax in enumerate(grid.slot_axes(slot)):
                shape[ax] = n
            spec = spec * np.exp(-1j * t * grid.k2).reshape(shape)
        for slot in range(kp1, 2 * kp1):
            shape = [1] * (2 * kp1 * d)
            for i, ax in enumerate(grid.slot_axes(slot)):
                shape[ax] = n
            spec = spec * np.exp(+1j * t * grid.k2).reshape(shape)

    if pot is None:
        vhat = np.ones(grid.slot_shape(1))
    else:
        vhat = (grid.h**d) * np.fft.fftn(pot.realized.data.real)

    u1_axes = tuple(range(d))
    out_spec = np.zeros(grid.slot_shape(2 * k), dtype=np.complex128)
    # slice out the consumed slots: unprimed slot k, primed slot 2k+1
    consumed_u = grid.slot_axes(k)
    consumed_p = grid.slot_axes(2 * kp1 - 1)
    for v_idx in np.ndindex(*([n] * d)):
        for vp_idx in np.ndindex(*([n] * d)):
            slicer = [slice(None)] * (2 * kp1 * d)
            for ax, iv in zip(consumed_u, v_idx):
                slicer[ax] = iv
            for ax, ivp in zip(consumed_p, vp_idx):
                slicer[ax] = ivp
            piece = spec[tuple(slicer)]
            shift = tuple((iv + ivp) % n for iv, ivp in zip(v_idx, vp_idx))
            coeff = vhat[shift] / (n ** (2 * d))
            out_spec += coeff * np.roll(piece, shift, axis=u1_axes)
    return Marginal(grid, k, np.fft.ifftn(out_spec))
