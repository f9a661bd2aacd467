"""Time evolution of truncated hierarchies.

The free part is exponentiated exactly (it is a Fourier multiplier), the
level-coupling collision term is integrated in the interaction picture.  The
default stepper is the classical fourth-order Runge-Kutta scheme anchored at
the step midpoint of the interaction picture; a second-order splitting with a
midpoint collision update is available for comparison.

The collision term annihilates traces identically on the grid (the plus and
minus restrictions agree on the kernel diagonal), so per-level traces are
conserved to rounding by construction and a drifting trace signals an
integrator failure, which aborts the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .budget import TensorBudget, default_budget
from .grid import Field
from .interactions import (PotentialSpec, bbgky_main_level, bbgky_rhs,
                           gp_collision_level)
from .marginals import (HierarchyState, Marginal, free_propagate_marginal,
                        hierarchy_norm, pure_product_marginal, sobolev_norm,
                        trace, zero_marginal, free_generator)


class InstabilityError(RuntimeError):
    """Trace drift exceeded the abort threshold during evolution."""


@dataclass
class EvolutionConfig:
    dt: float = 1e-3
    t_final: float = 0.1
    method: str = "rk4_interaction_picture"
    closure: str = "zero_top"
    K: int = 2
    b1: float = 2.0
    xi: float = 0.5
    xi_prime: float = 0.7
    c0: float = 1.0
    trace_drift_abort: float = 0.01

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 < self.xi < self.xi_prime < 1:
            raise ValueError("weights must satisfy 0 < xi < xi_prime < 1")
        if self.method not in ("rk4_interaction_picture", "strang_splitting"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.closure not in ("zero_top", "mixture_closure"):
            raise ValueError(f"unknown closure {self.closure!r}")

    def t0_gate(self) -> float:
        """Heuristic contraction horizon xi^2 / c0."""
        return self.xi**2 / self.c0


def truncate(state: HierarchyState, K: int) -> HierarchyState:
    """Keep the first K levels (entries above K are zero by convention)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if K >= state.K:
        return state.copy()
    return HierarchyState([m.copy() for m in state.entries[:K]], state.xi)


def k_schedule(big_n: int, b1: float, cap: int = 8) -> int:
    """Truncation level floor(b1 * ln N), clamped to [1, cap]."""
    if big_n < 2:
        raise ValueError("N must be >= 2")
    if b1 <= 0:
        raise ValueError("b1 must be positive")
    return int(np.clip(math.floor(b1 * math.log(big_n)), 1, cap))


def free_flow(state: HierarchyState, t: float) -> HierarchyState:
    return HierarchyState([free_propagate_marginal(m, t) for m in state.entries],
                          state.xi)


# ---------------------------------------------------------------------------
# Closures for the top level


class ZeroTopClosure:
    """Truncated hierarchy: the level above K is identically zero."""

    def top_collision(self, t: float) -> Marginal | None:
        return None


class MixtureClosure:
    """Supply the missing top-level collision term from a mixture whose atoms
    are advanced alongside the hierarchy (cubic flow at half-step resolution).

    ``top_collision(t)`` returns the level-K collision kernel computed on the
    mixture side without materializing the (K+1)-level kernel.
    """

    def __init__(self, mixture, K: int, dt_half: float, coupling: float = 1.0):
        self.K = K
        self.dt_half = dt_half
        self.coupling = coupling
        self._atom_frames: list[list[tuple[float, Field]]] = [list(mixture.pairs())]

    def _atoms_at(self, index: int) -> list[tuple[float, Field]]:
        from .definetti import nls_flow
        while len(self._atom_frames) <= index:
            prev = self._atom_frames[-1]
            self._atom_frames.append(
                [(w, nls_flow(phi, self.dt_half, self.dt_half, self.coupling))
                 for w, phi in prev])
        return self._atom_frames[index]

    def top_collision(self, t: float) -> Marginal:
        index = int(round(t / self.dt_half))
        if abs(index * self.dt_half - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"closure queried off the half-step grid, t={t}")
        atoms = self._atoms_at(index)
        K, grid = self.K, atoms[0][1].grid
        d = grid.dim
        out = zero_marginal(grid, K)
        for w, phi in atoms:
            prod = pure_product_marginal(phi, K)
            dens = np.abs(phi.data) ** 2
            mult = np.zeros(grid.slot_shape(2 * K))
            for j in range(K):
                shape_u = [1] * (2 * K * d)
                shape_p = [1] * (2 * K * d)
                for ax_i, ax in enumerate(grid.slot_axes(j)):
                    shape_u[ax] = grid.n
                for ax_i, ax in enumerate(grid.slot_axes(K + j)):
                    shape_p[ax] = grid.n
                mult = mult + dens.reshape(shape_u) - dens.reshape(shape_p)
            out = out + Marginal(grid, K, prod.kernel * mult) * w
        return out


# ---------------------------------------------------------------------------
# Steppers


def _rk4ip_step(state: HierarchyState, t: float, dt: float,
                rhs: Callable[[HierarchyState, float], HierarchyState]) -> HierarchyState:
    half = lambda s: free_flow(s, dt / 2.0)
    state_i = half(state)
    k1 = half(rhs(state, t) * dt)
    k2 = rhs(state_i + k1 * 0.5, t + dt / 2.0) * dt
    k3 = rhs(state_i + k2 * 0.5, t + dt / 2.0) * dt
    k4 = rhs(half(state_i + k3), t + dt) * dt
    return half(state_i + (k1 + 2.0 * k2 + 2.0 * k3) * (1.0 / 6.0)) + k4 * (1.0 / 6.0)


def _strang_step(state: HierarchyState, t: float, dt: float,
                 rhs: Callable[[HierarchyState, float], HierarchyState]) -> HierarchyState:
    out = free_flow(state, dt / 2.0)
    mid = out + rhs(out, t + dt / 2.0) * (dt / 2.0)
    out = out + rhs(mid, t + dt / 2.0) * dt
    return free_flow(out, dt / 2.0)


@dataclass
class HierarchyTrajectory:
    times: np.ndarray
    states: list[HierarchyState]
    stored_steps: list[int]
    traces: dict[int, np.ndarray]
    hs_norms: dict[int, np.ndarray]
    collision_h1: dict[int, np.ndarray]
    dt: float
    kappa0: float = 1.0

    def final(self) -> HierarchyState:
        return self.states[-1]


def _evolve(state0: HierarchyState, config: EvolutionConfig,
            rhs: Callable[[HierarchyState, float], HierarchyState],
            store_every: int = 1,
            log_collision_norms: bool = False,
            kappa0: float = 1.0) -> HierarchyTrajectory:
    n_steps = int(round(config.t_final / config.dt))
    if abs(n_steps * config.dt - config.t_final) > 1e-9 * max(1.0, config.t_final):
        raise ValueError("t_final must be a multiple of dt")
    dt = config.dt
    step_fn = _rk4ip_step if config.method == "rk4_interaction_picture" else _strang_step
    K = state0.K
    state = state0.copy()
    base_traces = [trace(m).real for m in state.entries]

    times = [0.0]
    states = [state.copy()]
    stored = [0]
    traces = {k: [base_traces[k - 1]] for k in range(1, K + 1)}
    hs = {k: [sobolev_norm(m, 0.0)] for k, m in enumerate(state.entries, start=1)}
    coll = {k: [] for k in range(1, K + 1)}

    for step in range(1, n_steps + 1):
        t = (step - 1) * dt
        state = step_fn(state, t, dt, rhs)
        for k in range(1, K + 1):
            tr = trace(state.entry(k)).real
            traces[k].append(tr)
            hs[k].append(sobolev_norm(state.entry(k), 0.0))
            drift = abs(tr - base_traces[k - 1])
            # the collision term is traceless on the grid, so a drifting or
            # non-finite trace is an integrator blow-up, not physics
            if not np.isfinite(tr) or \
                    drift > config.trace_drift_abort * max(1.0, abs(base_traces[k - 1])):
                raise InstabilityError(
                    f"trace of level {k} drifted by {drift:.3e} at t={step * dt:.4f} "
                    f"(dt={dt}, method={config.method})")
        if log_collision_norms:
            deriv = rhs(state, step * dt)
            for k in range(1, K + 1):
                coll[k].append(sobolev_norm(deriv.entry(k), 1.0))
        if (store_every and step % store_every == 0) or step == n_steps:
            times.append(step * dt)
            states.append(state.copy())
            stored.append(step)
    return HierarchyTrajectory(
        times=np.array(times), states=states, stored_steps=stored,
        traces={k: np.array(v) for k, v in traces.items()},
        hs_norms={k: np.array(v) for k, v in hs.items()},
        collision_h1={k: np.array(v) for k, v in coll.items()},
        dt=dt, kappa0=kappa0)


def gp_evolve(state0: HierarchyState, config: EvolutionConfig,
              kappa0: float = 1.0, mixture=None, store_every: int = 1,
              log_collision_norms: bool = False) -> HierarchyTrajectory:
    """Evolve the K-truncated contact hierarchy.

    zero_top closes the system with a vanishing (K+1)-level; mixture_closure
    supplies that level from a mixture advanced by the cubic flow, which keeps
    the truncated system exact on de Finetti data up to integrator error.
    """
    K = state0.K
    if config.closure == "mixture_closure":
        if mixture is None:
            raise ValueError("mixture_closure needs a mixture")
        closure = MixtureClosure(mixture, K, config.dt / 2.0, coupling=kappa0)
    else:
        closure = ZeroTopClosure()

    def rhs(state: HierarchyState, t: float) -> HierarchyState:
        comps = []
        for k in range(1, K + 1):
            if k < K:
                term = gp_collision_level(state.entry(k + 1))
            else:
                top = closure.top_collision(t)
                term = top if top is not None else zero_marginal(state.grid, K)
            comps.append(term * (-1j * kappa0))
        return HierarchyState(comps, state.xi)

    return _evolve(state0, config, rhs, store_every=store_every,
                   log_collision_norms=log_collision_norms, kappa0=kappa0)


def bbgky_evolve(state0: HierarchyState, config: EvolutionConfig,
                 pot: PotentialSpec, store_every: int = 1,
                 log_collision_norms: bool = False) -> HierarchyTrajectory:
    """Evolve the K-truncated finite-N hierarchy (levels above K stay zero,
    so the top level sees only its same-level interaction term)."""
    if state0.K > pot.big_n:
        raise ValueError(f"K={state0.K} exceeds N={pot.big_n}")

    def rhs(state: HierarchyState, t: float) -> HierarchyState:
        return bbgky_rhs(state, pot) * (-1j)

    return _evolve(state0, config, rhs, store_every=store_every,
                   log_collision_norms=log_collision_norms, kappa0=pot.kappa0)


def gp_residual(traj: HierarchyTrajectory, kappa0: float | None = None) -> dict[int, np.ndarray]:
    """Central-difference defect of the stored trajectory against the contact
    hierarchy, per level k < K, at interior stored steps.  Requires every step
    stored (stride one)."""
    steps = traj.stored_steps
    if len(steps) < 3 or any(b - a != 1 for a, b in zip(steps, steps[1:])):
        raise ValueError("residual needs a trajectory stored at every step")
    kappa0 = traj.kappa0 if kappa0 is None else kappa0
    K = traj.states[0].K
    out: dict[int, list[float]] = {k: [] for k in range(1, K)}
    dt = traj.dt
    for i in range(1, len(traj.states) - 1):
        prev_s, cur, nxt = traj.states[i - 1], traj.states[i], traj.states[i + 1]
        for k in range(1, K):
            dgamma = (nxt.entry(k) - prev_s.entry(k)) * (1.0 / (2.0 * dt))
            lhs = dgamma * 1j
            rhs = free_generator(cur.entry(k)) + gp_collision_level(cur.entry(k + 1)) * kappa0
            out[k].append(sobolev_norm(lhs - rhs, 0.0))
    return {k: np.array(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# Time series, iterated collision integrals, fixed point


@dataclass
class TimeSeries:
    """Hierarchy states sampled on the uniform grid j * dt, j = 0..len-1."""

    dt: float
    states: list[HierarchyState]

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not self.states:
            raise ValueError("series must not be empty")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.states))

    @property
    def horizon(self) -> float:
        return self.dt * (len(self.states) - 1)


def free_flow_series(state0: HierarchyState, dt: float, n_steps: int) -> TimeSeries:
    return TimeSeries(dt, [free_flow(state0, j * dt) for j in range(n_steps + 1)])


def _level_series(series: TimeSeries, level: int) -> list[Marginal]:
    return [s.entry(level) for s in series.states]


def _prefix_trapezoid(items: list[Marginal], dt: float) -> list[Marginal]:
    acc = [items[0] * 0.0]
    for i in range(1, len(items)):
        acc.append(acc[-1] + (items[i - 1] + items[i]) * (dt / 2.0))
    return acc


def _prefix_simpson(items: list[Marginal], dt: float) -> list[Marginal]:
    """Cumulative composite Simpson; odd endpoints close with one trapezoid."""
    acc = [items[0] * 0.0]
    for i in range(1, len(items)):
        if i % 2 == 0:
            acc.append(acc[i - 2] + (items[i - 2] + items[i - 1] * 4.0 + items[i])
                       * (dt / 3.0))
        else:
            acc.append(acc[i - 1] + (items[i - 1] + items[i]) * (dt / 2.0))
    return acc


def duhamel_iterate(series: TimeSeries, j: int, pot: PotentialSpec, t: float,
                    budget: TensorBudget | None = None) -> HierarchyState:
    """j-fold nested time-ordered integral interleaving the weighted main
    collision operator with free flows, evaluated by composite trapezoid on
    the ordered simplex (the same grid as the series).

    j = 0 returns the series value at t.
    """
    if j < 0:
        raise ValueError("j must be nonnegative")
    budget = budget or default_budget()
    dt = series.dt
    n_idx = int(round(t / dt))
    if abs(n_idx * dt - t) > 1e-9 * max(1.0, t) or n_idx >= len(series.states) + 1:
        raise ValueError("t must be a grid time inside the series")
    n_pts = n_idx + 1
    base = series.states[0]
    K = base.K
    grid = base.grid
    k_out = K - j
    if k_out < 1:
        raise ValueError(f"series truncated at {K} is too shallow for j={j}")
    budget.check_elements(grid.num_points ** (2 * K), f"duhamel level {K}")

    times = dt * np.arange(n_pts)
    comps = []
    for k in range(1, k_out + 1):
        current = [series.states[i].entry(k + j) for i in range(n_pts)]
        for depth in range(j):
            target = k + j - depth - 1
            # push through one integral layer: i * int_0^s B U(s-sigma) current
            back = [free_propagate_marginal(current[i], -times[i]) for i in range(n_pts)]
            prefix = _prefix_trapezoid(back, dt)
            current = [
                bbgky_main_level(free_propagate_marginal(prefix[i], times[i]), pot) * 1j
                for i in range(n_pts)
            ]
        comps.append(current[n_idx])
    return HierarchyState(comps, base.xi)


@dataclass
class PicardResult:
    series: TimeSeries
    iterations: int
    update_norms: list[float]
    contraction_ratios: list[float]
    converged: bool
    residual: float | None


def _series_distance(a: list[HierarchyState], b: list[HierarchyState]) -> float:
    return max(hierarchy_norm(x - y, 1.0) for x, y in zip(a, b))


def picard_fixed_point(xi_series: TimeSeries, pot: PotentialSpec,
                       config: EvolutionConfig, tol: float = 1e-8,
                       max_iter: int = 50,
                       compute_residual: bool = True) -> PicardResult:
    """Iterate Theta <- Xi + i Int_0^t B_N U(t-s) Theta(s) ds on the series
    grid (trapezoid in s) until successive iterates are closer than ``tol``
    in the weighted order-1 norm.

    The horizon must sit inside the heuristic contraction gate xi^2/c0.  A
    ratio of successive updates >= 1 three times in a row aborts: the horizon
    is too large for the discrete surrogate.  The reported residual re-checks
    the converged iterate with an independent (Simpson) quadrature.
    """
    T = xi_series.horizon
    gate = config.t0_gate()
    if T >= gate:
        raise ValueError(f"horizon T={T} is not below the gate T0={gate}")
    dt = xi_series.dt
    n_pts = len(xi_series.states)
    times = xi_series.times

    def sweep(theta: list[HierarchyState], simpson: bool) -> list[HierarchyState]:
        # B_N U(t-s) Theta(s) = B_N U(t) [U(-s) Theta(s)], so one pass of
        # prefix sums replaces the quadratic double loop over (t, s).
        back = [free_flow(theta[i], -times[i]) for i in range(n_pts)]
        prefixes = _prefix_states(back, dt, simpson=simpson)
        return [xi_series.states[i]
                + bbgky_rhs(free_flow(prefixes[i], times[i]), pot) * 1j
                for i in range(n_pts)]

    theta = [s.copy() for s in xi_series.states]
    update_norms: list[float] = []
    ratios: list[float] = []
    converged = False
    rising = 0
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        new_theta = sweep(theta, simpson=False)
        delta = _series_distance(new_theta, theta)
        update_norms.append(delta)
        if len(update_norms) >= 2 and update_norms[-2] > 0:
            ratio = delta / update_norms[-2]
            ratios.append(ratio)
            rising = rising + 1 if ratio >= 1.0 else 0
            if rising >= 3:
                raise RuntimeError(
                    f"no contraction after {it} sweeps (last ratios "
                    f"{ratios[-3:]}); the horizon is too large for the "
                    f"discrete surrogate")
        theta = new_theta
        if delta < tol:
            converged = True
            break

    residual = None
    if compute_residual:
        residual = _series_distance(sweep(theta, simpson=True), theta)
    return PicardResult(TimeSeries(dt, theta), iterations, update_norms,
                        ratios, converged, residual)


def _prefix_states(states: list[HierarchyState], dt: float,
                   simpson: bool) -> list[HierarchyState]:
    zero = states[0] * 0.0
    acc = [zero]
    for i in range(1, len(states)):
        if simpson and i % 2 == 0:
            acc.append(acc[i - 2] + (states[i - 2] + states[i - 1] * 4.0 + states[i])
                       * (dt / 3.0))
        else:
            acc.append(acc[i - 1] + (states[i - 1] + states[i]) * (dt / 2.0))
    return acc
