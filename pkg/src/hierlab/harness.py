"""Experiment orchestration, reporting, and persistence.

Every run is driven by one ExperimentConfig (defaults, optionally overlaid
with an INI file and flag overrides), draws all randomness from one seeded
generator, and emits a fixed-schema CSV plus a JSON manifest that echoes the
configuration.  Identical config and seed give bit-identical CSV output;
ladder entries are executed in a fixed order for that reason.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .budget import default_budget
from .definetti import (Mixture, energy_functional_mixture, flow_mixture,
                        gwp_window_chain, random_mixture)
from .grid import Field, GridSpec, make_grid, random_low_mode_field
from .hierarchy_evolution import (EvolutionConfig, HierarchyTrajectory,
                                  bbgky_evolve, duhamel_iterate,
                                  free_flow_series, gp_evolve, gp_residual,
                                  k_schedule, picard_fixed_point)
from .interactions import (PROFILES, PotentialSpec, bbgky_main_level,
                           bbgky_rhs, collision_fourier_oracle, gp_collision,
                           gp_collision_sum, realize_potential,
                           bbgky_collision_main)
from .marginals import (HierarchyState, admissibility_defect, factorized_state,
                        hierarchy_norm, mixture_marginal, mixture_state,
                        free_propagate_marginal, psd_defect,
                        random_hermitian_marginal, sobolev_norm)
from .nbody import extract_marginal, factorized_state as nbody_factorized, \
    nbody_evolve, energy_moment, symmetry_defect
from .storage import write_marginal


@dataclass
class ExperimentConfig:
    dim: int = 1
    n: int = 16
    box_length: float = 2.0 * np.pi
    profile: str = "gaussian"
    profile_width: float = 0.6
    beta: float = 0.2
    big_n: int = 16
    ladder: tuple[int, ...] = (2, 3, 4, 5)
    collision_ladder: tuple[int, ...] = (4, 16, 64, 256)
    b1: float = 2.0
    k_max: int = 2
    xi: float = 0.5
    xi_prime: float = 0.7
    xi1: float = 0.3
    dt: float = 1e-3
    t_final: float = 0.1
    k_marginals: int = 2
    m_max: int = 2
    windows: int = 1
    atoms: int = 3
    j_max: int = 2
    seed: int = 7
    outdir: str = "out"

    def __post_init__(self):
        if not 0 < self.xi1 < self.xi < self.xi_prime < 1:
            raise ValueError("weights must satisfy 0 < xi1 < xi < xi_prime < 1")

    @classmethod
    def from_ini(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        """Load `key = value` sections; any section name is accepted and keys
        map to config fields with dashes normalized to underscores."""
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        values: dict = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                values[key.replace("-", "_")] = raw
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in values or values[f.name] is None:
                continue
            raw = values[f.name]
            if isinstance(raw, str) and f.type in ("tuple[int, ...]",):
                kwargs[f.name] = tuple(int(x) for x in raw.replace(",", " ").split())
            elif isinstance(raw, str):
                py_type = {"int": int, "float": float, "str": str}.get(f.type)
                kwargs[f.name] = py_type(raw) if py_type else raw
            elif f.type == "tuple[int, ...]":
                kwargs[f.name] = tuple(int(x) for x in raw)
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)

    def grid(self) -> GridSpec:
        return make_grid(self.dim, self.n, self.box_length)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def profile_field(self, grid: GridSpec | None = None) -> Field:
        """Built-in profile by name, or a rank-1 field loaded from a tensor
        file when the name ends in .hlab."""
        grid = grid or self.grid()
        if self.profile.endswith(".hlab"):
            from .storage import read_field
            field, _ = read_field(self.profile)
            if field.grid != grid or field.rank != 1:
                raise ValueError(f"profile file {self.profile} does not match "
                                 f"the configured grid")
            return field
        return PROFILES[self.profile](grid, self.profile_width)

    def potential(self, big_n: int | None = None,
                  grid: GridSpec | None = None) -> PotentialSpec:
        return realize_potential(self.profile_field(grid), self.beta,
                                 big_n or self.big_n, width=self.profile_width)


CSV_HEADER = "experiment,id,N,K,t,metric,value"


class Report:
    """Accumulates fixed-schema rows: experiment,id,N,K,t,metric,value."""

    def __init__(self):
        self.rows: list[tuple] = []

    def add(self, experiment: str, metric: str, value, N=None, K=None, t=None):
        self.rows.append((experiment, len(self.rows), N, K, t, metric, value))

    @staticmethod
    def _fmt(v) -> str:
        if v is None:
            return ""
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return f"{float(v):.17g}"

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for exp, rid, N, K, t, metric, value in self.rows:
            lines.append(",".join([exp, str(rid), self._fmt(N), self._fmt(K),
                                   self._fmt(t), metric, self._fmt(value)]))
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path


def write_manifest(path: str | Path, cfg: ExperimentConfig, experiment: str,
                   extra: dict | None = None) -> Path:
    budget = default_budget()
    manifest = {
        "experiment": experiment,
        "config": dataclasses.asdict(cfg),
        "versions": {"hierlab": __version__, "numpy": np.__version__},
        "budget": {"max_elements": budget.max_elements,
                   "max_eig_rows": budget.max_eig_rows},
    }
    if extra:
        manifest["results"] = extra
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return path


def smooth_unit_field(grid: GridSpec, rng: np.random.Generator,
                      max_mode: int = 2) -> Field:
    return random_low_mode_field(grid, 1, rng, max_mode=max_mode)


# ---------------------------------------------------------------------------
# Experiments


def run_convergence(cfg: ExperimentConfig) -> tuple[Report, dict]:
    """Ladder over N: evolve the N-body system and the contact hierarchy from
    the same factorized data, then report weighted-norm distances between the
    extracted marginal stack and the hierarchy, and between the two collision
    terms."""
    grid = cfg.grid()
    rng = cfg.rng()
    phi0 = smooth_unit_field(grid, rng)
    mixture = Mixture([(1.0, phi0)])
    report = Report()
    n_steps = int(round(cfg.t_final / cfg.dt))
    stride = max(1, n_steps // 2)
    for big_n in cfg.ladder:
        pot = cfg.potential(big_n, grid)
        K = k_schedule(big_n, cfg.b1, cap=min(cfg.k_max, big_n))
        nstate = nbody_factorized(phi0, big_n, pot)
        ntraj = nbody_evolve(nstate, cfg.dt, cfg.t_final, store_every=stride)
        evo = EvolutionConfig(dt=cfg.dt, t_final=cfg.t_final,
                              closure="mixture_closure", K=K,
                              xi=cfg.xi, xi_prime=cfg.xi_prime)
        gtraj = gp_evolve(factorized_state(phi0, K, xi=cfg.xi), evo,
                          kappa0=pot.kappa0, mixture=mixture,
                          store_every=stride)
        gp_at = {round(t / cfg.dt): s for t, s in zip(gtraj.times, gtraj.states)}
        for t, psi in ntraj.snapshots:
            step = round(t / cfg.dt)
            if step == 0 or step not in gp_at:
                continue
            extracted = HierarchyState(
                [extract_marginal(psi, k) for k in range(1, K + 1)], cfg.xi)
            gp_state = gp_at[step]
            dist = hierarchy_norm(extracted - gp_state, 1.0)
            report.add("convergence", "hierarchy_h1_distance", dist,
                       N=big_n, K=K, t=t)
            coll = bbgky_rhs(extracted, pot) - gp_collision_sum(gp_state, pot.kappa0)
            report.add("convergence", "collision_h1_distance",
                       hierarchy_norm(coll, 1.0), N=big_n, K=K, t=t)
    return report, {}


def run_conservation(cfg: ExperimentConfig) -> tuple[Report, dict]:
    """Mixture battery: functional drift, positivity and admissibility
    transport, and the weighted-norm bound, optionally chained over windows."""
    grid = cfg.grid()
    rng = cfg.rng()
    mix = random_mixture(grid, cfg.atoms, rng, max_mode=2)
    report = Report()

    for m in range(1, cfg.m_max + 1):
        at0 = energy_functional_mixture(mix, m)
        flowed = flow_mixture(mix, cfg.t_final, cfg.dt)
        at1 = energy_functional_mixture(flowed, m)
        report.add("conservation", f"functional_m{m}_drift",
                   abs(at1 - at0) / max(1.0, abs(at0)), t=cfg.t_final)

    samples = 5
    for i in range(1, samples + 1):
        t = cfg.t_final * i / samples
        flowed = flow_mixture(mix, t, cfg.dt)
        for k in (1, 2):
            report.add("conservation", f"psd_defect_k{k}",
                       psd_defect(mixture_marginal(flowed, k)), K=k, t=t)

    state0 = mixture_state(mix, 2, xi=cfg.xi1)
    report.add("conservation", "admissibility_defect_t0",
               max(admissibility_defect(state0)), t=0.0)
    flowed = flow_mixture(mix, cfg.t_final, cfg.dt)
    report.add("conservation", "admissibility_defect",
               max(admissibility_defect(mixture_state(flowed, 2, xi=cfg.xi1))),
               t=cfg.t_final)

    bound = hierarchy_norm(HierarchyState(state0.entries, cfg.xi_prime), 1.0,
                           flavor="trace")
    h1 = hierarchy_norm(mixture_state(flowed, 2, xi=cfg.xi1), 1.0)
    report.add("conservation", "h1_norm_flowed", h1, t=cfg.t_final)
    report.add("conservation", "trace_norm_bound", bound, t=0.0)
    report.add("conservation", "norm_bound_satisfied", h1 <= bound + 1e-9,
               t=cfg.t_final)

    chain = None
    if cfg.windows >= 1:
        chain = gwp_window_chain(mix, window=cfg.t_final, windows=cfg.windows,
                                 K=2, xi=cfg.xi, xi_prime=cfg.xi_prime,
                                 dt=cfg.dt)
        for row in chain["rows"]:
            report.add("conservation", "window_h1_norm", row["h1_norm"],
                       t=row["t_end"])
            report.add("conservation", "window_within_bound",
                       row["within_bound"], t=row["t_end"])
    return report, {"window_chain_passed": None if chain is None else chain["passed"]}


def run_collision_limit(cfg: ExperimentConfig) -> tuple[Report, dict]:
    """Distance of the weighted finite-N plus-main operator from the contact
    target along the potential ladder, plus momentum-domain oracle agreement."""
    grid = cfg.grid()
    rng = cfg.rng()
    phi = smooth_unit_field(grid, rng, max_mode=1)
    gamma2 = mixture_marginal([(1.0, phi)], 2)
    target_plus = gp_collision(gamma2, 1, "+")
    report = Report()
    for big_n in cfg.collision_ladder:
        pot = cfg.potential(big_n, grid)
        lhs = bbgky_main_level(gamma2, pot, weighted=True, plus_only=True)
        dist = sobolev_norm(lhs - target_plus * pot.kappa0, 0.0)
        report.add("collision_limit", "main_minus_contact_hs", dist, N=big_n)
        for t in (0.0, 0.1):
            spatial = bbgky_collision_main(free_propagate_marginal(gamma2, t),
                                           1, "+", pot)
            oracle = collision_fourier_oracle(gamma2, t, pot)
            rel = sobolev_norm(oracle - spatial, 0.0) / max(sobolev_norm(spatial, 0.0), 1e-300)
            report.add("collision_limit", "fourier_oracle_rel_err", rel,
                       N=big_n, t=t)
    return report, {}


def run_duhamel_check(cfg: ExperimentConfig) -> tuple[Report, dict]:
    """Norms of the nested collision integrals over a doubling horizon ladder
    and the fitted growth exponent per depth."""
    grid = cfg.grid()
    rng = cfg.rng()
    phi = smooth_unit_field(grid, rng)
    pot = cfg.potential(grid=grid)
    levels = 1 + cfg.j_max
    base = factorized_state(phi, levels, xi=cfg.xi)
    report = Report()
    fitted = {}
    horizons = (0.01, 0.02, 0.04)
    for j in range(1, cfg.j_max + 1):
        norms = []
        for T in horizons:
            series = free_flow_series(base, T / 16.0, 16)
            val = duhamel_iterate(series, j, pot, T)
            norms.append(hierarchy_norm(val, 1.0))
            report.add("duhamel", f"duh{j}_h1_norm", norms[-1], t=T)
        slope = float(np.polyfit(np.log(horizons), np.log(norms), 1)[0])
        fitted[j] = slope
        report.add("duhamel", f"duh{j}_fitted_exponent", slope)
    return report, {"fitted_exponents": fitted}


def run_picard(cfg: ExperimentConfig) -> tuple[Report, dict]:
    """Fixed point of the collision integral equation on a horizon inside the
    contraction gate; reports convergence, ratio, and the independent-quadrature
    residual."""
    grid = cfg.grid()
    rng = cfg.rng()
    pot = cfg.potential(grid=grid)
    evo = EvolutionConfig(dt=cfg.dt, t_final=cfg.t_final, K=2,
                          xi=cfg.xi, xi_prime=cfg.xi_prime)
    horizon = evo.t0_gate() / 4.0
    steps = 128
    entries = [random_hermitian_marginal(grid, k, rng, max_mode=2, symmetric=True)
               for k in (1, 2)]
    base = HierarchyState(entries, cfg.xi)
    series = free_flow_series(base, horizon / steps, steps)
    result = picard_fixed_point(series, pot, evo)
    report = Report()
    report.add("picard", "iterations", result.iterations, N=pot.big_n, t=horizon)
    report.add("picard", "converged", result.converged, N=pot.big_n, t=horizon)
    if result.contraction_ratios:
        report.add("picard", "last_contraction_ratio",
                   result.contraction_ratios[-1], N=pot.big_n, t=horizon)
    report.add("picard", "final_update", result.update_norms[-1],
               N=pot.big_n, t=horizon)
    report.add("picard", "residual", result.residual, N=pot.big_n, t=horizon)
    return report, {"converged": result.converged, "residual": result.residual}


# ---------------------------------------------------------------------------
# Simulation commands with tensor dumps


def _dump_trajectory(traj: HierarchyTrajectory, outdir: Path, prefix: str) -> list[str]:
    files = []
    for idx, (step, state) in enumerate(zip(traj.stored_steps, traj.states)):
        for k in range(1, state.K + 1):
            name = f"{prefix}_k{k}_step{step:05d}.hlab"
            write_marginal(outdir / name, state.grid, k, state.entry(k).kernel)
            files.append(name)
    return files


def run_simulate_gp(cfg: ExperimentConfig) -> tuple[Report, dict]:
    grid = cfg.grid()
    rng = cfg.rng()
    phi = smooth_unit_field(grid, rng)
    mixture = Mixture([(1.0, phi)])
    state0 = factorized_state(phi, cfg.k_max, xi=cfg.xi)
    evo = EvolutionConfig(dt=cfg.dt, t_final=cfg.t_final,
                          closure="mixture_closure", K=cfg.k_max,
                          xi=cfg.xi, xi_prime=cfg.xi_prime)
    traj = gp_evolve(state0, evo, kappa0=1.0, mixture=mixture, store_every=1,
                     log_collision_norms=True)
    report = Report()
    for k, vals in traj.traces.items():
        report.add("simulate_gp", f"trace_drift_k{k}",
                   float(np.max(np.abs(vals - vals[0]))), K=k, t=cfg.t_final)
    for k, vals in traj.collision_h1.items():
        report.add("simulate_gp", f"collision_h1_max_k{k}",
                   float(np.max(vals)) if len(vals) else 0.0, K=k)
    residual = gp_residual(traj) if len(traj.states) >= 3 else {}
    for k, vals in residual.items():
        report.add("simulate_gp", f"residual_max_k{k}", float(np.max(vals)), K=k)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = _dump_trajectory(traj, outdir, "gp")
    extra = {"files": files,
             "traces": {k: v.tolist() for k, v in traj.traces.items()},
             "hs_norms": {k: v.tolist() for k, v in traj.hs_norms.items()},
             "residual_max": {k: float(np.max(v)) for k, v in residual.items()}}
    return report, extra


def run_simulate_bbgky(cfg: ExperimentConfig) -> tuple[Report, dict]:
    grid = cfg.grid()
    rng = cfg.rng()
    phi = smooth_unit_field(grid, rng)
    pot = cfg.potential(grid=grid)
    K = min(cfg.k_max, pot.big_n)
    state0 = factorized_state(phi, K, xi=cfg.xi)
    evo = EvolutionConfig(dt=cfg.dt, t_final=cfg.t_final, K=K,
                          xi=cfg.xi, xi_prime=cfg.xi_prime)
    traj = bbgky_evolve(state0, evo, pot, store_every=1,
                        log_collision_norms=True)
    report = Report()
    for k, vals in traj.traces.items():
        report.add("simulate_bbgky", f"trace_drift_k{k}",
                   float(np.max(np.abs(vals - vals[0]))), N=pot.big_n, K=k,
                   t=cfg.t_final)
    for k, vals in traj.collision_h1.items():
        report.add("simulate_bbgky", f"collision_h1_max_k{k}",
                   float(np.max(vals)) if len(vals) else 0.0, N=pot.big_n, K=k)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = _dump_trajectory(traj, outdir, "bbgky")
    extra = {"files": files,
             "traces": {k: v.tolist() for k, v in traj.traces.items()},
             "hs_norms": {k: v.tolist() for k, v in traj.hs_norms.items()}}
    return report, extra


def run_simulate_nbody(cfg: ExperimentConfig) -> tuple[Report, dict]:
    grid = cfg.grid()
    rng = cfg.rng()
    phi = smooth_unit_field(grid, rng)
    pot = cfg.potential(grid=grid)
    state = nbody_factorized(phi, cfg.big_n, pot)
    moments0 = {k: energy_moment(state, k) for k in (1, 2)}
    n_steps = int(round(cfg.t_final / cfg.dt))
    traj = nbody_evolve(state, cfg.dt, cfg.t_final,
                        store_every=max(1, n_steps // 4))
    final = traj.final()
    report = Report()
    report.add("simulate_nbody", "norm_drift",
               float(np.max(np.abs(traj.norms - traj.norms[0]))),
               N=cfg.big_n, t=cfg.t_final)
    final_state = type(state)(grid, cfg.big_n, final, pot)
    moments1 = {k: energy_moment(final_state, k) for k in (1, 2)}
    for k in (1, 2):
        report.add("simulate_nbody", f"moment{k}_drift",
                   abs(moments1[k] - moments0[k]) / max(1.0, abs(moments0[k])),
                   N=cfg.big_n, t=cfg.t_final)
    report.add("simulate_nbody", "symmetry_defect", symmetry_defect(final),
               N=cfg.big_n, t=cfg.t_final)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(1, cfg.k_marginals + 1):
        gamma = extract_marginal(final, k)
        name = f"nbody_k{k}_final.hlab"
        write_marginal(outdir / name, grid, k, gamma.kernel)
        files.append(name)
        report.add("simulate_nbody", f"marginal_trace_k{k}",
                   float(np.real(np.trace(gamma.as_matrix())
                                 * grid.h ** (grid.dim * k))), N=cfg.big_n, K=k)
    extra = {"files": files, "moments_initial": moments0,
             "moments_final": moments1}
    return report, extra


EXPERIMENTS = {
    "convergence": run_convergence,
    "conservation": run_conservation,
    "collision-limit": run_collision_limit,
    "duhamel-check": run_duhamel_check,
    "picard": run_picard,
    "simulate-gp": run_simulate_gp,
    "simulate-bbgky": run_simulate_bbgky,
    "simulate-nbody": run_simulate_nbody,
}


def run_experiment(name: str, cfg: ExperimentConfig) -> tuple[Path, Path]:
    """Run one named experiment and write CSV + manifest into the outdir."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}")
    report, extra = EXPERIMENTS[name](cfg)
    outdir = Path(cfg.outdir)
    stem = name.replace("-", "_")
    csv_path = report.write_csv(outdir / f"{stem}.csv")
    manifest_path = write_manifest(outdir / f"{stem}_manifest.json", cfg, name,
                                   extra)
    return csv_path, manifest_path
