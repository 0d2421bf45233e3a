"""Batch experiment harness: config files, data synthesis, experiment
dispatch, CSV emission, and reproducibility bookkeeping.

Config files are flat INI: one section per module, every key validated
against the schema below, unknown keys rejected.  The resolved config (with
defaults filled in) is what gets hashed and echoed, so runs are joinable
across machines.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import multiprocessing
import os
import platform
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .heat import HeatProblem, synth_observation, truncated_posterior
from .inference import (
    ChainSettings,
    Posterior,
    gaussian_convergence_study,
    marginal_comparison,
    run_chain,
)
from .measures import (
    DiscreteMeasure,
    GaussianMeasure,
    check_metric_relation,
    moment_difference_bound,
    sample_gaussian,
)
from .navier_stokes import (
    NSProblem,
    EulerianData,
    eulerian_forward,
    eulerian_potential,
    ns_solve_galerkin,
    synth_eulerian_data,
)
from .spectral import Geometry, SpectralField, extend, sobolev_norm
from .stokes import (
    SPECTRAL,
    LagrangianData,
    StokesProblem,
    TracerEnsemble,
    lagrangian_forward,
    lagrangian_potential,
    synth_lagrangian_data,
)

CSV_HEADER = "experiment,config_hash,N,dt,interp,distance,mean_gap,cov_gap,acceptance,ess,wall_s"
SAMPLES_HEADER = "experiment,config_hash,N,dt,interp,functional,step,value"
RECORDED_FUNCTIONAL = "re_u01"  # Re of the amplitude at wavevector (0, 1)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


class ConfigError(ValueError):
    """Config file failed validation."""


def _ints(s):
    return [int(tok) for tok in str(s).split()]


def _floats(s):
    return [float(tok) for tok in str(s).split()]


# schema: section -> key -> (parser, default); None default means required
_COMMON = {
    "experiment": {
        "kind": (str, None),
        "seed": (int, 20260809),
        "out": (str, ""),
        "workers": (int, 1),
    },
    "prior": {"beta": (float, 400.0), "alpha": (float, 2.0)},
}

_SCHEMAS = {
    "heat-rate": {
        **_COMMON,
        "heat": {
            "resolution": (int, 64),
            "dim": (int, 1),
            "t_obs": (float, 0.1),
            "delta": (float, 0.01),
            "gamma": (float, 1.0),
            "cutoffs": (_ints, [2, 4, 6, 8, 10]),
            "reference_cutoff": (int, 64),
            "beta": (float, 1.0),
            "alpha": (float, 2.0),
        },
    },
    "stokes-lagrangian": {
        **_COMMON,
        "stokes": {
            "viscosity": (float, 0.05),
            "t_obs": (float, 0.1),
            "n_tracers": (int, 9),
            "noise_std": (float, 0.01),
            "mode_counts": (_ints, [16, 64, 144]),
            "reference_modes": (int, 256),
            "data_modes": (int, 400),
            "data_dt": (float, 5e-4),
            "dt": (float, 4e-3),
            "dt_list": (_floats, []),
            "modes": (int, 64),
            "interp": (str, "bilinear"),
        },
        "mcmc": {
            "steps": (int, 100_000),
            "burn_in_fraction": (float, 0.2),
            "beta_pcn": (float, 0.1),
        },
    },
    "ns-eulerian": {
        **_COMMON,
        "ns": {
            "viscosity": (float, 0.02),
            "t_obs": (float, 0.1),
            "chain_dt": (float, 2e-3),
            "data_dt": (float, 5e-4),
            "data_cutoff": (int, 64),
            "cutoffs": (_ints, [8, 16, 32]),
            "gap_draws": (int, 10),
            "gap_dt": (float, 1e-3),
            "noise_std": (float, 0.02),
        },
        "mcmc": {
            "steps": (int, 10_000),
            "burn_in_fraction": (float, 0.2),
            "beta_pcn": (float, 0.02),
        },
    },
    "metric-props": {
        **_COMMON,
        "metric": {"trials": (int, 1000)},
    },
}
# synth reuses the target experiments' sections plus its own
_SCHEMAS["synth"] = {
    **_SCHEMAS["heat-rate"],
    **_SCHEMAS["stokes-lagrangian"],
    **_SCHEMAS["ns-eulerian"],
    "synth": {"target": (str, "stokes-lagrangian"), "noise_std": (float, -1.0)},
}

NS_OBS_POINTS = np.array([[x, y] for x in (0.15, 0.45, 0.8) for y in (0.2, 0.55, 0.9)])


@dataclass
class ExperimentConfig:
    kind: str
    values: dict  # "section.key" -> parsed value
    source_path: str = ""

    def __getitem__(self, dotted: str):
        return self.values[dotted]

    @property
    def seed(self) -> int:
        return self.values["experiment.seed"]

    @property
    def out_dir(self) -> str:
        return self.values["experiment.out"] or f"runs/{self.kind}"

    @property
    def workers(self) -> int:
        return max(1, self.values["experiment.workers"])

    def canonical_text(self, skip: tuple = ()) -> str:
        buf = io.StringIO()
        section = None
        for dotted in sorted(self.values):
            if dotted in skip:
                continue
            sec, key = dotted.split(".", 1)
            if sec != section:
                if section is not None:
                    buf.write("\n")
                buf.write(f"[{sec}]\n")
                section = sec
            buf.write(f"{key} = {_fmt_value(self.values[dotted])}\n")
        return buf.getvalue()

    @property
    def config_hash(self) -> str:
        # output path and pool size do not affect results, so they do not
        # affect identity either
        text = self.canonical_text(skip=("experiment.out", "experiment.workers"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, list):
        return " ".join(_fmt_value(x) for x in v)
    return str(v)


def parse_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    """Read and validate an INI config; unknown sections or keys are errors.

    ``overrides`` maps "section.key" to raw strings (CLI flags, env vars);
    they participate in validation and in the resolved hash.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path}: {e}") from None

    raw = {}
    for sec in cp.sections():
        for key, val in cp.items(sec):
            raw[f"{sec}.{key}"] = val
    for dotted, val in (overrides or {}).items():
        raw[dotted] = val

    kind = raw.get("experiment.kind")
    if kind not in _SCHEMAS:
        raise ConfigError(
            f"experiment.kind must be one of {sorted(_SCHEMAS)}, got {kind!r}"
        )
    schema = _SCHEMAS[kind]
    values = {}
    for dotted, rawval in raw.items():
        sec, key = dotted.split(".", 1)
        if sec not in schema or key not in schema[sec]:
            raise ConfigError(f"unknown config key [{sec}] {key} for kind {kind}")
        parser, _ = schema[sec][key]
        try:
            values[dotted] = parser(rawval) if parser is not str else str(rawval)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for [{sec}] {key}: {rawval!r} ({e})") from None
    for sec, keys in schema.items():
        for key, (parser, default) in keys.items():
            dotted = f"{sec}.{key}"
            if dotted not in values:
                if default is None:
                    raise ConfigError(f"missing required config key [{sec}] {key}")
                values[dotted] = default
    if int(values["experiment.seed"]) < 0:
        raise ConfigError("seed must be nonnegative")
    return ExperimentConfig(kind, values, source_path=path)


def cutoff_from_modes(modes: int) -> int:
    """Translate a grid-point style mode count (16, 64, 144, ...) into the
    largest fully resolved wavenumber of the matching square grid."""
    m = int(round(np.sqrt(modes)))
    if m * m != modes or m < 4 or m % 2:
        raise ConfigError(f"mode count {modes} is not an even square >= 16")
    return (m - 1) // 2


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _fmt_csv(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def rows_to_csv(rows: list[dict], header: str = CSV_HEADER) -> str:
    cols = header.split(",")
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt_csv(row.get(c)) for c in cols))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# experiment implementations
# ---------------------------------------------------------------------------


def _heat_problem(cfg: ExperimentConfig) -> HeatProblem:
    return HeatProblem.default(
        resolution=cfg["heat.resolution"],
        dim=cfg["heat.dim"],
        t_obs=cfg["heat.t_obs"],
        beta=cfg["heat.beta"],
        alpha=cfg["heat.alpha"],
        delta=cfg["heat.delta"],
        gamma=cfg["heat.gamma"],
    )


def heat_rate_experiment(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    p = _heat_problem(cfg)
    rng = _rng(cfg.seed, 1)
    u_true = sample_gaussian(p.prior, rng)
    data = synth_observation(p, u_true, rng)
    ref = cfg["heat.reference_cutoff"]
    study = gaussian_convergence_study(
        lambda n: truncated_posterior(p, data, n), cfg["heat.cutoffs"], ref
    )
    rows = []
    for r in study:
        t0 = time.perf_counter()
        rows.append(
            {
                "experiment": "heat-rate",
                "config_hash": cfg.config_hash,
                "N": r.n,
                "distance": r.distance,
                "mean_gap": r.mean_gap,
                "cov_gap": r.cov_gap,
                "wall_s": time.perf_counter() - t0,
            }
        )
    return rows, {}


def _stokes_problem(cfg: ExperimentConfig, cutoff: int) -> StokesProblem:
    g = Geometry.torus2d(cutoff)
    return StokesProblem(g, viscosity=cfg["stokes.viscosity"], t_max=1.0)


def _stokes_data(cfg: ExperimentConfig) -> tuple[TracerEnsemble, LagrangianData]:
    rng = _rng(cfg.seed, 1)
    cut = cutoff_from_modes(cfg["stokes.data_modes"])
    g = Geometry.torus2d(cut)
    prior = GaussianMeasure.power_law(g, cfg["prior.beta"], cfg["prior.alpha"])
    u_true = sample_gaussian(prior, rng)
    ens = TracerEnsemble.lattice(cfg["stokes.n_tracers"], [cfg["stokes.t_obs"]])
    data = synth_lagrangian_data(
        _stokes_problem(cfg, cut),
        u_true,
        ens,
        dt=cfg["stokes.data_dt"],
        noise_std=cfg["stokes.noise_std"],
        rng=rng,
        order=SPECTRAL,
    )
    return ens, data


def _chain_task(task: dict) -> dict:
    """Run one level's chain (picklable worker for the process pool)."""
    cfg = ExperimentConfig(task["kind"], task["values"])
    cutoff = task["cutoff"]
    g = Geometry.torus2d(cutoff)
    prior = GaussianMeasure.power_law(g, cfg["prior.beta"], cfg["prior.alpha"])
    if task["family"] == "stokes":
        ens = TracerEnsemble(np.array(task["z0"]), np.array(task["obs_times"]))
        data = LagrangianData(np.array(task["y"]), task["noise_var"])
        problem = _stokes_problem(cfg, cutoff)
        dt = task["dt"]
        order = cfg["stokes.interp"]
        grid = 2 * cutoff + 2

        def potential(u):
            return lagrangian_potential(problem, u, data, ens, dt, order=order, grid_size=grid)

    else:
        data = EulerianData(np.array(task["y"]), task["noise_var"])
        problem = NSProblem(
            g,
            viscosity=cfg["ns.viscosity"],
            cutoff=cutoff,
            dt=task["dt"],
            t_obs=cfg["ns.t_obs"],
            obs_points=NS_OBS_POINTS,
        )

        def potential(u):
            return eulerian_potential(problem, u, data)

    post = Posterior(prior, potential, check_draws=0)
    settings = ChainSettings(
        steps=cfg["mcmc.steps"],
        burn_in_fraction=cfg["mcmc.burn_in_fraction"],
        beta_pcn=cfg["mcmc.beta_pcn"],
    )
    t0 = time.perf_counter()
    rec = run_chain(
        post,
        settings.steps,
        settings.burn_in,
        settings.beta_pcn,
        {RECORDED_FUNCTIONAL: lambda u: float(u.coeffs[0].real)},
        _rng(task["seed"], 7),
        proposal_dim=task["proposal_dim"],
    )
    rec.seed_info = f"seed={task['seed']}"
    kept = rec.kept(RECORDED_FUNCTIONAL)
    return {
        "label": task["label"],
        "kept": kept,
        "acceptance": rec.acceptance_rate,
        "ess": rec.ess(RECORDED_FUNCTIONAL),
        "wall_s": time.perf_counter() - t0,
    }


def _run_levels(tasks: list[dict], workers: int) -> list[dict]:
    if workers > 1:
        with multiprocessing.get_context("fork").Pool(min(workers, len(tasks))) as pool:
            return pool.map(_chain_task, tasks)
    return [_chain_task(t) for t in tasks]


def _sample_rows(cfg, results, level_meta, stride_target=20_000):
    rows = []
    for res in results:
        meta = level_meta[res["label"]]
        kept = res["kept"]
        stride = max(1, len(kept) // stride_target)
        for i in range(0, len(kept), stride):
            rows.append(
                {
                    "experiment": cfg.kind,
                    "config_hash": cfg.config_hash,
                    "N": meta["N"],
                    "dt": meta["dt"],
                    "interp": meta["interp"],
                    "functional": RECORDED_FUNCTIONAL,
                    "step": i,
                    "value": kept[i],
                }
            )
    return rows


def stokes_lagrangian_experiment(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    ens, data = _stokes_data(cfg)
    dt_list = cfg["stokes.dt_list"]
    interp = cfg["stokes.interp"]
    tasks, level_meta = [], {}

    if dt_list:
        # timestep refinement at one fixed mode count (coarse to fine)
        cut = cutoff_from_modes(cfg["stokes.modes"])
        levels = sorted(dt_list, reverse=True)
        proposal_dim = 2 * Geometry.torus2d(cut).n_modes
        for dt in levels:
            label = f"dt={dt:.17g}"
            level_meta[label] = {"N": cfg["stokes.modes"], "dt": dt, "interp": interp}
            tasks.append(
                {
                    "kind": cfg.kind,
                    "values": cfg.values,
                    "family": "stokes",
                    "label": label,
                    "cutoff": cut,
                    "dt": dt,
                    "z0": ens.z0.tolist(),
                    "obs_times": ens.obs_times.tolist(),
                    "y": data.y.tolist(),
                    "noise_var": data.noise_var,
                    "seed": cfg.seed,
                    "proposal_dim": proposal_dim,
                }
            )
        pair_labels = list(zip(levels, levels[1:]))
    else:
        mode_counts = cfg["stokes.mode_counts"]
        ref_modes = cfg["stokes.reference_modes"]
        levels = list(mode_counts) + [ref_modes]
        proposal_dim = 2 * Geometry.torus2d(max(cutoff_from_modes(m) for m in levels)).n_modes
        for m in levels:
            label = f"modes={m}"
            level_meta[label] = {"N": m, "dt": cfg["stokes.dt"], "interp": interp}
            tasks.append(
                {
                    "kind": cfg.kind,
                    "values": cfg.values,
                    "family": "stokes",
                    "label": label,
                    "cutoff": cutoff_from_modes(m),
                    "dt": cfg["stokes.dt"],
                    "z0": ens.z0.tolist(),
                    "obs_times": ens.obs_times.tolist(),
                    "y": data.y.tolist(),
                    "noise_var": data.noise_var,
                    "seed": cfg.seed,
                    "proposal_dim": proposal_dim,
                }
            )
        pair_labels = [(m, ref_modes) for m in mode_counts]

    results = {r["label"]: r for r in _run_levels(tasks, cfg.workers)}
    rows = []
    for a, b in pair_labels:
        la = f"dt={a:.17g}" if dt_list else f"modes={a}"
        lb = f"dt={b:.17g}" if dt_list else f"modes={b}"
        d, gap, cov_gap, _ = marginal_comparison(results[la]["kept"], results[lb]["kept"])
        meta = level_meta[la]
        rows.append(
            {
                "experiment": cfg.kind,
                "config_hash": cfg.config_hash,
                "N": meta["N"],
                "dt": meta["dt"],
                "interp": meta["interp"],
                "distance": d,
                "mean_gap": gap,
                "cov_gap": cov_gap,
                "acceptance": results[la]["acceptance"],
                "ess": results[la]["ess"],
                "wall_s": results[la]["wall_s"],
            }
        )
    artifacts = {
        "samples.csv": rows_to_csv(
            _sample_rows(cfg, list(results.values()), level_meta), SAMPLES_HEADER
        )
    }
    return rows, artifacts


def _ns_data(cfg: ExperimentConfig) -> EulerianData:
    rng = _rng(cfg.seed, 1)
    cut = cfg["ns.data_cutoff"]
    g = Geometry.torus2d(cut)
    prior = GaussianMeasure.power_law(g, cfg["prior.beta"], cfg["prior.alpha"])
    u_true = sample_gaussian(prior, rng)
    p = NSProblem(
        g,
        viscosity=cfg["ns.viscosity"],
        cutoff=cut,
        dt=cfg["ns.data_dt"],
        t_obs=cfg["ns.t_obs"],
        obs_points=NS_OBS_POINTS,
    )
    return synth_eulerian_data(p, u_true, cfg["ns.noise_std"], rng)


def ns_eulerian_experiment(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    cutoffs = cfg["ns.cutoffs"]
    data = _ns_data(cfg)
    rows = []

    # Galerkin solution gaps ||v^N - v^{2N}|| over prior draws
    res = 2 * max(cutoffs)
    g = Geometry.torus2d(res)
    prior = GaussianMeasure.power_law(g, cfg["prior.beta"], cfg["prior.alpha"])
    rng = _rng(cfg.seed, 2)
    t0 = time.perf_counter()
    gaps = {n: [] for n in cutoffs}
    for _ in range(cfg["ns.gap_draws"]):
        u = sample_gaussian(prior, rng)
        sols = {}
        for n in sorted(set(cutoffs) | {2 * n for n in cutoffs}):
            p = NSProblem(
                g,
                viscosity=cfg["ns.viscosity"],
                cutoff=n,
                dt=cfg["ns.gap_dt"],
                t_obs=cfg["ns.t_obs"],
                obs_points=NS_OBS_POINTS,
            )
            sols[n] = extend(ns_solve_galerkin(p, u), res)
        for n in cutoffs:
            gaps[n].append(sobolev_norm(sols[n] - sols[2 * n]))
    gap_wall = time.perf_counter() - t0
    for n in cutoffs:
        rows.append(
            {
                "experiment": "ns-galerkin",
                "config_hash": cfg.config_hash,
                "N": n,
                "dt": cfg["ns.gap_dt"],
                "distance": float(np.mean(gaps[n])),
                "cov_gap": float(np.max(gaps[n])),
                "wall_s": gap_wall / len(cutoffs),
            }
        )

    # common-seed chains at each cutoff, distances between successive levels
    proposal_dim = 2 * Geometry.torus2d(max(cutoffs)).n_modes
    tasks, level_meta = [], {}
    for n in cutoffs:
        label = f"cutoff={n}"
        level_meta[label] = {"N": n, "dt": cfg["ns.chain_dt"], "interp": ""}
        tasks.append(
            {
                "kind": cfg.kind,
                "values": cfg.values,
                "family": "ns",
                "label": label,
                "cutoff": n,
                "dt": cfg["ns.chain_dt"],
                "y": data.y.tolist(),
                "noise_var": data.noise_var,
                "seed": cfg.seed,
                "proposal_dim": proposal_dim,
            }
        )
    results = {r["label"]: r for r in _run_levels(tasks, cfg.workers)}
    for a, b in zip(cutoffs, cutoffs[1:]):
        la, lb = f"cutoff={a}", f"cutoff={b}"
        d, gap, cov_gap, _ = marginal_comparison(results[la]["kept"], results[lb]["kept"])
        rows.append(
            {
                "experiment": cfg.kind,
                "config_hash": cfg.config_hash,
                "N": a,
                "dt": cfg["ns.chain_dt"],
                "distance": d,
                "mean_gap": gap,
                "cov_gap": cov_gap,
                "acceptance": results[la]["acceptance"],
                "ess": results[la]["ess"],
                "wall_s": results[la]["wall_s"],
            }
        )
    artifacts = {
        "samples.csv": rows_to_csv(
            _sample_rows(cfg, list(results.values()), level_meta), SAMPLES_HEADER
        )
    }
    return rows, artifacts


def metric_props_experiment(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    trials = cfg["metric.trials"]
    rng = _rng(cfg.seed, 1)
    t0 = time.perf_counter()
    relation_violations = 0
    moment_violations = 0
    for _ in range(trials):
        n = int(rng.integers(2, 20))
        p = DiscreteMeasure(rng.dirichlet(np.full(n, 0.5)))
        q = DiscreteMeasure(rng.dirichlet(np.full(n, 0.5)))
        if not check_metric_relation(p, q).passed:
            relation_violations += 1
        f = rng.standard_normal((n, int(rng.integers(1, 4)))) * 2.0
        if not moment_difference_bound(p, q, f).passed:
            moment_violations += 1
    wall = time.perf_counter() - t0
    rows = [
        {
            "experiment": "metric-relation",
            "config_hash": cfg.config_hash,
            "N": trials,
            "distance": relation_violations,
            "wall_s": wall / 2,
        },
        {
            "experiment": "moment-bound",
            "config_hash": cfg.config_hash,
            "N": trials,
            "distance": moment_violations,
            "wall_s": wall / 2,
        },
    ]
    return rows, {}


def synth_experiment(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Twin-experiment dataset: draw the truth from the prior, observe with
    configured noise, write data plus the truth (diagnostics only; the
    inversion experiments never read the truth back)."""
    target = cfg["synth.target"]
    override = cfg["synth.noise_std"]
    rng = _rng(cfg.seed, 1)
    payload = {"target": target, "config_hash": cfg.config_hash, "seed": cfg.seed}
    if target == "heat-rate":
        payload["prior"] = {"beta": cfg["heat.beta"], "alpha": cfg["heat.alpha"], "mean": 0.0}
    else:
        payload["prior"] = {"beta": cfg["prior.beta"], "alpha": cfg["prior.alpha"], "mean": 0.0}
    if target == "stokes-lagrangian":
        cut = cutoff_from_modes(cfg["stokes.data_modes"])
        g = Geometry.torus2d(cut)
        prior = GaussianMeasure.power_law(g, cfg["prior.beta"], cfg["prior.alpha"])
        u_true = sample_gaussian(prior, rng)
        ens = TracerEnsemble.lattice(cfg["stokes.n_tracers"], [cfg["stokes.t_obs"]])
        clean = lagrangian_forward(
            _stokes_problem(cfg, cut), u_true, ens, cfg["stokes.data_dt"], order=SPECTRAL
        )
        noise_std = cfg["stokes.noise_std"] if override < 0 else override
        y = clean + noise_std * rng.standard_normal(clean.shape)
        payload.update(
            {
                "y": y.tolist(),
                "noise_std": noise_std,
                "n_tracers": ens.n_tracers,
                "obs_times": ens.obs_times.tolist(),
                "z0": ens.z0.tolist(),
                "u_true_diagnostic_only": _field_payload(u_true),
            }
        )
    elif target == "ns-eulerian":
        cut = cfg["ns.data_cutoff"]
        g = Geometry.torus2d(cut)
        prior = GaussianMeasure.power_law(g, cfg["prior.beta"], cfg["prior.alpha"])
        u_true = sample_gaussian(prior, rng)
        p = NSProblem(
            g,
            viscosity=cfg["ns.viscosity"],
            cutoff=cut,
            dt=cfg["ns.data_dt"],
            t_obs=cfg["ns.t_obs"],
            obs_points=NS_OBS_POINTS,
        )
        clean = eulerian_forward(p, u_true)
        noise_std = cfg["ns.noise_std"] if override < 0 else override
        y = clean + noise_std * rng.standard_normal(clean.shape)
        payload.update(
            {
                "y": y.tolist(),
                "noise_std": noise_std,
                "obs_points": NS_OBS_POINTS.tolist(),
                "u_true_diagnostic_only": _field_payload(u_true),
            }
        )
    elif target == "heat-rate":
        p = _heat_problem(cfg)
        u_true = sample_gaussian(p.prior, rng)
        noise_std = None if override < 0 else override
        if noise_std is None:
            y = synth_observation(p, u_true, rng).y
        else:
            from .heat import heat_semigroup

            clean = heat_semigroup(u_true, p.t_obs)
            y = SpectralField(p.geometry, clean.coeffs + noise_std * rng.standard_normal(p.geometry.n_modes))
        payload.update(
            {
                "y": y.coeffs.tolist(),
                "u_true_diagnostic_only": _field_payload(u_true),
            }
        )
    else:
        raise ConfigError(f"unknown synth target {target!r}")
    text = json.dumps(payload, sort_keys=True, indent=1)
    return [], {"dataset.json": text + "\n"}


def _field_payload(f: SpectralField):
    if f.geometry.is_torus:
        return [[float(c.real), float(c.imag)] for c in f.coeffs]
    return [float(c) for c in f.coeffs]


_EXPERIMENTS = {
    "heat-rate": heat_rate_experiment,
    "stokes-lagrangian": stokes_lagrangian_experiment,
    "ns-eulerian": ns_eulerian_experiment,
    "metric-props": metric_props_experiment,
    "synth": synth_experiment,
}


def run_experiment(cfg: ExperimentConfig) -> int:
    """Dispatch one experiment; writes config echo, results CSV, run
    manifest (plus per-experiment artifacts) under the output directory."""
    if "BIP_SEED" in os.environ:
        cfg.values["experiment.seed"] = int(os.environ["BIP_SEED"])
    t0 = time.perf_counter()
    rows, artifacts = _EXPERIMENTS[cfg.kind](cfg)
    wall = time.perf_counter() - t0

    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config_echo.ini"), "w") as fh:
        fh.write(cfg.canonical_text())
    if rows:
        with open(os.path.join(out, "results.csv"), "w") as fh:
            fh.write(rows_to_csv(rows))
    for name, text in artifacts.items():
        with open(os.path.join(out, name), "w") as fh:
            fh.write(text)
    manifest = {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "bip": __version__,
        },
        "wall_s": wall,
        "artifacts": sorted(["config_echo.ini"] + (["results.csv"] if rows else []) + list(artifacts)),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return EXIT_OK
