"""Command-line pipeline over file-based artifacts.

Stages: dataset generation, latent training, path simulation, heat-kernel
stack construction, GP fitting, prediction, density profiling, and the
multi-method benchmark.  Every stage derives its randomness from the root
seed, records content hashes of its inputs, and writes CSV/JSON artifacts
with 17-digit floats so reruns are bit-identical.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import SWISS_ROLL_DOMAIN, swiss_roll, swiss_roll_arclength
from .baselines import GlConfig, default_epsilon, gl_kernel
from .bm import SimConfig, analytic_source, save_trajectories, simulate
from .gpr import (
    euclidean_cross,
    fit_euclidean_gp,
    fit_heat_gp,
    fit_summary,
    heat_cross,
    predict,
    rebuild_heat_fit,
)
from .heat import (
    HeatKernelStack,
    NeighborhoodSpec,
    build_stack,
    default_omega,
    heat_kernel_profile_with_errors,
    load_stack,
    save_stack,
)
from .lvm import (
    InitSpec,
    OptimizerSpec,
    calibrate_boundary,
    load_model,
    metric_source,
    save_model,
    train_bgplvm,
    train_gplvm,
)
from .rng import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


# regression functions on the Swiss-roll chart (r, z); the default combines a
# wave of constant period in arc length (nonstationary in any chart that does
# not track the metric) with a slow component that sign-flips between adjacent
# windings (period 4*pi in r), making ambient proximity across the winding gap
# misleading
SWISS_FUNCTIONS = {
    "arc_wave": lambda r, z: np.sin(swiss_roll_arclength(r) / 2.5) + 0.6 * np.sin(r / 2.0),
    "winding_wave": lambda r, z: np.sin(r / 2.0),
    "radial_chirp": lambda r, z: np.sin(r**2 / 8.0),
    "linear": lambda r, z: 0.1 * r + 0.05 * z,
}

DEFAULTS = {
    "seed": 0,
    "output_dir": "runs/swiss",
    "dataset": {
        "kind": "swiss_roll",
        "n_labeled": 24,
        "v_unlabeled": 450,
        "noise": 0.05,
        "function": "arc_wave",
        # tall roll: the vertical coordinate carries the largest variance, so
        # the PCA initialization of the latent model starts with it resolved
        "r_range": [2.0, 10.5],
        "z_range": [0.0, 18.0],
    },
    "lvm": {"kind": "bgplvm", "q": 2, "m": 40, "maxiter": 1500, "tol": 1e-5},
    "bm": {"dt": 0.5, "n_steps": 100, "n_paths": 2000, "max_rejects": 100, "start": None},
    "heat": {"omega": None, "volume_mode": "riemannian"},
    "gp": {"maxiter": 2000, "tol": 1e-5},
    "baselines": {
        "gl_epsilon": None,
        "gl_K": 20,
        "gl_t": 1.0,
        "euclidean_ambient": True,
        "euclidean_latent": True,
    },
    "profile": {"t": 50.0, "n_targets": 29, "start": [7.25, 4.0], "analytic_only": False},
    "benchmark": {"repetitions": 5, "subset_size": 20},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Merged per-stage settings; unknown keys are rejected up front."""

    seed: int
    output_dir: str
    dataset: dict
    lvm: dict
    bm: dict
    heat: dict
    gp: dict
    baselines: dict
    profile: dict
    benchmark: dict

    @classmethod
    def from_dict(cls, given: dict) -> "ExperimentConfig":
        unknown = set(given) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = _deep_merge(DEFAULTS, given)
        return cls(
            seed=int(merged["seed"]),
            output_dir=str(merged["output_dir"]),
            dataset=merged["dataset"],
            lvm=merged["lvm"],
            bm=merged["bm"],
            heat=merged["heat"],
            gp=merged["gp"],
            baselines=merged["baselines"],
            profile=merged["profile"],
            benchmark=merged["benchmark"],
        )

    @classmethod
    def from_args(cls, args) -> "ExperimentConfig":
        given = {}
        if args.config is not None:
            try:
                with open(args.config) as fh:
                    given = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
            if not isinstance(given, dict):
                raise ConfigError("config root must be a JSON object")
        if args.seed is not None:
            given = _deep_merge(given, {"seed": args.seed})
        if args.out is not None:
            given = _deep_merge(given, {"output_dir": args.out})
        return cls.from_dict(given)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)


# ---------------------------------------------------------------------------
# artifact I/O


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(path: str, header: str, rows: np.ndarray) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_csv(path: str, expected_header: str) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != expected_header:
            raise ConfigError(f"{path}: expected header '{expected_header}', found '{header}'")
        body = [line.strip() for line in fh if line.strip()]
    if not body:
        return np.empty((0, len(expected_header.split(","))))
    return np.array([[float(v) for v in line.split(",")] for line in body])


def write_json(path: str, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _check_hash(recorded: dict, path: str) -> None:
    name = os.path.basename(path)
    if name in recorded and recorded[name] != file_sha256(path):
        raise ConfigError(f"{path} changed since the upstream stage ran; rerun it")


# ---------------------------------------------------------------------------
# dataset stage


def _grid_dims(v: int, aspect: float):
    """Factor v into (a, b) grid dimensions with a/b closest to aspect."""
    best = None
    for a in range(1, v + 1):
        if v % a:
            continue
        b = v // a
        score = abs(np.log(a / b / aspect))
        if best is None or score < best[0]:
            best = (score, a, b)
    return best[1], best[2]


def _swiss_function(name: str):
    if name not in SWISS_FUNCTIONS:
        raise ConfigError(f"unknown regression function '{name}'; have {sorted(SWISS_FUNCTIONS)}")
    return SWISS_FUNCTIONS[name]


def cmd_gen_swiss(cfg: ExperimentConfig) -> int:
    ds = cfg.dataset
    if ds.get("kind") != "swiss_roll":
        raise ConfigError("gen-swiss requires dataset.kind = 'swiss_roll'")
    n = int(ds["n_labeled"])
    v = int(ds["v_unlabeled"])
    noise = float(ds["noise"])
    if n < 1 or v < 1 or noise < 0:
        raise ConfigError("need n_labeled >= 1, v_unlabeled >= 1, noise >= 0")
    func = _swiss_function(ds["function"])
    r_range = [float(t) for t in ds["r_range"]]
    z_range = [float(t) for t in ds["z_range"]]
    if not (0 < r_range[0] < r_range[1] and z_range[0] < z_range[1]):
        raise ConfigError("need 0 < r_range[0] < r_range[1] and z_range[0] < z_range[1]")
    lo = np.array([r_range[0], z_range[0]])
    hi = np.array([r_range[1], z_range[1]])
    manifold = swiss_roll(domain=(lo, hi))

    rng = np.random.default_rng(derive_seed(cfg.seed, "dataset"))
    chart_labeled = lo + rng.uniform(size=(n, 2)) * (hi - lo)
    a, b = _grid_dims(v, (hi[0] - lo[0]) / (hi[1] - lo[1]))
    r_axis = lo[0] + (np.arange(a) + 0.5) * (hi[0] - lo[0]) / a
    z_axis = lo[1] + (np.arange(b) + 0.5) * (hi[1] - lo[1]) / b
    rr, zz = np.meshgrid(r_axis, z_axis, indexing="ij")
    chart_unlabeled = np.stack([rr.ravel(), zz.ravel()], axis=1)

    y = func(chart_labeled[:, 0], chart_labeled[:, 1]) + noise * rng.standard_normal(n)
    truth = func(chart_unlabeled[:, 0], chart_unlabeled[:, 1])

    os.makedirs(cfg.output_dir, exist_ok=True)
    amb_l = manifold.embed(chart_labeled)
    amb_u = manifold.embed(chart_unlabeled)
    write_csv(cfg.path("labeled.csv"), "s1,s2,s3,y", np.column_stack([amb_l, y]))
    write_csv(cfg.path("unlabeled.csv"), "s1,s2,s3", amb_u)
    write_csv(cfg.path("truth.csv"), "f", truth[:, None])
    write_csv(
        cfg.path("chart.csv"),
        "r,z,labeled",
        np.column_stack(
            [
                np.vstack([chart_labeled, chart_unlabeled]),
                np.concatenate([np.ones(n), np.zeros(v)]),
            ]
        ),
    )
    write_json(
        cfg.path("gen_meta.json"),
        {
            "kind": "swiss_roll",
            "n_labeled": n,
            "v_unlabeled": v,
            "noise": noise,
            "function": ds["function"],
            "r_range": r_range,
            "z_range": z_range,
            "grid": [a, b],
            "seed": cfg.seed,
            "hashes": {
                name: file_sha256(cfg.path(name))
                for name in ("labeled.csv", "unlabeled.csv", "truth.csv", "chart.csv")
            },
        },
    )
    print(f"wrote {n} labeled and {v} unlabeled points to {cfg.output_dir}")
    return EXIT_OK


def _load_dataset(cfg: ExperimentConfig):
    """Ambient points (labeled stacked above unlabeled), labels, and counts."""
    kind = cfg.dataset.get("kind")
    if kind == "csv":
        paths = cfg.dataset.get("paths", {})
        labeled_path = paths.get("labeled", cfg.path("labeled.csv"))
        unlabeled_path = paths.get("unlabeled", cfg.path("unlabeled.csv"))
    elif kind == "swiss_roll":
        labeled_path = cfg.path("labeled.csv")
        unlabeled_path = cfg.path("unlabeled.csv")
    else:
        raise ConfigError(f"unknown dataset.kind '{kind}'")
    with open(labeled_path) as fh:
        header = fh.readline().strip()
    cols = header.split(",")
    if cols[-1] != "y" or len(cols) < 3:
        raise ConfigError(f"{labeled_path}: expected columns s1..sp,y")
    labeled = read_csv(labeled_path, header)
    unlabeled = read_csv(unlabeled_path, ",".join(cols[:-1]))
    amb = np.vstack([labeled[:, :-1], unlabeled])
    return amb, labeled[:, -1], labeled.shape[0], unlabeled.shape[0], labeled_path, unlabeled_path


def cmd_train_lvm(cfg: ExperimentConfig) -> int:
    amb, _, n, v, labeled_path, unlabeled_path = _load_dataset(cfg)
    kind = cfg.lvm.get("kind")
    q = int(cfg.lvm["q"])
    opt = OptimizerSpec(
        maxiter=int(cfg.lvm["maxiter"]), tol=float(cfg.lvm["tol"]),
        seed=derive_seed(cfg.seed, "lvm"),
    )
    init = InitSpec(seed=derive_seed(cfg.seed, "lvm-init"))
    t0 = time.perf_counter()
    if kind == "bgplvm":
        model = train_bgplvm(amb, q, m=int(cfg.lvm["m"]), init=init, opt=opt)
    elif kind == "gplvm":
        model = train_gplvm(amb, q, init=init, opt=opt)
    else:
        raise ConfigError(f"unknown lvm.kind '{kind}'")
    elapsed = time.perf_counter() - t0
    os.makedirs(cfg.output_dir, exist_ok=True)
    save_model(model, cfg.path("model.json"))
    # timing stays out of the artifact so reruns are bit-identical
    write_json(
        cfg.path("train_meta.json"),
        {
            "kind": kind,
            "q": q,
            "n_labeled": n,
            "v_unlabeled": v,
            "objective_trace_final": model.meta.get("trace", [None])[-1],
            "hashes": {
                os.path.basename(labeled_path): file_sha256(labeled_path),
                os.path.basename(unlabeled_path): file_sha256(unlabeled_path),
                "model.json": file_sha256(cfg.path("model.json")),
            },
        },
    )
    print(f"trained {kind} (q={q}) on {n + v} points in {elapsed:.1f}s")
    return EXIT_OK


def _load_model_checked(cfg: ExperimentConfig):
    amb, y, n, v, labeled_path, unlabeled_path = _load_dataset(cfg)
    meta = read_json(cfg.path("train_meta.json"))
    _check_hash(meta.get("hashes", {}), labeled_path)
    _check_hash(meta.get("hashes", {}), unlabeled_path)
    model = load_model(cfg.path("model.json"), amb)
    return model, amb, y, n, v


def _metric_from_config(cfg: ExperimentConfig):
    """Either the learned metric (model.json) or the analytic chart."""
    if cfg.bm.get("metric") == "analytic_swiss":
        manifold = swiss_roll()
        return analytic_source(manifold), None
    model, _, _, _, _ = _load_model_checked(cfg)
    boundary = calibrate_boundary(model, rng=derive_seed(cfg.seed, "boundary"))
    return metric_source(model, boundary), model


def cmd_simulate(cfg: ExperimentConfig) -> int:
    metric, model = _metric_from_config(cfg)
    start = cfg.bm.get("start")
    if start is None:
        if model is None:
            raise ConfigError("bm.start is required with the analytic metric")
        start = model.latent.means[0]
    start = np.asarray(start, dtype=float)
    sim = SimConfig(
        dt=float(cfg.bm["dt"]), n_steps=int(cfg.bm["n_steps"]),
        n_paths=int(cfg.bm["n_paths"]), seed=derive_seed(cfg.seed, "simulate"),
        max_rejects=int(cfg.bm["max_rejects"]),
    )
    ens = simulate(metric, start, sim)
    os.makedirs(cfg.output_dir, exist_ok=True)
    save_trajectories(ens, cfg.path("trajectories.csv"))
    print(
        f"simulated {sim.n_paths} paths x {sim.n_steps} steps "
        f"(rejections {ens.n_rejections}, stays {ens.n_stays})"
    )
    return EXIT_OK


def cmd_build_kernel(cfg: ExperimentConfig) -> int:
    model, _, _, n, v = _load_model_checked(cfg)
    boundary = calibrate_boundary(model, rng=derive_seed(cfg.seed, "boundary"))
    metric = metric_source(model, boundary)
    latents = model.latent.means
    omega = cfg.heat.get("omega")
    omega = default_omega(latents) if omega is None else float(omega)
    spec = NeighborhoodSpec(omega, cfg.heat.get("volume_mode", "riemannian"))
    sim = SimConfig(
        dt=float(cfg.bm["dt"]), n_steps=int(cfg.bm["n_steps"]),
        n_paths=int(cfg.bm["n_paths"]), seed=derive_seed(cfg.seed, "stack"),
        max_rejects=int(cfg.bm["max_rejects"]),
    )
    t0 = time.perf_counter()
    stack = build_stack(metric, latents, sim, spec)
    elapsed = time.perf_counter() - t0
    save_stack(stack, cfg.path("stack"))
    write_json(
        cfg.path("stack_meta.json"),
        {
            "n_labeled": n,
            "v_unlabeled": v,
            "omega": omega,
            "boundary_alpha": boundary.alpha,
            "hashes": {"model.json": file_sha256(cfg.path("model.json"))},
        },
    )
    print(f"built {stack.n_times} x {n + v} x {n + v} stack in {elapsed:.1f}s")
    return EXIT_OK


def cmd_fit(cfg: ExperimentConfig) -> int:
    _, y, n, _, _, _ = _load_dataset(cfg)
    stack = load_stack(cfg.path("stack"))
    opt = OptimizerSpec(maxiter=int(cfg.gp["maxiter"]), tol=float(cfg.gp["tol"]))
    idx = np.arange(n)
    fit = fit_heat_gp(stack, (idx, y), opt)
    summary = fit_summary(fit)
    write_json(
        cfg.path("fit.json"),
        {
            "summary": summary,
            "labeled_indices": idx.tolist(),
            "y": [float(val) for val in y],
            "hashes": {"meta.json": file_sha256(os.path.join(cfg.path("stack"), "meta.json"))},
        },
    )
    print(
        f"selected t = {summary['t']} (index {summary['t_index']}), "
        f"log evidence {summary['log_evidence']:.3f}"
    )
    return EXIT_OK


def cmd_predict(cfg: ExperimentConfig) -> int:
    stack = load_stack(cfg.path("stack"))
    saved = read_json(cfg.path("fit.json"))
    _check_hash(saved.get("hashes", {}), os.path.join(cfg.path("stack"), "meta.json"))
    s = saved["summary"]
    idx = np.asarray(saved["labeled_indices"], dtype=int)
    y = np.asarray(saved["y"], dtype=float)
    fit = rebuild_heat_fit(stack, (idx, y), s["t_index"], s["sigma_h2"], s["sigma_noise2"])
    test = np.arange(idx.size, stack.n_points)
    cross, prior = heat_cross(fit, stack, test)
    mean, var = predict(fit, cross, prior)
    write_csv(
        cfg.path("predictions.csv"),
        "index,mean,var",
        np.column_stack([test.astype(float), mean, var]),
    )
    truth_path = cfg.path("truth.csv")
    if os.path.exists(truth_path):
        truth = read_csv(truth_path, "f")[:, 0]
        if truth.size == test.size:
            rmse = float(np.sqrt(np.mean((mean - truth) ** 2)))
            print(f"wrote {test.size} predictions; RMSE vs truth {rmse:.4f}")
            return EXIT_OK
    print(f"wrote {test.size} predictions")
    return EXIT_OK


# ---------------------------------------------------------------------------
# profile stage


def cmd_profile(cfg: ExperimentConfig) -> int:
    pr = cfg.profile
    t = float(pr["t"])
    n_targets = int(pr["n_targets"])
    start = np.asarray(pr["start"], dtype=float)
    if n_targets < 1:
        raise ConfigError("profile.n_targets must be >= 1")
    lo, hi = SWISS_ROLL_DOMAIN
    radii = np.linspace(lo[0] + 0.5, hi[0] - 0.5, n_targets)
    targets = np.column_stack([radii, np.full(n_targets, start[1])])
    spec = NeighborhoodSpec(
        float(cfg.heat["omega"]) if cfg.heat.get("omega") else 0.3,
        cfg.heat.get("volume_mode", "riemannian"),
    )
    sim = SimConfig(
        dt=float(cfg.bm["dt"]), n_steps=int(cfg.bm["n_steps"]),
        n_paths=int(cfg.bm["n_paths"]), seed=derive_seed(cfg.seed, "profile"),
        max_rejects=int(cfg.bm["max_rejects"]),
    )
    analytic = analytic_source(swiss_roll())
    dens_a, se_a = heat_kernel_profile_with_errors(analytic, start, targets, t, sim, spec)

    learned_col = [""] * n_targets
    if not pr.get("analytic_only"):
        if not os.path.exists(cfg.path("model.json")):
            raise ConfigError("profile needs model.json; pass profile.analytic_only=true to skip")
        model, _, _, _, _ = _load_model_checked(cfg)
        boundary = calibrate_boundary(model, rng=derive_seed(cfg.seed, "boundary"))
        metric = metric_source(model, boundary)
        from .lvm import latent_lookup

        latent_start = latent_lookup(model, swiss_roll().embed(start[None, :]))[0]
        latent_targets = latent_lookup(model, swiss_roll().embed(targets))
        dens_l, _ = heat_kernel_profile_with_errors(
            metric, latent_start, latent_targets, t, sim, spec
        )
        learned_col = [f"{v:.17g}" for v in dens_l]

    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(cfg.path("profile.csv"), "w") as fh:
        fh.write("target_radius,density_analytic,density_learned,mc_stderr\n")
        for i in range(n_targets):
            fh.write(
                f"{radii[i]:.17g},{dens_a[i]:.17g},{learned_col[i]},{se_a[i]:.17g}\n"
            )
    print(f"wrote {n_targets}-target profile at t = {t}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark stage


@dataclass(frozen=True)
class BenchmarkReport:
    """Per-method RMSE summaries over repeated label subsets."""

    methods: dict  # name -> {"rmse": [..], "mean": float, "std": float}
    runtimes: dict
    config: dict

    def to_dict(self) -> dict:
        return {"methods": self.methods, "runtimes": self.runtimes, "config": self.config}


def _rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def _summarize(per_run: list) -> dict:
    arr = np.asarray(per_run, dtype=float)
    return {
        "rmse": [float(v) for v in arr],
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
    }


def cmd_benchmark(cfg: ExperimentConfig) -> int:
    amb, y, n, v, _, _ = _load_dataset(cfg)
    truth = read_csv(cfg.path("truth.csv"), "f")[:, 0]
    if truth.size != v:
        raise ConfigError("truth.csv row count does not match unlabeled.csv")
    reps = int(cfg.benchmark["repetitions"])
    subset_size = int(cfg.benchmark["subset_size"])
    if not 1 <= subset_size <= n:
        raise ConfigError("benchmark.subset_size must be within the labeled count")
    runtimes = {}

    t0 = time.perf_counter()
    model, _, _, _, _ = _load_model_checked(cfg)
    boundary = calibrate_boundary(model, rng=derive_seed(cfg.seed, "boundary"))
    metric = metric_source(model, boundary)
    latents = model.latent.means
    runtimes["load_model"] = time.perf_counter() - t0

    stack_dir = cfg.path("stack")
    t0 = time.perf_counter()
    if os.path.isdir(stack_dir):
        stack = load_stack(stack_dir)
    else:
        omega = cfg.heat.get("omega")
        omega = default_omega(latents) if omega is None else float(omega)
        spec = NeighborhoodSpec(omega, cfg.heat.get("volume_mode", "riemannian"))
        sim = SimConfig(
            dt=float(cfg.bm["dt"]), n_steps=int(cfg.bm["n_steps"]),
            n_paths=int(cfg.bm["n_paths"]), seed=derive_seed(cfg.seed, "stack"),
            max_rejects=int(cfg.bm["max_rejects"]),
        )
        stack = build_stack(metric, latents, sim, spec)
        save_stack(stack, stack_dir)
    runtimes["stack"] = time.perf_counter() - t0

    bl = cfg.baselines
    t0 = time.perf_counter()
    eps = bl.get("gl_epsilon")
    eps = default_epsilon(amb) if eps is None else float(eps)
    gl_cfg = GlConfig(eps, int(bl["gl_K"]), float(bl["gl_t"]), int(cfg.lvm["q"]))
    gl_h = gl_kernel(amb, gl_cfg)
    gl_stack = HeatKernelStack(np.array([gl_cfg.t]), gl_h[None, :, :], {"gl": True})
    runtimes["gl_kernel"] = time.perf_counter() - t0

    opt = OptimizerSpec(maxiter=int(cfg.gp["maxiter"]), tol=float(cfg.gp["tol"]))
    rng = np.random.default_rng(derive_seed(cfg.seed, "benchmark"))
    test = np.arange(n, n + v)
    per_method = {"heat_gp": [], "euclidean_ambient": [], "euclidean_latent": [], "gl_gp": []}
    method_time = {name: 0.0 for name in per_method}
    for _rep in range(reps):
        subset = np.sort(rng.choice(n, size=subset_size, replace=False))
        y_sub = y[subset]

        t0 = time.perf_counter()
        fit = fit_heat_gp(stack, (subset, y_sub), opt)
        cross, prior = heat_cross(fit, stack, test)
        mean, _ = predict(fit, cross, prior)
        per_method["heat_gp"].append(_rmse(mean, truth))
        method_time["heat_gp"] += time.perf_counter() - t0

        if bl.get("euclidean_ambient", True):
            t0 = time.perf_counter()
            efit = fit_euclidean_gp(amb[subset], y_sub, opt)
            cross, prior = euclidean_cross(efit, amb[test])
            mean, _ = predict(efit, cross, prior)
            per_method["euclidean_ambient"].append(_rmse(mean, truth))
            method_time["euclidean_ambient"] += time.perf_counter() - t0

        if bl.get("euclidean_latent", True):
            t0 = time.perf_counter()
            lfit = fit_euclidean_gp(latents[subset], y_sub, opt)
            cross, prior = euclidean_cross(lfit, latents[test])
            mean, _ = predict(lfit, cross, prior)
            per_method["euclidean_latent"].append(_rmse(mean, truth))
            method_time["euclidean_latent"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        gfit = fit_heat_gp(gl_stack, (subset, y_sub), opt)
        cross, prior = heat_cross(gfit, gl_stack, test)
        mean, _ = predict(gfit, cross, prior)
        per_method["gl_gp"].append(_rmse(mean, truth))
        method_time["gl_gp"] += time.perf_counter() - t0

    methods = {k: _summarize(vals) for k, vals in per_method.items() if vals}
    runtimes.update({f"fit_{k}": t for k, t in method_time.items()})
    report = BenchmarkReport(
        methods=methods,
        runtimes=runtimes,
        config={"repetitions": reps, "subset_size": subset_size, "seed": cfg.seed,
                "n_bm": stack.meta.get("n_bm"), "gl_epsilon": eps, "gl_K": gl_cfg.K,
                "gl_t": gl_cfg.t},
    )
    # the report artifact is deterministic; wall-clock timings go separately
    write_json(cfg.path("benchmark.json"), {"methods": methods, "config": report.config})
    write_json(cfg.path("benchmark_timing.json"), {"runtimes": report.runtimes})
    rows = []
    for name, info in methods.items():
        for rep, val in enumerate(info["rmse"]):
            rows.append((name, rep, val))
    with open(cfg.path("benchmark.csv"), "w") as fh:
        fh.write("method,repetition,rmse\n")
        for name, rep, val in rows:
            fh.write(f"{name},{rep},{val:.17g}\n")
    for name, info in methods.items():
        print(f"{name}: mean RMSE {info['mean']:.4f} (std {info['std']:.4f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heatgeom",
        description="Manifold-aware GP regression pipeline over file artifacts.",
    )
    parser.add_argument("--config", help="JSON config file", default=None)
    parser.add_argument("--seed", type=int, help="override the root seed", default=None)
    parser.add_argument("--out", help="override the output directory", default=None)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (
        "gen-swiss", "train-lvm", "simulate", "build-kernel",
        "fit", "predict", "profile", "benchmark",
    ):
        sub.add_parser(name)
    return parser


COMMANDS = {
    "gen-swiss": cmd_gen_swiss,
    "train-lvm": cmd_train_lvm,
    "simulate": cmd_simulate,
    "build-kernel": cmd_build_kernel,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "profile": cmd_profile,
    "benchmark": cmd_benchmark,
}


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.from_args(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError, ValueError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
