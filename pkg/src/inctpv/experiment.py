"""Experiment driver: configuration, method pipelines, run artifacts,
comparison across runs, and timing.

A run directory is self-describing: it holds the resolved config, the
dataset manifest plus its hash, library versions, per-image outputs, and
metric summaries. Re-running from the copied config reproduces every
metric bit for bit (wall times aside).

Solvers operate in scaled intensity units (``intensity_scale`` times the
stored [0, 1] images); reconstructions are mapped back before metrics and
file output. Reference regularization parameters assume roughly 8-bit
intensity magnitudes for deblurring, hence the default scale of 255.
"""

import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import plots
from .datasets import (
    NoiseModel,
    corrupt,
    export_training_pairs,
    load_image_folder,
    save_png16,
    sha256_file,
    write_phantom_dataset,
)
from .guess import GuessOperator, identity_guess, load_model_guess, oracle_blend_guess
from .image import tpv_objective
from .incremental import (
    IncrementalConfig,
    IncrementalTrace,
    TraceStep,
    inc_dg,
    inc_tpv,
    update_lambda,
)
from .metrics import batch_stats, relative_error, ssim
from .operators import (
    FanBeamGeometry,
    FanBeamOperator,
    GaussianBlurOperator,
    StackedOperator,
    estimate_operator_norm,
    fbp_reconstruct,
)
from .phantoms import generate_batch
from .reweight import IrConfig, ir_solve


class ConfigError(ValueError):
    """Invalid experiment configuration; the message is a single line."""


TASKS = ("deblur", "ct")
METHODS = ("fbp", "tpv_fixed", "tpv_decreasing", "inc_tpv", "inc_nn", "inc_dg")
STARTS = ("observation", "fbp", "zero")
GUESS_KINDS = ("identity", "oracle_blend", "models")

_TASK_DEFAULTS = {
    "deblur": {
        "nu": 0.02,
        "start": "observation",
        "intensity_scale": 255.0,
        "incremental": {
            "scheduler": [100, 100, 50, 10],
            "alpha_p": 0.5,
            "lambda0": 0.5,
        },
        "k_ir": 270,
    },
    "ct": {
        "nu": 0.005,
        "start": "fbp",
        "intensity_scale": 1.0,
        "incremental": {
            "scheduler": [200, 500, 500, 500, 700, 700],
            "alpha_p": 0.7,
            "lambda0": 0.01,
        },
        "k_ir": 1000,
    },
}

# Fixed-lambda baseline defaults, grid-searched at each task's default
# intensity scale by scripts/search_lambda.py.
DEFAULT_FIXED_LAMBDA = {"deblur": 100.0, "ct": 0.001}

_KNOWN_KEYS = {
    "task", "method", "seed", "dataset", "noise", "start", "intensity_scale",
    "data_scale", "incremental", "tpv", "guess", "blur", "ct", "snapshots",
    "workers", "export", "methods",
}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    method: str
    nu: float
    noise_seed: int
    dataset_folder: str
    dataset_count: int
    dataset_side: int
    dataset_seed: int
    start: str
    intensity_scale: float
    data_scale: float
    incremental: IncrementalConfig
    ir: IrConfig
    guess_kind: str
    guess_dir: str
    guess_beta: float
    sigma_g: float
    num_views: int
    detector_count: int
    angular_range: float
    source_to_origin: float
    origin_to_detector: float
    snapshots: bool
    workers: int


def _section(raw, key):
    val = raw.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"{key} must be an object")
    return val


def _float(sec, key, default, where, positive=False, nonneg=False):
    val = sec.get(key, default)
    try:
        val = float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key} must be a number, got {sec.get(key)!r}")
    if positive and val <= 0.0:
        raise ConfigError(f"{where}.{key} must be positive, got {val}")
    if nonneg and val < 0.0:
        raise ConfigError(f"{where}.{key} must be >= 0, got {val}")
    return val


def _int(sec, key, default, where, minimum=None):
    val = sec.get(key, default)
    if isinstance(val, bool) or not isinstance(val, (int, float)) or int(val) != val:
        raise ConfigError(f"{where}.{key} must be an integer, got {sec.get(key)!r}")
    val = int(val)
    if minimum is not None and val < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}, got {val}")
    return val


def parse_config(raw, *, seed=None, workers=None, identity_guess=False) -> ExperimentConfig:
    """Resolve a raw config mapping into an ExperimentConfig.

    seed overrides both the dataset seed and the noise seed; workers
    overrides the worker count; identity_guess swaps inc_dg's configured
    guesses for the identity operator.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for key in raw:
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")

    task = raw.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {'|'.join(TASKS)}, got {task!r}")
    method = raw.get("method", "inc_tpv")
    if method not in METHODS:
        raise ConfigError(f"method must be one of {'|'.join(METHODS)}, got {method!r}")
    if method == "fbp" and task != "ct":
        raise ConfigError("method fbp requires task ct")
    base = _TASK_DEFAULTS[task]

    seed_base = int(seed) if seed is not None else _int(raw, "seed", 0, "config")

    dataset = _section(raw, "dataset")
    folder = dataset.get("folder")
    gen = dataset.get("generate")
    if folder is not None and gen is not None:
        raise ConfigError("dataset takes either generate or folder, not both")
    if folder is not None:
        folder = os.path.abspath(str(folder))
        if not os.path.isdir(folder):
            raise ConfigError(f"dataset.folder does not exist: {folder}")
        count = side = 0
        dataset_seed = 0
    else:
        gen = gen if gen is not None else {}
        if not isinstance(gen, dict):
            raise ConfigError("dataset.generate must be an object")
        count = _int(gen, "count", 3, "dataset.generate", minimum=1)
        side = _int(gen, "side", 256, "dataset.generate", minimum=16)
        dataset_seed = (int(seed) if seed is not None
                        else _int(gen, "seed", seed_base, "dataset.generate"))

    noise = _section(raw, "noise")
    nu = _float(noise, "nu", base["nu"], "noise", nonneg=True)
    noise_seed = (int(seed) + 1000003 if seed is not None
                  else _int(noise, "seed", seed_base + 1000003, "noise"))

    start = raw.get("start", base["start"])
    if start not in STARTS:
        raise ConfigError(f"start must be one of {'|'.join(STARTS)}, got {start!r}")
    if start == "observation" and task != "deblur":
        raise ConfigError("start observation requires task deblur (a ct observation is a sinogram)")
    if start == "fbp" and task != "ct":
        raise ConfigError("start fbp requires task ct")

    intensity_scale = _float(raw, "intensity_scale", base["intensity_scale"],
                             "config", positive=True)
    data_scale = _float(raw, "data_scale", 1.0, "config", positive=True)

    inc_sec = {**base["incremental"], **_section(raw, "incremental")}
    try:
        incremental = IncrementalConfig(
            scheduler=inc_sec["scheduler"],
            alpha_p=float(inc_sec["alpha_p"]),
            lambda0=float(inc_sec["lambda0"]),
            p0=float(inc_sec.get("p0", 1.0)),
            k_cp=int(inc_sec.get("k_cp", 5)),
            xi=float(inc_sec.get("xi", 2e-3)),
            tau_x=float(inc_sec.get("tau_x", 1e-7)),
            tau_f=float(inc_sec.get("tau_f", 1e-7)),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"incremental: {exc}")
    if incremental.H == 0:
        raise ConfigError("incremental.scheduler must not be empty")

    ir_cfg = None
    if method == "tpv_fixed":
        tpv = _section(raw, "tpv")
        p_last = incremental.p0 * incremental.alpha_p ** (incremental.H - 1)
        p_fix = _float(tpv, "p", p_last, "tpv", positive=True)
        lam_fix = _float(tpv, "lambda", DEFAULT_FIXED_LAMBDA[task], "tpv", positive=True)
        k_ir = _int(tpv, "k_ir", base["k_ir"], "tpv", minimum=1)
        try:
            ir_cfg = IrConfig(p=p_fix, lam=lam_fix, k_ir=k_ir, k_cp=incremental.k_cp,
                              xi=incremental.xi, tau_x=incremental.tau_x,
                              tau_f=incremental.tau_f)
        except ValueError as exc:
            raise ConfigError(f"tpv: {exc}")

    guess = _section(raw, "guess")
    guess_kind = guess.get("kind")
    guess_dir = guess.get("path")
    guess_beta = _float(guess, "beta", 0.5, "guess")
    if method in ("inc_dg", "inc_nn"):
        if identity_guess and method == "inc_dg":
            guess_kind, guess_dir = "identity", None
        if guess_kind is None:
            if method == "inc_nn":
                raise ConfigError("method inc_nn requires guess.path (a directory of psi_h model files)")
            raise ConfigError("method inc_dg requires a guess section "
                              "(kind identity|oracle_blend|models) or --identity-guess")
        if guess_kind not in GUESS_KINDS:
            raise ConfigError(f"guess.kind must be one of {'|'.join(GUESS_KINDS)}, got {guess_kind!r}")
        if method == "inc_nn" and guess_kind != "models":
            raise ConfigError("method inc_nn requires guess.kind models")
        if guess_kind == "models":
            if not guess_dir:
                raise ConfigError(f"method {method} with guess.kind models requires guess.path")
            guess_dir = os.path.abspath(str(guess_dir))
            if not os.path.isdir(guess_dir):
                raise ConfigError(f"guess.path does not exist: {guess_dir}")
        else:
            guess_dir = None
        if guess_kind == "oracle_blend" and not 0.0 <= guess_beta <= 1.0:
            raise ConfigError(f"guess.beta must lie in [0, 1], got {guess_beta}")
    else:
        guess_kind = None
        guess_dir = None

    blur = _section(raw, "blur")
    sigma_g = _float(blur, "sigma_g", 1.3, "blur", positive=True)
    ct = _section(raw, "ct")
    num_views = _int(ct, "num_views", 60, "ct", minimum=1)
    detector_count = _int(ct, "detector_count", 500, "ct", minimum=1)
    angular_range = _float(ct, "angular_range", 180.0, "ct", positive=True)
    source_to_origin = _float(ct, "source_to_origin", 512.0, "ct", positive=True)
    origin_to_detector = _float(ct, "origin_to_detector", 512.0, "ct", positive=True)

    snapshots = bool(raw.get("snapshots", False))
    workers_val = (int(workers) if workers is not None
                   else _int(raw, "workers", 1, "config", minimum=1))
    if workers_val < 1:
        raise ConfigError(f"workers must be >= 1, got {workers_val}")

    return ExperimentConfig(
        task=task, method=method, nu=nu, noise_seed=noise_seed,
        dataset_folder=folder, dataset_count=count, dataset_side=side,
        dataset_seed=dataset_seed, start=start, intensity_scale=intensity_scale,
        data_scale=data_scale, incremental=incremental, ir=ir_cfg,
        guess_kind=guess_kind, guess_dir=guess_dir, guess_beta=guess_beta,
        sigma_g=sigma_g, num_views=num_views, detector_count=detector_count,
        angular_range=angular_range, source_to_origin=source_to_origin,
        origin_to_detector=origin_to_detector, snapshots=snapshots,
        workers=workers_val,
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Serialize a resolved config; parse_config() round-trips it."""
    inc = cfg.incremental
    out = {
        "task": cfg.task,
        "method": cfg.method,
        "dataset": ({"folder": cfg.dataset_folder} if cfg.dataset_folder else
                    {"generate": {"count": cfg.dataset_count,
                                  "side": cfg.dataset_side,
                                  "seed": cfg.dataset_seed}}),
        "noise": {"nu": cfg.nu, "seed": cfg.noise_seed},
        "start": cfg.start,
        "intensity_scale": cfg.intensity_scale,
        "data_scale": cfg.data_scale,
        "incremental": {"scheduler": list(inc.scheduler), "alpha_p": inc.alpha_p,
                        "lambda0": inc.lambda0, "p0": inc.p0, "k_cp": inc.k_cp,
                        "xi": inc.xi, "tau_x": inc.tau_x, "tau_f": inc.tau_f},
        "snapshots": cfg.snapshots,
        "workers": cfg.workers,
    }
    if cfg.task == "deblur":
        out["blur"] = {"sigma_g": cfg.sigma_g}
    else:
        out["ct"] = {"num_views": cfg.num_views,
                     "detector_count": cfg.detector_count,
                     "angular_range": cfg.angular_range,
                     "source_to_origin": cfg.source_to_origin,
                     "origin_to_detector": cfg.origin_to_detector}
    if cfg.ir is not None:
        out["tpv"] = {"p": cfg.ir.p, "lambda": cfg.ir.lam, "k_ir": cfg.ir.k_ir}
    if cfg.guess_kind is not None:
        entry = {"kind": cfg.guess_kind}
        if cfg.guess_dir is not None:
            entry["path"] = cfg.guess_dir
        if cfg.guess_kind == "oracle_blend":
            entry["beta"] = cfg.guess_beta
        out["guess"] = entry
    return out


def _load_config_file(path):
    if not os.path.isfile(path):
        raise ConfigError(f"file not found: {path}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}")
    return raw


def _ensure_config(source, **kwargs):
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, (str, os.PathLike)):
        source = _load_config_file(source)
    return parse_config(source, **kwargs)


# ----------------------------------------------------------------- dataset

def _load_dataset(cfg, out_dir):
    """Materialize the images and write a manifest under out_dir.

    Returns (images, manifest_path). Generated phantoms are also saved
    under out_dir/dataset so the run is self-contained.
    """
    if cfg.dataset_folder:
        images = load_image_folder(cfg.dataset_folder)
        if not images:
            raise ConfigError(f"dataset.folder has no png files: {cfg.dataset_folder}")
        for img in images:
            if img.shape[0] != img.shape[1]:
                raise ConfigError(f"dataset images must be square, got {img.shape}")
        names = sorted(f for f in os.listdir(cfg.dataset_folder)
                       if f.lower().endswith(".png"))
        rows = [{"record": "header", "kind": "folder", "count": len(images),
                 "side": images[0].shape[0]}]
        for i, name in enumerate(names):
            rows.append({"record": "item", "index": i, "file": name,
                         "sha256": sha256_file(os.path.join(cfg.dataset_folder, name))})
        manifest = os.path.join(out_dir, "dataset_manifest.jsonl")
        with open(manifest, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        return images, manifest
    images = generate_batch(cfg.dataset_count, side=cfg.dataset_side,
                            seed=cfg.dataset_seed)
    manifest = write_phantom_dataset(os.path.join(out_dir, "dataset"), images,
                                     base_seed=cfg.dataset_seed,
                                     side=cfg.dataset_side)
    return images, manifest


def _build_operator(cfg, side):
    if cfg.task == "deblur":
        return GaussianBlurOperator(side, sigma_g=cfg.sigma_g)
    geo = FanBeamGeometry(image_side=side, num_views=cfg.num_views,
                          detector_count=cfg.detector_count,
                          angular_range=cfg.angular_range,
                          source_to_origin=cfg.source_to_origin,
                          origin_to_detector=cfg.origin_to_detector)
    return FanBeamOperator(geo)


# ------------------------------------------------------------------ guesses

class _ScaledGuess(GuessOperator):
    """Run an inner guess in [0, 1] units inside a scaled solve:
    apply(x) = s * inner(x / s)."""

    def __init__(self, inner, scale):
        self._inner = inner
        self._scale = float(scale)
        self.descriptor = f"scaled({inner.descriptor}, {self._scale})"

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self._scale * self._inner.apply(x / self._scale)


def _load_models(cfg, side):
    models = []
    for h in range(cfg.incremental.H):
        path = os.path.join(cfg.guess_dir, f"psi_{h}.onnx")
        if not os.path.isfile(path):
            raise ConfigError(f"guess.path is missing psi_{h}.onnx: {cfg.guess_dir}")
        g = load_model_guess(path, side)
        if cfg.intensity_scale != 1.0:
            g = _ScaledGuess(g, cfg.intensity_scale)
        models.append(g)
    return models


def _guesses_for_image(cfg, models, gt_scaled):
    if cfg.method not in ("inc_dg", "inc_nn"):
        return None
    H = cfg.incremental.H
    if cfg.guess_kind == "identity":
        return [identity_guess() for _ in range(H)]
    if cfg.guess_kind == "oracle_blend":
        return [oracle_blend_guess(gt_scaled, cfg.guess_beta) for _ in range(H)]
    return models


# ------------------------------------------------------------------ solvers

def _solve_decreasing(K, y, x0, inc, op_norm, data_scale):
    """Reweighted blocks with p held at the schedule's final value while
    lambda follows the objective-ratio rule over the same budgets."""
    p_fix = inc.p0 * inc.alpha_p ** (inc.H - 1)
    x = np.maximum(np.asarray(x0, dtype=np.float64), 0.0)
    lam = inc.lambda0
    trace = IncrementalTrace(f_init=tpv_objective(x, y, K, lam, p_fix))
    f_prev = None
    for h, budget in enumerate(inc.scheduler):
        t0 = time.perf_counter()
        used = 0
        if budget > 0:
            ir = IrConfig(p=p_fix, lam=lam, k_ir=budget, k_cp=inc.k_cp, xi=inc.xi,
                          tau_x=inc.tau_x, tau_f=inc.tau_f)
            x, used = ir_solve(K, y, x, ir, op_norm=op_norm, data_scale=data_scale)
        f_h = tpv_objective(x, y, K, lam, p_fix)
        trace.steps.append(TraceStep(h, p_fix, lam, f_h, used,
                                     time.perf_counter() - t0))
        if h + 1 < inc.H:
            lam_next = update_lambda(h, lam, f_h,
                                     f_prev if f_prev is not None else f_h,
                                     inc.lambda0)
            if lam_next <= 0.0:
                trace.degenerate_stop = True
                break
            lam = lam_next
        f_prev = f_h
    return x, trace, trace.total_cp_iters


def _dispatch(cfg, K, op_norm, y_scaled, x0_scaled, guesses):
    method = cfg.method
    if method == "fbp":
        return np.maximum(x0_scaled, 0.0), None, 0
    if method == "tpv_fixed":
        x, used = ir_solve(K, y_scaled, x0_scaled, cfg.ir, op_norm=op_norm,
                           data_scale=cfg.data_scale)
        return x, None, used
    if method == "tpv_decreasing":
        return _solve_decreasing(K, y_scaled, x0_scaled, cfg.incremental,
                                 op_norm, cfg.data_scale)
    inc = cfg.incremental
    if method == "inc_nn":
        inc = IncrementalConfig(scheduler=(0,) * inc.H, alpha_p=inc.alpha_p,
                                lambda0=inc.lambda0, p0=inc.p0, k_cp=inc.k_cp,
                                xi=inc.xi, tau_x=inc.tau_x, tau_f=inc.tau_f)
    if method == "inc_tpv":
        x, trace = inc_tpv(K, y_scaled, x0_scaled, inc, op_norm=op_norm,
                           data_scale=cfg.data_scale, keep_snapshots=cfg.snapshots)
    else:
        x, trace = inc_dg(K, y_scaled, x0_scaled, inc, guesses, op_norm=op_norm,
                          data_scale=cfg.data_scale, keep_snapshots=cfg.snapshots)
    return x, trace, trace.total_cp_iters


def _start_image(cfg, K, y):
    if cfg.start == "observation":
        return np.asarray(y, dtype=np.float64).copy()
    if cfg.start == "fbp":
        return fbp_reconstruct(y, operator=K)
    return np.zeros(K.in_shape)


def _process_image(index, gt, cfg, K, op_norm, models):
    """Corrupt, solve, and score one image. The wall time covers
    everything from the observation to the reconstruction."""
    noise = NoiseModel(nu=cfg.nu, seed=cfg.noise_seed + index)
    y = corrupt(gt, K, noise)
    s = cfg.intensity_scale
    t0 = time.perf_counter()
    x0 = _start_image(cfg, K, y)
    guesses = _guesses_for_image(cfg, models, s * gt)
    x_scaled, trace, iters = _dispatch(cfg, K, op_norm, s * y, s * x0, guesses)
    wall = time.perf_counter() - t0
    x = x_scaled / s
    record = {
        "index": index,
        "re_input": relative_error(x0, gt),
        "ssim_input": ssim(x0, gt),
        "re": relative_error(x, gt),
        "ssim": ssim(x, gt),
        "cp_iters": iters,
        "wall_seconds": wall,
    }
    return record, x, x0, y, trace


def _map_images(cfg, images, K, op_norm, models):
    def work(i):
        try:
            return _process_image(i, images[i], cfg, K, op_norm, models)
        except Exception as exc:
            return exc

    if cfg.workers <= 1:
        return [work(i) for i in range(len(images))]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(work, range(len(images))))


# ------------------------------------------------------------------ output

def _write_versions(path):
    import matplotlib
    import PIL
    import scipy
    import skimage

    from . import __version__

    lines = [
        f"python {sys.version.split()[0]}",
        f"inctpv {__version__}",
        f"numpy {np.__version__}",
        f"scipy {scipy.__version__}",
        f"scikit-image {skimage.__version__}",
        f"pillow {PIL.__version__}",
        f"matplotlib {matplotlib.__version__}",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _fmt(value):
    """Full-precision text for floats so reruns compare bit for bit."""
    return repr(float(value))


_METRIC_FIELDS = ("index", "re_input", "ssim_input", "re", "ssim",
                  "cp_iters", "wall_seconds")


def _write_metric_files(out_dir, cfg, records):
    rows = [[r["index"], _fmt(r["re_input"]), _fmt(r["ssim_input"]),
             _fmt(r["re"]), _fmt(r["ssim"]), r["cp_iters"],
             _fmt(r["wall_seconds"])] for r in records]
    _write_csv(os.path.join(out_dir, "metrics.csv"), _METRIC_FIELDS, rows)

    summary = []
    for name in ("re_input", "ssim_input", "re", "ssim"):
        values = [r[name] for r in records]
        if values:
            st = batch_stats(values)
            summary.append([name, len(values), _fmt(st.mean), _fmt(st.std),
                            _fmt(st.minimum), _fmt(st.q1), _fmt(st.median),
                            _fmt(st.q3), _fmt(st.maximum)])
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ("metric", "count", "mean", "std", "min", "q1", "median", "q3", "max"),
               summary)

    walls = [r["wall_seconds"] for r in records]
    iters = [r["cp_iters"] for r in records]
    timing = []
    if walls:
        timing.append([cfg.method, len(walls), _fmt(np.mean(walls)),
                       _fmt(np.std(walls)), _fmt(np.mean(iters))])
    _write_csv(os.path.join(out_dir, "timing.csv"),
               ("method", "images", "mean_seconds", "std_seconds", "mean_cp_iters"),
               timing)


def run_experiment(source, out_dir, *, seed=None, workers=None,
                   identity_guess=False) -> str:
    """Run one method over the configured dataset; returns the run directory.

    source may be a config file path, a raw mapping, or a resolved
    ExperimentConfig. Per-image solver failures are recorded in
    failures.csv and skipped; the run continues.
    """
    cfg = _ensure_config(source, seed=seed, workers=workers,
                         identity_guess=identity_guess)
    out_dir = os.path.abspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)

    images, manifest = _load_dataset(cfg, out_dir)
    side = images[0].shape[0]
    K = _build_operator(cfg, side)
    op_norm = estimate_operator_norm(StackedOperator(K))
    models = _load_models(cfg, side) if cfg.guess_kind == "models" else None

    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "manifest_hash.txt"), "w") as fh:
        fh.write(sha256_file(manifest) + "\n")
    _write_versions(os.path.join(out_dir, "versions.txt"))

    results = _map_images(cfg, images, K, op_norm, models)

    recon_dir = os.path.join(out_dir, "recon")
    input_dir = os.path.join(out_dir, "input")
    obs_dir = os.path.join(out_dir, "observations")
    for d in (recon_dir, input_dir, obs_dir):
        os.makedirs(d, exist_ok=True)
    traces_dir = os.path.join(out_dir, "traces")
    snap_dir = os.path.join(out_dir, "snapshots")

    records, failures = [], []
    first_panel = None
    first_trace = None
    for index, outcome in enumerate(results):
        if isinstance(outcome, Exception):
            failures.append([index, f"{type(outcome).__name__}: {outcome}"])
            continue
        record, x, x0, y, trace = outcome
        records.append(record)
        save_png16(os.path.join(recon_dir, f"{index:04d}.png"), x)
        save_png16(os.path.join(input_dir, f"{index:04d}.png"), x0)
        np.save(os.path.join(obs_dir, f"{index:04d}.npy"), y)
        if trace is not None:
            os.makedirs(traces_dir, exist_ok=True)
            trace.to_jsonl(os.path.join(traces_dir, f"{index:04d}.jsonl"))
            if first_trace is None:
                first_trace = trace
        if trace is not None and trace.snapshots:
            os.makedirs(snap_dir, exist_ok=True)
            for h in range(1, len(trace.snapshots)):
                save_png16(os.path.join(snap_dir, f"{index:04d}_h{h}.png"),
                           trace.snapshots[h] / cfg.intensity_scale)
        if first_panel is None:
            first_panel = (index, images[index], x0, x)

    _write_metric_files(out_dir, cfg, records)
    if failures:
        _write_csv(os.path.join(out_dir, "failures.csv"),
                   ("index", "error"), failures)

    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    if first_panel is not None:
        index, gt, x0, x = first_panel
        plots.save_reconstruction_panel(
            os.path.join(fig_dir, f"reconstruction_{index:04d}.png"), gt, x0, x)
    if records:
        plots.save_metric_boxplot(
            os.path.join(fig_dir, "re_boxplot.png"),
            [("input", [r["re_input"] for r in records]),
             (cfg.method, [r["re"] for r in records])],
            "RE")
    if first_trace is not None:
        plots.save_trace_curves(os.path.join(fig_dir, "trace.png"), [first_trace])
    return out_dir


# ----------------------------------------------------------------- compare

def _read_metrics_csv(path):
    with open(path, newline="") as fh:
        return {int(row["index"]): row for row in csv.DictReader(fh)}


def _dedupe(labels):
    seen = {}
    out = []
    for label in labels:
        seen[label] = seen.get(label, 0) + 1
        out.append(label if seen[label] == 1 else f"{label}.{seen[label]}")
    return out


def compare_methods(run_dirs, out_dir) -> str:
    """Align per-image metrics across runs of the same dataset.

    Writes comparison.csv (one row per image), one quartile file per run
    per metric, and boxplot figures. Runs must agree on the dataset
    manifest hash.
    """
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    labels, hashes, metric_maps = [], [], []
    for d in run_dirs:
        d = os.path.abspath(d)
        for name in ("config.json", "manifest_hash.txt", "metrics.csv"):
            if not os.path.isfile(os.path.join(d, name)):
                raise ConfigError(f"not a run directory (missing {name}): {d}")
        with open(os.path.join(d, "config.json")) as fh:
            labels.append(json.load(fh).get("method", os.path.basename(d)))
        with open(os.path.join(d, "manifest_hash.txt")) as fh:
            hashes.append(fh.read().strip())
        metric_maps.append(_read_metrics_csv(os.path.join(d, "metrics.csv")))
    if len(set(hashes)) != 1:
        parts = ", ".join(f"{os.path.basename(os.path.abspath(d))}={h[:12]}"
                          for d, h in zip(run_dirs, hashes))
        raise ConfigError(f"dataset manifest hashes differ across runs: {parts}")
    labels = _dedupe(labels)

    common = sorted(set.intersection(*[set(m) for m in metric_maps]))
    if not common:
        raise ConfigError("runs share no successfully solved image indices")

    out_dir = os.path.abspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    header = ["index"]
    for label in labels:
        header += [f"{label}_re", f"{label}_ssim"]
    rows = []
    for index in common:
        row = [index]
        for m in metric_maps:
            row += [m[index]["re"], m[index]["ssim"]]
        rows.append(row)
    _write_csv(os.path.join(out_dir, "comparison.csv"), header, rows)

    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    for metric in ("re", "ssim"):
        series = []
        for label, m in zip(labels, metric_maps):
            values = [float(m[i][metric]) for i in common]
            series.append((label, values))
            st = batch_stats(values)
            _write_csv(os.path.join(out_dir, f"quartiles_{label}_{metric}.csv"),
                       ("label", "metric", "count", "mean", "std",
                        "min", "q1", "median", "q3", "max"),
                       [[label, metric, len(values), _fmt(st.mean), _fmt(st.std),
                         _fmt(st.minimum), _fmt(st.q1), _fmt(st.median),
                         _fmt(st.q3), _fmt(st.maximum)]])
        plots.save_metric_boxplot(
            os.path.join(fig_dir, f"compare_{metric}.png"), series, metric.upper())
    return out_dir


# ------------------------------------------------------------------ timing

def time_methods(source, out_dir, *, seed=None, workers=None,
                 identity_guess=False) -> str:
    """Time each configured method on the same images (at least 5).

    The config carries the shared task/dataset/noise sections plus a
    "methods" list of per-method overrides. Writes timing.csv with mean
    and std per-image wall seconds and mean CP iteration counts.
    """
    if isinstance(source, (str, os.PathLike)):
        source = _load_config_file(source)
    if not isinstance(source, dict):
        raise ConfigError("config root must be a JSON object")
    raw = dict(source)
    methods = raw.pop("methods", None)
    if not isinstance(methods, list) or not methods:
        raise ConfigError("time requires a non-empty methods list")
    cfgs = []
    for i, entry in enumerate(methods):
        if not isinstance(entry, dict):
            raise ConfigError(f"methods[{i}] must be an object")
        merged = {**raw, **entry}
        cfgs.append(parse_config(merged, seed=seed, workers=workers,
                                 identity_guess=identity_guess))
    base = cfgs[0]
    for c in cfgs[1:]:
        same = (c.task == base.task and c.dataset_folder == base.dataset_folder
                and c.dataset_count == base.dataset_count
                and c.dataset_side == base.dataset_side
                and c.dataset_seed == base.dataset_seed
                and c.nu == base.nu and c.noise_seed == base.noise_seed)
        if not same:
            raise ConfigError("methods entries must not change the task, dataset, or noise sections")

    out_dir = os.path.abspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    images, manifest = _load_dataset(base, out_dir)
    if len(images) < 5:
        raise ConfigError(f"time requires at least 5 images, got {len(images)}")
    side = images[0].shape[0]
    K = _build_operator(base, side)
    op_norm = estimate_operator_norm(StackedOperator(K))

    labels = _dedupe([c.method for c in cfgs])
    rows = []
    bars = []
    for label, cfg in zip(labels, cfgs):
        models = _load_models(cfg, side) if cfg.guess_kind == "models" else None
        walls, iters = [], []
        for i, gt in enumerate(images):
            record, *_ = _process_image(i, gt, cfg, K, op_norm, models)
            walls.append(record["wall_seconds"])
            iters.append(record["cp_iters"])
        rows.append([label, len(walls), _fmt(np.mean(walls)), _fmt(np.std(walls)),
                     _fmt(np.mean(iters))])
        bars.append((label, float(np.mean(walls))))

    _write_csv(os.path.join(out_dir, "timing.csv"),
               ("method", "images", "mean_seconds", "std_seconds", "mean_cp_iters"),
               rows)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump({"methods": [config_to_dict(c) for c in cfgs]}, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "manifest_hash.txt"), "w") as fh:
        fh.write(sha256_file(manifest) + "\n")
    _write_versions(os.path.join(out_dir, "versions.txt"))
    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    plots.save_timing_bars(os.path.join(fig_dir, "timing.png"), bars)
    return out_dir


# ----------------------------------------------------------------- export

def generate_dataset(source, out_dir, *, seed=None) -> str:
    """Write a phantom dataset (gt images plus manifest) to out_dir."""
    if isinstance(source, (str, os.PathLike)):
        source = _load_config_file(source)
    if not isinstance(source, dict):
        raise ConfigError("config root must be a JSON object")
    dataset = _section(source, "dataset")
    gen = dataset.get("generate")
    if gen is None:
        raise ConfigError("generate requires a dataset.generate section")
    if not isinstance(gen, dict):
        raise ConfigError("dataset.generate must be an object")
    count = _int(gen, "count", 20, "dataset.generate", minimum=1)
    side = _int(gen, "side", 256, "dataset.generate", minimum=16)
    base_seed = (int(seed) if seed is not None
                 else _int(gen, "seed", _int(source, "seed", 0, "config"),
                           "dataset.generate"))
    images = generate_batch(count, side=side, seed=base_seed)
    return write_phantom_dataset(os.path.abspath(out_dir), images,
                                 base_seed=base_seed, side=side)


def export_training(source, out_dir, *, seed=None, workers=None) -> str:
    """Run the incremental solver with snapshots and export training pairs.

    The export.mode config key picks the materialized targets: gt, mb, or
    both (default). Returns the written manifest path.
    """
    if isinstance(source, (str, os.PathLike)):
        source = _load_config_file(source)
    if not isinstance(source, dict):
        raise ConfigError("config root must be a JSON object")
    raw = dict(source)
    export_sec = _section(raw, "export")
    mode = export_sec.get("mode", "both")
    if mode not in ("gt", "mb", "both"):
        raise ConfigError(f"export.mode must be gt, mb, or both, got {mode!r}")
    raw["snapshots"] = True
    cfg = parse_config(raw, seed=seed, workers=workers)
    if cfg.method not in ("inc_tpv", "inc_dg"):
        raise ConfigError(f"export-training requires an incremental method, got {cfg.method}")

    out_dir = os.path.abspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    images, _ = _load_dataset(cfg, out_dir)
    side = images[0].shape[0]
    K = _build_operator(cfg, side)
    op_norm = estimate_operator_norm(StackedOperator(K))
    models = _load_models(cfg, side) if cfg.guess_kind == "models" else None

    results = _map_images(cfg, images, K, op_norm, models)
    items = []
    skipped = []
    for i, outcome in enumerate(results):
        if isinstance(outcome, Exception):
            skipped.append(i)
            continue
        record, x, x0, y, trace = outcome
        snaps = [s / cfg.intensity_scale for s in trace.snapshots[1:]]
        items.append({"start": x0, "gt": images[i], "snapshots": snaps})
    if not items:
        raise ConfigError("export-training produced no successful solves")
    if skipped:
        with open(os.path.join(out_dir, "skipped.txt"), "w") as fh:
            fh.write("\n".join(str(i) for i in skipped) + "\n")
    return export_training_pairs(items, out_dir, mode=mode, H=cfg.incremental.H)
