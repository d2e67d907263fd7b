"""Config-driven experiment runner.

An experiment config is a TOML or JSON document:

    name = "my-sweep"
    kind = "rate_sweep"          # one of KINDS below
    seeds = [0, 1, 2]
    # output_dir = "runs/my-sweep"   (optional; defaults under the output root)

    [parameters]
    d = 2
    sigma = 1.0
    ...

Every kind validates its parameters against a schema before anything is
computed or written; a failed validation raises ConfigError naming the
offending field and leaves no files behind.  Outputs are CSV (fixed
header, UTF-8, '.' decimal, 17 significant digits so doubles round-trip)
plus one JSON summary per experiment with a stable config hash, per-seed
metrics, aggregates, and pass/fail flags for any bound checks.  Identical
configs produce byte-identical outputs regardless of worker count: sweep
points are ordered by grid index, never by completion time.

The default output root is the environment variable SHIFTNOISE_OUT, else
``./runs``.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import bench, domains, dynamics, noise
from .errors import ConfigError, SpecError
from .losses import LossSpec

SCHEMA_VERSION = 1

KINDS = (
    "rate_sweep",
    "region_check",
    "etp_run",
    "etp_grid",
    "bench_run",
    "bench_compare",
    "memorization",
)

GRID_KINDS = ("etp_grid", "bench_compare")


def output_root() -> Path:
    return Path(os.environ.get("SHIFTNOISE_OUT", "runs"))


# ---------------------------------------------------------------------------
# config loading and validation
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    name: str
    kind: str
    parameters: dict
    seeds: list
    output_dir: Optional[str] = None

    def resolved_output_dir(self, override: Optional[str] = None) -> Path:
        if override is not None:
            return Path(override)
        if self.output_dir is not None:
            return Path(self.output_dir)
        return output_root() / self.name

    def canonical(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "parameters": self.parameters,
            "seeds": list(self.seeds),
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _load_document(path: Path) -> dict:
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ImportError:  # pragma: no cover - py310 path
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    raise ConfigError("path", f"config must be .toml or .json, got {path.suffix!r}")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("path", f"no config file at {path}")
    doc = _load_document(path)
    for key in ("name", "kind", "seeds"):
        if key not in doc:
            raise ConfigError(key, "required field is missing")
    name = doc["name"]
    if not isinstance(name, str) or not name.strip():
        raise ConfigError("name", "must be a nonempty string")
    kind = doc["kind"]
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {KINDS}, got {kind!r}")
    seeds = doc["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) and s >= 0 for s in seeds
    ):
        raise ConfigError("seeds", "must be a nonempty list of nonnegative integers")
    params = doc.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("parameters", "must be a table/object")
    unknown = set(doc) - {"name", "kind", "seeds", "parameters", "output_dir"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level field")
    cfg = ExperimentConfig(
        name=name.strip(),
        kind=kind,
        parameters=params,
        seeds=[int(s) for s in seeds],
        output_dir=doc.get("output_dir"),
    )
    validate_parameters(cfg)
    return cfg


def _need(params: dict, field_name: str, typ, kind: str):
    if field_name not in params:
        raise ConfigError(f"parameters.{field_name}", f"required for kind {kind!r}")
    val = params[field_name]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, typ) or isinstance(val, bool):
        raise ConfigError(
            f"parameters.{field_name}",
            f"expected {getattr(typ, '__name__', typ)}, got {type(val).__name__}",
        )
    return val


def _optional(params: dict, field_name: str, typ, default):
    if field_name not in params:
        return default
    val = params[field_name]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, typ) or isinstance(val, bool):
        raise ConfigError(
            f"parameters.{field_name}",
            f"expected {getattr(typ, '__name__', typ)}, got {type(val).__name__}",
        )
    return val


def _vector(params: dict, field_name: str, d: int, kind: str) -> np.ndarray:
    raw = _need(params, field_name, list, kind)
    try:
        arr = np.asarray([float(v) for v in raw], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"parameters.{field_name}", "must be a list of numbers")
    if arr.shape != (d,):
        raise ConfigError(
            f"parameters.{field_name}", f"expected length {d}, got {arr.shape[0]}"
        )
    return arr


def _domain_spec(params: dict, kind: str) -> domains.DomainSpec:
    d = _need(params, "d", int, kind)
    if d < 1:
        raise ConfigError("parameters.d", "must be >= 1")
    sigma = _need(params, "sigma", float, kind)
    mu1 = _vector(params, "mu1", d, kind)
    mu2 = _vector(params, "mu2", d, kind)
    delta = (
        _vector(params, "delta", d, kind)
        if "delta" in params
        else np.zeros(d)
    )
    try:
        return domains.DomainSpec(mu1, mu2, sigma, delta)
    except SpecError as e:
        raise ConfigError("parameters", str(e))


def _loss_spec(params: dict, field_name: str = "loss") -> LossSpec:
    raw = params.get(field_name, {"kind": "ce"})
    if not isinstance(raw, dict):
        raise ConfigError(f"parameters.{field_name}", "must be a tagged object")
    try:
        return LossSpec.from_json(raw)
    except SpecError as e:
        raise ConfigError(f"parameters.{field_name}", str(e))


def validate_parameters(cfg: ExperimentConfig) -> None:
    """Schema-check cfg.parameters for its kind; raises ConfigError."""
    p, kind = cfg.parameters, cfg.kind
    if kind == "rate_sweep":
        _domain_spec(p, kind)
        alphas = _need(p, "alphas", dict, kind)
        for key in ("start", "stop", "step"):
            if key not in alphas:
                raise ConfigError(f"parameters.alphas.{key}", "required")
        if float(alphas["step"]) <= 0:
            raise ConfigError("parameters.alphas.step", "must be positive")
        _optional(p, "mc_n", int, 0)
    elif kind == "region_check":
        d = _need(p, "d", int, kind)
        if d < 1:
            raise ConfigError("parameters.d", "must be >= 1")
        _need(p, "sigma", float, kind)
        _need(p, "alpha", float, kind)
        dc = _need(p, "delta_conf", float, kind)
        if not (0 < dc < 1):
            raise ConfigError("parameters.delta_conf", "must lie in (0, 1)")
        n = _need(p, "n_samples", int, kind)
        if n < 1000:
            raise ConfigError("parameters.n_samples", "must be >= 1000")
    elif kind in ("etp_run", "etp_grid"):
        n = _need(p, "n", int, kind)
        if n < 1:
            raise ConfigError("parameters.n", "must be >= 1")
        d = _need(p, "d", int, kind)
        if d < 1:
            raise ConfigError("parameters.d", "must be >= 1")
        eta = _optional(p, "eta", float, 0.1)
        if eta <= 0:
            raise ConfigError("parameters.eta", "must be positive")
        _optional(p, "max_steps", int, None)
        if kind == "etp_run":
            sigma = _need(p, "sigma", float, kind)
            r = _need(p, "r", float, kind)
            if sigma <= 0:
                raise ConfigError("parameters.sigma", "must be positive")
            if not (r < 1):
                raise ConfigError("parameters.r", "must satisfy r < 1")
        else:
            sigmas = _need(p, "sigmas", list, kind)
            rs = _need(p, "rs", list, kind)
            if not sigmas or any(float(s) <= 0 for s in sigmas):
                raise ConfigError("parameters.sigmas", "must be a nonempty list of positives")
            if not rs or any(not (float(r) < 1) for r in rs):
                raise ConfigError("parameters.rs", "must be a nonempty list of values < 1")
    elif kind in ("bench_run", "bench_compare", "memorization"):
        for fname, default in (("epochs", bench.STANDARD["epochs"]),):
            v = _optional(p, fname, int, default)
            if v < 1:
                raise ConfigError(f"parameters.{fname}", "must be >= 1")
        if kind == "bench_run":
            _loss_spec(p)
            if "noise" in p:
                if not isinstance(p["noise"], dict):
                    raise ConfigError("parameters.noise", "must be a tagged object")
                try:
                    nc = noise.NoiseConfig.from_json(p["noise"])
                except SpecError as e:
                    raise ConfigError("parameters.noise", str(e))
                if nc.kind != "symmetric":
                    # source_model is the bench default; margin_flip is the
                    # binary etp kinds' process.
                    raise ConfigError(
                        "parameters.noise.kind",
                        "bench_run overrides support only 'symmetric' noise",
                    )
                if nc.K != int(p.get("K", bench.STANDARD["K"])):
                    raise ConfigError("parameters.noise.K", "must match the bench K")
            elr = p.get("elr")
            if elr is not None:
                if not isinstance(elr, dict) or "beta" not in elr or "lambda" not in elr:
                    raise ConfigError("parameters.elr", "must carry beta and lambda")
                if not (0 <= float(elr["beta"]) < 1):
                    raise ConfigError("parameters.elr.beta", "must lie in [0, 1)")
                if float(elr["lambda"]) < 0:
                    raise ConfigError("parameters.elr.lambda", "must be nonnegative")
            th = p.get("corrector_threshold")
            if th is not None and not (0 < float(th) < 1):
                raise ConfigError("parameters.corrector_threshold", "must lie in (0, 1)")
        if kind == "bench_compare":
            losses_list = _need(p, "losses", list, kind)
            if not losses_list:
                raise ConfigError("parameters.losses", "must be nonempty")
            for i, obj in enumerate(losses_list):
                if not isinstance(obj, dict):
                    raise ConfigError(f"parameters.losses[{i}]", "must be a tagged object")
                try:
                    LossSpec.from_json(obj)
                except SpecError as e:
                    raise ConfigError(f"parameters.losses[{i}]", str(e))
    else:  # pragma: no cover - KINDS is closed
        raise ConfigError("kind", f"unhandled kind {kind!r}")


# ---------------------------------------------------------------------------
# CSV / JSON writers
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    x = float(v)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _fmt_path(v) -> str:
    """Shortest round-trip form, for path segments (CSV cells use _fmt)."""
    return repr(float(v))


def write_csv(path: Path, header: list, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if math.isnan(x) else x
    return obj


@dataclass
class RunSummary:
    config_hash: str
    name: str
    kind: str
    per_seed: dict = field(default_factory=dict)
    aggregate: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def all_flags_pass(self) -> bool:
        return all(bool(v) for v in self.flags.values())

    def to_json(self) -> dict:
        return _jsonable(
            {
                "schema_version": SCHEMA_VERSION,
                "config_hash": self.config_hash,
                "name": self.name,
                "kind": self.kind,
                "per_seed": self.per_seed,
                "aggregate": self.aggregate,
                "flags": self.flags,
            }
        )


def _aggregate(per_seed: dict) -> dict:
    """mean/std across seeds for every numeric scalar metric."""
    keys = set()
    for metrics in per_seed.values():
        keys.update(
            k for k, v in metrics.items() if isinstance(v, (int, float, np.floating))
            and not isinstance(v, bool)
        )
    out = {}
    for k in sorted(keys):
        vals = [
            float(m[k])
            for m in per_seed.values()
            if k in m and not (isinstance(m[k], float) and math.isnan(m[k]))
        ]
        if vals:
            out[k] = {
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
            }
    return out


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------

TRACE_HEADER = ["step", "alignment", "norm", "kappa_B", "loss", "acc_clean", "acc_noisy_fit"]
BENCH_HEADER = TRACE_HEADER + ["acc_vs_noisy_labels", "labeling_accuracy"]


def _bench_rows(result: bench.BenchResult):
    la = result.labeling_accuracy
    for r in result.records:
        yield [
            r.step, r.alignment, r.weight_norm, r.kappa_on_mislabeled, r.mean_loss,
            r.acc_vs_ground_truth, r.acc_vs_noisy_labels, r.acc_vs_noisy_labels, la,
        ]


def _run_rate_sweep(cfg: ExperimentConfig, out: Path) -> RunSummary:
    p = cfg.parameters
    spec0 = _domain_spec(p, cfg.kind)
    a = p["alphas"]
    start, stop, step = float(a["start"]), float(a["stop"]), float(a["step"])
    n_points = int(math.floor((stop - start) / step + 0.5)) + 1
    alphas = [start + i * step for i in range(n_points)]
    mc_n = int(p.get("mc_n", 0))
    v = spec0.separation
    rows = []
    for i, alpha in enumerate(alphas):
        spec = spec0.with_delta(alpha * v)
        rate = domains.mislabel_rate_closed_form(spec)
        row = [alpha, rate]
        if mc_n:
            est, se = domains.mislabel_rate_monte_carlo(spec, mc_n, cfg.seeds[0] + i)
            row += [est, se]
        rows.append(row)
    header = ["alpha", "rate_closed_form"] + (["rate_mc", "rate_mc_se"] if mc_n else [])
    write_csv(out / "rates.csv", header, rows)
    summary = RunSummary(cfg.config_hash, cfg.name, cfg.kind)
    rates = [r[1] for r in rows]
    summary.aggregate = {
        "min_rate": {"mean": min(rates), "std": 0.0},
        "max_rate": {"mean": max(rates), "std": 0.0},
    }
    summary.flags["rate_in_unit_interval"] = all(0.0 <= r <= 1.0 for r in rates)
    if mc_n:
        summary.flags["mc_within_3se"] = all(
            abs(r[1] - r[2]) <= max(3.0 * r[3], 1e-9) for r in rows
        )
    return summary


def _run_region_check(cfg: ExperimentConfig, out: Path) -> RunSummary:
    p = cfg.parameters
    d = p["d"]
    sigma = float(p["sigma"])
    alpha = float(p["alpha"])
    mu1 = np.zeros(d)
    mu2 = mu1 + sigma * np.ones(d)  # the convention the region formulas assume
    spec = domains.DomainSpec(mu1, mu2, sigma, alpha * (mu2 - mu1))
    rspec = noise.RegionRSpec(float(p["delta_conf"]), spec)
    n = int(p["n_samples"])
    summary = RunSummary(cfg.config_hash, cfg.name, cfg.kind)
    rows = []
    for seed in cfg.seeds:
        data = domains.sample_domain(spec, "target", n, seed)
        annotated = noise.annotate_with_source(data, spec)
        member = noise.region_R_membership(data.features, rspec)
        in_r = np.asarray(member.in_R)
        count = int(in_r.sum())
        mis = float(annotated.noise_mask[in_r].mean()) if count else math.nan
        metrics = {
            "n_in_region": count,
            "region_fraction": count / n,
            "mislabel_given_region": mis,
            "overall_noise_rate": annotated.noise_rate,
        }
        summary.per_seed[str(seed)] = metrics
        rows.append([seed, count, count / n, mis, annotated.noise_rate])
    write_csv(
        out / "region.csv",
        ["seed", "n_in_region", "region_fraction", "mislabel_given_region", "overall_noise_rate"],
        rows,
    )
    summary.aggregate = _aggregate(summary.per_seed)
    summary.flags["nonempty_condition"] = noise.region_R_nonempty_condition(rspec)
    thr = 1.0 - rspec.delta_conf
    summary.flags["unbounded_noise_in_region"] = all(
        (m["n_in_region"] == 0)
        or (
            m["mislabel_given_region"]
            >= thr - 3.0 * math.sqrt(thr * (1 - thr) / max(m["n_in_region"], 1))
        )
        for m in summary.per_seed.values()
    )
    return summary


def _etp_point(seed: int, n: int, d: int, sigma: float, r: float, eta: float,
               max_steps, stop_after_T) -> tuple:
    data, mu = dynamics.gen_margin_flip_data(n, d, sigma, r, seed)
    trace = dynamics.gd_train(data, mu, eta=eta, max_steps=max_steps,
                              stop_after_T=stop_after_T)
    bound = dynamics.early_peak_bound(sigma, r)
    metrics = {
        "noise_rate": data.noise_rate,
        "stopping_T": trace.stopping_T if trace.stopping_T is not None else -1,
        "empty_mislabeled": trace.empty_mislabeled,
        "diverged": trace.diverged,
        "bound": bound,
    }
    ok = None
    if trace.stopping_T is not None:
        at_T = trace.at(trace.stopping_T)
        chk = dynamics.alignment_bound_check(trace, sigma, r)
        metrics.update(
            kappa_at_T=at_T["kappa_B"],
            alignment_at_T=at_T["alignment"],
            cosine_at_T=chk.cosine,
            alignment_bound=chk.bound,
        )
        ok = bool(at_T["kappa_B"] >= bound) and chk.ok
    metrics["bound_satisfied"] = bool(ok) if ok is not None else False
    return trace, metrics


def _run_etp_run(cfg: ExperimentConfig, out: Path) -> RunSummary:
    p = cfg.parameters
    summary = RunSummary(cfg.config_hash, cfg.name, cfg.kind)
    for seed in cfg.seeds:
        trace, metrics = _etp_point(
            seed, p["n"], p["d"], float(p["sigma"]), float(p["r"]),
            float(p.get("eta", 0.1)), p.get("max_steps"), p.get("stop_after_T"),
        )
        write_csv(out / f"{seed}.csv", TRACE_HEADER, trace.rows())
        summary.per_seed[str(seed)] = metrics
    summary.aggregate = _aggregate(summary.per_seed)
    summary.flags["bound_satisfied"] = all(
        m["bound_satisfied"] for m in summary.per_seed.values()
    )
    return summary


def _etp_grid_worker(args) -> tuple:
    (i, j, sigma, r, seed, p) = args
    trace, metrics = _etp_point(
        seed, p["n"], p["d"], sigma, r, float(p.get("eta", 0.1)),
        p.get("max_steps"), p.get("stop_after_T"),
    )
    rows = list(trace.rows())
    return (i, j, seed, metrics, rows)


def _run_etp_grid(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> RunSummary:
    p = cfg.parameters
    sigmas = [float(s) for s in p["sigmas"]]
    rs = [float(r) for r in p["rs"]]
    tasks = [
        (i, j, sigma, r, seed, p)
        for i, sigma in enumerate(sigmas)
        for j, r in enumerate(rs)
        for seed in cfg.seeds
    ]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_etp_grid_worker, tasks))
    else:
        results = [_etp_grid_worker(t) for t in tasks]
    results.sort(key=lambda t: (t[0], t[1], t[2]))
    summary = RunSummary(cfg.config_hash, cfg.name, cfg.kind)
    agg_rows = []
    all_ok = True
    for i, j, seed, metrics, rows in results:
        sigma, r = sigmas[i], rs[j]
        point_dir = out / f"sigma={_fmt_path(sigma)}_r={_fmt_path(r)}"
        write_csv(point_dir / f"{seed}.csv", TRACE_HEADER, rows)
        key = f"sigma={_fmt_path(sigma)},r={_fmt_path(r)},seed={seed}"
        summary.per_seed[key] = metrics
        all_ok = all_ok and metrics["bound_satisfied"]
        agg_rows.append(
            [sigma, r, seed, metrics["noise_rate"], metrics["stopping_T"],
             metrics.get("kappa_at_T", math.nan), metrics["bound"],
             metrics.get("cosine_at_T", math.nan),
             metrics.get("alignment_bound", math.nan),
             metrics["bound_satisfied"], metrics["empty_mislabeled"]]
        )
    write_csv(
        out / "grid.csv",
        ["sigma", "r", "seed", "noise_rate", "stopping_T", "kappa_at_T",
         "kappa_bound", "cosine_at_T", "alignment_bound", "bound_satisfied",
         "empty_mislabeled"],
        agg_rows,
    )
    summary.aggregate = _aggregate(summary.per_seed)
    summary.flags["bound_satisfied_all"] = all_ok
    return summary


def _bench_setup(p: dict, seed: int):
    overrides = {
        k: p[k]
        for k in ("K", "d", "sep", "sigma", "delta_scale", "n_target")
        if k in p
    }
    return bench.standard_pipeline(seed, overrides=overrides or None)


def _train_config_from(p: dict, loss: LossSpec, seed: int) -> bench.TrainConfig:
    elr = p.get("elr")
    return bench.TrainConfig(
        loss=loss,
        elr=(float(elr["beta"]), float(elr["lambda"])) if elr else None,
        sr_weight=float(p["sr_weight"]) if "sr_weight" in p else None,
        corrector_threshold=(
            float(p["corrector_threshold"]) if p.get("corrector_threshold") else None
        ),
        lr=float(p.get("lr", bench.STANDARD["lr"])),
        epochs=int(p.get("epochs", bench.STANDARD["epochs"])),
        batch_size=int(p.get("batch_size", bench.STANDARD["batch_size"])),
        seed=seed,
    )


def _bench_metrics(res: bench.BenchResult) -> dict:
    peak90 = res.peak_ground_truth(within_steps=90)
    return {
        "labeling_accuracy": res.labeling_accuracy,
        "peak_gt_within_90": peak90,
        "final_gt": res.final.acc_vs_ground_truth,
        "final_noisy_fit": res.final.acc_vs_noisy_labels,
        "steps_to_noisy_fit": (
            res.steps_to_noisy_fit if res.steps_to_noisy_fit is not None else -1
        ),
        "diverged": res.diverged,
    }


def _run_bench_run(cfg: ExperimentConfig, out: Path) -> RunSummary:
    p = cfg.parameters
    loss = _loss_spec(p)
    summary = RunSummary(cfg.config_hash, cfg.name, cfg.kind)
    noise_cfg = noise.NoiseConfig.from_json(p["noise"]) if "noise" in p else None
    for seed in cfg.seeds:
        pipe = _bench_setup(p, seed)
        target = pipe.target
        if noise_cfg is not None:
            # Configurable label process: applied to the clean target labels
            # in place of the annotator's pseudo-labels.
            target = noise_cfg.apply(pipe.target_clean)
        res = bench.train_on_noisy(
            pipe.init_model, target, _train_config_from(p, loss, seed),
            oracle_model=pipe.oracle,
        )
        write_csv(out / f"{seed}.csv", BENCH_HEADER, _bench_rows(res))
        summary.per_seed[str(seed)] = _bench_metrics(res)
    summary.aggregate = _aggregate(summary.per_seed)
    summary.flags["no_divergence"] = not any(
        m["diverged"] for m in summary.per_seed.values()
    )
    return summary


def _bench_compare_worker(args) -> tuple:
    (i, label, loss_json, seed, p) = args
    pipe = _bench_setup(p, seed)
    res = bench.train_on_noisy(
        pipe.init_model, pipe.target,
        _train_config_from(p, LossSpec.from_json(loss_json), seed),
        oracle_model=pipe.oracle,
    )
    return (i, label, seed, _bench_metrics(res), list(_bench_rows(res)))


def _run_bench_compare(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> RunSummary:
    p = cfg.parameters
    loss_objs = [LossSpec.from_json(obj) for obj in p["losses"]]
    labels = []
    for i, spec in enumerate(loss_objs):
        base = spec.kind if spec.kind != "normalized" else f"normalized-{spec.inner.kind}"
        labels.append(f"{i:02d}-{base}")
    tasks = [
        (i, labels[i], loss_objs[i].to_json(), seed, p)
        for i in range(len(loss_objs))
        for seed in cfg.seeds
    ]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_bench_compare_worker, tasks))
    else:
        results = [_bench_compare_worker(t) for t in tasks]
    results.sort(key=lambda t: (t[0], t[2]))
    summary = RunSummary(cfg.config_hash, cfg.name, cfg.kind)
    rows = []
    for _, label, seed, m, curve_rows in results:
        write_csv(out / label / f"{seed}.csv", BENCH_HEADER, curve_rows)
        summary.per_seed[f"{label},seed={seed}"] = m
        rows.append([label, seed, m["labeling_accuracy"], m["peak_gt_within_90"],
                     m["final_gt"], m["final_noisy_fit"]])
    write_csv(
        out / "compare.csv",
        ["loss", "seed", "labeling_accuracy", "peak_gt_within_90", "final_gt",
         "final_noisy_fit"],
        rows,
    )
    summary.aggregate = _aggregate(summary.per_seed)
    summary.flags["no_divergence"] = not any(
        m["diverged"] for m in summary.per_seed.values()
    )
    return summary


def _run_memorization(cfg: ExperimentConfig, out: Path) -> RunSummary:
    p = cfg.parameters
    summary = RunSummary(cfg.config_hash, cfg.name, cfg.kind)
    rows = []
    for seed in cfg.seeds:
        pipe = _bench_setup(p, seed)
        bounded = noise.match_noise_rate(pipe.target, seed + 7)
        ms = bench.memorization_speed(
            pipe.init_model, pipe.target, bounded,
            _train_config_from(p, LossSpec.ce(), seed),
        )
        metrics = {
            "steps_unbounded": ms.steps_unbounded,
            "steps_bounded": ms.steps_bounded,
            "budget": ms.budget,
            "unbounded_faster": ms.steps_unbounded < ms.steps_bounded,
        }
        summary.per_seed[str(seed)] = metrics
        rows.append([seed, ms.steps_unbounded, ms.steps_bounded, ms.budget,
                     metrics["unbounded_faster"]])
    write_csv(
        out / "memorization.csv",
        ["seed", "steps_unbounded", "steps_bounded", "budget", "unbounded_faster"],
        rows,
    )
    summary.aggregate = _aggregate(summary.per_seed)
    wins = sum(1 for m in summary.per_seed.values() if m["unbounded_faster"])
    summary.flags["unbounded_faster_majority"] = wins * 2 > len(summary.per_seed)
    return summary


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def run_experiment(
    cfg: ExperimentConfig,
    out_dir: Optional[str] = None,
    jobs: int = 1,
) -> RunSummary:
    """Execute a validated config; write outputs; return the summary.

    Any exception removes the partially-written output directory (if this
    call created it) so failed runs leave nothing behind.
    """
    validate_parameters(cfg)
    out = cfg.resolved_output_dir(out_dir)
    existed_before = out.exists()
    out.mkdir(parents=True, exist_ok=True)
    try:
        if cfg.kind == "rate_sweep":
            summary = _run_rate_sweep(cfg, out)
        elif cfg.kind == "region_check":
            summary = _run_region_check(cfg, out)
        elif cfg.kind == "etp_run":
            summary = _run_etp_run(cfg, out)
        elif cfg.kind == "etp_grid":
            summary = _run_etp_grid(cfg, out, jobs=jobs)
        elif cfg.kind == "bench_run":
            summary = _run_bench_run(cfg, out)
        elif cfg.kind == "bench_compare":
            summary = _run_bench_compare(cfg, out, jobs=jobs)
        elif cfg.kind == "memorization":
            summary = _run_memorization(cfg, out)
        else:  # pragma: no cover
            raise ConfigError("kind", f"unhandled kind {cfg.kind!r}")
    except BaseException:
        if not existed_before:
            shutil.rmtree(out, ignore_errors=True)
        raise
    (out / "summary.json").write_text(
        json.dumps(summary.to_json(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return summary


def run(config_path, out_dir: Optional[str] = None, strict: bool = False) -> int:
    """CLI semantics for `run`: 0 on success, 1 on validation failure,
    2 on bound-check failure under --strict."""
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        print(f"error: {e}")
        return 1
    summary = run_experiment(cfg, out_dir=out_dir)
    out = cfg.resolved_output_dir(out_dir)
    print(f"{cfg.name}: kind={cfg.kind} hash={summary.config_hash} -> {out}")
    for flag, value in summary.flags.items():
        print(f"  {flag}: {'pass' if value else 'FAIL'}")
    if strict and not summary.all_flags_pass:
        return 2
    return 0


def sweep(config_path, jobs: int = 1, out_dir: Optional[str] = None,
          strict: bool = False) -> int:
    """CLI semantics for `sweep`: parallel grid execution."""
    try:
        cfg = load_config(config_path)
        if cfg.kind not in GRID_KINDS:
            raise ConfigError("kind", f"sweep requires a grid kind {GRID_KINDS}")
        if jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
    except ConfigError as e:
        print(f"error: {e}")
        return 1
    summary = run_experiment(cfg, out_dir=out_dir, jobs=jobs)
    out = cfg.resolved_output_dir(out_dir)
    print(f"{cfg.name}: kind={cfg.kind} hash={summary.config_hash} jobs={jobs} -> {out}")
    for flag, value in summary.flags.items():
        print(f"  {flag}: {'pass' if value else 'FAIL'}")
    if strict and not summary.all_flags_pass:
        return 2
    return 0
