"""The acceptance suite: one function per criterion, a table, an exit code.

Each criterion is checked at its stated tolerance; nothing here is tuned
at run time.  Criteria A7 and A10 contain subclauses that are known not to
hold in this bench (see README, "Acceptance status"): they are evaluated
exactly as stated and reported honestly rather than weakened.

Everything is deterministic: fixed seeds, fixed grids, no timestamps in
any artifact, so repeated invocations produce byte-identical outputs.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import bench, dynamics, harness, noise, special
from .domains import DomainSpec, NoisyDataset, mislabel_rate_monte_carlo, sample_domain
from .losses import (
    ELRState,
    LossSpec,
    elr_penalty,
    elr_penalty_grad,
    elr_update,
    loss_grad_batch,
    loss_value_batch,
    symmetry_sum,
)
from .rng import make_rng


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    budget: Optional[float] = None   # stated runtime budget, part of the criterion

    def finalize(self) -> "CriterionResult":
        if self.budget is not None and self.seconds > self.budget:
            self.passed = False
            self.detail += f"; OVER the {self.budget:.0f}s runtime budget"
        return self


def _phi(x):
    # Routed through the module attribute so tests can corrupt it.
    return special.normal_cdf(x)


# ---------------------------------------------------------------------------
# A1 / A2: closed form vs oracle, Bayes floor, monotone shift response
# ---------------------------------------------------------------------------

def _random_specs(count: int, seed: int):
    rng = make_rng(seed, 11)
    dims = [1, 2, 10, 100]
    specs = []
    for i in range(count):
        d = dims[i % len(dims)]
        mu1 = rng.normal(0.0, 1.0, size=d)
        direction = rng.normal(0.0, 1.0, size=d)
        direction /= np.linalg.norm(direction)
        sep = rng.uniform(1.0, 3.0)
        sigma = rng.uniform(0.5, 1.5)
        mu2 = mu1 + sep * direction
        alpha = rng.uniform(-1.0, 1.0)
        delta = alpha * (mu2 - mu1)
        if d > 1:
            orth = rng.normal(0.0, 1.0, size=d)
            orth -= (orth @ direction) * direction
            delta = delta + orth
        specs.append(DomainSpec(mu1, mu2, sigma, delta))
    return specs


def a1_closed_form_oracle(quick: bool = False) -> CriterionResult:
    """|closed form - Monte Carlo(1e6)| <= 3 SE on 20 randomized mixtures."""
    t0 = time.time()
    count = 6 if quick else 20
    n = 200_000 if quick else 1_000_000
    from . import domains as _domains

    worst = 0.0
    fails = 0
    for i, spec in enumerate(_random_specs(count, seed=101)):
        closed = _domains.mislabel_rate_closed_form(spec)
        est, se = mislabel_rate_monte_carlo(spec, n, seed=500 + i)
        z = abs(closed - est) / max(se, 1e-12)
        worst = max(worst, z)
        if z > 3.0:
            fails += 1
    return CriterionResult(
        "A1 closed-form vs Monte Carlo",
        fails == 0,
        f"{count} specs at n={n}: worst |closed-mc|/se = {worst:.2f} (limit 3)",
        time.time() - t0,
        budget=60.0,
    ).finalize()


def a2_bayes_floor_and_monotone(quick: bool = False) -> CriterionResult:
    """alpha=0 equals the Bayes error to 1e-10; rate strictly increases in
    alpha on [0, 1] for 10 spec shapes."""
    t0 = time.time()
    from . import domains as _domains

    count = 4 if quick else 10
    rng = make_rng(202)
    worst_gap = 0.0
    monotone_ok = True
    for _ in range(count):
        d = int(rng.choice([1, 2, 10, 100]))
        mu1 = rng.normal(0.0, 1.0, size=d)
        direction = rng.normal(0.0, 1.0, size=d)
        direction /= np.linalg.norm(direction)
        sep = rng.uniform(1.0, 3.0)
        sigma = rng.uniform(0.5, 1.5)
        mu2 = mu1 + sep * direction
        if d > 1:
            orth = rng.normal(0.0, 1.0, size=d)
            orth -= (orth @ direction) * direction
        else:
            orth = np.zeros(1)
        spec0 = DomainSpec(mu1, mu2, sigma, orth)  # alpha = 0 exactly
        floor = _phi(-np.linalg.norm(spec0.separation) / (2.0 * sigma))
        gap = abs(_domains.mislabel_rate_closed_form(spec0) - floor)
        worst_gap = max(worst_gap, gap)
        rates = [
            _domains.mislabel_rate_closed_form(spec0.with_delta(a * spec0.separation + orth))
            for a in np.linspace(0.0, 1.0, 21)
        ]
        monotone_ok = monotone_ok and all(b > a for a, b in zip(rates, rates[1:]))
    ok = worst_gap <= 1e-10 and monotone_ok
    return CriterionResult(
        "A2 Bayes floor and monotone shift",
        ok,
        f"worst |rate(alpha=0) - floor| = {worst_gap:.2e} (limit 1e-10); "
        f"strictly increasing on [0,1]: {monotone_ok}",
        time.time() - t0,
    )


# ---------------------------------------------------------------------------
# A3: the unbounded-noise region
# ---------------------------------------------------------------------------

def a3_region(quick: bool = False) -> CriterionResult:
    t0 = time.time()
    d, sigma, alpha, dconf = 100, 1.0, 0.2, 0.01
    n = 100_000 if quick else 500_000
    spec = DomainSpec(np.zeros(d), sigma * np.ones(d), sigma, alpha * sigma * np.ones(d))
    rspec = noise.RegionRSpec(dconf, spec)
    nonempty = noise.region_R_nonempty_condition(rspec)
    data = sample_domain(spec, "target", n, seed=303)
    annotated = noise.annotate_with_source(data, spec)
    in_r = np.asarray(noise.region_R_membership(data.features, rspec).in_R)
    count = int(in_r.sum())
    if count == 0:
        return CriterionResult("A3 region R unboundedness", False,
                               "no samples landed in R", time.time() - t0)
    p_mis = float(annotated.noise_mask[in_r].mean())
    thr = 1.0 - dconf
    need = thr - 3.0 * math.sqrt(thr * (1.0 - thr) / count)
    ok = nonempty and count >= (40 if quick else 200) and p_mis >= need
    return CriterionResult(
        "A3 region R unboundedness",
        ok,
        f"nonempty cond {nonempty}; {count} samples in R of {n}; "
        f"P[mislabel|R] = {p_mis:.5f} >= {need:.5f}",
        time.time() - t0,
        budget=30.0,
    ).finalize()


# ---------------------------------------------------------------------------
# A4 / A5: early-time bound grid and the noisy-correlation closed form
# ---------------------------------------------------------------------------

def a4_early_time_bound(quick: bool = False) -> CriterionResult:
    t0 = time.time()
    sigmas = (0.01, 0.02, 0.05)
    rs = (0.3, 0.5, 0.7)
    seeds = (0,) if quick else (0, 1, 2, 3, 4)
    n, d2 = (2_000, 50) if quick else (10_000, 100)
    total = kappa_ok = align_ok = empty = 0
    for sigma in sigmas:
        for r in rs:
            bound = dynamics.early_peak_bound(sigma, r)
            for seed in seeds:
                data, mu = dynamics.gen_margin_flip_data(n, d2, sigma, r, seed)
                trace = dynamics.gd_train(data, mu, eta=0.1, max_steps=30, stop_after_T=2)
                total += 1
                if trace.empty_mislabeled:
                    empty += 1
                if trace.stopping_T is None:
                    continue
                if trace.at(trace.stopping_T)["kappa_B"] >= bound:
                    kappa_ok += 1
                if dynamics.alignment_bound_check(trace, sigma, r).ok:
                    align_ok += 1
    ok = kappa_ok == total and align_ok == total
    return CriterionResult(
        "A4 early-time accuracy and alignment bounds",
        ok,
        f"kappa bound {kappa_ok}/{total}, alignment bound {align_ok}/{total} "
        f"({empty} runs had an empty mislabeled set; kappa=1 by convention)",
        time.time() - t0,
        budget=300.0,
    ).finalize()


def a5_noisy_correlation(quick: bool = False) -> CriterionResult:
    t0 = time.time()
    n = 200_000 if quick else 1_000_000
    worst = 0.0
    for i, sigma in enumerate((0.3, 0.6, 1.0)):
        for j, r in enumerate((-0.5, 0.3, 0.8)):
            exact = dynamics.expected_noisy_correlation(sigma, r)
            est, se = dynamics.noisy_correlation_monte_carlo(sigma, r, n, seed=550 + 10 * i + j)
            worst = max(worst, abs(exact - est) / max(se, 1e-12))
    return CriterionResult(
        "A5 noisy-margin correlation vs Monte Carlo",
        worst <= 3.0,
        f"3x3 grid at n={n}: worst |exact-mc|/se = {worst:.2f} (limit 3)",
        time.time() - t0,
    )


# ---------------------------------------------------------------------------
# A6: loss-zoo properties
# ---------------------------------------------------------------------------

def _random_interior_probs(rng, K: int) -> np.ndarray:
    p = rng.dirichlet(np.ones(K))
    p = np.maximum(p, 0.02)
    return p / p.sum()


def _fd_grad(f: Callable, p: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(p)
    for k in range(p.shape[0]):
        e = np.zeros_like(p)
        e[k] = h
        g[k] = (f(p + e) - f(p - e)) / (2.0 * h)
    return g


def a6_loss_zoo(quick: bool = False) -> CriterionResult:
    t0 = time.time()
    rng = make_rng(606)
    n_probs = 200 if quick else 1000
    issues = []

    for K in (2, 10):
        P = np.stack([_random_interior_probs(rng, K) for _ in range(n_probs)])
        for spec, expected in (
            (LossSpec.mae(), 2.0 * (K - 1)),
            (LossSpec.rce(), 4.0 * (K - 1)),
            (LossSpec.normalized(LossSpec.ce()), 1.0),
        ):
            sums = np.asarray([symmetry_sum(spec, p) for p in P])
            if sums.var() > 1e-18:
                issues.append(f"{spec.kind} symmetry variance {sums.var():.2e} at K={K}")
            if abs(sums.mean() - expected) > 1e-9:
                issues.append(f"{spec.kind} symmetry level {sums.mean()} != {expected}")
        for spec in (LossSpec.ce(), LossSpec.gce(0.7)):
            sums = np.asarray([symmetry_sum(spec, p) for p in P[:100]])
            if sums.var() <= 1e-18:
                issues.append(f"{spec.kind} unexpectedly symmetric at K={K}")

    # Box-Cox endpoint: gce(1) = mae / 2 pointwise.
    for _ in range(100):
        K = int(rng.choice([2, 5, 10]))
        p = _random_interior_probs(rng, K)
        y = int(rng.integers(K))
        g1 = loss_value_batch(LossSpec.gce(1.0), p[None, :], np.asarray([y]))[0]
        m = loss_value_batch(LossSpec.mae(), p[None, :], np.asarray([y]))[0]
        if abs(g1 - m / 2.0) > 1e-12:
            issues.append("gce(1) != mae/2")
            break

    # Analytic gradients against central finite differences.
    specs = [
        LossSpec.ce(), LossSpec.mae(), LossSpec.rce(), LossSpec.gce(0.7),
        LossSpec.sl(), LossSpec.gjs(), LossSpec.normalized(LossSpec.ce()),
        LossSpec.normalized(LossSpec.gce(0.7)), LossSpec.sr(),
    ]
    n_points = 25 if quick else 100
    worst_fd = 0.0
    for spec in specs:
        for _ in range(n_points):
            K = int(rng.choice([2, 5, 10]))
            p = _random_interior_probs(rng, K)
            y = int(rng.integers(K))
            target = p.copy() if spec.kind == "sr" else None
            tgt2d = None if target is None else target[None, :]

            def f(q):
                return float(
                    loss_value_batch(spec, q[None, :], np.asarray([y]), None, tgt2d)[0]
                )

            ga = loss_grad_batch(spec, p[None, :], np.asarray([y]), None, tgt2d)[0]
            gn = _fd_grad(f, p)
            rel = np.linalg.norm(ga - gn) / max(np.linalg.norm(gn), 1e-12)
            worst_fd = max(worst_fd, rel)
    if worst_fd > 1e-5:
        issues.append(f"worst finite-difference error {worst_fd:.2e} > 1e-5")

    # Moving-average penalty gradient identity to 1e-10 (plus FD).
    worst_elr = 0.0
    for _ in range(100):
        K = int(rng.choice([2, 5, 10]))
        state = ELRState.fresh(1, K, beta=0.7)
        elr_update(state, 0, _random_interior_probs(rng, K))
        p = _random_interior_probs(rng, K)
        ybar = state.targets[0]
        expected = -ybar / (1.0 - float(ybar @ p))
        got = elr_penalty_grad(state, 0, p)
        worst_elr = max(worst_elr, float(np.max(np.abs(expected - got))))
    if worst_elr > 1e-10:
        issues.append(f"elr gradient identity off by {worst_elr:.2e}")

    return CriterionResult(
        "A6 loss-zoo properties",
        not issues,
        "; ".join(issues) if issues else
        f"symmetry, endpoint, FD (worst {worst_fd:.1e}), elr identity all within tolerance",
        time.time() - t0,
    )


# ---------------------------------------------------------------------------
# A7-A10: the training bench
# ---------------------------------------------------------------------------

_BENCH_CACHE: dict = {}


def _bench_runs(seed: int, names, quick: bool = False) -> dict:
    """Train-and-cache the named standard-bench runs for one seed."""
    key = (seed, quick)
    cache = _BENCH_CACHE.setdefault(key, {})
    missing = [n for n in names if n not in cache]
    if not missing:
        return cache
    pipe = bench.standard_pipeline(seed)
    epochs = 8 if quick else None

    def cfg(loss, **kw):
        return bench.standard_train_config(loss, seed, epochs=epochs, **kw)

    recipes = {
        "ce": lambda: cfg(LossSpec.ce()),
        "elr": lambda: cfg(LossSpec.ce(), elr=(0.9, 3.0)),
        "gce": lambda: cfg(LossSpec.gce(0.7)),
        "sl": lambda: cfg(LossSpec.sl()),
        "gjs": lambda: cfg(LossSpec.gjs()),
        "corrector": lambda: cfg(LossSpec.ce(), corrector_threshold=0.75),
        "sr": lambda: cfg(LossSpec.ce(), sr_weight=3.0),
    }
    for name in missing:
        cache[name] = bench.train_on_noisy(
            pipe.init_model, pipe.target, recipes[name](), oracle_model=pipe.oracle
        )
    cache["labeling_accuracy"] = pipe.target.labeling_accuracy
    return cache


def a7_learning_curve_shape(quick: bool = False) -> CriterionResult:
    """Rise-then-memorize shape of the CE curve, and the moving-average
    regularizer's protection margins, per seed."""
    t0 = time.time()
    seeds = (0, 1) if quick else (0, 1, 2, 3, 4)
    sub = {"peak": 0, "final_near_labeling": 0, "memorized": 0,
           "elr_vs_peak": 0, "elr_vs_final": 0}
    details = []
    for seed in seeds:
        runs = _bench_runs(seed, ("ce", "elr"), quick)
        ce, elr = runs["ce"], runs["elr"]
        la = runs["labeling_accuracy"]
        peak = ce.peak_ground_truth(within_steps=90)
        f = ce.final.acc_vs_ground_truth
        e = elr.final.acc_vs_ground_truth
        sub["peak"] += peak >= la + 0.03
        sub["final_near_labeling"] += abs(f - la) <= 0.03
        sub["memorized"] += ce.final.acc_vs_noisy_labels >= 0.95
        sub["elr_vs_peak"] += e >= peak - 0.05
        sub["elr_vs_final"] += e >= f + 0.1
        details.append(f"seed {seed}: la={la:.3f} peak={peak:.3f} ce={f:.3f} elr={e:.3f}")
    n = len(seeds)
    ok = all(v == n for v in sub.values())
    counts = ", ".join(f"{k} {v}/{n}" for k, v in sub.items())
    return CriterionResult(
        "A7 learning-curve shape and ELR protection",
        ok,
        counts + " | " + "; ".join(details),
        time.time() - t0,
        budget=300.0,
    ).finalize()


def a8_memorization_speed(quick: bool = False) -> CriterionResult:
    t0 = time.time()
    seeds = (0, 1) if quick else (0, 1, 2, 3, 4)
    wins = 0
    notes = []
    for seed in seeds:
        pipe = bench.standard_pipeline(seed)
        bounded = noise.match_noise_rate(pipe.target, seed + 7)
        cfg = bench.standard_train_config(LossSpec.ce(), seed, epochs=4 if quick else 6)
        ms = bench.memorization_speed(pipe.init_model, pipe.target, bounded, cfg)
        wins += ms.steps_unbounded < ms.steps_bounded
        notes.append(f"seed {seed}: {ms.steps_unbounded} vs {ms.steps_bounded}")
    need = len(seeds) - 1
    return CriterionResult(
        "A8 memorization speed (unbounded < bounded)",
        wins >= need,
        f"{wins}/{len(seeds)} seeds (need >= {need}); steps " + "; ".join(notes),
        time.time() - t0,
    )


def a9_robust_loss_failure(quick: bool = False) -> CriterionResult:
    """Robust-loss-trained models keep the annotation noise on region R."""
    t0 = time.time()
    d = 100
    n = 100_000 if quick else 300_000
    epochs = 4 if quick else 10
    spec = DomainSpec(np.zeros(d), np.ones(d), 1.0, 0.2 * np.ones(d))
    rspec = noise.RegionRSpec(0.01, spec)
    target = sample_domain(spec, "target", n, seed=909)
    annotated = noise.annotate_with_source(target, spec)
    in_r = np.asarray(noise.region_R_membership(target.features, rspec).in_R)
    X = target.features

    def to_idx(y):
        return ((1 - y) // 2).astype(int)

    noisy_idx = NoisyDataset(X, to_idx(annotated.y_clean), to_idx(annotated.y_noisy),
                             label_set=(0, 1))
    clean_idx = NoisyDataset(X, to_idx(annotated.y_clean), to_idx(annotated.y_clean),
                             label_set=(0, 1))
    # Overconfident source model: the exact source-optimal rule at twice the
    # calibrated log-odds scale (pretrained annotators are overconfident).
    src = bench.bayes_model(np.stack([spec.mu1, spec.mu2]), spec.sigma)
    src = bench.SoftmaxModel(src.W * 2.0, src.b * 2.0)
    ref = bench.train_on_noisy(
        bench.SoftmaxModel(np.zeros((2, d)), np.zeros(2)), clean_idx,
        bench.TrainConfig(loss=LossSpec.ce(), lr=0.5, epochs=2, batch_size=128, seed=0),
    )
    results = {}
    for name, ls in (("mae", LossSpec.mae()), ("gce", LossSpec.gce(0.7))):
        run = bench.train_on_noisy(
            src, noisy_idx,
            bench.TrainConfig(loss=ls, lr=0.5, epochs=epochs, batch_size=128, seed=0),
        )
        results[name] = float(
            np.mean(run.model.predict(X[in_r]) != ref.model.predict(X[in_r]))
        )
    ok = all(v >= 0.96 for v in results.values())
    return CriterionResult(
        "A9 robust losses keep region-R noise",
        ok,
        f"{int(in_r.sum())} samples in R; disagreement with clean reference: "
        + ", ".join(f"{k}={v:.4f}" for k, v in results.items())
        + " (need >= 0.96)",
        time.time() - t0,
    )


def a10_loss_ordering(quick: bool = False) -> CriterionResult:
    t0 = time.time()
    seeds = (0, 1) if quick else (0, 1, 2, 3, 4)
    order_wins = 0
    corr_gap_ok = 0
    sr_near_ce = 0
    details = []
    for seed in seeds:
        runs = _bench_runs(seed, ("ce", "elr", "gce", "sl", "gjs", "corrector", "sr"), quick)
        f = {k: runs[k].final.acc_vs_ground_truth for k in
             ("ce", "elr", "gce", "sl", "gjs", "corrector", "sr")}
        ordered = all(f["elr"] >= f[k] for k in ("gce", "sl", "gjs")) and all(
            f[k] >= f["ce"] for k in ("gce", "sl", "gjs")
        )
        order_wins += ordered
        corr_gap_ok += f["elr"] - f["corrector"] >= 0.05
        sr_near_ce += abs(f["sr"] - f["ce"]) <= 0.03
        details.append(
            f"seed {seed}: " + " ".join(f"{k}={v:.3f}" for k, v in f.items())
        )
    n = len(seeds)
    majority = order_wins * 2 > n
    ok = majority and corr_gap_ok == n and sr_near_ce == n
    return CriterionResult(
        "A10 loss ordering, corrector gap, SR control",
        ok,
        f"ordering {order_wins}/{n} (need majority), corrector gap {corr_gap_ok}/{n}, "
        f"SR near CE {sr_near_ce}/{n} | " + "; ".join(details),
        time.time() - t0,
    )


# ---------------------------------------------------------------------------
# A11: determinism of the harness outputs
# ---------------------------------------------------------------------------

def a11_determinism(quick: bool = False, scratch: Optional[Path] = None) -> CriterionResult:
    t0 = time.time()
    import tempfile

    base = Path(tempfile.mkdtemp(prefix="shiftnoise-accept-")) if scratch is None else scratch
    cfg = harness.ExperimentConfig(
        name="determinism-probe",
        kind="etp_run",
        parameters={"n": 2000, "d": 50, "sigma": 0.05, "r": 0.5, "eta": 0.1,
                    "max_steps": 25},
        seeds=[0, 1],
    )
    rate_cfg = harness.ExperimentConfig(
        name="determinism-rates",
        kind="rate_sweep",
        parameters={"d": 2, "sigma": 1.0, "mu1": [0.0, 0.0], "mu2": [2.0, 0.0],
                    "alphas": {"start": -1.0, "stop": 1.0, "step": 0.05},
                    "mc_n": 0 if quick else 50_000},
        seeds=[0],
    )
    blobs = []
    for rep in ("first", "second"):
        rep_dir = base / rep
        for c in (cfg, rate_cfg):
            harness.run_experiment(c, out_dir=str(rep_dir / c.name))
        files = sorted(p for p in rep_dir.rglob("*") if p.is_file())
        blobs.append({str(p.relative_to(rep_dir)): p.read_bytes() for p in files})
    same = blobs[0] == blobs[1]
    n_files = len(blobs[0])
    return CriterionResult(
        "A11 determinism (byte-identical reruns)",
        same and n_files > 0,
        f"{n_files} files compared byte-for-byte: {'identical' if same else 'DIFFER'}",
        time.time() - t0,
    )


# ---------------------------------------------------------------------------
# the suite
# ---------------------------------------------------------------------------

CRITERIA = (
    a1_closed_form_oracle,
    a2_bayes_floor_and_monotone,
    a3_region,
    a4_early_time_bound,
    a5_noisy_correlation,
    a6_loss_zoo,
    a7_learning_curve_shape,
    a8_memorization_speed,
    a9_robust_loss_failure,
    a10_loss_ordering,
    a11_determinism,
)

# Subclauses established (and documented) as out of reach for this bench;
# the criteria still run exactly as stated.  See README, "Acceptance status".
KNOWN_DEFECTS = {
    "A7 learning-curve shape and ELR protection":
        "ELR-protection subclauses (elr_vs_peak, elr_vs_final)",
    "A10 loss ordering, corrector gap, SR control":
        "ordering-majority and corrector-gap subclauses",
}


def run_all(quick: bool = False, out_dir: Optional[str] = None) -> int:
    """Run every criterion, print the table, optionally write a report.

    Returns 0 iff all criteria pass.
    """
    t_start = time.time()
    results = [fn(quick=quick) for fn in CRITERIA]
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        note = ""
        if not r.passed and r.name in KNOWN_DEFECTS:
            note = f"  [known: {KNOWN_DEFECTS[r.name]}]"
        lines.append(f"{status}  {r.name:<{width}}{note}")
        lines.append(f"      {r.detail}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed"
                 + (" [quick mode: reduced sample sizes]" if quick else ""))
    table = "\n".join(lines)
    print(table)
    print(f"(wall time {time.time() - t_start:.1f}s; not part of the table)")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "acceptance.txt").write_text(table + "\n", encoding="utf-8")
        report = {
            "schema_version": harness.SCHEMA_VERSION,
            "quick": quick,
            "results": [
                {"name": r.name, "passed": r.passed, "detail": r.detail}
                for r in results
            ],
        }
        (out / "acceptance.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0 if n_pass == len(results) else 1
