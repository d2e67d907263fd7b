"""Multiclass synthetic training bench.

Pipeline mirroring adaptation-by-self-training at desk scale:

1. draw a K-class isotropic Gaussian source domain and a translated target
   domain (``gen_multiclass_domains``);
2. fit a linear softmax model on clean source data (``fit_source_model``);
3. let that model annotate the target set (``pseudo_label``); its argmax
   labels are the noisy labels, and their accuracy is the "labeling
   accuracy" baseline of all learning curves;
4. continue training on the pseudo-labeled target data under a configured
   loss (``train_on_noisy``), optionally with the moving-average
   regularizer or an end-of-epoch relabeling corrector, recording accuracy
   curves against both the ground truth and the noisy labels.

A linear softmax model is enough here: the pseudo-labels are produced by a
linear model, hence exactly realizable, and memorizing them is the failure
mode under study.  Plain SGD without momentum keeps the dynamics the ones
analyzed in :mod:`shiftnoise.dynamics`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .domains import NoisyDataset
from .errors import SpecError
from .losses import (
    ELRState,
    LossSpec,
    elr_penalty_batch,
    elr_update_batch,
    gjs_slot_grads,
    loss_grad_batch,
    loss_value_batch,
)
from .rng import make_rng

DIVERGENCE_NORM = 1e6

# The bench's reference configuration.  The annotator is a fixed artifact
# (one source model per geometry, like one pretrained checkpoint per
# transfer pair): it is fit once, on a small source sample with a long
# schedule, so its decision rule carries idiosyncratic components that
# continued training picks up later than the shared cluster structure --
# which is what makes the early ground-truth peak visible at desk scale.
# Labeling accuracy lands around 0.6-0.65.  Run seeds vary the target draw
# and the batch order, never the annotator.
STANDARD = dict(
    K=5, d=20, sep=2.0, sigma=1.0, delta_scale=1.0,
    n_target=20_000,
    n_source=80, source_lr=2.0, source_epochs=400, annotator_seed=0,
    init_weight_norm=0.1,
    lr=0.5, batch_size=128, epochs=30,
)


@dataclass
class SoftmaxModel:
    """Linear softmax classifier: p(x) = softmax(W x + b)."""

    W: np.ndarray
    b: np.ndarray
    train_accuracy: Optional[float] = None

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise SpecError(f"W must be (K, d) and b (K,), got {W.shape}, {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise SpecError("model parameters must be finite")
        self.W, self.b = W, b

    @property
    def K(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def scores(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W.T + self.b

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        z = self.scores(X)
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax breaks ties toward the lowest class index.
        return self.scores(X).argmax(axis=1)

    def copy(self) -> "SoftmaxModel":
        return SoftmaxModel(self.W.copy(), self.b.copy(), self.train_accuracy)


def tempered_copy(model: SoftmaxModel, weight_norm: float = 0.1) -> SoftmaxModel:
    """Rescale a model's parameters to a small weight norm.

    The argmax (hence every hard prediction) is unchanged, but the softmax
    confidence collapses toward uniform, so continued training re-grows the
    weights through the early mean-driven phase instead of starting fully
    saturated on its own labels.  This is the desk-scale stand-in for
    initializing a network whose decision structure comes from the source
    but whose fit to the target is not yet confident.
    """
    s = weight_norm / max(float(np.linalg.norm(model.W)), 1e-12)
    return SoftmaxModel(model.W * s, model.b * s)


class MulticlassDomains(NamedTuple):
    source: NoisyDataset
    target: NoisyDataset
    source_means: np.ndarray
    target_means: np.ndarray
    delta: np.ndarray


def gen_multiclass_domains(
    K: int,
    d: int,
    sep: float,
    sigma: float,
    delta_scale: float,
    seed: int,
    n_source: int = 20_000,
    n_target: int = 20_000,
    shift_pair: tuple = (0, 1),
) -> MulticlassDomains:
    """K-class generalization of the two-component construction.

    Class means sit at sep * e_k on the first K coordinate axes; the target
    domain translates every mean by delta_scale times the unit vector from
    class shift_pair[0]'s mean toward class shift_pair[1]'s.  Equal priors,
    isotropic sigma.
    """
    if K < 2:
        raise SpecError(f"K must be >= 2, got {K}")
    if d < K:
        raise SpecError(f"d must be >= K so class means are orthogonal, got d={d} < K={K}")
    if sep <= 0 or sigma <= 0:
        raise SpecError("sep and sigma must be positive")
    a, bcls = shift_pair
    if not (0 <= a < K and 0 <= bcls < K and a != bcls):
        raise SpecError(f"shift_pair must name two distinct classes, got {shift_pair}")
    means = np.zeros((K, d))
    means[np.arange(K), np.arange(K)] = sep
    direction = means[bcls] - means[a]
    delta = delta_scale * direction / np.linalg.norm(direction)
    rng = make_rng(seed)
    label_set = tuple(range(K))

    def draw(n, shift):
        y = rng.integers(0, K, size=n)
        X = means[y] + shift + sigma * rng.standard_normal((n, d))
        return NoisyDataset(X, y, y, label_set=label_set)

    source = draw(n_source, 0.0)
    target = draw(n_target, delta)
    return MulticlassDomains(source, target, means, means + delta, delta)


def bayes_model(means: np.ndarray, sigma: float) -> SoftmaxModel:
    """The exact posterior-maximizing softmax model for known means.

    With equal priors and isotropic sigma the posterior argmax is the
    nearest mean, i.e. a linear rule with W_k = mu_k / sigma^2 and
    b_k = -|mu_k|^2 / (2 sigma^2).
    """
    means = np.asarray(means, dtype=float)
    s2 = sigma**2
    return SoftmaxModel(means / s2, -0.5 * (means * means).sum(axis=1) / s2)


def _sgd_epochs(
    model: SoftmaxModel,
    X: np.ndarray,
    y: np.ndarray,
    lr: float,
    epochs: int,
    batch_size: int,
    rng: np.random.Generator,
    on_step=None,
) -> bool:
    """Plain minibatch SGD on cross entropy; returns the divergence flag."""
    n = X.shape[0]
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            P = model.predict_proba(X[idx])
            G = P.copy()
            G[np.arange(len(idx)), y[idx]] -= 1.0   # softmax CE gradient in z
            model.W -= lr * (G.T @ X[idx]) / len(idx)
            model.b -= lr * G.mean(axis=0)
            step += 1
            if not np.all(np.isfinite(model.W)) or np.linalg.norm(model.W) > DIVERGENCE_NORM:
                return True
            if on_step is not None:
                on_step(step)
    return False


def fit_source_model(
    source: NoisyDataset,
    lr: float = 0.5,
    epochs: int = 2,
    seed: int = 0,
    batch_size: int = 128,
) -> SoftmaxModel:
    """Cross-entropy-train a softmax model on clean source data.

    Deliberately modest training: the model should classify well while its
    target-domain probabilities stay soft enough that continued training
    actually moves (a fully saturated annotator has vanishing gradients on
    its own labels).  Training accuracy is recorded on the model.
    """
    K = len(source.label_set)
    if source.label_set != tuple(range(K)):
        raise SpecError("source fitting expects 0..K-1 class indices")
    model = SoftmaxModel(np.zeros((K, source.d)), np.zeros(K))
    diverged = _sgd_epochs(
        model, source.features, source.y_clean, lr, epochs, batch_size, make_rng(seed, 1)
    )
    if diverged:
        raise SpecError("source fitting diverged; lower the learning rate")
    model.train_accuracy = float(np.mean(model.predict(source.features) == source.y_clean))
    return model


def pseudo_label(model: SoftmaxModel, target: NoisyDataset) -> NoisyDataset:
    """Annotate target data with the model's argmax predictions.

    The returned dataset's ``labeling_accuracy`` is the baseline every
    learning curve is compared against.
    """
    if model.d != target.d:
        raise SpecError(f"model expects d={model.d}, target has d={target.d}")
    return target.with_noisy_labels(model.predict(target.features))


@dataclass(frozen=True)
class TrainConfig:
    """One noisy-training run of the bench.

    ``elr`` adds the moving-average penalty (beta, lambda); ``sr_weight``
    adds the detached self-regularization term instead (its constant
    gradient makes it the negative control for the moving-average one).
    """

    loss: LossSpec
    elr: Optional[tuple] = None          # (beta, lambda)
    sr_weight: Optional[float] = None
    corrector_threshold: Optional[float] = None
    lr: float = 0.5
    epochs: int = 30
    batch_size: int = 128
    eval_per_batch_until: int = 90
    eval_every_frac: float = 0.3
    seed: int = 0
    noisy_fit_target: float = 0.9        # threshold used by memorization timing

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise SpecError("lr, epochs and batch_size must be positive")
        if self.eval_per_batch_until < 0 or self.eval_every_frac <= 0:
            raise SpecError("evaluation schedule must be positive")
        if self.elr is not None:
            beta, lam = self.elr
            if not (0.0 <= beta < 1.0) or lam < 0:
                raise SpecError(f"elr requires beta in [0,1) and lambda >= 0, got {self.elr}")
        if self.sr_weight is not None and self.sr_weight < 0:
            raise SpecError("sr_weight must be nonnegative")
        if self.corrector_threshold is not None and not (0.0 < self.corrector_threshold < 1.0):
            raise SpecError("corrector threshold must lie in (0, 1)")


@dataclass
class CurveRecord:
    step: int
    acc_vs_ground_truth: float
    acc_vs_noisy_labels: float
    mean_loss: float
    kappa_on_mislabeled: float
    alignment: float = math.nan     # cosine(vec W, vec W_oracle) when known
    weight_norm: float = math.nan


@dataclass
class BenchResult:
    records: list
    model: SoftmaxModel
    labeling_accuracy: float
    diverged: bool = False
    elr_clamped: bool = False
    steps_to_noisy_fit: Optional[int] = None

    @property
    def final(self) -> CurveRecord:
        return self.records[-1]

    def peak_ground_truth(self, within_steps: Optional[int] = None) -> float:
        accs = [
            r.acc_vs_ground_truth
            for r in self.records
            if within_steps is None or r.step <= within_steps
        ]
        return max(accs)


def _eval_steps(n: int, config: TrainConfig) -> tuple:
    steps_per_epoch = math.ceil(n / config.batch_size)
    total = steps_per_epoch * config.epochs
    stride = max(1, round(config.eval_every_frac * steps_per_epoch))
    marks = set(range(0, min(config.eval_per_batch_until, total) + 1))
    marks.update(range(0, total + 1, stride))
    marks.add(total)
    return sorted(marks), total, steps_per_epoch


def train_on_noisy(
    model0: SoftmaxModel,
    target: NoisyDataset,
    config: TrainConfig,
    oracle_model: Optional[SoftmaxModel] = None,
) -> BenchResult:
    """Minibatch-train a copy of model0 on the target's noisy labels.

    Evaluation runs every batch for the first ``eval_per_batch_until``
    steps (memorization of annotation noise is fast), afterwards every
    ``eval_every_frac`` of an epoch.  Accuracy against the noisy labels is
    always measured against the labels the run started from, also under
    the corrector, so memorization timing stays well-defined.
    """
    K = len(target.label_set)
    if target.label_set != tuple(range(K)):
        raise SpecError("bench training expects 0..K-1 class indices")
    if model0.K != K or model0.d != target.d:
        raise SpecError("model shape does not match the dataset")

    model = model0.copy()
    X = target.features
    y_ref = target.y_noisy.copy()            # labels memorization is measured against
    y_train = target.y_noisy.copy()          # labels actually trained on (corrector edits)
    y_clean = target.y_clean
    mask0 = target.noise_mask
    n = target.n
    rng = make_rng(config.seed, 2)

    base = config.loss
    state = None
    lam = 0.0
    if config.elr is not None:
        beta, lam = config.elr
        state = ELRState.fresh(n, K, beta)
    perturb = base.kind == "gjs" and base.perturb_sigma > 0

    marks, total_steps, steps_per_epoch = _eval_steps(n, config)
    marks = set(marks)
    records: list = []
    w_oracle = None if oracle_model is None else np.concatenate(
        [oracle_model.W.ravel(), oracle_model.b]
    )

    def evaluate(step: int):
        P = model.predict_proba(X)
        pred = P.argmax(axis=1)
        acc_gt = float(np.mean(pred == y_clean))
        acc_ny = float(np.mean(pred == y_ref))
        vals = loss_value_batch(base, P, y_train)
        kap = float(np.mean(pred[mask0] == y_clean[mask0])) if mask0.any() else 1.0
        align = math.nan
        if w_oracle is not None:
            w = np.concatenate([model.W.ravel(), model.b])
            denom = np.linalg.norm(w) * np.linalg.norm(w_oracle)
            align = float(w @ w_oracle / denom) if denom > 0 else math.nan
        records.append(
            CurveRecord(
                step=step,
                acc_vs_ground_truth=acc_gt,
                acc_vs_noisy_labels=acc_ny,
                mean_loss=float(vals.mean()),
                kappa_on_mislabeled=kap,
                alignment=align,
                weight_norm=float(np.linalg.norm(model.W)),
            )
        )
        return acc_ny

    steps_to_fit = None
    acc_ny = evaluate(0)
    if acc_ny >= config.noisy_fit_target:
        steps_to_fit = 0

    diverged = False
    step = 0
    done = False
    for _ in range(config.epochs):
        if done:
            break
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            xb, yb = X[idx], y_train[idx]
            P = model.predict_proba(xb)

            if base.kind == "gjs" and perturb:
                comps = [
                    model.predict_proba(
                        xb + base.perturb_sigma * rng.standard_normal(xb.shape)
                    )
                    for _ in range(base.M - 1)
                ]
                slot_gs = gjs_slot_grads(base, _one_hot_rows(yb, K), comps)
                dz = np.zeros_like(P)
                for comp, g in zip(comps, slot_gs):
                    dz += _softmax_backward(comp, g)
                # Value recorded in curves uses the unperturbed form; the
                # training signal is the perturbed divergence gradient.
            else:
                companions = None
                sr_target = P.copy() if base.kind == "sr" else None
                G = loss_grad_batch(base, P, yb, companions, sr_target)
                dz = _softmax_backward(P, G)

            if state is not None:
                elr_update_batch(state, idx, P)
                _, g_elr, _ = elr_penalty_batch(state, idx, P)
                dz += _softmax_backward(P, lam * g_elr)
            if config.sr_weight:
                # Detached self-target: constant gradient -p per sample.
                dz += _softmax_backward(P, -config.sr_weight * P)

            model.W -= config.lr * (dz.T @ xb) / len(idx)
            model.b -= config.lr * dz.mean(axis=0)
            step += 1

            if not np.all(np.isfinite(model.W)) or np.linalg.norm(model.W) > DIVERGENCE_NORM:
                diverged = True
                done = True
                break
            if step in marks:
                acc_ny = evaluate(step)
                if steps_to_fit is None and acc_ny >= config.noisy_fit_target:
                    steps_to_fit = step
        if done:
            break
        if config.corrector_threshold is not None:
            P = model.predict_proba(X)
            conf = P.max(axis=1)
            relabel = conf > config.corrector_threshold
            y_train = y_train.copy()
            y_train[relabel] = P.argmax(axis=1)[relabel]

    if not diverged and step not in marks:
        evaluate(step)

    return BenchResult(
        records=records,
        model=model,
        labeling_accuracy=target.labeling_accuracy,
        diverged=diverged,
        elr_clamped=(state.clamp_count > 0) if state is not None else False,
        steps_to_noisy_fit=steps_to_fit,
    )


def _one_hot_rows(labels: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], K))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _softmax_backward(P: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Chain a gradient in probability space through the softmax: given
    dL/dp rows, return dL/dz rows."""
    inner = (P * G).sum(axis=1, keepdims=True)
    return P * (G - inner)


class MemorizationSpeed(NamedTuple):
    steps_unbounded: int
    steps_bounded: int
    budget: int


def memorization_speed(
    model0: SoftmaxModel,
    target_unbounded: NoisyDataset,
    target_bounded: NoisyDataset,
    config: TrainConfig,
) -> MemorizationSpeed:
    """Steps until the model fits 90% of each dataset's noisy labels.

    Both datasets must share features (same samples, different labels; use
    :func:`shiftnoise.noise.match_noise_rate` for rate-matched random
    labels).  A run that never reaches the threshold reports the sentinel
    budget + 1.
    """
    if target_unbounded.features is not target_bounded.features and not np.array_equal(
        target_unbounded.features, target_bounded.features
    ):
        raise SpecError("memorization comparison requires shared features")
    budget = math.ceil(target_unbounded.n / config.batch_size) * config.epochs
    out = []
    for data in (target_unbounded, target_bounded):
        res = train_on_noisy(model0, data, config)
        out.append(res.steps_to_noisy_fit if res.steps_to_noisy_fit is not None else budget + 1)
    return MemorizationSpeed(out[0], out[1], budget)


class BenchPipeline(NamedTuple):
    annotator: SoftmaxModel        # the fixed source model that labels the target
    init_model: SoftmaxModel       # tempered copy used to initialize training
    target: NoisyDataset           # pseudo-labeled target set for this run seed
    target_clean: NoisyDataset     # same features with ground-truth labels
    oracle: SoftmaxModel           # analytic target-Bayes rule (for alignment)
    params: dict


def make_annotator(params: Optional[dict] = None) -> SoftmaxModel:
    """Fit the fixed source model for the given (or standard) geometry."""
    p = dict(STANDARD)
    if params:
        p.update(params)
    doms = gen_multiclass_domains(
        p["K"], p["d"], p["sep"], p["sigma"], p["delta_scale"],
        p["annotator_seed"], n_source=p["n_source"], n_target=1,
    )
    return fit_source_model(
        doms.source, lr=p["source_lr"], epochs=p["source_epochs"],
        seed=p["annotator_seed"], batch_size=p["batch_size"],
    )


def standard_pipeline(seed: int, overrides: Optional[dict] = None) -> BenchPipeline:
    """Assemble the reference pipeline for one run seed.

    The annotator depends only on the geometry and its own fixed seed; the
    run seed draws a fresh target sample (and later the batch order).
    """
    params = dict(STANDARD)
    if overrides:
        unknown = set(overrides) - set(params)
        if unknown:
            raise SpecError(f"unknown standard-bench overrides: {sorted(unknown)}")
        params.update(overrides)
    annotator = make_annotator(params)
    doms = gen_multiclass_domains(
        params["K"], params["d"], params["sep"], params["sigma"],
        params["delta_scale"], seed, n_source=1, n_target=params["n_target"],
    )
    target = pseudo_label(annotator, doms.target)
    oracle = bayes_model(doms.target_means, params["sigma"])
    return BenchPipeline(
        annotator=annotator,
        init_model=tempered_copy(annotator, params["init_weight_norm"]),
        target=target,
        target_clean=doms.target,
        oracle=oracle,
        params=params,
    )


def standard_train_config(loss: LossSpec, seed: int, elr: Optional[tuple] = None,
                          sr_weight: Optional[float] = None,
                          corrector_threshold: Optional[float] = None,
                          epochs: Optional[int] = None) -> TrainConfig:
    return TrainConfig(
        loss=loss,
        elr=elr,
        sr_weight=sr_weight,
        corrector_threshold=corrector_threshold,
        lr=STANDARD["lr"],
        epochs=STANDARD["epochs"] if epochs is None else epochs,
        batch_size=STANDARD["batch_size"],
        seed=seed,
    )
