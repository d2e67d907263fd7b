"""Loss zoo for learning with noisy labels, with analytic gradients.

All losses act on a probability vector p (the model's softmax output) and
an integer class index.  Gradients are taken with respect to p itself and
match central finite differences of the implemented value at interior
points; trainers chain them through the softmax Jacobian.

Conventions that matter:

* logs of probabilities are floored at PROB_FLOOR = 1e-7 so behavior at
  the simplex boundary is finite and deterministic;
* reverse cross entropy treats the structural log(0) of its one-hot target
  as the constant A (default -4), giving rce = -A * (1 - p_y);
* the mean absolute error is implemented literally as |e_y - p|_1, so its
  coordinate-wise gradient is (+1, ..., -1 at y, ..., +1) rather than the
  simplex-equivalent -2 e_y;
* the generalized Jensen-Shannon loss evaluates the divergence between the
  one-hot label and M - 1 companion predictions, normalized by
  Z = -(1 - pi_1) log(1 - pi_1).  Companions come from re-evaluating the
  model on feature-noise perturbations of the input (the trainer supplies
  them); without companions the loss degenerates to every slot holding p.
* the self-regularization term is -yhat' p with yhat a detached copy of
  the current prediction, so its gradient in p is the constant vector
  -yhat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import rel_entr

from .errors import SpecError

PROB_FLOOR = 1e-7
RCE_DEFAULT_A = -4.0
PROBS_SUM_TOL = 1e-9

# Regularizer sweep grids used by the bench and the harness.
ELR_LAMBDA_GRID = (1.0, 3.0, 7.0, 12.0, 25.0)
ELR_BETA_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 0.99)

LOSS_KINDS = ("ce", "mae", "rce", "gce", "sl", "gjs", "normalized", "sr")


def validate_probs(p, K: Optional[int] = None) -> np.ndarray:
    """Check p is a probability vector (entries in [0,1], sums to 1)."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] < 2:
        raise SpecError(f"probability vector must be 1-d with K >= 2, got shape {p.shape}")
    if K is not None and p.shape[0] != K:
        raise SpecError(f"probability vector has K={p.shape[0]}, expected {K}")
    if not np.all(np.isfinite(p)) or p.min() < -1e-12 or p.max() > 1.0 + 1e-12:
        raise SpecError("probability entries must lie in [0, 1]")
    if abs(p.sum() - 1.0) > PROBS_SUM_TOL:
        raise SpecError(f"probabilities must sum to 1 within {PROBS_SUM_TOL}, got {p.sum()!r}")
    return p


@dataclass(frozen=True)
class LossSpec:
    """Tagged description of one loss configuration.

    ``weight`` is the multiplier applied when the loss is used as a
    regularizer inside a composite objective.
    """

    kind: str
    q: Optional[float] = None                # gce
    A: Optional[float] = None                # rce / sl
    sl_alpha: Optional[float] = None         # sl
    sl_beta: Optional[float] = None          # sl
    pi: Optional[tuple] = None               # gjs simplex weights, length M
    perturb_sigma: float = 0.0               # gjs companion feature noise
    inner: Optional["LossSpec"] = None       # normalized
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise SpecError(f"unknown loss kind {self.kind!r}")
        if self.weight < 0:
            raise SpecError("loss weight must be nonnegative")
        if self.kind == "gce":
            if self.q is None or not (0.0 < self.q <= 1.0):
                raise SpecError(f"gce requires q in (0, 1], got {self.q}")
        if self.kind == "rce":
            if self.A is None or self.A >= 0:
                raise SpecError(f"rce requires a negative clip constant A, got {self.A}")
        if self.kind == "sl":
            if self.sl_alpha is None or self.sl_beta is None:
                raise SpecError("sl requires sl_alpha and sl_beta")
            if self.A is None or self.A >= 0:
                raise SpecError("sl requires a negative clip constant A for its rce part")
        if self.kind == "gjs":
            pi = self.pi
            if pi is None or len(pi) < 2:
                raise SpecError("gjs requires simplex weights pi with M >= 2")
            arr = np.asarray(pi, dtype=float)
            if arr.min() < 0 or abs(arr.sum() - 1.0) > PROBS_SUM_TOL:
                raise SpecError("gjs weights must lie on the simplex")
            if self.perturb_sigma < 0:
                raise SpecError("gjs perturb_sigma must be nonnegative")
            object.__setattr__(self, "pi", tuple(float(v) for v in arr))
        if self.kind == "normalized":
            if self.inner is None:
                raise SpecError("normalized requires an inner loss")
            if self.inner.kind == "normalized":
                raise SpecError("normalized losses do not nest")

    # -- constructors ------------------------------------------------------
    @classmethod
    def ce(cls, weight: float = 1.0) -> "LossSpec":
        return cls("ce", weight=weight)

    @classmethod
    def mae(cls, weight: float = 1.0) -> "LossSpec":
        return cls("mae", weight=weight)

    @classmethod
    def rce(cls, A: float = RCE_DEFAULT_A, weight: float = 1.0) -> "LossSpec":
        return cls("rce", A=A, weight=weight)

    @classmethod
    def gce(cls, q: float = 0.7, weight: float = 1.0) -> "LossSpec":
        return cls("gce", q=q, weight=weight)

    @classmethod
    def sl(cls, alpha: float = 0.1, beta: float = 1.0, A: float = RCE_DEFAULT_A,
           weight: float = 1.0) -> "LossSpec":
        return cls("sl", sl_alpha=alpha, sl_beta=beta, A=A, weight=weight)

    @classmethod
    def gjs(cls, pi: Optional[Sequence[float]] = None, M: int = 3,
            perturb_sigma: float = 0.1, weight: float = 1.0) -> "LossSpec":
        if pi is None:
            pi = (1.0 / M,) * M
        return cls("gjs", pi=tuple(pi), perturb_sigma=perturb_sigma, weight=weight)

    @classmethod
    def normalized(cls, inner: "LossSpec", weight: float = 1.0) -> "LossSpec":
        return cls("normalized", inner=inner, weight=weight)

    @classmethod
    def sr(cls, weight: float = 1.0) -> "LossSpec":
        return cls("sr", weight=weight)

    @property
    def M(self) -> int:
        if self.kind != "gjs":
            raise SpecError("M is defined only for gjs losses")
        return len(self.pi)

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "gce":
            out["q"] = self.q
        if self.kind == "rce":
            out["A"] = self.A
        if self.kind == "sl":
            out.update(alpha=self.sl_alpha, beta=self.sl_beta, A=self.A)
        if self.kind == "gjs":
            out.update(pi=list(self.pi), perturb_sigma=self.perturb_sigma)
        if self.kind == "normalized":
            out["inner"] = self.inner.to_json()
        if self.weight != 1.0:
            out["weight"] = self.weight
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "LossSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise SpecError(f"loss spec must be a tagged object with 'kind', got {obj!r}")
        kind = obj["kind"]
        weight = float(obj.get("weight", 1.0))
        if kind == "ce":
            return cls.ce(weight)
        if kind == "mae":
            return cls.mae(weight)
        if kind == "rce":
            return cls.rce(float(obj.get("A", RCE_DEFAULT_A)), weight)
        if kind == "gce":
            return cls.gce(float(obj["q"]), weight)
        if kind == "sl":
            return cls.sl(float(obj.get("alpha", 0.1)), float(obj.get("beta", 1.0)),
                          float(obj.get("A", RCE_DEFAULT_A)), weight)
        if kind == "gjs":
            pi = obj.get("pi")
            return cls.gjs(pi=pi, M=int(obj.get("M", 3)),
                           perturb_sigma=float(obj.get("perturb_sigma", 0.1)), weight=weight)
        if kind == "normalized":
            return cls.normalized(cls.from_json(obj["inner"]), weight)
        if kind == "sr":
            return cls.sr(weight)
        raise SpecError(f"unknown loss kind {kind!r}")


def _clip(p: np.ndarray) -> np.ndarray:
    return np.maximum(p, PROB_FLOOR)


def _one_hot(labels: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], K))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _companions(spec: LossSpec, P: np.ndarray, companions) -> list:
    if spec.kind != "gjs":
        return []
    if companions is None:
        return [P] * (spec.M - 1)
    comp = [np.asarray(c, dtype=float) for c in companions]
    if len(comp) != spec.M - 1:
        raise SpecError(f"gjs with M={spec.M} needs {spec.M - 1} companion predictions")
    return comp


# ---------------------------------------------------------------------------
# batch evaluators: P is (n, K), labels is (n,) int
# ---------------------------------------------------------------------------

def loss_value_batch(spec: LossSpec, P: np.ndarray, labels: np.ndarray,
                     companions=None, sr_target=None) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, K = P.shape
    rows = np.arange(n)
    py = P[rows, labels]
    kind = spec.kind
    if kind == "ce":
        return -np.log(_clip(py))
    if kind == "mae":
        return np.abs(_one_hot(labels, K) - P).sum(axis=1)
    if kind == "rce":
        return -spec.A * (P.sum(axis=1) - py)
    if kind == "gce":
        return (1.0 - _clip(py) ** spec.q) / spec.q
    if kind == "sl":
        ce = -np.log(_clip(py))
        rce = -spec.A * (P.sum(axis=1) - py)
        return spec.sl_alpha * ce + spec.sl_beta * rce
    if kind == "gjs":
        dists = [_one_hot(labels, K)] + _companions(spec, P, companions)
        pi = np.asarray(spec.pi)
        mix = sum(w * d for w, d in zip(pi, dists))
        div = sum(w * rel_entr(d, mix).sum(axis=1) for w, d in zip(pi, dists))
        z = -(1.0 - pi[0]) * math.log(1.0 - pi[0])
        return div / z
    if kind == "normalized":
        num = loss_value_batch(spec.inner, P, labels)
        den = _symmetry_sum_batch(spec.inner, P)
        return num / den
    if kind == "sr":
        target = P if sr_target is None else np.asarray(sr_target, dtype=float)
        return -(target * P).sum(axis=1)
    raise SpecError(f"unknown loss kind {kind!r}")


def loss_grad_batch(spec: LossSpec, P: np.ndarray, labels: np.ndarray,
                    companions=None, sr_target=None) -> np.ndarray:
    """Gradient of loss_value_batch with respect to P, row per sample.

    At simplex boundaries where a loss is non-differentiable the clipped /
    one-sided expressions below act as subgradients: CE and GCE freeze
    below the probability floor, MAE uses the p_y < 1 branch of |e_y - p|.
    """
    P = np.asarray(P, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n, K = P.shape
    rows = np.arange(n)
    py = P[rows, labels]
    kind = spec.kind
    if kind == "ce":
        g = np.zeros_like(P)
        g[rows, labels] = -1.0 / _clip(py)
        return g
    if kind == "mae":
        g = np.ones_like(P)
        g[rows, labels] = -1.0
        return g
    if kind == "rce":
        g = np.full_like(P, -spec.A)
        g[rows, labels] = 0.0
        return g
    if kind == "gce":
        g = np.zeros_like(P)
        g[rows, labels] = -_clip(py) ** (spec.q - 1.0)
        return g
    if kind == "sl":
        g = np.full_like(P, -spec.A * spec.sl_beta)
        g[rows, labels] = -spec.sl_alpha / _clip(py)
        return g
    if kind == "gjs":
        comp = _companions(spec, P, companions)
        grads = gjs_slot_grads(spec, _one_hot(labels, K), comp)
        if companions is None:
            # Every slot holds the same p; total derivative sums the slots.
            return sum(grads)
        raise SpecError(
            "per-slot gradients for explicit companions come from gjs_slot_grads"
        )
    if kind == "normalized":
        num = loss_value_batch(spec.inner, P, labels)[:, None]
        den = _symmetry_sum_batch(spec.inner, P)[:, None]
        gnum = loss_grad_batch(spec.inner, P, labels)
        gden = sum(
            loss_grad_batch(spec.inner, P, np.full(n, k, dtype=int)) for k in range(K)
        )
        return (gnum * den - num * gden) / den**2
    if kind == "sr":
        target = P if sr_target is None else np.asarray(sr_target, dtype=float)
        return -target.copy()
    raise SpecError(f"unknown loss kind {kind!r}")


def gjs_slot_grads(spec: LossSpec, label_dist: np.ndarray, companions: list) -> list:
    """Gradient of the gjs loss with respect to each companion slot.

    d loss / d p_slot = pi_slot * log(p_slot / mix) / Z elementwise; the
    one-hot label slot carries no gradient.
    """
    pi = np.asarray(spec.pi)
    dists = [label_dist] + list(companions)
    mix = sum(w * d for w, d in zip(pi, dists))
    z = -(1.0 - pi[0]) * math.log(1.0 - pi[0])
    logmix = np.log(_clip(mix))
    return [
        pi[j + 1] * (np.log(_clip(c)) - logmix) / z for j, c in enumerate(companions)
    ]


def _symmetry_sum_batch(spec: LossSpec, P: np.ndarray) -> np.ndarray:
    n, K = P.shape
    return sum(
        loss_value_batch(spec, P, np.full(n, k, dtype=int)) for k in range(K)
    )


# ---------------------------------------------------------------------------
# per-sample surface
# ---------------------------------------------------------------------------

def loss_value(spec: LossSpec, p, label: int, companions=None, sr_target=None) -> float:
    """Loss of predicting p against the class index ``label``."""
    p = validate_probs(p)
    if not (0 <= int(label) < p.shape[0]):
        raise SpecError(f"label {label} out of range for K={p.shape[0]}")
    comp = None if companions is None else [np.atleast_2d(c) for c in companions]
    tgt = None if sr_target is None else np.atleast_2d(sr_target)
    return float(
        loss_value_batch(spec, p[None, :], np.asarray([int(label)]), comp, tgt)[0]
    )


def loss_grad(spec: LossSpec, p, label: int, companions=None, sr_target=None) -> np.ndarray:
    """Gradient of loss_value with respect to p."""
    p = validate_probs(p)
    if not (0 <= int(label) < p.shape[0]):
        raise SpecError(f"label {label} out of range for K={p.shape[0]}")
    comp = None if companions is None else [np.atleast_2d(c) for c in companions]
    tgt = None if sr_target is None else np.atleast_2d(sr_target)
    return loss_grad_batch(spec, p[None, :], np.asarray([int(label)]), comp, tgt)[0]


def symmetry_sum(spec: LossSpec, p) -> float:
    """Sum of the loss over all K possible labels at fixed p.

    Noise-robust losses keep this constant in p (MAE: 2(K-1); RCE:
    -A(K-1); any normalized loss: exactly 1), plain CE and GCE with q < 1
    do not.
    """
    p = validate_probs(p)
    return float(_symmetry_sum_batch(spec, p[None, :])[0])


# ---------------------------------------------------------------------------
# moving-average regularization
# ---------------------------------------------------------------------------

@dataclass
class ELRState:
    """Per-sample moving-average prediction bank.

    ``targets`` starts at zero, so the penalty is inert until a sample has
    been visited; afterwards each row is a convex combination of past
    predictions and stays inside [0, 1]^K with sum <= 1.  ``clamp_count``
    records how often the penalty's log argument had to be clamped.

    This is the one piece of mutable state in the module.  Updates to
    distinct rows commute (and may run concurrently); updates to the same
    row must be serialized by the caller -- the trainer touches each index
    exactly once per pass.
    """

    targets: np.ndarray
    beta: float
    clamp_count: int = 0

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=float)
        if t.ndim != 2:
            raise SpecError(f"targets must be (n, K), got shape {t.shape}")
        if not (0.0 <= self.beta < 1.0):
            raise SpecError(f"beta must lie in [0, 1), got {self.beta}")
        self.targets = t

    @classmethod
    def fresh(cls, n: int, K: int, beta: float) -> "ELRState":
        return cls(np.zeros((n, K)), float(beta))

    @property
    def n(self) -> int:
        return self.targets.shape[0]


def elr_update(state: ELRState, index: int, p) -> ELRState:
    """targets[index] <- beta * targets[index] + (1 - beta) * p (in place)."""
    if not (0 <= index < state.n):
        raise SpecError(f"index {index} out of range for n={state.n}")
    p = validate_probs(p, K=state.targets.shape[1])
    state.targets[index] = state.beta * state.targets[index] + (1.0 - state.beta) * p
    return state


def elr_update_batch(state: ELRState, indices: np.ndarray, P: np.ndarray) -> ELRState:
    """Vectorized update; indices must be distinct within one call."""
    state.targets[indices] = state.beta * state.targets[indices] + (1.0 - state.beta) * P
    return state


def elr_penalty(state: ELRState, index: int, p) -> float:
    """log(1 - ybar' p); the argument is clamped at PROB_FLOOR and the
    clamp is counted on the state so trainers can flag it in traces."""
    if not (0 <= index < state.n):
        raise SpecError(f"index {index} out of range for n={state.n}")
    p = validate_probs(p, K=state.targets.shape[1])
    a = float(state.targets[index] @ p)
    gap = 1.0 - a
    if gap < PROB_FLOOR:
        state.clamp_count += 1
        gap = PROB_FLOOR
    return math.log(gap)


def elr_penalty_grad(state: ELRState, index: int, p) -> np.ndarray:
    """-ybar / (1 - ybar' p), the penalty's gradient in p."""
    if not (0 <= index < state.n):
        raise SpecError(f"index {index} out of range for n={state.n}")
    p = validate_probs(p, K=state.targets.shape[1])
    ybar = state.targets[index]
    gap = max(1.0 - float(ybar @ p), PROB_FLOOR)
    return -ybar / gap


def elr_penalty_batch(state: ELRState, indices: np.ndarray, P: np.ndarray):
    """(values, grads, clamped_any) for a batch of samples."""
    ybar = state.targets[indices]
    gap = 1.0 - (ybar * P).sum(axis=1)
    clamped = gap < PROB_FLOOR
    if clamped.any():
        state.clamp_count += int(clamped.sum())
        gap = np.maximum(gap, PROB_FLOOR)
    return np.log(gap), -ybar / gap[:, None], bool(clamped.any())


class CompositeObjective:
    """Per-sample objective: base loss plus lambda times the ELR penalty.

    With ``elr=None`` (or lambda = 0 and a fresh state) this is exactly the
    base loss.  The trainer is expected to call :meth:`update_targets` once
    per sample per pass before evaluating the penalty, mirroring the
    moving-average recursion.
    """

    def __init__(self, base: LossSpec, elr: Optional[tuple] = None):
        self.base = base
        if elr is None:
            self.state = None
            self.lam = 0.0
        else:
            state, lam = elr
            if lam < 0:
                raise SpecError("elr lambda must be nonnegative")
            self.state = state
            self.lam = float(lam)

    def update_targets(self, index: int, p) -> None:
        if self.state is not None:
            elr_update(self.state, index, p)

    def value(self, p, label: int, index: Optional[int] = None, **kw) -> float:
        out = loss_value(self.base, p, label, **kw)
        if self.state is not None and self.lam > 0:
            if index is None:
                raise SpecError("composite objectives with ELR need a sample index")
            out += self.lam * elr_penalty(self.state, index, p)
        return out

    def grad(self, p, label: int, index: Optional[int] = None, **kw) -> np.ndarray:
        out = loss_grad(self.base, p, label, **kw)
        if self.state is not None and self.lam > 0:
            if index is None:
                raise SpecError("composite objectives with ELR need a sample index")
            out = out + self.lam * elr_penalty_grad(self.state, index, p)
        return out


def composite_objective(base: LossSpec, elr: Optional[tuple] = None) -> CompositeObjective:
    """Build the evaluator combining a base loss with the ELR penalty."""
    return CompositeObjective(base, elr)
