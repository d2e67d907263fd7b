"""The three label-noise processes and the unbounded-noise region R.

Noise processes
---------------
* ``annotate_with_source``: labels target data with the source-optimal
  classifier.  This is the noise a pretrained model generates under domain
  shift; on part of the space its per-sample mislabeling probability
  approaches 1 ("unbounded" noise).
* ``flip_margin``: flips exactly the samples whose margin y x'mu falls at
  or below a threshold r.  Deterministic given the data, hence unbounded
  by construction: Pr[flip | margin <= r] = 1.
* ``flip_symmetric``: classic bounded random noise; each sample keeps its
  label with probability 1 - eta, otherwise receives a uniform label among
  the other K - 1 classes.  Requires eta < 1 - 1/K so the true class stays
  strictly most probable.

Region R
--------
R is the set of target points that the source classifier assigns to the
second component (R2: h_S(x) < 0) while the target posterior puts at least
1 - delta_conf mass on the first (R1: h_T(x) >= log((1-delta)/delta)).
Every point of R is mislabeled with probability >= 1 - delta_conf, and R is
non-empty exactly when alpha > log((1-delta)/delta)/d under the convention
mu2 = mu1 + sigma 1_d.

Under that convention a closed ball around the shifted first mean,

    |x - mu1 - delta| <= sigma (sqrt(d)/2 - log((1-delta)/delta)/sqrt(d)),

is contained in R1 (tangent to its boundary from inside), which gives a
convenient existence witness.  The ball is exposed as ``r1_ball_radius`` /
``in_r1_ball`` for exact-formula checks, but membership tests use the
posterior condition: by Gaussian norm concentration the ball's target mass
is astronomically small for moderate d (its radius is half the typical
fluctuation radius sigma sqrt(d)), so no finite sample ever lands in it,
while the posterior region carries the same guarantee with positive mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import special
from .domains import (
    DomainSpec,
    NoisyDataset,
    bayes_source_predict,
    bayes_source_score,
    bayes_target_score,
)
from .errors import DimensionError, SpecError
from .rng import make_rng

UNIT_TOL = 1e-9

FLIP_NONE = -math.inf  # sentinel margin threshold: flips nothing


@dataclass(frozen=True)
class NoiseConfig:
    """Tagged, serializable description of one noise process.

    kinds: "source_model" (labels from the source-optimal classifier),
    "margin_flip" (deterministic flips at margin <= r along mu, default
    the first axis), "symmetric" (bounded random noise at rate eta over K
    classes).  ``apply`` runs the corresponding operation.
    """

    kind: str
    r: Optional[float] = None
    mu: Optional[tuple] = None
    eta: Optional[float] = None
    K: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("source_model", "margin_flip", "symmetric"):
            raise SpecError(f"unknown noise kind {self.kind!r}")
        if self.kind == "margin_flip" and self.r is None:
            raise SpecError("margin_flip requires the threshold r")
        if self.kind == "symmetric":
            if self.eta is None or self.K is None:
                raise SpecError("symmetric noise requires eta and K")
            if not (0.0 <= self.eta < 1.0 - 1.0 / self.K):
                raise SpecError(
                    f"symmetric noise requires eta < 1 - 1/K = {1.0 - 1.0 / self.K}"
                )

    def apply(self, data: "NoisyDataset", spec: Optional[DomainSpec] = None) -> "NoisyDataset":
        if self.kind == "source_model":
            if spec is None:
                raise SpecError("source_model noise needs the domain spec")
            return annotate_with_source(data, spec)
        if self.kind == "margin_flip":
            mu = np.asarray(self.mu, dtype=float) if self.mu is not None else None
            if mu is None:
                mu = np.zeros(data.d)
                mu[0] = 1.0
            return flip_margin(data, mu, float(self.r))
        return flip_symmetric(data, float(self.eta), int(self.K), self.seed)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "margin_flip":
            out["r"] = self.r
            if self.mu is not None:
                out["mu"] = list(self.mu)
        if self.kind == "symmetric":
            out.update(eta=self.eta, K=self.K)
        if self.seed:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "NoiseConfig":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise SpecError(f"noise config must be a tagged object with 'kind', got {obj!r}")
        return cls(
            kind=obj["kind"],
            r=float(obj["r"]) if "r" in obj else None,
            mu=tuple(obj["mu"]) if "mu" in obj else None,
            eta=float(obj["eta"]) if "eta" in obj else None,
            K=int(obj["K"]) if "K" in obj else None,
            seed=int(obj.get("seed", 0)),
        )


@dataclass(frozen=True)
class RegionRSpec:
    """Confidence level and mixture pair defining region R."""

    delta_conf: float
    spec: DomainSpec

    def __post_init__(self):
        dc = float(self.delta_conf)
        if not (0.0 < dc < 1.0):
            raise SpecError(f"delta_conf must lie in (0, 1), got {dc}")
        object.__setattr__(self, "delta_conf", dc)

    @property
    def log_odds_threshold(self) -> float:
        """log((1-delta)/delta): the posterior log-odds defining R1."""
        return math.log((1.0 - self.delta_conf) / self.delta_conf)


def annotate_with_source(data: NoisyDataset, spec: DomainSpec) -> NoisyDataset:
    """Relabel a (target) dataset with the source-optimal classifier."""
    if data.label_set != (-1, 1):
        raise SpecError("source annotation requires binary -1/+1 labels")
    if data.d != spec.d:
        raise DimensionError(f"dataset has d={data.d}, spec has d={spec.d}")
    return data.with_noisy_labels(bayes_source_predict(spec, data.features))


def flip_margin(data: NoisyDataset, mu: np.ndarray, r: float) -> NoisyDataset:
    """Flip exactly the samples with margin y x'mu <= r.

    The flip factor is sign(1{y x'mu > r} - 1/2): samples strictly above
    the threshold keep their label, everything else (boundary included)
    flips.  r = FLIP_NONE (-inf) passes clean data through unchanged.
    """
    if data.label_set != (-1, 1):
        raise SpecError("margin flipping requires binary -1/+1 labels")
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (data.d,):
        raise DimensionError(f"mu has shape {mu.shape}, expected ({data.d},)")
    if abs(np.linalg.norm(mu) - 1.0) > UNIT_TOL:
        raise SpecError(f"mu must be a unit vector, got norm {np.linalg.norm(mu)!r}")
    margin = data.y_clean * (data.features @ mu)
    beta = np.where(margin > r, 1, -1)
    flipped = data.with_noisy_labels(data.y_clean * beta)
    # Unboundedness holds by construction; keep it as a hard invariant.
    assert bool(np.all(flipped.noise_mask[margin <= r])), "margin flip must be deterministic"
    return flipped


def flip_symmetric(data: NoisyDataset, eta: float, K: int, seed: int) -> NoisyDataset:
    """Bounded symmetric noise at rate eta over K classes.

    Applied to the clean labels: each sample independently keeps y_clean
    with probability 1 - eta, otherwise draws uniformly from the K - 1
    other classes.  eta must satisfy eta < 1 - 1/K, which is exactly the
    condition keeping the true class strictly most probable per sample.
    """
    if len(data.label_set) != K:
        raise SpecError(f"dataset declares {len(data.label_set)} classes, got K={K}")
    if not (0.0 <= eta < 1.0 - 1.0 / K):
        raise SpecError(f"eta must satisfy 0 <= eta < 1 - 1/K = {1.0 - 1.0 / K}, got {eta}")
    rng = make_rng(seed)
    labels = np.asarray(data.label_set, dtype=int)
    idx_of = {int(v): i for i, v in enumerate(labels)}
    y = data.y_clean.copy()
    hit = rng.random(data.n) < eta
    if hit.any():
        own = np.asarray([idx_of[int(v)] for v in y[hit]])
        # Uniform over the K-1 other classes: draw in 0..K-2, skip own slot.
        draw = rng.integers(0, K - 1, size=int(hit.sum()))
        draw = draw + (draw >= own)
        y[hit] = labels[draw]
    return data.with_noisy_labels(y)


def match_noise_rate(data: NoisyDataset, seed: int) -> NoisyDataset:
    """Replace deterministic noise with random noise on the same samples.

    Exactly the currently-mislabeled samples receive a fresh uniform label
    among the K - 1 classes different from their current noisy label, so a
    sample can land back on its true class (probability 1/(K-1)); the
    overall noise rate is preserved up to that slippage.  Used to build a
    bounded-random comparator with the mislabeled set chosen by the source
    model.
    """
    rng = make_rng(seed)
    labels = np.asarray(data.label_set, dtype=int)
    K = len(labels)
    idx_of = {int(v): i for i, v in enumerate(labels)}
    y = data.y_noisy.copy()
    hit = data.noise_mask
    if hit.any():
        own = np.asarray([idx_of[int(v)] for v in y[hit]])
        draw = rng.integers(0, K - 1, size=int(hit.sum()))
        draw = draw + (draw >= own)
        y[hit] = labels[draw]
    return data.with_noisy_labels(y)


class RegionMembership(NamedTuple):
    in_R: bool | np.ndarray
    in_R1: bool | np.ndarray
    in_R2: bool | np.ndarray


def r1_ball_radius(rspec: RegionRSpec) -> float:
    """Radius of the inscribed R1 ball; <= 0 means structurally empty."""
    d = rspec.spec.d
    return rspec.spec.sigma * (math.sqrt(d) / 2.0 - rspec.log_odds_threshold / math.sqrt(d))


def in_r1_ball(x, rspec: RegionRSpec) -> bool | np.ndarray:
    """Membership in the inscribed ball around mu1 + delta (exact form)."""
    spec = rspec.spec
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise DimensionError(f"x has dimension {x.shape[-1]}, spec has d={spec.d}")
    radius = r1_ball_radius(rspec)
    if radius <= 0.0:
        out = np.zeros(x.shape[:-1], dtype=bool)
        return bool(out) if out.ndim == 0 else out
    dist = np.linalg.norm(x - (spec.mu1 + spec.delta), axis=-1)
    out = dist <= radius
    return bool(out) if out.ndim == 0 else out


def r2_paper_halfspace(x, rspec: RegionRSpec) -> bool | np.ndarray:
    """The specialized R2 half-space x'1_d > (sigma d + 2 mu1'1_d)/2.

    Equivalent to h_S(x) < 0 exactly under the convention
    mu2 = mu1 + sigma 1_d; exposed for exact-formula tests.
    """
    spec = rspec.spec
    x = np.asarray(x, dtype=float)
    thresh = (spec.sigma * spec.d + 2.0 * float(spec.mu1.sum())) / 2.0
    out = x @ np.ones(spec.d) > thresh
    return bool(out) if out.ndim == 0 else out


def region_R_membership(x, rspec: RegionRSpec) -> RegionMembership:
    """Test x (a vector or an (n, d) batch) for membership in R1, R2, R.

    R1 is the confident set {h_T(x) >= log((1-delta)/delta)}, i.e. the
    target posterior favors the first component with probability at least
    1 - delta_conf; R2 is {h_S(x) < 0}, the set the source classifier
    assigns to the second component.
    """
    spec = rspec.spec
    h_t = np.asarray(bayes_target_score(spec, x))
    h_s = np.asarray(bayes_source_score(spec, x))
    in_r1 = h_t >= rspec.log_odds_threshold
    in_r2 = h_s < 0.0
    in_r = in_r1 & in_r2
    if in_r.ndim == 0:
        return RegionMembership(bool(in_r), bool(in_r1), bool(in_r2))
    return RegionMembership(in_r, in_r1, in_r2)


def region_R_nonempty_condition(rspec: RegionRSpec) -> bool:
    """True iff alpha > log((1-delta)/delta)/d."""
    return rspec.spec.alpha > rspec.log_odds_threshold / rspec.spec.d


def posterior_true_class(x, spec: DomainSpec) -> float | np.ndarray:
    """Exact target posterior Pr[y = +1 | x] under equal priors.

    Computed from the log density ratio (which equals h_T) through the
    stable logistic sigmoid, so posteriors near 0 and 1 at large d do not
    overflow.
    """
    return special.expit(bayes_target_score(spec, x))


def annotate_region(data: NoisyDataset, rspec: RegionRSpec) -> NoisyDataset:
    """Fill the dataset's in_region_R mask."""
    member = region_R_membership(data.features, rspec)
    return NoisyDataset(
        data.features,
        data.y_clean,
        data.y_noisy,
        in_region_R=np.asarray(member.in_R, dtype=bool),
        label_set=data.label_set,
    )
