"""Domain-shifted Gaussian mixture pairs and their mislabeling rates.

The generative model is a two-component isotropic Gaussian mixture with
equal priors.  The source domain places class +1 at ``mu1`` and class -1
at ``mu2``, both with covariance ``sigma^2 I_d``; the target domain is the
same mixture translated by a shift vector ``delta``.

The optimal source classifier is linear,

    h_S(x) = x'(mu1 - mu2)/sigma^2 - (|mu1|^2 - |mu2|^2)/(2 sigma^2),

predicting +1 when h_S(x) > 0.  Applied to target data it mislabels at a
rate with a closed form in terms of the shift's projection onto the
between-means direction:

    alpha = delta'(mu2 - mu1) / |mu2 - mu1|^2,      c = alpha (mu2 - mu1),

    rate  = Phi(-d1/sigma)/2 + Phi(-d2/sigma)/2,

with d1 = |(mu2-mu1)/2 - c| * sign(|(mu2-mu1)/2| - |c|) and
d2 = |(mu2-mu1)/2 + c|.  Only |alpha| matters: a shift against the
between-means direction mislabels at the same rate as the mirrored shift
along it, so the closed form is evaluated at |alpha| (the signed-d1 form
above is exact only for shifts positively correlated with mu2 - mu1).
Components of the shift orthogonal to mu2 - mu1 move mass parallel to the
decision boundary and leave the rate unchanged; alpha = 0 recovers the
Bayes error Phi(-|mu2 - mu1| / (2 sigma)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import special
from .errors import DimensionError, SpecError

SIGMA_MIN = 1e-8

BINARY_LABELS = (-1, 1)


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise SpecError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SpecError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class DomainSpec:
    """A source/target Gaussian mixture pair.

    mu1, mu2 : component means (class +1 and class -1) of the source domain.
    sigma    : shared isotropic standard deviation, > 0.
    delta    : translation applied to both components in the target domain.
    """

    mu1: np.ndarray
    mu2: np.ndarray
    sigma: float
    delta: np.ndarray

    def __post_init__(self):
        mu1 = _as_vector(self.mu1, "mu1")
        mu2 = _as_vector(self.mu2, "mu2")
        delta = _as_vector(self.delta, "delta")
        if mu2.shape != mu1.shape or delta.shape != mu1.shape:
            raise DimensionError(
                f"mu1, mu2, delta must share a dimension, got "
                f"{mu1.shape}, {mu2.shape}, {delta.shape}"
            )
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma < SIGMA_MIN:
            # The closed forms divide by sigma; reject rather than clamp.
            raise SpecError(f"sigma must be >= {SIGMA_MIN}, got {sigma}")
        if np.array_equal(mu1, mu2):
            raise SpecError("component means must be distinct (mu1 != mu2)")
        for arr in (mu1, mu2, delta):
            arr.setflags(write=False)
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "mu2", mu2)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return self.mu1.shape[0]

    @property
    def separation(self) -> np.ndarray:
        """mu2 - mu1."""
        return self.mu2 - self.mu1

    @property
    def alpha(self) -> float:
        """Projection coefficient of delta onto mu2 - mu1 (either sign)."""
        v = self.separation
        return float(self.delta @ v / (v @ v))

    @property
    def shift_projection(self) -> np.ndarray:
        """c = alpha (mu2 - mu1), the boundary-normal part of the shift."""
        return self.alpha * self.separation

    def with_delta(self, delta) -> "DomainSpec":
        return DomainSpec(self.mu1, self.mu2, self.sigma, delta)


class Sample(NamedTuple):
    x: np.ndarray
    y: int


@dataclass
class NoisyDataset:
    """Feature matrix with clean labels, noisy labels and bookkeeping masks.

    ``noise_mask[i]`` is true exactly when ``y_noisy[i] != y_clean[i]``; the
    constructor enforces this, so a dataset can never carry an inconsistent
    mask.  ``in_region_R`` is optional and filled by the noise module.
    Arrays are frozen after construction; derive modified copies via
    :meth:`with_noisy_labels`.
    """

    features: np.ndarray
    y_clean: np.ndarray
    y_noisy: np.ndarray
    noise_mask: np.ndarray = field(default=None)  # type: ignore[assignment]
    in_region_R: np.ndarray | None = None
    label_set: tuple = BINARY_LABELS

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise SpecError(f"features must be an (n, d) matrix with n >= 1, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise SpecError("features must be finite")
        yc = np.asarray(self.y_clean, dtype=int)
        yn = np.asarray(self.y_noisy, dtype=int)
        n = X.shape[0]
        if yc.shape != (n,) or yn.shape != (n,):
            raise DimensionError("labels must be length-n vectors")
        labels = np.asarray(sorted(self.label_set), dtype=int)
        if not (np.isin(yc, labels).all() and np.isin(yn, labels).all()):
            raise SpecError(f"labels must lie in the declared label set {tuple(labels)}")
        mask = yn != yc
        if self.noise_mask is not None and not np.array_equal(
            np.asarray(self.noise_mask, dtype=bool), mask
        ):
            raise SpecError("noise_mask inconsistent with y_noisy != y_clean")
        in_R = self.in_region_R
        if in_R is not None:
            in_R = np.asarray(in_R, dtype=bool)
            if in_R.shape != (n,):
                raise DimensionError("in_region_R must be a length-n boolean vector")
            in_R.setflags(write=False)
        for arr in (X, yc, yn, mask):
            arr.setflags(write=False)
        self.features = X
        self.y_clean = yc
        self.y_noisy = yn
        self.noise_mask = mask
        self.in_region_R = in_R
        self.label_set = tuple(int(v) for v in sorted(self.label_set))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def noise_rate(self) -> float:
        return float(self.noise_mask.mean())

    @property
    def labeling_accuracy(self) -> float:
        """Fraction of noisy labels that agree with the ground truth."""
        return 1.0 - self.noise_rate

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.y_clean[i]))

    def with_noisy_labels(self, y_noisy, in_region_R=None) -> "NoisyDataset":
        """Value copy with new noisy labels; the mask is recomputed."""
        return NoisyDataset(
            self.features,
            self.y_clean,
            y_noisy,
            in_region_R=self.in_region_R if in_region_R is None else in_region_R,
            label_set=self.label_set,
        )


def sample_domain(spec: DomainSpec, which: str, n: int, seed: int) -> NoisyDataset:
    """Draw n labelled points from the source or target mixture.

    Labels are uniform on {-1, +1}; features are N(mean_y, sigma^2 I) with
    the target means translated by delta.  The returned dataset is clean:
    y_noisy == y_clean.
    """
    if which not in ("source", "target"):
        raise SpecError(f"which must be 'source' or 'target', got {which!r}")
    if n < 1:
        raise SpecError(f"n must be >= 1, got {n}")
    from .rng import make_rng

    rng = make_rng(seed)
    y = rng.integers(0, 2, size=n) * 2 - 1
    shift = spec.delta if which == "target" else 0.0
    means = np.where((y == 1)[:, None], spec.mu1, spec.mu2) + shift
    X = means + spec.sigma * rng.standard_normal((n, spec.d))
    return NoisyDataset(X, y, y)


def _check_dim(spec: DomainSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise DimensionError(f"x has dimension {x.shape[-1]}, spec has d={spec.d}")
    return x


def bayes_source_score(spec: DomainSpec, x) -> float | np.ndarray:
    """h_S(x); positive means the source-optimal classifier predicts +1."""
    x = _check_dim(spec, x)
    s2 = spec.sigma**2
    w = (spec.mu1 - spec.mu2) / s2
    b = (spec.mu1 @ spec.mu1 - spec.mu2 @ spec.mu2) / (2.0 * s2)
    out = x @ w - b
    return float(out) if np.ndim(out) == 0 else out


def bayes_target_score(spec: DomainSpec, x) -> float | np.ndarray:
    """h_T(x), the target-optimal analogue; h_T((mu1+mu2)/2 + delta) = 0."""
    x = _check_dim(spec, x)
    s2 = spec.sigma**2
    m1, m2 = spec.mu1 + spec.delta, spec.mu2 + spec.delta
    w = (spec.mu1 - spec.mu2) / s2
    b = (m1 @ m1 - m2 @ m2) / (2.0 * s2)
    out = x @ w - b
    return float(out) if np.ndim(out) == 0 else out


def bayes_source_predict(spec: DomainSpec, x) -> np.ndarray:
    """Hard labels of the source classifier: +1 iff h_S(x) > 0."""
    h = bayes_source_score(spec, x)
    return np.where(np.asarray(h) > 0, 1, -1)


def shift_magnitude(spec: DomainSpec) -> float:
    """alpha = delta'(mu2-mu1)/|mu2-mu1|^2 (spec.shift_projection gives c)."""
    return spec.alpha


def mislabel_rate_closed_form(spec: DomainSpec) -> float:
    """Exact target mislabeling rate of the source-optimal classifier.

    Evaluated at |alpha|; see the module docstring for why the rate depends
    on the shift only through the absolute projection coefficient.  At the
    knife edge |c| = |mu2-mu1|/2 the sign factor is 0 and the first term is
    Phi(0) = 1/2.
    """
    v = spec.separation
    c = abs(spec.alpha) * v
    half = 0.5 * v
    d1 = np.linalg.norm(half - c) * np.sign(np.linalg.norm(half) - np.linalg.norm(c))
    d2 = np.linalg.norm(half + c)
    return float(
        0.5 * special.normal_cdf(-d1 / spec.sigma) + 0.5 * special.normal_cdf(-d2 / spec.sigma)
    )


def bayes_error(spec: DomainSpec) -> float:
    """Phi(-|mu2-mu1|/(2 sigma)); the rate when the shift has alpha = 0."""
    return float(special.normal_cdf(-np.linalg.norm(spec.separation) / (2.0 * spec.sigma)))


class MonteCarloRate(NamedTuple):
    estimate: float
    std_error: float


def mislabel_rate_monte_carlo(
    spec: DomainSpec, n: int, seed: int, chunk: int = 200_000
) -> MonteCarloRate:
    """Sampling oracle for the closed-form rate.

    Draws n target points, labels them with the source classifier and
    returns the observed mislabeled fraction with its binomial standard
    error sqrt(p(1-p)/n).  Generation is chunked so large n stay within
    memory; the draw sequence (hence the estimate) depends only on
    (spec, n, seed, chunk).
    """
    if n < 1000:
        raise SpecError(f"n must be >= 1000 for a meaningful estimate, got {n}")
    from .rng import make_rng

    rng = make_rng(seed)
    wrong = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        y = rng.integers(0, 2, size=m) * 2 - 1
        means = np.where((y == 1)[:, None], spec.mu1, spec.mu2) + spec.delta
        X = means + spec.sigma * rng.standard_normal((m, spec.d))
        wrong += int(np.sum(bayes_source_predict(spec, X) != y))
        done += m
    p = wrong / n
    return MonteCarloRate(p, float(np.sqrt(p * (1.0 - p) / n)))
