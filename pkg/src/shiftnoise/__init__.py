"""shiftnoise: a desk-scale lab for label noise generated by domain shift.

The package studies what happens when a classifier trained on one Gaussian
mixture annotates a translated copy of it: closed-form mislabeling rates,
a region where the per-sample mislabeling probability exceeds 1 - delta,
why symmetric-sum-constant ("robust") losses keep that noise, and the
early window in which gradient descent still predicts mislabeled points'
true classes.

Modules:
    domains   -- mixture pairs, optimal classifiers, mislabeling rates
    noise     -- source-model / margin-flip / symmetric noise, region R
    losses    -- CE, MAE, RCE, GCE, SL, GJS, normalized, SR, ELR penalty
    dynamics  -- full-batch logistic descent, early-time bounds
    bench     -- multiclass pseudo-labeling bench with learning curves
    harness   -- config-driven runner (CSV/JSON artifacts)
    acceptance-- the criterion suite behind `shiftnoise accept`
"""

from .domains import (
    BINARY_LABELS,
    DomainSpec,
    MonteCarloRate,
    NoisyDataset,
    Sample,
    bayes_error,
    bayes_source_predict,
    bayes_source_score,
    bayes_target_score,
    mislabel_rate_closed_form,
    mislabel_rate_monte_carlo,
    sample_domain,
    shift_magnitude,
)
from .errors import ConfigError, DimensionError, ShiftNoiseError, SpecError
from .losses import (
    ELRState,
    LossSpec,
    composite_objective,
    elr_penalty,
    elr_penalty_grad,
    elr_update,
    loss_grad,
    loss_value,
    symmetry_sum,
)
from .noise import (
    FLIP_NONE,
    RegionRSpec,
    annotate_with_source,
    flip_margin,
    flip_symmetric,
    match_noise_rate,
    posterior_true_class,
    region_R_membership,
    region_R_nonempty_condition,
)
from .dynamics import (
    alignment_bound_check,
    early_peak_bound,
    etp_bound,
    expected_noisy_correlation,
    gd_train,
    gen_margin_flip_data,
    kappa,
    logistic_grad,
)
from .bench import (
    SoftmaxModel,
    TrainConfig,
    fit_source_model,
    gen_multiclass_domains,
    memorization_speed,
    pseudo_label,
    standard_pipeline,
    train_on_noisy,
)

__version__ = "0.1.0"
