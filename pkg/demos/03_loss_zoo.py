"""A tour of the label-noise loss zoo.

The classic robustness criterion asks that summing a loss over all K
possible labels gives a constant: then, under *bounded* noise, the noisy
risk ranks classifiers the same way the clean risk does.  MAE, reverse
cross entropy and any normalized loss satisfy it; plain cross entropy and
the generalized (Box-Cox) family with q < 1 do not.  The script also
exercises the moving-average penalty whose gradient blows up as the
prediction aligns with its anchor: that blow-up is what lets it overpower
a base loss that is trying to fit wrong labels.
"""

import numpy as np

from shiftnoise import ELRState, LossSpec, elr_penalty_grad, elr_update, symmetry_sum
from shiftnoise.losses import loss_grad, loss_value

rng = np.random.default_rng(0)


def random_probs(K):
    p = rng.dirichlet(np.ones(K))
    p = np.maximum(p, 0.02)
    return p / p.sum()


print(__doc__)

K = 10
zoo = {
    "ce": LossSpec.ce(),
    "mae": LossSpec.mae(),
    "rce(A=-4)": LossSpec.rce(),
    "gce(q=0.7)": LossSpec.gce(0.7),
    "sl": LossSpec.sl(),
    "gjs": LossSpec.gjs(),
    "norm(ce)": LossSpec.normalized(LossSpec.ce()),
}
print(f"K = {K}: sum of the loss over all labels, at three random predictions")
print(f"{'loss':12s} {'sum @ p1':>10s} {'sum @ p2':>10s} {'sum @ p3':>10s}   robust?")
probs = [random_probs(K) for _ in range(3)]
for name, spec in zoo.items():
    sums = [symmetry_sum(spec, p) for p in probs]
    robust = "yes" if max(sums) - min(sums) < 1e-9 else "no"
    print(f"{name:12s} {sums[0]:10.4f} {sums[1]:10.4f} {sums[2]:10.4f}   {robust}")

print("\nThe Box-Cox family interpolates between the two worlds:")
p, y = random_probs(5), 2
for q in (1.0, 0.7, 0.3, 1e-4):
    print(f"  gce(q={q:<6}) = {loss_value(LossSpec.gce(q), p, y):.6f}"
          + ("   == mae/2"
             if q == 1.0 else ("   ~= ce" if q <= 1e-4 else "")))
print(f"  mae/2        = {loss_value(LossSpec.mae(), p, y)/2:.6f}")
print(f"  ce           = {loss_value(LossSpec.ce(), p, y):.6f}")

print("\nMoving-average penalty: anchor a prediction bank at a past belief")
state = ELRState.fresh(n=1, K=2, beta=0.7)
state.targets[0] = np.array([1.0, 0.0])  # the bank believes class 0
for align in (0.5, 0.9, 0.99):
    p = np.array([align, 1.0 - align])
    g = elr_penalty_grad(state, 0, p)
    print(f"  alignment {align:.2f}: |gradient| = {np.linalg.norm(g):8.2f}")
print("The pull grows without bound as predictions approach the anchor,")
print("which is how early beliefs can win against a label-fitting loss.")

print("\nIts negative control: the detached self-overlap term has a constant")
print("gradient equal to minus the current prediction, nothing more:")
p = random_probs(3)
print(f"  prediction      {np.round(p, 4)}")
print(f"  sr gradient     {np.round(loss_grad(LossSpec.sr(), p, 0, sr_target=p.copy()), 4)}")
