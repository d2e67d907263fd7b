import math

import numpy as np
import pytest

from shiftnoise.errors import SpecError
from shiftnoise.losses import (
    ELR_BETA_GRID,
    ELR_LAMBDA_GRID,
    ELRState,
    LossSpec,
    composite_objective,
    elr_penalty,
    elr_penalty_grad,
    elr_update,
    loss_grad,
    loss_grad_batch,
    loss_value,
    loss_value_batch,
    symmetry_sum,
    validate_probs,
)

RNG = np.random.default_rng(1234)


def interior_probs(K, floor=0.02):
    p = RNG.dirichlet(np.ones(K))
    p = np.maximum(p, floor)
    return p / p.sum()


def fd_grad(f, p, h=1e-6):
    g = np.zeros_like(p)
    for k in range(p.shape[0]):
        e = np.zeros_like(p)
        e[k] = h
        g[k] = (f(p + e) - f(p - e)) / (2.0 * h)
    return g


ALL_SPECS = [
    LossSpec.ce(),
    LossSpec.mae(),
    LossSpec.rce(),
    LossSpec.gce(0.7),
    LossSpec.sl(),
    LossSpec.gjs(),
    LossSpec.normalized(LossSpec.ce()),
    LossSpec.normalized(LossSpec.gce(0.5)),
    LossSpec.sr(),
]


class TestLossSpecValidation:
    def test_bad_parameters_rejected(self):
        with pytest.raises(SpecError):
            LossSpec.gce(0.0)
        with pytest.raises(SpecError):
            LossSpec.gce(1.5)
        with pytest.raises(SpecError):
            LossSpec.rce(A=1.0)
        with pytest.raises(SpecError):
            LossSpec("gjs", pi=(0.9, 0.2))
        with pytest.raises(SpecError):
            LossSpec("unknown-loss")

    def test_json_round_trip(self):
        for spec in ALL_SPECS:
            again = LossSpec.from_json(spec.to_json())
            assert again == spec


class TestLossValues:
    def test_zero_loss_at_label_vertex(self):
        K = 4
        p = np.zeros(K)
        p[2] = 1.0
        for spec in (LossSpec.ce(), LossSpec.mae(), LossSpec.gce(0.7), LossSpec.rce()):
            assert loss_value(spec, p, 2) == pytest.approx(0.0, abs=1e-12)

    def test_gjs_zero_at_one_hot(self):
        p = np.zeros(3)
        p[1] = 1.0
        assert loss_value(LossSpec.gjs(pi=(0.5, 0.5)), p, 1) == pytest.approx(0.0)

    def test_gjs_nonnegative(self):
        for _ in range(100):
            K = int(RNG.choice([2, 5, 10]))
            assert loss_value(LossSpec.gjs(), interior_probs(K), int(RNG.integers(K))) >= 0.0

    def test_gce_endpoint_is_half_mae(self):
        for _ in range(50):
            K = int(RNG.choice([2, 5, 10]))
            p = interior_probs(K)
            y = int(RNG.integers(K))
            assert loss_value(LossSpec.gce(1.0), p, y) == pytest.approx(
                loss_value(LossSpec.mae(), p, y) / 2.0, abs=1e-12
            )

    def test_gce_interpolation_identity(self):
        # q * gce(q) + p_y^q = 1 identically.
        for q in (0.1, 0.5, 0.9, 1.0):
            p = interior_probs(5)
            y = 3
            v = loss_value(LossSpec.gce(q), p, y)
            assert q * v + p[y] ** q == pytest.approx(1.0, abs=1e-12)

    def test_gce_small_q_approaches_ce(self):
        for _ in range(20):
            p = interior_probs(6)
            y = int(RNG.integers(6))
            ce = loss_value(LossSpec.ce(), p, y)
            g = loss_value(LossSpec.gce(1e-4), p, y)
            assert abs(g - ce) < 1e-3

    def test_rce_hand_value(self):
        # one-hot target with log 0 := A = -4 gives 4 * (1 - p_y).
        p = np.array([0.3, 0.7])
        assert loss_value(LossSpec.rce(A=-4.0), p, 0) == pytest.approx(2.8)

    def test_sl_combination(self):
        p = interior_probs(5)
        y = 2
        sl = loss_value(LossSpec.sl(alpha=0.3, beta=1.7), p, y)
        ce = loss_value(LossSpec.ce(), p, y)
        rce = loss_value(LossSpec.rce(), p, y)
        assert sl == pytest.approx(0.3 * ce + 1.7 * rce, abs=1e-12)

    def test_normalized_uniform_is_one_over_k(self):
        p = np.array([0.5, 0.5])
        assert loss_value(LossSpec.normalized(LossSpec.ce()), p, 0) == pytest.approx(0.5)

    def test_sr_is_negative_self_overlap(self):
        p = interior_probs(4)
        assert loss_value(LossSpec.sr(), p, 1) == pytest.approx(-float(p @ p))

    def test_validate_probs_rejects_bad_vectors(self):
        with pytest.raises(SpecError):
            validate_probs(np.array([0.6, 0.6]))
        with pytest.raises(SpecError):
            validate_probs(np.array([1.2, -0.2]))
        with pytest.raises(SpecError):
            loss_value(LossSpec.ce(), interior_probs(3), 7)


class TestSymmetrySums:
    def test_constant_for_robust_losses(self):
        for K in (2, 10):
            for spec, expected in (
                (LossSpec.mae(), 2.0 * (K - 1)),
                (LossSpec.rce(), 4.0 * (K - 1)),
                (LossSpec.normalized(LossSpec.ce()), 1.0),
            ):
                sums = np.array([symmetry_sum(spec, interior_probs(K)) for _ in range(1000)])
                assert sums.var() <= 1e-18
                assert sums.mean() == pytest.approx(expected, abs=1e-9)

    def test_not_constant_for_ce_and_gce(self):
        for spec in (LossSpec.ce(), LossSpec.gce(0.7)):
            a = symmetry_sum(spec, np.array([0.7, 0.2, 0.1]))
            b = symmetry_sum(spec, np.array([0.4, 0.35, 0.25]))
            assert abs(a - b) > 1e-6


class TestGradients:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.kind + (f"-{s.inner.kind}" if s.inner else ""))
    def test_matches_finite_differences(self, spec):
        worst = 0.0
        for _ in range(100):
            K = int(RNG.choice([2, 5, 10]))
            p = interior_probs(K)
            y = int(RNG.integers(K))
            tgt = p.copy()[None, :] if spec.kind == "sr" else None

            def f(q):
                return float(loss_value_batch(spec, q[None, :], np.array([y]), None, tgt)[0])

            ga = loss_grad_batch(spec, p[None, :], np.array([y]), None, tgt)[0]
            gn = fd_grad(f, p)
            worst = max(worst, np.linalg.norm(ga - gn) / max(np.linalg.norm(gn), 1e-12))
        assert worst <= 1e-5

    def test_ce_gradient_form(self):
        p = interior_probs(4)
        g = loss_grad(LossSpec.ce(), p, 2)
        expected = np.zeros(4)
        expected[2] = -1.0 / p[2]
        np.testing.assert_allclose(g, expected, rtol=1e-12)

    def test_sr_gradient_is_constant_vector(self):
        p = interior_probs(5)
        target = p.copy()
        g = loss_grad(LossSpec.sr(), p, 0, sr_target=target)
        np.testing.assert_allclose(g, -target, rtol=0, atol=0)
        # ... regardless of where p moves while the target stays detached.
        q = interior_probs(5)
        g2 = loss_grad(LossSpec.sr(), q, 0, sr_target=target)
        np.testing.assert_allclose(g2, -target, rtol=0, atol=0)


class TestELR:
    def test_update_rule(self):
        state = ELRState.fresh(3, 2, beta=0.7)
        state.targets[1] = np.array([0.5, 0.5])
        elr_update(state, 1, np.array([1.0, 0.0]))
        np.testing.assert_allclose(state.targets[1], [0.65, 0.35])

    def test_beta_extremes(self):
        state = ELRState.fresh(1, 2, beta=0.0)
        elr_update(state, 0, np.array([0.9, 0.1]))
        np.testing.assert_allclose(state.targets[0], [0.9, 0.1])
        with pytest.raises(SpecError):
            ELRState.fresh(1, 2, beta=1.0)  # beta < 1 keeps the bank adaptive

    def test_rows_stay_in_box(self):
        state = ELRState.fresh(1, 4, beta=0.8)
        for _ in range(200):
            elr_update(state, 0, interior_probs(4))
            assert state.targets.min() >= 0.0
            assert state.targets.max() <= 1.0
            assert state.targets[0].sum() <= 1.0 + 1e-12

    def test_cold_start_penalty_zero(self):
        state = ELRState.fresh(2, 3, beta=0.9)
        p = interior_probs(3)
        assert elr_penalty(state, 0, p) == pytest.approx(0.0)
        np.testing.assert_allclose(elr_penalty_grad(state, 0, p), np.zeros(3))

    def test_orthogonal_prediction(self):
        state = ELRState.fresh(1, 2, beta=0.5)
        state.targets[0] = np.array([1.0, 0.0])
        p = np.array([0.0, 1.0])
        assert elr_penalty(state, 0, p) == pytest.approx(0.0)
        np.testing.assert_allclose(elr_penalty_grad(state, 0, p), [-1.0, 0.0])

    def test_gradient_identity_and_blowup(self):
        state = ELRState.fresh(1, 2, beta=0.5)
        state.targets[0] = np.array([1.0, 0.0])
        g_mid = elr_penalty_grad(state, 0, np.array([0.5, 0.5]))
        g_close = elr_penalty_grad(state, 0, np.array([0.99, 0.01]))
        assert np.linalg.norm(g_close) >= 49.9 * np.linalg.norm(g_mid) / 1.0001

    def test_clamp_counted(self):
        state = ELRState.fresh(1, 2, beta=0.5)
        state.targets[0] = np.array([1.0, 0.0])
        val = elr_penalty(state, 0, np.array([1.0, 0.0]))
        assert state.clamp_count == 1
        assert val == pytest.approx(math.log(1e-7))

    def test_penalty_matches_finite_differences(self):
        state = ELRState.fresh(1, 4, beta=0.6)
        state.targets[0] = 0.5 * interior_probs(4)
        p = interior_probs(4)
        g = elr_penalty_grad(state, 0, p)

        def f(q):
            return math.log(1.0 - float(state.targets[0] @ q))

        gn = fd_grad(f, p)
        assert np.linalg.norm(g - gn) / np.linalg.norm(gn) < 1e-6

    def test_index_out_of_range(self):
        state = ELRState.fresh(2, 2, beta=0.5)
        with pytest.raises(SpecError):
            elr_update(state, 2, np.array([0.5, 0.5]))


class TestCompositeObjective:
    def test_lambda_zero_is_base(self):
        state = ELRState.fresh(1, 3, beta=0.5)
        obj = composite_objective(LossSpec.ce(), (state, 0.0))
        p = interior_probs(3)
        assert obj.value(p, 1, index=0) == pytest.approx(loss_value(LossSpec.ce(), p, 1))

    def test_fresh_state_is_base(self):
        state = ELRState.fresh(1, 3, beta=0.5)
        obj = composite_objective(LossSpec.ce(), (state, 1.0))
        p = interior_probs(3)
        assert obj.value(p, 1, index=0) == pytest.approx(loss_value(LossSpec.ce(), p, 1))

    def test_gradient_is_sum_of_parts(self):
        state = ELRState.fresh(1, 3, beta=0.5)
        state.targets[0] = 0.6 * interior_probs(3)
        obj = composite_objective(LossSpec.gce(0.7), (state, 2.5))
        p = interior_probs(3)
        expected = loss_grad(LossSpec.gce(0.7), p, 2) + 2.5 * elr_penalty_grad(state, 0, p)
        np.testing.assert_allclose(obj.grad(p, 2, index=0), expected, rtol=1e-12)

    def test_composite_matches_finite_differences(self):
        state = ELRState.fresh(1, 4, beta=0.5)
        state.targets[0] = 0.5 * interior_probs(4)
        obj = composite_objective(LossSpec.ce(), (state, 1.5))
        p = interior_probs(4)

        def f(q):
            qq = np.asarray(q)
            base = -math.log(max(qq[1], 1e-7))
            pen = math.log(1.0 - float(state.targets[0] @ qq))
            return base + 1.5 * pen

        gn = fd_grad(f, p)
        ga = obj.grad(p, 1, index=0)
        assert np.linalg.norm(ga - gn) / np.linalg.norm(gn) < 1e-6

    def test_sweep_grids_exported(self):
        assert ELR_LAMBDA_GRID == (1.0, 3.0, 7.0, 12.0, 25.0)
        assert ELR_BETA_GRID == (0.5, 0.6, 0.7, 0.8, 0.9, 0.99)
