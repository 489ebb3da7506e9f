"""Loss values, gradients, and analytic properties."""

import numpy as np
import pytest

from spikeflag.errors import ConfigError, DataValidationError
from spikeflag.losses import (
    HuberLoss,
    LatencyMSE,
    LossConfig,
    RateCountMSE,
    SpikeTimeMSE,
    loss_for_method,
    make_loss,
)


class TestLatencyMSE:
    def test_equal_trains_give_zero(self):
        rng = np.random.default_rng(0)
        y = (rng.random((2, 4, 3, 5)) < 0.3).astype(float)
        assert LatencyMSE().value(y, y) == 0.0

    def test_single_differing_slot_counts_one(self):
        y = np.zeros((1, 3, 1, 4))
        f = y.copy()
        f[0, 1, 0, 2] = 1.0
        # batch 1, one time step: no averaging dilution
        assert LatencyMSE().value(y, f) == pytest.approx(1.0)

    def test_equals_hamming_distance_of_flat_trains(self):
        rng = np.random.default_rng(1)
        y = (rng.random((1, 8, 1, 6)) < 0.4).astype(float)
        f = (rng.random((1, 8, 1, 6)) < 0.4).astype(float)
        hamming = sum(
            1
            for c in range(8)
            for e in range(6)
            if y[0, c, 0, e] != f[0, c, 0, e]
        )
        assert LatencyMSE().value(y, f) == pytest.approx(hamming)

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        y = rng.random((2, 3, 4, 5))
        f = (rng.random((2, 3, 4, 5)) < 0.5).astype(float)
        loss = LatencyMSE()
        _, g = loss.value_and_grad(y, f)
        h = 1e-6
        for _ in range(30):
            i = tuple(rng.integers(0, s) for s in y.shape)
            yo = y[i]
            y[i] = yo + h
            vp = loss.value(y, f)
            y[i] = yo - h
            vm = loss.value(y, f)
            y[i] = yo
            assert g[i] == pytest.approx((vp - vm) / (2 * h), abs=1e-6)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataValidationError):
            LatencyMSE().value(np.zeros((1, 2, 3, 4)), np.zeros((1, 2, 3, 5)))


class TestRateCountMSE:
    def test_matching_counts_give_zero(self):
        y = np.zeros((1, 2, 1, 10))
        y[0, 0, 0, :8] = 1
        y[0, 1, 0, :2] = 1
        f = np.array([[[8.0], [2.0]]]).reshape(1, 2, 1)
        assert RateCountMSE().value(y, f) == 0.0

    def test_silent_output_on_background_segment(self):
        # every channel silent against the low-rate target 0.2*10 = 2
        y = np.zeros((1, 5, 1, 10))
        f = np.full((1, 5, 1), 2.0)
        assert RateCountMSE().value(y, f) == pytest.approx(4.0)

    def test_rfi_target_with_exact_count(self):
        y = np.zeros((1, 1, 1, 10))
        y[0, 0, 0, :8] = 1
        f = np.full((1, 1, 1), 8.0)
        assert RateCountMSE().value(y, f) == 0.0

    def test_grad_is_uniform_over_window(self):
        y = np.zeros((1, 1, 1, 4))
        f = np.full((1, 1, 1), 2.0)
        _, g = RateCountMSE().value_and_grad(y, f)
        assert np.allclose(g, g[0, 0, 0, 0])
        assert g[0, 0, 0, 0] == pytest.approx(2 * (0 - 2.0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataValidationError):
            RateCountMSE().value(np.zeros((1, 2, 3, 4)), np.zeros((1, 3, 3)))


class TestHuber:
    def test_equal_gives_zero(self):
        rng = np.random.default_rng(3)
        y = rng.random((2, 4, 3, 1))
        assert HuberLoss(1.0).value(y, y) == 0.0

    def test_quadratic_branch(self):
        y = np.full((1, 1, 1, 1), 0.5)
        f = np.zeros((1, 1, 1, 1))
        assert HuberLoss(1.0).value(y, f) == pytest.approx(0.125)

    def test_linear_branch(self):
        y = np.full((1, 1, 1, 1), 2.0)
        f = np.zeros((1, 1, 1, 1))
        assert HuberLoss(1.0).value(y, f) == pytest.approx(1.5)

    def test_continuity_and_smoothness_at_delta(self):
        delta = 1.0
        eps = 1e-10
        lo = HuberLoss(delta)

        def val(d):
            return lo.value(np.full((1, 1, 1, 1), d), np.zeros((1, 1, 1, 1)))

        assert abs(val(delta - eps) - val(delta + eps)) < 1e-9

        def deriv(d):
            _, g = lo.value_and_grad(np.full((1, 1, 1, 1), d), np.zeros((1, 1, 1, 1)))
            return g[0, 0, 0, 0]

        assert abs(deriv(delta - eps) - deriv(delta + eps)) < 1e-9

    def test_grad_sign_and_clip(self):
        y = np.array([[[[-3.0, -0.4, 0.4, 3.0]]]])
        f = np.zeros_like(y)
        _, g = HuberLoss(1.0).value_and_grad(y, f)
        assert np.allclose(g[0, 0, 0], [-1.0, -0.4, 0.4, 1.0])

    def test_invalid_delta_rejected(self):
        with pytest.raises(ConfigError):
            HuberLoss(0.0)


class TestSpikeTimeMSE:
    def test_equal_first_spike_times_give_zero(self):
        y = np.zeros((1, 2, 1, 4))
        y[0, 0, 0, 0] = 1         # flagged pixel firing at 0
        f = np.zeros((1, 2, 1, 4))
        f[0, 0, 0, 0] = 1
        f[0, 1, 0, 3] = 1         # background target (counts as E... not 0)
        # background: silent output tau = 4 vs target 4 -> 0
        assert SpikeTimeMSE().value(y, f) == pytest.approx(0.0)

    def test_silence_on_flagged_pixel_costs_e_squared(self):
        y = np.zeros((1, 1, 1, 6))
        f = np.zeros((1, 1, 1, 6))
        f[0, 0, 0, 0] = 1
        assert SpikeTimeMSE().value(y, f) == pytest.approx(36.0)

    def test_matches_naive_first_spike_oracle_on_binary_trains(self):
        rng = np.random.default_rng(4)
        loss = SpikeTimeMSE()
        for _ in range(20):
            b, c, t, e = 2, 5, 3, 6
            y = (rng.random((b, c, t, e)) < 0.25).astype(float)
            sel = rng.random((b, c, t)) < 0.5
            f = np.zeros((b, c, t, e))
            f[..., 0] = sel
            f[..., -1] = ~sel
            total = 0.0
            for bi in range(b):
                for ci in range(c):
                    for ti in range(t):
                        tau = e
                        for ei in range(e):
                            if y[bi, ci, ti, ei]:
                                tau = ei
                                break
                        target = 0.0 if sel[bi, ci, ti] else float(e)
                        total += (tau - target) ** 2
            assert loss.value(y, f) == pytest.approx(total / (b * t))

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        y = rng.uniform(0.05, 0.95, (2, 3, 2, 6))
        sel = rng.random((2, 3, 2)) < 0.5
        f = np.zeros((2, 3, 2, 6))
        f[..., 0] = sel
        f[..., -1] = ~sel
        loss = SpikeTimeMSE()
        _, g = loss.value_and_grad(y, f)
        h = 1e-5
        for _ in range(60):
            i = tuple(rng.integers(0, s) for s in y.shape)
            yo = y[i]
            y[i] = yo + h
            vp = loss.value(y, f)
            y[i] = yo - h
            vm = loss.value(y, f)
            y[i] = yo
            fd = (vp - vm) / (2 * h)
            assert abs(g[i] - fd) <= 1e-4 * max(abs(g[i]), abs(fd), 1e-2)


class TestSelection:
    def test_kind_mapping(self):
        assert isinstance(make_loss(LossConfig("latency-mse")), LatencyMSE)
        assert isinstance(make_loss(LossConfig("rate-count-mse")), RateCountMSE)
        assert isinstance(make_loss(LossConfig("huber")), HuberLoss)
        assert isinstance(make_loss(LossConfig("spike-time-mse")), SpikeTimeMSE)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            make_loss(LossConfig("absolute-banana"))

    def test_method_pairing(self):
        assert isinstance(loss_for_method("rate"), RateCountMSE)
        assert isinstance(loss_for_method("delta"), HuberLoss)
        assert isinstance(loss_for_method("latency"), SpikeTimeMSE)
        assert isinstance(loss_for_method("sf-first"), SpikeTimeMSE)
        assert isinstance(loss_for_method("latency", latency_kind="latency-mse"),
                          LatencyMSE)

    def test_batch_permutation_leaves_value_unchanged(self):
        rng = np.random.default_rng(6)
        y = rng.random((6, 4, 3, 5))
        f = (rng.random((6, 4, 3, 5)) < 0.5).astype(float)
        counts = rng.uniform(0, 5, (6, 4, 3))
        perm = rng.permutation(6)
        assert LatencyMSE().value(y, f) == pytest.approx(
            LatencyMSE().value(y[perm], f[perm]))
        assert HuberLoss(1.0).value(y, f) == pytest.approx(
            HuberLoss(1.0).value(y[perm], f[perm]))
        assert RateCountMSE().value(y, counts) == pytest.approx(
            RateCountMSE().value(y[perm], counts[perm]))

    def test_losses_nonnegative_and_zero_iff_match(self):
        rng = np.random.default_rng(7)
        y = (rng.random((3, 4, 2, 5)) < 0.4).astype(float)
        f = y.copy()
        assert LatencyMSE().value(y, f) == 0.0
        f[0, 0, 0, 0] = 1.0 - f[0, 0, 0, 0]
        assert LatencyMSE().value(y, f) > 0.0

    def test_pixel_weight_mask_drops_ignored_pixels(self):
        y = np.ones((1, 2, 1, 3))
        f = np.zeros((1, 2, 1, 3))
        w = np.array([[[1.0], [0.0]]]).reshape(1, 2, 1)
        v_all, _ = LatencyMSE().value_and_grad(y, f)
        v_half, g = LatencyMSE().value_and_grad(y, f, w)
        assert v_half == pytest.approx(v_all / 2)
        assert np.all(g[0, 1] == 0.0)
