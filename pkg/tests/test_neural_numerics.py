import numpy as np
import pytest

from dartclean.errors import ConfigError, NumericError, ShapeError
from dartclean.layers import (
    BatchNorm,
    Dense,
    dropout_backward,
    dropout_forward,
    dropout_rate,
    relu_backward,
    relu_forward,
)
from dartclean.optim import (
    Adam,
    LrSchedule,
    PlateauTracker,
    accumulate_gradients,
    clip_by_global_norm,
    global_norm,
)


class TestDropoutRate:
    def test_layer_zero(self):
        assert dropout_rate(0) == pytest.approx(0.10)

    def test_layer_two(self):
        assert dropout_rate(2) == pytest.approx(0.20)

    def test_cap_at_layer_four(self):
        assert dropout_rate(4) == pytest.approx(0.30)
        assert dropout_rate(10) == pytest.approx(0.30)

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            dropout_rate(-1)


class TestDense:
    def test_zero_weights_emit_bias(self, rng):
        layer = Dense(4, 3, rng)
        layer.W[:] = 0.0
        layer.b[:] = [1.0, 2.0, 3.0]
        y, _ = layer.forward(rng.normal(size=(5, 4)))
        assert np.array_equal(y, np.tile([1.0, 2.0, 3.0], (5, 1)))

    def test_scalar_affine(self, rng):
        layer = Dense(1, 1, rng)
        layer.W[:] = 2.0
        layer.b[:] = 1.0
        y, _ = layer.forward(np.array([[3.0]]))
        assert y[0, 0] == 7.0

    def test_matches_naive_matmul(self, rng):
        layer = Dense(4, 5, rng)
        x = rng.normal(size=(7, 4))
        y, _ = layer.forward(x)
        for r in range(7):
            for o in range(5):
                expect = layer.b[o] + sum(layer.W[o, i] * x[r, i] for i in range(4))
                assert abs(y[r, o] - expect) <= 1e-12

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            Dense(4, 5, rng).forward(rng.normal(size=(2, 3)))

    def test_hand_derivative(self, rng):
        # w=1, b=0, x=2, target=0, L=(wx-t)^2: dL/dw = 2(wx-t)x = 8
        layer = Dense(1, 1, rng)
        layer.W[:] = 1.0
        layer.b[:] = 0.0
        x = np.array([[2.0]])
        y, cache = layer.forward(x)
        gy = 2.0 * (y - 0.0)
        _, grads = layer.backward(gy, cache)
        assert grads["W"][0, 0] == 8.0

    def test_zero_output_gradient_zeroes_params(self, rng):
        layer = Dense(3, 4, rng)
        _, cache = layer.forward(rng.normal(size=(6, 3)))
        gx, grads = layer.backward(np.zeros((6, 4)), cache)
        assert not gx.any()
        assert not grads["W"].any()
        assert not grads["b"].any()


class TestBatchNorm:
    def test_train_mode_standardizes(self, rng):
        bn = BatchNorm(4)
        x = rng.normal(3.0, 2.0, size=(256, 4))
        y, _ = bn.forward(x, train=True)
        assert np.allclose(y.mean(axis=0), 0.0, atol=1e-10)
        assert np.allclose(y.std(axis=0), 1.0, atol=1e-3)

    def test_running_stats_update(self, rng):
        bn = BatchNorm(2, momentum=0.9)
        x = rng.normal(size=(64, 2))
        bn.forward(x, train=True)
        assert np.allclose(bn.running_mean, 0.1 * x.mean(axis=0))
        assert np.allclose(bn.running_var, 0.9 * 1.0 + 0.1 * x.var(axis=0))

    def test_infer_mode_is_affine(self, rng):
        bn = BatchNorm(3)
        bn.running_mean = rng.normal(size=3)
        bn.running_var = rng.uniform(0.5, 2.0, size=3)
        x1 = rng.normal(size=(5, 3))
        x2 = rng.normal(size=(5, 3))
        a, b = 2.0, -1.5
        y_mix, _ = bn.forward(a * x1 + b * x2, train=False)
        y1, _ = bn.forward(x1, train=False)
        y2, _ = bn.forward(x2, train=False)
        # affine map: f(ax+bx') - f(0) == a(f(x)-f(0)) + b(f(x')-f(0))
        y0, _ = bn.forward(np.zeros((5, 3)), train=False)
        assert np.allclose(y_mix - y0, a * (y1 - y0) + b * (y2 - y0), atol=1e-10)

    def test_infer_mode_does_not_touch_running_stats(self, rng):
        bn = BatchNorm(3)
        mean0 = bn.running_mean.copy()
        var0 = bn.running_var.copy()
        bn.forward(rng.normal(size=(8, 3)), train=False)
        assert np.array_equal(bn.running_mean, mean0)
        assert np.array_equal(bn.running_var, var0)

    def test_backward_matches_finite_differences(self, rng):
        bn = BatchNorm(3)
        bn.gamma = rng.normal(1.0, 0.2, 3)
        bn.shift = rng.normal(0.0, 0.2, 3)
        x = rng.normal(size=(7, 3))
        target = rng.normal(size=(7, 3))

        def loss(xv):
            y, _ = bn.forward(xv, train=True)
            return float(np.sum((y - target) ** 2))

        y, cache = bn.forward(x, train=True)
        gx, grads = bn.backward(2.0 * (y - target), cache)
        h = 1e-6
        for r in range(7):
            for c in range(3):
                xp = x.copy(); xp[r, c] += h
                xm = x.copy(); xm[r, c] -= h
                fd = (loss(xp) - loss(xm)) / (2 * h)
                assert abs(gx[r, c] - fd) <= 1e-4 * max(1.0, abs(fd))


class TestReluDropout:
    def test_relu_forward_backward(self):
        x = np.array([[-1.0, 0.0, 2.0]])
        y, mask = relu_forward(x)
        assert np.array_equal(y, [[0.0, 0.0, 2.0]])
        gx = relu_backward(np.ones_like(x), mask)
        assert np.array_equal(gx, [[0.0, 0.0, 1.0]])

    def test_dropout_identity_when_inferring(self, rng):
        x = rng.normal(size=(4, 4))
        y, cache = dropout_forward(x, 0.3, train=False, rng=rng)
        assert y is x and cache is None
        assert dropout_backward(x, None) is x

    def test_dropout_inverted_scaling(self, rng):
        x = np.ones((2000, 10))
        y, _ = dropout_forward(x, 0.3, train=True, rng=rng)
        kept = y != 0.0
        assert np.allclose(y[kept], 1.0 / 0.7)
        assert abs(kept.mean() - 0.7) < 0.03

    def test_dropout_backward_uses_same_mask(self, rng):
        x = rng.normal(size=(8, 8))
        y, cache = dropout_forward(x, 0.2, train=True, rng=rng)
        gy = np.ones_like(x)
        gx = dropout_backward(gy, cache)
        assert np.array_equal(gx == 0.0, y == 0.0)


class TestClipping:
    def test_norm_two_scales_by_half(self):
        grads = {"a": np.array([2.0, 0.0]), "b": np.array([0.0, 0.0])}
        clipped, norm = clip_by_global_norm(grads, 1.0)
        assert norm == 2.0
        assert np.array_equal(clipped["a"], [1.0, 0.0])

    def test_small_gradients_untouched(self, rng):
        grads = {"a": rng.normal(size=3) * 1e-3}
        clipped, _ = clip_by_global_norm(grads, 1.0)
        assert np.array_equal(clipped["a"], grads["a"])

    def test_clipped_norm_never_exceeds_tau(self, rng):
        for _ in range(20):
            grads = {"a": rng.normal(size=10) * rng.uniform(0.1, 100)}
            clipped, _ = clip_by_global_norm(grads, 1.0)
            assert global_norm(clipped) <= 1.0 + 1e-12


class TestAccumulate:
    def test_scalar_mean(self):
        grads = [{"w": np.array(v)} for v in [1.0, 2.0, 3.0, 4.0]]
        assert accumulate_gradients(grads)["w"] == 2.5

    def test_idempotent_on_identical(self, rng):
        g = {"w": rng.normal(size=4)}
        out = accumulate_gradients([g, g, g])
        assert np.allclose(out["w"], g["w"], atol=1e-15)

    def test_matches_sum_over_n(self, rng):
        grads = [{"w": rng.normal(size=(3, 3))} for _ in range(4)]
        out = accumulate_gradients(grads)
        ref = sum(g["w"] for g in grads) / 4
        assert np.max(np.abs(out["w"] - ref)) <= 1e-15

    def test_empty_list_rejected(self):
        with pytest.raises(ConfigError):
            accumulate_gradients([])


class TestAdam:
    def test_zero_grad_no_decay_leaves_params(self):
        w = np.array([1.0, -2.0])
        opt = Adam({"x": w}, weight_decay=0.0)
        opt.step({"x": np.zeros(2)}, lr=0.1)
        assert np.array_equal(w, [1.0, -2.0])

    def test_scalar_quadratic_converges(self):
        w = np.array([0.0])
        opt = Adam({"w.W": w}, weight_decay=0.0)
        for _ in range(100):
            opt.step({"w.W": 2.0 * (w - 3.0)}, lr=0.1)
        assert abs(w[0] - 3.0) < 0.1

    def test_non_finite_gradient_aborts(self):
        w = np.array([1.0])
        opt = Adam({"x": w})
        with pytest.raises(NumericError):
            opt.step({"x": np.array([np.nan])}, lr=0.1)
        assert w[0] == 1.0

    def test_decay_applies_only_to_dense_weights(self):
        w = np.array([1.0])
        gamma = np.array([1.0])
        opt = Adam({"l.W": w, "l.gamma": gamma}, weight_decay=0.5)
        opt.step({"l.W": np.zeros(1), "l.gamma": np.zeros(1)}, lr=0.1)
        assert w[0] == pytest.approx(1.0 - 0.1 * 0.5)
        assert gamma[0] == 1.0


class TestLrSchedule:
    def test_step_decay_epoch_150(self):
        sched = LrSchedule(variant="step_decay", base_lr=1e-4, decay_steps=100)
        assert sched.lr_at(0, epoch=150) == pytest.approx(5e-5)

    def test_warmup_halfway(self):
        sched = LrSchedule(variant="warmup", base_lr=1e-4, t_warmup=1000)
        assert sched.lr_at(500) == pytest.approx(5e-5)

    def test_cosine_end_floored(self):
        sched = LrSchedule(variant="cosine", base_lr=1e-4, total_steps=200)
        assert sched.lr_at(200) == pytest.approx(1e-8)
        assert sched.lr_at(0) == pytest.approx(1e-4)
        assert sched.lr_at(100) == pytest.approx(5e-5)

    def test_cosine_requires_total_steps(self):
        with pytest.raises(ConfigError):
            LrSchedule(variant="cosine", total_steps=0)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            LrSchedule(variant="polynomial")

    def test_emitted_lr_always_positive(self):
        sched = LrSchedule(variant="cosine", base_lr=1e-4, total_steps=10,
                           apply_warmup=True)
        for t in range(11):
            assert sched.lr_at(t) > 0.0

    def test_composition_warmup_then_decay_then_plateau(self):
        sched = LrSchedule(variant="step_decay", base_lr=1e-4, decay_steps=100,
                           t_warmup=1000, apply_warmup=True)
        lr = sched.lr_at(500, epoch=150, plateau_mult=0.5)
        assert lr == pytest.approx(1e-4 * 0.5 * 0.5 ** 1 * 0.5)


class TestPlateauTracker:
    def test_halves_after_patience(self):
        tracker = PlateauTracker(patience=3, min_delta=1e-4)
        tracker.observe(1.0)
        for _ in range(4):
            mult = tracker.observe(1.0)
        assert mult == 0.5

    def test_improvement_resets(self):
        tracker = PlateauTracker(patience=2, min_delta=1e-4)
        tracker.observe(1.0)
        tracker.observe(1.0)
        tracker.observe(0.5)  # improvement resets the wait counter
        tracker.observe(0.5)
        assert tracker.multiplier == 1.0
