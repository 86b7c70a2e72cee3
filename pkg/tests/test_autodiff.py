"""Autodiff engine: op gradients vs finite differences, Adam, STE."""

import numpy as np
import pytest

from splitsnn import autodiff as ad
from splitsnn.autodiff import Adam, BatchNormStats, SurrogateSpec, Tensor
from splitsnn.rng import derive_rng

from oracles import central_difference, relative_error


class TestLinearOps:
    def test_identity_matmul(self):
        w = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(Tensor(np.eye(2)), Tensor(w))
        np.testing.assert_array_equal(out.data, w)

    def test_matmul_weight_gradient_matches_fd(self):
        rng = derive_rng(0, "mm")
        x = rng.normal(size=(3, 4))
        w0 = rng.normal(size=(4, 2))
        w = Tensor(w0, requires_grad=True)
        ad.tsum(ad.matmul(Tensor(x), w)).backward()
        numeric = central_difference(lambda m: float((x @ m).sum()), w0.copy(),
                                     step=1e-6)
        assert relative_error(w.grad, numeric) <= 1e-4

    def test_zero_input_zero_output_zero_weight_grad(self):
        w = Tensor(derive_rng(1, "mm").normal(size=(4, 2)),
                   requires_grad=True)
        out = ad.matmul(Tensor(np.zeros((3, 4))), w)
        assert np.all(out.data == 0)
        ad.tsum(out).backward()
        assert np.all(w.grad == 0)

    def test_broadcast_matmul_gradients_match_fd(self):
        # stacked (B, N, D) @ (D, D2) and (N, N) @ (B, N, D)
        rng = derive_rng(2, "mm")
        x = rng.normal(size=(2, 3, 4))
        w0 = rng.normal(size=(4, 2))
        w = Tensor(w0, requires_grad=True)
        ad.tsum(ad.matmul(Tensor(x), w)).backward()
        numeric = central_difference(lambda m: float((x @ m).sum()), w0.copy())
        assert relative_error(w.grad, numeric) <= 1e-4

        t0 = rng.normal(size=(3, 3))
        t = Tensor(t0, requires_grad=True)
        ad.tsum(ad.matmul(t, Tensor(x.transpose(0, 2, 1)))).backward()
        numeric = central_difference(
            lambda m: float(np.matmul(m, x.transpose(0, 2, 1)).sum()),
            t0.copy())
        assert relative_error(t.grad, numeric) <= 1e-4

    @pytest.mark.parametrize("op_name", ["add", "mul"])
    def test_broadcast_elementwise_gradients(self, op_name):
        rng = derive_rng(3, op_name)
        a0 = rng.normal(size=(3, 4))
        b0 = rng.normal(size=(4,))
        op = getattr(ad, op_name)
        a, b = Tensor(a0, requires_grad=True), Tensor(b0, requires_grad=True)
        ad.tsum(op(a, b)).backward()
        np_op = {"add": np.add, "mul": np.multiply}[op_name]
        for tensor, x0, other_first in ((a, a0, False), (b, b0, True)):
            def fn(v, other_first=other_first):
                return float(np_op(b0 if not other_first else a0, v).sum()) \
                    if True else 0.0
            numeric = central_difference(
                (lambda v: float(np_op(v, b0).sum())) if tensor is a
                else (lambda v: float(np_op(a0, v).sum())), x0.copy())
            assert relative_error(tensor.grad, numeric) <= 1e-4

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            ad.matmul(Tensor(np.zeros(3).reshape(1, 3)),
                      Tensor(np.zeros((4, 2))))

    def test_reshape_transpose_index_stack_gradients(self):
        rng = derive_rng(4, "shape")
        x0 = rng.normal(size=(2, 3, 4))
        w = rng.normal(size=(2, 3, 4))

        x = Tensor(x0, requires_grad=True)
        out = ad.reshape(x, (6, 4))
        ad.tsum(ad.mul(out, Tensor(w.reshape(6, 4)))).backward()
        np.testing.assert_allclose(x.grad, w)

        x = Tensor(x0, requires_grad=True)
        out = ad.transpose(x, (1, 0, 2))
        ad.tsum(ad.mul(out, Tensor(w.transpose(1, 0, 2)))).backward()
        np.testing.assert_allclose(x.grad, w)

        x = Tensor(x0, requires_grad=True)
        ad.tsum(ad.index_axis(x, 1, 2)).backward()
        expected = np.zeros_like(x0)
        expected[:, 2, :] = 1.0
        np.testing.assert_allclose(x.grad, expected)

        parts = [Tensor(x0[i], requires_grad=True) for i in range(2)]
        ad.tsum(ad.mul(ad.stack(parts, axis=0), Tensor(w))).backward()
        for i, p in enumerate(parts):
            np.testing.assert_allclose(p.grad, w[i])


class TestBatchNorm:
    def make(self, features):
        gamma = Tensor(np.ones(features), requires_grad=True)
        beta = Tensor(np.zeros(features), requires_grad=True)
        return gamma, beta, BatchNormStats(features)

    def test_standardized_batch_passes_through(self):
        rng = derive_rng(5, "bn")
        x = rng.normal(size=(2000, 3))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        gamma, beta, stats = self.make(3)
        out = ad.batch_norm(Tensor(x), gamma, beta, stats, training=True)
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_constant_batch_normalizes_to_zero(self):
        gamma, beta, stats = self.make(2)
        x = np.full((5, 2), 3.7)
        out = ad.batch_norm(Tensor(x), gamma, beta, stats, training=True)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_running_stats_momentum(self):
        gamma, beta, stats = self.make(1)
        x = np.array([[0.0], [2.0]])   # mean 1, var 1
        ad.batch_norm(Tensor(x), gamma, beta, stats, training=True)
        assert stats.mean[0] == pytest.approx(0.1 * 1.0)
        assert stats.var[0] == pytest.approx(0.9 * 1.0 + 0.1 * 1.0)

    def test_eval_mode_uses_running_stats(self):
        gamma, beta, stats = self.make(1)
        stats.mean[:] = 2.0
        stats.var[:] = 4.0
        out = ad.batch_norm(Tensor(np.array([[4.0]])), gamma, beta, stats,
                            training=False)
        assert out.data[0, 0] == pytest.approx((4.0 - 2.0) / np.sqrt(4 + 1e-5))

    def test_zero_batch_rejected_in_training(self):
        gamma, beta, stats = self.make(2)
        with pytest.raises(ValueError):
            ad.batch_norm(Tensor(np.zeros((0, 2))), gamma, beta, stats,
                          training=True)

    def test_gradients_match_fd_on_4x3_batch(self):
        rng = derive_rng(6, "bn")
        x0 = rng.normal(size=(4, 3))
        g0 = rng.normal(size=3)
        b0 = rng.normal(size=3)
        readout = rng.normal(size=(4, 3))

        def forward_np(x, g, b):
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            xhat = (x - mean) / np.sqrt(var + 1e-5)
            return float(((g * xhat + b) * readout).sum())

        x = Tensor(x0, requires_grad=True)
        gamma = Tensor(g0, requires_grad=True)
        beta = Tensor(b0, requires_grad=True)
        out = ad.batch_norm(x, gamma, beta, BatchNormStats(3), training=True)
        ad.tsum(ad.mul(out, Tensor(readout))).backward()

        for tensor, arg_index in ((x, 0), (gamma, 1), (beta, 2)):
            args = [x0.copy(), g0.copy(), b0.copy()]

            def fn(v, i=arg_index):
                vals = list(args)
                vals[i] = v
                return forward_np(*vals)

            numeric = central_difference(fn, args[arg_index])
            assert relative_error(tensor.grad, numeric) <= 1e-3


class TestHeavisideSurrogate:
    def test_forward_threshold_and_zero_convention(self):
        spec = SurrogateSpec("boxcar", 1.0)
        v = Tensor(np.array([0.3, -0.3, 0.0]))
        out = ad.heaviside_surrogate(v, spec)
        assert out.data.tolist() == [1.0, 0.0, 1.0]

    def test_boxcar_backward_multiplier(self):
        spec = SurrogateSpec("boxcar", 1.0)
        v = Tensor(np.array([0.4, 0.6]), requires_grad=True)
        ad.tsum(ad.heaviside_surrogate(v, spec)).backward()
        assert v.grad.tolist() == [1.0, 0.0]

    def test_fast_sigmoid_backward_multiplier(self):
        spec = SurrogateSpec("fast-sigmoid", 2.0)
        v = Tensor(np.array([0.5, -1.0]), requires_grad=True)
        ad.tsum(ad.heaviside_surrogate(v, spec)).backward()
        np.testing.assert_allclose(
            v.grad, [1 / (1 + 2 * 0.5) ** 2, 1 / (1 + 2 * 1.0) ** 2])

    def test_relaxed_mode_gradient_matches_fd_through_lif_chain(self):
        # unrolled leaky chain: v <- beta v (1 - s) + w x, s = spike(v - 1)
        spec = SurrogateSpec("fast-sigmoid", 2.0)
        beta = 0.9
        rng = derive_rng(7, "lif")
        inputs = rng.normal(1.0, 0.5, size=5)
        w0 = np.array([0.8])

        def relaxed_np(w):
            v, total = 0.0, 0.0
            for t in range(5):
                v = beta * v + w[0] * inputs[t]
                s = spec.relaxed(np.array([v - 1.0]))[0]
                total += s
                v = v * (1 - s)
            return float(total)

        for steps in (1, 2, 5):
            w = Tensor(w0, requires_grad=True)
            v = Tensor(np.zeros(1))
            total = Tensor(np.zeros(1))
            for t in range(steps):
                current = ad.scale(w, inputs[t])
                v = ad.add(ad.scale(v, beta), current)
                s = ad.heaviside_surrogate(ad.add(v, Tensor(-1.0)), spec,
                                           mode="relaxed")
                total = ad.add(total, s)
                v = ad.mul(v, ad.one_minus(s))
            ad.tsum(total).backward()

            def chain_np(wv, steps=steps):
                v, tot = 0.0, 0.0
                for t in range(steps):
                    v = beta * v + wv[0] * inputs[t]
                    s = spec.relaxed(np.array([v - 1.0]))[0]
                    tot += s
                    v = v * (1 - s)
                return float(tot)

            numeric = central_difference(chain_np, w0.copy())
            assert relative_error(w.grad, numeric) <= 1e-3


class TestBernoulliSte:
    def test_degenerate_probabilities_exact(self):
        rng = derive_rng(8, "bern")
        zeros = ad.bernoulli_ste(Tensor(np.zeros(500)), rng)
        ones = ad.bernoulli_ste(Tensor(np.ones(500)), rng)
        assert np.all(zeros.data == 0)
        assert np.all(ones.data == 1)

    def test_half_probability_mean(self):
        rng = derive_rng(9, "bern")
        draws = ad.bernoulli_ste(Tensor(np.full(10 ** 4, 0.5)), rng)
        sd = np.sqrt(0.25 / 10 ** 4)
        assert abs(draws.data.mean() - 0.5) <= 4 * sd

    def test_straight_through_backward_is_identity(self):
        p = Tensor(derive_rng(10, "bern").uniform(0, 1, size=(3, 3)),
                   requires_grad=True)
        ad.tsum(ad.bernoulli_ste(p, derive_rng(11, "bern"))).backward()
        np.testing.assert_array_equal(p.grad, np.ones((3, 3)))

    def test_forward_clamps_but_backward_does_not(self):
        p = Tensor(np.array([-0.5, 1.5]), requires_grad=True)
        out = ad.bernoulli_ste(p, derive_rng(12, "bern"))
        assert out.data.tolist() == [0.0, 1.0]
        ad.tsum(out).backward()
        np.testing.assert_array_equal(p.grad, [1.0, 1.0])


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_log_classes(self):
        loss = ad.softmax_cross_entropy(Tensor(np.zeros(4)), 2)
        assert loss.data == pytest.approx(np.log(4.0), rel=1e-12)

    def test_confident_correct_logit(self):
        loss = ad.softmax_cross_entropy(
            Tensor(np.array([10.0, 0.0, 0.0, 0.0])), 0)
        assert loss.data == pytest.approx(np.log(1 + 3 * np.exp(-10.0)),
                                          rel=1e-9)
        assert loss.data == pytest.approx(1.36e-4, rel=0.01)

    def test_gradient_is_softmax_minus_onehot(self):
        rng = derive_rng(13, "ce")
        z0 = rng.normal(size=(2, 5))
        z = Tensor(z0, requires_grad=True)
        ad.softmax_cross_entropy(z, [1, 4]).backward()

        def loss_np(zz):
            shifted = zz - zz.max(axis=1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=1,
                                                        keepdims=True))
            return float(-(logp[0, 1] + logp[1, 4]) / 2)

        numeric = central_difference(loss_np, z0.copy(), step=1e-6)
        assert relative_error(z.grad, numeric) <= 1e-5

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ad.softmax_cross_entropy(Tensor(np.zeros(3)), 3)

    def test_backward_requires_scalar(self):
        t = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ValueError):
            ad.add(t, t).backward()


class TestBackwardAndAdam:
    def test_adam_converges_on_quadratic(self):
        target = 0.7
        w = Tensor(np.zeros(1), requires_grad=True)
        opt = Adam([w], lr=0.1)
        for _ in range(100):
            opt.zero_grad()
            diff = ad.add(w, Tensor(-target))
            ad.tsum(ad.mul(diff, diff)).backward()
            opt.step()
        assert abs(w.data[0] - target) < 1e-2

    def test_double_backward_doubles_gradient(self):
        w = Tensor(np.array([2.0]), requires_grad=True)
        loss = ad.tsum(ad.mul(w, w))
        loss.backward()
        first = w.grad.copy()
        loss.backward()
        np.testing.assert_allclose(w.grad, 2 * first)
        ad.zero_grad([w])
        assert np.all(w.grad == 0)

    def test_graph_replay_same_seed_identical_gradients(self):
        p0 = derive_rng(14, "replay").uniform(0.2, 0.8, size=(4, 4))
        grads = []
        for _ in range(2):
            p = Tensor(p0, requires_grad=True)
            draws = ad.bernoulli_ste(p, derive_rng(15, "replay"))
            ad.tsum(ad.mul(draws, Tensor(p0))).backward()
            grads.append(p.grad.copy())
        np.testing.assert_array_equal(grads[0], grads[1])

    def test_no_grad_suppresses_graph(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = ad.mul(w, w)
        assert out._parents == ()
        assert not out.requires_grad


class TestSurrogateSpecValidation:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            SurrogateSpec("relu", 1.0)

    def test_nonpositive_param_rejected(self):
        with pytest.raises(ValueError):
            SurrogateSpec("boxcar", 0.0)
