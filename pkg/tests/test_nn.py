import numpy as np
import pytest

from fogtype.errors import ShapeError, ValidationError
from fogtype.nn import (
    BiLSTM,
    Dense,
    Dropout,
    LSTM,
    LayerNorm,
    MultiHeadSelfAttention,
    bce_with_logits,
    check_layer_gradients,
    fd_gradient,
    layer_gradcheck_suite,
    relative_error,
    sigmoid,
)

RNG = np.random.default_rng


class TestDense:
    def test_identity_weights(self):
        layer = Dense(3, 3, RNG(0))
        layer.params["w"][...] = np.eye(3)
        layer.params["b"][...] = 0.0
        x = RNG(1).normal(size=(4, 3))
        np.testing.assert_array_equal(layer.forward(x), x)

    def test_zero_weights_constant_bias(self):
        layer = Dense(2, 2, RNG(0))
        layer.params["w"][...] = 0.0
        layer.params["b"][...] = [3.0, -1.0]
        out = layer.forward(np.ones((5, 2)))
        np.testing.assert_array_equal(out, np.tile([3.0, -1.0], (5, 1)))

    def test_hand_product(self):
        layer = Dense(2, 2, RNG(0))
        layer.params["w"][...] = [[1.0, 0.0], [0.0, 2.0]]
        layer.params["b"][...] = [1.0, 1.0]
        np.testing.assert_array_equal(layer.forward(np.array([[1.0, 2.0]])), [[2.0, 5.0]])

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            Dense(3, 2, RNG(0)).forward(np.zeros((4, 5)))


class TestLayerNorm:
    def test_three_element_row(self):
        layer = LayerNorm(3, eps=1e-5)
        out = layer.forward(np.array([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(out[0], [-1.22474, 0.0, 1.22474], atol=1e-4)

    def test_constant_row_gives_shift(self):
        layer = LayerNorm(4)
        layer.params["shift"][...] = [1.0, 2.0, 3.0, 4.0]
        out = layer.forward(np.full((2, 4), 7.0))
        np.testing.assert_allclose(out, np.tile([1.0, 2.0, 3.0, 4.0], (2, 1)), atol=1e-12)

    def test_gain_linearity(self):
        x = RNG(0).normal(size=(3, 5))
        base = LayerNorm(5)
        doubled = LayerNorm(5)
        doubled.params["gain"][...] = 2.0
        np.testing.assert_allclose(doubled.forward(x), 2.0 * base.forward(x), atol=1e-12)


class TestDropout:
    def test_eval_identity_bit_for_bit(self):
        x = RNG(0).normal(size=(6, 7))
        out = Dropout(0.4).forward(x, train=False)
        assert out is x

    def test_rate_zero_train_identity(self):
        x = RNG(0).normal(size=(6, 7))
        out = Dropout(0.0).forward(x, train=True, rng=RNG(1))
        assert out is x

    def test_mean_preserved(self):
        x = np.ones((200, 50))
        out = Dropout(0.5).forward(x, train=True, rng=RNG(3))
        assert abs(out.mean() - 1.0) < 0.05

    def test_invalid_rate(self):
        with pytest.raises(ValidationError):
            Dropout(1.0)

    def test_backward_uses_same_mask(self):
        layer = Dropout(0.5)
        x = RNG(0).normal(size=(10, 4))
        out = layer.forward(x, train=True, rng=RNG(5))
        dy = np.ones_like(x)
        dx = layer.backward(dy)
        # gradient is the same rescaled mask the forward applied
        np.testing.assert_array_equal(dx != 0.0, out != 0.0)
        np.testing.assert_allclose(dx[dx != 0.0], 2.0)


class TestAttention:
    def test_single_position(self):
        layer = MultiHeadSelfAttention(3, 2, 2, RNG(0))
        x = RNG(1).normal(size=(1, 3))
        out = layer.forward(x)
        v = x @ layer.params["wv"]
        expected = v @ layer.params["wo"] + layer.params["bo"]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_identical_positions_uniform_attention(self):
        layer = MultiHeadSelfAttention(4, 2, 3, RNG(0))
        x = np.tile(RNG(1).normal(size=(1, 4)), (5, 1))
        out = layer.forward(x)
        np.testing.assert_allclose(layer.last_attention, 1.0 / 5.0, atol=1e-12)
        np.testing.assert_allclose(out, np.tile(out[0], (5, 1)), atol=1e-12)

    def test_two_position_single_head_hand_oracle(self):
        layer = MultiHeadSelfAttention(2, 1, 2, RNG(0))
        wq = np.array([[1.0, 0.0], [0.0, 1.0]])
        wk = np.array([[0.5, 0.0], [0.0, 0.5]])
        wv = np.array([[1.0, 1.0], [0.0, 1.0]])
        wo = np.array([[1.0, 0.0], [1.0, 1.0]])
        bo = np.array([0.1, -0.2])
        for name, val in (("wq", wq), ("wk", wk), ("wv", wv), ("wo", wo), ("bo", bo)):
            layer.params[name][...] = val
        x = np.array([[1.0, 0.0], [0.0, 2.0]])

        q, k, v = x @ wq, x @ wk, x @ wv
        scores = q @ k.T / np.sqrt(2.0)
        ex = np.exp(scores - scores.max(axis=1, keepdims=True))
        attn = ex / ex.sum(axis=1, keepdims=True)
        expected = (attn @ v) @ wo + bo

        np.testing.assert_allclose(layer.forward(x), expected, atol=1e-12)

    def test_attention_rows_sum_to_one(self):
        layer = MultiHeadSelfAttention(6, 3, 4, RNG(2))
        layer.forward(RNG(3).normal(size=(9, 6)))
        np.testing.assert_allclose(layer.last_attention.sum(axis=-1), 1.0, atol=1e-9)

    def test_bidirectional_no_causal_mask(self):
        layer = MultiHeadSelfAttention(3, 1, 3, RNG(4))
        x = RNG(5).normal(size=(4, 3))
        base = layer.forward(x)[0].copy()
        x2 = x.copy()
        x2[3] += 1.0
        changed = layer.forward(x2)[0]
        assert not np.allclose(base, changed)


class TestLstm:
    def test_all_zero_parameters_give_zero_states(self):
        layer = LSTM(3, 4, RNG(0), forget_bias=0.0)
        for p in layer.params.values():
            p[...] = 0.0
        out = layer.forward(RNG(1).normal(size=(6, 3)))
        np.testing.assert_array_equal(out, np.zeros((6, 4)))

    def test_bilstm_output_width(self):
        layer = BiLSTM(5, 4, RNG(0))
        assert layer.forward(RNG(1).normal(size=(7, 5))).shape == (7, 8)

    def test_hand_unrolled_recurrence(self):
        layer = LSTM(1, 1, RNG(0))
        w = np.array([[0.5, -0.3, 0.8, 0.2]])
        u = np.array([[0.1, 0.4, -0.2, 0.3]])
        b = np.array([0.05, 1.0, -0.1, 0.0])
        layer.params["w"][...] = w
        layer.params["u"][...] = u
        layer.params["b"][...] = b
        x = np.array([[0.7], [-1.2]])

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        h_prev = c_prev = 0.0
        expected = []
        for t in range(2):
            z = x[t, 0] * w[0] + h_prev * u[0] + b
            i, f, g, o = sig(z[0]), sig(z[1]), np.tanh(z[2]), sig(z[3])
            c = f * c_prev + i * g
            h = o * np.tanh(c)
            expected.append(h)
            h_prev, c_prev = h, c

        np.testing.assert_allclose(layer.forward(x)[:, 0], expected, atol=1e-12)

    def test_bilstm_time_reversal_symmetry(self):
        # reversing the input and swapping the direction blocks reverses the
        # output rows, with the forward/backward halves swapped
        rng = RNG(0)
        layer = BiLSTM(3, 2, rng, forget_bias=1.0)
        swapped = BiLSTM(3, 2, RNG(1), forget_bias=1.0)
        swapped.sublayers["fw"].load_state(layer.sublayers["bw"].state_dict())
        swapped.sublayers["bw"].load_state(layer.sublayers["fw"].state_dict())
        x = RNG(2).normal(size=(6, 3))
        base = layer.forward(x)
        rev = swapped.forward(x[::-1])
        np.testing.assert_allclose(rev[:, :2], base[::-1, 2:], atol=1e-12)
        np.testing.assert_allclose(rev[:, 2:], base[::-1, :2], atol=1e-12)

    def test_forward_finite_on_bounded_inputs(self):
        layer = BiLSTM(4, 3, RNG(0), forget_bias=1.0)
        x = RNG(1).uniform(-100.0, 100.0, size=(20, 4))
        assert np.isfinite(layer.forward(x)).all()


class TestBceWithLogits:
    def test_matches_naive_formula(self):
        rng = RNG(0)
        logits = rng.normal(size=(6, 3))
        targets = (rng.random((6, 3)) < 0.5).astype(float)
        loss, _ = bce_with_logits(logits, targets)
        p = sigmoid(logits)
        naive = -(targets * np.log(p) + (1 - targets) * np.log(1 - p)).mean()
        assert loss == pytest.approx(naive, rel=1e-12)

    def test_mask_excludes_rows(self):
        logits = np.array([[0.0, 0.0], [5.0, -5.0]])
        targets = np.array([[1.0, 0.0], [0.0, 1.0]])
        mask = np.array([True, False])
        loss, dlogits = bce_with_logits(logits, targets, mask)
        assert loss == pytest.approx(np.log(2.0))
        np.testing.assert_array_equal(dlogits[1], [0.0, 0.0])

    def test_all_masked_rejected(self):
        with pytest.raises(ValidationError):
            bce_with_logits(np.zeros((2, 2)), np.zeros((2, 2)), np.array([False, False]))


class TestGradientOracle:
    def test_fd_on_square_function(self):
        x = np.array([3.0])
        grad = fd_gradient(lambda: float(x[0] ** 2), x, eps=1e-5)
        assert relative_error(np.array([6.0]), grad) < 1e-9

    def test_dense_random_input(self):
        for seed in range(3):
            rng = RNG(seed)
            err = check_layer_gradients(Dense(4, 3, rng), rng.normal(size=(3, 4)), eps=1e-5)
            assert err < 1e-6

    def test_all_layers_pass_over_ten_seeds(self):
        worst = layer_gradcheck_suite(n_seeds=10)
        assert set(worst) == {"dense", "layer_norm", "attention", "lstm", "bilstm", "bce_head"}
        for name, err in worst.items():
            assert err < 1e-5, f"{name}: {err:.3e}"

    def test_corrupted_gradient_detected(self):
        class BrokenDense(Dense):
            def backward(self, dy):
                dx = super().backward(dy)
                self.grads["w"] *= 1.01
                return dx

        rng = RNG(0)
        err = check_layer_gradients(BrokenDense(4, 3, rng), rng.normal(size=(3, 4)))
        assert err > 1e-3
