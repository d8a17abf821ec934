import dataclasses

import numpy as np
import pytest

from fogtype.errors import ShapeError, ValidationError
from fogtype.model import (
    TransBiLSTM,
    TransBiLSTMConfig,
    check_model_gradients,
    init_model,
    load_checkpoint,
    param_count,
    save_checkpoint,
)

TOY = TransBiLSTMConfig(
    input_dim=3,
    d_model=8,
    n_heads=1,
    d_head=8,
    n_encoder_layers=1,
    ffn_dense_units=8,
    dropout_rate=0.1,
    n_bilstm_layers=1,
    bilstm_out=8,
    n_classes=3,
    patch_len=2,
)

PAPER = TransBiLSTMConfig(input_dim=3)  # full-scale defaults


def hand_summed_toy_total():
    """Layer-by-layer manual sum for the toy configuration."""
    embed = 2 * 3 * 8 + 8  # (patch_len * input_dim) x d_model + bias
    attn = 3 * (8 * 8) + (8 * 8 + 8)  # q/k/v projections + output projection
    norm = 2 * 8
    ffn = (8 * 8 + 8) * 2
    encoder = attn + norm + ffn
    bilstm = 2 * (4 * 4 * (8 + 4 + 1))  # two directions, 4 gates, hidden 4
    head = 8 * 3 + 3
    return embed + encoder + bilstm + head


class TestInit:
    def test_same_seed_identical(self):
        a, b = init_model(TOY, seed=9), init_model(TOY, seed=9)
        for (name, pa), (_, pb) in zip(a.named_params(), b.named_params()):
            np.testing.assert_array_equal(pa, pb, err_msg=name)

    def test_different_seed_differs(self):
        a, b = init_model(TOY, seed=1), init_model(TOY, seed=2)
        assert any(
            not np.array_equal(pa, pb)
            for (_, pa), (_, pb) in zip(a.named_params(), b.named_params())
        )

    def test_bias_scheme(self):
        model = init_model(TOY, seed=0)
        for name, arr in model.named_params():
            if name.endswith(".b") and "lstm" in name:
                h = arr.size // 4
                np.testing.assert_array_equal(arr[h : 2 * h], 1.0)  # forget gate
                np.testing.assert_array_equal(arr[:h], 0.0)
                np.testing.assert_array_equal(arr[2 * h :], 0.0)
            elif name.endswith((".b", ".bo", ".shift")):
                np.testing.assert_array_equal(arr, 0.0, err_msg=name)

    def test_invalid_config(self):
        with pytest.raises(ValidationError):
            TransBiLSTMConfig(input_dim=3, bilstm_out=7)
        with pytest.raises(ValidationError):
            TransBiLSTMConfig(input_dim=0)
        with pytest.raises(ValidationError):
            TransBiLSTMConfig(input_dim=3, dropout_rate=1.0)


class TestParamCount:
    def test_toy_matches_hand_sum(self):
        assert param_count(TOY) == hand_summed_toy_total()

    def test_formula_matches_actual_parameters(self):
        for cfg in (TOY, dataclasses.replace(TOY, n_encoder_layers=3, n_bilstm_layers=2)):
            model = TransBiLSTM(cfg, seed=0)
            assert model.param_count() == param_count(cfg)

    def test_paper_scale_slope(self):
        d3 = param_count(dataclasses.replace(PAPER, input_dim=3))
        d11 = param_count(dataclasses.replace(PAPER, input_dim=11))
        assert d11 - d3 == 38_400
        for d in (3, 4, 7, 8, 9, 11):
            delta = param_count(dataclasses.replace(PAPER, input_dim=d + 1)) - param_count(
                dataclasses.replace(PAPER, input_dim=d)
            )
            assert delta == 15 * 320 == 4800

    def test_encoder_additivity(self):
        single = param_count(TOY)
        double = param_count(dataclasses.replace(TOY, n_encoder_layers=2))
        per_layer = double - single
        assert param_count(dataclasses.replace(TOY, n_encoder_layers=4)) == single + 3 * per_layer


class TestForward:
    def test_probabilities_in_open_interval(self):
        model = init_model(TOY, seed=0)
        out = model.forward(np.random.default_rng(0).normal(size=(11, 3)))
        assert out.shape == (11, 3)
        assert (out > 0.0).all() and (out < 1.0).all()

    def test_eval_deterministic(self):
        model = init_model(TOY, seed=0)
        x = np.random.default_rng(1).normal(size=(8, 3))
        np.testing.assert_array_equal(model.forward(x), model.forward(x))

    def test_patch_expansion_semantics(self):
        cfg = dataclasses.replace(TOY, patch_len=5)
        model = init_model(cfg, seed=0)
        out = model.forward(np.random.default_rng(2).normal(size=(10, 3)))
        for block in (out[0:5], out[5:10]):
            np.testing.assert_array_equal(block, np.tile(block[0], (5, 1)))
        assert not np.array_equal(out[0], out[5])

    def test_short_sequence_pads_and_warns(self):
        cfg = dataclasses.replace(TOY, patch_len=8)
        model = init_model(cfg, seed=0)
        with pytest.warns(UserWarning, match="zero-padding"):
            out = model.forward(np.ones((3, 3)))
        assert out.shape == (3, 3)

    def test_input_dim_mismatch(self):
        model = init_model(TOY, seed=0)
        with pytest.raises(ShapeError):
            model.forward(np.zeros((6, 5)))

    def test_no_cross_trial_leakage(self):
        model = init_model(TOY, seed=0)
        rng = np.random.default_rng(3)
        first, second = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
        a1 = model.forward(first)
        b1 = model.forward(second)
        b2 = model.forward(second)
        a2 = model.forward(first)
        np.testing.assert_array_equal(a1, a2)
        np.testing.assert_array_equal(b1, b2)

    def test_train_mode_dropout_is_seed_deterministic(self):
        model = init_model(TOY, seed=0)
        x = np.random.default_rng(4).normal(size=(8, 3))
        a = model.forward(x, train=True, rng=np.random.default_rng(7))
        b = model.forward(x, train=True, rng=np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)


class TestModelGradient:
    def test_full_toy_model_under_bce(self):
        cfg = dataclasses.replace(TOY, n_heads=2, d_head=4)
        model = init_model(cfg, seed=0)
        assert model.param_count() <= 5000
        rng = np.random.default_rng(1)
        features = rng.normal(size=(8, 3)) * 0.5
        targets = (rng.random((4, 3)) < 0.5).astype(np.float64)
        assert check_model_gradients(model, features, targets, eps=1e-4) < 1e-4


class TestCheckpoint:
    def test_roundtrip_identical(self, tmp_path):
        model = init_model(TOY, seed=5)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path, "C", ("AccV", "AccML", "AccAP"))
        loaded, header = load_checkpoint(path)
        for (name, pa), (_, pb) in zip(model.named_params(), loaded.named_params()):
            np.testing.assert_array_equal(pa, pb, err_msg=name)
        assert header["feature_set"] == "C"
        assert header["feature_columns"] == ["AccV", "AccML", "AccAP"]
        assert header["format_version"] == 1

    def test_rejects_non_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValidationError):
            load_checkpoint(path)

    def test_loaded_model_predicts_identically(self, tmp_path):
        model = init_model(TOY, seed=5)
        x = np.random.default_rng(0).normal(size=(10, 3))
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path, "A", ("AccV", "AccML", "AccAP"))
        loaded, _ = load_checkpoint(path)
        np.testing.assert_array_equal(model.forward(x), loaded.forward(x))
