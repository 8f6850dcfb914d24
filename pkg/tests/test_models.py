"""
Unit tests for model presets, the Model class and checkpoints.

Forward passes use narrow presets (6 filters, kernel 5) to keep them fast.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.helpers import ConfigurationError, ShapeError
from src.models import (
    VARIANTS,
    LayerSpec,
    Model,
    ModelSpec,
    build_model,
    load_model,
    model_spec,
    predict,
    predict_encoded,
    save_model,
)
from src.modeling import ModelTrainer, TrainConfig
from src.tensor import AdamState, Tensor, adam_step, backward, cross_entropy, numerical_gradient, relative_error


def small_model(architecture: str = "cnn1d", task: str = "mitbih", seed: int = 0, **kwargs) -> Model:
    return build_model(model_spec(architecture, task, filters=6, kernel=5, **kwargs), seed)


@pytest.fixture
def beats():
    return np.random.default_rng(0).normal(size=(4, 1, 257)).astype(np.float32)


@pytest.fixture
def two_class_beats():
    """Twenty noisy beats: slow sine for class 0, fast sine for class 1."""
    rng = np.random.default_rng(5)
    t = np.arange(257) / 360.0
    labels = np.array([0, 1] * 10)
    samples = np.stack([
        np.sin(2 * np.pi * (3.0 if label == 0 else 20.0) * t) + 0.1 * rng.normal(size=257)
        for label in labels
    ])[:, np.newaxis, :].astype(np.float32)
    return samples, labels


def last_dense_names(model: Model):
    weights = sorted(name for name in model.params if name.endswith("_dense.weights"))[-1]
    return weights, weights.replace(".weights", ".bias")


class TestPresets:
    """Test suite for architecture presets."""

    @pytest.mark.parametrize("architecture", ["cnn1d", "fft1d", "fan", "cfan"])
    @pytest.mark.parametrize("task,n_classes", [("mitbih", 5), ("ecgid", 90), ("apnea", 2)])
    def test_every_pairing_validates(self, architecture, task, n_classes):
        spec = model_spec(architecture, task)
        assert spec.n_classes == n_classes
        assert spec.layers[-2].units == n_classes
        assert spec.layers[-1].activation == "softmax"

    def test_input_layouts(self):
        assert model_spec("cnn1d", "mitbih").input_shape == (1, 257)
        assert model_spec("fft1d", "mitbih").input_shape == (2, 129)
        assert model_spec("fft1d", "ecgid", fft_layout="mag_phase").input_layout == "fft_mag_phase"
        assert model_spec("fft1d", "apnea").input_shape == (2, 3001)

    def test_default_widths(self):
        beat = model_spec("cnn1d", "mitbih").layers[0]
        minute = model_spec("cnn1d", "apnea").layers[0]
        assert (beat.filters, beat.kernel) == (96, 64)
        assert (minute.filters, minute.kernel) == (12, 64)

    def test_fan_heads_and_convs(self):
        kinds = [layer.kind for layer in model_spec("cfan", "mitbih").layers]
        assert kinds[0] == "fan_conv"
        assert kinds.count("fan_dense") == 2
        assert model_spec("cfan", "mitbih").layers[1].inner == "fan_conv"

        fan_kinds = [layer.kind for layer in model_spec("fan", "mitbih").layers]
        assert "fan_conv" not in fan_kinds
        assert fan_kinds.count("fan_dense") == 2

    def test_apnea_stack_has_attention_stages(self):
        kinds = [layer.kind for layer in model_spec("cnn1d", "apnea").layers]
        assert kinds.count("skip_attention") == 2
        assert kinds.count("avg_pool") == 2

    def test_variants(self):
        v0 = model_spec("cnn1d", "mitbih", variant="v0").layers
        assert v0[0].padding == "causal"
        assert (v0[0].filters, v0[0].kernel) == (6, 25)
        assert any(layer.kind == "skip" for layer in model_spec("cnn1d", "mitbih", variant="v3").layers)
        assert not any(layer.kind == "skip" for layer in model_spec("cnn1d", "mitbih", variant="v2").layers)

        stacks = {v: model_spec("cnn1d", "mitbih", variant=v).layers for v in ("v4", "v5", "v6", "v7")}
        assert [l.kind for l in stacks["v4"]] == [l.kind for l in stacks["v7"]]
        assert stacks["v5"][0].activation == "swish"
        assert stacks["v6"][0].activation == "gelu"
        assert stacks["v7"][0].activation == "relu"

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_variants_build(self, variant):
        spec = model_spec("cnn1d", "mitbih", variant=variant, filters=6, kernel=5)
        assert Model(spec, seed=0).parameter_count() > 0

    def test_variant_only_for_cnn1d(self):
        with pytest.raises(ConfigurationError):
            model_spec("fan", "mitbih", variant="v1")
        with pytest.raises(ConfigurationError):
            model_spec("cnn1d", "mitbih", variant="v9")

    def test_unknown_pairing(self):
        with pytest.raises(ConfigurationError):
            model_spec("lstm", "mitbih")
        with pytest.raises(ConfigurationError):
            model_spec("cnn1d", "eeg")


class TestSpecValidation:
    """Test suite for ModelSpec.validate and shape tracing."""

    def _spec(self, layers):
        return ModelSpec("cnn1d", "mitbih", 5, 257, layers=layers)

    def test_requires_softmax_head(self):
        with pytest.raises(ConfigurationError):
            self._spec([LayerSpec("gap"), LayerSpec("dense", units=5)]).validate()
        with pytest.raises(ConfigurationError):
            self._spec([LayerSpec("gap"), LayerSpec("dense", units=4),
                        LayerSpec("activation", activation="softmax")]).validate()

    def test_unknown_kind_and_activation(self):
        head = [LayerSpec("dense", units=5), LayerSpec("activation", activation="softmax")]
        with pytest.raises(ConfigurationError):
            self._spec([LayerSpec("lstm")] + head).validate()
        with pytest.raises(ConfigurationError):
            self._spec([LayerSpec("conv", filters=3, kernel=3, activation="tanh"), LayerSpec("gap")] + head).validate()

    def test_residual_width_mismatch(self):
        layers = [
            LayerSpec("conv", filters=6, kernel=3, activation="relu"),
            LayerSpec("skip", filters=8, kernel=3, activation="relu"),
            LayerSpec("gap"),
            LayerSpec("dense", units=5),
            LayerSpec("activation", activation="softmax"),
        ]
        with pytest.raises(ConfigurationError):
            Model(self._spec(layers), seed=0)

    def test_dense_before_pooling(self):
        layers = [LayerSpec("dense", units=5), LayerSpec("activation", activation="softmax")]
        with pytest.raises(ConfigurationError):
            Model(self._spec(layers), seed=0)

    def test_fan_width_not_divisible(self):
        layers = [LayerSpec("conv", filters=6, kernel=3), LayerSpec("gap"), LayerSpec("fan_dense", units=100),
                  LayerSpec("dense", units=5), LayerSpec("activation", activation="softmax")]
        with pytest.raises(ConfigurationError):
            Model(self._spec(layers), seed=0)

    def test_dict_round_trip(self):
        spec = model_spec("cfan", "apnea")
        assert ModelSpec.from_dict(spec.to_dict()) == spec


class TestModel:
    """Test suite for forward passes and parameters."""

    @pytest.mark.parametrize("architecture", ["cnn1d", "fft1d", "fan", "cfan"])
    def test_forward_probabilities(self, architecture, beats):
        model = small_model(architecture)
        probs = predict(model, beats)

        assert probs.shape == (4, 5)
        assert probs.dtype == np.float64
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-5)

    def test_apnea_forward(self):
        model = small_model("cfan", "apnea")
        minutes = np.random.default_rng(1).normal(size=(2, 1, 6000))
        assert predict(model, minutes).shape == (2, 2)

    def test_parameter_names(self):
        model = small_model("cnn1d")
        assert "l00_conv.kernels" in model.params
        assert "l01_skip.inner.kernels" in model.params
        assert model.params["l00_conv.kernels"].shape == (6, 1, 5)

        cfan = small_model("cfan")
        assert cfan.params["l00_fan_conv.k_cos"].shape == (2, 1, 5)
        assert "l01_skip.inner.k_sigma" in cfan.params

        apnea = small_model("cnn1d", "apnea")
        assert apnea.params["l01_skip_attention.attention.w_squeeze"].shape == (12, 6)

    def test_seeded_initialization(self):
        first, second, other = small_model(seed=3), small_model(seed=3), small_model(seed=4)
        for name in first.params:
            np.testing.assert_array_equal(first.params[name].data, second.params[name].data)
        assert not np.array_equal(first.params["l00_conv.kernels"].data, other.params["l00_conv.kernels"].data)

    def test_wrong_input_shape(self):
        model = small_model()
        with pytest.raises(ShapeError):
            model(Tensor(np.zeros((2, 1, 250))))
        with pytest.raises(ShapeError):
            predict(model, np.zeros((2, 1, 250)))

    def test_batch_size_does_not_change_predictions(self, beats):
        model = small_model("fan")
        np.testing.assert_allclose(predict(model, beats, batch_size=1), predict(model, beats), atol=1e-12)

    def test_empty_batch(self):
        assert predict(small_model(), np.zeros((0, 1, 257))).shape == (0, 5)

    def test_build_model_fills_preset(self):
        spec = ModelSpec("fan", "mitbih", 5, 257)
        model = build_model(spec, seed=0)
        assert model.spec.layers == model_spec("fan", "mitbih").layers

    def test_gradients_through_network(self, beats):
        model = small_model("cfan")
        inputs = Tensor(model.encode(beats))
        labels = np.array([0, 1, 4, 2])

        def loss():
            return cross_entropy(model(inputs), labels)

        backward(loss())
        for name in ("l00_fan_conv.b_sigma", "l06_dense.bias"):
            param = model.params[name]
            numeric = numerical_gradient(lambda: float(loss().data), param.data)
            assert relative_error(param.grad, numeric) < 1e-5, name

    @pytest.mark.parametrize("architecture", ["cnn1d", "fft1d", "fan", "cfan"])
    def test_zero_head_gives_uniform_rows(self, architecture, beats):
        model = small_model(architecture)
        weights, bias = last_dense_names(model)
        model.params[weights].data[...] = 0.0
        model.params[bias].data[...] = 0.0

        np.testing.assert_allclose(predict(model, beats), np.full((4, 5), 0.2), atol=1e-12)

    def test_fft_channel_order_matters(self, two_class_beats):
        samples, labels = two_class_beats
        model = small_model("fft1d", seed=2)
        config = TrainConfig(batch_size=10, max_epochs=3, patience=3, dtype="float64")
        ModelTrainer(config).train(model, samples, labels, samples[:0], labels[:0])

        inputs = model.encode(samples)
        swapped = inputs[:, ::-1, :].copy()

        assert not np.allclose(predict_encoded(model, inputs), predict_encoded(model, swapped), atol=1e-6)

    @pytest.mark.parametrize("architecture", ["cnn1d", "fft1d", "fan", "cfan"])
    def test_single_small_step_lowers_loss(self, architecture, two_class_beats):
        samples, labels = two_class_beats
        improved = 0
        for seed in range(10):
            model = small_model(architecture, seed=seed)
            inputs = Tensor(model.encode(samples))

            before = cross_entropy(model(inputs), labels)
            backward(before)
            adam_step(AdamState(learning_rate=1e-4), model.parameters())
            after = cross_entropy(model(inputs), labels)

            improved += float(after.data) < float(before.data)

        assert improved >= 9


class TestCheckpoints:
    """Test suite for saving and restoring models."""

    def test_round_trip(self, tmp_path, beats):
        model = small_model("cfan", seed=9)
        path = tmp_path / "cfan.ckpt"
        save_model(model, path)

        restored = load_model(path)

        assert restored.seed == 9
        assert restored.spec == model.spec
        np.testing.assert_array_equal(predict(restored, beats), predict(model, beats))

    def test_round_trip_keeps_training_dtype(self, tmp_path, two_class_beats):
        samples, labels = two_class_beats
        model = small_model("cnn1d", seed=4)
        config = TrainConfig(batch_size=10, max_epochs=2, patience=2, dtype="float32")
        ModelTrainer(config).train(model, samples, labels, samples[:0], labels[:0])
        path = tmp_path / "cnn1d.ckpt"
        save_model(model, path)

        restored = load_model(path)

        assert restored.dtype == np.float32
        np.testing.assert_allclose(predict(restored, samples), predict(model, samples), rtol=0, atol=1e-12)

    def test_state_dict_mismatch(self):
        model = small_model()
        state = model.state_dict()
        state.pop("l00_conv.bias")
        with pytest.raises(ShapeError):
            model.load_state_dict(state)

        state = model.state_dict()
        state["l00_conv.bias"] = np.zeros(7)
        with pytest.raises(ShapeError):
            model.load_state_dict(state)

    def test_missing_sidecar(self, tmp_path):
        from src.helpers import save_checkpoint

        path = tmp_path / "bare.ckpt"
        save_checkpoint(small_model().state_dict(), path)
        with pytest.raises(ValueError):
            load_model(path)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
