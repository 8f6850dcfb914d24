"""
Model definitions for the ECG study.

Architectures are described declaratively (ModelSpec = input layout + list of
LayerSpec) and instantiated by build_model into a Model holding named
parameters. Presets cover CNN1D, FFT1D, FAN and CFAN for each task, and the
CNN1D ablation variants v0-v7.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from src.config import ARCHITECTURES, TASK_NAMES, task_settings
from src.fanlayers import (
    AttentionParams,
    ConvParams,
    FanConvBlockParams,
    FanFcBlockParams,
    attention_block,
    fan_conv_block,
    fan_conv_split,
    fan_fc_block,
    fan_split,
    skip_attention_block,
    skip_block,
)
from src.features import InputEncoder, encoded_shape
from src.helpers import ConfigurationError, ShapeError, load_checkpoint, save_checkpoint
from src.logger import get_logger
from src.tensor import (
    ACTIVATIONS,
    Parameter,
    ParameterSpec,
    Tensor,
    activation,
    avg_pool1d,
    conv1d,
    dense,
    global_avg_pool1d,
    init_parameters,
    no_grad,
)

logger = get_logger(__name__)

LAYER_KINDS = (
    "conv", "fan_conv", "skip", "skip_attention", "attention",
    "activation", "avg_pool", "gap", "dense", "fan_dense",
)

VARIANTS = ("v0", "v1", "v2", "v3", "v4", "v5", "v6", "v7")

VARIANT_ACTIVATIONS = {"v0": "sigmoid", "v1": "sigmoid", "v2": "sigmoid", "v3": "sigmoid",
                       "v4": "sigmoid", "v5": "swish", "v6": "gelu", "v7": "relu"}


# ============================================================================
# SPECIFICATIONS
# ============================================================================

@dataclass
class LayerSpec:
    """
    One layer of a network.

    ``filters``/``kernel`` apply to convolutional kinds, ``units`` to dense
    kinds, ``inner`` selects the residual branch of skip blocks ("conv" or
    "fan_conv") and ``attention_units`` the hidden width of the gate.
    """

    kind: str
    filters: int = 0
    kernel: int = 0
    units: int = 0
    activation: Optional[str] = None
    padding: str = "same"
    pool: int = 4
    stride: int = 4
    inner: str = "conv"
    attention_units: int = 0

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class ModelSpec:
    architecture: str
    task: str
    n_classes: int
    segment_length: int
    input_layout: str = "time"
    layers: List[LayerSpec] = field(default_factory=list)
    variant: Optional[str] = None

    @property
    def input_shape(self):
        return encoded_shape(self.input_layout, self.segment_length)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["layers"] = [layer.to_dict() for layer in self.layers]
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "ModelSpec":
        data = dict(data)
        data["layers"] = [LayerSpec(**layer) for layer in data.get("layers", [])]
        return cls(**data)

    def validate(self) -> None:
        """
        Raises:
            ConfigurationError: Unknown kinds/activations, or a network that
                does not end in dense(n_classes) + softmax
        """
        if self.n_classes < 2:
            raise ConfigurationError(f"n_classes must be at least 2 (got {self.n_classes})")
        for layer in self.layers:
            if layer.kind not in LAYER_KINDS:
                raise ConfigurationError(f"Unknown layer kind '{layer.kind}'")
            if layer.activation is not None and layer.activation not in ACTIVATIONS:
                raise ConfigurationError(f"Unknown activation '{layer.activation}'")

        if len(self.layers) < 2:
            raise ConfigurationError("a network needs at least an output layer and softmax")
        head, last = self.layers[-2], self.layers[-1]
        if head.kind != "dense" or head.units != self.n_classes or head.activation is not None:
            raise ConfigurationError(f"the output layer must be a plain dense layer of {self.n_classes} units")
        if last.kind != "activation" or last.activation != "softmax":
            raise ConfigurationError("the network must end with a softmax activation")


# ============================================================================
# PRESETS
# ============================================================================

def _classifier_head(architecture: str, n_classes: int, hidden_activation: str) -> List[LayerSpec]:
    if architecture in ("fan", "cfan"):
        hidden = [LayerSpec("fan_dense", units=120), LayerSpec("fan_dense", units=84)]
    else:
        hidden = [LayerSpec("dense", units=120, activation=hidden_activation),
                  LayerSpec("dense", units=84, activation=hidden_activation)]
    return hidden + [LayerSpec("dense", units=n_classes), LayerSpec("activation", activation="softmax")]


def _conv(architecture: str, filters: int, kernel: int, act: Optional[str]) -> LayerSpec:
    if architecture == "cfan":
        return LayerSpec("fan_conv", filters=filters, kernel=kernel)
    return LayerSpec("conv", filters=filters, kernel=kernel, activation=act)


def _beat_stack(architecture: str, filters: int, kernel: int, act: str) -> List[LayerSpec]:
    inner = "fan_conv" if architecture == "cfan" else "conv"
    return [
        _conv(architecture, filters, kernel, act),
        LayerSpec("skip", filters=filters, kernel=kernel, activation=act, inner=inner),
        _conv(architecture, filters, kernel, act),
        LayerSpec("gap"),
    ]


def _apnea_stack(architecture: str, filters: int, kernel: int, act: str, attention_units: int) -> List[LayerSpec]:
    inner = "fan_conv" if architecture == "cfan" else "conv"
    stage = [
        _conv(architecture, filters, kernel, None),
        LayerSpec("skip_attention", filters=filters, kernel=kernel, activation=act,
                  inner=inner, attention_units=attention_units),
        LayerSpec("activation", activation=act),
        LayerSpec("avg_pool", pool=4, stride=4),
    ]
    return stage + [LayerSpec(**layer.to_dict()) for layer in stage] + [LayerSpec("gap")]


def _variant_layers(variant: str, task: str, n_classes: int, filters: int, kernel: int) -> List[LayerSpec]:
    act = VARIANT_ACTIVATIONS[variant]

    if variant == "v0":
        conv = LayerSpec("conv", filters=6, kernel=25, activation=act, padding="causal")
        body = [conv, LayerSpec("avg_pool"), LayerSpec(**conv.to_dict()), LayerSpec("avg_pool")]
    elif variant in ("v1", "v2", "v3"):
        conv = LayerSpec("conv", filters=filters, kernel=kernel, activation=act)
        stage = [conv]
        if variant == "v2":
            stage.append(LayerSpec(**conv.to_dict()))
        if variant == "v3":
            stage.append(LayerSpec("skip", filters=filters, kernel=kernel, activation=act))
        stage.append(LayerSpec("avg_pool"))
        body = stage + [LayerSpec(**layer.to_dict()) for layer in stage]
    elif task == "apnea":
        return _apnea_stack("cnn1d", filters, kernel, act, 12) + _classifier_head("cnn1d", n_classes, act)
    else:
        return _beat_stack("cnn1d", filters, kernel, act) + _classifier_head("cnn1d", n_classes, act)

    return body + [LayerSpec("gap")] + _classifier_head("cnn1d", n_classes, act)


def model_spec(
    architecture: str,
    task: str,
    variant: Optional[str] = None,
    fft_layout: str = "real_imag",
    filters: Optional[int] = None,
    kernel: Optional[int] = None,
) -> ModelSpec:
    """
    Preset architecture for a task.

    Args:
        architecture: cnn1d | fft1d | fan | cfan
        task: mitbih | ecgid | apnea
        variant: Optional CNN1D ablation variant v0-v7
        fft_layout: FFT1D input encoding, "real_imag" or "mag_phase"
        filters: Override the convolution width (defaults 96 / 12 for apnea)
        kernel: Override the kernel size (default 64)

    Returns:
        ModelSpec

    Raises:
        ConfigurationError: Unknown architecture/task pairing or variant
    """
    if architecture not in ARCHITECTURES or task not in TASK_NAMES:
        raise ConfigurationError(f"Unknown architecture/task pairing ({architecture}, {task})")

    settings = task_settings(task)
    n_classes = settings["n_classes"]
    filters = filters or (12 if task == "apnea" else 96)
    kernel = kernel or 64

    if variant is not None:
        if architecture != "cnn1d" or variant not in VARIANTS:
            raise ConfigurationError(f"Variant '{variant}' is defined for cnn1d only ({', '.join(VARIANTS)})")
        layers = _variant_layers(variant, task, n_classes, filters, kernel)
    elif task == "apnea":
        layers = _apnea_stack(architecture, filters, kernel, "relu", 12) + _classifier_head(architecture, n_classes, "relu")
    else:
        layers = _beat_stack(architecture, filters, kernel, "relu") + _classifier_head(architecture, n_classes, "relu")

    if architecture == "fft1d":
        if fft_layout not in ("real_imag", "mag_phase"):
            raise ConfigurationError(f"Unknown FFT layout '{fft_layout}'")
        layout = f"fft_{fft_layout}"
    else:
        layout = "time"

    spec = ModelSpec(
        architecture=architecture,
        task=task,
        n_classes=n_classes,
        segment_length=settings["segment_length"],
        input_layout=layout,
        layers=layers,
        variant=variant,
    )
    spec.validate()
    return spec


# ============================================================================
# MODEL
# ============================================================================

class Model:
    """
    A network instance: the spec plus its named parameters.

    Attributes:
        spec: Architecture description
        seed: Initialization seed
        params: Parameter name -> Parameter, in declaration order
    """

    def __init__(self, spec: ModelSpec, seed: int):
        spec.validate()
        self.spec = spec
        self.seed = seed
        self.encoder = InputEncoder(spec.input_layout, spec.segment_length)
        self._declarations: List[ParameterSpec] = []
        self._prefixes: List[str] = []
        self._trace_shapes()
        self.params: Dict[str, Parameter] = init_parameters(self._declarations, seed)

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    def _declare(self, name: str, shape, fan_in: int = 1, kind: str = "weight") -> None:
        self._declarations.append(ParameterSpec(name=name, shape=tuple(shape), fan_in=fan_in, kind=kind))

    def _declare_conv(self, prefix: str, filters: int, channels: int, kernel: int) -> None:
        self._declare(f"{prefix}.kernels", (filters, channels, kernel), channels * kernel)
        self._declare(f"{prefix}.bias", (filters,), kind="bias")

    def _declare_fan_conv(self, prefix: str, filters: int, channels: int, kernel: int) -> None:
        per_branch = fan_conv_split(filters)
        for branch in ("cos", "sin", "sigma"):
            self._declare(f"{prefix}.k_{branch}", (per_branch, channels, kernel), channels * kernel)
        self._declare(f"{prefix}.b_sigma", (per_branch,), kind="bias")

    def _declare_attention(self, prefix: str, channels: int, units: int) -> None:
        if units <= 0:
            raise ConfigurationError(f"{prefix}: attention needs a positive hidden width")
        self._declare(f"{prefix}.w_squeeze", (units, channels), channels)
        self._declare(f"{prefix}.b_squeeze", (units,), kind="bias")
        self._declare(f"{prefix}.w_gate", (channels, units), units)
        self._declare(f"{prefix}.b_gate", (channels,), kind="bias")

    def _trace_shapes(self) -> None:
        channels, length = self.spec.input_shape
        width = None

        for index, layer in enumerate(self.spec.layers):
            prefix = f"l{index:02d}_{layer.kind}"
            self._prefixes.append(prefix)
            kind = layer.kind

            if kind in ("conv", "fan_conv", "skip", "skip_attention", "attention", "avg_pool", "gap") and width is not None:
                raise ConfigurationError(f"{prefix}: sequence layer after global pooling")
            if kind in ("dense", "fan_dense") and width is None:
                raise ConfigurationError(f"{prefix}: dense layer before global pooling")

            if kind == "conv":
                self._declare_conv(prefix, layer.filters, channels, layer.kernel)
                channels = layer.filters
            elif kind == "fan_conv":
                self._declare_fan_conv(prefix, layer.filters, channels, layer.kernel)
                channels = layer.filters
            elif kind in ("skip", "skip_attention"):
                if layer.filters != channels:
                    raise ConfigurationError(
                        f"{prefix}: residual branch has {layer.filters} filters for {channels} channels"
                    )
                if layer.inner == "fan_conv":
                    self._declare_fan_conv(f"{prefix}.inner", channels, channels, layer.kernel)
                elif layer.inner == "conv":
                    self._declare_conv(f"{prefix}.inner", channels, channels, layer.kernel)
                else:
                    raise ConfigurationError(f"{prefix}: unknown residual branch '{layer.inner}'")
                if kind == "skip_attention":
                    self._declare_attention(f"{prefix}.attention", channels, layer.attention_units)
            elif kind == "attention":
                self._declare_attention(prefix, channels, layer.attention_units)
            elif kind == "avg_pool":
                if length < layer.pool:
                    raise ConfigurationError(f"{prefix}: length {length} is shorter than the pool")
                length = (length - layer.pool) // layer.stride + 1
            elif kind == "gap":
                width = channels
            elif kind == "dense":
                self._declare(f"{prefix}.weights", (layer.units, width), width)
                self._declare(f"{prefix}.bias", (layer.units,), kind="bias")
                width = layer.units
            elif kind == "fan_dense":
                d_pbar, d_p = fan_split(layer.units)
                self._declare(f"{prefix}.w_p", (d_p, width), width)
                self._declare(f"{prefix}.w_pbar", (d_pbar, width), width)
                self._declare(f"{prefix}.b_pbar", (d_pbar,), kind="bias")
                width = layer.units

    # ------------------------------------------------------------------
    # parameter bundles
    # ------------------------------------------------------------------

    def _conv_params(self, prefix: str, act: Optional[str]) -> ConvParams:
        return ConvParams(self.params[f"{prefix}.kernels"], self.params[f"{prefix}.bias"], act or "relu")

    def _fan_conv_params(self, prefix: str) -> FanConvBlockParams:
        p = self.params
        return FanConvBlockParams(p[f"{prefix}.k_cos"], p[f"{prefix}.k_sin"], p[f"{prefix}.k_sigma"], p[f"{prefix}.b_sigma"])

    def _attention_params(self, prefix: str) -> AttentionParams:
        p = self.params
        return AttentionParams(p[f"{prefix}.w_squeeze"], p[f"{prefix}.b_squeeze"], p[f"{prefix}.w_gate"], p[f"{prefix}.b_gate"])

    def _inner_params(self, prefix: str, layer: LayerSpec):
        if layer.inner == "fan_conv":
            return self._fan_conv_params(f"{prefix}.inner")
        return self._conv_params(f"{prefix}.inner", layer.activation)

    # ------------------------------------------------------------------
    # forward
    # ------------------------------------------------------------------

    def forward(self, x: Tensor) -> Tensor:
        """
        Args:
            x: Encoded input (n, channels, length) or (channels, length)

        Returns:
            Tensor: Class probabilities (n, n_classes) or (n_classes,)
        """
        expected = self.spec.input_shape
        if tuple(x.shape[-2:]) != expected:
            raise ShapeError(f"model expects input of shape (..., {expected[0]}, {expected[1]}), got {x.shape}")

        p = self.params
        for prefix, layer in zip(self._prefixes, self.spec.layers):
            kind = layer.kind
            if kind == "conv":
                x = conv1d(x, p[f"{prefix}.kernels"], p[f"{prefix}.bias"], padding=layer.padding)
                if layer.activation:
                    x = activation(layer.activation, x)
            elif kind == "fan_conv":
                x = fan_conv_block(x, self._fan_conv_params(prefix))
            elif kind == "skip":
                x = skip_block(x, self._inner_params(prefix, layer))
            elif kind == "skip_attention":
                x = skip_attention_block(x, self._inner_params(prefix, layer), self._attention_params(f"{prefix}.attention"))
            elif kind == "attention":
                x = attention_block(x, self._attention_params(prefix))
            elif kind == "activation":
                x = activation(layer.activation, x)
            elif kind == "avg_pool":
                x = avg_pool1d(x, layer.pool, layer.stride)
            elif kind == "gap":
                x = global_avg_pool1d(x)
            elif kind == "dense":
                x = dense(x, p[f"{prefix}.weights"], p[f"{prefix}.bias"])
                if layer.activation:
                    x = activation(layer.activation, x)
            elif kind == "fan_dense":
                x = fan_fc_block(x, FanFcBlockParams(p[f"{prefix}.w_p"], p[f"{prefix}.w_pbar"], p[f"{prefix}.b_pbar"]))
        return x

    __call__ = forward

    # ------------------------------------------------------------------
    # state
    # ------------------------------------------------------------------

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return int(sum(param.data.size for param in self.params.values()))

    def encode(self, segments: np.ndarray) -> np.ndarray:
        return self.encoder.encode(segments)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Raises:
            ShapeError: Missing, extra or reshaped parameters
        """
        if set(state) != set(self.params):
            raise ShapeError("state does not name the same parameters as the model")
        for name, param in self.params.items():
            values = np.asarray(state[name])
            if values.shape != param.shape:
                raise ShapeError(f"{name}: expected shape {param.shape}, got {values.shape}")
            param.data = values.astype(param.dtype, copy=True)
            param.grad = None

    def astype(self, dtype) -> "Model":
        for param in self.params.values():
            param.data = param.data.astype(dtype)
            param.grad = None
        return self

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype


def build_model(spec: ModelSpec, seed: int) -> Model:
    """
    Instantiate a model; an empty layer list means the preset for
    (architecture, task).

    Raises:
        ConfigurationError: Invalid spec or unknown architecture/task pairing
    """
    if not spec.layers:
        preset = model_spec(spec.architecture, spec.task, spec.variant)
        spec = ModelSpec(**{**preset.to_dict(), "layers": preset.layers,
                            "input_layout": spec.input_layout if spec.architecture == "fft1d" else preset.input_layout})
    model = Model(spec, seed)
    logger.debug(f"Built {spec.architecture}/{spec.task} with {model.parameter_count()} parameters")
    return model


def predict(model: Model, segments: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """
    Class probabilities for time-domain segments.

    Args:
        model: Trained or fresh model
        segments: (n, 1, segment_length)
        batch_size: Rows per forward pass

    Returns:
        np.ndarray: float64 (n, n_classes), rows summing to 1

    Raises:
        ShapeError: Segments that do not match the model's input
    """
    inputs = model.encode(segments).astype(model.dtype)
    return predict_encoded(model, inputs, batch_size)


def predict_encoded(model: Model, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Class probabilities for already-encoded inputs."""
    if len(inputs) == 0:
        return np.empty((0, model.spec.n_classes))
    outputs = []
    with no_grad():
        for start in range(0, len(inputs), batch_size):
            outputs.append(model(Tensor(inputs[start:start + batch_size])).data)
    return np.concatenate(outputs).astype(np.float64)


# ============================================================================
# CHECKPOINTS
# ============================================================================

def save_model(model: Model, file_path: Path) -> None:
    """Write parameters plus a JSON sidecar with the spec, seed and parameter dtype."""
    meta = {"spec": model.spec.to_dict(), "seed": model.seed, "dtype": np.dtype(model.dtype).name}
    save_checkpoint(model.state_dict(), file_path, meta)


def load_model(file_path: Path) -> Model:
    """
    Rebuild a model from a checkpoint and its sidecar.

    Raises:
        ValueError: Missing file or missing sidecar
    """
    params, meta = load_checkpoint(file_path)
    if meta is None:
        raise ValueError(f"Checkpoint {file_path} has no model description sidecar")
    model = Model(ModelSpec.from_dict(meta["spec"]), int(meta.get("seed", 0)))
    model.load_state_dict(params)
    # float32 weights survive the float64 archive exactly
    return model.astype(meta.get("dtype", "float64"))
