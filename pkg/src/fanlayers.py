"""
Composite blocks built from the tensor operations.

- FC-FAN: cos(W_p x) || sin(W_p x) || sigma(B + W_pbar x)
- CONV-FAN: the same three branches as 1-D convolutions (1:1:1 filters)
- skip block: x + inner(x)
- channel attention (squeeze-excite) and skip-with-attention

Parameters are passed in explicitly so the blocks stay stateless.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

from src.helpers import ConfigurationError, ShapeError
from src.tensor import Tensor, activation, concat, conv1d, dense, global_avg_pool1d, reshape

FAN_SIGMA = "gelu"


# ============================================================================
# PARAMETER BUNDLES
# ============================================================================

@dataclass
class FanFcBlockParams:
    w_p: Tensor  # d_p x d_x, shared by the cos and sin branches
    w_pbar: Tensor  # d_pbar x d_x
    b_pbar: Tensor  # d_pbar
    sigma: str = FAN_SIGMA

    @property
    def d_p(self) -> int:
        return self.w_p.shape[0]

    @property
    def d_pbar(self) -> int:
        return self.w_pbar.shape[0]

    @property
    def width(self) -> int:
        return 2 * self.d_p + self.d_pbar


@dataclass
class FanConvBlockParams:
    k_cos: Tensor  # F/3 x C_in x K
    k_sin: Tensor
    k_sigma: Tensor
    b_sigma: Tensor  # F/3
    sigma: str = FAN_SIGMA

    @property
    def filters(self) -> int:
        return 3 * self.k_cos.shape[0]


@dataclass
class ConvParams:
    """Plain convolution + activation, the inner branch of CNN1D skip blocks."""

    kernels: Tensor
    bias: Optional[Tensor] = None
    activation: str = "relu"


@dataclass
class AttentionParams:
    w_squeeze: Tensor  # NN x C
    b_squeeze: Tensor
    w_gate: Tensor  # C x NN
    b_gate: Tensor


# ============================================================================
# WIDTH SPLITS
# ============================================================================

def fan_split(width: int) -> Tuple[int, int]:
    """
    Split an FC-FAN width 4:1:1 (sigma : sin : cos).

    Returns:
        tuple: (d_pbar, d_p), e.g. 120 -> (80, 20), 84 -> (56, 14)

    Raises:
        ConfigurationError: Width not divisible by 6
    """
    if width <= 0 or width % 6:
        raise ConfigurationError(f"FC-FAN width {width} cannot be split 4:1:1")
    d_p = width // 6
    return 4 * d_p, d_p


def fan_conv_split(filters: int) -> int:
    """Filters per branch of a CONV-FAN block (1:1:1)."""
    if filters <= 0 or filters % 3:
        raise ConfigurationError(f"CONV-FAN filter count {filters} is not divisible by 3")
    return filters // 3


# ============================================================================
# BLOCKS
# ============================================================================

def fan_fc_block(x: Tensor, params: FanFcBlockParams) -> Tensor:
    """
    FC-FAN layer over the last axis.

    Args:
        x: (..., d_x)
        params: Branch weights

    Returns:
        Tensor: (..., 2 d_p + d_pbar), ordered cos || sin || sigma

    Raises:
        ShapeError: On an input width mismatch
    """
    if params.w_p.shape[1] != x.shape[-1] or params.w_pbar.shape[1] != x.shape[-1]:
        raise ShapeError(f"FC-FAN block expects width {params.w_p.shape[1]}, got {x.shape[-1]}")

    periodic = dense(x, params.w_p)
    return concat([
        activation("cos", periodic),
        activation("sin", periodic),
        activation(params.sigma, dense(x, params.w_pbar, params.b_pbar)),
    ], axis=-1)


def fan_conv_block(x: Tensor, params: FanConvBlockParams) -> Tensor:
    """
    CONV-FAN layer: three same-padded convolutions concatenated on the
    channel axis as cos || sin || sigma. Only the sigma branch has a bias.
    """
    return concat([
        activation("cos", conv1d(x, params.k_cos, padding="same")),
        activation("sin", conv1d(x, params.k_sin, padding="same")),
        activation(params.sigma, conv1d(x, params.k_sigma, params.b_sigma, padding="same")),
    ], axis=-2)


def _inner(x: Tensor, params) -> Tensor:
    if isinstance(params, FanConvBlockParams):
        return fan_conv_block(x, params)
    if isinstance(params, ConvParams):
        return activation(params.activation, conv1d(x, params.kernels, params.bias, padding="same"))
    raise ConfigurationError(f"Unsupported skip-branch parameters: {type(params).__name__}")


def _check_residual(x: Tensor, branch: Tensor) -> None:
    if branch.shape != x.shape:
        raise ShapeError(f"residual branch shape {branch.shape} does not match input {x.shape}")


def skip_block(x: Tensor, params) -> Tensor:
    """out = x + inner(x), inner being conv + activation or a CONV-FAN block."""
    branch = _inner(x, params)
    _check_residual(x, branch)
    return x + branch


def attention_block(x: Tensor, params: AttentionParams) -> Tensor:
    """
    Squeeze-excite channel gating.

    s = mean_t x; g = sigmoid(W2 relu(W1 s + b1) + b2); out[c, t] = g[c] x[c, t]
    """
    channels = x.shape[-2]
    if params.w_squeeze.shape[1] != channels or params.w_gate.shape[0] != channels:
        raise ShapeError(f"attention parameters do not match {channels} channels")

    squeezed = global_avg_pool1d(x)
    hidden = activation("relu", dense(squeezed, params.w_squeeze, params.b_squeeze))
    gate = activation("sigmoid", dense(hidden, params.w_gate, params.b_gate))
    return x * reshape(gate, gate.shape + (1,))


def skip_attention_block(x: Tensor, skip_params, attention_params: AttentionParams) -> Tensor:
    """out = x + attention(inner(x)); the gate acts on the residual branch."""
    branch = attention_block(_inner(x, skip_params), attention_params)
    _check_residual(x, branch)
    return x + branch

