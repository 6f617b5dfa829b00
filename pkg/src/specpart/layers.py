"""Forward and backward passes for every layer type in the network.

Layers are pure functions: parameters and activations go in, activations or
gradients come out, and nothing is cached in hidden state. The 3D convolution
is the workhorse: a strided cross-correlation over (height, width, band) with
per-output-channel bias. Spatial axes may be zero-padded symmetrically; the
band axis never is, so spectral extents shrink exactly as the stride/kernel
arithmetic dictates.

Gradients are exact analytic derivatives of the forward expressions. Every
contraction is a tensordot/matmul with a fixed operand order, so repeated
evaluation on the same data is bitwise reproducible regardless of which
thread performs it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, NumericError, ShapeError
from .tensor import Tensor


@dataclass
class Conv3dParams:
    """Kernels [out_ch, in_ch, H, W, R], biases [out_ch], strides and spatial pad."""

    kernels: Tensor
    biases: Tensor
    stride: tuple[int, int, int] = (1, 1, 1)
    spatial_padding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kernels.ndim != 5:
            raise ShapeError(f"kernels must be 5-D, got {self.kernels.shape}")
        if self.biases.shape != (self.kernels.shape[0],):
            raise ShapeError(
                f"biases shape {self.biases.shape} does not match "
                f"{self.kernels.shape[0]} output channels"
            )
        if min(self.kernels.shape[2:]) < 1:
            raise ShapeError(f"kernel extents must be >= 1, got {self.kernels.shape[2:]}")
        if min(self.stride) < 1:
            raise ConfigError(f"strides must be >= 1, got {self.stride}")
        if min(self.spatial_padding) < 0:
            raise ConfigError(f"padding must be >= 0, got {self.spatial_padding}")


@dataclass
class DenseParams:
    """Weights [out_units, in_units] and biases [out_units]."""

    weights: Tensor
    biases: Tensor

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ShapeError(f"dense weights must be 2-D, got {self.weights.shape}")
        if self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"biases shape {self.biases.shape} does not match "
                f"{self.weights.shape[0]} output units"
            )


@dataclass
class DropoutState:
    """Dropout config plus the mask actually drawn at forward time."""

    p: float
    seed: object = None
    mask: Tensor | None = None


def conv3d_output_shape(
    input_shape: tuple[int, int, int, int], params: Conv3dParams
) -> tuple[int, int, int, int]:
    """Output shape [out_ch, X', Y', Z'] for an input [in_ch, X, Y, Z]."""
    in_ch, x, y, z = input_shape
    out_ch, k_ch, kh, kw, kr = params.kernels.shape
    if in_ch != k_ch:
        raise ShapeError(f"input has {in_ch} channels, kernels expect {k_ch}")
    sh, sw, sr = params.stride
    ph, pw = params.spatial_padding
    if x + 2 * ph < kh or y + 2 * pw < kw:
        raise ShapeError(
            f"kernel {kh}x{kw} exceeds padded spatial extent "
            f"{x + 2 * ph}x{y + 2 * pw}"
        )
    if z < kr:
        raise ShapeError(f"kernel depth {kr} exceeds {z} bands")
    xo = (x + 2 * ph - kh) // sh + 1
    yo = (y + 2 * pw - kw) // sw + 1
    zo = (z - kr) // sr + 1
    return out_ch, xo, yo, zo


def _padded_windows(x: Tensor, params: Conv3dParams) -> tuple[Tensor, Tensor]:
    """Zero-pad spatially and expose strided sliding windows over the input.

    Returns (padded input, windows [in_ch, X', Y', Z', H, W, R]).
    """
    ph, pw = params.spatial_padding
    sh, sw, sr = params.stride
    kh, kw, kr = params.kernels.shape[2:]
    if ph or pw:
        x = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    win = sliding_window_view(x, (kh, kw, kr), axis=(1, 2, 3))
    return x, win[:, ::sh, ::sw, ::sr]


def conv3d_forward(x: Tensor, params: Conv3dParams) -> Tensor:
    """Strided 3-D cross-correlation plus bias, no activation.

    out[j, x', y', z'] = b[j] + sum over (m, h, w, r) of
        K[j, m, h, w, r] * in[m, x'*sh + h - ph, y'*sw + w - pw, z'*sr + r]
    with zero padding on the two spatial axes only.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv3d input must be [ch, X, Y, Z], got {x.shape}")
    conv3d_output_shape(x.shape, params)  # validates extents
    _, win = _padded_windows(x, params)
    out = np.tensordot(params.kernels, win, axes=([1, 2, 3, 4], [0, 4, 5, 6]))
    return out + params.biases[:, None, None, None]


def conv3d_backward(
    x: Tensor, params: Conv3dParams, grad_out: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients of sum(grad_out * conv3d_forward(x)) wrt input, kernels, biases."""
    out_shape = conv3d_output_shape(x.shape, params)
    if grad_out.shape != out_shape:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match output {out_shape}"
        )
    kh, kw, kr = params.kernels.shape[2:]
    sh, sw, sr = params.stride
    ph, pw = params.spatial_padding
    _, xo, yo, zo = out_shape

    grad_biases = grad_out.sum(axis=(1, 2, 3))

    padded, win = _padded_windows(x, params)
    grad_kernels = np.tensordot(grad_out, win, axes=([1, 2, 3], [1, 2, 3]))

    # Scatter kernel-weighted output gradients back onto the padded input.
    # For a fixed kernel offset the target slices never overlap, so the
    # strided in-place adds below are safe and order-independent.
    spread = np.tensordot(params.kernels, grad_out, axes=([0], [0]))
    grad_padded = np.zeros_like(padded)
    for h in range(kh):
        for w in range(kw):
            for r in range(kr):
                grad_padded[
                    :,
                    h : h + sh * xo : sh,
                    w : w + sw * yo : sw,
                    r : r + sr * zo : sr,
                ] += spread[:, h, w, r]
    grad_input = grad_padded[:, ph : ph + x.shape[1], pw : pw + x.shape[2], :]
    return np.ascontiguousarray(grad_input), grad_kernels, grad_biases


def pointwise_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Per-band affine transform of a [X, Y, Z] cube.

    `weight`/`bias` are either 0-d (one scalar pair shared by all bands) or
    [Z] vectors (an independent pair per band); broadcasting covers both.
    """
    if weight.ndim == 1 and weight.shape[0] != x.shape[-1]:
        raise ShapeError(
            f"per-band weight length {weight.shape[0]} != {x.shape[-1]} bands"
        )
    return weight * x + bias


def pointwise_backward(
    x: Tensor, weight: Tensor, grad_out: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients wrt input, weight and bias of the per-band affine transform."""
    if grad_out.shape != x.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != input {x.shape}")
    if weight.ndim == 0:
        grad_w = np.sum(grad_out * x)
        grad_b = np.sum(grad_out)
    else:
        grad_w = np.sum(grad_out * x, axis=(0, 1))
        grad_b = np.sum(grad_out, axis=(0, 1))
    return weight * grad_out, np.asarray(grad_w), np.asarray(grad_b)


def relu_forward(t: Tensor) -> Tensor:
    return np.maximum(t, 0.0)


def relu_backward(t: Tensor, grad_out: Tensor) -> Tensor:
    return np.where(t > 0, grad_out, 0.0)


def dropout_forward(
    t: Tensor, p: float, seed, training: bool
) -> tuple[Tensor, DropoutState]:
    """Inverted dropout: keep with probability 1-p and rescale by 1/(1-p).

    Inference mode is exactly the identity. The mask is drawn from a fresh
    generator seeded with `seed`, so a given (seed, shape, p) always yields
    the same mask.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {p}")
    state = DropoutState(p=p, seed=seed)
    if not training or p == 0.0:
        state.mask = np.ones_like(t)
        return t.copy(), state
    rng = np.random.default_rng(seed)
    state.mask = (rng.random(t.shape) >= p).astype(np.float64)
    return t * state.mask / (1.0 - p), state


def dropout_backward(grad_out: Tensor, state: DropoutState) -> Tensor:
    return grad_out * state.mask / (1.0 - state.p)


def dense_forward(x: Tensor, params: DenseParams) -> Tensor:
    if x.shape != (params.weights.shape[1],):
        raise ShapeError(
            f"dense input shape {x.shape} != ({params.weights.shape[1]},)"
        )
    return params.weights @ x + params.biases


def dense_backward(
    x: Tensor, params: DenseParams, grad_out: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    if grad_out.shape != (params.weights.shape[0],):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} != ({params.weights.shape[0]},)"
        )
    grad_w = np.outer(grad_out, x)
    grad_x = params.weights.T @ grad_out
    return grad_x, grad_w, grad_out.copy()


def softmax(logits: Tensor) -> Tensor:
    """Max-subtracted softmax; safe for large logits, sums to 1 within 1e-12."""
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax input contains non-finite values")
    shifted = logits - np.max(logits)
    exps = np.exp(shifted)
    return exps / np.sum(exps)
