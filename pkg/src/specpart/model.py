"""The full classification network and its checkpoint format.

A patch [P, P, B] flows through: a per-band affine (pointwise) transform,
a contiguous split of the band axis into segments, one weight-shared stack
of strided 3D convolutions applied to every segment, concatenation of the
flattened segment features, and a two-layer fully-connected head ending in
softmax. The default stack is

    (out_ch, H, W, R, band stride, spatial pad)
    (1, 2, 2, 9, 2, 0) -> (3, 3, 3, 5, 1, 0) -> (5, 3, 3, 5, 2, 1)
    -> (10, 1, 1, 3, 1, 0)

Layer 3 carries spatial zero-padding of 1: after two valid 3x3-free layers a
5x5 patch is down to 2x2 spatially, and a 3x3 spatial kernel only fits with
padding. The band axis is never padded, so spectral extents follow the plain
floor((Z - R)/stride) + 1 arithmetic everywhere.

The stack parameters exist exactly once regardless of the number of
segments; every segment is convolved with the same kernels and biases.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ShapeError
from .layers import (
    Conv3dParams,
    DenseParams,
    conv3d_backward,
    conv3d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    pointwise_backward,
    pointwise_forward,
    relu_backward,
    relu_forward,
    softmax,
)
from .tensor import Tensor

DEFAULT_CONV_STACK = (
    (1, 2, 2, 9, 2, 0),
    (3, 3, 3, 5, 1, 0),
    (5, 3, 3, 5, 2, 1),
    (10, 1, 1, 3, 1, 0),
)

CHECKPOINT_MAGIC = b"SPC3"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    patch_size: int = 5
    num_segments: int = 2
    conv_stack: tuple = DEFAULT_CONV_STACK
    fc1_units: int = 120
    dropout_p: float = 0.5
    pointwise_mode: str = "shared"  # "shared" scalar pair or "per-band" pairs
    pointwise_activation: bool = False
    activation: str = "relu"  # "identity" turns the net linear for smooth checks

    def validate(self):
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise ConfigError(f"patch_size must be odd and >= 3, got {self.patch_size}")
        if self.num_segments < 1:
            raise ConfigError(f"num_segments must be >= 1, got {self.num_segments}")
        if self.pointwise_mode not in ("shared", "per-band"):
            raise ConfigError(f"unknown pointwise_mode {self.pointwise_mode!r}")
        if self.activation not in ("relu", "identity"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.fc1_units < 1:
            raise ConfigError(f"fc1_units must be >= 1, got {self.fc1_units}")
        for spec in self.conv_stack:
            if len(spec) != 6:
                raise ConfigError(f"conv layer spec must have 6 entries, got {spec}")


@dataclass
class Model:
    config: ModelConfig
    n_bands: int
    n_classes: int
    pointwise_weight: Tensor
    pointwise_bias: Tensor
    stack: list[Conv3dParams]  # one copy, shared by all segments
    fc1: DenseParams
    fc2: DenseParams
    segment_bounds: list[tuple[int, int]] = field(default_factory=list)


def spectral_partition_bounds(n_bands: int, num_segments: int) -> list[tuple[int, int]]:
    """Contiguous non-overlapping band ranges covering [0, n_bands).

    Segment sizes differ by at most one; earlier segments take the extra band.
    """
    if num_segments < 1:
        raise ConfigError(f"num_segments must be >= 1, got {num_segments}")
    if num_segments > n_bands:
        raise ConfigError(
            f"cannot split {n_bands} bands into {num_segments} segments"
        )
    base, extra = divmod(n_bands, num_segments)
    bounds = []
    lo = 0
    for s in range(num_segments):
        hi = lo + base + (1 if s < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def segment_shape_chain(
    config: ModelConfig, seg_bands: int
) -> list[tuple[int, int, int, int]]:
    """Intermediate [ch, X, Y, Z] shapes through the conv stack for one segment."""
    shape = (1, config.patch_size, config.patch_size, seg_bands)
    chain = [shape]
    for idx, (out_ch, kh, kw, kr, sr, pad) in enumerate(config.conv_stack):
        _, x, y, z = shape
        xo = (x + 2 * pad - kh) // 1 + 1
        yo = (y + 2 * pad - kw) // 1 + 1
        zo = (z - kr) // sr + 1
        if xo < 1 or yo < 1 or z < kr or zo < 1:
            raise ConfigError(
                f"conv layer {idx + 1} ({kh}x{kw}x{kr}, stride {sr}, pad {pad}) "
                f"collapses shape {shape[1:]} to {(xo, yo, zo)}"
            )
        shape = (out_ch, xo, yo, zo)
        chain.append(shape)
    return chain


def _flat_size(shape) -> int:
    return int(np.prod(shape))


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float64)


def build_model(
    config: ModelConfig, n_bands: int, n_classes: int, seed: int
) -> Model:
    """Initialize all parameters from `seed` (Glorot-uniform weights, zero biases).

    Draw order is fixed (pointwise, conv stack, fc1, fc2), so a seed pins
    every parameter bit.
    """
    config.validate()
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    bounds = spectral_partition_bounds(n_bands, config.num_segments)

    fc1_in = 0
    for lo, hi in bounds:
        chain = segment_shape_chain(config, hi - lo)
        fc1_in += _flat_size(chain[-1])

    rng = np.random.default_rng(seed)
    if config.pointwise_mode == "shared":
        pw_w = np.array(_glorot(rng, (), 1, 1))
        pw_b = np.array(0.0)
    else:
        pw_w = _glorot(rng, (n_bands,), 1, 1)
        pw_b = np.zeros(n_bands)

    stack = []
    in_ch = 1
    for out_ch, kh, kw, kr, sr, pad in config.conv_stack:
        fan = kh * kw * kr
        kernels = _glorot(rng, (out_ch, in_ch, kh, kw, kr), in_ch * fan, out_ch * fan)
        stack.append(
            Conv3dParams(
                kernels=kernels,
                biases=np.zeros(out_ch),
                stride=(1, 1, sr),
                spatial_padding=(pad, pad),
            )
        )
        in_ch = out_ch

    fc1 = DenseParams(
        weights=_glorot(rng, (config.fc1_units, fc1_in), fc1_in, config.fc1_units),
        biases=np.zeros(config.fc1_units),
    )
    fc2 = DenseParams(
        weights=_glorot(rng, (n_classes, config.fc1_units), config.fc1_units, n_classes),
        biases=np.zeros(n_classes),
    )
    return Model(
        config=config,
        n_bands=n_bands,
        n_classes=n_classes,
        pointwise_weight=pw_w,
        pointwise_bias=pw_b,
        stack=stack,
        fc1=fc1,
        fc2=fc2,
        segment_bounds=bounds,
    )


def parameters(model: Model) -> list[tuple[str, Tensor]]:
    """Named parameter arrays in their fixed serialization/update order."""
    out = [
        ("pointwise.weight", model.pointwise_weight),
        ("pointwise.bias", model.pointwise_bias),
    ]
    for i, p in enumerate(model.stack):
        out.append((f"conv{i}.kernels", p.kernels))
        out.append((f"conv{i}.biases", p.biases))
    out.append(("fc1.weights", model.fc1.weights))
    out.append(("fc1.biases", model.fc1.biases))
    out.append(("fc2.weights", model.fc2.weights))
    out.append(("fc2.biases", model.fc2.biases))
    return out


def _act_forward(t: Tensor, kind: str) -> Tensor:
    return relu_forward(t) if kind == "relu" else t


def _act_backward(pre: Tensor, grad: Tensor, kind: str) -> Tensor:
    return relu_backward(pre, grad) if kind == "relu" else grad


def _check_patch(model: Model, patch: Tensor) -> None:
    expected = (model.config.patch_size, model.config.patch_size, model.n_bands)
    if patch.shape != expected:
        raise ShapeError(f"patch shape {patch.shape} does not match model {expected}")


def pointwise_apply(model: Model, patch: Tensor) -> Tensor:
    """The leading per-band affine transform (plus optional activation)."""
    _check_patch(model, patch)
    out = pointwise_forward(patch, model.pointwise_weight, model.pointwise_bias)
    if model.config.pointwise_activation:
        out = _act_forward(out, model.config.activation)
    return out


def segment_inputs(model: Model, transformed: Tensor) -> list[Tensor]:
    """Split the transformed cube into per-segment [1, P, P, b_s] inputs."""
    return [
        np.ascontiguousarray(transformed[:, :, lo:hi])[None, :, :, :]
        for lo, hi in model.segment_bounds
    ]


def run_segment_stage(model: Model, t: Tensor, layer_idx: int) -> Tensor:
    """One conv layer plus activation; the pipeline's unit of work."""
    out = conv3d_forward(t, model.stack[layer_idx])
    return _act_forward(out, model.config.activation)


def run_segment_stack(model: Model, seg_input: Tensor) -> Tensor:
    """All conv layers over one segment; identical math for every segment."""
    t = seg_input
    for layer_idx in range(len(model.stack)):
        t = run_segment_stage(model, t, layer_idx)
    return t


def head_logits(
    model: Model,
    features: list[Tensor],
    training: bool = False,
    dropout_seed=0,
) -> tuple[Tensor, Tensor]:
    """FC head over the concatenated flattened segment features."""
    flat = np.concatenate([f.reshape(-1) for f in features])
    z1 = dense_forward(flat, model.fc1)
    a1 = _act_forward(z1, model.config.activation)
    d1, _ = dropout_forward(a1, model.config.dropout_p, dropout_seed, training)
    logits = dense_forward(d1, model.fc2)
    return logits, softmax(logits)


def forward(
    model: Model, patch: Tensor, training: bool = False, dropout_seed=0
) -> tuple[Tensor, Tensor]:
    """Whole-network forward pass; returns (logits, probs)."""
    logits, probs, _ = forward_with_cache(model, patch, training, dropout_seed)
    return logits, probs


def forward_with_cache(
    model: Model, patch: Tensor, training: bool = False, dropout_seed=0
) -> tuple[Tensor, Tensor, dict]:
    """Forward pass retaining every intermediate needed by `backward`."""
    _check_patch(model, patch)
    cache: dict = {"patch": patch, "training": training}
    pw_lin = pointwise_forward(patch, model.pointwise_weight, model.pointwise_bias)
    cache["pw_lin"] = pw_lin
    transformed = (
        _act_forward(pw_lin, model.config.activation)
        if model.config.pointwise_activation
        else pw_lin
    )

    seg_caches = []
    features = []
    for seg in segment_inputs(model, transformed):
        layer_ins = []
        layer_pre = []
        t = seg
        for p in model.stack:
            layer_ins.append(t)
            pre = conv3d_forward(t, p)
            layer_pre.append(pre)
            t = _act_forward(pre, model.config.activation)
        seg_caches.append({"ins": layer_ins, "pre": layer_pre})
        features.append(t)
    cache["segments"] = seg_caches
    cache["features"] = features

    flat = np.concatenate([f.reshape(-1) for f in features])
    z1 = dense_forward(flat, model.fc1)
    a1 = _act_forward(z1, model.config.activation)
    d1, drop_state = dropout_forward(a1, model.config.dropout_p, dropout_seed, training)
    logits = dense_forward(d1, model.fc2)
    cache.update(flat=flat, z1=z1, a1=a1, d1=d1, drop_state=drop_state)
    return logits, softmax(logits), cache


def backward(model: Model, cache: dict, grad_logits: Tensor) -> dict[str, Tensor]:
    """Gradients of the scalar sum(grad_logits . logits) wrt every parameter.

    Both segments backpropagate into the single shared conv stack, so their
    kernel/bias contributions accumulate (segment order fixed).
    """
    act = model.config.activation
    grads: dict[str, Tensor] = {}

    g_d1, grads["fc2.weights"], grads["fc2.biases"] = dense_backward(
        cache["d1"], model.fc2, grad_logits
    )
    g_a1 = dropout_backward(g_d1, cache["drop_state"])
    g_z1 = _act_backward(cache["z1"], g_a1, act)
    g_flat, grads["fc1.weights"], grads["fc1.biases"] = dense_backward(
        cache["flat"], model.fc1, g_z1
    )

    for i, p in enumerate(model.stack):
        grads[f"conv{i}.kernels"] = np.zeros_like(p.kernels)
        grads[f"conv{i}.biases"] = np.zeros_like(p.biases)

    patch = cache["patch"]
    grad_transformed = np.zeros(
        (model.config.patch_size, model.config.patch_size, model.n_bands)
    )
    offset = 0
    for seg_idx, (lo, hi) in enumerate(model.segment_bounds):
        seg_cache = cache["segments"][seg_idx]
        feat = cache["features"][seg_idx]
        size = feat.size
        g = g_flat[offset : offset + size].reshape(feat.shape)
        offset += size
        for layer_idx in reversed(range(len(model.stack))):
            g = _act_backward(seg_cache["pre"][layer_idx], g, act)
            g, g_k, g_b = conv3d_backward(
                seg_cache["ins"][layer_idx], model.stack[layer_idx], g
            )
            grads[f"conv{layer_idx}.kernels"] += g_k
            grads[f"conv{layer_idx}.biases"] += g_b
        grad_transformed[:, :, lo:hi] = g[0]

    if model.config.pointwise_activation:
        grad_transformed = _act_backward(cache["pw_lin"], grad_transformed, act)
    _, grads["pointwise.weight"], grads["pointwise.bias"] = pointwise_backward(
        patch, model.pointwise_weight, grad_transformed
    )
    return grads


def predict_label(model: Model, patch: Tensor) -> int:
    """Argmax class index (0-based) in inference mode; ties take the lowest index."""
    _, probs = forward(model, patch, training=False)
    return int(np.argmax(probs))


def _config_to_dict(config: ModelConfig) -> dict:
    d = dataclasses.asdict(config)
    d["conv_stack"] = [list(layer) for layer in config.conv_stack]
    return d


def _config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["conv_stack"] = tuple(tuple(layer) for layer in d["conv_stack"])
    return ModelConfig(**d)


def save_checkpoint(model: Model, path) -> None:
    """Write magic, version, JSON header and raw little-endian f64 blobs."""
    named = parameters(model)
    manifest = []
    offset = 0
    for name, arr in named:
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "config": _config_to_dict(model.config),
        "n_bands": model.n_bands,
        "n_classes": model.n_classes,
        "params": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in named:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Model:
    """Parse and validate a checkpoint; bit-exact inverse of save_checkpoint."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 10:
        raise FormatError("checkpoint truncated before header", offset=len(blob))
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}", offset=0)
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    (header_len,) = struct.unpack_from("<I", blob, 6)
    if len(blob) < 10 + header_len:
        raise FormatError("checkpoint truncated inside header", offset=len(blob))
    try:
        header = json.loads(blob[10 : 10 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unparseable checkpoint header: {exc}", offset=10) from exc

    try:
        config = _config_from_dict(header["config"])
        n_bands = int(header["n_bands"])
        n_classes = int(header["n_classes"])
        manifest = header["params"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint header missing field: {exc}", offset=10) from exc

    model = build_model(config, n_bands, n_classes, seed=0)
    named = dict(parameters(model))
    if {m["name"] for m in manifest} != set(named):
        raise FormatError("checkpoint parameter manifest does not match model", offset=10)

    data_start = 10 + header_len
    for entry in manifest:
        name, shape = entry["name"], tuple(entry["shape"])
        arr = named[name]
        if shape != arr.shape:
            raise FormatError(
                f"parameter {name} has shape {shape}, expected {arr.shape}",
                offset=10,
            )
        start = data_start + int(entry["offset"])
        end = start + arr.size * 8
        if end > len(blob):
            raise FormatError(
                f"checkpoint truncated inside parameter {name}", offset=len(blob)
            )
        values = np.frombuffer(blob[start:end], dtype="<f8").reshape(shape)
        arr[...] = values
    return model
