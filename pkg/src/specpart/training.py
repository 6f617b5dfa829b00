"""Loss, optimizer, training loop, evaluation metrics and gradient checking.

Training is deterministic end to end: epoch shuffles come from a seeded
generator keyed by (seed, epoch), dropout masks from (seed, epoch, batch,
position), and batch gradients are accumulated in fixed chunks whose
reduction order does not depend on how many worker threads computed them.
Two runs with the same seeds therefore produce bit-identical parameters and
history.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConfigError, NumericError, ShapeError
from .model import Model, backward, forward_with_cache, parameters, predict_label
from .tensor import Tensor

LOG_FLOOR = 1e-12  # keeps -log(p) finite when a class probability underflows

# Samples are summed in fixed chunks of this many, then chunk sums are reduced
# in order; worker threads only decide who computes a chunk, not the result.
ACC_CHUNK = 8

Sample = tuple[Tensor, int]


def cross_entropy(probs: Tensor, label: int) -> tuple[float, Tensor]:
    """Loss -log(p[label]) and its gradient wrt the logits (softmax fused).

    The returned gradient is probs - onehot(label), exact for softmax inputs.
    """
    if not 0 <= label < probs.shape[0]:
        raise BoundsError(f"label {label} out of range for {probs.shape[0]} classes")
    loss = -float(np.log(probs[label] + LOG_FLOOR))
    grad_logits = probs.copy()
    grad_logits[label] -= 1.0
    return loss, grad_logits


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, Tensor] = field(default_factory=dict)
    v: dict[str, Tensor] = field(default_factory=dict)


def init_adam(named_params: list[tuple[str, Tensor]], lr: float = 5e-4) -> AdamState:
    state = AdamState(lr=lr)
    for name, arr in named_params:
        state.m[name] = np.zeros_like(arr)
        state.v[name] = np.zeros_like(arr)
    return state


def adam_step(
    named_params: list[tuple[str, Tensor]],
    grads: dict[str, Tensor],
    state: AdamState,
) -> None:
    """One bias-corrected Adam update, applied to the parameters in place."""
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, arr in named_params:
        g = grads[name]
        if g.shape != arr.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter {arr.shape} ({name})")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        arr -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class TrainConfig:
    batch_size: int = 50
    epochs: int = 650
    lr: float = 5e-4
    shuffle_seed: int = 0
    dropout_seed: int = 0
    eval_every: int = 1  # epochs between val/test evaluations
    workers: int = 1
    # Reported results use the final epoch by default; this restores the
    # best-validation-accuracy parameters instead (needs a val set).
    keep_best_val: bool = False

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")


@dataclass
class Metrics:
    confusion: np.ndarray  # rows = truth, columns = prediction
    oa: float
    aa: float
    per_class_acc: list[float]


def metrics_from_confusion(confusion: np.ndarray) -> Metrics:
    """OA, AA and per-class accuracies from a truth-by-prediction count matrix.

    Classes with no ground-truth samples get NaN per-class accuracy and are
    excluded from AA.
    """
    confusion = np.asarray(confusion, dtype=np.int64)
    total = confusion.sum()
    if total == 0:
        raise ConfigError("confusion matrix is empty")
    oa = float(np.trace(confusion)) / float(total)
    row_sums = confusion.sum(axis=1)
    per_class = [
        float(confusion[c, c]) / float(row_sums[c]) if row_sums[c] > 0 else float("nan")
        for c in range(confusion.shape[0])
    ]
    present = [a for a in per_class if not np.isnan(a)]
    aa = float(np.mean(present))
    return Metrics(confusion=confusion, oa=oa, aa=aa, per_class_acc=per_class)


def evaluate(model: Model, samples: list[Sample]) -> Metrics:
    """Inference-mode evaluation of (patch, label) samples."""
    if not samples:
        raise ConfigError("cannot evaluate an empty sample set")
    confusion = np.zeros((model.n_classes, model.n_classes), dtype=np.int64)
    for patch, label in samples:
        if not 0 <= label < model.n_classes:
            raise BoundsError(f"label {label} out of range for {model.n_classes} classes")
        confusion[label, predict_label(model, patch)] += 1
    return metrics_from_confusion(confusion)


def summarize_runs(runs: list[Metrics]) -> dict[str, float]:
    """Mean and half-range of OA/AA across repeated runs."""
    oas = np.array([r.oa for r in runs])
    aas = np.array([r.aa for r in runs])
    return {
        "runs": len(runs),
        "oa_mean": float(oas.mean()),
        "oa_spread": float((oas.max() - oas.min()) / 2.0),
        "aa_mean": float(aas.mean()),
        "aa_spread": float((aas.max() - aas.min()) / 2.0),
    }


def _chunk_grads(
    model: Model,
    train_set: list[Sample],
    indices: np.ndarray,
    seeds: list,
) -> tuple[float, dict[str, Tensor]]:
    """Summed loss and gradients over one fixed chunk of batch samples."""
    loss_sum = 0.0
    grad_sum: dict[str, Tensor] | None = None
    for sample_idx, seed in zip(indices, seeds):
        patch, label = train_set[sample_idx]
        _, probs, cache = forward_with_cache(
            model, patch, training=True, dropout_seed=seed
        )
        loss, grad_logits = cross_entropy(probs, label)
        loss_sum += loss
        grads = backward(model, cache, grad_logits)
        if grad_sum is None:
            grad_sum = grads
        else:
            for name in grad_sum:
                grad_sum[name] += grads[name]
    return loss_sum, grad_sum or {}


def train(
    model: Model,
    train_set: list[Sample],
    val_set: list[Sample] | None,
    cfg: TrainConfig,
    rng_seed: int | None = None,
    test_set: list[Sample] | None = None,
) -> tuple[Model, list[dict]]:
    """Adam training with per-batch mean gradients; returns per-epoch history.

    `rng_seed`, when given, overrides both the shuffle and dropout seeds in
    `cfg`. History rows carry epoch, mean training loss, training accuracy
    (inference-mode over the train set) and, on evaluation epochs, val/test
    accuracy.
    """
    cfg.validate()
    if not train_set:
        raise ConfigError("training set is empty")
    for _, label in train_set:
        if not 0 <= label < model.n_classes:
            raise BoundsError(f"label {label} out of range for {model.n_classes} classes")
    if rng_seed is not None:
        cfg = TrainConfig(**{**cfg.__dict__, "shuffle_seed": rng_seed, "dropout_seed": rng_seed})

    if cfg.keep_best_val and not val_set:
        raise ConfigError("keep_best_val requires a validation set")

    named = parameters(model)
    state = init_adam(named, lr=cfg.lr)
    history: list[dict] = []
    n = len(train_set)
    best_val = -1.0
    best_params: dict[str, Tensor] | None = None
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(cfg.epochs):
            order = np.random.default_rng([cfg.shuffle_seed, epoch]).permutation(n)
            epoch_loss = 0.0
            for batch_idx, start in enumerate(range(0, n, cfg.batch_size)):
                batch = order[start : start + cfg.batch_size]
                seeds = [
                    [cfg.dropout_seed, epoch, batch_idx, k] for k in range(len(batch))
                ]
                chunks = [
                    (batch[c : c + ACC_CHUNK], seeds[c : c + ACC_CHUNK])
                    for c in range(0, len(batch), ACC_CHUNK)
                ]
                try:
                    if pool is not None:
                        results = list(
                            pool.map(lambda cs: _chunk_grads(model, train_set, *cs), chunks)
                        )
                    else:
                        results = [
                            _chunk_grads(model, train_set, idx, sd) for idx, sd in chunks
                        ]
                except NumericError as exc:
                    raise NumericError(
                        f"epoch {epoch + 1}, batch {batch_idx + 1}: {exc}"
                    ) from exc

                batch_loss = 0.0
                grad_sum = {name: np.zeros_like(arr) for name, arr in named}
                for chunk_loss, chunk_grads in results:  # fixed reduction order
                    batch_loss += chunk_loss
                    for name in grad_sum:
                        grad_sum[name] += chunk_grads[name]
                if not np.isfinite(batch_loss):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch + 1}, batch {batch_idx + 1}"
                    )
                scale = 1.0 / len(batch)
                for name in grad_sum:
                    grad_sum[name] *= scale
                adam_step(named, grad_sum, state)
                epoch_loss += batch_loss

            row: dict = {
                "epoch": epoch + 1,
                "train_loss": epoch_loss / n,
                "train_acc": evaluate(model, train_set).oa,
                "val_acc": None,
                "test_acc": None,
            }
            if (epoch + 1) % cfg.eval_every == 0 or epoch + 1 == cfg.epochs:
                if val_set:
                    row["val_acc"] = evaluate(model, val_set).oa
                    if cfg.keep_best_val and row["val_acc"] > best_val:
                        best_val = row["val_acc"]
                        best_params = {name: arr.copy() for name, arr in named}
                if test_set:
                    row["test_acc"] = evaluate(model, test_set).oa
            history.append(row)
    finally:
        if pool is not None:
            pool.shutdown()
    if best_params is not None:
        for name, arr in named:
            arr[...] = best_params[name]
    return model, history


HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_acc", "test_acc")


def write_history_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow(
                ["" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else row[c] for c in HISTORY_COLUMNS]
            )


def grad_check(
    model: Model,
    sample: Sample,
    epsilon: float = 1e-5,
    floor: float = 1e-4,
    max_coords: int | None = None,
    seed: int = 0,
    corrupt_param: str | None = None,
    corrupt_scale: float = 1.1,
) -> tuple[float, str]:
    """Max relative disagreement between analytic and central-FD gradients.

    The loss is inference-mode cross-entropy on `sample` (dropout off, so the
    objective is smooth wherever ReLUs stay on one side of their kink). The
    per-coordinate error is |a - n| / max(|a|, |n|, floor); the floor turns
    near-zero coordinates into an absolute comparison at the same tolerance.

    `max_coords` caps how many coordinates are probed (a seeded subsample
    spanning all parameters); `corrupt_param` deliberately scales one
    analytic gradient tensor so harnesses can verify the checker catches a
    wrong gradient.
    """
    patch, label = sample

    def loss_at() -> float:
        _, probs, _ = forward_with_cache(model, patch, training=False)
        loss, _ = cross_entropy(probs, label)
        return loss

    _, probs, cache = forward_with_cache(model, patch, training=False)
    _, grad_logits = cross_entropy(probs, label)
    analytic = backward(model, cache, grad_logits)
    if corrupt_param is not None:
        analytic[corrupt_param] = analytic[corrupt_param] * corrupt_scale

    coords: list[tuple[str, int]] = []
    for name, arr in parameters(model):
        coords.extend((name, i) for i in range(arr.size))
    if max_coords is not None and len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(picks)]

    arrays = dict(parameters(model))
    worst = 0.0
    worst_coord = ""
    for name, i in coords:
        flat = arrays[name].reshape(-1)
        keep = flat[i]
        flat[i] = keep + epsilon
        up = loss_at()
        flat[i] = keep - epsilon
        down = loss_at()
        flat[i] = keep
        numeric = (up - down) / (2.0 * epsilon)
        a = float(analytic[name].reshape(-1)[i])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if rel > worst:
            worst = rel
            idx = np.unravel_index(i, arrays[name].shape) if arrays[name].ndim else ()
            worst_coord = f"{name}{[int(v) for v in idx]}"
    return worst, worst_coord
