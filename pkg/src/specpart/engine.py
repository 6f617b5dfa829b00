"""Whole-scene inference with interchangeable segment scheduling.

The two (or more) segment computations share no mutable state and each one
reduces in a fixed order, so how they are scheduled cannot change the bits
of the result. Three arrangements are offered:

  sequential - segments run one after another on the calling thread;
  parallel   - each segment's conv stack is dispatched to a worker pool and
               joined in segment order;
  pipeline   - conv layers become pipeline stages; (pixel, segment) work
               items stream through stage workers.

predict_map guarantees identical label maps for all three modes and any
worker count; tests assert that bit for bit.
"""

from __future__ import annotations

import colorsys
import csv
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import HsiCube, LabelMap, extract_patch
from .errors import ConfigError, RenderError, ShapeError
from .model import (
    Model,
    head_logits,
    pointwise_apply,
    run_segment_stack,
    run_segment_stage,
    segment_inputs,
)
from .tensor import Tensor

SEQUENTIAL = "sequential"
PARALLEL = "parallel"
PIPELINE = "pipeline"
MODES = (SEQUENTIAL, PARALLEL, PIPELINE)

_PIXEL_WAVE = 256  # pixels in flight per pipeline wave, bounds feature memory


@dataclass
class ScheduleMode:
    mode: str = SEQUENTIAL
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown schedule mode {self.mode!r}; pick from {MODES}")
        if self.workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {self.workers}")


def _stage_groups(n_stages: int, workers: int) -> list[list[int]]:
    """Contiguous stage index groups, one per pipeline thread."""
    threads = min(workers, n_stages)
    bounds = np.linspace(0, n_stages, threads + 1).astype(int)
    return [list(range(bounds[t], bounds[t + 1])) for t in range(threads)]


def _pipeline_run(
    model: Model, items: list[tuple[object, Tensor]], workers: int
) -> dict[object, Tensor]:
    """Stream (key, segment input) items through layer-stage worker threads."""
    groups = _stage_groups(len(model.stack), workers)
    queues: list[queue.Queue] = [queue.Queue() for _ in groups]
    results: dict[object, Tensor] = {}
    sentinel = object()

    def stage_worker(t: int):
        while True:
            item = queues[t].get()
            if item is sentinel:
                if t + 1 < len(queues):
                    queues[t + 1].put(sentinel)
                return
            key, tensor = item
            for layer_idx in groups[t]:
                tensor = run_segment_stage(model, tensor, layer_idx)
            if t + 1 < len(queues):
                queues[t + 1].put((key, tensor))
            else:
                results[key] = tensor  # single writer: only the last stage thread

    threads = [threading.Thread(target=stage_worker, args=(t,)) for t in range(len(groups))]
    for th in threads:
        th.start()
    for item in items:
        queues[0].put(item)
    queues[0].put(sentinel)
    for th in threads:
        th.join()
    return results


def schedule_segments(model: Model, patch: Tensor, schedule: ScheduleMode) -> list[Tensor]:
    """Per-segment feature tensors for one patch under the given schedule."""
    segs = segment_inputs(model, pointwise_apply(model, patch))
    if schedule.mode == SEQUENTIAL:
        return [run_segment_stack(model, s) for s in segs]
    if schedule.mode == PARALLEL:
        with ThreadPoolExecutor(schedule.workers) as pool:
            futures = [pool.submit(run_segment_stack, model, s) for s in segs]
            return [f.result() for f in futures]
    results = _pipeline_run(model, list(enumerate(segs)), schedule.workers)
    return [results[i] for i in range(len(segs))]


def pipeline_features(
    model: Model, patches: list[Tensor], workers: int = 1
) -> list[list[Tensor]]:
    """Segment features for a stream of patches via the stage pipeline."""
    items = []
    n_segs = len(model.segment_bounds)
    for p_idx, patch in enumerate(patches):
        for s_idx, seg in enumerate(segment_inputs(model, pointwise_apply(model, patch))):
            items.append(((p_idx, s_idx), seg))
    results = _pipeline_run(model, items, workers)
    return [[results[(p, s)] for s in range(n_segs)] for p in range(len(patches))]


def predict_map(
    model: Model,
    cube: HsiCube,
    schedule: ScheduleMode | None = None,
    class_names: list[str] | None = None,
    return_probs: bool = False,
):
    """Classify every pixel of the scene into a 1-based LabelMap.

    The cube must already be preprocessed (normalized) the same way the
    training data was. Output labels are predicted for every pixel,
    including positions that are unlabeled in any ground truth.
    """
    schedule = schedule or ScheduleMode()
    if cube.bands != model.n_bands:
        raise ShapeError(f"cube has {cube.bands} bands, model expects {model.n_bands}")
    names = class_names or [f"class_{i}" for i in range(1, model.n_classes + 1)]
    if len(names) != model.n_classes:
        raise ConfigError(f"{len(names)} class names for {model.n_classes} classes")

    patch_size = model.config.patch_size
    preds = np.zeros((cube.height, cube.width), dtype=np.uint16)
    max_probs = np.zeros((cube.height, cube.width)) if return_probs else None

    def finish(yy: int, xx: int, features: list[Tensor]):
        _, probs = head_logits(model, features, training=False)
        preds[yy, xx] = int(np.argmax(probs)) + 1
        if max_probs is not None:
            max_probs[yy, xx] = float(np.max(probs))

    coords = [(yy, xx) for yy in range(cube.height) for xx in range(cube.width)]
    if schedule.mode == SEQUENTIAL:
        for yy, xx in coords:
            patch = extract_patch(cube, xx, yy, patch_size)
            segs = segment_inputs(model, pointwise_apply(model, patch))
            finish(yy, xx, [run_segment_stack(model, s) for s in segs])
    elif schedule.mode == PARALLEL:
        with ThreadPoolExecutor(schedule.workers) as pool:
            for yy, xx in coords:
                patch = extract_patch(cube, xx, yy, patch_size)
                segs = segment_inputs(model, pointwise_apply(model, patch))
                futures = [pool.submit(run_segment_stack, model, s) for s in segs]
                finish(yy, xx, [f.result() for f in futures])
    else:
        for start in range(0, len(coords), _PIXEL_WAVE):
            wave = coords[start : start + _PIXEL_WAVE]
            patches = [extract_patch(cube, xx, yy, patch_size) for yy, xx in wave]
            feats = pipeline_features(model, patches, schedule.workers)
            for (yy, xx), f in zip(wave, feats):
                finish(yy, xx, f)

    label_map = LabelMap(
        height=cube.height, width=cube.width, labels=preds, class_names=names
    )
    if return_probs:
        return label_map, max_probs
    return label_map


PALETTE_BASE = [
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
    (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
]


def default_palette(n_classes: int) -> dict[int, tuple[int, int, int]]:
    """Distinct colors for classes 1..n (black stays reserved for unlabeled)."""
    palette = {0: (0, 0, 0)}
    for i in range(n_classes):
        if i < len(PALETTE_BASE):
            palette[i + 1] = PALETTE_BASE[i]
        else:
            hue = (i * 0.6180339887498949) % 1.0  # golden-angle spacing
            r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 0.95)
            palette[i + 1] = (int(r * 255), int(g * 255), int(b * 255))
    return palette


def render_map(labels: LabelMap, palette: dict[int, tuple[int, int, int]], path) -> None:
    """Write the map as a binary PPM (P6), one image pixel per map cell."""
    lut = np.zeros((max(int(labels.labels.max()), max(palette, default=0)) + 1, 3),
                   dtype=np.uint8)
    seen = set(np.unique(labels.labels).tolist())
    for cid in sorted(seen):
        if cid == 0 and cid not in palette:
            continue  # unlabeled defaults to black
        if cid not in palette:
            raise RenderError(f"no palette entry for class {cid}")
    for cid, rgb in palette.items():
        lut[cid] = rgb
    pixels = lut[labels.labels]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{labels.width} {labels.height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def write_prediction_csv(labels: LabelMap, max_probs: np.ndarray, path) -> None:
    """Per-pixel predicted class id and max softmax probability."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "x", "class_id", "max_prob"])
        for yy in range(labels.height):
            for xx in range(labels.width):
                writer.writerow(
                    [yy, xx, int(labels.labels[yy, xx]), repr(float(max_probs[yy, xx]))]
                )
