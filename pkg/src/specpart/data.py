"""Hyperspectral cube / label-map I/O, preprocessing, patches and splits.

Binary formats (all little-endian):

HSIC cube file
    magic    4 bytes  "HSIC"
    version  u16      1
    dtype    u8       1 = f32 storage, 2 = f64 storage
    height   u32
    width    u32
    bands    u32
    data     height*width*bands values in (y, x, band) row-major order

    The loader always promotes storage to float64 in memory and rejects
    non-finite values, reporting the byte offset of the first offender.

HSIL label file
    magic    4 bytes  "HSIL"
    version  u16      1
    height   u32
    width    u32
    K        u16      class count
    names    K x (u16 length + UTF-8 bytes), classes 1..K in order
    labels   height*width u16 row-major, 0 = unlabeled

Split CSV (one labeled pixel per row): y, x, class_id, assignment with
assignment in {train, val, test}.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundsError,
    ConfigError,
    DegenerateInputError,
    FormatError,
    ShapeError,
    SplitError,
)
from .tensor import Tensor

HSIC_MAGIC = b"HSIC"
HSIL_MAGIC = b"HSIL"
FORMAT_VERSION = 1
DTYPE_F32 = 1
DTYPE_F64 = 2

ROLE_TRAIN = "train"
ROLE_VAL = "val"
ROLE_TEST = "test"
ROLES = (ROLE_TRAIN, ROLE_VAL, ROLE_TEST)


@dataclass
class HsiCube:
    height: int
    width: int
    bands: int
    data: Tensor  # [height, width, bands] float64
    name: str = ""

    def __post_init__(self):
        if self.data.shape != (self.height, self.width, self.bands):
            raise ShapeError(
                f"cube data shape {self.data.shape} != "
                f"({self.height}, {self.width}, {self.bands})"
            )


@dataclass
class LabelMap:
    height: int
    width: int
    labels: np.ndarray  # [height, width] uint16, 0 = unlabeled
    class_names: list[str]  # class i (1-based) -> class_names[i - 1]

    def __post_init__(self):
        if self.labels.shape != (self.height, self.width):
            raise ShapeError(
                f"label shape {self.labels.shape} != ({self.height}, {self.width})"
            )
        k = len(self.class_names)
        if self.labels.size and int(self.labels.max()) > k:
            raise ShapeError(
                f"label value {int(self.labels.max())} exceeds {k} named classes"
            )


@dataclass
class SplitAssignment:
    """Role per labeled pixel: an int8 map with 0=none, 1=train, 2=val, 3=test."""

    roles: np.ndarray
    seed: int
    fractions: tuple[float, float, float]

    def positions(self, role: str) -> list[tuple[int, int]]:
        code = ROLES.index(role) + 1
        return [tuple(p) for p in np.argwhere(self.roles == code)]


def save_cube(cube: HsiCube, path, storage: str = "f64") -> None:
    """Write an HSIC file; storage is "f64" (exact) or "f32" (compact)."""
    if storage not in ("f32", "f64"):
        raise ConfigError(f"storage must be f32 or f64, got {storage!r}")
    code = DTYPE_F32 if storage == "f32" else DTYPE_F64
    dtype = "<f4" if storage == "f32" else "<f8"
    with open(path, "wb") as fh:
        fh.write(HSIC_MAGIC)
        fh.write(struct.pack("<HBIII", FORMAT_VERSION, code, cube.height, cube.width, cube.bands))
        fh.write(np.ascontiguousarray(cube.data, dtype=dtype).tobytes())


def load_cube(path, name: str = "") -> HsiCube:
    with open(path, "rb") as fh:
        blob = fh.read()
    header = struct.calcsize("<HBIII") + 4
    if len(blob) < header:
        raise FormatError("cube file truncated before header", offset=len(blob))
    if blob[:4] != HSIC_MAGIC:
        raise FormatError(f"bad cube magic {blob[:4]!r}", offset=0)
    version, code, height, width, bands = struct.unpack_from("<HBIII", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported cube version {version}", offset=4)
    if code not in (DTYPE_F32, DTYPE_F64):
        raise FormatError(f"unknown cube dtype code {code}", offset=6)
    itemsize = 4 if code == DTYPE_F32 else 8
    count = height * width * bands
    expected = header + count * itemsize
    if len(blob) != expected:
        raise FormatError(
            f"cube payload is {len(blob) - header} bytes, expected {count * itemsize}",
            offset=min(len(blob), expected),
        )
    raw = np.frombuffer(blob, dtype="<f4" if code == DTYPE_F32 else "<f8", offset=header)
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        raise FormatError(
            "cube contains non-finite value", offset=header + int(bad[0]) * itemsize
        )
    data = raw.astype(np.float64).reshape(height, width, bands)
    return HsiCube(height=height, width=width, bands=bands, data=data, name=name)


def save_labels(labels: LabelMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(HSIL_MAGIC)
        fh.write(struct.pack("<HIIH", FORMAT_VERSION, labels.height, labels.width,
                             len(labels.class_names)))
        for cls_name in labels.class_names:
            encoded = cls_name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
        fh.write(np.ascontiguousarray(labels.labels, dtype="<u2").tobytes())


def load_labels(path) -> LabelMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    fixed = 4 + struct.calcsize("<HIIH")
    if len(blob) < fixed:
        raise FormatError("label file truncated before header", offset=len(blob))
    if blob[:4] != HSIL_MAGIC:
        raise FormatError(f"bad label magic {blob[:4]!r}", offset=0)
    version, height, width, k = struct.unpack_from("<HIIH", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported label version {version}", offset=4)
    pos = fixed
    names = []
    for _ in range(k):
        if len(blob) < pos + 2:
            raise FormatError("label file truncated in class names", offset=len(blob))
        (length,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        if len(blob) < pos + length:
            raise FormatError("label file truncated in class names", offset=len(blob))
        names.append(blob[pos : pos + length].decode("utf-8"))
        pos += length
    count = height * width
    if len(blob) != pos + count * 2:
        raise FormatError(
            f"label payload is {len(blob) - pos} bytes, expected {count * 2}",
            offset=min(len(blob), pos + count * 2),
        )
    grid = np.frombuffer(blob, dtype="<u2", offset=pos).reshape(height, width).copy()
    if grid.size and int(grid.max()) > k:
        first_bad = int(np.argwhere(grid > k)[0].dot([width, 1]))
        raise FormatError(
            f"label value {int(grid.max())} exceeds class count {k}",
            offset=pos + first_bad * 2,
        )
    return LabelMap(height=height, width=width, labels=grid, class_names=names)


def normalize_minmax(cube: HsiCube, per_band: bool = False) -> HsiCube:
    """Rescale values to [0, 1] via (x - min) / (max - min).

    Defaults to one global min/max over the whole cube; `per_band` applies
    the transform band by band instead.
    """
    data = cube.data
    if per_band:
        lo = data.min(axis=(0, 1))
        hi = data.max(axis=(0, 1))
        if np.any(hi == lo):
            raise DegenerateInputError("at least one band is constant; cannot normalize")
    else:
        lo = data.min()
        hi = data.max()
        if hi == lo:
            raise DegenerateInputError("cube is constant; cannot min-max normalize")
    scaled = (data - lo) / (hi - lo)
    return HsiCube(cube.height, cube.width, cube.bands, scaled, name=cube.name)


def _reflect(i: int, n: int) -> int:
    """Mirror an index across the array borders (border pixel not repeated)."""
    if n == 1:
        return 0
    while i < 0 or i >= n:
        if i < 0:
            i = -i
        if i >= n:
            i = 2 * (n - 1) - i
    return i


def extract_patch(cube: HsiCube, x: int, y: int, patch_size: int) -> Tensor:
    """The patch_size x patch_size x bands window centered at column x, row y.

    Positions falling outside the image are filled by mirror reflection, so
    border pixels are classifiable; the center entry is always the pixel's
    own spectrum.
    """
    if patch_size < 1 or patch_size % 2 == 0:
        raise ConfigError(f"patch_size must be odd and >= 1, got {patch_size}")
    if not (0 <= x < cube.width and 0 <= y < cube.height):
        raise BoundsError(f"center ({x}, {y}) outside {cube.width}x{cube.height} image")
    half = patch_size // 2
    rows = [_reflect(y + dy, cube.height) for dy in range(-half, half + 1)]
    cols = [_reflect(x + dx, cube.width) for dx in range(-half, half + 1)]
    return cube.data[np.ix_(rows, cols)].copy()


def filter_classes(labels: LabelMap, keep: list[int]) -> LabelMap:
    """Keep only the listed class ids, relabeled densely to 1..len(keep).

    Pixels of dropped classes become unlabeled (0); class names follow the
    keep-list order.
    """
    k = len(labels.class_names)
    for cid in keep:
        if not 1 <= cid <= k:
            raise ConfigError(f"keep-list id {cid} does not exist (classes 1..{k})")
    if len(set(keep)) != len(keep):
        raise ConfigError("keep-list contains duplicate class ids")
    lut = np.zeros(k + 1, dtype=np.uint16)
    for new_id, cid in enumerate(keep, start=1):
        lut[cid] = new_id
    return LabelMap(
        height=labels.height,
        width=labels.width,
        labels=lut[labels.labels],
        class_names=[labels.class_names[cid - 1] for cid in keep],
    )


def stratified_split(
    labels: LabelMap,
    fractions: tuple[float, float, float],
    seed: int,
) -> SplitAssignment:
    """Seeded per-class split into train/val/test by the given fractions.

    Each class's pixels are shuffled, then the first ceil(f_train * n) go to
    train and the next ceil(f_val * n) to val (capped so train keeps at least
    one sample less than the class when fractions are extreme); the rest are
    test. Unlabeled pixels are never assigned.
    """
    f_train, f_val, f_test = fractions
    if abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise ConfigError(f"fractions {fractions} do not sum to 1")
    if min(fractions) < 0:
        raise ConfigError(f"fractions must be nonnegative, got {fractions}")
    roles = np.zeros_like(labels.labels, dtype=np.int8)
    rng = np.random.default_rng(seed)
    for cid in range(1, len(labels.class_names) + 1):
        positions = np.argwhere(labels.labels == cid)
        n = len(positions)
        if n < 3:
            raise SplitError(
                f"class {cid} ({labels.class_names[cid - 1]!r}) has only {n} "
                f"samples; need at least 3"
            )
        order = rng.permutation(n)
        n_train = min(math.ceil(f_train * n), n - 1)
        n_val = min(math.ceil(f_val * n), n - n_train)
        for rank, pos_idx in enumerate(order):
            yy, xx = positions[pos_idx]
            if rank < n_train:
                roles[yy, xx] = 1
            elif rank < n_train + n_val:
                roles[yy, xx] = 2
            else:
                roles[yy, xx] = 3
    return SplitAssignment(roles=roles, seed=seed, fractions=(f_train, f_val, f_test))


def write_split_csv(split: SplitAssignment, labels: LabelMap, path) -> None:
    """Dump the split as rows of y, x, class_id, assignment (row-major order)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "x", "class_id", "assignment"])
        for yy, xx in np.argwhere(split.roles > 0):
            writer.writerow(
                [yy, xx, int(labels.labels[yy, xx]), ROLES[split.roles[yy, xx] - 1]]
            )


def read_split_csv(path, labels: LabelMap) -> SplitAssignment:
    roles = np.zeros_like(labels.labels, dtype=np.int8)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            yy, xx = int(row["y"]), int(row["x"])
            if not (0 <= yy < labels.height and 0 <= xx < labels.width):
                raise FormatError(f"split row ({yy}, {xx}) outside the label map")
            if row["assignment"] not in ROLES:
                raise FormatError(f"unknown assignment {row['assignment']!r}")
            if int(row["class_id"]) != int(labels.labels[yy, xx]):
                raise FormatError(
                    f"split row ({yy}, {xx}) claims class {row['class_id']}, "
                    f"label map says {int(labels.labels[yy, xx])}"
                )
            roles[yy, xx] = ROLES.index(row["assignment"]) + 1
    return SplitAssignment(roles=roles, seed=-1, fractions=(0.0, 0.0, 0.0))


def build_samples(
    cube: HsiCube,
    labels: LabelMap,
    split: SplitAssignment,
    role: str,
    patch_size: int,
) -> list[tuple[Tensor, int]]:
    """(patch, 0-based class) pairs for every pixel assigned to `role`."""
    if (labels.height, labels.width) != (cube.height, cube.width):
        raise ShapeError(
            f"label map {labels.height}x{labels.width} does not match cube "
            f"{cube.height}x{cube.width}"
        )
    samples = []
    for yy, xx in split.positions(role):
        patch = extract_patch(cube, xx, yy, patch_size)
        samples.append((patch, int(labels.labels[yy, xx]) - 1))
    return samples
