"""MAT scene loading, variable resolution and the conversion itself.

The AVIRIS benchmark scenes circulate as MAT files holding one 3-D radiance
array (cube) and one 2-D integer array (ground truth). Variable names follow
community conventions (e.g. indian_pines_corrected / indian_pines_gt); this
tool tries those first, falls back to the single eligible array in the file,
and otherwise fails loudly listing what it found. Explicit --cube-var /
--gt-var flags always win.
"""

from dataclasses import dataclass

import numpy as np
from scipy.io import loadmat

from .formats import read_hsic, read_hsil, write_hsic, write_hsil

U16_MAX = 65535

KNOWN_CUBE_VARS = [
    "indian_pines_corrected",
    "salinas_corrected",
    "paviaU",
    "pavia",
    "indian_pines",
    "salinas",
]
KNOWN_GT_VARS = [
    "indian_pines_gt",
    "salinas_gt",
    "paviaU_gt",
    "pavia_gt",
]


class ConversionError(ValueError):
    pass


@dataclass
class ConversionJob:
    cube_path: str
    gt_path: str
    out_cube: str
    out_labels: str
    cube_var: str | None = None
    gt_var: str | None = None
    expect_bands: int | None = None
    class_names: list[str] | None = None


def _data_vars(mat: dict) -> dict:
    return {k: v for k, v in mat.items() if not k.startswith("__")}


def _resolve(mat: dict, explicit: str | None, known: list[str], want_ndim: int, kind: str):
    """Pick the MAT variable holding the array; fail loudly when ambiguous."""
    data = _data_vars(mat)
    if explicit is not None:
        if explicit not in data:
            raise ConversionError(
                f"{kind} variable {explicit!r} not in MAT file; available: {sorted(data)}"
            )
        return explicit, np.asarray(data[explicit])
    for name in known:
        if name in data:
            return name, np.asarray(data[name])
    eligible = {
        k: np.asarray(v)
        for k, v in data.items()
        if np.asarray(v).ndim == want_ndim and np.issubdtype(np.asarray(v).dtype, np.number)
    }
    if len(eligible) == 1:
        name, arr = next(iter(eligible.items()))
        return name, arr
    raise ConversionError(
        f"cannot pick the {kind} variable automatically; available: {sorted(data)}; "
        f"pass an explicit variable name"
    )


def load_cube_mat(path, var: str | None = None):
    name, arr = _resolve(loadmat(path), var, KNOWN_CUBE_VARS, 3, "cube")
    if arr.ndim != 3:
        raise ConversionError(f"cube variable {name!r} is {arr.ndim}-D, expected 3-D")
    return name, arr.astype(np.float64)


def load_gt_mat(path, var: str | None = None):
    name, arr = _resolve(loadmat(path), var, KNOWN_GT_VARS, 2, "ground truth")
    if arr.ndim != 2:
        raise ConversionError(f"ground-truth variable {name!r} is {arr.ndim}-D, expected 2-D")
    if not np.issubdtype(arr.dtype, np.integer) and not np.all(arr == np.round(arr)):
        raise ConversionError(f"ground-truth variable {name!r} holds non-integer values")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() > U16_MAX:
        raise ConversionError(
            f"label values span [{arr.min()}, {arr.max()}]; must fit in u16"
        )
    return name, arr.astype(np.uint16)


def convert(job: ConversionJob) -> dict:
    """Run the conversion; returns a small report dict."""
    cube_name, cube = load_cube_mat(job.cube_path, job.cube_var)
    gt_name, labels = load_gt_mat(job.gt_path, job.gt_var)

    height, width, bands = cube.shape
    if labels.shape != (height, width):
        raise ConversionError(
            f"label grid {labels.shape} does not match cube {height}x{width}"
        )
    if job.expect_bands is not None and bands != job.expect_bands:
        raise ConversionError(f"cube has {bands} bands, expected {job.expect_bands}")

    k = int(labels.max())
    names = job.class_names or [f"class_{i}" for i in range(1, k + 1)]
    if len(names) < k:
        raise ConversionError(f"{len(names)} class names for {k} classes")
    names = names[:k] if k else []

    write_hsic(job.out_cube, cube)
    write_hsil(job.out_labels, labels, names)
    histogram = {i: int(np.sum(labels == i)) for i in range(1, k + 1)}
    return {
        "cube_var": cube_name,
        "gt_var": gt_name,
        "height": height,
        "width": width,
        "bands": bands,
        "classes": k,
        "histogram": histogram,
    }


def verify(hsic_path, hsil_path) -> dict:
    """Validate a converted pair; raises FormatFailure/ConversionError if bad."""
    cube = read_hsic(hsic_path)
    labels, names = read_hsil(hsil_path)
    if labels.shape != cube.shape[:2]:
        raise ConversionError(
            f"label grid {labels.shape} does not match cube {cube.shape[:2]}"
        )
    histogram = {i: int(np.sum(labels == i)) for i in range(1, len(names) + 1)}
    return {
        "height": cube.shape[0],
        "width": cube.shape[1],
        "bands": cube.shape[2],
        "classes": len(names),
        "class_names": names,
        "histogram": histogram,
    }
