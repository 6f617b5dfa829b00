import numpy as np
import pytest
from scipy.io import savemat

from hsiconvert.convert import (
    ConversionError,
    ConversionJob,
    convert,
    load_cube_mat,
    load_gt_mat,
    verify,
)
from hsiconvert.formats import read_hsic, read_hsil


def make_mats(tmp_path, shape=(6, 5, 8), k=3, cube_var="indian_pines_corrected",
              gt_var="indian_pines_gt", seed=0):
    rng = np.random.default_rng(seed)
    cube = (rng.random(shape) * 8000).astype(np.float64)
    labels = rng.integers(0, k + 1, shape[:2]).astype(np.int32)
    labels[0, 0] = k  # every class count stable
    cube_path = tmp_path / "cube.mat"
    gt_path = tmp_path / "gt.mat"
    savemat(cube_path, {cube_var: cube})
    savemat(gt_path, {gt_var: labels})
    return cube_path, gt_path, cube, labels


def job_for(tmp_path, cube_path, gt_path, **kwargs):
    return ConversionJob(
        cube_path=str(cube_path),
        gt_path=str(gt_path),
        out_cube=str(tmp_path / "out.hsic"),
        out_labels=str(tmp_path / "out.hsil"),
        **kwargs,
    )


def test_round_trip_lossless_up_to_f32(tmp_path):
    cube_path, gt_path, cube, labels = make_mats(tmp_path)
    job = job_for(tmp_path, cube_path, gt_path)
    report = convert(job)
    assert report["bands"] == 8
    got_cube = read_hsic(job.out_cube)
    np.testing.assert_array_equal(got_cube, cube.astype(np.float32))
    got_labels, names = read_hsil(job.out_labels)
    np.testing.assert_array_equal(got_labels, labels.astype(np.uint16))
    assert names == ["class_1", "class_2", "class_3"]


def test_label_histogram_preserved(tmp_path):
    cube_path, gt_path, _, labels = make_mats(tmp_path, k=4)
    job = job_for(tmp_path, cube_path, gt_path)
    report = convert(job)
    got_labels, _ = read_hsil(job.out_labels)
    for cid in range(1, 5):
        assert report["histogram"][cid] == np.sum(labels == cid)
        assert np.sum(got_labels == cid) == np.sum(labels == cid)


def test_indian_pines_band_count(tmp_path):
    cube_path, gt_path, _, _ = make_mats(tmp_path, shape=(4, 4, 200))
    report = convert(job_for(tmp_path, cube_path, gt_path, expect_bands=200))
    assert report["bands"] == 200


def test_salinas_band_count(tmp_path):
    cube_path, gt_path, _, _ = make_mats(
        tmp_path, shape=(4, 4, 204), cube_var="salinas_corrected", gt_var="salinas_gt"
    )
    report = convert(job_for(tmp_path, cube_path, gt_path, expect_bands=204))
    assert report["bands"] == 204


def test_expect_bands_mismatch(tmp_path):
    cube_path, gt_path, _, _ = make_mats(tmp_path, shape=(4, 4, 10))
    with pytest.raises(ConversionError, match="expected 204"):
        convert(job_for(tmp_path, cube_path, gt_path, expect_bands=204))


def test_dimension_mismatch(tmp_path):
    cube_path, _, _, _ = make_mats(tmp_path, shape=(6, 5, 8))
    other = tmp_path / "gt2.mat"
    savemat(other, {"indian_pines_gt": np.zeros((4, 4), dtype=np.int32)})
    with pytest.raises(ConversionError, match="does not match"):
        convert(job_for(tmp_path, cube_path, other))


def test_missing_variable_lists_available(tmp_path):
    cube_path, gt_path, _, _ = make_mats(tmp_path)
    with pytest.raises(ConversionError, match="available"):
        convert(job_for(tmp_path, cube_path, gt_path, cube_var="no_such_thing"))


def test_autodetect_single_3d_array(tmp_path):
    rng = np.random.default_rng(1)
    cube_path = tmp_path / "cube.mat"
    savemat(cube_path, {"weird_name": rng.random((3, 3, 5)), "scalar": 4.0})
    name, cube = load_cube_mat(str(cube_path))
    assert name == "weird_name"
    assert cube.shape == (3, 3, 5)


def test_ambiguous_variables_rejected(tmp_path):
    rng = np.random.default_rng(1)
    cube_path = tmp_path / "cube.mat"
    savemat(cube_path, {"a": rng.random((3, 3, 5)), "b": rng.random((2, 2, 4))})
    with pytest.raises(ConversionError, match="automatically"):
        load_cube_mat(str(cube_path))


def test_labels_must_fit_u16(tmp_path):
    gt_path = tmp_path / "gt.mat"
    savemat(gt_path, {"indian_pines_gt": np.array([[0, 70000]], dtype=np.int64)})
    with pytest.raises(ConversionError, match="u16"):
        load_gt_mat(str(gt_path))


def test_non_integer_labels_rejected(tmp_path):
    gt_path = tmp_path / "gt.mat"
    savemat(gt_path, {"indian_pines_gt": np.array([[0.5, 1.0]])})
    with pytest.raises(ConversionError, match="non-integer"):
        load_gt_mat(str(gt_path))


def test_class_names_sidecar(tmp_path):
    cube_path, gt_path, _, _ = make_mats(tmp_path, k=2)
    job = job_for(tmp_path, cube_path, gt_path, class_names=["Corn", "Woods"])
    convert(job)
    _, names = read_hsil(job.out_labels)
    assert names == ["Corn", "Woods"]


def test_too_few_class_names(tmp_path):
    cube_path, gt_path, _, _ = make_mats(tmp_path, k=3)
    with pytest.raises(ConversionError, match="class names"):
        convert(job_for(tmp_path, cube_path, gt_path, class_names=["only_one"]))


def test_verify_accepts_converted_pair(tmp_path):
    cube_path, gt_path, _, labels = make_mats(tmp_path)
    job = job_for(tmp_path, cube_path, gt_path)
    convert(job)
    report = verify(job.out_cube, job.out_labels)
    assert report["bands"] == 8
    assert report["histogram"][1] == np.sum(labels == 1)


def test_verify_rejects_mismatched_dims(tmp_path):
    cube_path, gt_path, _, _ = make_mats(tmp_path)
    job = job_for(tmp_path, cube_path, gt_path)
    convert(job)
    # rewrite the labels with different dimensions
    from hsiconvert.formats import write_hsil

    write_hsil(job.out_labels, np.zeros((2, 2), dtype=np.uint16), [])
    with pytest.raises(ConversionError, match="does not match"):
        verify(job.out_cube, job.out_labels)
