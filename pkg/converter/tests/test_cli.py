import numpy as np
from scipy.io import savemat

from hsiconvert.cli import main


def write_scene(tmp_path, bands=8, k=2):
    rng = np.random.default_rng(3)
    cube_path = tmp_path / "scene.mat"
    gt_path = tmp_path / "scene_gt.mat"
    savemat(cube_path, {"indian_pines_corrected": rng.random((5, 4, bands))})
    labels = rng.integers(0, k + 1, (5, 4)).astype(np.int32)
    labels[0, 0] = k
    savemat(gt_path, {"indian_pines_gt": labels})
    return cube_path, gt_path


def convert_args(tmp_path, cube_path, gt_path, extra=()):
    return [
        "convert", "--cube", str(cube_path), "--gt", str(gt_path),
        "--out-cube", str(tmp_path / "o.hsic"),
        "--out-labels", str(tmp_path / "o.hsil"),
        *extra,
    ]


def test_convert_then_verify(tmp_path, capsys):
    cube_path, gt_path = write_scene(tmp_path)
    assert main(convert_args(tmp_path, cube_path, gt_path)) == 0
    assert main(["verify", str(tmp_path / "o.hsic"), str(tmp_path / "o.hsil")]) == 0
    out = capsys.readouterr().out
    assert "8 bands" in out and "ok" in out


def test_convert_expect_bands_failure(tmp_path, capsys):
    cube_path, gt_path = write_scene(tmp_path, bands=8)
    code = main(convert_args(tmp_path, cube_path, gt_path, ["--expect-bands", "200"]))
    assert code == 1
    assert "expected 200" in capsys.readouterr().err


def test_convert_missing_input_exits_2(tmp_path, capsys):
    code = main([
        "convert", "--cube", str(tmp_path / "missing.mat"), "--gt", str(tmp_path / "x.mat"),
        "--out-cube", str(tmp_path / "o.hsic"), "--out-labels", str(tmp_path / "o.hsil"),
    ])
    assert code == 2
    assert "missing.mat" in capsys.readouterr().err


def test_verify_truncated_exits_1_with_offset(tmp_path, capsys):
    cube_path, gt_path = write_scene(tmp_path)
    assert main(convert_args(tmp_path, cube_path, gt_path)) == 0
    hsic = tmp_path / "o.hsic"
    hsic.write_bytes(hsic.read_bytes()[:-10])
    assert main(["verify", str(hsic), str(tmp_path / "o.hsil")]) == 1
    assert "byte offset" in capsys.readouterr().err


def test_verify_dimension_mismatch_exits_1(tmp_path):
    cube_a, gt_a = write_scene(tmp_path)
    sub = tmp_path / "b"
    sub.mkdir()
    savemat(sub / "scene.mat", {"indian_pines_corrected": np.zeros((2, 2, 8))})
    savemat(sub / "scene_gt.mat", {"indian_pines_gt": np.zeros((2, 2), dtype=np.int32)})
    assert main(convert_args(tmp_path, cube_a, gt_a)) == 0
    assert main([
        "convert", "--cube", str(sub / "scene.mat"), "--gt", str(sub / "scene_gt.mat"),
        "--out-cube", str(sub / "o.hsic"), "--out-labels", str(sub / "o.hsil"),
    ]) == 0
    assert main(["verify", str(tmp_path / "o.hsic"), str(sub / "o.hsil")]) == 1


def test_class_names_file(tmp_path, capsys):
    cube_path, gt_path = write_scene(tmp_path, k=2)
    names = tmp_path / "names.txt"
    names.write_text("Corn\nWoods\n")
    assert main(convert_args(tmp_path, cube_path, gt_path,
                             ["--class-names", str(names)])) == 0
    assert main(["verify", str(tmp_path / "o.hsic"), str(tmp_path / "o.hsil")]) == 0
    assert "Corn" in capsys.readouterr().out
