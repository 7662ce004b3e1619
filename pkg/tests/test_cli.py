import numpy as np
import pytest

from quaddet.cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from quaddet.data import parse_annotations
from quaddet.postprocess import Detection, parse_detections, write_detections
from quaddet.geometry import rotated_rectangle
from quaddet.data import DOTA_CLASSES
from quaddet.raster import read_pnm, write_pnm

TOY = ["--iterations", "10", "--train-scenes", "3", "--val-scenes", "3", "--width", "8"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def dataset(tmp_path):
    labels = tmp_path / "labels"
    labels.mkdir()
    (labels / "img.txt").write_text("imagesource:x\n100 100 140 100 140 130 100 130 plane 0\n"
                                    "1000 500 1040 500 1040 530 1000 530 ship 0\n")
    images = tmp_path / "images"
    images.mkdir()
    write_pnm(images / "img.pgm", (np.arange(1500 * 1200) % 251).astype(np.uint8).reshape(1200, 1500))
    return tmp_path


def test_usage_errors(capsys):
    assert run(capsys)[0] == EXIT_USAGE
    assert run(capsys, "bogus")[0] == EXIT_USAGE
    assert run(capsys, "nms", "--dets", "x")[0] == EXIT_USAGE


def test_split_and_remap(capsys, dataset):
    out = dataset / "patches"
    code, text, _ = run(capsys, "split", "--labels", str(dataset / "labels"), "--images", str(dataset / "images"),
                        "--out", str(out), "--manifest", str(dataset / "m.txt"))
    assert code == EXIT_OK
    assert text.splitlines()[1:] == ["image_id,patches", "img,4"]
    assert read_pnm(out / "img__476__176.pgm").shape == (1024, 1024)
    first = parse_annotations((out / "img__0__0.txt").read_text())
    assert len(first) == 2            # both centroids lie inside the first tile
    # the same object detected in two overlapping patches collapses to one
    q = rotated_rectangle(1020, 515, 40, 30, 0)
    dets = [Detection(q.translate(-0, -0), 6, 0.9, 1.0, 0.9, "img__0__0"),
            Detection(q.translate(-476, -176), 6, 0.8, 1.0, 0.8, "img__476__176")]
    (dataset / "d.txt").write_text(write_detections(dets, DOTA_CLASSES))
    code, text, _ = run(capsys, "remap", "--manifest", str(dataset / "m.txt"), "--dets", str(dataset / "d.txt"),
                        "--out", str(dataset / "merged.txt"))
    assert code == EXIT_OK and text.splitlines()[-1] == "2,1"
    (merged,) = parse_detections((dataset / "merged.txt").read_text(), DOTA_CLASSES)
    assert merged.image_id == "img" and merged.quad == q


def test_eval_nms_heatmap(capsys, dataset, tmp_path):
    gt = dataset / "labels"
    q = parse_annotations((gt / "img.txt").read_text()).objects[0].quad
    dets = [Detection(q, 0, 0.9, 0.81, 0.0, "img"), Detection(q.translate(1, 0), 0, 0.6, 1.0, 0.0, "img")]
    (tmp_path / "d.txt").write_text(write_detections(dets, DOTA_CLASSES))
    code, text, _ = run(capsys, "nms", "--dets", str(tmp_path / "d.txt"), "--out", str(tmp_path / "k.txt"),
                        "--rescore")
    assert code == EXIT_OK and text.splitlines()[-1] == "2,1"
    code, text, _ = run(capsys, "eval", "--dets", str(tmp_path / "k.txt"), "--gt", str(gt),
                        "--heatmap", str(tmp_path / "hm"))
    lines = text.splitlines()
    assert code == EXIT_OK and lines[:2] == ["# eval iou=0.5", "class,ap"]
    assert "plane,1.000000" in lines and lines[-1] == "mAP,0.500000"
    assert (tmp_path / "hm" / "heatmap_plane.png").exists()
    code, text, _ = run(capsys, "heatmap", "--dets", str(tmp_path / "k.txt"), "--gt", str(gt),
                        "--out", str(tmp_path / "hm2"))
    assert code == EXIT_OK and text.splitlines()[-1] == "all,1"


def test_data_and_io_errors(capsys, tmp_path):
    (tmp_path / "bad.txt").write_text("img plane 0.5 1 1 0 0 1 0 1 1\n")
    assert run(capsys, "nms", "--dets", str(tmp_path / "bad.txt"), "--out", str(tmp_path / "o"))[0] == EXIT_DATA
    assert run(capsys, "nms", "--dets", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "o"))[0] == EXIT_IO
    code, _, err = run(capsys, "centerness-render", "--quad", *"0 0 1 1 2 2 3 3".split(), "--out",
                       str(tmp_path / "c.pgm"))
    assert code == EXIT_DATA and "error" in err


def test_centerness_render(capsys, tmp_path):
    code, text, _ = run(capsys, "centerness-render", "--quad", *"0 0 20 0 20 10 0 10".split(),
                        "--out", str(tmp_path / "c.pgm"))
    assert code == EXIT_OK
    assert text.splitlines()[-1].startswith("10,20,")
    assert read_pnm(tmp_path / "c.pgm").shape == (10, 20)
    assert (tmp_path / "c.png").exists()


def test_toytrain_deterministic(capsys, tmp_path):
    code, a, _ = run(capsys, "toytrain", *TOY, "--seed", "3", "--out", str(tmp_path / "r"),
                     "--checkpoint", str(tmp_path / "m.bin"))
    assert code == EXIT_OK
    assert a.splitlines()[0] == "# toytrain seed=3"
    assert (tmp_path / "r" / "comparison.csv").exists() and (tmp_path / "r" / "comparison_map.png").exists()
    assert (tmp_path / "m.bin").exists()
    from quaddet.toy.experiments import clear_cache
    clear_cache()
    _, b, _ = run(capsys, "toytrain", *TOY, "--seed", "3")
    assert a == b


def test_toytrain_usage(capsys):
    assert run(capsys, "toytrain", *TOY, "--modes", "radial")[0] == EXIT_USAGE
    assert run(capsys, "toytrain", *TOY, "--n-seeds", "2", "--checkpoint", "x")[0] == EXIT_USAGE


def test_capacity_sweep(capsys, tmp_path):
    code, text, _ = run(capsys, "capacity-sweep", *TOY, "--depths", "1..2", "--out", str(tmp_path))
    assert code == EXIT_OK
    rows = [l for l in text.splitlines() if not l.startswith("#")]
    assert rows[0] == "depth,params,map,seed" and len(rows) == 3
    assert (tmp_path / "capacity.png").exists()
