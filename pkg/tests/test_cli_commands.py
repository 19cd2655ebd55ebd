import copy
import json
import logging

import numpy as np
import pytest

from segmenter import DEFAULT_CONFIG, main
from utils.grid import LabelField, Mask
from utils.initialization import kmeans_init
from utils.potts import SmoothnessParams
from utils.tensor_io import read_beta, read_grid, write_grid
from utils.vb import PriorHyperparams, VbConfig, fit

SMALL_SPEC = {"height": 24, "width": 24, "classes": 3, "means": [0.05, 0.5, 0.9], "stddevs": 0.05}


@pytest.fixture
def config():
    return copy.deepcopy(DEFAULT_CONFIG)


@pytest.fixture(autouse=True)
def reset_root_logger():
    yield
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)


@pytest.fixture
def phantom_dir(tmp_path, config):
    out = tmp_path / "phantom"
    assert main(["phantom", "--out", str(out), "--seed", "3", "--height", "24", "--width", "24"], config) == 0
    return out


def test_phantom_is_deterministic(tmp_path, config):
    for name in ("a", "b"):
        assert main(["phantom", "--out", str(tmp_path / name), "--seed", "5"], config) == 0
    for file in ("image.gt", "labels.gt", "mask.gt"):
        assert (tmp_path / "a" / file).read_bytes() == (tmp_path / "b" / file).read_bytes()


def test_phantom_requires_out(config):
    assert main(["phantom", "--seed", "1"], config) == 2


def test_single_class_phantom(tmp_path, config):
    assert main(["phantom", "--out", str(tmp_path), "--seed", "0", "--classes", "1"], config) == 0
    labels = read_grid(tmp_path / "labels.gt")
    assert labels.n_classes == 1
    assert np.all(labels.labels == 0)
    assert read_grid(tmp_path / "mask.gt").values.all()


def test_fit_beta_on_checkerboard(tmp_path, config, capsys):
    rows, cols = np.indices((8, 8))
    path = write_grid(tmp_path / "checker.gt", LabelField((rows + cols) % 2, 2))
    out = tmp_path / "beta.json"

    assert main(["fit-beta", "--labels", str(path), "--out", str(out)], config) == 0
    np.testing.assert_array_equal(read_beta(out).params.beta, [0.0, 0.0])
    assert "beta = " in capsys.readouterr().out


def test_fit_beta_rejects_mismatched_class_counts(tmp_path, config, capsys):
    two = write_grid(tmp_path / "two.gt", LabelField(np.zeros((4, 4), dtype=int), 2))
    three = write_grid(tmp_path / "three.gt", LabelField(np.zeros((4, 4), dtype=int), 3))

    code = main(["fit-beta", "--labels", str(two), str(three), "--out", str(tmp_path / "beta.json")], config)
    assert code == 1
    err = capsys.readouterr().err
    assert "K=2" in err and "K=3" in err
    assert not (tmp_path / "beta.json").exists()


def test_semi_without_labels_is_a_usage_error(tmp_path, config, phantom_dir):
    argv = ["segment", "--image", str(phantom_dir / "image.gt"), "--out", str(tmp_path / "seg"), "--semi"]
    assert main(argv, config) == 2


def test_beta_options_are_mutually_exclusive(tmp_path, config, phantom_dir):
    argv = [
        "segment",
        "--image", str(phantom_dir / "image.gt"),
        "--out", str(tmp_path / "seg"),
        "--beta", str(tmp_path / "beta.json"),
        "--beta-fixed", "0.1",
    ]
    assert main(argv, config) == 2


def test_segment_with_zero_beta_matches_library(tmp_path, config, phantom_dir):
    out = tmp_path / "seg"
    argv = [
        "segment",
        "--image", str(phantom_dir / "image.gt"),
        "--out", str(out),
        "--classes", "4",
        "--seed", "2",
        "--beta-fixed", "0",
    ]
    assert main(argv, config) == 0

    image = read_grid(phantom_dir / "image.gt")
    rho = kmeans_init(image, 4, 2, 100, 1e-8).responsibilities
    expected = fit(image, PriorHyperparams.weak(image, 4), SmoothnessParams.zeros(4), rho, config=VbConfig())

    np.testing.assert_allclose(read_grid(out / "resp.gt").values, expected.responsibilities.values, rtol=0, atol=1e-12)
    assert (out / "posterior.json").exists()
    assert (out / "seg.pgm").read_bytes().startswith(b"P5\n24 24\n255\n")


def test_segment_respects_iteration_cap(tmp_path, config, phantom_dir, capsys):
    argv = [
        "segment",
        "--image", str(phantom_dir / "image.gt"),
        "--out", str(tmp_path / "seg"),
        "--max-iter", "1",
        "--tol", "1e-300",
    ]
    assert main(argv, config) == 0
    assert "iterations = 1," in capsys.readouterr().out


@pytest.mark.parametrize("flag, value", [("--max-iter", "0"), ("--max-iter", "three"), ("--tol", "0"), ("--tol", "-1e-5")])
def test_bad_iteration_settings_are_usage_errors(tmp_path, config, phantom_dir, capsys, flag, value):
    argv = ["segment", "--image", str(phantom_dir / "image.gt"), "--out", str(tmp_path / "seg"), flag, value]
    assert main(argv, config) == 2
    assert flag in capsys.readouterr().err
    assert not (tmp_path / "seg").exists()


def test_semi_supervised_segment_keeps_given_labels(tmp_path, config, phantom_dir):
    truth = read_grid(phantom_dir / "labels.gt").labels.reshape(-1)
    records = [{"index": int(np.flatnonzero(truth == k)[0]), "class": k} for k in range(4)]
    labels_path = tmp_path / "given.json"
    labels_path.write_text(json.dumps(records), encoding="utf-8")

    out = tmp_path / "seg"
    argv = [
        "segment",
        "--image", str(phantom_dir / "image.gt"),
        "--out", str(out),
        "--semi",
        "--labels-given", str(labels_path),
    ]
    assert main(argv, config) == 0
    segmentation = read_grid(out / "labels.gt").labels.reshape(-1)
    for record in records:
        assert segmentation[record["index"]] == record["class"]


def test_eval_prints_error(tmp_path, config, capsys):
    truth = write_grid(tmp_path / "truth.gt", LabelField(np.array([[0, 0, 1], [1, 1, 0]]), 2))
    mask = write_grid(tmp_path / "mask.gt", Mask.full(2, 3))

    assert main(["eval", "--pred", str(truth), "--truth", str(truth), "--mask", str(mask)], config) == 0
    assert capsys.readouterr().out.strip() == "0.000000"


def test_eval_with_matching_swaps_clusters(tmp_path, config, capsys):
    values = np.array([[0, 0, 1], [1, 1, 0]])
    truth = write_grid(tmp_path / "truth.gt", LabelField(values, 2))
    pred = write_grid(tmp_path / "pred.gt", LabelField(1 - values, 2))
    mask = write_grid(tmp_path / "mask.gt", Mask.full(2, 3))

    assert main(["eval", "--pred", str(pred), "--truth", str(truth), "--mask", str(mask)], config) == 0
    assert capsys.readouterr().out.strip() == "1.000000"

    assert main(["eval", "--pred", str(pred), "--truth", str(truth), "--mask", str(mask), "--match"], config) == 0
    assert capsys.readouterr().out.splitlines() == ["permutation = 1 0", "0.000000"]


def test_eval_rejects_non_grid_file(tmp_path, config, capsys):
    bogus = tmp_path / "bogus.gt"
    bogus.write_bytes(b"hello\n")
    mask = write_grid(tmp_path / "mask.gt", Mask.full(1, 1))

    assert main(["eval", "--pred", str(bogus), "--truth", str(bogus), "--mask", str(mask)], config) == 1
    assert "not a grid tensor file" in capsys.readouterr().err


def test_experiment_invalid_config_reports_pointer(tmp_path, config, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"target": SMALL_SPEC, "methods": ["UGM", "XYZ"]}), encoding="utf-8")

    assert main(["experiment", "--config", str(path), "--out", str(tmp_path / "out")], config) == 2
    assert "/methods/1" in capsys.readouterr().err


def test_experiment_outputs_are_byte_identical(tmp_path, config):
    path = tmp_path / "experiment.json"
    document = {
        "source": SMALL_SPEC,
        "target": SMALL_SPEC,
        "source_count": 2,
        "methods": ["UGM", "SHP", "1NN"],
        "repetitions": 2,
        "seed": 4,
    }
    path.write_text(json.dumps(document), encoding="utf-8")

    for name, jobs in (("a", "1"), ("b", "3")):
        argv = ["experiment", "--config", str(path), "--out", str(tmp_path / name), "--jobs", jobs]
        assert main(argv, config) == 0
    for file in ("results.csv", "summary.csv"):
        assert (tmp_path / "a" / file).read_bytes() == (tmp_path / "b" / file).read_bytes()


def test_help_exits_zero(config, capsys):
    assert main(["--help"], config) == 0
    assert "fit-beta" in capsys.readouterr().out


def test_unknown_flag_exits_two(config):
    assert main(["phantom", "--out", "x", "--seed", "1", "--bogus"], config) == 2


def test_experiment_writes_rasters_by_default(tmp_path, config):
    path = tmp_path / "experiment.json"
    document = {"source": SMALL_SPEC, "target": SMALL_SPEC, "source_count": 1, "methods": ["UGM", "1NN"], "repetitions": 2}
    path.write_text(json.dumps(document), encoding="utf-8")

    out = tmp_path / "out"
    assert main(["experiment", "--config", str(path), "--out", str(out), "--jobs", "1"], config) == 0
    names = sorted(p.name for p in (out / "rasters").iterdir())
    assert names == ["1NN_rep00.pgm", "1NN_rep01.pgm", "UGM_rep00.pgm", "UGM_rep01.pgm"]
    assert (out / "rasters" / "UGM_rep00.pgm").read_bytes().startswith(b"P5\n24 24\n255\n")


def test_experiment_rasters_can_be_disabled(tmp_path, config):
    path = tmp_path / "experiment.json"
    document = {"target": SMALL_SPEC, "methods": ["UGM"], "repetitions": 1, "export_rasters": False}
    path.write_text(json.dumps(document), encoding="utf-8")

    out = tmp_path / "out"
    assert main(["experiment", "--config", str(path), "--out", str(out), "--jobs", "1"], config) == 0
    assert (out / "results.csv").exists()
    assert not (out / "rasters").exists()


def test_experiment_fixed_beta_above_cap_is_rejected(tmp_path, config, capsys):
    path = tmp_path / "experiment.json"
    document = {"target": SMALL_SPEC, "methods": ["UHP"], "beta": {"mode": "fixed", "value": 12.0}}
    path.write_text(json.dumps(document), encoding="utf-8")

    assert main(["experiment", "--config", str(path), "--out", str(tmp_path / "out")], config) == 2
    assert "/beta/value" in capsys.readouterr().err


def test_segment_reports_non_integer_label_index(tmp_path, config, phantom_dir, capsys):
    labels_path = tmp_path / "given.json"
    labels_path.write_text(json.dumps([{"index": "abc", "class": 0}]), encoding="utf-8")
    argv = [
        "segment",
        "--image", str(phantom_dir / "image.gt"),
        "--out", str(tmp_path / "seg"),
        "--semi",
        "--labels-given", str(labels_path),
    ]
    assert main(argv, config) == 1
    assert "'index'" in capsys.readouterr().err
