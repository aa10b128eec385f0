import csv
import json

import numpy as np
import pytest

from convkit.cli import main
from convkit.graph import LayerSpec, ModelGraph, load_model, save_model
from convkit.models import build_conv_stack


@pytest.fixture(scope="module")
def model_paths(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("models")
    plan = [8, 8, "pool", 12, 12]
    model = build_conv_stack((8, 8, 3), plan, [10], seed=1)
    save_model(model, tmp / "model.json", tmp / "model.bin")
    return tmp, model


def test_decompose_writes_model_and_report(model_paths, tmp_path):
    tmp, model = model_paths
    rc = main(
        [
            "decompose",
            str(tmp / "model.json"),
            str(tmp_path / "out.json"),
            "--scheme", "dac", "--rank", "2", "--layers", "all-but-first",
            "--report", str(tmp_path / "report.json"),
        ]
    )
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert len(report["layers"]) == 3
    assert report["saved_ratio"] > 0
    out = load_model(tmp_path / "out.json", tmp_path / "out.bin")
    kinds = [s.kind for s in out.layers]
    assert "depthwise" in kinds and "pointwise" in kinds


def test_decompose_full_rank_3x3_increases_macs(model_paths, tmp_path):
    # rank 9 on a 3x3 layer: depthwise keeps the parameter count and the
    # pointwise layer is pure overhead, so the saved ratio goes negative
    tmp, _ = model_paths
    rc = main(
        [
            "decompose",
            str(tmp / "model.json"),
            str(tmp_path / "out.json"),
            "--rank", "full", "--layers", "all-but-first",
            "--report", str(tmp_path / "report.json"),
        ]
    )
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["saved_ratio"] <= 0


def test_decompose_missing_input_exit1(tmp_path, capsys):
    rc = main(["decompose", str(tmp_path / "absent.json"), str(tmp_path / "o.json"), "--rank", "1"])
    assert rc == 1
    assert "absent.json" in capsys.readouterr().err


def test_decompose_bad_rank_exit2(model_paths, tmp_path, capsys):
    tmp, _ = model_paths
    rc = main(
        ["decompose", str(tmp / "model.json"), str(tmp_path / "o.json"), "--rank", "99"]
    )
    assert rc == 2


def test_decompose_nan_weights_exit3(tmp_path):
    w = np.full((2, 1, 1, 1), np.nan, np.float32)
    model = ModelGraph(
        input_shape=(2, 2, 1),
        layers=[LayerSpec("c", "conv2d", {"stride": [1, 1], "padding": [0, 0], "weights": "c.w"})],
        tensors={"c.w": w},
    )
    save_model(model, tmp_path / "m.json", tmp_path / "m.bin")
    rc = main(["decompose", str(tmp_path / "m.json"), str(tmp_path / "o.json"), "--rank", "1"])
    assert rc == 3


def test_match_dac_rank_invokes_rank_matching(model_paths, tmp_path):
    from convkit.decompose import match_rank

    tmp, model = model_paths
    rc = main(
        [
            "decompose",
            str(tmp / "model.json"),
            str(tmp_path / "out.json"),
            "--scheme", "channel", "--match-dac-rank", "2", "--layers", "last:2",
            "--report", str(tmp_path / "report.json"),
        ]
    )
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    convs = [s for s in model.layers if s.kind == "conv2d"][-2:]
    for rec, spec in zip(report["layers"], convs):
        shape = model.tensors[spec.attrs["weights"]].shape
        assert rec["rank"] == match_rank(shape, 2, "channel")


def test_flops_table(model_paths, capsys):
    tmp, model = model_paths
    rc = main(["flops", str(tmp / "model.json")])
    assert rc == 0
    out = capsys.readouterr().out
    # first conv: same-pad 8x8, c=3, 3x3, n=8
    assert f"{8 * 8 * 3 * 9 * 8}" in out
    assert "total" in out


def test_flops_relu_only_zero_macs(tmp_path, capsys):
    model = ModelGraph((2, 2, 1), [LayerSpec("r", "relu")], {})
    save_model(model, tmp_path / "m.json", tmp_path / "m.bin")
    assert main(["flops", str(tmp_path / "m.json")]) == 0
    assert "total               0" in capsys.readouterr().out


def test_verify_identical_pair(model_paths, capsys):
    tmp, _ = model_paths
    rc = main(["verify", str(tmp / "model.json"), str(tmp / "model.json"), "-n", "3"])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["max_abs_diff"] == 0.0
    assert summary["top1_agreement"] == 100.0


def test_verify_decomposed_pair_reproducible(model_paths, tmp_path, capsys):
    tmp, _ = model_paths
    main(
        ["decompose", str(tmp / "model.json"), str(tmp_path / "r1.json"),
         "--rank", "1", "--layers", "all"]
    )
    capsys.readouterr()
    outs = []
    for _ in range(2):
        rc = main(
            ["verify", str(tmp / "model.json"), str(tmp_path / "r1.json"),
             "-n", "4", "--seed", "11"]
        )
        assert rc == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["max_abs_diff"] > 0


def test_sweep_single_layer_monotone(model_paths, tmp_path):
    tmp, _ = model_paths
    rc = main(
        ["sweep", str(tmp / "model.json"), "--ranks", "1,2,3,4,5",
         "--layer", "conv2d_3", "-n", "2", "--out", str(tmp_path / "sweep.csv")]
    )
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert len(rows) == 5
    errs = [float(r["frobenius_error"]) for r in rows]
    assert all(a >= b - 1e-9 for a, b in zip(errs, errs[1:]))


def test_sweep_back_to_front_full_rank_low_divergence(model_paths, tmp_path):
    tmp, _ = model_paths
    rc = main(
        ["sweep", str(tmp / "model.json"), "--ranks", "9", "--layer-counts", "1,2,3",
         "--direction", "back-to-front", "-n", "2", "--out", str(tmp_path / "s.csv")]
    )
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert [r["layers_decomposed"] for r in rows] == ["1", "2", "3"]
    assert all(float(r["divergence"]) <= 1e-3 for r in rows)


def test_sweep_front_to_back_rank1_divergence_grows(model_paths, tmp_path):
    tmp, _ = model_paths
    rc = main(
        ["sweep", str(tmp / "model.json"), "--ranks", "1", "--layer-counts", "1,2,3,4",
         "--direction", "front-to-back", "-n", "4", "--seed", "3",
         "--out", str(tmp_path / "s.csv")]
    )
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    div = [float(r["divergence"]) for r in rows]
    # trend on a fixed seed: errors introduced early accumulate
    assert div == sorted(div)


def test_sweep_requires_layer_or_counts(model_paths, capsys):
    tmp, _ = model_paths
    rc = main(["sweep", str(tmp / "model.json"), "--ranks", "1"])
    assert rc == 2


def test_usage_error_exit1(capsys):
    rc = None
    try:
        main(["decompose"])
    except SystemExit as exc:
        rc = exc.code
    assert rc == 1


def test_report_is_deterministic(model_paths, tmp_path):
    tmp, _ = model_paths
    payloads = []
    for tag in ("x", "y"):
        rc = main(
            ["decompose", str(tmp / "model.json"), str(tmp_path / f"{tag}.json"),
             "--rank", "2", "--report", str(tmp_path / f"{tag}-report.json")]
        )
        assert rc == 0
        payloads.append((tmp_path / f"{tag}-report.json").read_bytes())
    assert payloads[0] == payloads[1]
