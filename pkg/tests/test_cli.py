from __future__ import annotations

import json

import pytest

from hybridtel.cli import main


def _synth(out, preset="static-p50", config="batteryonly", seed=3, *extra):
    code = main(["synth", "generate", "--preset", preset, "--config", config, "--seed", str(seed), "--out", str(out), *extra])
    assert code == 0
    return out / "log.csv"


def _manifest(out) -> dict:
    return json.loads((out / "manifest.json").read_text())


def test_synth_then_detect_matches_truth(tmp_path):
    log = _synth(tmp_path / "run", "static-p50", "batteryonly", 3, "--spikes", "5")
    assert main(["detect", "--input", str(log), "--auto-penalty", "--out", str(tmp_path / "det")]) == 0
    lines = [json.loads(x) for x in (tmp_path / "det" / "report.jsonl").read_text().splitlines()]
    truth = json.loads((tmp_path / "run" / "truth.json").read_text())
    assert lines[0]["indices"] == truth["injected_anomaly_indices"]
    assert (tmp_path / "det" / "detect.svg").read_text().startswith("<svg")
    manifest = _manifest(tmp_path / "det")
    assert manifest["inputs"][0]["path"] == str(log)
    assert len(manifest["inputs"][0]["sha256"]) == 64


def test_level_shift_found_by_change_points(tmp_path):
    log = _synth(tmp_path / "run", "static-p25", "batteryonly", 1, "--level-shift", "250:0.4")
    assert main(["detect", "--input", str(log), "--penalty", "5", "--out", str(tmp_path / "det")]) == 0
    lines = [json.loads(x) for x in (tmp_path / "det" / "report.jsonl").read_text().splitlines()]
    assert lines[1]["change_points"] == [250]


def test_unknown_flag_exits_2(tmp_path, capsys):
    assert main(["detect", "--bogus", "--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_invalid_input_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("nope,header\n1,2\n")
    assert main(["smooth", "--input", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "telemetry.MalformedHeader" in capsys.readouterr().err
    assert main(["ingest", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 2


def test_rerun_is_byte_identical(tmp_path):
    a = _synth(tmp_path / "a", "towing-3kg", "hybrid", 9, "--spikes", "3")
    b = _synth(tmp_path / "b", "towing-3kg", "hybrid", 9, "--spikes", "3")
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a" / "truth.json").read_bytes() == (tmp_path / "b" / "truth.json").read_bytes()
    for d in ("a", "b"):
        assert main(["smooth", "--input", str(tmp_path / d / "log.csv"), "--window", "50", "--out", str(tmp_path / f"s{d}")]) == 0
    for name in ("smoothed.csv", "smoothed.svg"):
        assert (tmp_path / "sa" / name).read_bytes() == (tmp_path / "sb" / name).read_bytes()


def test_ingest_and_correlate(tmp_path):
    log = _synth(tmp_path / "run", "drive-noload", "batteryonly", 0)
    assert main(["ingest", "--input", str(log), "--out", str(tmp_path / "ing")]) == 0
    report = json.loads((tmp_path / "ing" / "validation.json").read_text())
    assert report["monotonic"] and report["gaps"] == []
    assert report["n_samples"] == 4950
    assert (tmp_path / "ing" / "log.csv").read_bytes() == log.read_bytes()
    out = tmp_path / "corr"
    assert main(["correlate", "--input", str(log), "--name", "No load (Battery)", "--out", str(out)]) == 0
    lines = (out / "correlation_table.csv").read_text().splitlines()
    assert lines[0] == "Scenario,V-I,V-P,I-P,V-T" and lines[1].startswith("No load (Battery),")
    assert (out / "correlation_table.svg").exists()


def test_classify_train_eval_predict(tmp_path):
    out = tmp_path / "train"
    assert main(["classify", "train", "--model", "gb", "--synth-samples", "200", "--out", str(out)]) == 0
    assert (out / "metrics.csv").read_text().splitlines()[0] == "Classifier,Metric,25%,50%,75%,100%"
    runs = [_synth(tmp_path / f"r{k}", f"static-p{k}", "hybrid", 1) for k in (25, 100)]
    args = ["--model-file", str(out / "model.json")]
    for r in runs:
        args += ["--input", str(r)]
    assert main(["classify", "eval", *args, "--out", str(tmp_path / "eval")]) == 0
    assert main(["classify", "predict", *args, "--out", str(tmp_path / "pred")]) == 0
    rows = (tmp_path / "pred" / "predictions.csv").read_text().splitlines()
    assert rows[0] == "source,t_ms,class,p25,p50,p75,p100"
    assert len(rows) == 1 + 2 * 495


def test_classify_grid(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"n_estimators": [3], "max_depth": [2, 4]}))
    out = tmp_path / "out"
    assert main(["classify", "train", "--model", "rf", "--grid", str(grid), "--folds", "3",
                 "--synth-samples", "120", "--out", str(out)]) == 0
    assert len((out / "cv.csv").read_text().splitlines()) == 3


def test_classify_rejects_dynamic_runs(tmp_path):
    log = _synth(tmp_path / "run", "outdoor", "hybrid", 0)
    assert main(["classify", "train", "--input", str(log), "--out", str(tmp_path / "o")]) == 2


def test_forecast_round_trip(tmp_path):
    log = _synth(tmp_path / "run", "static-p75", "hybrid", 2)
    out = tmp_path / "fc"
    assert main(["forecast", "train", "--input", str(log), "--seq-len", "10", "--epochs", "3", "--out", str(out)]) == 0
    model = out / "model.json"
    assert main(["forecast", "eval", "--input", str(log), "--model-file", str(model), "--out", str(tmp_path / "ev")]) == 0
    assert (tmp_path / "ev" / "metrics.csv").read_text().splitlines()[0] == "Scenario,units,MAE,RMSE"
    assert (tmp_path / "ev" / "forecast.svg").exists()
    assert main(["forecast", "predict", "--input", str(log), "--model-file", str(model), "--steps", "5",
                 "--out", str(tmp_path / "pr")]) == 0
    assert len((tmp_path / "pr" / "forecast.csv").read_text().splitlines()) == 6


def test_report_bundle(tmp_path):
    _synth(tmp_path / "run", "static-p25", "hybrid", 0)
    out = tmp_path / "rep"
    assert main(["report", str(tmp_path / "run"), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["correlation_table.csv", "log_detect.jsonl", "log_smoothed.csv", "log_smoothed.svg", "manifest.json"]
    assert _manifest(out)["command"][:2] == ["hybridtel", "report"]
