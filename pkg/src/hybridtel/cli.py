"""Command-line entry point: ``hybridtel <command> ...``.

Every command writes into ``--out DIR`` together with a ``manifest.json``.
Exit status is 0 on success, 2 for invalid input, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import detect as det
from . import learn, sigproc, synth, tcn
from .errors import HybridTelError, InputError
from .metrics import classification_report, classification_table_csv
from .svg import LinePlot, heat_table
from .telemetry import ScenarioMeta, channel, parse_log, parse_meta, validate_series, write_log, write_meta

log = logging.getLogger("hybridtel")


# -- helpers ----------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(out: Path, name: str, text: str | bytes) -> Path:
    path = out / name
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text, encoding="utf-8")
    return path


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _meta_path(log_path: Path) -> Path:
    return log_path.with_suffix(".meta")


def _load(path: str | Path) -> tuple[list, Optional[ScenarioMeta]]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    records = parse_log(path.read_bytes())
    meta_file = _meta_path(path)
    meta = parse_meta(meta_file.read_text(encoding="utf-8")) if meta_file.exists() else None
    return records, meta


def _load_series(path: str, name: str) -> tuple[np.ndarray, np.ndarray]:
    records, _ = _load(path)
    if not records:
        raise InputError(f"{path} holds no records")
    return channel(records, "t_ms"), channel(records, name)


def _manifest(out: Path, argv: Sequence[str], args: argparse.Namespace, started: str) -> None:
    inputs = []
    for attr in ("input", "model_file", "grid", "meta"):
        value = getattr(args, attr, None)
        for p in value if isinstance(value, list) else [value]:
            if p and Path(p).is_file():
                inputs.append({"path": str(p), "sha256": _sha256(Path(p))})
    doc = {
        "command": list(argv),
        "seed": getattr(args, "seed", None),
        "inputs": inputs,
        "tool": "hybridtel",
        "version": __version__,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    _write(out, "manifest.json", _dump_json(doc))


# -- commands -----------------------------------------------------------------------

def cmd_ingest(args) -> None:
    records, meta = _load(args.input)
    if args.meta:
        meta = parse_meta(Path(args.meta).read_text(encoding="utf-8"))
    meta = meta or ScenarioMeta(id=Path(args.input).stem, power_config="Hybrid", throttle="Dynamic", duration_s=1.0)
    report = validate_series(records, meta)
    _write(args.out, "validation.json", _dump_json({
        "n_samples": report.n_samples,
        "observed_rate_hz": report.observed_rate_hz,
        "gaps": [list(g) for g in report.gaps],
        "monotonic": report.monotonic,
        "nominal_rate_hz": meta.nominal_rate_hz,
    }))
    _write(args.out, "log.csv", write_log(records))
    _write(args.out, "log.meta", write_meta(meta))


def cmd_smooth(args) -> None:
    t, x = _load_series(args.input, args.channel)
    sm = sigproc.sma(x, args.window)
    _write(args.out, "smoothed.csv", sigproc.smoothed_csv(t.astype(int), x, sm))
    plot = LinePlot(f"{args.channel} with SMA (window {args.window})", "time [s]", args.channel)
    plot.line("raw", t / 1000.0, x, "#9ecae1")
    plot.line(f"SMA {args.window}", t[sm.start_index :] / 1000.0, sm.values, "#08519c")
    _write(args.out, "smoothed.svg", plot.render())


def cmd_correlate(args) -> None:
    names = args.name or [Path(p).stem for p in args.input]
    if len(names) != len(args.input):
        raise InputError("--name must be given once per --input")
    rows = []
    for name, path in zip(names, args.input):
        records, _ = _load(path)
        rows.append((name, sigproc.correlation_matrix(records)))
    _write(args.out, "correlation_table.csv", sigproc.correlation_table_csv(rows))
    for name, cm in rows:
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in name)
        _write(args.out, f"correlation_{safe}.csv", sigproc.correlation_matrix_csv(cm))
    values = np.array([list(cm.pairs().values()) for _, cm in rows])
    _write(args.out, "correlation_table.svg", heat_table("Correlation (V-I, V-P, I-P, V-T)", names, ["V-I", "V-P", "I-P", "V-T"], values))


def cmd_detect(args) -> None:
    t, x = _load_series(args.input, args.channel)
    offset = 0
    if args.on_smoothed:
        sm = sigproc.sma(x, args.on_smoothed)
        x, t, offset = sm.values, t[sm.start_index :], sm.start_index
    anomalies = det.detect_anomalies(x, args.zscore_threshold)
    penalty = det.default_penalty(x) if args.penalty is None else args.penalty
    cps = det.pelt(x, penalty)
    lines = [
        {"type": "anomalies", "channel": args.channel, "index_offset": offset, "indices": anomalies.indices,
         "scores": anomalies.scores, "threshold": anomalies.threshold, "spike_threshold_v": anomalies.spike_threshold_v,
         "median": anomalies.median, "mad": anomalies.mad, "degenerate": anomalies.degenerate},
        {"type": "change_points", "channel": args.channel, "index_offset": offset, "change_points": cps.change_points,
         "penalty": cps.penalty, "auto_penalty": args.penalty is None, "total_cost": cps.total_cost,
         "segment_means": cps.segment_means},
    ]
    _write(args.out, "report.jsonl", "".join(json.dumps(line, sort_keys=True) + "\n" for line in lines))
    ts = t / 1000.0
    plot = LinePlot(
        f"{args.channel}: {len(anomalies.indices)} anomalies, {len(cps.change_points)} change points", "time [s]", args.channel
    )
    plot.line("signal", ts, x, "#4a6fa5")
    plot.points("anomalies", ts[anomalies.indices], x[anomalies.indices])
    for cp in cps.change_points:
        plot.vline(ts[cp])
    for (a, b), mean in zip(cps.segments, cps.segment_means):
        plot.hsegment(ts[a], ts[b - 1], mean)
    _write(args.out, "detect.svg", plot.render())


def _load_training(paths: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    runs = []
    for p in paths:
        records, meta = _load(p)
        if meta is None:
            raise InputError(f"{p}: classification needs a metadata sidecar {_meta_path(Path(p))}")
        runs.append((records, meta))
    return learn.build_dataset(runs)


def cmd_classify(args) -> None:
    if args.action == "train":
        if args.input:
            X, y = _load_training(args.input)
        else:
            X, y = learn.build_dataset(synth.throttle_runs(args.synth_samples, args.synth_jitter, args.seed))
        defaults = {"rf": learn.RFParams(seed=args.seed), "gb": learn.GBParams(seed=args.seed)}
        params = defaults[args.model]
        if args.grid:
            grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
            best, table = learn.grid_search(X, y, grid, args.folds, args.model, args.seed)
            _write(args.out, "cv.csv", learn.cv_table_csv(table))
            params = learn._make_params(args.model, {"seed": args.seed, **best})
        tr, te = learn.stratified_split(y, 0.2, args.seed)
        model = learn.train(args.model, X[tr], y[tr], params, n_classes=4)
        rep = classification_report(y[te], learn.predict_classes(model, X[te]))
        _write(args.out, "model.json", learn.model_to_json(model))
        _write(args.out, "metrics.csv", classification_table_csv([(args.model.upper(), rep)]))
        _write(args.out, "confusion.csv", _confusion_csv(rep))
        _write(args.out, "importance.csv", "feature,importance\n" + "".join(
            f"{f},{v:.6f}\n" for f, v in zip(learn.FEATURES, learn.feature_importance(model))))
        return
    if not args.model_file:
        raise InputError("--model-file is required")
    model = learn.model_from_json(Path(args.model_file).read_text(encoding="utf-8"))
    if args.action == "eval":
        X, y = _load_training(args.input)
        rep = classification_report(y, learn.predict_classes(model, X))
        _write(args.out, "metrics.csv", classification_table_csv([(model.kind.upper(), rep)]))
        _write(args.out, "confusion.csv", _confusion_csv(rep))
        return
    out = ["source,t_ms,class,p25,p50,p75,p100"]
    for p in args.input:
        records, meta = _load(p)
        flag = 1.0 if meta is None or meta.power_config.value == "Hybrid" else 0.0
        X = np.array([[r.voltage, r.current, r.temperature, r.power, flag] for r in records])
        proba = learn.predict_proba(model, X)
        for r, pr in zip(records, proba):
            out.append(f"{Path(p).name},{r.t_ms},{int(np.argmax(pr))}," + ",".join(f"{v:.6f}" for v in pr))
    _write(args.out, "predictions.csv", "\n".join(out) + "\n")


def _confusion_csv(rep) -> str:
    c = rep.confusion.counts
    out = ["true\\pred," + ",".join(str(k) for k in rep.confusion.classes)]
    out += [f"{i}," + ",".join(str(int(v)) for v in row) for i, row in enumerate(c)]
    return "\n".join(out) + "\n"


def cmd_forecast(args) -> None:
    t, x = _load_series(args.input, args.channel)
    if args.action == "train":
        base = tcn.TcnConfig(seq_len=args.seq_len, epochs=args.epochs)
        if args.grid:
            grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
            config, table = tcn.tcn_grid_search(x, grid, args.seed, base)
            rows = ["seq_len,filters,kernel,layers,dropout,batch,val_mae,epochs"]
            rows += [f"{r.config.seq_len},{r.config.filters},{r.config.kernel},{r.config.layers},{r.config.dropout},"
                     f"{r.config.batch},{r.val_mae:.6f},{r.epochs_run}" for r in table]
            _write(args.out, "grid.csv", "\n".join(rows) + "\n")
        else:
            config = base
        model, result = tcn.fit_forecaster(x, config, args.seed)
        _write(args.out, "model.json", model.to_json())
        _write(args.out, "loss.csv", "epoch,train_mse,val_mae\n" + "".join(
            f"{k},{a!r},{b!r}\n" for k, (a, b) in enumerate(zip(result.loss_curve, result.val_mae_curve))))
        return
    if not args.model_file:
        raise InputError("--model-file is required")
    model = tcn.TcnModel.from_json(Path(args.model_file).read_text(encoding="utf-8"))
    if args.action == "eval":
        score = tcn.evaluate_forecast(model, x)
        name = args.name or Path(args.input).stem
        _write(args.out, "metrics.csv", _forecast_metrics(name, score))
        ts = t[model.config.seq_len :]
        _write(args.out, "predictions.csv", "t_ms,true_v,pred_v\n" + "".join(
            f"{int(a)},{b!r},{c!r}\n" for a, b, c in zip(ts, score.truth_v, score.predictions_v)))
        plot = LinePlot(f"{name}: true vs predicted", "time [s]", "voltage [V]")
        plot.line("true", ts / 1000.0, score.truth_v, "#1f77b4")
        plot.line("predicted", ts / 1000.0, score.predictions_v, "#d62728")
        _write(args.out, "forecast.svg", plot.render())
        return
    pred = tcn.forecast_recursive(model, x, args.steps)
    _write(args.out, "forecast.csv", "step,pred_v\n" + "".join(f"{k + 1},{v!r}\n" for k, v in enumerate(pred)))


def _forecast_metrics(name: str, score: tcn.ForecastScore) -> str:
    return (
        "Scenario,units,MAE,RMSE\n"
        f"{name},scaled,{score.mae_scaled:.4f},{score.rmse_scaled:.4f}\n"
        f"{name},volts,{score.mae_v:.4f},{score.rmse_v:.4f}\n"
    )


def cmd_synth(args) -> None:
    meta = synth.preset(args.preset, {"batteryonly": "BatteryOnly", "hybrid": "Hybrid"}[args.config])
    rng = np.random.default_rng(args.seed)
    spikes = synth.random_spikes(meta.n_samples, args.spikes, rng) if args.spikes else ()
    shifts = []
    for spec in args.level_shift or []:
        try:
            idx, delta = spec.split(":")
            shifts.append((int(idx), float(delta)))
        except ValueError:
            raise InputError(f"--level-shift expects INDEX:DELTA_V, got {spec!r}") from None
    records, truth = synth.generate_scenario(meta, synth.TruthSpec(spikes, tuple(shifts)), args.seed)
    _write(args.out, "log.csv", write_log(records, meta))
    _write(args.out, "log.meta", write_meta(meta))
    _write(args.out, "truth.json", truth.to_json())


def cmd_report(args) -> None:
    run = Path(args.run_dir)
    logs = sorted(run.glob("*.csv"))
    logs = [p for p in logs if p.read_text(encoding="utf-8").startswith("t_ms,")]
    if not logs:
        raise InputError(f"no telemetry logs in {run}")
    corr_rows = []
    for path in logs:
        records, meta = _load(path)
        stem = path.stem
        t, v = channel(records, "t_ms"), channel(records, "voltage")
        window = sigproc.STATIC_WINDOW if meta is not None and meta.is_static else sigproc.DYNAMIC_WINDOW
        window = min(window, len(v))
        sm = sigproc.sma(v, window)
        _write(args.out, f"{stem}_smoothed.csv", sigproc.smoothed_csv(t.astype(int), v, sm))
        plot = LinePlot(f"{stem}: voltage with SMA ({window})", "time [s]", "voltage [V]")
        plot.line("raw", t / 1000.0, v, "#9ecae1").line(f"SMA {window}", t[sm.start_index :] / 1000.0, sm.values, "#08519c")
        _write(args.out, f"{stem}_smoothed.svg", plot.render())
        corr_rows.append((meta.id if meta else stem, sigproc.correlation_matrix(records)))
        anomalies = det.detect_anomalies(v)
        cps = det.pelt(v, det.default_penalty(v))
        _write(args.out, f"{stem}_detect.jsonl", json.dumps({
            "anomalies": anomalies.indices, "spike_threshold_v": anomalies.spike_threshold_v,
            "change_points": cps.change_points, "penalty": cps.penalty}, sort_keys=True) + "\n")
    _write(args.out, "correlation_table.csv", sigproc.correlation_table_csv(corr_rows))


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridtel", description="Hybrid battery/fuel-cell telemetry analysis")
    p.add_argument("--version", action="version", version=f"hybridtel {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True, multi=False):
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        if needs_input:
            sp.add_argument("--input", required=True, action="append" if multi else "store")
        return sp

    s = common(sub.add_parser("ingest", help="validate a log and write it canonically"))
    s.add_argument("--meta")
    s.set_defaults(func=cmd_ingest)

    s = common(sub.add_parser("smooth", help="simple moving average"))
    s.add_argument("--channel", default="voltage")
    s.add_argument("--window", type=int, default=sigproc.DYNAMIC_WINDOW)
    s.set_defaults(func=cmd_smooth)

    s = common(sub.add_parser("correlate", help="V/I/P/T correlation matrices"), multi=True)
    s.add_argument("--name", action="append")
    s.set_defaults(func=cmd_correlate)

    s = common(sub.add_parser("detect", help="anomalies and change points"))
    s.add_argument("--channel", default="voltage")
    s.add_argument("--zscore-threshold", type=float, default=det.DEFAULT_THRESHOLD)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--penalty", type=float)
    g.add_argument("--auto-penalty", action="store_true")
    s.add_argument("--on-smoothed", type=int, metavar="W")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("classify", help="throttle classification")
    s.add_argument("action", choices=["train", "eval", "predict"])
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--input", action="append", default=[])
    s.add_argument("--model", choices=["rf", "gb"], default="rf")
    s.add_argument("--model-file")
    s.add_argument("--grid")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--synth-samples", type=int, default=5000, help="samples per configuration when no --input")
    s.add_argument("--synth-jitter", type=float, default=0.12)
    s.set_defaults(func=cmd_classify)

    s = common(sub.add_parser("forecast", help="TCN voltage forecasting"))
    s.add_argument("action", choices=["train", "eval", "predict"])
    s.add_argument("--channel", default="voltage")
    s.add_argument("--model-file")
    s.add_argument("--grid")
    s.add_argument("--seq-len", type=int, default=40)
    s.add_argument("--epochs", type=int, default=200)
    s.add_argument("--steps", type=int, default=10, help="recursive steps for predict")
    s.add_argument("--name")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("synth", help="synthetic scenarios")
    s.add_argument("action", choices=["generate"])
    s.add_argument("--preset", required=True, choices=sorted(synth.PRESETS))
    s.add_argument("--config", required=True, choices=["batteryonly", "hybrid"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--spikes", type=int, default=0, help="number of injected voltage spikes")
    s.add_argument("--level-shift", action="append", metavar="INDEX:DELTA_V")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("report", help="smoothing, correlation and detection for every log in a run directory")
    s.add_argument("run_dir")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        args.func(args)
        _manifest(args.out, ["hybridtel", *argv], args, started)
    except InputError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except HybridTelError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"error [internal]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
