"""Command-line bench driver.

Subcommands: synth (stand-in dataset), train, eval, analog, cost, table1
(all-architecture summary), table2 (analog/software agreement rows), fig2
(per-step hidden-unit traces). One JSON config file drives a run; flags
override file values. Outputs are never silently overwritten.

Exit codes: 0 ok, 2 config problem, 3 dataset problem, 4 training diverged,
1 anything else (existing outputs, bad indices, broken checkpoints).
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import crossbar, dense, hwcost, lstm, synthetic
from .checkpoint import (CheckpointError, load_model, save_dense_model,
                         save_htm_pipeline, save_lstm_model)
from .config import (ARCHITECTURES, ConfigError, ExperimentConfig, RunReport,
                     canonical_json)
from .dataset import DatasetError, SplitDataset, load_ucr, scale_inputs, truncate_series
from .dense import DenseModel, TrainingDiverged
from .htm import HtmPipeline, evaluate_htm, fit_htm
from .lstm import LstmModel

TABLE1_ORDER = ("perceptron", "ann", "dnn", "lstm_windowed",
                "lstm_sequential", "htm")


class CliError(Exception):
    pass


def _require_absent(path: Path) -> Path:
    if path.exists():
        raise CliError(f"refusing to overwrite existing output {path}")
    return path


def _write_text(path: Path, text: str) -> None:
    _require_absent(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _config_from_args(args, need_paths: bool = True) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json_file(args.config)
    else:
        required = {"arch": args.arch}
        if need_paths:
            required.update(train_path=args.train_path, test_path=args.test_path)
        missing = [k for k, v in required.items() if not v]
        if missing:
            raise ConfigError(f"no --config given, so flags are required: "
                              f"{', '.join('--' + m.replace('_', '-') for m in missing)}")
        cfg = ExperimentConfig(architecture=args.arch,
                               train_path=args.train_path or "",
                               test_path=args.test_path or "")
    overrides = {}
    if args.arch:
        overrides["architecture"] = args.arch
    if args.train_path:
        overrides["train_path"] = args.train_path
    if args.test_path:
        overrides["test_path"] = args.test_path
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "lr", None) is not None:
        overrides["learning_rate"] = args.lr
    if getattr(args, "scale_max", None) is not None:
        overrides["scale_max"] = args.scale_max
    if getattr(args, "series_length", None) is not None:
        overrides["series_length"] = args.series_length
    if getattr(args, "noise_seed", None) is not None:
        overrides["noise_seed"] = args.noise_seed
    try:
        return replace(cfg, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _load_splits(cfg: ExperimentConfig) -> tuple[SplitDataset, SplitDataset]:
    """(raw, scaled-for-this-architecture) dataset pair."""
    ds = load_ucr(cfg.train_path, cfg.test_path)
    if cfg.series_length is not None:
        ds = truncate_series(ds, cfg.series_length)
    target = cfg.resolved_scale_max()
    scaled = scale_inputs(ds, target) if target is not None else ds
    return ds, scaled


def _train_model(cfg: ExperimentConfig):
    """Returns (model_object, trace, metrics) for any architecture."""
    raw, scaled = _load_splits(cfg)
    tc = cfg.train_config()
    if cfg.architecture in ("perceptron", "ann", "dnn"):
        spec = cfg.network_spec(scaled.series_length)
        params, trace = dense.train(spec, scaled.train, tc)
        return DenseModel(spec, params), trace, dense.evaluate(spec, params, scaled.test)
    if cfg.architecture in ("lstm_sequential", "lstm_windowed"):
        lcfg = cfg.lstm_config(scaled.series_length)
        model, trace = lstm.train_lstm(lcfg, scaled.train, tc)
        return model, trace, lstm.evaluate_lstm(model, scaled.test)
    pipeline = fit_htm(raw, sp_config=cfg.htm.pooler_config(cfg.seed),
                       bins=cfg.htm.bins, train_config=tc,
                       learning_passes=cfg.htm.learning_passes)
    return pipeline, [], evaluate_htm(pipeline, raw.test)


def _save_model(path: Path, model) -> None:
    _require_absent(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(model, DenseModel):
        save_dense_model(path, model)
    elif isinstance(model, LstmModel):
        save_lstm_model(path, model)
    elif isinstance(model, HtmPipeline):
        save_htm_pipeline(path, model)
    else:
        raise CliError(f"cannot checkpoint object of type {type(model).__name__}")


def _model_inventory(model) -> hwcost.Inventory | None:
    if isinstance(model, DenseModel):
        return hwcost.inventory_dense(model.spec)
    if isinstance(model, LstmModel):
        return hwcost.inventory_lstm(model.config)
    return None  # the bucket/pooler pipeline has no crossbar mapping


def _software_outputs(model, records) -> np.ndarray:
    X = np.stack([r.values for r in records])
    if isinstance(model, DenseModel):
        return dense.predict_batch(model.spec, model.params, X)[:, 0]
    if isinstance(model, LstmModel):
        return lstm.predict_batch_lstm(model, X)
    raise CliError("analog comparison needs a dense or recurrent checkpoint")


def _analog_network(model, device, mv_per_unit):
    if isinstance(model, DenseModel):
        return crossbar.AnalogDense.from_model(model.spec, model.params,
                                               device, mv_per_unit)
    if isinstance(model, LstmModel):
        return crossbar.AnalogLstm.from_model(model, device, mv_per_unit)
    raise CliError("analog comparison needs a dense or recurrent checkpoint")


def _load_checkpoint_model(path: str):
    try:
        _, model = load_model(path)
    except FileNotFoundError as exc:
        raise CliError(f"checkpoint {path} not found") from exc
    return model


def _infer_arch(model, fallback: str) -> str:
    """Checkpoints know their own architecture; the config's value only
    breaks ties between dense depths it cannot distinguish."""
    if isinstance(model, LstmModel):
        return "lstm_sequential" if model.config.mode == "sequential" \
            else "lstm_windowed"
    if isinstance(model, HtmPipeline):
        return "htm"
    if isinstance(model, DenseModel):
        by_depth = {1: "perceptron", 2: "ann", 4: "dnn"}
        return by_depth.get(model.spec.num_layers, fallback)
    return fallback


def _pick_test_records(ds: SplitDataset, indices, index_base: int):
    picked = []
    for idx in indices:
        row = idx - index_base
        if not 0 <= row < len(ds.test):
            raise CliError(f"test index {idx} out of range "
                           f"(base {index_base}, split size {len(ds.test)})")
        picked.append((idx, row, ds.test[row]))
    return picked


# ---- subcommand handlers ----

def cmd_synth(args) -> int:
    out = Path(args.out)
    for name in ("Wafer_TRAIN.txt", "Wafer_TEST.txt"):
        _require_absent(out / name)
    seed = args.seed if args.seed is not None else synthetic.DEFAULT_SEED
    train_path, test_path = synthetic.write_wafer_like(out, seed=seed)
    print(f"wrote {train_path} and {test_path} (seed {seed})")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    out = Path(cfg.out_dir)
    for name in ("checkpoint.bin", "report.json", "metrics.json"):
        _require_absent(out / name)
    t0 = time.perf_counter()
    model, trace, metrics = _train_model(cfg)
    wall = time.perf_counter() - t0
    inv = _model_inventory(model)
    cost_payload = None
    if inv is not None:
        est = hwcost.estimate(inv, cfg.cost)
        cost_payload = {"inventory": asdict(inv), "area_um2": est.area_um2,
                        "power_mw": est.power_mw}
    report = RunReport(architecture=cfg.architecture, seed=cfg.seed,
                       config=cfg.to_dict(),
                       trace=[asdict(e) for e in trace],
                       metrics=metrics.as_dict(), cost=cost_payload,
                       wall_clock_s=wall)
    _save_model(out / "checkpoint.bin", model)
    _write_text(out / "report.json", report.report_json())
    _write_text(out / "metrics.json", report.metrics_json())
    print(f"{cfg.architecture} seed {cfg.seed}: test accuracy "
          f"{metrics.accuracy:.4f} (balanced {metrics.balanced_accuracy:.4f}) "
          f"in {wall:.1f}s -> {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    model = _load_checkpoint_model(args.checkpoint)
    cfg = replace(cfg, architecture=_infer_arch(model, cfg.architecture))
    raw, scaled = _load_splits(cfg)
    if isinstance(model, DenseModel):
        metrics = dense.evaluate(model.spec, model.params, scaled.test)
    elif isinstance(model, LstmModel):
        metrics = lstm.evaluate_lstm(model, scaled.test)
    elif isinstance(model, HtmPipeline):
        metrics = evaluate_htm(model, raw.test)
    else:
        raise CliError("unsupported checkpoint")
    report = RunReport(architecture=cfg.architecture, seed=cfg.seed,
                       config=cfg.to_dict(), trace=[],
                       metrics=metrics.as_dict())
    if args.out:
        _write_text(Path(args.out) / "metrics.json", report.metrics_json())
    print(f"test accuracy {metrics.accuracy:.4f} "
          f"(balanced {metrics.balanced_accuracy:.4f})")
    return 0


def cmd_analog(args) -> int:
    cfg = _config_from_args(args)
    model = _load_checkpoint_model(args.checkpoint)
    cfg = replace(cfg, architecture=_infer_arch(model, cfg.architecture))
    _, scaled = _load_splits(cfg)
    network = _analog_network(model, cfg.device, cfg.mv_per_unit)
    software = _software_outputs(model, scaled.test)
    analog_mv = crossbar.batch_analog_mv(network, cfg.device, scaled.test,
                                         noise_seed=cfg.noise_seed)
    labels = [r.label for r in scaled.test]
    indices = [r.source_index + 1 for r in scaled.test]  # 1-based rows
    report = crossbar.agreement_report(analog_mv, software, labels, indices)
    if args.out:
        _write_text(Path(args.out) / "agreement.csv",
                    "\n".join(report.csv_lines()) + "\n")
    print(f"sign agreement {report.agreement:.4f} over {len(report.rows)} "
          f"test records (noise seed {cfg.noise_seed})")
    return 0


def cmd_cost(args) -> int:
    cfg = _config_from_args(args, need_paths=False)
    if args.checkpoint:
        model = _load_checkpoint_model(args.checkpoint)
        inv = _model_inventory(model)
        arch = type(model).__name__
    else:
        arch = cfg.architecture
        if arch in ("perceptron", "ann", "dnn"):
            inv = hwcost.inventory_dense(cfg.network_spec(args.series_length or 152))
        elif arch in ("lstm_sequential", "lstm_windowed"):
            inv = hwcost.inventory_lstm(cfg.lstm_config(args.series_length or 152))
        else:
            inv = None
    if inv is None:
        raise CliError("no crossbar cost mapping for this architecture")
    est = hwcost.estimate(inv, cfg.cost)
    payload = {"architecture": arch, "inventory": asdict(inv),
               "area_um2": est.area_um2, "power_mw": est.power_mw}
    if args.out:
        _write_text(Path(args.out) / "cost.json", canonical_json(payload))
    print(f"{arch}: {inv.memristor_count} memristors, {inv.neuron_count} "
          f"neurons, {inv.gate_block_count} gate blocks -> "
          f"{est.area_um2:.2f} um^2, {est.power_mw:.2f} mW")
    return 0


def cmd_table1(args) -> int:
    base = _config_from_args(args)
    out = Path(args.out or base.out_dir)
    _require_absent(out / "table1.csv")
    raw = load_ucr(base.train_path, base.test_path)
    train_labels = np.array([r.label for r in raw.train])
    majority = max(np.mean(train_labels == 1), np.mean(train_labels == -1))
    lines = ["architecture,accuracy,balanced_accuracy,area_um2,power_mw,note"]
    for arch in TABLE1_ORDER:
        cfg = replace(base, architecture=arch,
                      learning_rate=None, scale_max=None,
                      out_dir=str(out / arch))
        model, trace, metrics = _train_model(cfg)
        inv = _model_inventory(model)
        if inv is not None:
            est = hwcost.estimate(inv, cfg.cost)
            area, power = f"{est.area_um2:.2f}", f"{est.power_mw:.2f}"
        else:
            area = power = ""
        notes = []
        if arch == "htm":
            notes.append("report-only")
        if trace and trace[-1].train_accuracy < majority:
            notes.append("under-trained at this epoch budget")
        lines.append(f"{arch},{metrics.accuracy:.4f},"
                     f"{metrics.balanced_accuracy:.4f},{area},{power},"
                     f"{';'.join(notes)}")
        print(lines[-1])
    _write_text(out / "table1.csv", "\n".join(lines) + "\n")
    return 0


def cmd_table2(args) -> int:
    cfg = _config_from_args(args)
    model = _load_checkpoint_model(args.checkpoint)
    if not isinstance(model, LstmModel):
        raise CliError("the agreement table needs a recurrent checkpoint")
    cfg = replace(cfg, architecture=_infer_arch(model, cfg.architecture))
    _, scaled = _load_splits(cfg)
    indices = [int(s) for s in args.indices.split(",")] if args.indices \
        else list(crossbar.AGREEMENT_INDICES)
    picked = _pick_test_records(scaled, indices, args.index_base)
    network = crossbar.AnalogLstm.from_model(model, cfg.device, cfg.mv_per_unit)
    analog_mv, software, labels = [], [], []
    for _, row, rec in picked:
        analog_mv.append(crossbar.analog_forward(network, cfg.device,
                                                 rec.values, row,
                                                 cfg.noise_seed))
        software.append(lstm.lstm_forward(model, rec.values))
        labels.append(rec.label)
    report = crossbar.agreement_report(analog_mv, software, labels,
                                       [idx for idx, _, _ in picked])
    out = Path(args.out or cfg.out_dir)
    _write_text(out / "table2.csv", "\n".join(report.csv_lines()) + "\n")
    for line in report.csv_lines():
        print(line)
    print(f"sign agreement {report.agreement:.4f}")
    return 0


def cmd_fig2(args) -> int:
    cfg = _config_from_args(args)
    model = _load_checkpoint_model(args.checkpoint)
    if not isinstance(model, LstmModel):
        raise CliError("trace export needs a recurrent checkpoint")
    cfg = replace(cfg, architecture=_infer_arch(model, cfg.architecture))
    _, scaled = _load_splits(cfg)
    [(idx, row, rec)] = _pick_test_records(scaled, [args.index], args.index_base)
    network = crossbar.AnalogLstm.from_model(model, cfg.device, cfg.mv_per_unit)
    rng = crossbar.record_noise_rng(cfg.noise_seed, row)
    _, analog_h = network.unit_trace(cfg.device, rec.values, rng)
    software_h = lstm.export_unit_traces(model, rec.values)
    hdim = model.config.hidden_dim
    header = ",".join(["t"]
                      + [f"analog_mv_u{j + 1}" for j in range(hdim)]
                      + [f"software_u{j + 1}" for j in range(hdim)])
    lines = [header]
    for t in range(model.config.time_steps):
        cells = [str(t + 1)]
        cells += [f"{analog_h[t, j] * cfg.mv_per_unit:.6f}" for j in range(hdim)]
        cells += [f"{software_h[t, j]:.6f}" for j in range(hdim)]
        lines.append(",".join(cells))
    out = Path(args.out or cfg.out_dir)
    _write_text(out / "fig2.csv", "\n".join(lines) + "\n")
    print(f"wrote {out / 'fig2.csv'} ({model.config.time_steps} steps, "
          f"test row {idx})")
    return 0


# ---- parser ----

def _add_common(p, *, checkpoint=False, train_flags=False, analog_flags=False):
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--arch", choices=ARCHITECTURES)
    p.add_argument("--train-path", dest="train_path")
    p.add_argument("--test-path", dest="test_path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    if train_flags:
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--scale-max", dest="scale_max", type=float)
        p.add_argument("--series-length", dest="series_length", type=int)
    if checkpoint:
        p.add_argument("--checkpoint", required=True)
    if analog_flags:
        p.add_argument("--noise-seed", dest="noise_seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waferbench",
        description="wafer trace classification bench: training, analog "
                    "crossbar comparison, and hardware cost estimates")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the stand-in dataset files")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", help="train one architecture and report")
    _add_common(p, train_flags=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_common(p, checkpoint=True, train_flags=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("analog", help="full-test-set analog/software agreement")
    _add_common(p, checkpoint=True, train_flags=True, analog_flags=True)
    p.set_defaults(handler=cmd_analog)

    p = sub.add_parser("cost", help="primitive inventory and area/power estimate")
    _add_common(p, train_flags=True)
    p.add_argument("--checkpoint")
    p.set_defaults(handler=cmd_cost)

    p = sub.add_parser("table1", help="train all architectures, one summary CSV")
    _add_common(p, train_flags=True)
    p.set_defaults(handler=cmd_table1)

    p = sub.add_parser("table2", help="agreement rows for selected test wafers")
    _add_common(p, checkpoint=True, train_flags=True, analog_flags=True)
    p.add_argument("--indices", help="comma-separated test rows "
                                     "(default: the standard ten)")
    p.add_argument("--index-base", dest="index_base", type=int, default=1)
    p.set_defaults(handler=cmd_table2)

    p = sub.add_parser("fig2", help="per-step unit traces, analog vs software")
    _add_common(p, checkpoint=True, train_flags=True, analog_flags=True)
    p.add_argument("--index", type=int, default=23)
    p.add_argument("--index-base", dest="index_base", type=int, default=1)
    p.set_defaults(handler=cmd_fig2)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 3
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 4
    except (CliError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
