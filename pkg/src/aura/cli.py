"""Command-line entry point: ``aura <command> [--config PATH] [--set key=value ...]``.

Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, describe_schema
from .data import write_csv_dataset
from .detect import detect
from .plots import forecast_svg, histogram_svg, score_svg
from .synthetic import generate_synthetic
from .train import evaluate

log = logging.getLogger("aura")

CHECKPOINT_NAME = "model.ckpt"


class UsageError(Exception):
    pass


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_config(args) -> RunConfig:
    if args.config is not None and not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output.dir={args.out}")
    return RunConfig.load(args.config, overrides)


def _out_dir(rc: RunConfig) -> Path:
    return ex.ensure_dir(rc["output.dir"])


def _checkpoint_path(args, rc: RunConfig) -> Path:
    return Path(args.checkpoint) if args.checkpoint else Path(rc["output.dir"]) / CHECKPOINT_NAME


def _load_model(args, rc: RunConfig):
    path = _checkpoint_path(args, rc)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _split(prep: ex.Prepared, name: str):
    return {"train": prep.train, "val": prep.val, "test": prep.test}[name]


# ------------------------------------------------------------------ commands

def cmd_train(args, rc: RunConfig) -> int:
    out = _out_dir(rc)
    prep = ex.prepare(rc)
    model, report = ex.train_model(rc, prep)
    ckpt = out / CHECKPOINT_NAME
    save_checkpoint(model, ckpt, {"seed": str(rc["train.seed"])})
    doc = report.to_dict() | {
        "config": rc.to_dict(),
        "n_train": len(prep.train), "n_val": len(prep.val), "excluded_abnormal": prep.excluded_abnormal,
        "checkpoint": ckpt.name,
    }
    _write_json(out / "train_report.json", doc)
    print(f"trained {report.stop_epoch} epochs, best val MSE {report.best_val:.6f} -> {ckpt}")
    return 0


def cmd_eval(args, rc: RunConfig) -> int:
    out = _out_dir(rc)
    model, _ = _load_model(args, rc)
    prep = ex.prepare(rc)
    batch = _split(prep, args.split)
    metrics = {"split": args.split, "all": evaluate(model, batch)}
    normal = ex.normal_only(batch)
    if len(normal) and len(normal) != len(batch):
        metrics["normal"] = evaluate(model, normal)
    metrics["persistence"] = ex.persistence_metrics(batch)
    pred, _ = model.predict(batch)
    raw_pred = batch.denormalize(pred)
    raw_hist = batch.denormalize(batch.endo)
    raw_target = batch.raw_target()
    forecasts = [
        {"id": batch.ids[i], "label": batch.labels[i], "history": raw_hist[i].tolist(),
         "target": raw_target[i].tolist(), "forecast": raw_pred[i].tolist()}
        for i in range(len(batch))
    ]
    _write_json(out / "metrics.json", metrics)
    _write_json(out / "forecasts.json", {"split": args.split, "samples": forecasts})
    print(f"{args.split}: MSE {metrics['all']['mse']:.6f} MAE {metrics['all']['mae']:.6f} (n={len(batch)})")
    return 0


def cmd_detect(args, rc: RunConfig) -> int:
    out = _out_dir(rc)
    model, _ = _load_model(args, rc)
    prep = ex.prepare(rc)
    target = rc["detect.target_far"] if args.target_far is None else args.target_far
    report = detect(model, prep.test, target, rc["detect.calib_frac"], rc["detect.seed"],
                    rc["detect.in_sample"], rc["detect.score"])
    report.write(out)
    tar = "undefined" if report.tar is None else f"{report.tar:.4f}"
    print(f"threshold {report.threshold.value:.6g}: TAR {tar}, held-out FAR {report.far:.4f}")
    return 0


def cmd_ablate(args, rc: RunConfig) -> int:
    out = _out_dir(rc)
    seeds = [args.seed] if args.seed is not None else [int(s) for s in rc["ablate.seeds"]]
    prep = ex.prepare(rc)
    rows = ex.run_ablation(rc, prep, seeds)
    summary = ex.summarize_ablation(rows)
    direction = ex.ablation_direction(rows)
    _write_json(out / "ablation.json", {
        "seeds": seeds, "summary": summary, "runs": rows,
        "direction": {k: {str(s): v for s, v in d.items()} for k, d in direction.items()},
    })
    with (out / "ablation.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "flags", "n_seeds", "mse", "mae", "tar"])
        for r in summary:
            w.writerow([r["variant"], r["flags"], r["n_seeds"], repr(r["mse"]), repr(r["mae"]),
                        "" if r["tar"] is None else repr(r["tar"])])
    for r in summary:
        tar = "-" if r["tar"] is None else f"{r['tar']:.3f}"
        print(f"{r['variant']:<24} MSE {r['mse']:.4f}  MAE {r['mae']:.4f}  TAR {tar}")
    return 0


def cmd_gates(args, rc: RunConfig) -> int:
    out = _out_dir(rc)
    model, _ = _load_model(args, rc)
    prep = ex.prepare(rc)
    batch = _split(prep, args.split)
    a_h, a_f = ex.collect_gates(model, batch)
    stats = ex.gate_statistics(a_h, a_f)
    stats["split"] = args.split
    stats["pairs"] = [{"id": i, "alpha_hist": float(h), "alpha_fut": float(f)}
                      for i, h, f in zip(batch.ids, a_h, a_f)]
    _write_json(out / "gates.json", stats)
    (out / "gates.svg").write_text(histogram_svg({"alpha_hist": a_h, "alpha_fut": a_f}, title="gate weights"),
                                   encoding="utf-8")
    print(f"alpha_hist mean {stats['alpha_hist']['mean']:.4f}, alpha_fut mean {stats['alpha_fut']['mean']:.4f}, "
          f"one-sided p {stats['rank_sum']['p_value']:.3g}")
    return 0


def cmd_generate(args, rc: RunConfig) -> int:
    out = _out_dir(rc)
    ds = generate_synthetic(rc.synthetic_config())
    write_csv_dataset(ds, out / "data.csv", out / "static.json")
    print(f"wrote {len(ds.series)} series ({ds.n_rows} rows) to {out / 'data.csv'}")
    return 0


def cmd_plot(args, rc: RunConfig) -> int:
    if not args.reports:
        raise UsageError("plot needs at least one report file")
    written = []
    for name in args.reports:
        path = Path(name)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise RuntimeError(f"cannot read report {path}: {exc}") from None
        target_dir = Path(args.out) if args.out else path.parent
        target_dir.mkdir(parents=True, exist_ok=True)
        if "samples" in doc:
            samples = doc["samples"][: args.max_samples]
            dst, svg = target_dir / f"{path.stem}.svg", forecast_svg(samples)
        elif "threshold" in doc and "scores" in doc:
            dst, svg = target_dir / f"{path.stem}.svg", score_svg(doc["scores"], doc["threshold"]["value"])
        elif "pairs" in doc:
            a_h = np.array([p["alpha_hist"] for p in doc["pairs"]])
            a_f = np.array([p["alpha_fut"] for p in doc["pairs"]])
            dst, svg = target_dir / f"{path.stem}.svg", histogram_svg({"alpha_hist": a_h, "alpha_fut": a_f})
        else:
            raise RuntimeError(f"{path}: not a forecasts, detection or gates report")
        dst.write_text(svg, encoding="utf-8")
        written.append(dst)
    for dst in written:
        print(f"wrote {dst}")
    return 0


COMMANDS = {
    "train": (cmd_train, "train a model and write a checkpoint plus train_report.json"),
    "eval": (cmd_eval, "evaluate a checkpoint; writes metrics.json and forecasts.json"),
    "detect": (cmd_detect, "calibrate a residual threshold; writes detection_report.json and scores.csv"),
    "ablate": (cmd_ablate, "train and score the eight ablation variants; writes ablation.csv/json"),
    "gates": (cmd_gates, "gate-weight statistics; writes gates.json and gates.svg"),
    "generate": (cmd_generate, "write the synthetic corpus as CSV plus a JSON sidecar"),
    "plot": (cmd_plot, "render SVG charts from forecasts/detection/gates JSON reports"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    common.add_argument("--out", help="output directory (output.dir)")
    common.add_argument("--seed", type=int, help="training seed (train.seed)")
    common.add_argument("--checkpoint", help=f"checkpoint path (default OUT/{CHECKPOINT_NAME})")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="aura", description="Exogenous-informed forecasting and detection.",
                                     epilog="Run 'aura keys' for the config schema.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, (_, helptext) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name in ("eval", "gates"):
            p.add_argument("--split", choices=("train", "val", "test"), default="test")
        if name == "detect":
            p.add_argument("--target-far", type=float, default=None)
        if name == "plot":
            p.add_argument("reports", nargs="*", help="JSON reports to render")
            p.add_argument("--max-samples", type=int, default=8)
    sub.add_parser("keys", help="print the config schema")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.command == "keys":
        print(describe_schema())
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fn = COMMANDS[args.command][0]
    try:
        rc = _load_config(args)
        return fn(args, rc)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"aura: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"aura: config error: {exc}", file=sys.stderr)
        return 1
    except CheckpointError as exc:
        print(f"aura: checkpoint error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"aura: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
