"""``tensorslice`` command line.

Exit codes: 0 success, 2 usage, 3 configuration, 4 data or file format,
5 training divergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, dump_document, load_document, resolve
from .decompose import CompressionPlan, DecompositionError, InfeasibleCompressionError
from .distill import CacheMismatchError
from .model import PlanError, compression_rate, evaluate, load, save, tensorize, validate_plan
from .pipeline import (
    build_datasets,
    build_model,
    make_plan,
    run_global,
    run_hybrid,
    run_local,
    slices_for,
    train_baseline,
)
from .schedule import JobFailure, timing_summary
from .sensitivity import layer_sensitivity, select_exclusions, sensitivity_csv
from .tensor import TensorFormatError
from .train import DivergenceError

log = logging.getLogger("tensorslice")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4, 5

COMMANDS = ("train-baseline", "profile", "compress", "distill", "finetune", "hybrid", "eval", "report")


def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _file_hash(path) -> str:
    return git_blob_hash(Path(path).read_bytes())


def _data_hash(ds) -> str:
    return git_blob_hash(np.ascontiguousarray(ds.inputs).tobytes() + np.asarray(ds.labels, np.int64).tobytes())


def write_manifest(cfg: RunConfig, command: str, argv: list[str], inputs: dict, outputs: dict,
                   metrics: dict) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "config.yaml").write_text(dump_document(cfg))
    manifest = {
        "command": command,
        "argv": argv,
        "version": __version__,
        "seed": cfg.seed,
        "config": json.loads(json.dumps(cfg.snapshot(), default=str)),
        "inputs": inputs,
        "outputs": {name: _file_hash(cfg.out / name) for name in sorted(outputs)},
        "metrics": metrics,
    }
    path = cfg.out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- commands ------------------------------------------------------------------

def _write_reports(out: Path, reports, prefix: str) -> list[str]:
    d = out / "reports"
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for r in reports:
        name = f"reports/{prefix}-{r.slice_index}.csv"
        (out / name).write_text(r.to_csv())
        names.append(name)
    summary = [r.summary() for r in reports]
    (out / f"reports/{prefix}-summary.json").write_text(json.dumps(summary, indent=2, default=str) + "\n")
    return names + [f"reports/{prefix}-summary.json"]


def _load_plan(cfg: RunConfig, net):
    if cfg.plan_path is not None:
        plan = CompressionPlan.load(cfg.plan_path)
        validate_plan(net, plan)
        return plan
    return make_plan(net, cfg.cr, cfg.exclude, cfg.step)


def cmd_train_baseline(cfg: RunConfig):
    train, test = build_datasets(cfg)
    net = build_model(cfg.model, cfg.seed)
    net, report = train_baseline(net, train, cfg.baseline)
    cfg.out.mkdir(parents=True, exist_ok=True)
    save(net, cfg.out / "model.tsm")
    _write_reports(cfg.out, [report], "baseline")
    metrics = {
        "train_accuracy": evaluate(net, train)["accuracy"],
        "test": evaluate(net, test),
        "param_count": net.param_count(),
        "final_loss": report.losses[-1] if report.steps else None,
    }
    log.info("baseline test accuracy %.4f", metrics["test"]["accuracy"])
    inputs = {"train_data": _data_hash(train), "test_data": _data_hash(test)}
    return inputs, ["model.tsm", "reports/baseline-baseline.csv"], metrics


def cmd_profile(cfg: RunConfig):
    _, test = build_datasets(cfg)
    net = load(cfg.model_path)
    cands = cfg.profile["candidates"]
    if cands is None:
        cands = [i for i, l in enumerate(net.layers) if l.kind in ("dense", "conv2d")]
    records = layer_sensitivity(net, test, cands, probe=cfg.profile["probe"])
    cfg.out.mkdir(parents=True, exist_ok=True)
    sensitivity_csv(records, cfg.out / "profile.csv")
    k = min(cfg.profile["exclude_k"], len(records))
    metrics = {
        "baseline_accuracy": evaluate(net, test)["accuracy"],
        "records": [{"layer": r.layer, "delta": r.delta, "accuracy": r.accuracy} for r in records],
        "suggested_exclude": sorted(select_exclusions(records, k)),
    }
    return {"model": _file_hash(cfg.model_path), "test_data": _data_hash(test)}, ["profile.csv"], metrics


def cmd_compress(cfg: RunConfig):
    _, test = build_datasets(cfg)
    net = load(cfg.model_path)
    plan = _load_plan(cfg, net)
    comp = tensorize(net, plan)
    cfg.out.mkdir(parents=True, exist_ok=True)
    plan.dump(cfg.out / "plan.yaml")
    save(comp, cfg.out / "compressed.tsm")
    metrics = {
        "target_cr": cfg.cr if cfg.plan_path is None else plan.target_cr,
        "achieved_cr": compression_rate(net, comp),
        "params_before": net.param_count(),
        "params_after": comp.param_count(),
        "accuracy_before": evaluate(net, test)["accuracy"],
        "accuracy_after": evaluate(comp, test)["accuracy"],
    }
    log.info("achieved CR %.4f (target %.4f)", metrics["achieved_cr"], metrics["target_cr"])
    return {"model": _file_hash(cfg.model_path)}, ["plan.yaml", "compressed.tsm"], metrics


def _heal_common(cfg: RunConfig):
    train, test = build_datasets(cfg)
    net = load(cfg.model_path)
    plan = _load_plan(cfg, net)
    inputs = {"model": _file_hash(cfg.model_path), "train_data": _data_hash(train), "test_data": _data_hash(test)}
    if cfg.plan_path is not None:
        inputs["plan"] = _file_hash(cfg.plan_path)
    cfg.out.mkdir(parents=True, exist_ok=True)
    plan.dump(cfg.out / "plan.yaml")
    return net, train, test, plan, inputs


def _heal_metrics(net, outcome, test):
    return {
        "achieved_cr": compression_rate(net, outcome.net),
        "accuracy_before": evaluate(net, test)["accuracy"],
        "test": evaluate(outcome.net, test),
    }


def cmd_distill(cfg: RunConfig):
    net, train, test, plan, inputs = _heal_common(cfg)
    slices = slices_for(net, cfg.partition)
    res = run_local(net, train, test, slices, plan, cfg.local, cfg.workers, cfg.backend, cfg.cache_dir)
    save(res.net, cfg.out / "distilled.tsm")
    outputs = ["plan.yaml", "distilled.tsm"] + _write_reports(cfg.out, res.reports, "slice")
    timing_summary([res.reports.schedule], cfg.out / "schedule.csv")
    metrics = _heal_metrics(net, res, test) | {"data_fraction": cfg.local.data_fraction,
                                               "slices": len(res.reports)}
    return inputs, outputs, metrics


def cmd_finetune(cfg: RunConfig):
    net, train, test, plan, inputs = _heal_common(cfg)
    res = run_global(net, train, test, plan, cfg.global_)
    save(res.net, cfg.out / "finetuned.tsm")
    outputs = ["plan.yaml", "finetuned.tsm"] + _write_reports(cfg.out, [res.reports], "global")
    return inputs, outputs, _heal_metrics(net, res, test)


def cmd_hybrid(cfg: RunConfig):
    net, train, test, plan, inputs = _heal_common(cfg)
    slices = slices_for(net, cfg.partition)
    res = run_hybrid(net, train, test, slices, plan, cfg.local, cfg.global_, cfg.workers, cfg.backend,
                     cfg.cache_dir)
    save(res.net, cfg.out / "hybrid.tsm")
    outputs = ["plan.yaml", "hybrid.tsm"]
    outputs += _write_reports(cfg.out, res.reports["local"], "slice")
    outputs += _write_reports(cfg.out, [res.reports["global"]], "global")
    return inputs, outputs, _heal_metrics(net, res, test)


def cmd_eval(cfg: RunConfig):
    train, test = build_datasets(cfg)
    net = load(cfg.model_path)
    metrics = {"train_accuracy": evaluate(net, train)["accuracy"], "test": evaluate(net, test),
               "param_count": net.param_count()}
    return {"model": _file_hash(cfg.model_path), "test_data": _data_hash(test)}, [], metrics


def cmd_report(cfg: RunConfig, runs: list[str]):
    """Collect the manifests of earlier runs into one CSV table."""
    import csv

    rows = []
    for run in runs:
        p = Path(run) / "manifest.json"
        if not p.is_file():
            raise FileNotFoundError(f"no manifest in {run}")
        m = json.loads(p.read_text())
        met = m["metrics"]
        test = met.get("test", {})
        rows.append({
            "run": str(run),
            "command": m["command"],
            "seed": m["seed"],
            "accuracy": test.get("accuracy", met.get("accuracy_after")),
            "achieved_cr": met.get("achieved_cr"),
            "data_fraction": met.get("data_fraction"),
        })
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "report.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["run", "command", "seed", "accuracy", "achieved_cr", "data_fraction"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    inputs = {f"{r}/manifest.json": _file_hash(Path(r) / "manifest.json") for r in runs}
    return inputs, ["report.csv"], {"runs": len(rows)}


HANDLERS = {
    "train-baseline": (cmd_train_baseline, ()),
    "profile": (cmd_profile, ("model_path",)),
    "compress": (cmd_compress, ("model_path",)),
    "distill": (cmd_distill, ("model_path",)),
    "finetune": (cmd_finetune, ("model_path",)),
    "hybrid": (cmd_hybrid, ("model_path",)),
    "eval": (cmd_eval, ("model_path",)),
    "report": (cmd_report, ()),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--workers", type=int, help="slice-job worker count")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tensorslice", parents=[common],
                                     description="Slice-wise tensorization and healing of small networks.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + "|".join(COMMANDS) + "}")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name not in ("train-baseline", "report"):
            p.add_argument("--model", help="input model file")
        if name in ("compress", "distill", "finetune", "hybrid"):
            p.add_argument("--plan", help="compression plan YAML (otherwise derived from --cr)")
            p.add_argument("--cr", type=float, help="target whole-model compression rate")
        if name in ("distill", "hybrid"):
            p.add_argument("--fraction", type=float, help="fraction of training samples to capture")
            p.add_argument("--backend", choices=["thread", "process"])
            p.add_argument("--cache-dir", help="persist captured features here")
        if name == "report":
            p.add_argument("runs", nargs="+", help="run directories holding manifest.json")
    return parser


def _overrides(args) -> dict:
    o = {"seed": args.seed, "workers": args.workers, "out": args.out,
         "model_path": getattr(args, "model", None), "plan_path": getattr(args, "plan", None),
         "backend": getattr(args, "backend", None), "cache_dir": getattr(args, "cache_dir", None)}
    if getattr(args, "cr", None) is not None:
        o["compress"] = {"cr": args.cr}
    if getattr(args, "fraction", None) is not None:
        o["local"] = {"data_fraction": args.fraction}
    return o


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler, need = HANDLERS[args.command]
    try:
        cfg = resolve(load_document(args.config), _overrides(args), need)
        if args.command == "report":
            inputs, outputs, metrics = handler(cfg, args.runs)
        else:
            inputs, outputs, metrics = handler(cfg)
        write_manifest(cfg, args.command, argv, inputs, outputs, metrics)
        print(json.dumps(metrics, sort_keys=True, default=str))
        return EXIT_OK
    except (ConfigError, PlanError, InfeasibleCompressionError) as e:
        print(f"tensorslice: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"tensorslice: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except JobFailure as e:
        print(f"tensorslice: {e}", file=sys.stderr)
        return EXIT_DIVERGED if isinstance(e.cause, DivergenceError) else EXIT_DATA
    except (TensorFormatError, CacheMismatchError, DecompositionError, OSError, ValueError) as e:
        print(f"tensorslice: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
