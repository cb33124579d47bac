"""
Command line interface for the FTP lab
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from .models.hardware_model import NoiseModel
from .models.report_model import HwSweepRow
from .models.schemas import Algorithm, ArchFamily
from .services.alignment_service import alignment_frame, mean_curves, run_alignment_study
from .services.cost_service import cost_service, render_text
from .services.experiment_service import (
    build_architecture, evaluate_checkpoint, load_data, load_run_config, run_experiment, train_config,
)
from .services.hardware_service import ALPHA_GRID, run_asymmetry_sweep, run_hw_experiment, summarize_rows
from .services.theory_service import theory_service
from .utils.config import configure_logging, settings
from .utils.errors import ConfigurationError, FTPLabError

logger = logging.getLogger(__name__)


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with run settings; flags override it")
    p.add_argument("--algo", dest="algorithm", choices=[a.value for a in Algorithm])
    p.add_argument("--arch", choices=[a.value for a in ArchFamily])
    p.add_argument("--dataset", help="mnist | fmnist | cifar10 | cifar100 | blobs | sine | CSV path")
    p.add_argument("--data-root", dest="data_root")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--limit", type=int, help="use only the first N training examples")
    p.add_argument("--seed", type=int, help="single seed (shorthand for --seeds N)")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--bits", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")


def _run_config(args: argparse.Namespace, **extra):
    seeds = [args.seed] if args.seed is not None else args.seeds
    return load_run_config(
        args.config, algorithm=args.algorithm, arch=args.arch, dataset=args.dataset, data_root=args.data_root,
        epochs=args.epochs, lr=args.lr, gamma=args.gamma, limit=args.limit, seeds=seeds, bits=args.bits,
        alpha=args.alpha, workers=args.workers, out=args.out, **extra,
    )


########################################################
# Subcommands

def cmd_train(args: argparse.Namespace) -> int:
    result = run_experiment(_run_config(args, record_alignment=True if args.record_alignment else None))
    print(json.dumps(result.summary, indent=2))
    print(f"metrics: {result.metrics_path}\nsummary: {result.summary_path}")
    return 0


def cmd_align(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    train, test = load_data(cfg)
    records = run_alignment_study(build_architecture(cfg, train), train, test, train_config(cfg, cfg.seeds[0]),
                                  gammas=_floats(args.gammas) if args.gammas else [cfg.gamma], seeds=cfg.seeds)
    out = Path(cfg.out or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    alignment_frame(records).to_csv(out / "alignment.csv", index=False)
    curves = mean_curves(records)
    curves.to_csv(out / "alignment_mean.csv", index=False)
    print(curves.to_string(index=False))
    return 0


def cmd_macs(args: argparse.Namespace) -> int:
    table = cost_service.table(args.datasets.split(","))
    print(render_text(table))
    if args.out:
        table.to_csv(args.out, index=False)
        print(f"csv: {args.out}")
    return 0


def cmd_hw_sim(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    train, test = load_data(cfg)
    arch = build_architecture(cfg, train)
    tcfg = train_config(cfg, cfg.seeds[0])
    if args.asymmetry:
        rows = run_asymmetry_sweep(train, test, tcfg, arch, bits=[int(b) for b in _floats(args.bit_list)],
                                   seeds=cfg.seeds)
        key = "corrupted_fraction"
    else:
        alphas = _floats(args.alphas) if args.alphas else ([cfg.alpha] if args.alpha is not None else ALPHA_GRID)
        model = NoiseModel(bits=cfg.bits, quantize_forward=cfg.quantize_forward)
        rows = run_hw_experiment(cfg.algorithm, model, train, test, tcfg, arch, alphas, cfg.seeds)
        key = "alpha"
    frame = pd.DataFrame([r.as_dict() for r in rows], columns=HwSweepRow.COLUMNS)
    out = Path(cfg.out or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out / "hw_sweep.csv", index=False)
    for (rule, value), (mean, std) in sorted(summarize_rows(rows, key).items()):
        print(f"{rule:6s} {key}={value:<6g} accuracy {mean:.4f} +/- {std:.4f}")
    return 0


def cmd_verify_theory(args: argparse.Namespace) -> int:
    summary = theory_service.verify(args.seeds, args.steps, [int(d) for d in args.dims.split(",")])
    print(json.dumps(summary, indent=2))
    if not theory_service.passes(summary):
        raise FTPLabError("theory verification failed a tolerance check")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    metrics = evaluate_checkpoint(args.model, _run_config(args))
    print(json.dumps({"loss": metrics.loss, "accuracy": metrics.accuracy, "rrse": metrics.rrse,
                      "corr": metrics.corr}, indent=2))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("src.api.API:app", host=args.host or settings.api_host, port=args.port or settings.api_port,
                reload=settings.api_reload, log_level=settings.log_level.lower())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftp-lab", description="Forward Target Propagation lab")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train with bp, ftp or pepita across seeds")
    _add_run_flags(p)
    p.add_argument("--record-alignment", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("align", help="FTP vs BP gradient angles over training")
    _add_run_flags(p)
    p.add_argument("--gammas", help="comma-separated gamma values")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("macs", help="MAC table of the three rules")
    p.add_argument("--datasets", default="mnist,cifar10,cifar100")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_macs)

    p = sub.add_parser("hw-sim", help="accuracy under programming error or backward asymmetry")
    _add_run_flags(p)
    p.add_argument("--alphas", help="comma-separated alpha grid")
    p.add_argument("--asymmetry", action="store_true", help="BP backward-matrix corruption sweep")
    p.add_argument("--bit-list", default="3,4", help="precisions for the asymmetry sweep")
    p.set_defaults(func=cmd_hw_sim)

    p = sub.add_parser("verify-theory", help="numerical check of the linear-network analysis")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--dims", default="4,3,5,2")
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("eval", help="evaluate a saved network")
    _add_run_flags(p)
    p.add_argument("--model", required=True, help=".npz checkpoint written by train")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the REST API")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except FTPLabError as e:
        print(f"{e.category} error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return ConfigurationError.exit_code
