"""Command line entry point: ``nesattack <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .baselines import AblationFlags
from .datasets import DATASETS, make_dataset
from .geometry import NormBudget
from .init import RegressionInitializer
from .models import (DEFENSES, MlpModel, ModelFormatError, accuracy, load_model, save_model, train_mlp,
                     wrap_defense)
from .nattack import AttackConfig


def _shape(text):
    return tuple(int(v) for v in text.split(","))


def _add_data(p):
    p.add_argument("--dataset", choices=sorted(DATASETS), default="image_blobs")
    p.add_argument("--data-seed", type=int, default=0)


def _add_config(p):
    p.add_argument("--norm", choices=["linf", "l2"], default="linf")
    p.add_argument("--tau", type=float, default=None, help="budget; desk default per norm")
    p.add_argument("--T", type=int, default=harness.DESK_T)
    p.add_argument("--b", type=int, default=harness.DESK_B)
    p.add_argument("--eta", type=float, default=0.008)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--seed-shape", type=_shape, default=None, help="e.g. 4,4,1 for a coarse seed grid")
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--max-inputs", type=int, default=200)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--ql-sigma", type=float, default=None,
                   help="pixel-space bandwidth of QL and pixel-space ablation variants (default: --sigma)")


def _add_victim(p):
    p.add_argument("--model", type=Path, required=True, help="weight file written by `train`")
    p.add_argument("--defense", choices=DEFENSES, default="none")
    p.add_argument("--levels", type=int, default=harness.DESK_LEVELS)
    p.add_argument("--amplitude", type=float, default=harness.DESK_NOISE)


def _config(args, data) -> AttackConfig:
    tau = args.tau
    if tau is None:
        tau = harness.DESK_TAU_LINF if args.norm == "linf" else harness.DESK_TAU_L2
    seed_shape = args.seed_shape
    input_shape = data.image_shape if seed_shape is not None else None
    return AttackConfig(
        budget=NormBudget(args.norm, tau), T=args.T, b=args.b, eta=args.eta, sigma=args.sigma,
        early_stop=not args.no_early_stop, antithetic=args.antithetic,
        seed_shape=seed_shape, input_shape=input_shape,
    )


def _victim(args):
    return wrap_defense(MlpModel(load_model(args.model)), args.defense, levels=args.levels,
                        amplitude=args.amplitude)


def _write_reports(report, out: Path | None, stem: str):
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    for fmt in ("csv", "json", "svg"):
        harness.export_report(report, out / f"{stem}.{fmt}", fmt)


def cmd_train(args):
    data = make_dataset(args.dataset, seed=args.data_seed)
    widths = [data.dim] + args.hidden + [data.num_classes]
    model = MlpModel(train_mlp(data.X_train, data.y_train, widths, args.epochs, args.lr, seed=args.seed))
    save_model(model.spec, args.out)
    print(json.dumps({"model": str(args.out), "widths": widths,
                      "test_accuracy": accuracy(model, data.X_test, data.y_test)}))


def cmd_attack(args):
    data = make_dataset(args.dataset, seed=args.data_seed)
    model = _victim(args)
    init = RegressionInitializer.load(args.initializer) if args.initializer else None
    report = harness.run_benchmark(model, data.X_test, data.y_test, args.attack, _config(args, data),
                                   args.master_seed, args.max_inputs, args.workers, initializer=init,
                                   ql_sigma=args.ql_sigma)
    _write_reports(report, args.out, args.attack)
    print(json.dumps(report.summary()))


def cmd_curve(args):
    data = make_dataset(args.dataset, seed=args.data_seed)
    model = _victim(args)
    config = _config(args, data)
    reports = {a: harness.run_benchmark(model, data.X_test, data.y_test, a, config, args.master_seed,
                                        args.max_inputs, args.workers, ql_sigma=args.ql_sigma)
               for a in args.attacks}
    args.out.mkdir(parents=True, exist_ok=True)
    curves = {a: r.curve() for a, r in reports.items()}
    (args.out / "curve.svg").write_text(harness.curve_svg(curves, config.T))
    efficiency = {a: harness.query_efficiency(r) for a, r in reports.items()}
    (args.out / "query_efficiency.json").write_text(json.dumps(efficiency, indent=1))
    for a, r in reports.items():
        _write_reports(r, args.out, a)
    print(json.dumps({a: r.summary() for a, r in reports.items()}))


def cmd_transfer(args):
    data = make_dataset(args.dataset, seed=args.data_seed)
    zoo = harness.desk_zoo(data, args.zoo_seed)
    config = _config(args, data)
    pools, warnings = {}, {}
    for name, model in zoo.items():
        pools[name], warnings[name] = harness.build_pool(model, data.X_test, data.y_test, config,
                                                         args.count, args.master_seed)
    matrix = harness.build_transfer_matrix(zoo, pools, args.master_seed, warnings)
    doc = matrix.to_dict()
    doc["column_means"] = [float(v) for v in matrix.column_means()]
    text = json.dumps(doc, indent=1)
    if args.out:
        args.out.write_text(text + "\n")
    print(text)


def cmd_ablate(args):
    data = make_dataset(args.dataset, seed=args.data_seed)
    model = _victim(args)
    config = _config(args, data)
    rows = []
    for flags in AblationFlags.ladder():
        rep = harness.run_benchmark(model, data.X_test, data.y_test, "ablation", config, args.master_seed,
                                    args.max_inputs, args.workers, flags=flags, ql_sigma=args.ql_sigma)
        rows.append({"variant": flags.label, "success_rate": rep.success_rate,
                     "mean_queries_per_success": rep.mean_queries_per_success()})
    print(json.dumps(rows, indent=1))


def cmd_sweep_sigma(args):
    data = make_dataset(args.dataset, seed=args.data_seed)
    model = _victim(args)
    best, rates = harness.sweep_sigma(model, data.X_test, data.y_test, args.sigma_grid, _config(args, data),
                                      args.master_seed, args.max_inputs, args.workers)
    print(json.dumps({"best_sigma": best, "success_rates": {str(k): v for k, v in rates.items()}}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nesattack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a desk victim network")
    _add_data(p)
    p.add_argument("--hidden", type=int, nargs="*", default=[64])
    p.add_argument("--epochs", type=int, default=harness.DESK_EPOCHS)
    p.add_argument("--lr", type=float, default=harness.DESK_LR)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="attack the correctly classified test inputs")
    _add_data(p)
    _add_victim(p)
    _add_config(p)
    p.add_argument("--attack", choices=["nattack", "ql"], default="nattack")
    p.add_argument("--initializer", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None, help="directory for csv/json/svg reports")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("curve", help="success rate versus iteration, and queries per success")
    _add_data(p)
    _add_victim(p)
    _add_config(p)
    p.add_argument("--attacks", nargs="+", default=["nattack", "ql"], choices=["nattack", "ql"])
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("transfer", help="transfer matrix over the desk model zoo")
    _add_data(p)
    _add_config(p)
    p.add_argument("--zoo-seed", type=int, default=0)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("ablate", help="QL to NAttack ladder")
    _add_data(p)
    _add_victim(p)
    _add_config(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-sigma", help="pick the bandwidth with the best success rate")
    _add_data(p)
    _add_victim(p)
    _add_config(p)
    p.add_argument("--sigma-grid", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.5])
    p.set_defaults(func=cmd_sweep_sigma)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (harness.ProtocolError, ModelFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
