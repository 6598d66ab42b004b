"""Success rate versus iteration and queries per success, NAttack against QL.

    python scripts/success_curves.py --defense sap --inputs 100 --out results/curves
"""
import argparse
import json
from pathlib import Path

from nesattack import harness
from nesattack.datasets import make_image_blobs
from nesattack.geometry import NormBudget
from nesattack.models import wrap_defense
from nesattack.nattack import AttackConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--defense", default="none", choices=["none", "quantize", "sap", "input_noise"])
    p.add_argument("--inputs", type=int, default=100)
    p.add_argument("--ql-sigma", type=float, default=None)
    p.add_argument("--out", type=Path, default=Path("results/curves"))
    args = p.parse_args()

    data = make_image_blobs(seed=args.data_seed)
    victim = wrap_defense(harness.desk_victim(data, seed=args.data_seed), args.defense,
                          levels=harness.DESK_LEVELS, amplitude=harness.DESK_NOISE)
    config = AttackConfig(budget=NormBudget("linf", harness.DESK_TAU_LINF), T=harness.DESK_T, b=harness.DESK_B)
    reports = {a: harness.run_benchmark(victim, data.X_test, data.y_test, a, config, 0, args.inputs,
                                        ql_sigma=args.ql_sigma) for a in ("nattack", "ql")}
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"curve_{args.defense}.svg").write_text(
        harness.curve_svg({a: r.curve() for a, r in reports.items()}, config.T))
    for a, r in reports.items():
        harness.export_report(r, args.out / f"{a}_{args.defense}.csv")
    print(json.dumps({a: {**r.summary(), "query_efficiency": harness.query_efficiency(r, [0.25, 0.5, 0.75, 0.9])}
                      for a, r in reports.items()}, indent=1))


if __name__ == "__main__":
    main()
