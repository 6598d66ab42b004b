"""Transfer matrix over the desk zoo: two vanilla networks and three defenses.

    python scripts/transfer_matrix.py --count 200 --out results/transfer.json
"""
import argparse
import json
from pathlib import Path

from nesattack import harness
from nesattack.datasets import make_image_blobs
from nesattack.geometry import NormBudget
from nesattack.nattack import AttackConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--zoo-seed", type=int, default=0)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--out", type=Path, default=None)
    args = p.parse_args()

    data = make_image_blobs(seed=args.data_seed)
    zoo = harness.desk_zoo(data, seed=args.zoo_seed)
    config = AttackConfig(budget=NormBudget("linf", harness.DESK_TAU_LINF), T=harness.DESK_T, b=harness.DESK_B)
    pools, warnings = {}, {}
    for name, model in zoo.items():
        pools[name], warnings[name] = harness.build_pool(model, data.X_test, data.y_test, config, args.count)
        print(f"{name}: pool of {len(pools[name])}", flush=True)
    matrix = harness.build_transfer_matrix(zoo, pools, pool_warnings=warnings)
    print(f"{'source / target':<16}" + "".join(f"{n:>13}" for n in matrix.names))
    for name, row in zip(matrix.names, matrix.rates):
        print(f"{name:<16}" + "".join(f"{v:>13.3f}" for v in row))
    print(f"{'column mean':<16}" + "".join(f"{v:>13.3f}" for v in matrix.column_means()))
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        doc = matrix.to_dict()
        doc["column_means"] = [float(v) for v in matrix.column_means()]
        args.out.write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
