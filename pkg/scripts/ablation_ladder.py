"""QL-to-NAttack ladder on the quantized desk victim, averaged over dataset seeds.

    python scripts/ablation_ladder.py --seeds 0 1 2 3 4 --inputs 200 [--ql-sigma 1e-3]
"""
import argparse
import json

import numpy as np

from nesattack import harness
from nesattack.baselines import AblationFlags
from nesattack.datasets import make_image_blobs
from nesattack.geometry import NormBudget
from nesattack.models import wrap_defense
from nesattack.nattack import AttackConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--inputs", type=int, default=200)
    p.add_argument("--defense", default="quantize", choices=["none", "quantize", "sap", "input_noise"])
    p.add_argument("--ql-sigma", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    config = AttackConfig(budget=NormBudget("linf", harness.DESK_TAU_LINF), T=harness.DESK_T, b=harness.DESK_B)
    rates = {f.label: [] for f in AblationFlags.ladder()}
    for seed in args.seeds:
        data = make_image_blobs(seed=seed)
        victim = wrap_defense(harness.desk_victim(data, seed=seed), args.defense, levels=harness.DESK_LEVELS,
                              amplitude=harness.DESK_NOISE)
        for flags in AblationFlags.ladder():
            rep = harness.run_benchmark(victim, data.X_test, data.y_test, "ablation", config, seed, args.inputs,
                                        args.workers, flags=flags, ql_sigma=args.ql_sigma)
            rates[flags.label].append(rep.success_rate)
            print(f"seed {seed} {flags.label:<16} {rep.success_rate:.3f}", flush=True)
    print(json.dumps({k: {"per_seed": v, "mean": float(np.mean(v))} for k, v in rates.items()}, indent=1))


if __name__ == "__main__":
    main()
