"""Cold versus regression-initialized NAttack on the vanilla desk victim.

    python scripts/warm_start.py --train-inputs 400 --inputs 200
"""
import argparse
import json

import numpy as np

from nesattack import harness
from nesattack.datasets import make_image_blobs
from nesattack.geometry import NormBudget
from nesattack.init import fit_regression_initializer
from nesattack.nattack import AttackConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--train-inputs", type=int, default=400)
    p.add_argument("--inputs", type=int, default=200)
    p.add_argument("--save", default=None, help="write the fitted initializer here")
    args = p.parse_args()

    data = make_image_blobs(seed=args.data_seed)
    victim = harness.desk_victim(data, seed=args.data_seed)
    config = AttackConfig(budget=NormBudget("linf", harness.DESK_TAU_LINF), T=harness.DESK_T, b=harness.DESK_B)
    train = harness.run_benchmark(victim, data.X_train, data.y_train, "nattack", config, 1, args.train_inputs)
    pairs = [(data.X_train[o.input_id], np.array(o.adversarial)) for o in train.outcomes if o.success]
    init = fit_regression_initializer(pairs)
    if args.save:
        init.save(args.save)
    cold = harness.run_benchmark(victim, data.X_test, data.y_test, "nattack", config, 2, args.inputs)
    warm = harness.run_benchmark(victim, data.X_test, data.y_test, "nattack", config, 2, args.inputs,
                                 initializer=init)

    def iters(r):
        return np.array([o.first_success_iter if o.success else config.T + 1 for o in r.outcomes])

    median = float(np.median(iters(cold)))
    print(json.dumps({
        "pairs": len(pairs),
        "cold": cold.summary(),
        "warm": warm.summary(),
        "cold_median_iterations": median,
        "warm_within_cold_median": float(np.mean(iters(warm) <= median)),
    }, indent=1))


if __name__ == "__main__":
    main()
