"""Coverage of each calibrator on a regime-shifted stream.

Trains once per seed, then streams the same test split through p-control
(at each requested window), split-CP and no calibration.  Prints overall
and final-quarter coverage per run.

    python scripts/shift_ablation.py --seeds 0 1 2 --windows 0 200
"""

import argparse
from dataclasses import replace

import numpy as np

from cuqds.config import RunConfig
from cuqds.data import generate_scenario
from cuqds.experiment import coverage_of, stream, train_models, warm_state


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--windows", type=int, nargs="+", default=[0, 200])
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--beta", type=float, default=0.05)
    ap.add_argument("--epochs", type=int, default=200)
    args = ap.parse_args()

    rows = {}
    for seed in args.seeds:
        cfg = RunConfig(seed=seed, alpha=args.alpha, beta=args.beta, epochs=args.epochs)
        train, val, test = generate_scenario(cfg.scenario())
        predictor, surrogate, _ = train_models(cfg, train, val)
        start = len(test) - len(test) // 4
        runs = [(f"p-control w={w}", replace(cfg, window=w)) for w in args.windows]
        runs += [("split-cp", replace(cfg, calibrator="split-cp")),
                 ("none", replace(cfg, calibrator="none"))]
        for name, run_cfg in runs:
            warmed = warm_state(run_cfg, val, predictor, surrogate)
            records, state = stream(run_cfg, test, val, predictor, surrogate, warmed)
            cov, tail = coverage_of(records), coverage_of(records, start)
            rows.setdefault(name, []).append((cov, tail))
            print(f"seed {seed}  {name:16s} CR {cov:.4f}  final-quarter {tail:.4f}  q_end {state.q:.3f}")

    target = 1.0 - args.alpha
    print(f"\nmean over {len(args.seeds)} seeds (target {target:.2f})")
    for name, vals in rows.items():
        cov, tail = np.mean(vals, axis=0)
        print(f"  {name:16s} CR {cov:.4f}  final-quarter {tail:.4f}  |gap| {abs(tail - target):.4f}")


if __name__ == "__main__":
    main()
