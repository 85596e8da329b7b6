"""Validation accuracy and NLL as a function of the uncertainty-loss weight.

w2 = 0 leaves the surrogate at its initial parameters, so the first row is
the untrained-surrogate reference.

    python scripts/training_effect.py --w2 0 0.01 0.1 1 --seed 0
"""

import argparse
from dataclasses import replace

from cuqds.config import RunConfig
from cuqds.data import generate_scenario
from cuqds.experiment import train_models, validation_summary


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--w2", type=float, nargs="+", default=[0.0, 0.01, 0.1, 1.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--noise-init", type=float, default=0.1)
    args = ap.parse_args()

    cfg = RunConfig(seed=args.seed, epochs=args.epochs, noise_init=args.noise_init)
    train, val, _ = generate_scenario(cfg.scenario())
    base = None
    print(f"{'w2':>6} {'minADE_1':>9} {'NLL':>8} {'dNLL%':>7} {'sigma':>7} {'l1':>7} {'l2':>7} {'noise':>7}")
    for w2 in args.w2:
        predictor, surrogate, _ = train_models(replace(cfg, w2=w2), train, val)
        s = validation_summary(val, predictor, surrogate)
        base = s if base is None else base
        drop = 100.0 * (base.nll - s.nll) / abs(base.nll)
        print(f"{w2:6g} {s.min_ade_1:9.4f} {s.nll:8.4f} {drop:7.1f} {s.mean_sigma:7.3f} "
              f"{surrogate.kernel.l1:7.3f} {surrogate.kernel.l2:7.3f} {surrogate.noise_std:7.3f}")


if __name__ == "__main__":
    main()
