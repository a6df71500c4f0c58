"""Two properties of the continual prior and the mask prior.

First, each chunk's prior is the previous chunk's posterior, so training on the same chunk
again costs less and less KL. Second, the IBP concentration alpha sets how many hidden
units a regime switches on: a larger alpha gives a denser evaluation mask.
"""
from __future__ import annotations

import argparse

import numpy as np

from regimeshift.adaptive import structural_kl
from regimeshift.data import GeneratorConfig, generate
from regimeshift.pipeline import prepare
from regimeshift.training import TrainerConfig, TrainState, build_bank, carry_prior, train_chunk, train_stream


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3, help="seeds per alpha in the sparsity sweep")
    args = ap.parse_args()

    ds = generate("three_mode", GeneratorConfig(T=1000, seed=0))
    config = TrainerConfig(seed=0)
    stream, chunks, _ = prepare(ds, "segment", config)
    bank = build_bank(config, config.architecture(2, "forecast"), n_summary=stream.summaries.shape[1])
    state = TrainState.fresh(config)
    print("the same chunk five times:")
    for i in range(5):
        carry_prior(bank)
        kl = np.asarray(structural_kl(bank.store.values, bank.anchors, bank))[bank.materialized].sum()
        rep = train_chunk(bank, chunks[0], state, i)
        print(f"  pass {i}: KL right after carry {kl:.1f}, mean KL while training "
              f"{np.mean([s.kl for s in rep.steps]):8.3f}")

    print("\nmask density against the IBP concentration (one regime, 5 chunks of 100 steps):")
    for alpha in (0.5, 1.0, 2.0, 5.0):
        d = []
        for seed in range(args.seeds):
            data = generate("three_mode", GeneratorConfig(T=1000, seed=seed))
            c = TrainerConfig(seed=seed, alpha_ibp=alpha, n_regimes=1, steps=100)
            _, ch, _ = prepare(data, "segment", c)
            b, _ = train_stream(ch[:5], c, arch=c.architecture(2, "forecast"))
            d.append(b.mask_density().mean())
        print(f"  alpha {alpha:3g}: density {np.mean(d):.3f}")


if __name__ == "__main__":
    main()
