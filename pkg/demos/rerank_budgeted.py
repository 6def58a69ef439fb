"""Train an energy function that reranks base-model proposals.

The data come from a Hawkes process whose type-0 events are capped at 24 per
sequence. A Hawkes base model cannot represent the cap and often proposes
continuations that exceed it; the energy function learns to rank those low.
This mirrors configs/default.yaml and takes about a minute.

Run: python demos/rerank_budgeted.py
"""

import numpy as np

from eventrerank import (
    EnergyFunction,
    FeatureConfig,
    InferConfig,
    OptimizerConfig,
    RngStream,
    SynthSpec,
    TrainConfig,
    evaluate,
    fit_mle,
    generate,
    predict,
    split_dataset,
    train_energy,
)

params = {"mu": [1.4, 0.35, 0.35], "alpha": np.diag([0.05] * 3), "decay": np.ones((3, 3))}


def task(n, seed):
    return generate(SynthSpec("hawkes_budgeted", params, n, 20.0, seed, budget={0: 24}))


train, dev, test = task(1000, 1), task(200, 2), task(200, 3)
base = fit_mle("hawkes_exp", train, OptimizerConfig(method="lbfgs"), dev=dev)
print("base model mu:", np.round(base.mu, 3))

splits = {name: split_dataset(d, T=10.0, T_prime=20.0) for name, d in
          (("train", train), ("dev", dev), ("test", test))}
fcfg = FeatureConfig(3)
init = EnergyFunction(fcfg, hidden=(64, 32), rng=np.random.default_rng(0))
history = []
energy = train_energy(base, init, splits["train"],
                      TrainConfig(objective="multi", epochs=30, optimizer=OptimizerConfig(lr=1e-3)),
                      rng=RngStream(0), dev=splits["dev"], history=history)
for rec in history[:: max(1, len(history) // 5)]:
    print(f"epoch {rec['epoch']:2d}  train {rec['train_loss']:.4f}  dev {rec['dev_loss']:.4f}")

stream = RngStream(0).named("proposals")
hypro_pairs, base_pairs, over_budget = [], [], [0, 0]
for i, sp in enumerate(splits["test"]):
    chosen, proposals = predict(base, energy, sp.prefix, sp.T_prime, InferConfig(M=20),
                                stream.spawn(i))
    first = proposals[0].continuation
    hypro_pairs.append((sp.truth, chosen))
    base_pairs.append((sp.truth, first))
    room = 24 - int(sp.prefix.counts(3)[0])
    over_budget[0] += int(first.counts(3)[0] > room)
    over_budget[1] += int(chosen.counts(3)[0] > room)

h, b = evaluate(hypro_pairs, 3), evaluate(base_pairs, 3)
print(f"\ncount RMSE   base {b.rmse:.3f}   reranked {h.rmse:.3f}   ratio {h.rmse / b.rmse:.3f}")
print(f"mean OTD     base {b.otd_mean:.3f}   reranked {h.otd_mean:.3f}")
print(f"over budget  base {over_budget[0]}/{len(hypro_pairs)}   reranked {over_budget[1]}/{len(hypro_pairs)}")
