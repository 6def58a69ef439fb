"""Fit a Hawkes model to simulated data and draw continuations of one prefix.

Run: python demos/fit_and_sample.py
"""

import numpy as np

from eventrerank import (
    HawkesExpModel,
    OptimizerConfig,
    RngStream,
    SynthSpec,
    draw_noise,
    fit_mle,
    generate,
    split_at_horizon,
)

truth = HawkesExpModel(mu=[0.6, 0.3], alpha=[[0.4, 0.1], [0.2, 0.3]], decay=[[1.5, 1.0], [1.0, 2.0]])
print("generating model:", truth)

# 400 sequences on [0, 30] from the model above
spec = SynthSpec("hawkes", {"mu": truth.mu, "alpha": truth.alpha, "decay": truth.decay},
                 num_seqs=400, horizon=30.0, seed=1)
data = generate(spec)
print(f"{len(data)} sequences, {sum(len(s) for s in data.sequences)} events in total")

fitted = fit_mle("hawkes_exp", data, OptimizerConfig(method="lbfgs"))
print("recovered mu:   ", np.round(fitted.mu, 3))
print("recovered alpha:", np.round(fitted.alpha, 3).tolist())
print("spectral radius of alpha/decay:", round(float(max(abs(np.linalg.eigvals(fitted.branching_matrix)))), 3))

# five continuations of the first sequence beyond t = 15, each from its own substream
split = split_at_horizon(data.sequences[0], 15.0, 30.0)
print(f"\nprefix has {len(split.prefix)} events; true continuation has {len(split.truth)}")
for i, cont in enumerate(draw_noise(fitted, split.prefix, 30.0, 5, RngStream(7))):
    print(f"  draw {i}: {len(cont)} events, counts per type {cont.counts(2).tolist()}")
