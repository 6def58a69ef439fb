import math

import numpy as np
import pytest

from eventrerank import RngStream, SynthSpec, SynthSpecError, fit_mle, generate
from eventrerank.fitting import OptimizerConfig
from eventrerank.synth import acceptance_rate, within_budget

TASK_PARAMS = {"mu": [1.4, 0.35, 0.35], "alpha": np.diag([0.05] * 3).tolist(),
               "decay": np.ones((3, 3)).tolist()}


def test_poisson_mean_count():
    d = generate(SynthSpec("poisson", {"rates": [2.0]}, num_seqs=1000, horizon=10.0, seed=4))
    counts = np.array([len(s) for s in d.sequences])
    assert abs(counts.mean() - 20.0) <= 3 * math.sqrt(20.0 / 1000)
    assert all(s.t_start == 0.0 and s.t_end == 10.0 for s in d.sequences)


def test_zero_budget_excludes_type():
    spec = SynthSpec("hawkes_budgeted",
                     {"mu": [0.05, 1.0], "alpha": [[0.1, 0], [0, 0.1]], "decay": [[1, 1], [1, 1]]},
                     num_seqs=100, horizon=5.0, seed=1, budget={0: 0})
    d = generate(spec)
    assert all(0 not in s.types for s in d.sequences)


def test_same_seed_same_dataset():
    spec = SynthSpec("hawkes", TASK_PARAMS, num_seqs=20, horizon=20.0, seed=3)
    a, b = generate(spec), generate(spec)
    assert a.sequences == b.sequences and a.seq_ids == b.seq_ids
    assert generate(SynthSpec("hawkes", TASK_PARAMS, 20, 20.0, seed=4)).sequences != a.sequences


def test_too_tight_budget():
    spec = SynthSpec("hawkes_budgeted", TASK_PARAMS, num_seqs=5, horizon=20.0, budget={0: 0})
    with pytest.raises(SynthSpecError, match="rejects"):
        generate(spec)


@pytest.mark.parametrize("kwargs", [
    {"generator": "nope", "params": {}, "num_seqs": 1, "horizon": 1.0},
    {"generator": "poisson", "params": {"rates": [1.0]}, "num_seqs": 0, "horizon": 1.0},
    {"generator": "hawkes_budgeted", "params": TASK_PARAMS, "num_seqs": 1, "horizon": 1.0},
    {"generator": "hawkes", "params": {"mu": [1.0]}, "num_seqs": 1, "horizon": 1.0},
    {"generator": "hawkes_budgeted", "params": TASK_PARAMS, "num_seqs": 1, "horizon": 1.0,
     "budget": {7: 1}},
])
def test_invalid_specs(kwargs):
    with pytest.raises(SynthSpecError):
        SynthSpec(**kwargs)


def test_spec_dict_round_trip():
    spec = SynthSpec("hawkes_budgeted", TASK_PARAMS, 10, 20.0, seed=2, budget={0: 24})
    again = SynthSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()
    assert generate(again).sequences == generate(spec).sequences


def test_budget_gap_against_refit_model():
    """The budgeted data never breaks the cap; an unconstrained refit breaks it often."""
    spec = SynthSpec("hawkes_budgeted", TASK_PARAMS, num_seqs=1000, horizon=20.0, seed=1,
                     budget={0: 24})
    data = generate(spec)
    assert all(within_budget(s, spec.budget) for s in data.sequences)
    refit = fit_mle("hawkes_exp", data, OptimizerConfig(method="lbfgs"))
    broken = 1.0 - acceptance_rate(refit, 20.0, spec.budget, 2000, RngStream(99))
    assert broken >= 0.20
