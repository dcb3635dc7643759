import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthetic import (PIPELINE_CONFIG, SPLIT_SEED, VALID_FRACTION,
                       make_synthetic, synthetic_objectives)

from alrank import Experiment


@pytest.fixture(scope="session")
def synthetic_dataset():
    return make_synthetic()


@pytest.fixture(scope="session")
def experiment(synthetic_dataset):
    primary, subs = synthetic_objectives()
    return Experiment.prepare(synthetic_dataset, primary, subs,
                              valid_fraction=VALID_FRACTION,
                              split_seed=SPLIT_SEED)


@pytest.fixture(scope="session")
def small_experiment():
    """A few dozen queries; enough structure to train tiny models fast."""
    primary, subs = synthetic_objectives()
    ds = make_synthetic(n_queries=40, docs_per_query=12, seed=4321)
    return Experiment.prepare(ds, primary, subs, valid_fraction=0.25,
                              split_seed=3)
