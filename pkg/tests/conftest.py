# conftest.py: hypothesis profiles and the shared law corpus
import os

import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

import config
from distcore import (
    Bernoulli, BernoulliSum, Binomial, Geometric, NegativeBinomial, Pmf,
    PointMass, Poisson, materialize,
)

np.seterr(all="ignore")
config.LOG_ENABLED = False

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))

CORPUS = {
    "bern_0.3": Bernoulli(0.3),
    "bin_2_0.5": Binomial(2, 0.5),
    "bin_10_0.2": Binomial(10, 0.2),
    "bin_3_0.4": Binomial(3, 0.4),
    "geo_1": Geometric(1.0),
    "negbin_3_1.5": NegativeBinomial(3, 1.5),
    "po_2": Poisson(2.0),
    "point_2": PointMass(2),
    "bsum": BernoulliSum([0.1, 0.4, 0.7]),
}

# ultra log-concave members (contiguous support)
ULC = ["bern_0.3", "bin_2_0.5", "bin_10_0.2", "bin_3_0.4", "po_2", "bsum"]


@pytest.fixture(scope="session")
def corpus():
    return {name: materialize(spec) for name, spec in CORPUS.items()}


@pytest.fixture(scope="session")
def ulc_corpus(corpus):
    return {name: corpus[name] for name in ULC}


@st.composite
def pmfs(draw, max_len: int = 12, positive: bool = False):
    """Exact (tail 0) PMFs on a short support."""
    size = draw(st.integers(min_value=2, max_value=max_len))
    lo = 0.05 if positive else 0.0
    raw = draw(st.lists(st.floats(min_value=lo, max_value=1.0), min_size=size, max_size=size))
    arr = np.asarray(raw, dtype=np.float64)
    if arr.sum() <= 0:
        arr[0] = 1.0
    if arr[-1] < 1e-6:
        arr[-1] = 1e-6
    return Pmf(arr / arr.sum())
