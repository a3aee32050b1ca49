import numpy as np
import pytest
from hypothesis import strategies as st

from muller_ratchet.core import TypeDistribution


@st.composite
def simplex_points(draw, k_max=None, max_k=40):
    k = draw(st.integers(1, max_k)) if k_max is None else k_max
    raw = draw(st.lists(st.floats(0.0, 1.0), min_size=k + 1, max_size=k + 1))
    w = np.asarray(raw)
    if w.sum() <= 1e-6:
        w[0] = 1.0
    return TypeDistribution.from_unnormalized(w)


@pytest.fixture
def default_params():
    from muller_ratchet.core import ModelParams

    return ModelParams(alpha=0.03, lam=0.1, gamma=1e-4)
