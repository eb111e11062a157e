import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from tailproc.seqspace import FiniteSeq

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite_floats = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@st.composite
def seqs(draw, max_len=8, nonneg=False, nonzero=False):
    start = draw(st.integers(-6, 6))
    elem = st.floats(0, 50, allow_nan=False) if nonneg else finite_floats
    vals = draw(st.lists(elem, min_size=1 if nonzero else 0, max_size=max_len))
    if nonzero and not any(vals):
        vals[0] = 1.0
    return FiniteSeq(start, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
