import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tailproc.mc import (
    Estimate,
    Moments,
    compare,
    derive_seed,
    discrepancy_sigmas,
    report_from_moments,
    run_lanes,
    within_tolerance,
)


def _kernel(rng, m):
    x = rng.standard_normal(m)
    return np.column_stack([x, x + 0.01 * rng.standard_normal(m)])


def test_run_lanes_reproducible_and_thread_independent():
    a = run_lanes(_kernel, 50_000, 7, lanes=4)
    b = run_lanes(_kernel, 50_000, 7, lanes=4, n_jobs=4)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.m2, b.m2)
    c = run_lanes(_kernel, 50_000, 8, lanes=4)
    assert not np.array_equal(a.mean, c.mean)


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), min_size=1, max_size=6))
def test_moment_merge_matches_pooled(chunks):
    m = Moments(1)
    for c in chunks:
        m.update(np.array(c))
    pooled = np.concatenate([np.array(c) for c in chunks])
    assert m.n == pooled.size
    assert m.mean[0] == pytest.approx(pooled.mean(), abs=1e-8)
    if pooled.size > 1:
        assert m.cov[0, 0] == pytest.approx(pooled.var(ddof=1), rel=1e-7, abs=1e-6)


def test_non_finite_sample_rejected():
    with pytest.raises(FloatingPointError):
        Moments(1).update(np.array([1.0, np.inf]))


def test_paired_stderr_uses_correlation():
    mom = run_lanes(_kernel, 20_000, 1)
    assert mom.diff_stderr(0, 1) < 0.05 * math.hypot(mom.stderr(0), mom.stderr(1))
    rep = report_from_moments("pair", ["a", "b"], mom, 1)
    assert rep.comparisons[0].diff_stderr == pytest.approx(mom.diff_stderr(0, 1))


def test_tolerance_rule():
    assert within_tolerance(2.9, 1.0, 3.0)
    assert not within_tolerance(3.1, 1.0, 3.0)
    # float rounding between exact quantities is not a discrepancy
    assert within_tolerance(1e-13, 0.0, 3.0)
    assert discrepancy_sigmas(1e-13, 0.0) == 0.0
    assert discrepancy_sigmas(1e-3, 0.0) == math.inf
    assert math.isnan(float("nan")) and not within_tolerance(float("nan"), 1.0, 3.0)


def test_divergent_sides():
    inf = Estimate(math.inf, 0.0, 10)
    assert compare("a", inf, "b", inf).passed
    bad = compare("a", inf, "b", Estimate(1.0, 0.1, 10))
    assert not bad.passed and bad.sigmas == math.inf


def test_derive_seed_is_stable_and_label_sensitive():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert derive_seed(1, "a") != derive_seed(2, "a")


def test_estimate_helpers():
    e = Estimate(1.0, 0.1, 100)
    assert e.interval() == pytest.approx((0.7, 1.3))
    assert e.agrees_with(1.25) and not e.agrees_with(1.35)
    assert e.scaled(-2).stderr == pytest.approx(0.2)
    with pytest.raises(ValueError):
        Estimate(1.0, -1.0, 1)
