import math

import numpy as np
import pytest
from hypothesis import given
from sklearn.base import clone

from tailproc.clusterlab import (
    BlockClusterEstimator,
    BlockingScheme,
    ClusterBlock,
    anticlustering_diagnostic,
    cluster_blocks,
    default_scheme,
    empirical_cluster_measure,
    normalized_cluster_law,
    nu_star,
    nu_star_exact,
    nu_star_report,
)
from tailproc.functionals import FunctionalSpec as F
from tailproc.models import IID, Geometric, MovingAverage, simulate_series
from tailproc.seqspace import shift

from conftest import seqs

MA = MovingAverage(1.5, (1.0, 0.5))
GEOM = Geometric(1.0, 0.5)


@pytest.fixture(scope="module")
def iid_series():
    return simulate_series(IID(1.5), 400_000, 11)


@pytest.fixture(scope="module")
def ma_series():
    return simulate_series(MA, 400_000, 12)


def test_scheme_invariants(ma_series):
    s = default_scheme(ma_series)
    assert s.r_n == math.floor(400_000 ** 0.35) and s.k_n >= 50
    assert s.monitor == pytest.approx(0.02, rel=0.05) and s.monitor_ok
    with pytest.raises(ValueError):
        BlockingScheme(100, 10, 1.0)
    with pytest.raises(ValueError):
        BlockingScheme(1000, 10, -1.0)


@given(seqs(nonzero=True))
def test_cluster_block_representative_invariance(x):
    b = ClusterBlock.from_block(x.dense(x.start, x.stop - 1), 0)
    assert b.recanonicalized() == b
    assert ClusterBlock.from_block(shift(x, 3).dense(x.start + 3, x.stop + 2), 0).seq == b.seq


def test_nu_star_examples():
    assert nu_star(F.threshold(2.0), MA, 20_000, 1).agrees_with(MA.exact_theta() * 2 ** -1.5)
    # a single spike never has two exceedances
    assert nu_star(F.threshold(1.0, min_count=2), IID(1.5), 2_000, 1).value == 0
    # Q = (1, 1/2, 1/4, ...): two coordinates above 1 iff r/2 > 1, so theta 2^-alpha
    H = F.threshold(1.0, min_count=2)
    assert nu_star_exact(H, GEOM) == pytest.approx(0.25, abs=1e-12)
    assert nu_star(H, GEOM, 30_000, 2).agrees_with(0.25)


def test_nu_star_forms_agree():
    for H in (F.threshold(1.0), F.count_exceed(0.7), F.threshold(0.8, min_count=2)):
        rep = nu_star_report(H, GEOM, 30_000, 4)
        assert rep.passed, rep.summary()


def test_nu_star_rejects_non_cluster_functionals():
    with pytest.raises(ValueError):
        nu_star(F.threshold(1.0, coords=[0]), MA, 10, 0)
    with pytest.raises(ValueError):
        nu_star(F.sup(), MA, 10, 0)


def test_empirical_cluster_measure(iid_series, ma_series):
    e = empirical_cluster_measure(iid_series, default_scheme(iid_series), F.threshold(1.0))
    assert e.agrees_with(1.0)
    e = empirical_cluster_measure(ma_series, default_scheme(ma_series), F.threshold(1.0))
    assert e.agrees_with(MA.exact_theta())
    assert e.stderr > 0


def test_empirical_cluster_measure_without_exceedances():
    x = np.ones(10_000)
    s = BlockingScheme(10_000, 50, 2.0)
    with pytest.raises(ValueError, match="no exceedance"):
        empirical_cluster_measure(x, s, F.threshold(1.0))


def test_cluster_blocks_are_anchored(ma_series):
    s = default_scheme(ma_series)
    blocks = cluster_blocks(ma_series, s, 1.0)
    assert blocks
    for b in blocks[:20]:
        assert abs(b.seq[0]) == max(abs(b.seq.values)) and abs(b.seq[0]) > 1


def test_normalized_law_iid(iid_series):
    s = default_scheme(iid_series, tau=0.05)
    rep = normalized_cluster_law(iid_series, s, 1.0, [F.threshold(0.5, min_count=2)], IID(1.5))
    # normalized blocks are single spikes up to other independent exceedances
    assert rep.sides[0][1].value < 0.1
    assert rep.sides[1][1].value == 0


def test_normalized_law_needs_blocks(ma_series):
    s = default_scheme(ma_series)
    with pytest.raises(ValueError, match="blocks exceed"):
        normalized_cluster_law(ma_series, s, 50.0, [F.count_exceed(0.4)], MA)


def test_unverified_probe_flagged(ma_series):
    s = default_scheme(ma_series, tau=0.05)
    probe = F.custom(lambda v, o: (np.abs(v) > 0.4).sum(axis=1).astype(float), shift_invariant=True,
                     support_level=0.4, name="custom-count")
    rep = normalized_cluster_law(ma_series, s, 1.0, [probe], MA)
    assert any("not verified" in n for n in rep.notes)


def test_anticlustering(iid_series, ma_series):
    s = default_scheme(ma_series, tau=0.05)
    rows = anticlustering_diagnostic(ma_series, s, [1, 2, 5, 10], 1.0)
    vals = [r.estimate.value for r in rows]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    # lag one sees the partner coordinate half the time or more, further lags only noise
    assert vals[0] > 0.3 and vals[1] < 0.2
    si = default_scheme(iid_series, tau=0.05)
    rows = anticlustering_diagnostic(iid_series, si, [1], 1.0)
    assert rows[0].estimate.value < 0.2
    with pytest.raises(ValueError):
        anticlustering_diagnostic(ma_series, s, [0], 1.0)


def test_estimator_api(ma_series):
    est = BlockClusterEstimator(random_state=3)
    assert clone(est).get_params() == est.get_params()
    est.fit(ma_series.values)
    assert est.scheme_.monitor_ok
    assert est.cluster_measure(F.threshold(1.0)).agrees_with(MA.exact_theta())
    assert len(est.blocks(1.0)) > 0
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        BlockClusterEstimator().cluster_measure(F.threshold(1.0))
