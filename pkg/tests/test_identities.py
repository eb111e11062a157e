import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tailproc.functionals import FunctionalSpec as F
from tailproc.identities import (
    METHODS,
    check_forward_identity,
    check_Q_theta_identity,
    check_slog_bound,
    cluster_index,
    harmonic_count,
    log_identities_alpha1,
    q_expectation_by_rejection,
    qsum_alpha_identity,
    slog,
    slog_gap_bound,
    theta_candidate,
    theta_candidates,
    ystar_pareto_test,
)
from tailproc.models import IID, Geometric, MovingAverage, builtin_models, enumerate_q, pareto
from tailproc.seqspace import FiniteSeq, PathBatch

GEOM = Geometric(1.0, 0.5)
MA = MovingAverage(1.5, (1.0, 0.5))


@pytest.mark.parametrize("model", [GEOM, MA], ids=lambda m: m.spec)
def test_hexagon_small(model):
    rep = theta_candidates(model, 20_000, 9, pairwise=True)
    assert rep.passed, rep.summary()


@pytest.mark.parametrize("method", ["ForwardDef", "BackwardDef", "HarmonicCount"])
def test_rao_blackwell_matches_direct_route(method):
    a = theta_candidate(MA, method, 50_000, 1, rao_blackwell=True)
    b = theta_candidate(MA, method, 50_000, 2, rao_blackwell=False)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.stderr, b.stderr)
    # integrating the radius out never costs variance (equality when the weight is 0/1)
    assert a.stderr <= 1.02 * b.stderr


def test_unknown_method():
    with pytest.raises(ValueError):
        theta_candidate(MA, "Nope", 10, 0)


def test_harmonic_count_closed_form_against_brute_force(rng):
    th = FiniteSeq(-1, [0.7, 1.0, 0.4, 0.9])
    alpha = 1.3
    exact = harmonic_count(PathBatch.from_seqs([th]), alpha)[0]
    r = pareto(rng, alpha, 400_000)
    counts = (np.abs(np.outer(r, th.values)) > 1).sum(axis=1)
    brute = 1.0 / counts
    assert abs(brute.mean() - exact) < 4 * brute.std() / math.sqrt(r.size)


@pytest.mark.parametrize("model", builtin_models(), ids=lambda m: m.spec)
def test_q_theta_and_forward(model):
    H = F.sup(model.alpha)
    assert check_Q_theta_identity(H, model, 20_000, 4).passed
    assert check_forward_identity(H, model, 20_000, 5).passed


def test_q_theta_exact_on_geometric():
    # Q = (1, rho, rho^2, ...) so theta E[sup^alpha(Q)] = theta
    rep = check_Q_theta_identity(F.sup(1.0), GEOM, 20_000, 1)
    assert rep.side("theta*E[H(Q)]").agrees_with(0.5)
    assert len(rep.sides) == 3


def test_q_identity_needs_shift_invariance():
    with pytest.raises(ValueError):
        check_Q_theta_identity(F.threshold(1.0, coords=[0]), MA, 10, 0)


def test_rejection_route_matches_reweighting():
    H = F.sum_abs_pow(1.0, 1.0)
    law = enumerate_q(MA)
    exact = sum(w * H(q) for w, q in law)
    assert q_expectation_by_rejection(H, MA, 20_000, 3).agrees_with(exact)


@pytest.mark.parametrize("alpha", [0.7, 1.0, 2.3])
def test_qsum(alpha):
    rep = qsum_alpha_identity(MA.with_alpha(alpha), 20_000, 6)
    assert rep.passed, rep.summary()


def test_qsum_exact_geometric():
    # theta sum_j rho^(j alpha) = (1 - rho^alpha) / (1 - rho^alpha) = 1 with zero variance
    rep = qsum_alpha_identity(GEOM, 5_000, 1)
    assert rep.side("theta*sum E|Q_j|^a").agrees_with(1.0)


def test_log_identities_geometric():
    rep = log_identities_alpha1(GEOM, 50_000, 2)
    assert rep.passed, rep.summary()
    # E[log ||Theta||_1] = E[(N+1) log 2] = 2 log 2 for Geometric(0.5, 1)
    assert rep.side("exact E[log|Theta|_1]").value == pytest.approx(2 * math.log(2), abs=1e-9)
    assert rep.side("bound violations").value == 0


def test_log_identities_preconditions():
    with pytest.raises(ValueError):
        log_identities_alpha1(MA, 10, 0)
    with pytest.raises(ValueError):
        log_identities_alpha1(IID(1.0, 0.5), 10, 0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6), st.floats(-1, 1),
       st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6))
def test_slog_bound_property(x, d, spread):
    x = np.array(x)
    y = np.array(spread[: len(x)] + [0.0] * (len(x) - len(spread[: len(x)])))
    y[0] += x.sum() + d - y.sum()
    gap, bound = slog_gap_bound(x[None, :], y[None, :])
    assert gap[0] <= bound[0] * (1 + 1e-9) + 1e-6


def test_slog_bound_battery():
    bad, ratio = check_slog_bound(20_000, 1)
    assert bad == 0 and ratio <= 1


def test_slog():
    np.testing.assert_allclose(slog(np.array([0.0, 1.0, -math.e])), [0.0, 0.0, -math.e])


def test_cluster_index_iid_exact():
    res = cluster_index(F.pos_part_sum_pow(1.0), IID(1.5), 6, 2_000, 0)
    for s in res.steps:
        assert s.b_k.value == pytest.approx(s.k, abs=1e-12) and s.b_k.stderr == 0


def test_cluster_index_geometric_slope():
    res = cluster_index(F.running_max_sum_pow(1.0), GEOM, 20, 30_000, 3)
    assert res.passed, res.report.summary()
    # b_k increasing with increments bounded by the Lipschitz constant times E|Theta_k|^alpha
    vals = [s.b_k.value for s in res.steps]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_cluster_index_preconditions():
    with pytest.raises(ValueError):
        cluster_index(F.sup(2.0), GEOM, 5, 10, 0)
    with pytest.raises(ValueError):
        cluster_index(F.signed_power_sum(1.0), GEOM, 5, 10, 0)


@pytest.mark.parametrize("model", [MA, GEOM], ids=lambda m: m.spec)
def test_conditioned_maximum_is_pareto(model):
    res, rate = ystar_pareto_test(model, 20_000, 5)
    assert res.pvalue > 1e-3
    assert abs(rate - model.exact_theta()) < 0.02


def test_methods_constant():
    assert len(METHODS) == 6
