"""Executable identities linking the spectral tail process, the sequence ``Q``
and the candidate extremal index.

Expectations under the law of ``Q`` are never sampled by rejection here.
Instead ``theta E[g(Q)] = E[g(Theta / Theta*) w(Theta)]`` with
``w = (1 - (Theta*_{-inf,-1})^alpha)_+`` the probability, given ``Theta``,
that ``R Theta`` has no backward exceedance of 1. Both sides of an identity
are then functions of the same draw of ``Theta`` and are compared with the
standard error of their paired difference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .functionals import FunctionalSpec
from .mc import Estimate, IdentityReport, compare, report_from_moments, run_lanes
from .models import SpectralModel, backward_weight, forward_weight, pareto, sample_conditioned_batch
from .seqspace import PathBatch

METHODS = ("ForwardDef", "BackwardDef", "InfargmaxProb", "RatioSupToAlphaSum", "ForwardDiff", "HarmonicCount")


def q_view(th: PathBatch, alpha: float) -> tuple[PathBatch, np.ndarray]:
    """``(Theta / Theta*, w)`` such that ``theta E[g(Q)] = E[g(Theta/Theta*) w]``."""
    return th.scale_rows(1.0 / th.sup()), backward_weight(th, alpha)


def harmonic_count(th: PathBatch, alpha: float) -> np.ndarray:
    """``E[1 / #{j : |R Theta_j| > 1} | Theta]`` with ``R`` Pareto(alpha), in closed form.

    With ``a_1 >= a_2 >= ...`` the sorted moduli and ``p_i = min(1, a_i^alpha)``,
    the count equals ``i`` with probability ``p_i - p_{i+1}``.
    """
    a = -np.sort(-np.abs(th.values), axis=1)
    p = np.minimum(1.0, a ** alpha)
    nxt = np.concatenate([p[:, 1:], np.zeros((p.shape[0], 1))], axis=1)
    i = np.arange(1, a.shape[1] + 1)
    return ((p - nxt) / i).sum(axis=1)


def _theta_columns(th: PathBatch, alpha: float, rng, methods, rao_blackwell: bool) -> np.ndarray:
    cols = []
    y = None
    if not rao_blackwell:
        y = th.scale_rows(pareto(rng, alpha, th.n))
    for m in methods:
        if m == "ForwardDef":
            c = forward_weight(th, alpha) if rao_blackwell else (y.window_max(1, math.inf) <= 1).astype(float)
        elif m == "BackwardDef":
            c = backward_weight(th, alpha) if rao_blackwell else (y.window_max(-math.inf, -1) <= 1).astype(float)
        elif m == "InfargmaxProb":
            c = (th.infargmax() == 0).astype(float)
        elif m == "RatioSupToAlphaSum":
            c = th.sup() ** alpha / (np.abs(th.values) ** alpha).sum(axis=1)
        elif m == "ForwardDiff":
            c = th.window_max(0, math.inf) ** alpha - th.window_max(1, math.inf) ** alpha
        elif m == "HarmonicCount":
            if rao_blackwell:
                c = harmonic_count(th, alpha)
            else:
                c = 1.0 / (np.abs(y.values) > 1).sum(axis=1)
        else:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
        cols.append(c)
    return np.column_stack(cols)


def theta_candidate(model: SpectralModel, method: str, n: int, rng_seed: int, lanes: int | None = None,
                    rao_blackwell: bool = True) -> Estimate:
    """Estimate the candidate extremal index by one of :data:`METHODS`.

    ``rao_blackwell=False`` samples the Pareto radius for the two definitions
    and the harmonic count instead of integrating it out.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    a = model.alpha

    def kernel(rng, m):
        return _theta_columns(model.sample(rng, m), a, rng, (method,), rao_blackwell)

    return run_lanes(kernel, n, rng_seed, lanes=lanes).estimate(0, rng_seed)


def theta_candidates(model: SpectralModel, n: int, rng_seed: int, lanes: int | None = None,
                     methods=METHODS, reference: float | None = None, tol: float = 3.0,
                     pairwise: bool | None = None) -> IdentityReport:
    """All candidate-index formulas on shared draws.

    Each method is compared with ``reference`` (the model's exact value when
    available). Without a reference, or with ``pairwise=True``, methods are
    also compared with each other using paired standard errors.
    """
    a = model.alpha
    methods = tuple(methods)

    def kernel(rng, m):
        return _theta_columns(model.sample(rng, m), a, rng, methods, True)

    mom = run_lanes(kernel, n, rng_seed, lanes=lanes)
    if reference is None:
        reference = model.exact_theta()
    pairs = []
    exact = {}
    if reference is not None:
        exact["exact"] = reference
        pairs += [(m, "exact") for m in methods]
    if pairwise or reference is None:
        pairs += [(methods[i], methods[j]) for i in range(len(methods)) for j in range(i + 1, len(methods))]
    return report_from_moments(f"extremal-index[{model.spec}]", methods, mom, rng_seed, pairs, exact, tol)


def _require_shift_invariant(H: FunctionalSpec):
    if not H.shift_invariant:
        raise ValueError(f"{H.label} is not declared shift invariant")


def check_Q_theta_identity(H: FunctionalSpec, model: SpectralModel, n: int, rng_seed: int,
                           lanes: int | None = None, tol: float = 3.0) -> IdentityReport:
    """``theta E[H(Q)] = E[H(Theta) 1{I(Theta)=0}] (= E[H(Theta) / ||Theta||_alpha^alpha])``.

    The third side is included only when ``H`` is homogeneous of degree ``alpha``.
    """
    _require_shift_invariant(H)
    a = model.alpha
    third = H.degree is not None and math.isclose(H.degree, a)

    def kernel(rng, m):
        th = model.sample(rng, m)
        q, w = q_view(th, a)
        h = H.evaluate(th)
        cols = [H.evaluate(q) * w, h * (th.infargmax() == 0)]
        if third:
            cols.append(h / (np.abs(th.values) ** a).sum(axis=1))
        return np.column_stack(cols)

    labels = ["theta*E[H(Q)]", "E[H(Theta)1{I=0}]"] + (["E[H(Theta)/|Theta|_a^a]"] if third else [])
    mom = run_lanes(kernel, n, rng_seed, lanes=lanes)
    return report_from_moments(f"q-theta[{model.spec}|{H.label}]", labels, mom, rng_seed, tol=tol)


def qsum_alpha_identity(model: SpectralModel, n: int, rng_seed: int, lanes: int | None = None,
                        tol: float = 3.0) -> IdentityReport:
    """``theta sum_j E|Q_j|^alpha = 1`` and
    ``theta E[(sum_j |Q_j|)^alpha] = E[(sum_j |Theta_j|)^(alpha-1)]``.

    The forward moment ``E[(sum_{j>=0} |Theta_j|)^(alpha-1)]`` is reported as a
    side without comparison: its finiteness is equivalent to that of the two
    previous quantities, but it is not equal to them.
    """
    a = model.alpha

    def kernel(rng, m):
        th = model.sample(rng, m)
        q, w = q_view(th, a)
        aq = np.abs(q.values)
        at = np.abs(th.values)
        return np.column_stack([
            w * (aq ** a).sum(axis=1),
            w * aq.sum(axis=1) ** a,
            at.sum(axis=1) ** (a - 1),
            np.abs(th.restrict(0, math.inf).values).sum(axis=1) ** (a - 1),
        ])

    labels = ["theta*sum E|Q_j|^a", "theta*E[|Q|_1^a]", "E[|Theta|_1^(a-1)]", "E[|Theta_0,inf|_1^(a-1)]"]
    mom = run_lanes(kernel, n, rng_seed, lanes=lanes)
    pairs = [("theta*sum E|Q_j|^a", "one"), ("theta*E[|Q|_1^a]", "E[|Theta|_1^(a-1)]")]
    return report_from_moments(f"q-sum[{model.spec}]", labels, mom, rng_seed, pairs, {"one": 1.0}, tol)


def check_forward_identity(H: FunctionalSpec, model: SpectralModel, n: int, rng_seed: int,
                           lanes: int | None = None, tol: float = 3.0) -> IdentityReport:
    """``theta E[H(Q)] = E[H(Theta_{0,inf}) - H(Theta_{1,inf})]`` for shift invariant,
    alpha-homogeneous ``H``."""
    _require_shift_invariant(H)
    a = model.alpha
    report_notes = []
    if H.degree is None or not math.isclose(H.degree, a):
        report_notes.append(f"{H.label} is not declared {a:g}-homogeneous; identity not guaranteed")

    def kernel(rng, m):
        th = model.sample(rng, m)
        q, w = q_view(th, a)
        fwd = H.evaluate(th.restrict(0, math.inf)) - H.evaluate(th.restrict(1, math.inf))
        return np.column_stack([H.evaluate(q) * w, fwd])

    labels = ["theta*E[H(Q)]", "E[H(Theta_0,inf)-H(Theta_1,inf)]"]
    mom = run_lanes(kernel, n, rng_seed, lanes=lanes)
    rep = report_from_moments(f"forward[{model.spec}|{H.label}]", labels, mom, rng_seed, tol=tol)
    rep.notes.extend(report_notes)
    return rep


# alpha = 1 log identities ----------------------------------------------------

def slog(s: np.ndarray) -> np.ndarray:
    """``s log|s|`` with ``0 log 0 = 0``."""
    a = np.abs(np.asarray(s, dtype=float))
    return np.sign(s) * special.xlogy(a, a)


def slog_gap_bound(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``|S(x)log|S(x)| - S(y)log|S(y)||`` and ``2 + log_+(||x||_1 v ||y||_1)``.

    The first never exceeds the second when ``|S(x) - S(y)| <= 1``.
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    gap = np.abs(slog(x.sum(axis=1)) - slog(y.sum(axis=1)))
    norm = np.maximum(np.abs(x).sum(axis=1), np.abs(y).sum(axis=1))
    return gap, 2.0 + np.maximum(np.log(np.maximum(norm, 1e-300)), 0.0)


def random_slog_pairs(rng: np.random.Generator, n: int, width: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Random signed pairs with ``|S(x) - S(y)| <= 1`` spanning many scales."""
    scale = np.exp(rng.uniform(-8, 8, (n, 1)))
    x = rng.standard_normal((n, width)) * scale
    x[rng.random((n, width)) < 0.3] = 0.0
    y = x + rng.standard_normal((n, width)) * scale * rng.random((n, 1))
    # move y's sum to within one of x's sum without touching its spread
    d = rng.uniform(-1, 1, n)
    y[:, 0] += x.sum(axis=1) + d - y.sum(axis=1)
    return x, y


def check_slog_bound(n: int, rng_seed: int) -> tuple[int, float]:
    """Violations of the bound on ``n`` random pairs, and the largest gap/bound ratio."""
    rng = np.random.default_rng(rng_seed)
    x, y = random_slog_pairs(rng, n)
    gap, bound = slog_gap_bound(x, y)
    return int(np.sum(gap > bound * (1 + 1e-12))), float(np.max(gap / bound))


def _l1_log_terms(v: np.ndarray) -> np.ndarray:
    """``sum_j |v_j| log(||v||_1 / |v_j|)`` with zero terms dropped."""
    a = np.abs(v)
    s = a.sum(axis=1)
    return special.xlogy(s, s) - special.xlogy(a, a).sum(axis=1)


def log_identities_alpha1(model: SpectralModel, n: int, rng_seed: int, lanes: int | None = None,
                          tol: float = 3.0) -> IdentityReport:
    """The two tail-index-one log identities.

    ``theta sum_j E[Q_j log(||Q||_1 / Q_j)] = E[log ||Theta||_1]`` and
    ``theta (E[S_Q log S_Q] - sum_j E[Q_j log Q_j]) = E[S_0 log S_0 - S_1 log S_1]``
    with ``S_i = sum_{j >= i} Theta_j``. The sum-log bound is checked on every
    sampled pair ``(Theta_{0,inf}, Theta_{1,inf})``.
    """
    if not math.isclose(model.alpha, 1.0):
        raise ValueError("log identities need alpha = 1")
    if not model.nonnegative:
        raise ValueError("log identities need a nonnegative model")
    a = 1.0

    def kernel(rng, m):
        th = model.sample(rng, m)
        q, w = q_view(th, a)
        f0 = th.restrict(0, math.inf).values
        f1 = th.restrict(1, math.inf).values
        s0, s1 = f0.sum(axis=1), f1.sum(axis=1)
        sq = q.values.sum(axis=1)
        gap, bound = slog_gap_bound(f0, f1)
        return np.column_stack([
            w * _l1_log_terms(q.values),
            np.log(np.abs(th.values).sum(axis=1)),
            w * (slog(sq) - special.xlogy(q.values, q.values).sum(axis=1)),
            slog(s0) - slog(s1),
            (gap > bound * (1 + 1e-12)).astype(float),
        ])

    labels = ["theta*sum E[Q log(|Q|_1/Q)]", "E[log|Theta|_1]", "theta*E[SQ log SQ - sum Q log Q]",
              "E[S0 log S0 - S1 log S1]", "bound violations"]
    mom = run_lanes(kernel, n, rng_seed, lanes=lanes)
    exact = {"zero": 0.0}
    pairs = [(labels[0], labels[1]), (labels[2], labels[3]), (labels[4], "zero")]
    law = model.enumerate()
    if law is not None:
        b = PathBatch.from_seqs([th for _, th in law])
        p = np.array([wt for wt, _ in law])
        exact["exact E[log|Theta|_1]"] = float(np.dot(p, np.log(np.abs(b.values).sum(axis=1))))
        f0, f1 = b.restrict(0, math.inf).values, b.restrict(1, math.inf).values
        exact["exact E[S0 log S0 - S1 log S1]"] = float(np.dot(p, slog(f0.sum(axis=1)) - slog(f1.sum(axis=1))))
        pairs += [(labels[1], "exact E[log|Theta|_1]"), (labels[3], "exact E[S0 log S0 - S1 log S1]")]
    return report_from_moments(f"log-alpha1[{model.spec}]", labels, mom, rng_seed, pairs, exact, tol)


# cluster indices --------------------------------------------------------------

@dataclass
class ClusterIndexStep:
    k: int
    b_k: Estimate
    diff: Estimate | None


@dataclass
class ClusterIndexResult:
    steps: list[ClusterIndexStep]
    limit: Estimate
    report: IdentityReport

    @property
    def slope(self) -> Estimate:
        """The last increment ``b_K - b_{K-1}``."""
        return self.steps[-2].diff

    @property
    def passed(self) -> bool:
        return self.report.passed


def cluster_index(H: FunctionalSpec, model: SpectralModel, k_max: int, n: int, rng_seed: int,
                  lanes: int | None = None, tol: float = 3.0) -> ClusterIndexResult:
    """Cluster indices ``b_k(H)``, ``k = 1..k_max``, accumulated from their increments.

    ``b_1 = E[H_+^alpha(Theta_0)]`` and
    ``b_{k+1} - b_k = E[H_+^alpha(Theta_{0,k}) - H_+^alpha(Theta_{1,k})]``. The last
    increment is compared with the limit ``theta E[H_+^alpha(Q)]``.
    """
    _require_shift_invariant(H)
    if H.degree is None or not math.isclose(H.degree, 1.0):
        raise ValueError(f"{H.label} must be 1-homogeneous")
    if H.lipschitz is None:
        raise ValueError(f"{H.label} has no declared Lipschitz bound")
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    a = model.alpha

    def hpa(batch):
        return np.maximum(H.evaluate(batch), 0.0) ** a

    def kernel(rng, m):
        th = model.sample(rng, m)
        q, w = q_view(th, a)
        diffs = [hpa(th.restrict(0, k)) - hpa(th.restrict(1, k)) for k in range(1, k_max)]
        b = np.cumsum(np.column_stack([hpa(th.restrict(0, 0))] + diffs), axis=1)
        return np.column_stack([b, np.column_stack(diffs), hpa(q) * w])

    mom = run_lanes(kernel, n, rng_seed, lanes=lanes)
    K = k_max
    steps = []
    for k in range(1, K + 1):
        diff = mom.estimate(K + k - 1, rng_seed) if k < K else None
        steps.append(ClusterIndexStep(k, mom.estimate(k - 1, rng_seed), diff))
    limit = mom.estimate(2 * K - 1, rng_seed)
    slope = steps[-2].diff
    comps = [compare(f"b_{K}-b_{K-1}", slope, "theta*E[H+^a(Q)]", limit, mom.diff_stderr(2 * K - 2, 2 * K - 1), tol)]
    rep = IdentityReport(f"cluster-index[{model.spec}|{H.label}]",
                         [(f"b_{K}", steps[-1].b_k), (f"b_{K}-b_{K-1}", slope), ("theta*E[H+^a(Q)]", limit)],
                         comps)
    return ClusterIndexResult(steps, limit, rep)


# law of the conditioned maximum -------------------------------------------------

def ystar_pareto_test(model: SpectralModel, n: int, rng_seed: int):
    """KS test that ``Y*`` given no backward exceedance is Pareto(alpha).

    Returns the :func:`scipy.stats.kstest` result and the acceptance rate,
    itself an estimate of the candidate extremal index.
    """
    rng = np.random.default_rng(rng_seed)
    a = model.alpha
    got = []
    tried = 0
    while sum(len(g) for g in got) < n:
        m = max(1024, n)
        th = model.sample(rng, m)
        y = th.scale_rows(pareto(rng, a, m))
        ok = y.window_max(-math.inf, -1) <= 1.0
        got.append(y.sup()[ok])
        tried += m
    ys = np.concatenate(got)[:n]
    res = stats.kstest(ys, lambda v: 1.0 - np.maximum(v, 1.0) ** (-a))
    return res, sum(len(g) for g in got) / tried


def q_expectation_by_rejection(H: FunctionalSpec, model: SpectralModel, n: int, rng_seed: int) -> Estimate:
    """``E[H(Q)]`` from rejection-sampled ``Q`` (the plain route, no reweighting)."""
    q = sample_conditioned_batch(model, "NoBackwardExceedance", n, rng_seed)
    h = H.evaluate(q)
    return Estimate(float(h.mean()), float(h.std(ddof=1) / math.sqrt(n)), n, rng_seed)
