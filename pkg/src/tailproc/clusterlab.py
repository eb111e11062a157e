"""Cluster convergence in the time-series world.

A long stationary series is cut into ``k_n`` disjoint blocks of length
``r_n``. Block statistics scaled by ``c_n`` are compared with their limits,
which are computed in the spectral world:

* the cluster measure ``nu*(H) = theta int E[H(r Q)] alpha r^(-alpha-1) dr``,
* the law of a block divided by its maximum, given a large maximum, which
  tends to the law of ``Q``, with a maximum that is asymptotically Pareto.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .functionals import FunctionalSpec
from .identities import q_view
from .mc import Estimate, IdentityReport, compare, derive_seed, report_from_moments, run_lanes
from .models import SpectralModel, TimeSeries, enumerate_q
from .seqspace import FiniteSeq, PathBatch, canonical_anchor

MONITOR_MAX = 0.05
MIN_BLOCKS = 50
MIN_QUALIFYING = 100
N_BOOT = 200


@dataclass(frozen=True)
class BlockingScheme:
    """Block length ``r_n``, level ``c_n`` and the empirical exceedance rate at ``c_n``."""

    n: int
    r_n: int
    c_n: float
    u_grid: tuple[float, ...] = (1.0, 2.0)
    exceed_prob: float = math.nan

    def __post_init__(self):
        if self.r_n < 1 or self.n < self.r_n:
            raise ValueError("need 1 <= r_n <= n")
        if not self.c_n > 0:
            raise ValueError("c_n must be positive")
        if self.k_n < MIN_BLOCKS:
            raise ValueError(f"only {self.k_n} blocks, need at least {MIN_BLOCKS}")

    @property
    def k_n(self) -> int:
        return self.n // self.r_n

    @property
    def monitor(self) -> float:
        """``r_n P(|X_0| > c_n)``, which must be small for the blocks to isolate clusters."""
        return self.r_n * self.exceed_prob

    @property
    def monitor_ok(self) -> bool:
        return self.monitor < MONITOR_MAX

    def describe(self) -> str:
        return (f"n={self.n}|r_n={self.r_n}|k_n={self.k_n}|c_n={self.c_n:.6g}"
                f"|r_nP={self.monitor:.4g}")


def _values(series) -> np.ndarray:
    v = series.values if isinstance(series, TimeSeries) else series
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("series must be one-dimensional")
    return v


def default_scheme(series, exponent: float = 0.35, tau: float = 0.02,
                   u_grid: Sequence[float] = (1.0, 2.0), r_n: int | None = None,
                   c_n: float | None = None) -> BlockingScheme:
    """``r_n = floor(n^exponent)`` and ``c_n`` the ``(1 - tau / r_n)``-quantile of ``|X|``.

    The level makes ``r_n P(|X_0| > c_n)`` close to ``tau``, so the scheme
    monitor passes by construction while about ``tau k_n`` blocks exceed.
    """
    x = np.abs(_values(series))
    n = x.size
    r = int(r_n) if r_n is not None else int(math.floor(n ** exponent))
    if c_n is None:
        c_n = float(np.quantile(x, 1.0 - tau / r))
    p = float(np.mean(x > c_n))
    return BlockingScheme(n, r, float(c_n), tuple(float(u) for u in u_grid), p)


def _with_rate(series, scheme: BlockingScheme) -> BlockingScheme:
    if math.isnan(scheme.exceed_prob):
        p = float(np.mean(np.abs(_values(series)) > scheme.c_n))
        scheme = BlockingScheme(scheme.n, scheme.r_n, scheme.c_n, scheme.u_grid, p)
    return scheme


def _blocks(series, scheme: BlockingScheme) -> np.ndarray:
    x = _values(series)
    if x.size < scheme.n:
        raise ValueError("series shorter than the scheme")
    k, r = scheme.k_n, scheme.r_n
    return x[: k * r].reshape(k, r)


@dataclass(frozen=True)
class ClusterBlock:
    """A block as a shift class: the representative anchored at its infargmax."""

    seq: FiniteSeq
    index: int

    @classmethod
    def from_block(cls, values: np.ndarray, index: int) -> "ClusterBlock":
        return cls(canonical_anchor(FiniteSeq(0, np.asarray(values, dtype=float))), int(index))

    def recanonicalized(self) -> "ClusterBlock":
        return ClusterBlock(canonical_anchor(self.seq), self.index)


def cluster_blocks(series, scheme: BlockingScheme, u: float = 1.0) -> list[ClusterBlock]:
    """Blocks with ``max |X| > c_n u``, scaled by ``c_n`` and anchored."""
    b = _blocks(series, scheme) / scheme.c_n
    idx = np.flatnonzero(np.abs(b).max(axis=1) > u)
    return [ClusterBlock.from_block(b[i], i) for i in idx]


def _require_cluster_functional(H: FunctionalSpec):
    if not H.shift_invariant:
        raise ValueError(f"{H.label} is not declared shift invariant")
    if H.support_level is None or not H.support_level > 0:
        raise ValueError(f"{H.label} must vanish near zero (positive support_level)")


def _bootstrap_ratio(h: np.ndarray, counts: np.ndarray, r: int, n_boot: int, seed: int) -> float:
    """Block-bootstrap stderr of ``mean(h) / (mean(counts) / r)``."""
    rng = np.random.default_rng(seed)
    k = h.size
    w = rng.multinomial(k, np.full(k, 1.0 / k), size=n_boot).astype(float)
    num = w @ h / k
    den = w @ counts / (k * r)
    ok = den > 0
    ratio = num[ok] / (r * den[ok])
    return float(ratio.std(ddof=1)) if ratio.size > 1 else math.inf


def empirical_cluster_measure(series, scheme: BlockingScheme, H: FunctionalSpec,
                              n_boot: int = N_BOOT, seed: int = 0) -> Estimate:
    """``mean_blocks H(c_n^{-1} X_block) / (r_n P(|X_0| > c_n))`` with block-bootstrap stderr.

    The exceedance probability is the empirical rate over the blocked part of
    the series.
    """
    _require_cluster_functional(H)
    b = _blocks(series, scheme)
    counts = (np.abs(b) > scheme.c_n).sum(axis=1).astype(float)
    p = counts.sum() / b.size
    if p == 0:
        raise ValueError(f"no exceedance of c_n={scheme.c_n:g}")
    h = H.evaluate(PathBatch(b / scheme.c_n, 0))
    value = float(h.mean() / (scheme.r_n * p))
    se = _bootstrap_ratio(h, counts, scheme.r_n, n_boot, derive_seed(seed, "boot", H.label))
    return Estimate(value, se, scheme.k_n, seed)


def nu_star_report(H: FunctionalSpec, model: SpectralModel, n: int, rng_seed: int,
                   lanes: int | None = None, tol: float = 3.0) -> IdentityReport:
    """The cluster measure through ``Q`` and through ``1{I(Theta) = 0}``, paired."""
    _require_cluster_functional(H)
    a = model.alpha

    def kernel(rng, m):
        th = model.sample(rng, m)
        q, w = q_view(th, a)
        via_q = np.where(w > 0, H.radial(q, 0.0, a, rng) * w, 0.0)
        anchored = H.radial(th, 0.0, a, rng) * (th.infargmax() == 0)
        return np.column_stack([via_q, anchored])

    mom = run_lanes(kernel, n, rng_seed, lanes=lanes)
    labels = ("theta*int E[H(rQ)]", "int E[H(rTheta)1{I=0}]")
    rep = report_from_moments(f"nu*[{model.spec}|{H.label}]", labels, mom, rng_seed, tol=tol)
    if H.kind == "custom":
        rep.notes.append("radial integral importance sampled")
    return rep


def nu_star(H: FunctionalSpec, model: SpectralModel, n: int, rng_seed: int,
            lanes: int | None = None, tol: float = 3.0) -> Estimate:
    """``nu*(H)`` for a shift-invariant ``H`` vanishing near zero.

    Both forms are computed; a disagreement beyond ``tol`` stderr is reported
    as a warning, since it is a Monte Carlo event rather than an error.
    """
    rep = nu_star_report(H, model, n, rng_seed, lanes, tol)
    if not rep.passed:
        warnings.warn(f"{rep.name}: forms differ by {rep.max_discrepancy_sigmas:.2f} sigma", RuntimeWarning,
                      stacklevel=2)
    return rep.sides[0][1]


def nu_star_exact(H: FunctionalSpec, model: SpectralModel) -> float:
    """``nu*(H)`` by enumerating the law of ``Q`` (closed-form radial kinds only)."""
    _require_cluster_functional(H)
    if not H.has_closed_radial or H.kind == "custom":
        raise ValueError(f"{H.label}: no closed-form radial integral")
    theta = model.exact_theta()
    law = enumerate_q(model)
    batch = PathBatch.from_seqs([q for _, q in law])
    vals = H.radial(batch, 0.0, model.alpha)
    return float(theta * np.dot([w for w, _ in law], vals))


def _q_mean(h: FunctionalSpec, model: SpectralModel, n: int, seed: int) -> Estimate:
    if model.enumerate() is not None:
        law = enumerate_q(model)
        batch = PathBatch.from_seqs([q for _, q in law])
        return Estimate.exact(float(np.dot([w for w, _ in law], h.evaluate(batch))))
    theta = model.exact_theta()

    def kernel(rng, m):
        th = model.sample(rng, m)
        q, w = q_view(th, model.alpha)
        return np.column_stack([h.evaluate(q) * w, w])

    mom = run_lanes(kernel, n, seed)
    if theta is not None:
        return mom.estimate(0, seed).scaled(1.0 / theta)
    # ratio estimator with delta-method stderr
    m0, m1 = mom.mean
    c = mom.cov
    r = m0 / m1
    var = (c[0, 0] - 2 * r * c[0, 1] + r * r * c[1, 1]) / (m1 * m1 * mom.n)
    return Estimate(float(r), float(math.sqrt(max(var, 0.0))), mom.n, seed)


BUILTIN_PROBE_KINDS = ("threshold", "count_exceed", "const")


def normalized_cluster_law(series, scheme: BlockingScheme, u: float, probes: Sequence[FunctionalSpec],
                           model: SpectralModel, v_grid: Sequence[float] = (1.5, 2.0),
                           n_model: int = 200_000, seed: int = 0, tol: float = 3.0) -> IdentityReport:
    """Blocks with maximum above ``c_n u``, divided by their maximum, against ``Q``.

    For each probe ``h`` the mean of ``h(block / block*)`` over qualifying
    blocks is compared with ``E[h(Q)]``. For each ``v`` in ``v_grid`` the
    fraction of qualifying blocks whose maximum also exceeds ``c_n u v`` is
    compared with ``v^(-alpha)``.
    """
    b = _blocks(series, scheme)
    star = np.abs(b).max(axis=1)
    sel = star > scheme.c_n * u
    m = int(sel.sum())
    if m < MIN_QUALIFYING:
        raise ValueError(f"only {m} blocks exceed c_n u, need {MIN_QUALIFYING}")
    normed = PathBatch(b[sel] / star[sel, None], 0)
    rep = IdentityReport(f"cluster-law[{scheme.describe()}|u={u:g}]", [])
    for i, h in enumerate(probes):
        if not h.shift_invariant:
            raise ValueError(f"probe {h.label} is not shift invariant")
        vals = h.evaluate(normed)
        emp = Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m)), m, seed)
        ref = _q_mean(h, model, n_model, derive_seed(seed, "probe", i))
        la, lb = f"E[{h.label}(X/X*)|X*>c_n u]", f"E[{h.label}(Q)]"
        rep.sides += [(la, emp), (lb, ref)]
        rep.comparisons.append(compare(la, emp, lb, ref, tol=tol))
        if h.kind not in BUILTIN_PROBE_KINDS:
            rep.notes.append(f"probe {h.label}: continuity under nu* not verified")
    ratio = star[sel] / (scheme.c_n * u)
    for v in v_grid:
        hits = ratio > v
        p = float(hits.mean())
        emp = Estimate(p, math.sqrt(max(p * (1 - p), 1.0 / m) / m), m, seed)
        la, lb = f"P(X*>c_n u {v:g}|X*>c_n u)", f"{v:g}^-alpha"
        ref = Estimate.exact(v ** (-model.alpha))
        rep.sides += [(la, emp), (lb, ref)]
        rep.comparisons.append(compare(la, emp, lb, ref, tol=tol))
    rep.notes.append(f"{m} qualifying blocks")
    return rep


@dataclass
class AnticlusteringRow:
    m: int
    estimate: Estimate


def anticlustering_diagnostic(series, scheme: BlockingScheme, m_grid: Sequence[int],
                              u: float = 1.0) -> list[AnticlusteringRow]:
    """``P(max_{m <= |i| <= r_n} |X_i| > c_n u | |X_0| > c_n u)`` for each ``m``.

    Exceedances closer than ``r_n`` to either end of the series are skipped.
    The rows are nested events, so the curve is nonincreasing in ``m``.
    """
    x = np.abs(_values(series))
    r = scheme.r_n
    lev = scheme.c_n * u
    pos = np.flatnonzero(x > lev)
    pos = pos[(pos >= r) & (pos < x.size - r)]
    if pos.size < MIN_QUALIFYING:
        raise ValueError(f"only {pos.size} usable exceedances, need {MIN_QUALIFYING}")
    lags = np.arange(-r, r + 1)
    big = x[pos[:, None] + lags[None, :]] > lev
    dist = np.abs(lags)
    rows = []
    for m in m_grid:
        if not 1 <= m <= r:
            raise ValueError(f"m={m} must lie in 1..r_n")
        hit = big[:, dist >= m].any(axis=1)
        p = float(hit.mean())
        rows.append(AnticlusteringRow(int(m), Estimate(p, math.sqrt(p * (1 - p) / pos.size), pos.size)))
    return rows


class BlockClusterEstimator(BaseEstimator):
    """Fits a blocking scheme to a series and evaluates cluster statistics on it.

    Parameters
    ----------
    exponent : float
        ``r_n = floor(n^exponent)`` unless ``block_length`` is set.
    tau : float
        Target for ``r_n P(|X_0| > c_n)`` when ``level`` is not set.
    block_length, level : optional overrides for ``r_n`` and ``c_n``.
    n_boot : int
        Bootstrap replicates for the cluster-measure stderr.
    random_state : int
    """

    def __init__(self, exponent: float = 0.35, tau: float = 0.02, block_length: int | None = None,
                 level: float | None = None, n_boot: int = N_BOOT, random_state: int = 0):
        self.exponent = exponent
        self.tau = tau
        self.block_length = block_length
        self.level = level
        self.n_boot = n_boot
        self.random_state = random_state

    def fit(self, X, y=None):
        x = _values(X)
        self.scheme_ = default_scheme(x, self.exponent, self.tau, r_n=self.block_length, c_n=self.level)
        if not self.scheme_.monitor_ok:
            warnings.warn(f"r_n P(|X|>c_n) = {self.scheme_.monitor:.3g} exceeds {MONITOR_MAX}", RuntimeWarning,
                          stacklevel=2)
        self.series_ = x
        return self

    def cluster_measure(self, H: FunctionalSpec) -> Estimate:
        check_is_fitted(self, "scheme_")
        return empirical_cluster_measure(self.series_, self.scheme_, H, self.n_boot, self.random_state)

    def blocks(self, u: float = 1.0) -> list[ClusterBlock]:
        check_is_fitted(self, "scheme_")
        return cluster_blocks(self.series_, self.scheme_, u)
