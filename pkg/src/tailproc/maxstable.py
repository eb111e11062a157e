"""Stationary max-stable processes built from a spectral tail process.

The process is simulated from its mixed moving maxima representation

    zeta_j = max_i P_i Q^(i)_{j - T_i}

with ``P_i`` the points of a Poisson process with intensity
``alpha x^(-alpha-1) dx``, ``T_i`` scattered on the integers with intensity
``theta`` and ``Q^(i)`` i.i.d. copies of the sequence ``Q``. Because
``Q* = 1`` every point contributes at most ``P_i``, so generation of a window
can stop as soon as ``P_i`` drops below the current minimum of the window
(or below the running block maximum when only that is needed).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import stats

from .functionals import FunctionalSpec
from .mc import DEFAULT_CHUNK, Estimate, default_lanes, run_lanes
from .models import SpectralModel, backward_weight, sample_conditioned_batch
from .seqspace import FiniteSeq, PathBatch


class WeightDegeneracyWarning(RuntimeWarning):
    pass


@dataclass
class M3Config:
    """Simulation settings for one window ``[a, b]`` of the max-stable process.

    ``shift_margin`` defaults to the model's reach at ``trunc_eps``: beyond it
    every truncated ``Q`` is zero on the window.
    """

    model: SpectralModel
    window: tuple[int, int] = (0, 0)
    trunc_eps: float = 1e-6
    shift_margin: int | None = None
    theta: float | None = None

    def __post_init__(self):
        a, b = self.window
        if a > b:
            raise ValueError("window must satisfy a <= b")
        if not 0 < self.trunc_eps < 1:
            raise ValueError("trunc_eps must lie in (0, 1)")
        if not self.model.nonnegative:
            raise ValueError("max-stable construction needs a nonnegative model")
        if self.shift_margin is None:
            self.shift_margin = int(self.model.reach(self.trunc_eps))
        if self.theta is None:
            self.theta = self.model.exact_theta()
        if self.theta is None:
            from .identities import theta_candidate
            self.theta = theta_candidate(self.model, "BackwardDef", 100_000, 0).value
        if not self.theta > 0:
            raise ValueError(f"extremal index must be positive, got {self.theta}")

    @property
    def width(self) -> int:
        return self.window[1] - self.window[0] + 1

    @property
    def shift_range(self) -> tuple[int, int]:
        a, b = self.window
        return a - self.shift_margin, b + self.shift_margin

    @property
    def intensity(self) -> float:
        lo, hi = self.shift_range
        return self.theta * (hi - lo + 1)

    def describe(self) -> str:
        return (f"{self.model.spec}|window={self.window[0]}..{self.window[1]}|eps={self.trunc_eps:g}"
                f"|margin={self.shift_margin}|theta={self.theta:.6g}")


@dataclass
class MaxStablePath:
    values: FiniteSeq
    config: str
    seed: int | None = None

    def __post_init__(self):
        if np.any(self.values.values <= 0):
            raise ValueError("max-stable path must be strictly positive")


def _draw_q(cfg: M3Config, rng: np.random.Generator, m: int) -> PathBatch:
    q = sample_conditioned_batch(cfg.model, "NoBackwardExceedance", m, rng)
    v = q.values
    return PathBatch(np.where(v >= cfg.trunc_eps, v, 0.0), q.origin)


def _simulate_chunk(cfg: M3Config, rng: np.random.Generator, m: int, block_max: bool) -> np.ndarray:
    """``m`` independent windows (or block maxima) by synchronized Poisson rounds."""
    a, b = cfg.window
    lo, hi = cfg.shift_range
    lam = cfg.intensity
    alpha = cfg.model.alpha
    times = np.arange(a, b + 1)
    zeta = np.zeros((m, cfg.width)) if not block_max else np.zeros((m, 1))
    gamma = np.zeros(m)
    active = np.arange(m)
    while active.size:
        k = active.size
        gamma[active] += rng.exponential(1.0, k)
        P = (gamma[active] / lam) ** (-1.0 / alpha)
        level = zeta[active].max(axis=1) if block_max else zeta[active].min(axis=1)
        go = P >= level
        active, P = active[go], P[go]
        if not active.size:
            break
        T = rng.integers(lo, hi + 1, size=active.size)
        q = _draw_q(cfg, rng, active.size)
        contrib = q.columns(times[None, :] - T[:, None]) * P[:, None]
        if block_max:
            contrib = contrib.max(axis=1, keepdims=True)
        zeta[active] = np.maximum(zeta[active], contrib)
    if not block_max and np.any(zeta <= 0):
        raise RuntimeError("window coordinate left uncovered by the shift range")
    return zeta[:, 0] if block_max else zeta


def _lane_map(fn: Callable, n: int, rng_seed: int, lanes: int | None, chunk: int) -> np.ndarray:
    lanes = lanes or default_lanes()
    children = np.random.SeedSequence(int(rng_seed) & 0xFFFFFFFFFFFFFFFF).spawn(lanes)
    base, extra = divmod(n, lanes)
    out = []
    for i, child in enumerate(children):
        size = base + (1 if i < extra else 0)
        rng = np.random.default_rng(child)
        done = 0
        while done < size:
            c = min(chunk, size - done)
            out.append(fn(rng, c))
            done += c
    return np.concatenate(out, axis=0)


def simulate_m3_batch(cfg: M3Config, n: int, rng_seed: int, lanes: int | None = None,
                      chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """``(n, width)`` array of independent windows of the max-stable process."""
    return _lane_map(lambda rng, c: _simulate_chunk(cfg, rng, c, False), n, rng_seed, lanes, chunk)


def simulate_m3(cfg: M3Config, rng_seed: int) -> MaxStablePath:
    vals = simulate_m3_batch(cfg, 1, rng_seed, lanes=1)[0]
    return MaxStablePath(FiniteSeq(cfg.window[0], vals), cfg.describe(), rng_seed)


def simulate_block_maxima(cfg: M3Config, n: int, rng_seed: int, lanes: int | None = None,
                          chunk: int = DEFAULT_CHUNK) -> np.ndarray:
    """``n`` independent draws of ``max_{a <= j <= b} zeta_j``."""
    return _lane_map(lambda rng, c: _simulate_chunk(cfg, rng, c, True), n, rng_seed, lanes, chunk)


def frechet_ks(sample: np.ndarray, alpha: float):
    """KS test against the alpha-Frechet law ``exp(-y^(-alpha))``."""
    return stats.kstest(np.asarray(sample), stats.invweibull(alpha).cdf)


# finite-dimensional laws ----------------------------------------------------------

def _levels(y) -> dict[int, float]:
    if isinstance(y, FiniteSeq):
        items = {y.start + i: float(v) for i, v in enumerate(y.values)}
    elif isinstance(y, Mapping):
        items = {int(k): float(v) for k, v in y.items()}
    else:
        raise TypeError("levels must be a FiniteSeq or a mapping index -> level")
    out = {}
    for j, v in items.items():
        if not v > 0:
            raise ValueError(f"level at {j} must be positive")
        if math.isfinite(v):
            out[j] = v
    return out


def _level_row(levels: dict[int, float], lo: int, hi: int) -> np.ndarray:
    """Reciprocal levels on ``lo..hi`` (zero where the level is infinite)."""
    inv = np.zeros(hi - lo + 1)
    for j, v in levels.items():
        if lo <= j <= hi:
            inv[j - lo] = 1.0 / v
    return inv


def fdd_log_survival(y, model: SpectralModel, n: int, rng_seed: int, lanes: int | None = None,
                     method: str = "infargmax") -> Estimate:
    """``-log P(zeta_j <= y_j for all j)`` for the max-stable process with spectral
    process ``model``.

    ``method="infargmax"``:
    ``sum_h y_h^(-alpha) P(infargmax_j Theta_j / y_{j+h} = 0)``.
    ``method="q"``: ``theta sum_i E[max_j (Q_{j-i} / y_j)^alpha]``, with the law
    of ``Q`` reached by reweighting.
    Levels are a :class:`FiniteSeq` or mapping; infinite or missing levels impose
    no constraint.
    """
    levels = _levels(y)
    if not levels:
        return Estimate.exact(0.0)
    if method not in ("infargmax", "q"):
        raise ValueError("method must be 'infargmax' or 'q'")
    a = model.alpha
    ks = sorted(levels)
    kmin, kmax = ks[0], ks[-1]

    def kernel(rng, m):
        th = model.sample(rng, m)
        out = np.zeros(m)
        if method == "infargmax":
            for h in ks:
                # ratio path Theta_j / y_{j+h}, nonzero only where j + h carries a level
                inv = _level_row(levels, th.lo + h, th.hi + h)
                ratio = PathBatch(th.values * inv[None, :], th.origin)
                out += levels[h] ** (-a) * (ratio.infargmax() == 0)
            return out
        q = th.scale_rows(1.0 / th.sup())
        w = backward_weight(th, a)
        live = w > 0
        if not np.any(live):
            return out
        qv = q.take(live)
        acc = np.zeros(qv.n)
        for i in range(kmin - qv.hi, kmax - qv.lo + 1):
            inv = _level_row(levels, qv.lo + i, qv.hi + i)
            acc += (np.abs(qv.values) * inv[None, :]).max(axis=1) ** a
        out[live] = acc * w[live]
        return out

    return run_lanes(kernel, n, rng_seed, lanes=lanes).estimate(0, rng_seed)


def empirical_log_survival(paths: np.ndarray, window_start: int, y) -> Estimate:
    """``-log`` of the empirical probability that simulated windows stay below ``y``.

    The standard error is the delta-method one, ``sqrt((1 - p) / (n p))``.
    """
    levels = _levels(y)
    n, w = paths.shape
    ok = np.ones(n, dtype=bool)
    for j, v in levels.items():
        c = j - window_start
        if not 0 <= c < w:
            raise ValueError(f"level index {j} outside the simulated window")
        ok &= paths[:, c] <= v
    p = ok.mean()
    if p == 0:
        return Estimate(math.inf, 0.0, n)
    return Estimate(-math.log(p), math.sqrt((1 - p) / (n * p)), n)


def block_maxima_extremal_index(maxima: np.ndarray, block: int, alpha: float, x: float = 1.0) -> Estimate:
    """``-x^alpha log P(M_n <= n^(1/alpha) x)`` from simulated block maxima ``M_n``."""
    e = empirical_log_survival(np.asarray(maxima).reshape(-1, 1), 0, {0: block ** (1.0 / alpha) * x})
    return e.scaled(x ** alpha)


# spectral process from a Z-representation -------------------------------------------

def spectral_from_Z(z_sampler: Callable[[np.random.Generator, int], PathBatch], h: int, F: FunctionalSpec,
                    n: int, rng_seed: int, alpha: float, lanes: int | None = None,
                    return_ess: bool = False):
    """``E[F(Theta)] = E[Z_{-h}^alpha F(B^h Z / Z_{-h}) 1{Z_{-h} != 0}]``.

    ``z_sampler(rng, m)`` returns ``m`` nonnegative paths with
    ``E[Z_j^alpha] = 1``. Agreement across ``h`` is a stationarity check of the
    representation. A :class:`WeightDegeneracyWarning` is raised when the
    effective sample size of the weights falls below ``n / 100``.
    """

    def kernel(rng, m):
        z = z_sampler(rng, m)
        zh = z.column(-h)
        w = zh ** alpha
        out = np.zeros(m)
        nz = zh > 0
        if np.any(nz):
            sub = z.take(nz).shift(h).scale_rows(1.0 / zh[nz])
            out[nz] = w[nz] * F.evaluate(sub)
        return np.column_stack([out, w, w * w])

    mom = run_lanes(kernel, n, rng_seed, lanes=lanes)
    est = mom.estimate(0, rng_seed)
    sw, sw2 = mom.mean[1] * n, mom.mean[2] * n
    ess = sw * sw / sw2 if sw2 > 0 else 0.0
    if ess < n / 100:
        warnings.warn(f"effective sample size {ess:.0f} below n/100", WeightDegeneracyWarning, stacklevel=2)
    return (est, ess) if return_ess else est


def moving_maxima_z_sampler(coeffs, alpha: float, lo: int = -5, hi: int = 5):
    """Z-representation of the moving maxima process ``max_i P_i c_{j - T_i}``.

    ``Z_j = L^(1/alpha) c_{j-U} / ||c||_alpha`` with ``U`` uniform on the
    ``L`` integers that can reach ``lo..hi``, so ``E[Z_j^alpha] = 1`` there.
    Its spectral tail process is that of the moving average with the same
    coefficients.
    """
    c = np.asarray(coeffs, dtype=float)
    if np.any(c < 0):
        raise ValueError("coefficients must be nonnegative")
    q = len(c) - 1
    u_lo, u_hi = lo - q, hi
    L = u_hi - u_lo + 1
    scale = L ** (1.0 / alpha) / np.sum(c ** alpha) ** (1.0 / alpha)
    width = hi - lo + 1 + 2 * q

    def sampler(rng, m):
        U = rng.integers(u_lo, u_hi + 1, size=m)
        out = np.zeros((m, width))
        cols = (U - (lo - q))[:, None] + np.arange(q + 1)[None, :]
        out[np.arange(m)[:, None], cols] = c[None, :] * scale
        return PathBatch(out, -(lo - q))

    return sampler
