"""Tail measure engine: radial integrals, tail process sampling, the time change
formula in both its tail-process and spectral forms, and the two anchored
representations of the tail measure.

All estimators draw spectral paths in lanes (see :func:`tailproc.mc.run_lanes`)
and integrate the Pareto radius out in closed form wherever the functional
allows, so the Monte Carlo noise comes from the angular part only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .functionals import FunctionalSpec
from .mc import Estimate, IdentityReport, compare, run_lanes
from .models import SpectralModel, backward_weight, pareto
from .seqspace import FiniteSeq, PathBatch

# lower limit standing in for t -> 0 in the small-t form of the time change formula
SMALL_T = 1e-8


@dataclass(frozen=True)
class RadialLaw:
    """Pareto(alpha) law of ``|Y_0|``: ``P(R > y) = y ** -alpha`` for ``y >= 1``."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return pareto(rng, self.alpha, size)

    def survival(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 1, np.maximum(y, 1.0) ** (-self.alpha), 1.0)

    def cdf(self, y):
        return 1.0 - self.survival(y)

    def ks_test(self, sample: np.ndarray):
        return stats.kstest(np.asarray(sample), self.cdf)


def sample_tail_batch(model: SpectralModel, n: int, rng: np.random.Generator) -> PathBatch:
    """``n`` draws of ``Y = R Theta`` with ``R`` Pareto(alpha) independent of ``Theta``."""
    th = model.sample(rng, n)
    return th.scale_rows(pareto(rng, model.alpha, n))


def sample_tail_process(model: SpectralModel, rng_seed=None) -> FiniteSeq:
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return sample_tail_batch(model, 1, rng).row(0)


def _split_inf(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Finite part and an infinity flag, so divergent sides survive moment merging."""
    inf = np.isinf(x)
    return np.where(inf, 0.0, x), inf.astype(float)


def _side(mom, i_val: int, i_flag: int, seed) -> Estimate:
    if mom.mean[i_flag] > 0:
        return Estimate(math.inf, 0.0, mom.n, seed)
    return mom.estimate(i_val, seed)


def radial_integral(H: FunctionalSpec, model: SpectralModel, n: int, rng_seed: int,
                    lanes: int | None = None) -> Estimate:
    """``int_0^inf E[H(r Theta)] alpha r^(-alpha-1) dr``.

    Only functionals vanishing near the origin give a finite value; constants
    and homogeneous kinds are rejected.
    """
    if H.kind == "const" or (H.degree is not None):
        raise ValueError(f"{H.label}: radial integral from 0 diverges for this kind")
    if H.kind == "custom" and H.support_level is None:
        raise ValueError(f"{H.label}: custom functional needs a support level")
    a = model.alpha

    def kernel(rng, m):
        return H.radial(model.sample(rng, m), 0.0, a, rng)

    return run_lanes(kernel, n, rng_seed, lanes=lanes).estimate(0, rng_seed)


def _theta_form(H: FunctionalSpec, th: PathBatch, k: int, alpha: float):
    """Spectral form: ``H(B^k Theta) 1{Theta_{-k} != 0}`` and
    ``H(Theta / |Theta_k|) |Theta_k|^alpha 1{Theta_k != 0}``."""
    back = np.abs(th.column(-k))
    fwd = np.abs(th.column(k))
    lhs = np.where(back > 0, H.evaluate(th.shift(k)), 0.0)
    rhs = np.zeros(th.n)
    nz = fwd > 0
    if np.any(nz):
        sub = th.take(nz)
        rhs[nz] = H.evaluate(sub.scale_rows(1.0 / fwd[nz])) * fwd[nz] ** alpha
    return lhs, rhs


def _y_form_radial(H, th, k, t, alpha, rng):
    """Tail-process form with the radius integrated out.

    ``E[H(B^k Y) 1{|Y_{-k}| > t}] = E[rho_H(B^k Theta; max(1, t/|Theta_{-k}|))]`` and
    ``t^-alpha E[H(t Y) 1{|Y_k| > 1/t}] = E[rho_H(Theta; max(t, 1/|Theta_k|))]``.
    """
    back = np.abs(th.column(-k))
    fwd = np.abs(th.column(k))
    with np.errstate(divide="ignore"):
        lo_l = np.where(back > 0, np.maximum(1.0, t / back), np.inf)
        lo_r = np.where(fwd > 0, np.maximum(t, 1.0 / fwd), np.inf)
    return H.radial(th.shift(k), lo_l, alpha, rng), H.radial(th, lo_r, alpha, rng)


def _y_form_direct(H, th, k, t, alpha, rng):
    """Tail-process form by sampling the radius, with no integration."""
    y = th.scale_rows(pareto(rng, alpha, th.n))
    lhs = np.where(np.abs(y.column(-k)) > t, H.evaluate(y.shift(k)), 0.0)
    rhs = np.where(np.abs(y.column(k)) > 1.0 / t, H.evaluate(y.scale_rows(np.full(y.n, t))), 0.0)
    return lhs, t ** (-alpha) * rhs


class TimeChangeReport(IdentityReport):
    """Both forms of the time change formula for one ``(H, k, t)``."""

    @property
    def lhs(self) -> Estimate:
        return self.side("Y:lhs")

    @property
    def rhs(self) -> Estimate:
        return self.side("Y:rhs")


def check_time_change(
    model: SpectralModel,
    H: FunctionalSpec,
    k: int,
    t: float,
    n: int,
    rng_seed: int,
    lanes: int | None = None,
    method: str = "radial",
    tol: float = 3.0,
    theta_cap: float = 10.0,
) -> TimeChangeReport:
    """Estimate both sides of the time change formula with paired samples.

    The tail-process form compares ``E[H(B^k Y) 1{|Y_{-k}| > t}]`` with
    ``t^-alpha E[H(t Y) 1{|Y_k| > 1/t}]``; the spectral form compares
    ``E[H(B^k Theta) 1{Theta_{-k} != 0}]`` with
    ``E[H(Theta/|Theta_k|) |Theta_k|^alpha]``. For degree-0 ``H`` the
    tail-process form at vanishing ``t`` is also compared with the spectral
    form, side by side.

    Divergent sides (e.g. ``Sup`` with ``alpha <= 1``) are reported as
    ``inf``; such a comparison passes only when both sides diverge.

    The spectral form holds for every nonnegative ``H``, but its sides are
    infinite for some heavy functionals (``E[Theta*] = inf`` is possible when
    ``alpha <= 1``). When the degree of ``H`` is at least ``alpha`` it is
    therefore checked on ``min(H, theta_cap)``.

    ``method="direct"`` samples the radius instead of integrating it out,
    which gives an independent check of the closed forms.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if method not in ("radial", "direct"):
        raise ValueError("method must be 'radial' or 'direct'")
    a = model.alpha
    small = H.degree == 0
    Ht = H
    notes = []
    if H.degree is not None and H.degree >= a:
        Ht = capped(H, theta_cap)
        notes.append(f"spectral form checked on {Ht.label}")

    def kernel(rng, m):
        th = model.sample(rng, m)
        if method == "radial":
            yl, yr = _y_form_radial(H, th, k, t, a, rng)
        else:
            yl, yr = _y_form_direct(H, th, k, t, a, rng)
        yl, fl = _split_inf(yl)
        yr, fr = _split_inf(yr)
        tl, tr = _theta_form(Ht, th, k, a)
        cols = [yl, yr, fl, fr, tl, tr]
        if small:
            sl, sr = _y_form_radial(H, th, k, SMALL_T, a, rng)
            cols += [sl, sr]
        return np.column_stack(cols)

    mom = run_lanes(kernel, n, rng_seed, lanes=lanes)
    yl, yr = _side(mom, 0, 2, rng_seed), _side(mom, 1, 3, rng_seed)
    tl, tr = mom.estimate(4, rng_seed), mom.estimate(5, rng_seed)
    sides = [("Y:lhs", yl), ("Y:rhs", yr), ("Theta:lhs", tl), ("Theta:rhs", tr)]
    comps = [
        compare("Y:lhs", yl, "Y:rhs", yr, None if math.isinf(yl.value + yr.value) else mom.diff_stderr(0, 1), tol),
        compare("Theta:lhs", tl, "Theta:rhs", tr, mom.diff_stderr(4, 5), tol),
    ]
    if small:
        sl, sr = mom.estimate(6, rng_seed), mom.estimate(7, rng_seed)
        sides += [("Y0:lhs", sl), ("Y0:rhs", sr)]
        comps += [
            compare("Y0:lhs", sl, "Theta:lhs", tl, mom.diff_stderr(6, 4), tol),
            compare("Y0:rhs", sr, "Theta:rhs", tr, mom.diff_stderr(7, 5), tol),
        ]
    name = f"time-change[{model.spec}|{H.label}|k={k}|t={t:g}]"
    return TimeChangeReport(name, sides, comps, notes)


def capped(H: FunctionalSpec, cap: float) -> FunctionalSpec:
    """The functional ``min(H, cap)``."""
    def func(values, origin):
        return np.minimum(H.evaluate(PathBatch(values, origin)), cap)
    return FunctionalSpec.custom(func, shift_invariant=H.shift_invariant, name=f"min({H.label},{cap:g})")


TCF_FUNCTIONALS = (FunctionalSpec.const(), FunctionalSpec.sup(), FunctionalSpec.count_exceed(1.0))
TCF_LAGS = (-2, -1, 0, 1, 2)
TCF_LEVELS = (0.5, 1.0, 2.0)


def certify_model(model: SpectralModel, n: int = 20_000, rng_seed: int = 0, lanes: int | None = None,
                  functionals=TCF_FUNCTIONALS, lags=TCF_LAGS, levels=TCF_LEVELS,
                  tol: float = 3.0) -> list[TimeChangeReport]:
    """Run the time change battery on ``model`` (one report per ``(H, k, t)``)."""
    from .mc import derive_seed
    out = []
    for H in functionals:
        for k in lags:
            for t in levels:
                seed = derive_seed(rng_seed, model.spec, H.label, k, repr(t))
                out.append(check_time_change(model, H, k, t, n, seed, lanes, tol=tol))
    return out


def validated(model: SpectralModel, n: int = 20_000, rng_seed: int = 0) -> SpectralModel:
    """Return ``model`` after the time change battery passes, else raise."""
    bad = [r.name for r in certify_model(model, n, rng_seed) if not r.passed]
    if bad:
        raise ValueError(f"{model.spec} violates the time change formula: {bad[:3]}")
    return model


MODES = ("InfargmaxAnchored", "QAnchored")


def _lag_range(H: FunctionalSpec, batch: PathBatch) -> range:
    if H.coords is None:
        raise ValueError(
            f"{H.label}: tail measure of a shift-invariant functional is infinite unless zero; "
            "use clusterlab.nu_star for cluster functionals"
        )
    cs = [c - H.lag for c in H.coords]
    return range(min(cs) - batch.hi, max(cs) - batch.lo + 1)


def tail_measure_eval(H: FunctionalSpec, model: SpectralModel, mode: str, n: int, rng_seed: int,
                      lanes: int | None = None) -> Estimate:
    """``nu(H)`` for a functional depending on finitely many coordinates.

    ``InfargmaxAnchored``: ``sum_j int E[H(r B^j Theta) 1{I(Theta) = 0}] alpha r^(-alpha-1) dr``.
    ``QAnchored``: ``theta sum_j int E[H(r B^j Q)] alpha r^(-alpha-1) dr``, with the
    law of ``Q`` reached by reweighting ``Theta / Theta*`` with the probability of
    no backward exceedance.

    The lag sum is exact: paths have finite support and ``H`` reads only the
    coordinates in ``H.coords``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if H.kind == "const" or H.degree is not None:
        raise ValueError(f"{H.label}: tail measure diverges for this kind")
    a = model.alpha

    def kernel(rng, m):
        th = model.sample(rng, m)
        if mode == "InfargmaxAnchored":
            keep = th.infargmax() == 0
            base = th
            w = keep.astype(float)
        else:
            w = backward_weight(th, a)
            base = th.scale_rows(1.0 / th.sup())
        total = np.zeros(m)
        live = w > 0
        if not np.any(live):
            return total
        sub = base.take(live)
        acc = np.zeros(sub.n)
        for j in _lag_range(H, sub):
            acc += H.radial(sub.shift(j), 0.0, a, rng)
        total[live] = acc * w[live]
        return total

    return run_lanes(kernel, n, rng_seed, lanes=lanes).estimate(0, rng_seed)
