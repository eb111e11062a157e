"""Declarative test functionals on sequence space and their radial integrals.

A :class:`FunctionalSpec` evaluates row-wise on a :class:`PathBatch` and knows
how to integrate itself against the Pareto radial measure
``alpha * r**(-alpha - 1) dr``. The radial integral

    rho_H(theta; a) = int_a^inf H(r * theta) alpha r^(-alpha-1) dr

is the building block of every tail-measure computation: homogeneous and
threshold kinds have it in closed form, anything else falls back to an
importance sample of one Pareto radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .seqspace import FiniteSeq, PathBatch

HOMOGENEOUS_KINDS = ("sup", "sum_abs_pow", "pos_part_sum_pow", "running_max_sum_pow", "signed_power_sum")
KINDS = ("const", "threshold", "count_exceed", "custom") + HOMOGENEOUS_KINDS


def _pow(a: np.ndarray, p: float) -> np.ndarray:
    if p == 1.0:
        return a
    with np.errstate(divide="ignore"):
        return np.where(a > 0, np.abs(a) ** p, 0.0) if p > 0 else np.abs(a) ** p


@dataclass(frozen=True)
class FunctionalSpec:
    """A functional ``H`` on finitely supported sequences.

    Use the constructors (:meth:`sup`, :meth:`threshold`, ...) rather than the
    raw fields. ``scale`` and ``lag`` record a precomposition
    ``x -> H(scale * B^lag x)``, which keeps shifted and rescaled functionals
    inside the closed-form radial machinery.
    """

    kind: str
    power: float = 1.0
    p: float = 1.0
    level: float = 1.0
    coords: tuple[int, ...] | None = None
    min_count: int = 1
    value: float = 1.0
    func: Callable | None = field(default=None, compare=False)
    degree: float | None = None
    shift_invariant: bool = True
    support_level: float | None = None
    lipschitz: float | None = None
    name: str | None = None
    scale: float = 1.0
    lag: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom functional needs func")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    # constructors ---------------------------------------------------------
    @classmethod
    def const(cls, value: float = 1.0) -> "FunctionalSpec":
        return cls("const", value=value, degree=0.0, name="one" if value == 1 else f"const({value:g})")

    @classmethod
    def sup(cls, power: float = 1.0) -> "FunctionalSpec":
        """``(x*)**power``."""
        return cls("sup", power=power, degree=power, lipschitz=1.0 if power == 1 else None,
                   name="sup" if power == 1 else f"sup^{power:g}")

    @classmethod
    def sum_abs_pow(cls, p: float = 1.0, power: float | None = None) -> "FunctionalSpec":
        """``||x||_p ** power`` (``power`` defaults to ``p``)."""
        power = p if power is None else power
        return cls("sum_abs_pow", p=p, power=power, degree=power,
                   lipschitz=1.0 if p == 1 and power == 1 else None, name=f"l{p:g}^{power:g}")

    @classmethod
    def pos_part_sum_pow(cls, power: float = 1.0) -> "FunctionalSpec":
        """``(sum_j x_j)_+ ** power``."""
        return cls("pos_part_sum_pow", power=power, degree=power,
                   lipschitz=1.0 if power == 1 else None, name=f"possum^{power:g}")

    @classmethod
    def running_max_sum_pow(cls, power: float = 1.0) -> "FunctionalSpec":
        """``(sup_k sum_{j<=k} x_j)_+ ** power``."""
        return cls("running_max_sum_pow", power=power, degree=power,
                   lipschitz=1.0 if power == 1 else None, name=f"runmax^{power:g}")

    @classmethod
    def signed_power_sum(cls, power: float) -> "FunctionalSpec":
        """``sum_j sign(x_j) |x_j| ** power``; may be negative."""
        return cls("signed_power_sum", power=power, degree=power, name=f"signedsum^{power:g}")

    @classmethod
    def threshold(cls, level: float = 1.0, coords=None, min_count: int = 1) -> "FunctionalSpec":
        """Indicator that at least ``min_count`` of ``|x_j|, j in coords`` exceed ``level``.

        ``coords=None`` means all indices, which makes the functional shift
        invariant.
        """
        if level <= 0 or min_count < 1:
            raise ValueError("need level > 0 and min_count >= 1")
        coords = None if coords is None else tuple(sorted(int(c) for c in coords))
        if coords is None:
            nm = f"1{{x*>{level:g}}}" if min_count == 1 else f"1{{#(|x|>{level:g})>={min_count}}}"
        else:
            nm = f"1{{#(|x_{list(coords)}|>{level:g})>={min_count}}}"
        return cls("threshold", level=level, coords=coords, min_count=min_count,
                   shift_invariant=coords is None, support_level=level, name=nm)

    @classmethod
    def count_exceed(cls, level: float = 1.0) -> "FunctionalSpec":
        """``sum_j 1{|x_j| > level}``."""
        return cls("count_exceed", level=level, support_level=level, lipschitz=None,
                   name=f"count(|x|>{level:g})")

    @classmethod
    def custom(cls, func: Callable, degree: float | None = None, shift_invariant: bool = False,
               support_level: float | None = None, lipschitz: float | None = None,
               name: str = "custom") -> "FunctionalSpec":
        """Wrap ``func(values, origin) -> (n,)`` evaluated on dense batches.

        ``support_level`` must bound ``H`` to vanish when ``x* <= support_level``
        unless a homogeneity ``degree`` is declared; it is what makes the
        radial integral finite.
        """
        return cls("custom", func=func, degree=degree, shift_invariant=shift_invariant,
                   support_level=support_level, lipschitz=lipschitz, name=name)

    # composition ----------------------------------------------------------
    @property
    def label(self) -> str:
        s = self.name or self.kind
        if self.scale != 1.0:
            s = f"{s}({self.scale:g}.)"
        if self.lag:
            s = f"{s}oB^{self.lag}"
        return s

    def rescaled(self, c: float) -> "FunctionalSpec":
        """The functional ``x -> H(c x)``."""
        return replace(self, scale=self.scale * float(c))

    def shifted(self, k: int) -> "FunctionalSpec":
        """The functional ``x -> H(B^k x)``."""
        return replace(self, lag=self.lag + int(k))

    @property
    def is_homogeneous(self) -> bool:
        return self.degree is not None

    # evaluation -----------------------------------------------------------
    def evaluate(self, batch: PathBatch) -> np.ndarray:
        if self.lag:
            batch = batch.shift(self.lag)
        v = batch.values if self.scale == 1.0 else batch.values * self.scale
        out = self._raw(v, batch.origin)
        out = np.asarray(out, dtype=float).reshape(-1)
        if out.shape[0] != v.shape[0]:
            raise ValueError(f"{self.label}: functional returned {out.shape[0]} values for {v.shape[0]} rows")
        if np.any(np.isnan(out)):
            raise ValueError(f"{self.label}: functional produced NaN")
        return out

    def __call__(self, x: FiniteSeq | PathBatch):
        if isinstance(x, PathBatch):
            return self.evaluate(x)
        return float(self.evaluate(PathBatch.from_seqs([x]))[0])

    def _raw(self, v: np.ndarray, origin: int) -> np.ndarray:
        n = v.shape[0]
        a = np.abs(v)
        k = self.kind
        if k == "const":
            return np.full(n, self.value)
        if k == "sup":
            return _pow(a.max(axis=1, initial=0.0), self.power)
        if k == "sum_abs_pow":
            return _pow(_pow(a, self.p).sum(axis=1) ** (1.0 / self.p), self.power)
        if k == "pos_part_sum_pow":
            return _pow(np.maximum(v.sum(axis=1), 0.0), self.power)
        if k == "running_max_sum_pow":
            cs = np.cumsum(v, axis=1)
            return _pow(np.maximum(cs.max(axis=1, initial=0.0), 0.0), self.power)
        if k == "signed_power_sum":
            return (np.sign(v) * _pow(a, self.power)).sum(axis=1)
        if k == "threshold":
            sub = self._coord_block(a, origin)
            return ((sub > self.level).sum(axis=1) >= self.min_count).astype(float)
        if k == "count_exceed":
            return (a > self.level).sum(axis=1).astype(float)
        return self.func(v, origin)

    def _coord_block(self, a: np.ndarray, origin: int) -> np.ndarray:
        if self.coords is None:
            return a
        cols = np.array(self.coords) + origin
        ok = (cols >= 0) & (cols < a.shape[1])
        out = np.zeros((a.shape[0], len(cols)))
        out[:, ok] = a[:, cols[ok]]
        return out

    # radial integral ------------------------------------------------------
    @property
    def has_closed_radial(self) -> bool:
        return self.kind != "custom" or self.degree is not None

    def radial(self, batch: PathBatch, lower, alpha: float,
               rng: np.random.Generator | None = None) -> np.ndarray:
        """Row-wise ``int_{lower}^inf H(r theta) alpha r^(-alpha-1) dr``.

        ``lower`` is a scalar or per-row array of lower limits in ``[0, inf]``;
        an infinite lower limit gives 0. Divergent integrals return ``inf``.
        Kinds without a closed form need ``rng`` and return an unbiased
        single-radius importance sample instead of the exact value.
        """
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (batch.n,)).copy()
        if self.lag:
            batch = batch.shift(self.lag)
        c = self.scale
        # H(c r theta) integrated from a equals c^alpha times H integrated from c a
        base = replace(self, scale=1.0, lag=0)
        out = base._radial_unit(batch, lower * c, alpha, rng)
        return out * c ** alpha if c != 1.0 else out

    def _radial_unit(self, batch, a, alpha, rng):
        n = batch.n
        out = np.zeros(n)
        live = np.isfinite(a)
        if self.kind in ("threshold", "count_exceed"):
            absv = np.abs(batch.values)
            if self.kind == "threshold":
                sub = self._coord_block(absv, batch.origin)
                m = self.min_count
                if sub.shape[1] < m:
                    return out
                b = -np.partition(-sub, m - 1, axis=1)[:, m - 1]
                ok = live & (b > 0)
                lo = np.maximum(a[ok], self.level / b[ok])
                out[ok] = lo ** (-alpha)
                return out
            with np.errstate(divide="ignore"):
                thr = np.where(absv > 0, self.level / absv, np.inf)
            lo = np.maximum(a[:, None], thr)
            with np.errstate(divide="ignore"):
                out = np.where(np.isfinite(lo), lo ** (-alpha), 0.0).sum(axis=1)
            return np.where(live, out, 0.0)
        if self.degree is not None:
            h = self._raw(batch.values, batch.origin)
            beta = self.degree
            nz = live & (h != 0)
            if beta >= alpha:
                out[nz] = np.inf * np.sign(h[nz])
                return out
            pos = nz & (a > 0)
            out[pos] = h[pos] * alpha / (alpha - beta) * a[pos] ** (beta - alpha)
            out[nz & (a <= 0)] = np.inf * np.sign(h[nz & (a <= 0)])
            return out
        # importance sample: one Pareto radius above the effective lower limit
        if rng is None:
            raise ValueError(f"{self.label}: radial integral needs an rng")
        star = np.abs(batch.values).max(axis=1, initial=0.0)
        lo = a.copy()
        if self.support_level is not None:
            with np.errstate(divide="ignore"):
                lo = np.maximum(lo, np.where(star > 0, self.support_level / star, np.inf))
        elif np.any(live & (a <= 0)):
            raise ValueError(f"{self.label}: no support level, integral from 0 diverges")
        u = rng.random(n)
        ok = live & np.isfinite(lo) & (lo > 0)
        r = lo[ok] * (1.0 - u[ok]) ** (-1.0 / alpha)
        vals = self._raw(batch.values[ok] * r[:, None], batch.origin)
        out[ok] = lo[ok] ** (-alpha) * vals
        return out

    # validation -----------------------------------------------------------
    def validate(self, rng: np.random.Generator | None = None, trials: int = 64, rtol: float = 1e-9) -> None:
        """Spot-check declared homogeneity and shift invariance on random inputs."""
        rng = rng or np.random.default_rng(0)
        width = 9
        x = rng.standard_normal((trials, width)) * rng.exponential(1.0, (trials, 1))
        x[rng.random((trials, width)) < 0.3] = 0.0
        x[:, 0] = x[:, -1] = 0.0
        batch = PathBatch(x, width // 2)
        h = self.evaluate(batch)
        if self.degree is not None:
            t = rng.uniform(0.2, 5.0, trials)
            ht = self.evaluate(batch.scale_rows(t))
            want = t ** self.degree * h
            if not np.allclose(ht, want, rtol=rtol, atol=1e-12):
                raise ValueError(f"{self.label}: declared degree {self.degree} not confirmed")
        if self.shift_invariant:
            for k in (-1, 1):
                if not np.allclose(self.evaluate(batch.shift(k)), h, rtol=rtol, atol=1e-12):
                    raise ValueError(f"{self.label}: declared shift invariance not confirmed")

    def __repr__(self):
        return f"FunctionalSpec({self.label})"


def one() -> FunctionalSpec:
    return FunctionalSpec.const(1.0)
