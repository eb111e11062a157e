"""Finite-window sequences: norms, shifts, infargmax and the shift-quotient metric.

A :class:`FiniteSeq` stores the values of a real sequence on a window
``start .. start + len - 1`` and is zero elsewhere. :class:`PathBatch` is the
vectorized counterpart used by the samplers: ``n`` sequences laid out on one
common dense window, column ``origin`` holding time 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

# batch infargmax of an identically zero row
MINUS_INF = np.iinfo(np.int64).min


class FiniteSeq:
    """Real sequence indexed by the integers, zero outside a finite window.

    Instances are immutable. Equality is sequence equality, so leading and
    trailing zeros in the stored window are irrelevant.
    """

    __slots__ = ("start", "values")

    def __init__(self, start: int = 0, values: Iterable[float] = ()):
        vals = np.array(values, dtype=float).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "start", int(start))
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):
        raise AttributeError("FiniteSeq is immutable")

    @classmethod
    def from_dict(cls, mapping: Mapping[int, float]) -> "FiniteSeq":
        if not mapping:
            return cls()
        lo, hi = min(mapping), max(mapping)
        vals = np.zeros(hi - lo + 1)
        for j, v in mapping.items():
            vals[j - lo] = v
        return cls(lo, vals)

    @property
    def stop(self) -> int:
        """One past the last stored index."""
        return self.start + len(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, j: int) -> float:
        i = int(j) - self.start
        if 0 <= i < len(self.values):
            return float(self.values[i])
        return 0.0

    def to_dict(self) -> dict[int, float]:
        return {self.start + i: float(v) for i, v in enumerate(self.values) if v != 0}

    def trim(self) -> "FiniteSeq":
        nz = np.flatnonzero(self.values)
        if nz.size == 0:
            return FiniteSeq()
        return FiniteSeq(self.start + nz[0], self.values[nz[0]: nz[-1] + 1])

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def support(self) -> tuple[int, int] | None:
        t = self.trim()
        return None if len(t) == 0 else (t.start, t.stop - 1)

    def dense(self, lo: int, hi: int) -> np.ndarray:
        """Values on ``lo .. hi`` (inclusive), zero padded."""
        out = np.zeros(hi - lo + 1)
        a, b = max(lo, self.start), min(hi, self.stop - 1)
        if a <= b:
            out[a - lo: b - lo + 1] = self.values[a - self.start: b - self.start + 1]
        return out

    def _binary(self, other: "FiniteSeq", op) -> "FiniteSeq":
        if len(self) == 0 and len(other) == 0:
            return FiniteSeq()
        parts = [s for s in (self, other) if len(s)]
        lo = min(s.start for s in parts)
        hi = max(s.stop for s in parts) - 1
        return FiniteSeq(lo, op(self.dense(lo, hi), other.dense(lo, hi)))

    def __add__(self, other: "FiniteSeq") -> "FiniteSeq":
        return self._binary(other, np.add)

    def __sub__(self, other: "FiniteSeq") -> "FiniteSeq":
        return self._binary(other, np.subtract)

    def __mul__(self, c: float) -> "FiniteSeq":
        return FiniteSeq(self.start, self.values * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "FiniteSeq":
        return FiniteSeq(self.start, self.values / float(c))

    def __neg__(self) -> "FiniteSeq":
        return FiniteSeq(self.start, -self.values)

    def __abs__(self) -> "FiniteSeq":
        return FiniteSeq(self.start, np.abs(self.values))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteSeq):
            return NotImplemented
        a, b = self.trim(), other.trim()
        return a.start == b.start and np.array_equal(a.values, b.values) if len(a) else len(b) == 0

    def __hash__(self) -> int:
        t = self.trim()
        return hash((t.start, t.values.tobytes()))

    def isclose(self, other: "FiniteSeq", atol: float = 1e-12) -> bool:
        return supnorm(self - other) <= atol

    def __repr__(self) -> str:
        if len(self) == 0:
            return "FiniteSeq(0)"
        return f"FiniteSeq(start={self.start}, values={np.array2string(self.values, precision=6)})"


def spike(j: int = 0, value: float = 1.0) -> FiniteSeq:
    """The sequence equal to ``value`` at index ``j`` and zero elsewhere."""
    return FiniteSeq(j, [value])


def zero() -> FiniteSeq:
    return FiniteSeq()


def shift(x: FiniteSeq, k: int) -> FiniteSeq:
    """Backshift ``B^k``: ``shift(x, k)[j] == x[j - k]``."""
    return FiniteSeq(x.start + int(k), x.values)


def pnorm(x: FiniteSeq, p: float) -> float:
    if p <= 0:
        raise ValueError("p must be positive")
    a = np.abs(x.values)
    if math.isinf(p):
        return float(a.max(initial=0.0))
    return float(np.sum(a ** p) ** (1.0 / p))


def supnorm(x: FiniteSeq) -> float:
    return float(np.abs(x.values).max(initial=0.0))


def window_max(x: FiniteSeq, s: float = -math.inf, t: float = math.inf) -> float:
    """``max_{s <= j <= t} |x_j|``; infinite ends are clamped to the stored window."""
    if s > t:
        raise ValueError("need s <= t")
    lo = x.start if s == -math.inf else max(int(s), x.start)
    hi = x.stop - 1 if t == math.inf else min(int(t), x.stop - 1)
    if lo > hi:
        return 0.0
    return float(np.abs(x.values[lo - x.start: hi - x.start + 1]).max())


def infargmax(x: FiniteSeq) -> int | float:
    """First index at which ``|x_j|`` attains its maximum.

    Returns an ``int`` for a nonzero sequence and ``-math.inf`` for the zero
    sequence, whose supremum is attained by every prefix.
    """
    a = np.abs(x.values)
    if a.size == 0 or not np.any(a):
        return -math.inf
    return x.start + int(np.argmax(a))


def canonical_anchor(x: FiniteSeq) -> FiniteSeq:
    """Representative of the shift class of ``x`` whose infargmax is 0."""
    j = infargmax(x)
    if j == -math.inf:
        raise ValueError("the zero sequence has no anchor")
    return shift(x, -j).trim()


def tilde_distance(x: FiniteSeq, y: FiniteSeq) -> float:
    """``inf_k sup_j |x_{j-k} - y_j|`` over all relative shifts ``k``.

    Shifts that make the supports disjoint all give ``max(x*, y*)``, so the
    search is exact over the overlapping range plus that one candidate.
    """
    x, y = x.trim(), y.trim()
    best = max(supnorm(x), supnorm(y))
    if len(x) == 0 or len(y) == 0:
        return best
    for k in range(y.start - (x.stop - 1), (y.stop - 1) - x.start + 1):
        best = min(best, supnorm(shift(x, k) - y))
    return best


@dataclass(frozen=True)
class PathBatch:
    """``n`` sequences on a shared dense window; column ``origin`` is time 0."""

    values: np.ndarray
    origin: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("PathBatch values must be 2-d")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", int(self.origin))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def lo(self) -> int:
        """First time index covered by the dense window."""
        return -self.origin

    @property
    def hi(self) -> int:
        return self.width - 1 - self.origin

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.width) - self.origin

    def column(self, j: int) -> np.ndarray:
        c = self.origin + int(j)
        if 0 <= c < self.width:
            return self.values[:, c]
        return np.zeros(self.n)

    def columns(self, js: np.ndarray) -> np.ndarray:
        """Gather values at per-row or broadcast times ``js`` (zero outside)."""
        c = np.asarray(js) + self.origin
        ok = (c >= 0) & (c < self.width)
        cc = np.where(ok, c, 0)
        rows = np.arange(self.n).reshape((-1,) + (1,) * (cc.ndim - 1))
        return np.where(ok, self.values[rows, cc], 0.0)

    def window_max(self, s: float = -math.inf, t: float = math.inf) -> np.ndarray:
        a = 0 if s == -math.inf else max(int(s) + self.origin, 0)
        b = self.width - 1 if t == math.inf else min(int(t) + self.origin, self.width - 1)
        if a > b:
            return np.zeros(self.n)
        return np.abs(self.values[:, a: b + 1]).max(axis=1)

    def sup(self) -> np.ndarray:
        if self.width == 0:
            return np.zeros(self.n)
        return np.abs(self.values).max(axis=1)

    def infargmax(self) -> np.ndarray:
        """Row-wise infargmax; zero rows map to :data:`MINUS_INF`."""
        a = np.abs(self.values)
        idx = np.argmax(a, axis=1).astype(np.int64) - self.origin
        idx[~np.any(a > 0, axis=1)] = MINUS_INF
        return idx

    def shift(self, k: int) -> "PathBatch":
        return PathBatch(self.values, self.origin - int(k))

    def restrict(self, s: float = -math.inf, t: float = math.inf) -> "PathBatch":
        """Copy with every coordinate outside ``[s, t]`` set to zero."""
        v = self.values.copy()
        if s != -math.inf:
            v[:, : max(int(s) + self.origin, 0)] = 0.0
        if t != math.inf:
            v[:, max(int(t) + self.origin + 1, 0):] = 0.0
        return PathBatch(v, self.origin)

    def scale_rows(self, c: np.ndarray) -> "PathBatch":
        return PathBatch(self.values * np.asarray(c, dtype=float)[:, None], self.origin)

    def take(self, idx) -> "PathBatch":
        return PathBatch(self.values[idx], self.origin)

    def expand(self, lo: int, hi: int) -> "PathBatch":
        """Same sequences on a dense window covering at least ``lo .. hi``."""
        lo, hi = min(lo, self.lo), max(hi, self.hi)
        out = np.zeros((self.n, hi - lo + 1))
        out[:, self.lo - lo: self.lo - lo + self.width] = self.values
        return PathBatch(out, -lo)

    def row(self, i: int) -> FiniteSeq:
        return FiniteSeq(self.lo, self.values[i]).trim()

    def to_seqs(self) -> list[FiniteSeq]:
        return [self.row(i) for i in range(self.n)]

    @classmethod
    def from_seqs(cls, seqs: Sequence[FiniteSeq]) -> "PathBatch":
        seqs = [s.trim() for s in seqs]
        nonempty = [s for s in seqs if len(s)]
        lo = min((s.start for s in nonempty), default=0)
        hi = max((s.stop - 1 for s in nonempty), default=0)
        lo, hi = min(lo, 0), max(hi, 0)
        out = np.zeros((len(seqs), hi - lo + 1))
        for i, s in enumerate(seqs):
            if len(s):
                out[i, s.start - lo: s.stop - lo] = s.values
        return cls(out, -lo)

    @classmethod
    def concat(cls, batches: Sequence["PathBatch"]) -> "PathBatch":
        lo = min(b.lo for b in batches)
        hi = max(b.hi for b in batches)
        return cls(np.vstack([b.expand(lo, hi).values for b in batches]), -lo)
