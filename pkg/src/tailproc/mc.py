"""Seeded lane-parallel Monte Carlo plumbing.

Every estimator in the package funnels through :func:`run_lanes`: the sample
budget is split over a fixed number of lanes, each lane owns an independent
stream spawned from one :class:`numpy.random.SeedSequence`, and the per-lane
moments are merged in lane order. Output is therefore bit-reproducible given
``(seed, n, lanes)`` regardless of how many worker threads are used.
"""
from __future__ import annotations

import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_CHUNK = 8192
LANES_ENV = "TAILPROC_LANES"
# absolute slack for comparisons whose stderr is exactly zero (float rounding only)
ATOL_REL = 1e-10


def default_lanes() -> int:
    try:
        return max(1, int(os.environ.get(LANES_ENV, "1")))
    except ValueError:
        return 1


def derive_seed(seed: int, *labels) -> int:
    """Deterministically derive a 64-bit child seed from ``seed`` and labels."""
    keys = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            keys.append(int(lab) & 0xFFFFFFFF)
        else:
            keys.append(zlib.crc32(repr(lab).encode()))
    ss = np.random.SeedSequence(keys)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo scalar."""

    value: float
    stderr: float
    n_samples: int
    seed: int | None = None

    def __post_init__(self):
        if self.stderr < 0 or (self.n_samples is not None and self.n_samples < 0):
            raise ValueError("stderr and n_samples must be nonnegative")

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(float(value), 0.0, 0, None)

    def interval(self, z: float = 3.0) -> tuple[float, float]:
        return self.value - z * self.stderr, self.value + z * self.stderr

    def sigmas_from(self, target: float) -> float:
        return discrepancy_sigmas(self.value - target, self.stderr, scale=max(abs(self.value), abs(target)))

    def agrees_with(self, target: float, tol: float = 3.0) -> bool:
        return within_tolerance(self.value - target, self.stderr, tol, max(abs(self.value), abs(target)))

    def scaled(self, c: float) -> "Estimate":
        return Estimate(self.value * c, self.stderr * abs(c), self.n_samples, self.seed)

    def __format__(self, spec):
        return f"{self.value:{spec or '.6g'}} ± {self.stderr:{spec or '.2g'}}"


def discrepancy_sigmas(diff: float, stderr: float, scale: float = 1.0) -> float:
    if not math.isfinite(diff):
        return math.inf
    excess = max(abs(diff) - ATOL_REL * max(1.0, scale), 0.0)
    if stderr > 0:
        return excess / stderr
    return 0.0 if excess == 0 else math.inf


def within_tolerance(diff: float, stderr: float, tol: float, scale: float = 1.0) -> bool:
    if math.isnan(diff):
        return False
    return abs(diff) <= tol * stderr + ATOL_REL * max(1.0, scale)


class Moments:
    """Running mean and co-moment matrix of a k-dimensional sample (Chan et al. merge)."""

    def __init__(self, k: int):
        self.k = k
        self.n = 0
        self.mean = np.zeros(k)
        self.m2 = np.zeros((k, k))

    def update(self, x: np.ndarray) -> "Moments":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] != self.k:
            raise ValueError(f"expected {self.k} columns, got {x.shape[1]}")
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite Monte Carlo sample")
        m = x.shape[0]
        if m == 0:
            return self
        other = Moments(self.k)
        other.n = m
        other.mean = x.mean(axis=0)
        dev = x - other.mean
        other.m2 = dev.T @ dev
        return self.merge(other)

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.n / n)
        self.m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.n * other.n / n)
        self.n = n
        return self

    @property
    def cov(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros((self.k, self.k))
        return self.m2 / (self.n - 1)

    def stderr(self, i: int) -> float:
        if self.n < 2:
            return 0.0
        return float(math.sqrt(max(self.cov[i, i], 0.0) / self.n))

    def diff_stderr(self, i: int, j: int) -> float:
        if self.n < 2:
            return 0.0
        c = self.cov
        return float(math.sqrt(max(c[i, i] + c[j, j] - 2 * c[i, j], 0.0) / self.n))

    def estimate(self, i: int = 0, seed: int | None = None) -> Estimate:
        return Estimate(float(self.mean[i]), self.stderr(i), self.n, seed)


Kernel = Callable[[np.random.Generator, int], np.ndarray]


def _lane_sizes(n: int, lanes: int) -> list[int]:
    base, extra = divmod(n, lanes)
    return [base + (1 if i < extra else 0) for i in range(lanes)]


def run_lanes(
    kernel: Kernel,
    n: int,
    seed: int,
    k: int | None = None,
    lanes: int | None = None,
    chunk: int = DEFAULT_CHUNK,
    n_jobs: int = 1,
) -> Moments:
    """Evaluate ``kernel(rng, m) -> (m, k)`` over ``n`` samples split in lanes.

    Chunk boundaries depend only on ``(n, lanes, chunk)``, so the merged result
    is identical for any ``n_jobs``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    lanes = lanes or default_lanes()
    children = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).spawn(lanes)

    def one_lane(args):
        size, child = args
        rng = np.random.default_rng(child)
        acc = None
        done = 0
        while done < size:
            m = min(chunk, size - done)
            out = np.asarray(kernel(rng, m), dtype=float)
            if out.ndim == 1:
                out = out[:, None]
            if acc is None:
                acc = Moments(out.shape[1])
            acc.update(out)
            done += m
        return acc

    jobs = list(zip(_lane_sizes(n, lanes), children))
    if n_jobs > 1 and lanes > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(one_lane, jobs))
    else:
        parts = [one_lane(j) for j in jobs]
    parts = [p for p in parts if p is not None]
    total = Moments(k if k is not None else parts[0].k)
    for p in parts:
        total.merge(p)
    return total


@dataclass
class Comparison:
    label_a: str
    label_b: str
    a: Estimate
    b: Estimate
    diff_stderr: float
    sigmas: float
    passed: bool


@dataclass
class IdentityReport:
    """Named set of estimated sides plus the pairwise comparisons between them."""

    name: str
    sides: list[tuple[str, Estimate]]
    comparisons: list[Comparison] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def max_discrepancy_sigmas(self) -> float:
        return max((c.sigmas for c in self.comparisons), default=0.0)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.comparisons)

    def side(self, label: str) -> Estimate:
        for lab, est in self.sides:
            if lab == label:
                return est
        raise KeyError(label)

    def summary(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'} (max {self.max_discrepancy_sigmas:.2f} sigma)"]
        for lab, est in self.sides:
            lines.append(f"  {lab:<28s} {est.value:.6g} ± {est.stderr:.2g}")
        return "\n".join(lines)


def compare(
    label_a: str,
    a: Estimate,
    label_b: str,
    b: Estimate,
    diff_stderr: float | None = None,
    tol: float = 3.0,
) -> Comparison:
    """Compare two estimates; independent unless a paired ``diff_stderr`` is given."""
    if diff_stderr is None:
        diff_stderr = math.hypot(a.stderr, b.stderr)
    if math.isinf(a.value) or math.isinf(b.value):
        same = a.value == b.value
        return Comparison(label_a, label_b, a, b, diff_stderr, 0.0 if same else math.inf, same)
    d = a.value - b.value
    scale = max(abs(a.value), abs(b.value))
    return Comparison(
        label_a, label_b, a, b, diff_stderr,
        discrepancy_sigmas(d, diff_stderr, scale),
        within_tolerance(d, diff_stderr, tol, scale),
    )


def report_from_moments(
    name: str,
    labels: Sequence[str],
    moments: Moments,
    seed: int | None = None,
    pairs: Sequence[tuple[str, str]] | None = None,
    exact: dict[str, float] | None = None,
    tol: float = 3.0,
) -> IdentityReport:
    """Build a report from paired samples; ``exact`` adds zero-variance reference sides."""
    labels = list(labels)
    sides = [(lab, moments.estimate(i, seed)) for i, lab in enumerate(labels)]
    exact = exact or {}
    for lab, val in exact.items():
        sides.append((lab, Estimate.exact(val)))
    if pairs is None:
        names = [s[0] for s in sides]
        pairs = [(names[i], names[j]) for i in range(len(names)) for j in range(i + 1, len(names))]
    est = dict(sides)
    comps = []
    for la, lb in pairs:
        if la in exact or lb in exact:
            dse = None
        else:
            dse = moments.diff_stderr(labels.index(la), labels.index(lb))
        comps.append(compare(la, est[la], lb, est[lb], dse, tol))
    return IdentityReport(name, sides, comps)
