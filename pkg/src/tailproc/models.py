"""Spectral tail process laws, stationary series simulators and the empirical oracle.

Each :class:`SpectralModel` draws batches of spectral paths ``Theta`` with
``|Theta_0| = 1``. Models whose law is discrete also expose :meth:`enumerate`,
an exact list of ``(probability, path)`` pairs, which is what every closed-form
reference value in the test-suite is computed from.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .seqspace import MINUS_INF, FiniteSeq, PathBatch, infargmax, spike, window_max

# forward truncation target for geometric paths
GEOM_TRUNC = 1e-12
# enumeration stops when the neglected probability drops below this
ENUM_TAIL = 1e-15
DEFAULT_BUDGET = 10**7


class RejectionBudgetExceeded(RuntimeError):
    def __init__(self, attempts: int, accepted: int, wanted: int):
        self.attempts = attempts
        self.accepted = accepted
        self.acceptance_rate = accepted / attempts if attempts else 0.0
        super().__init__(
            f"rejection budget of {attempts} attempts exhausted with {accepted}/{wanted} accepted "
            f"(acceptance rate {self.acceptance_rate:.3g})"
        )


def _fmt(x: float) -> str:
    return f"{x:g}"


def pareto(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Standard Pareto(alpha) on [1, inf) by inversion."""
    return (1.0 - rng.random(size)) ** (-1.0 / alpha)


class SpectralModel:
    """Base class: a law for the spectral tail process with tail index ``alpha``."""

    name = "base"

    def __init__(self, alpha: float):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)

    # subclasses override -------------------------------------------------
    def sample(self, rng: np.random.Generator, n: int) -> PathBatch:
        raise NotImplementedError

    def enumerate(self) -> list[tuple[float, FiniteSeq]] | None:
        """Exact law as ``(probability, path)`` pairs, or ``None`` if unavailable."""
        return None

    @property
    def spec(self) -> str:
        raise NotImplementedError

    @property
    def nonnegative(self) -> bool:
        raise NotImplementedError

    def reach(self, eps: float = GEOM_TRUNC) -> int:
        """Largest lag at which a path normalized to sup 1 can exceed ``eps``."""
        raise NotImplementedError

    def with_alpha(self, alpha: float) -> "SpectralModel":
        raise NotImplementedError(f"{self.name} model cannot change alpha")

    # shared ----------------------------------------------------------------
    def exact_theta(self) -> float | None:
        """``P(I(Theta) = 0)`` computed from the exact law."""
        law = self.enumerate()
        if law is None:
            return None
        return math.fsum(w for w, th in law if infargmax(th) == 0)

    def sample_one(self, rng: np.random.Generator) -> FiniteSeq:
        return self.sample(rng, 1).row(0)

    @property
    def has_series(self) -> bool:
        return False

    def __repr__(self):
        return f"{type(self).__name__}({self.spec})"

    def __eq__(self, other):
        return isinstance(other, SpectralModel) and self.spec == other.spec

    def __hash__(self):
        return hash(self.spec)


class IID(SpectralModel):
    """Independent observations: ``Theta`` is a signed unit spike."""

    name = "iid"

    def __init__(self, alpha: float, p: float = 1.0):
        super().__init__(alpha)
        if not 0 <= p <= 1:
            raise ValueError("p must lie in [0, 1]")
        self.p = float(p)

    def sample(self, rng, n):
        s = np.where(rng.random(n) < self.p, 1.0, -1.0) if self.p < 1 else np.ones(n)
        return PathBatch(s[:, None], 0)

    def enumerate(self):
        law = [(self.p, spike(0, 1.0)), (1 - self.p, spike(0, -1.0))]
        return [(w, th) for w, th in law if w > 0]

    def exact_theta(self):
        return 1.0

    @property
    def spec(self):
        return f"iid:alpha={_fmt(self.alpha)},p={_fmt(self.p)}"

    @property
    def nonnegative(self):
        return self.p == 1.0

    def reach(self, eps=GEOM_TRUNC):
        return 0

    def with_alpha(self, alpha):
        return IID(alpha, self.p)

    @property
    def has_series(self):
        return True

    def series(self, rng, length):
        z = pareto(rng, self.alpha, length)
        if self.p < 1:
            z = z * np.where(rng.random(length) < self.p, 1.0, -1.0)
        return z


class Deterministic(SpectralModel):
    """A fixed spectral path. Only the unit spike is a valid spectral process;
    other paths are useful as counterexamples for the time change check."""

    name = "deterministic"

    def __init__(self, alpha: float, path: FiniteSeq | None = None):
        super().__init__(alpha)
        path = spike(0, 1.0) if path is None else path
        if not math.isclose(abs(path[0]), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError(f"deterministic path needs |theta_0| = 1, got {path[0]}")
        self.path = path.trim()

    def sample(self, rng, n):
        return PathBatch.from_seqs([self.path]).take(np.zeros(n, dtype=int))

    def enumerate(self):
        return [(1.0, self.path)]

    @property
    def spec(self):
        vals = ";".join(_fmt(v) for v in self.path.values)
        return f"deterministic:alpha={_fmt(self.alpha)},path={vals},start={self.path.start}"

    @property
    def nonnegative(self):
        return bool(np.all(self.path.values >= 0))

    def reach(self, eps=GEOM_TRUNC):
        lo, hi = self.path.support()
        return hi - lo

    def with_alpha(self, alpha):
        return Deterministic(alpha, self.path)


class MovingAverage(SpectralModel):
    """Finite moving average ``X_t = sum_k c_k Z_{t-k}`` with Pareto innovations.

    A large ``|X_0|`` comes from one big innovation hitting coefficient ``c_J``
    with ``P(J = k)`` proportional to ``c_k ** alpha``; then
    ``Theta_j = s * c_{J+j} / c_J`` with ``s`` the innovation sign.
    """

    name = "ma"

    def __init__(self, alpha: float, coeffs=(1.0, 0.5), p: float = 1.0):
        super().__init__(alpha)
        c = np.asarray(coeffs, dtype=float).reshape(-1)
        if c.size == 0 or np.any(c < 0) or not np.any(c > 0):
            raise ValueError("coeffs must be nonnegative and not all zero")
        if not 0 <= p <= 1:
            raise ValueError("p must lie in [0, 1]")
        self.coeffs = c
        self.p = float(p)
        w = c ** self.alpha
        self.weights = w / math.fsum(w)

    @property
    def q(self) -> int:
        return len(self.coeffs) - 1

    def _path(self, J: int, s: float) -> FiniteSeq:
        return FiniteSeq(-J, s * self.coeffs / self.coeffs[J])

    def sample(self, rng, n):
        q = self.q
        J = rng.choice(q + 1, size=n, p=self.weights)
        s = np.where(rng.random(n) < self.p, 1.0, -1.0) if self.p < 1 else np.ones(n)
        # row i holds c_{J+j}/c_J at time j, stored on the window -q..q
        out = np.zeros((n, 2 * q + 1))
        cols = (q - J)[:, None] + np.arange(q + 1)[None, :]
        out[np.arange(n)[:, None], cols] = self.coeffs[None, :] / self.coeffs[J][:, None]
        return PathBatch(out * s[:, None], q)

    def enumerate(self):
        law = []
        for J in range(self.q + 1):
            if self.weights[J] == 0:
                continue
            for s, ps in ((1.0, self.p), (-1.0, 1 - self.p)):
                if ps > 0:
                    law.append((self.weights[J] * ps, self._path(J, s)))
        return law

    def exact_theta(self):
        return float(self.coeffs.max() ** self.alpha / math.fsum(self.coeffs ** self.alpha))

    @property
    def norm_alpha(self) -> float:
        """``||c||_alpha ** alpha``, the marginal tail constant of the series."""
        return math.fsum(self.coeffs ** self.alpha)

    @property
    def spec(self):
        cs = ";".join(_fmt(v) for v in self.coeffs)
        return f"ma:alpha={_fmt(self.alpha)},coeffs={cs},p={_fmt(self.p)}"

    @property
    def nonnegative(self):
        return self.p == 1.0

    def reach(self, eps=GEOM_TRUNC):
        return self.q

    def with_alpha(self, alpha):
        return MovingAverage(alpha, self.coeffs, self.p)

    @property
    def has_series(self):
        return True

    def series(self, rng, length):
        q = self.q
        z = pareto(rng, self.alpha, length + q)
        if self.p < 1:
            z = z * np.where(rng.random(length + q) < self.p, 1.0, -1.0)
        # the first q outputs would use innovations from before the start; drop them
        return np.convolve(z, self.coeffs, mode="valid")


class Geometric(SpectralModel):
    """Exponentially decaying spectral paths ``Theta_j = rho ** j`` for ``j >= -N``.

    ``N`` is the number of backward steps, with ``P(N >= m) = rho ** (m alpha)``,
    and ``Theta_j = 0`` for ``j < -N``.
    This is the spectral process of the positive AR(1)-type recursion
    ``X_t = max(rho X_{t-1}, Z_t)`` and has extremal index ``1 - rho ** alpha``.
    """

    name = "geometric"

    def __init__(self, alpha: float, rho: float = 0.5):
        super().__init__(alpha)
        if not 0 < rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        self.rho = float(rho)
        self.forward = int(math.ceil(math.log(GEOM_TRUNC) / (min(1.0, self.alpha) * math.log(self.rho))))

    @property
    def back_prob(self) -> float:
        return self.rho ** self.alpha

    def sample(self, rng, n):
        # number of failures before the first success, success prob 1 - rho^alpha
        N = rng.geometric(1.0 - self.back_prob, size=n) - 1
        top = int(N.max(initial=0))
        t = np.arange(-top, self.forward + 1)
        vals = np.where(t[None, :] >= -N[:, None], self.rho ** t[None, :].astype(float), 0.0)
        return PathBatch(vals, top)

    def _path(self, N: int) -> FiniteSeq:
        return FiniteSeq(-N, self.rho ** np.arange(-N, self.forward + 1, dtype=float))

    def enumerate(self, tail: float = ENUM_TAIL):
        q = self.back_prob
        top = int(math.ceil(math.log(tail) / math.log(q)))
        return [((1 - q) * q ** m, self._path(m)) for m in range(top + 1)]

    def exact_theta(self):
        return 1.0 - self.back_prob

    @property
    def spec(self):
        return f"geometric:alpha={_fmt(self.alpha)},rho={_fmt(self.rho)}"

    @property
    def nonnegative(self):
        return True

    def reach(self, eps=GEOM_TRUNC):
        return min(self.forward, int(math.ceil(math.log(eps) / math.log(self.rho))))

    def with_alpha(self, alpha):
        return Geometric(alpha, self.rho)


class Empirical(SpectralModel):
    """A finite weighted table of spectral paths."""

    name = "empirical"

    def __init__(self, alpha: float, paths, weights=None, source: str | None = None):
        super().__init__(alpha)
        paths = [p.trim() for p in paths]
        if not paths:
            raise ValueError("empirical model needs at least one path")
        for p in paths:
            if not math.isclose(abs(p[0]), 1.0, rel_tol=0, abs_tol=1e-9):
                raise ValueError(f"every path needs |theta_0| = 1, got {p[0]}")
        w = np.ones(len(paths)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(paths),) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative, one per path")
        self.paths = paths
        self.weights = w / w.sum()
        self.source = source
        self._batch = PathBatch.from_seqs(paths)

    @classmethod
    def from_model(cls, model: SpectralModel) -> "Empirical":
        law = model.enumerate()
        if law is None:
            raise ValueError(f"{model.name} has no exact enumeration")
        return cls(model.alpha, [th for _, th in law], [w for w, _ in law], source=model.spec)

    @classmethod
    def from_json(cls, path: str | Path) -> "Empirical":
        data = json.loads(Path(path).read_text())
        rows = data["paths"]
        seqs = [FiniteSeq(r.get("start", 0), r["values"]) for r in rows]
        return cls(data["alpha"], seqs, [r.get("weight", 1.0) for r in rows], source=str(path))

    def to_json(self) -> str:
        rows = [{"start": p.start, "values": p.values.tolist(), "weight": float(w)}
                for p, w in zip(self.paths, self.weights)]
        return json.dumps({"alpha": self.alpha, "paths": rows})

    def sample(self, rng, n):
        return self._batch.take(rng.choice(len(self.paths), size=n, p=self.weights))

    def enumerate(self):
        return list(zip(self.weights.tolist(), self.paths))

    @property
    def spec(self):
        if self.source and not self.source.startswith(("iid:", "ma:", "geometric:", "deterministic:")):
            return f"empirical:alpha={_fmt(self.alpha)},file={self.source}"
        return f"empirical:alpha={_fmt(self.alpha)},paths={len(self.paths)}" + (
            f",from={self.source}" if self.source else "")

    @property
    def nonnegative(self):
        return bool(np.all(self._batch.values >= 0))

    def reach(self, eps=GEOM_TRUNC):
        return max(p.stop - p.start - 1 for p in self.paths)


# sampling entry points ------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_spectral(model: SpectralModel, rng_seed=None) -> FiniteSeq:
    """One draw of the spectral tail process."""
    return model.sample_one(_rng(rng_seed))


def sample_spectral_batch(model: SpectralModel, n: int, rng_seed=None) -> PathBatch:
    return model.sample(_rng(rng_seed), n)


CONDITIONS = ("InfargmaxZero", "NoBackwardExceedance")


def sample_conditioned_batch(
    model: SpectralModel,
    condition: str,
    n: int,
    rng_seed=None,
    budget: int = DEFAULT_BUDGET,
    return_rate: bool = False,
):
    """Rejection-sample ``n`` conditioned paths.

    ``InfargmaxZero`` keeps ``Theta`` with ``I(Theta) = 0``.
    ``NoBackwardExceedance`` draws ``Y = R Theta``, keeps it when
    ``sup_{j <= -1} |Y_j| <= 1`` and returns ``Y / Y*``, a draw of ``Q``.
    Both acceptance rates equal the candidate extremal index.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    rng = _rng(rng_seed)
    kept: list[PathBatch] = []
    got = tried = 0
    while got < n:
        if tried >= budget:
            raise RejectionBudgetExceeded(tried, got, n)
        m = min(budget - tried, max(64, int(1.25 * (n - got) / max(got / tried, 0.01) if tried else n)))
        th = model.sample(rng, m)
        if condition == "InfargmaxZero":
            ok = th.infargmax() == 0
            acc = th.take(ok)
        else:
            r = pareto(rng, model.alpha, m)
            y = th.scale_rows(r)
            ok = y.window_max(-math.inf, -1) <= 1.0
            acc = y.take(ok)
            acc = acc.scale_rows(1.0 / acc.sup())
        tried += m
        got += acc.n
        kept.append(acc)
    out = PathBatch.concat(kept).take(slice(0, n))
    return (out, got / tried) if return_rate else out


def sample_spectral_conditioned(model: SpectralModel, condition: str, rng_seed=None,
                                budget: int = DEFAULT_BUDGET) -> FiniteSeq:
    return sample_conditioned_batch(model, condition, 1, rng_seed, budget).row(0)


def backward_weight(batch: PathBatch, alpha: float) -> np.ndarray:
    """``(1 - (Theta*_{-inf,-1}) ** alpha)_+``: probability that ``R Theta`` has no
    backward exceedance of 1, given ``Theta``."""
    return np.maximum(1.0 - batch.window_max(-math.inf, -1) ** alpha, 0.0)


def forward_weight(batch: PathBatch, alpha: float) -> np.ndarray:
    return np.maximum(1.0 - batch.window_max(1, math.inf) ** alpha, 0.0)


def enumerate_q(model: SpectralModel) -> list[tuple[float, FiniteSeq]]:
    """Exact law of ``Q`` from the exact law of ``Theta``.

    ``theta * E[g(Q)] = E[g(Theta / Theta*) (1 - (Theta*_{-inf,-1})^alpha)_+]``,
    so reweighting the enumeration and normalizing by ``theta`` gives the law.
    """
    law = model.enumerate()
    if law is None:
        raise ValueError(f"{model.name} has no exact enumeration")
    out: dict[FiniteSeq, float] = {}
    for w, th in law:
        b = max(1.0 - window_max(th, -math.inf, -1) ** model.alpha, 0.0)
        if w * b > 0:
            q = th / max(abs(th.values))
            out[q] = out.get(q, 0.0) + w * b
    total = math.fsum(out.values())
    return [(v / total, q) for q, v in out.items()]


# stationary series ----------------------------------------------------------

@dataclass
class TimeSeries:
    values: np.ndarray
    model: str
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)


def simulate_series(model: SpectralModel, length: int, rng_seed=None) -> TimeSeries:
    """Stationary series whose spectral tail process is ``model``'s (IID and MA only)."""
    if not model.has_series:
        raise ValueError(f"{model.name} model has no attached stationary series")
    if length < 1:
        raise ValueError("length must be positive")
    seed = rng_seed if isinstance(rng_seed, (int, np.integer)) else None
    return TimeSeries(model.series(_rng(rng_seed), int(length)), model.spec, seed)


@dataclass
class TailSample:
    """Scaled windows ``u^{-1} X_{t-m..t+m}`` around exceedances ``|X_t| > u``."""

    paths: PathBatch
    threshold: float
    positions: np.ndarray

    @property
    def n(self) -> int:
        return self.paths.n

    def spectral(self) -> PathBatch:
        """Windows normalized by ``|X_t|`` instead of ``u``."""
        return self.paths.scale_rows(1.0 / np.abs(self.paths.column(0)))

    def mean(self, H, spectral: bool = False):
        from .mc import Estimate
        h = H.evaluate(self.spectral() if spectral else self.paths)
        se = h.std(ddof=1) / math.sqrt(len(h)) if len(h) > 1 else 0.0
        return Estimate(float(h.mean()), float(se), len(h))


def empirical_tail_process(series, u: float, m: int, min_exceedances: int = 200) -> TailSample:
    """Collect ``u^{-1} X_{t-m..t+m}`` at every ``t`` with ``|X_t| > u``."""
    x = np.asarray(getattr(series, "values", series), dtype=float)
    if m < 0:
        raise ValueError("half window must be nonnegative")
    t = np.flatnonzero(np.abs(x) > u)
    t = t[(t >= m) & (t < len(x) - m)]
    if len(t) < min_exceedances:
        raise ValueError(f"only {len(t)} exceedances of {u:g}; need {min_exceedances}")
    win = np.lib.stride_tricks.sliding_window_view(x, 2 * m + 1)[t - m]
    return TailSample(PathBatch(win / u, m), float(u), t)


class EmpiricalTailProcess(BaseEstimator):
    """Estimate the law of the spectral tail process from one observed series.

    Parameters
    ----------
    half_window : int
        Lags ``-m..m`` retained around each exceedance.
    quantile : float
        The threshold is this empirical quantile of ``|X|`` unless ``threshold``
        is given.
    threshold : float, optional
        Fixed threshold ``u``.
    min_exceedances : int
        Fitting fails below this many exceedances.
    """

    def __init__(self, half_window: int = 5, quantile: float = 0.99, threshold: float | None = None,
                 min_exceedances: int = 200):
        self.half_window = half_window
        self.quantile = quantile
        self.threshold = threshold
        self.min_exceedances = min_exceedances

    def fit(self, X, y=None):
        x = np.asarray(X, dtype=float)
        if x.ndim == 2 and 1 in x.shape:
            x = x.reshape(-1)
        if x.ndim != 1:
            raise ValueError("expected a univariate series")
        if not np.all(np.isfinite(x)):
            raise ValueError("series contains non-finite values")
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        u = self.threshold if self.threshold is not None else float(np.quantile(np.abs(x), self.quantile))
        sample = empirical_tail_process(x, u, int(self.half_window), self.min_exceedances)
        self.threshold_ = sample.threshold
        self.tail_paths_ = sample.paths
        self.spectral_paths_ = sample.spectral()
        self.n_exceedances_ = sample.n
        return self

    def expect(self, H, spectral: bool = True):
        """Sample mean of ``H`` over the fitted spectral (or tail) windows."""
        check_is_fitted(self, "spectral_paths_")
        return TailSample(self.tail_paths_, self.threshold_, np.empty(0)).mean(H, spectral)

    def to_model(self, alpha: float) -> Empirical:
        check_is_fitted(self, "spectral_paths_")
        return Empirical(alpha, self.spectral_paths_.to_seqs(), source="fitted")


# model grammar --------------------------------------------------------------

MODEL_HELP = {
    "iid": "iid:alpha=A[,p=P]  independent Pareto(A) with sign skew P",
    "ma": "ma:alpha=A,coeffs=c0;c1;...[,p=P]  finite moving average with Pareto innovations",
    "geometric": "geometric:alpha=A,rho=R  geometric spectral paths rho^j, extremal index 1-R^A",
    "deterministic": "deterministic:alpha=A[,path=v0;v1;...,start=S]  a fixed spectral path",
    "empirical": "empirical:alpha=A,file=PATH.json  weighted table of paths",
}


class ModelParseError(ValueError):
    pass


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(";") if v.strip()]


def parse_model(text: str) -> SpectralModel:
    """Parse ``name:key=value,...`` into a model."""
    name, _, rest = text.strip().partition(":")
    name = name.strip().lower()
    if name not in MODEL_HELP:
        raise ModelParseError(f"unknown model {name!r}; expected one of {sorted(MODEL_HELP)}")
    kv = {}
    if rest.strip():
        for item in rest.split(","):
            k, eq, v = item.partition("=")
            if not eq or not k.strip():
                raise ModelParseError(f"malformed parameter {item!r} in {text!r}")
            kv[k.strip().lower()] = v.strip()
    allowed = {
        "iid": {"alpha", "p"},
        "ma": {"alpha", "coeffs", "p"},
        "geometric": {"alpha", "rho"},
        "deterministic": {"alpha", "path", "start"},
        "empirical": {"alpha", "file"},
    }[name]
    extra = set(kv) - allowed
    if extra:
        raise ModelParseError(f"unknown parameter(s) {sorted(extra)} for {name}")
    if "alpha" not in kv:
        raise ModelParseError(f"{name} needs alpha")
    try:
        alpha = float(kv["alpha"])
        if name == "iid":
            return IID(alpha, float(kv.get("p", 1)))
        if name == "ma":
            return MovingAverage(alpha, _floats(kv.get("coeffs", "1;0.5")), float(kv.get("p", 1)))
        if name == "geometric":
            return Geometric(alpha, float(kv.get("rho", 0.5)))
        if name == "deterministic":
            path = FiniteSeq(int(kv.get("start", 0)), _floats(kv.get("path", "1")))
            return Deterministic(alpha, path)
        if "file" not in kv:
            raise ModelParseError("empirical needs file=")
        model = Empirical.from_json(kv["file"])
        if not math.isclose(model.alpha, alpha):
            raise ModelParseError(f"alpha {alpha} disagrees with file alpha {model.alpha}")
        return model
    except ModelParseError:
        raise
    except OSError:
        raise
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ModelParseError(f"bad model {text!r}: {exc}") from exc


def builtin_models(alpha: float | None = None) -> list[SpectralModel]:
    """The reference battery: one model of every kind."""
    ma3 = MovingAverage(1.2, (0.5, 1.0, 0.25))
    models = [
        IID(1.5),
        Deterministic(2.0),
        MovingAverage(1.5, (1.0, 0.5)),
        Geometric(1.0, 0.5),
        Empirical.from_model(ma3),
    ]
    if alpha is None:
        return models
    out = []
    for m in models:
        if isinstance(m, Empirical):
            out.append(Empirical.from_model(ma3.with_alpha(alpha)))
        else:
            out.append(m.with_alpha(alpha))
    return out
