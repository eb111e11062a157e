"""Command line runner for the verification suites.

Every run is described by an :class:`ExperimentConfig`; the resolved config
and package version are embedded in every output, and identical configs give
byte-identical output.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

from . import __version__
from .functionals import FunctionalSpec
from .mc import Estimate, IdentityReport, compare, default_lanes, derive_seed
from .models import MODEL_HELP, ModelParseError, SpectralModel, builtin_models, parse_model

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_IO = 0, 1, 2, 3
CSV_COLUMNS = ("suite", "check", "side_a", "side_b", "stderr_a", "stderr_b", "sigmas", "pass")


class ConfigError(ValueError):
    pass


class Skip(Exception):
    """A suite does not apply to a model."""


@dataclass
class ExperimentConfig:
    models: list[str] = field(default_factory=lambda: ["geometric:alpha=1,rho=0.5"])
    suite: str = "all"
    n: int = 100_000
    seed: int = 2024
    lanes: int = 0
    tol: float = 3.0
    out: str | None = None
    format: str = "csv"
    series_length: int = 1_000_000

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config field(s): {sorted(extra)}")
        d = dict(d)
        if isinstance(d.get("models"), str):
            d["models"] = [d["models"]]
        return cls(**d).resolved()

    def resolved(self) -> "ExperimentConfig":
        if self.suite not in SUITES and self.suite != "all":
            raise ConfigError(f"unknown suite {self.suite!r}; expected one of {list(SUITES) + ['all']}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if int(self.n) < 100:
            raise ConfigError("n must be at least 100")
        if not float(self.tol) > 0:
            raise ConfigError("tol must be positive")
        if not self.models:
            raise ConfigError("at least one model is required")
        self.n, self.seed, self.tol = int(self.n), int(self.seed), float(self.tol)
        self.lanes = int(self.lanes) if self.lanes else default_lanes()
        self.series_length = int(self.series_length)
        return self

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("out")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def suites(self) -> list[str]:
        return list(SUITES) if self.suite == "all" else [self.suite]

    def model_objects(self) -> list[SpectralModel]:
        out = []
        for text in self.models:
            if text.strip().lower() == "builtin":
                out.extend(builtin_models())
            else:
                out.append(parse_model(text))
        return out


@dataclass
class Row:
    suite: str
    check: str
    side_a: float
    side_b: float
    stderr_a: float
    stderr_b: float
    sigmas: float
    passed: bool

    def cells(self) -> list[str]:
        return [self.suite, self.check] + [_fmt(v) for v in
                                           (self.side_a, self.side_b, self.stderr_a, self.stderr_b, self.sigmas)] \
            + ["1" if self.passed else "0"]


def _fmt(v: float) -> str:
    return repr(float(v))


def rows_from_report(suite: str, rep: IdentityReport) -> list[Row]:
    return [Row(suite, f"{rep.name}:{c.label_a}~{c.label_b}", c.a.value, c.b.value, c.a.stderr, c.b.stderr,
                c.sigmas, c.passed) for c in rep.comparisons]


# suites ------------------------------------------------------------------------

def _suite_time_change(model, cfg, seed):
    from .tailkernel import certify_model
    n = min(cfg.n, 50_000)
    return [r for rep in certify_model(model, n, seed, cfg.lanes, tol=cfg.tol) for r in rows_from_report("", rep)]


def _suite_extremal_index(model, cfg, seed):
    from .identities import theta_candidates
    return rows_from_report("", theta_candidates(model, cfg.n, seed, cfg.lanes, tol=cfg.tol))


def q_battery(alpha: float) -> list[FunctionalSpec]:
    return [FunctionalSpec.sup(alpha), FunctionalSpec.sum_abs_pow(1.0, alpha),
            FunctionalSpec.pos_part_sum_pow(alpha), FunctionalSpec.running_max_sum_pow(alpha)]


def _suite_q_identities(model, cfg, seed):
    from .identities import check_forward_identity, check_Q_theta_identity, qsum_alpha_identity
    rows = rows_from_report("", qsum_alpha_identity(model, cfg.n, derive_seed(seed, "qsum"), cfg.lanes, cfg.tol))
    for H in q_battery(model.alpha):
        s = derive_seed(seed, H.label)
        rows += rows_from_report("", check_Q_theta_identity(H, model, cfg.n, s, cfg.lanes, cfg.tol))
        rows += rows_from_report("", check_forward_identity(H, model, cfg.n, s + 1, cfg.lanes, cfg.tol))
    return rows


def _suite_cluster_index(model, cfg, seed):
    from .identities import cluster_index
    rows = []
    for H in (FunctionalSpec.pos_part_sum_pow(1.0), FunctionalSpec.running_max_sum_pow(1.0)):
        res = cluster_index(H, model, 30, cfg.n, derive_seed(seed, H.label), cfg.lanes, cfg.tol)
        rows += rows_from_report("", res.report)
    return rows


def _suite_log_alpha1(model, cfg, seed):
    from .identities import check_slog_bound, log_identities_alpha1
    if not model.nonnegative:
        raise Skip("log identities need a nonnegative model")
    try:
        m1 = model if math.isclose(model.alpha, 1.0) else model.with_alpha(1.0)
    except NotImplementedError as exc:
        raise Skip(str(exc)) from exc
    rows = rows_from_report("", log_identities_alpha1(m1, cfg.n, seed, cfg.lanes, cfg.tol))
    bad, ratio = check_slog_bound(cfg.n, derive_seed(seed, "slog"))
    rows.append(Row("", f"slog-bound[{cfg.n} pairs]:violations~zero", bad, 0.0, 0.0, 0.0,
                    0.0 if bad == 0 else math.inf, bad == 0))
    return rows


def _suite_maxstable(model, cfg, seed):
    from .maxstable import (M3Config, block_maxima_extremal_index, empirical_log_survival, fdd_log_survival,
                            frechet_ks, simulate_block_maxima, simulate_m3_batch)
    if not model.nonnegative:
        raise Skip("max-stable construction needs a nonnegative model")
    conf = M3Config(model, (0, 1))
    paths = simulate_m3_batch(conf, cfg.n, derive_seed(seed, "paths"), cfg.lanes)
    rows = []
    level = 1e-3
    for j in (0, 1):
        ks = frechet_ks(paths[:, j], model.alpha)
        rows.append(Row("", f"m3-frechet-ks[{model.spec}|j={j}]:pvalue~level", float(ks.pvalue), level,
                        0.0, 0.0, math.nan, bool(ks.pvalue >= level)))
    for i, y in enumerate(({0: 1.0, 1: 1.0}, {0: 0.5, 1: 2.0}, {0: 2.0, 1: 0.7})):
        tag = f"y0={y[0]:g},y1={y[1]:g}"
        emp = empirical_log_survival(paths, 0, y)
        fa = fdd_log_survival(y, model, cfg.n, derive_seed(seed, "fdd", i), cfg.lanes)
        fq = fdd_log_survival(y, model, cfg.n, derive_seed(seed, "fddq", i), cfg.lanes, method="q")
        rep = IdentityReport(f"m3-fdd[{model.spec}|{tag}]", [("empirical", emp), ("infargmax", fa), ("Q", fq)])
        rep.comparisons = [compare("empirical", emp, "infargmax", fa, tol=cfg.tol),
                           compare("infargmax", fa, "Q", fq, tol=cfg.tol)]
        rows += rows_from_report("", rep)
    block = 1000
    bm = simulate_block_maxima(M3Config(model, (1, block), theta=conf.theta), max(cfg.n // 5, 2000),
                               derive_seed(seed, "blockmax"), cfg.lanes)
    est = block_maxima_extremal_index(bm, block, model.alpha)
    ref = model.exact_theta()
    ref_est = Estimate.exact(ref) if ref is not None else Estimate.exact(conf.theta)
    rep = IdentityReport(f"m3-block-maxima[{model.spec}|n={block}]", [("block-max EI", est), ("theta", ref_est)],
                         [compare("block-max EI", est, "theta", ref_est, tol=cfg.tol)])
    return rows + rows_from_report("", rep)


def _suite_clusterlab(model, cfg, seed):
    from .clusterlab import default_scheme, empirical_cluster_measure, normalized_cluster_law, nu_star_report
    from .models import simulate_series
    if not model.has_series:
        raise Skip("no attached stationary series")
    series = simulate_series(model, cfg.series_length, derive_seed(seed, "series"))
    scheme = default_scheme(series)
    rows = [Row("", f"scheme[{scheme.describe()}]:r_nP~bound", scheme.monitor, 0.05, 0.0, 0.0, 0.0,
                scheme.monitor_ok)]
    for u in scheme.u_grid:
        H = FunctionalSpec.threshold(u)
        emp = empirical_cluster_measure(series, scheme, H, seed=seed)
        nrep = nu_star_report(H, model, cfg.n, derive_seed(seed, "nu*", u), cfg.lanes, cfg.tol)
        ref = nrep.sides[0][1]
        nrep.sides.insert(0, ("empirical", emp))
        nrep.comparisons.insert(0, compare("empirical", emp, nrep.sides[1][0], ref, tol=cfg.tol))
        rows += rows_from_report("", nrep)
    try:
        law = normalized_cluster_law(series, scheme, 1.0, [FunctionalSpec.count_exceed(0.4)], model,
                                     seed=seed, tol=cfg.tol)
    except ValueError as exc:
        rows.append(Row("", f"cluster-law[{scheme.describe()}]:{exc}", math.nan, math.nan, 0, 0, math.nan, False))
    else:
        rows += rows_from_report("", law)
    return rows


SUITES: dict[str, tuple[Callable, str]] = {
    "time-change": (_suite_time_change, "time change formula, tail-process and spectral forms"),
    "extremal-index": (_suite_extremal_index, "six candidate extremal index formulas"),
    "q-identities": (_suite_q_identities, "identities linking Q and Theta"),
    "cluster-index": (_suite_cluster_index, "cluster indices b_k and their slope limit"),
    "log-alpha1": (_suite_log_alpha1, "tail-index-one log identities and the sum-log bound"),
    "maxstable": (_suite_maxstable, "M3 max-stable simulation, marginals, fdd, block maxima"),
    "clusterlab": (_suite_clusterlab, "block cluster measure and cluster law from a simulated series"),
}


def run(cfg: ExperimentConfig) -> tuple[list[Row], list[dict]]:
    """Execute the configured suites; returns result rows and skipped combinations."""
    rows, skipped = [], []
    models = cfg.model_objects()
    for suite in cfg.suites():
        fn = SUITES[suite][0]
        for model in models:
            seed = derive_seed(cfg.seed, suite, model.spec)
            try:
                got = fn(model, cfg, seed)
            except Skip as exc:
                skipped.append({"suite": suite, "model": model.spec, "reason": str(exc)})
                continue
            for r in got:
                r.suite = suite
            rows += got
    return rows, skipped


def render_csv(cfg: ExperimentConfig, rows: list[Row], skipped: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# tailproc {__version__}\n# config {cfg.to_json()}\n")
    for s in skipped:
        buf.write(f"# skipped {s['suite']} {s['model']}: {s['reason']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def render_json(cfg: ExperimentConfig, rows: list[Row], skipped: list[dict]) -> str:
    def num(v):
        v = float(v)
        return v if math.isfinite(v) else repr(v)

    body = {
        "version": __version__,
        "config": json.loads(cfg.to_json()),
        "summary": {"checks": len(rows), "failed": sum(not r.passed for r in rows),
                    "passed": all(r.passed for r in rows),
                    # two-sided Gaussian tail at tol, per check, if every identity holds exactly
                    "expected_false_failures": len(rows) * math.erfc(cfg.tol / math.sqrt(2))},
        "skipped": skipped,
        "rows": [{"suite": r.suite, "check": r.check, "side_a": num(r.side_a), "side_b": num(r.side_b),
                  "stderr_a": num(r.stderr_a), "stderr_b": num(r.stderr_b), "sigmas": num(r.sigmas),
                  "pass": r.passed} for r in rows],
    }
    return json.dumps(body, indent=1, sort_keys=True) + "\n"


def list_models() -> str:
    lines = ["Models (name:key=value,..., lists separated by ';'):"]
    lines += [f"  {MODEL_HELP[k]}" for k in sorted(MODEL_HELP)]
    lines.append("  builtin  the reference battery of one model of each kind")
    return "\n".join(lines) + "\n"


def list_suites() -> str:
    return "".join(f"{k:<15s} {v[1]}\n" for k, v in SUITES.items())


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tailproc", description="Tail process verification lab.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run verification suites",
                       epilog="Model grammar:\n" + "\n".join(MODEL_HELP.values()),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    r.add_argument("--suite", choices=list(SUITES) + ["all"])
    r.add_argument("--model", action="append", dest="models", help="model spec, repeatable (default geometric)")
    r.add_argument("--n", type=int, help="Monte Carlo samples per check (default 100000)")
    r.add_argument("--seed", type=int, help="master seed (default 2024)")
    r.add_argument("--lanes", type=int, help="RNG lanes (default $TAILPROC_LANES or 1)")
    r.add_argument("--tol", type=float, help="tolerance in combined standard errors (default 3)")
    r.add_argument("--out", help="output file (default stdout)")
    r.add_argument("--format", choices=("csv", "json"))
    r.add_argument("--series-length", type=int, dest="series_length", help="series length for clusterlab")
    r.add_argument("--config", help="JSON file with config fields; flags override it")
    sub.add_parser("list-models", help="describe the model grammar")
    sub.add_parser("list-suites", help="list suite names")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    for key in ("suite", "models", "n", "seed", "lanes", "tol", "out", "format", "series_length"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    return ExperimentConfig.from_dict(base)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-models":
        sys.stdout.write(list_models())
        return EXIT_OK
    if args.command == "list-suites":
        sys.stdout.write(list_suites())
        return EXIT_OK
    try:
        cfg = config_from_args(args)
        cfg.model_objects()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ModelParseError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    rows, skipped = run(cfg)
    text = (render_csv if cfg.format == "csv" else render_json)(cfg, rows, skipped)
    try:
        if cfg.out:
            Path(cfg.out).write_text(text)
            if cfg.format == "csv":
                Path(cfg.out).with_suffix(".json").write_text(render_json(cfg, rows, skipped))
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    failed = sum(not r.passed for r in rows)
    print(f"{len(rows)} checks, {failed} failed, {len(skipped)} skipped", file=sys.stderr)
    return EXIT_OK if failed == 0 else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
