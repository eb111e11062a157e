"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Seeds are fixed in advance (2024) and never tuned. Run standalone with
``python tests/test_acceptance.py`` or through pytest, where the lines are
repeated in the terminal summary.
"""
import math
import subprocess
import sys

import numpy as np
import pytest

from tailproc.clusterlab import default_scheme, empirical_cluster_measure, normalized_cluster_law
from tailproc.functionals import FunctionalSpec as F
from tailproc.identities import (
    check_forward_identity,
    check_Q_theta_identity,
    check_slog_bound,
    cluster_index,
    log_identities_alpha1,
    qsum_alpha_identity,
    theta_candidates,
)
from tailproc.maxstable import (
    M3Config,
    block_maxima_extremal_index,
    empirical_log_survival,
    fdd_log_survival,
    frechet_ks,
    simulate_block_maxima,
    simulate_m3_batch,
)
from tailproc.mc import Estimate, compare
from tailproc.models import IID, Geometric, MovingAverage, builtin_models, simulate_series
from tailproc.tailkernel import certify_model, check_time_change

SEED = 2024
TOL = 3.0
GEOM = Geometric(1.0, 0.5)
MA = MovingAverage(1.5, (1.0, 0.5))
RESULTS: list[str] = []


def record(num: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {num} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def criterion_1():
    reps = [theta_candidates(m, 100_000, SEED, tol=TOL) for m in (GEOM, MA)]
    ok = all(r.passed for r in reps)
    detail = "; ".join(f"{r.name} max {r.max_discrepancy_sigmas:.2f} sigma" for r in reps)
    return record(1, "extremal-index hexagon", ok, detail)


def criterion_2():
    reps = [r for m in builtin_models() for r in certify_model(m, 50_000, SEED, tol=TOL)]
    bad = [r.name for r in reps if not r.passed]
    anchor = check_time_change(GEOM, F.const(), 1, 1.0, 50_000, SEED, tol=TOL)
    anchor_ok = anchor.lhs.agrees_with(0.5, TOL) and anchor.rhs.agrees_with(0.5, TOL)
    worst = max(r.max_discrepancy_sigmas for r in reps)
    detail = (f"{len(reps) - len(bad)}/{len(reps)} checks pass, max {worst:.2f} sigma; "
              f"geometric k=1 t=1 lhs {anchor.lhs:.4f} vs 0.5" + (f"; failing {bad[:3]}" if bad else ""))
    return record(2, "time change battery", not bad and anchor_ok, detail)


def criterion_3():
    bad, worst, count = [], 0.0, 0
    for alpha in (0.7, 1.0, 1.5, 2.3):
        for m in builtin_models(alpha):
            rep = qsum_alpha_identity(m, 50_000, SEED, tol=TOL)
            c = rep.comparisons[0]
            count += 1
            worst = max(worst, c.sigmas)
            if not c.passed:
                bad.append(rep.name)
    return record(3, "theta sum E|Q_j|^alpha = 1", not bad,
                  f"{count - len(bad)}/{count} model x alpha pass, max {worst:.2f} sigma" + (f"; failing {bad}" if bad else ""))


def criterion_4():
    bad, worst, count = [], 0.0, 0
    for m in builtin_models():
        a = m.alpha
        for H in (F.sup(a), F.sum_abs_pow(1.0, a), F.pos_part_sum_pow(a), F.running_max_sum_pow(a)):
            for rep in (check_Q_theta_identity(H, m, 50_000, SEED, tol=TOL),
                        check_forward_identity(H, m, 50_000, SEED + 1, tol=TOL)):
                count += 1
                worst = max(worst, rep.max_discrepancy_sigmas)
                if not rep.passed:
                    bad.append(rep.name)
    return record(4, "Q/Theta three-way and forward identities", not bad,
                  f"{count - len(bad)}/{count} reports pass, max {worst:.2f} sigma" + (f"; failing {bad}" if bad else ""))


def criterion_5():
    rep = log_identities_alpha1(GEOM, 100_000, SEED, tol=TOL)
    finite = all(math.isfinite(est.value) for _, est in rep.sides)
    violations, ratio = check_slog_bound(100_000, SEED)
    ok = rep.passed and finite and violations == 0
    return record(5, "alpha = 1 log identities and sum-log bound", ok,
                  f"max {rep.max_discrepancy_sigmas:.2f} sigma, left sides finite={finite}, "
                  f"{violations} violations on 1e5 pairs (max gap/bound {ratio:.3f})")


def criterion_6():
    iid = cluster_index(F.pos_part_sum_pow(1.0), IID(1.5), 30, 10_000, SEED, tol=TOL)
    exact_iid = all(abs(s.b_k.value - s.k) <= 1e-9 and s.b_k.stderr == 0 for s in iid.steps)
    geo = cluster_index(F.pos_part_sum_pow(1.0), GEOM, 30, 100_000, SEED, tol=TOL)
    # theta E[(sum_j Q_j)_+] = 0.5 * 2 = 1 for Q = (1, 1/2, 1/4, ...)
    slope_ok = geo.slope.agrees_with(1.0, TOL) and geo.passed
    return record(6, "cluster index", exact_iid and slope_ok,
                  f"iid b_k = k exactly: {exact_iid}; geometric b_30-b_29 = {geo.slope:.4f} "
                  f"vs 1 and vs limit {geo.limit:.4f}")


def criterion_7():
    series = simulate_series(MA, 1_000_000, SEED)
    scheme = default_scheme(series)
    theta = MA.exact_theta()
    parts, ok = [], scheme.monitor_ok
    for u in (1.0, 2.0):
        e = empirical_cluster_measure(series, scheme, F.threshold(u), seed=SEED)
        good = e.agrees_with(theta * u ** -1.5, TOL)
        ok &= good
        parts.append(f"u={u:g}: {e:.4f} vs {theta * u ** -1.5:.4f} ({e.sigmas_from(theta * u ** -1.5):.2f} sigma)")
    law = normalized_cluster_law(series, scheme, 1.0, [F.count_exceed(0.4)], MA, seed=SEED, tol=TOL)
    ok &= law.passed
    parts.append(f"cluster law max {law.max_discrepancy_sigmas:.2f} sigma ({law.notes[-1]})")
    parts.append(f"r_nP={scheme.monitor:.3g}")
    return record(7, "cross-world cluster convergence", ok, "; ".join(parts))


def criterion_8():
    parts, ok = [], True
    grid = ({0: 1.0, 1: 1.0}, {0: 0.5, 1: 2.0}, {0: 2.0, 1: 0.7}, {0: 1.5, 1: 1.5})
    for model in (GEOM, MA):
        paths = simulate_m3_batch(M3Config(model, (0, 1)), 100_000, SEED)
        pv = min(frechet_ks(paths[:, j], model.alpha).pvalue for j in (0, 1))
        ok &= pv >= 1e-3
        worst = 0.0
        for i, y in enumerate(grid):
            c = compare("emp", empirical_log_survival(paths, 0, y), "fdd",
                        fdd_log_survival(y, model, 100_000, SEED + i), tol=TOL)
            ok &= c.passed
            worst = max(worst, c.sigmas)
        parts.append(f"{model.spec}: KS min p {pv:.3g}, fdd max {worst:.2f} sigma")
    bm = simulate_block_maxima(M3Config(GEOM, (1, 1000)), 20_000, SEED)
    ei = block_maxima_extremal_index(bm, 1000, 1.0)
    ok &= ei.agrees_with(0.5, TOL)
    parts.append(f"block-maxima index {ei:.4f} vs 0.5")
    return record(8, "max-stable M3 construction", ok, "; ".join(parts))


def criterion_9(tmp_dir):
    outs = []
    for i in range(2):
        path = f"{tmp_dir}/run{i}.csv"
        cmd = [sys.executable, "-m", "tailproc", "run", "--suite", "all", "--model", "ma:alpha=1.5,coeffs=1;0.5",
               "--n", "5000", "--seed", str(SEED), "--lanes", "2", "--series-length", "300000", "--out", path]
        subprocess.run(cmd, check=False, capture_output=True)
        with open(path, "rb") as fh:
            outs.append(fh.read())
    same = outs[0] == outs[1] and len(outs[0]) > 0
    return record(9, "determinism", same, f"two runs of all suites, {len(outs[0])} bytes, identical={same}")


@pytest.mark.parametrize("num", range(1, 9))
def test_criterion(num):
    assert globals()[f"criterion_{num}"]()


def test_criterion_9(tmp_path):
    assert criterion_9(tmp_path)


if __name__ == "__main__":
    import tempfile
    with np.errstate(all="ignore"):
        flags = [globals()[f"criterion_{i}"]() for i in range(1, 9)]
        with tempfile.TemporaryDirectory() as d:
            flags.append(criterion_9(d))
    sys.exit(0 if all(flags) else 1)
