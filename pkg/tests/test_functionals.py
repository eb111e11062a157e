import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tailproc.functionals import FunctionalSpec as F
from tailproc.models import pareto
from tailproc.seqspace import FiniteSeq, PathBatch, shift

from conftest import seqs

HOMOGENEOUS = [F.sup(), F.sup(1.5), F.sum_abs_pow(1.0, 2.0), F.sum_abs_pow(2.0), F.pos_part_sum_pow(1.3),
               F.running_max_sum_pow(1.0), F.signed_power_sum(0.7)]


def test_examples():
    x = FiniteSeq(-1, [1.0, -3.0, 2.0])
    assert F.sup()(x) == 3
    assert F.sum_abs_pow(1.0)(x) == 6
    assert F.pos_part_sum_pow(1.0)(x) == 0
    assert F.running_max_sum_pow(1.0)(x) == 1
    assert F.threshold(1.5)(x) == 1
    assert F.threshold(1.5, min_count=2)(x) == 1
    assert F.threshold(2.5, min_count=2)(x) == 0
    assert F.threshold(0.5, coords=[1])(x) == 1
    assert F.count_exceed(0.5)(x) == 3
    assert F.const(2.0)(x) == 2


@pytest.mark.parametrize("H", HOMOGENEOUS + [F.threshold(1.0), F.count_exceed(1.0)], ids=lambda h: h.label)
def test_declared_properties_validate(H):
    H.validate()


def test_validate_catches_false_claims():
    lying = F.custom(lambda v, o: np.abs(v[:, o]), degree=1.0, shift_invariant=True, name="x0")
    with pytest.raises(ValueError, match="shift invariance"):
        lying.validate()
    wrong_degree = F.custom(lambda v, o: np.abs(v).sum(axis=1), degree=2.0, name="l1")
    with pytest.raises(ValueError, match="degree"):
        wrong_degree.validate()


def test_nan_output_rejected():
    H = F.custom(lambda v, o: np.full(v.shape[0], np.nan), name="bad")
    with pytest.raises(ValueError, match="NaN"):
        H(FiniteSeq(0, [1.0]))


@given(seqs(max_len=6), st.integers(-5, 5), st.floats(0.1, 10))
def test_shifted_and_rescaled(x, k, c):
    H = F.threshold(1.0, coords=[0, 1])
    assert H.shifted(k)(x) == H(shift(x, k))
    assert H.rescaled(c)(x) == H(x * c)


def test_shift_direction():
    # shifted(k) evaluates H on B^k x, the sequence with (B^k x)_j = x_{j-k}
    H = F.threshold(0.5, coords=[0])
    assert H.shifted(1)(FiniteSeq(-1, [1.0])) == 1
    assert H.shifted(1)(FiniteSeq(1, [1.0])) == 0


def _radial_quadrature(H, theta: FiniteSeq, a: float, alpha: float) -> float:
    from scipy import integrate
    f = lambda r: H(theta * r) * alpha * r ** (-alpha - 1)
    pts = sorted({H.level / abs(v) for v in theta.values if v} | {a}) if H.level else None
    hi = 1e4
    out = 0.0
    grid = [a] + [p for p in (pts or []) if p > a] + [hi]
    for lo, up in zip(grid[:-1], grid[1:]):
        out += integrate.quad(f, lo, up, limit=200)[0]
    # beyond the last breakpoint H(r theta) is constant
    return out + H(theta * hi) * hi ** (-alpha)


@pytest.mark.parametrize("H", [F.threshold(1.0), F.threshold(2.0, min_count=2), F.count_exceed(0.7),
                               F.threshold(1.0, coords=[1])], ids=lambda h: h.label)
def test_radial_closed_forms_match_quadrature(H):
    theta = FiniteSeq(0, [1.0, 0.6, -0.3])
    for a in (0.2, 1.0, 2.5):
        got = H.radial(PathBatch.from_seqs([theta]), a, 1.5)[0]
        assert got == pytest.approx(_radial_quadrature(H, theta, a, 1.5), rel=1e-6, abs=1e-9)


def test_radial_homogeneous_closed_form_and_divergence():
    th = PathBatch.from_seqs([FiniteSeq(0, [1.0, 0.5])])
    H = F.sup()
    assert H.radial(th, 2.0, 1.5)[0] == pytest.approx(1.5 / 0.5 * 2.0 ** -0.5)
    assert math.isinf(F.sup(2.0).radial(th, 2.0, 1.5)[0])
    assert H.radial(th, np.inf, 1.5)[0] == 0


def test_radial_importance_sampling_is_unbiased(rng):
    # 1{|x|_1 > 2} vanishes when x* <= 1 on two-point rows; exact integral is (4/3)^-alpha
    H = F.custom(lambda v, o: (np.abs(v).sum(axis=1) > 2).astype(float), shift_invariant=True,
                 support_level=1.0, name="l1>2")
    th = PathBatch(np.tile([1.0, 0.5], (200_000, 1)), 0)
    est = H.radial(th, 0.5, 1.5, rng)
    assert est.std() > 0
    assert abs(est.mean() - (4 / 3) ** -1.5) < 4 * est.std() / math.sqrt(est.size)


def test_scale_and_lag_in_radial():
    th = PathBatch.from_seqs([FiniteSeq(0, [1.0, 0.5])])
    H = F.threshold(1.0, coords=[0])
    # H(c x) integrated from a equals c^alpha times H integrated from c a
    c, a, al = 2.0, 0.3, 1.2
    assert H.rescaled(c).radial(th, a, al)[0] == pytest.approx(c ** al * H.radial(th, c * a, al)[0])
    assert H.shifted(1).radial(th, 0.1, al)[0] == 0
    assert H.shifted(-1).radial(th, 0.1, al)[0] == pytest.approx(min(0.1 ** -al, 0.5 ** al))
