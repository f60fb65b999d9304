import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from plantcap.data import BasicCounts, ClassedCounts, IdCounts
from plantcap.exceptions import InfeasibleData
from plantcap.likelihood import (
    BasicParams,
    ClassParams,
    IdParams,
    conditional_capture_ni,
    latent_bounds,
    loglik_basic,
    loglik_class,
    loglik_id,
    theta_basic,
    theta_id,
)

prob = st.floats(1e-6, 1 - 1e-6)


def test_theta_basic_examples():
    assert theta_basic(BasicParams(1, 0.7, 0.2)) == pytest.approx((0.56, 0.20, 0.24), abs=1e-15)
    assert theta_basic(BasicParams(1, 0.5, 0.5)) == pytest.approx((0.25, 0.5, 0.25))


def test_theta_id_example():
    assert theta_id(IdParams(1, 0.7, 0.8, 0.2)) == pytest.approx((0.56, 0.112, 0.088, 0.24), abs=1e-15)


def test_theta_id_full_identification_limit():
    t = theta_id(IdParams(1, 0.7, 1.0, 0.2))
    assert t[1] == 0 and t[2] == pytest.approx(0.3 * 0.2)


@given(prob, prob, prob)
def test_cell_probabilities_sum_to_one(pc, pic, pmb):
    assert math.fsum(theta_basic(BasicParams(1, pc, pmb))) == pytest.approx(1, abs=1e-12)
    t = theta_id(IdParams(1, pc, pic, pmb))
    assert all(0 <= x <= 1 for x in t)
    assert math.fsum(t) == pytest.approx(1, abs=1e-12)


def test_conditional_capture_examples():
    assert conditional_capture_ni(0.7, 0.8) == pytest.approx(0.14 / 0.44)
    assert conditional_capture_ni(0.37, 0.0) == pytest.approx(0.37)
    assert conditional_capture_ni(0.5, 1.0) == 0.0


NEW_ORLEANS = IdCounts(41, 6, 5, 6, 109)


def test_latent_bounds_examples():
    b = latent_bounds(NEW_ORLEANS, 70)
    assert (b.lo, b.hi) == (0, 5)
    b = latent_bounds(NEW_ORLEANS, 58)
    assert (b.lo, b.hi) == (4, 5)
    with pytest.raises(InfeasibleData):
        latent_bounds(NEW_ORLEANS, 40)


def test_latent_bounds_exhaustive():
    # every z inside the bounds is feasible, every z outside violates support
    for m_i, m_yes, m_mb, extra, h_i, h in itertools.product(
        range(3), range(3), range(5), range(8), [None, 0, 2, 4], range(9)
    ):
        data = IdCounts(m_i, m_yes, m_mb, 0, m_i + m_yes + extra, h_i)
        r = data.residual
        feasible = {z for z in range(m_mb + 1) if (h_i or 0) <= r - z <= h and r - z >= 0}
        try:
            b = latent_bounds(data, h)
            got = set(b)
        except InfeasibleData:
            got = set()
        assert got == feasible


def test_loglik_basic_direct_formula():
    p = BasicParams(150, 0.7, 0.2)
    d = BasicCounts(8, 3, 4, 110)
    expected = stats.multinomial.logpmf([8, 3, 4], 15, [0.56, 0.2, 0.24]) + stats.binom.logpmf(102, 153, 0.7)
    assert loglik_basic(p, d) == pytest.approx(expected, rel=1e-12)


def test_loglik_basic_empty_population():
    p = BasicParams(0, 0.6, 0.3)
    d = BasicCounts(3, 0, 2, 3)
    assert loglik_basic(p, d) == pytest.approx(stats.multinomial.logpmf([3, 0, 2], 5, theta_basic(p)))


def test_loglik_basic_support_violation():
    assert loglik_basic(BasicParams(5, 0.5, 0.5), BasicCounts(1, 1, 1, 10)) == -math.inf


def _joint_id(p, d):
    """Brute force over every (m_mb_c, h_c) pair, independent of latent_bounds."""
    mult = stats.multinomial.logpmf([d.m_i, d.m_yes, d.m_mb, d.m_no], d.m_total, theta_id(p))
    q = conditional_capture_ni(p.p_c, p.p_i_c)
    total = 0.0
    for z in range(d.m_mb + 1):
        for hc in range(int(p.h) + 1):
            if d.m_i + d.m_yes + z + hc != d.y:
                continue
            t = stats.binom.pmf(z, d.m_mb, q) * stats.binom.pmf(hc, p.h, p.p_c)
            if d.h_i is not None:
                t *= stats.binom.pmf(d.h_i, hc, p.p_i_c)
            total += t
    return mult + math.log(total) if total > 0 else -math.inf


@pytest.mark.parametrize("d", [
    IdCounts(3, 2, 4, 1, 20, None),
    IdCounts(3, 2, 4, 1, 20, 6),
    IdCounts(0, 1, 3, 2, 9, 2),
    IdCounts(5, 0, 2, 3, 12, None),
])
def test_loglik_id_matches_enumeration(d):
    p = IdParams(15, 0.7, 0.8, 0.2)
    assert loglik_id(p, d) == pytest.approx(_joint_id(p, d), rel=1e-10)


def test_loglik_id_singleton_support():
    # m_mb = 0: a single latent configuration
    d = IdCounts(2, 3, 0, 1, 15)
    p = IdParams(20, 0.6, 0.5, 0.3)
    single = (stats.multinomial.logpmf([2, 3, 0, 1], 6, theta_id(p))
              + stats.binom.logpmf(10, 20, 0.6))
    assert loglik_id(p, d) == pytest.approx(single)


def test_loglik_id_reduces_to_basic():
    d = BasicCounts(6, 5, 6, 50)
    p = BasicParams(83.4, 0.55, 0.3)
    ll_id = loglik_id(IdParams(p.h, p.p_c, 1e-8, p.p_mb), d.to_id())
    assert ll_id == pytest.approx(loglik_basic(p, d), abs=1e-6)


def test_loglik_class_single_and_additive():
    a, b = IdCounts(3, 2, 1, 1, 20, 4), IdCounts(1, 1, 2, 4, 9, None)
    shared = dict(p_i_c=0.7, p_mb_ni=0.25)
    one = ClassParams([30], [0.6], **shared)
    assert loglik_class(one, ClassedCounts((("x", a),))) == loglik_id(one.for_class(0), a)
    two = ClassParams([30, 18], [0.6, 0.35], **shared)
    data = ClassedCounts((("x", a), ("y", b)))
    assert loglik_class(two, data) == pytest.approx(
        loglik_id(two.for_class(0), a) + loglik_id(two.for_class(1), b))
    with pytest.raises(ValueError):
        loglik_class(one, data)


def test_loglik_class_double_enumeration():
    a, b = IdCounts(2, 1, 3, 1, 14, 3), IdCounts(1, 1, 2, 2, 10, None)
    p = ClassParams([12, 11], [0.7, 0.45], 0.6, 0.3)
    brute = _joint_id(p.for_class(0), a) + _joint_id(p.for_class(1), b)
    assert loglik_class(p, ClassedCounts((("a", a), ("b", b)))) == pytest.approx(brute, rel=1e-10)


def _total_probability_basic(p, M):
    total = 0.0
    for m_yes in range(M + 1):
        for m_mb in range(M + 1 - m_yes):
            m_no = M - m_yes - m_mb
            for y in range(m_yes, m_yes + m_mb + int(p.h) + 1):
                total += math.exp(loglik_basic(p, BasicCounts(m_yes, m_mb, m_no, y)))
    return total


def _total_probability_id(p, M, with_hi):
    total = 0.0
    for m_i, m_yes, m_mb in itertools.product(range(M + 1), repeat=3):
        m_no = M - m_i - m_yes - m_mb
        if m_no < 0:
            continue
        base = m_i + m_yes
        for y in range(base, base + m_mb + int(p.h) + 1):
            if with_hi:
                for h_i in range(int(p.h) + 1):
                    total += math.exp(loglik_id(p, IdCounts(m_i, m_yes, m_mb, m_no, y, h_i)))
            else:
                total += math.exp(loglik_id(p, IdCounts(m_i, m_yes, m_mb, m_no, y)))
    return total


@pytest.mark.parametrize("h,M", [(0, 3), (4, 3), (9, 2)])
def test_total_probability_basic(h, M):
    assert _total_probability_basic(BasicParams(h, 0.63, 0.27), M) == pytest.approx(1, abs=1e-8)


@pytest.mark.parametrize("with_hi", [False, True])
def test_total_probability_id(with_hi):
    p = IdParams(6, 0.63, 0.7, 0.27)
    assert _total_probability_id(p, 3, with_hi) == pytest.approx(1, abs=1e-8)


@given(st.floats(10, 400), prob, prob, st.integers(0, 30), st.integers(0, 10), st.integers(0, 30))
def test_continuous_h_matches_integer_binomial(h, pc, pmb, m_yes, m_mb, extra):
    h = float(round(h))
    d = BasicCounts(m_yes, m_mb, 5, m_yes + min(extra, int(h)))
    ll = loglik_basic(BasicParams(h, pc, pmb), d)
    ref = (stats.multinomial.logpmf([m_yes, m_mb, 5], m_yes + m_mb + 5, theta_basic(BasicParams(h, pc, pmb)))
           + stats.binom.logpmf(d.y - m_yes, int(h) + m_mb, pc))
    assert ll == pytest.approx(ref, rel=1e-9, abs=1e-9)

