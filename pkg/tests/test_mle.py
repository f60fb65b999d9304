import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.special import digamma

from plantcap.data import BasicCounts, ClassedCounts, IdCounts, snight_dataset
from plantcap.exceptions import NoCertainCaptures, NoCertainPlants
from plantcap.likelihood import BasicParams
from plantcap.mle import build_problem, mle_basic_closed, mle_numeric
from plantcap.simulation import generate


def test_closed_form_example():
    fit = mle_basic_closed(BasicCounts(6, 5, 6, 50))
    assert fit.params["p_c"] == 0.5
    assert fit.params["p_mb"] == pytest.approx(5 / 17)
    assert fit.h_rounded == 83
    assert fit.params["H"] == pytest.approx(83.0)


def test_closed_form_perfect_capture():
    fit = mle_basic_closed(BasicCounts(5, 0, 0, 5))
    assert fit.params["p_c"] == 1.0 and fit.h_rounded == 0
    assert fit.boundary_flags["p_c"] and fit.sds["p_c"] == 0


def test_closed_form_errors():
    with pytest.raises(NoCertainCaptures):
        mle_basic_closed(BasicCounts(0, 5, 6, 11))
    with pytest.raises(NoCertainPlants):
        mle_basic_closed(BasicCounts(0, 5, 0, 3))


def test_numeric_basic_no_certain_captures():
    with pytest.raises(NoCertainCaptures):
        mle_numeric("basic", BasicCounts(0, 5, 6, 11))


@given(st.integers(1, 40), st.integers(0, 20), st.integers(0, 40), st.integers(0, 500), st.integers(1, 50))
def test_closed_form_monotone_in_census(m_yes, m_mb, m_no, extra, step):
    d = BasicCounts(m_yes, m_mb, m_no, m_yes + extra)
    e = BasicCounts(m_yes, m_mb, m_no, m_yes + extra + step)
    assert mle_basic_closed(e).params["H"] > mle_basic_closed(d).params["H"]


def _stationary_point(d: BasicCounts):
    """Joint maximizer of the gamma-function likelihood, by 1-D root finding.

    For fixed p the H-score is psi(n+1) - psi(n-k+1) + log(1-p) with n = H + m_mb,
    k = y - m_yes; the p-score gives p = y / (H + M). Substituting the second
    into the first leaves one equation in H.
    """
    k = d.y - d.m_yes
    M = d.m_total

    def score(h):
        n = h + d.m_mb
        p = d.y / (h + M)
        return digamma(n + 1) - digamma(n - k + 1) + math.log1p(-p)

    lo = max(k - d.m_mb, 0) + 1e-9
    h = brentq(score, lo, 1e7, xtol=1e-12)
    return h, d.y / (h + M), d.m_mb / M


def test_numeric_matches_stationary_point_oracle():
    rng = np.random.default_rng(11)
    for _ in range(15):
        d = generate("basic", BasicParams(300, 0.6, 0.25), 40, rng)
        if d.m_yes == 0:
            continue
        fit = mle_numeric("basic", d)
        h, pc, pmb = _stationary_point(d)
        assert fit.params["H"] == pytest.approx(h, rel=1e-6)
        assert fit.params["p_c"] == pytest.approx(pc, rel=1e-6)
        assert fit.params["p_mb"] == pytest.approx(pmb, rel=1e-6)


def test_numeric_close_to_closed_form_up_to_half_count_offset():
    # the gamma-function extension shifts p_c to about m_yes / (m_yes + m_no - 1/2)
    rng = np.random.default_rng(3)
    for _ in range(10):
        d = generate("basic", BasicParams(1500, 0.7, 0.2), 100, rng)
        a, b = mle_numeric("basic", d), mle_basic_closed(d)
        n_certain = d.m_yes + d.m_no
        assert a.params["p_c"] == pytest.approx(d.m_yes / (n_certain - 0.5), rel=2e-3)
        assert abs(a.params["p_c"] / b.params["p_c"] - 1) < 1.5 / n_certain
        assert a.params["p_mb"] == pytest.approx(b.params["p_mb"], rel=1e-5)


def test_new_orleans():
    fit = mle_numeric("id", snight_dataset()["New Orleans"])
    assert fit.h_rounded == 68
    assert fit.params["p_c"] == pytest.approx(0.86, abs=0.01)
    assert fit.params["p_mb_ni"] == pytest.approx(0.29, abs=0.01)
    assert fit.params["p_i_c"] == pytest.approx(0.83, abs=0.01)
    assert fit.sds["H"] == pytest.approx(6, abs=0.5)
    lo, hi = fit.cis["H"]
    assert lo < fit.params["H"] < hi


def test_chicago_boundary():
    fit = mle_numeric("id", snight_dataset()["Chicago"])
    assert fit.boundary_flags["p_i_c"]
    assert fit.params["p_i_c"] == 1.0 and fit.sds["p_i_c"] == 0.0
    assert fit.cis["p_i_c"] == (1.0, 1.0)
    assert fit.params["p_c"] == pytest.approx(0.16, abs=0.01)


@pytest.mark.parametrize("city", list(snight_dataset()))
def test_mode_dominates_perturbations(city):
    d = snight_dataset()[city]
    fit = mle_numeric("id", d)
    problem = build_problem("id", d)
    best = problem.loglik(fit.gamma_hat)
    rng = np.random.default_rng(0)
    free = ~np.array([fit.boundary_flags[n] for n in problem.layout.names])
    for _ in range(50):
        step = rng.normal(size=free.size)
        step *= 0.1 / np.linalg.norm(step)
        g = fit.gamma_hat + np.where(free, step, 0.0)
        assert problem.loglik(g) <= best + 1e-9


def test_intervals_contain_estimates():
    for d in snight_dataset().values():
        fit = mle_numeric("id", d)
        for name, (lo, hi) in fit.cis.items():
            assert lo <= fit.params[name] <= hi
        assert fit.h_rounded == math.floor(fit.params["H"])


def test_class_total_and_identity_with_id():
    a = IdCounts(12, 4, 2, 2, 180, 130)
    fit1 = mle_numeric("class", ClassedCounts((("only", a),)))
    fit2 = mle_numeric("id", a)
    assert fit1.params["H"] == pytest.approx(fit2.params["H"], rel=1e-5)
    b = IdCounts(4, 1, 2, 5, 50, 35)
    fit = mle_numeric("class", ClassedCounts((("easy", a), ("hard", b))))
    assert fit.params["H"] == pytest.approx(fit.params["H[easy]"] + fit.params["H[hard]"])
    lo, hi = fit.cis["H"]
    assert lo == pytest.approx(fit.cis["H[easy]"][0] + fit.cis["H[hard]"][0])
    assert hi == pytest.approx(fit.cis["H[easy]"][1] + fit.cis["H[hard]"][1])
    assert fit.sds["H"] >= max(fit.sds["H[easy]"], fit.sds["H[hard]"]) * 0.5


def test_class_support_edge_is_reported_as_boundary():
    # no "no" plants in the easy class: p_c -> 1 and the size sits on its floor
    data = ClassedCounts((("easy", IdCounts(15, 1, 2, 0, 183, 125)),
                          ("hard", IdCounts(3, 1, 3, 5, 43, 35))))
    fit = mle_numeric("class", data)
    assert fit.boundary_flags["p_c[easy]"] and fit.params["p_c[easy]"] == 1.0
    assert fit.boundary_flags["H[easy]"] and fit.params["H[easy]"] == 165.0
    assert fit.sds["H[easy]"] == 0.0
    assert fit.sds["H[hard]"] > 0


def test_class_without_certain_captures():
    data = ClassedCounts((("easy", IdCounts(15, 2, 1, 0, 179, 131)),
                          ("hard", IdCounts(0, 0, 6, 6, 43, 30))))
    with pytest.raises(NoCertainCaptures, match="hard"):
        mle_numeric("class", data)
