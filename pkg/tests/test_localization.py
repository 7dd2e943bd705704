import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfchan import localization as loc
from tfchan.channel import SupportRegion
from tfchan.localization import l_disc, l_square

DISC_SMALL = SupportRegion.from_measure("disc", 0.01)


def test_build_q_gaussian_entry():
    for m in (0.01, 0.5, 1.0):
        Q = loc.build_q(SupportRegion.from_measure("disc", m), 8, 1e-10)
        assert Q.entries[0, 0] == pytest.approx(l_disc(m), abs=1e-9)
    Q = loc.build_q(SupportRegion.from_measure("centered_square", 0.5), 8, 1e-10)
    assert Q.entries[0, 0] == pytest.approx(l_square(0.5), abs=1e-9)


def test_build_q_small_support_is_identity_like():
    Q = loc.build_q(SupportRegion.from_measure("disc", 1e-4), 8, 1e-10)
    assert Q.entries[0, 0].real >= 0.999
    assert np.max(np.abs(Q.entries - np.eye(8))) < 1e-3


@pytest.mark.parametrize("U", [SupportRegion.from_measure("disc", 0.3), SupportRegion.centered_square(0.8),
                               SupportRegion.grid_union(2, 0.3, origin=(-0.3, -0.3))])
def test_build_q_hermitian_for_symmetric_support(U):
    tol = 1e-9
    Q = loc.build_q(U, 12, tol)
    assert Q.hermitian_defect <= 10 * tol


@pytest.mark.parametrize("shape", ["disc", "centered_square"])
def test_build_q_diagonal_matches_laguerre(shape):
    U = SupportRegion.from_measure(shape, 0.7)
    tol = 1e-9
    Q = loc.build_q(U, 9, tol)
    for m in range(9):
        assert abs(Q.entries[m, m] - loc.laguerre_mean(U, m)) <= 10 * tol


def test_build_q_asymmetric_support_not_hermitian():
    Q = loc.build_q(SupportRegion.grid_union(2, 0.3), 6, 1e-9)
    assert Q.hermitian_defect > 1e-3


def test_build_q_order_checks():
    with pytest.raises(ValueError):
        loc.build_q(DISC_SMALL, 0)
    with pytest.raises(ValueError):
        loc.build_q(DISC_SMALL, 129)


def test_lambda_max_small_disc():
    Q = loc.build_q(DISC_SMALL, 16)
    lam = loc.lambda_max(Q, "Q")
    assert l_disc(0.01) - 1e-9 <= lam <= 1 + 1e-12
    assert l_disc(0.01) == pytest.approx(0.997504, abs=1e-6)
    assert loc.lambda_max(Q, "QstarQ") == pytest.approx(lam**2, rel=1e-9)
    with pytest.raises(ValueError):
        loc.lambda_max(Q, "other")


@pytest.mark.parametrize("U", [SupportRegion.from_measure("disc", 0.5), SupportRegion.from_measure("centered_square", 1.0),
                               SupportRegion.grid_union(2, 0.4, origin=(-0.4, -0.4))])
def test_localization_chain(U):
    res = loc.lambda_max_converged(U, "QstarQ")
    assert res.converged
    lam = res.value
    lower = loc.laguerre_lower_bound(U, 0)
    rtol = 1e-9
    assert lower <= lam * (1 + rtol)
    assert lam <= loc.n_r(U.measure, 2.0) * (1 + rtol)
    assert math.sqrt(lam) <= loc.n_r(U.measure, 1.0) * (1 + rtol)


@pytest.mark.parametrize("m", [0.05, 0.5, 1.0])
def test_gaussian_value_dominates_eigenvalue(m):
    # <A_1, C> at the Gaussian is l(2|U|); the eigenvalue of Q*Q sits below it
    U = SupportRegion.from_measure("disc", m)
    lam = loc.lambda_max_converged(U, "QstarQ").value
    assert l_disc(2 * m) >= lam - 1e-9


def test_nonconvergence_marker():
    res = loc.lambda_max_converged(SupportRegion.from_measure("disc", 3.0), "QstarQ", rtol=1e-15, orders=(2, 3, 4))
    assert not res.converged and res.order == 4 and len(res.history) == 3


def test_laguerre_examples():
    assert loc.laguerre_lower_bound(SupportRegion.from_measure("disc", 2.0), 0) == pytest.approx((1 - math.exp(-1)) ** 2, abs=1e-12)
    assert (1 - math.exp(-1)) ** 2 == pytest.approx(0.399576, abs=1e-6)
    l = 2 * math.erf(math.sqrt(math.pi * 0.01 / 8)) ** 2 / 0.01
    assert loc.laguerre_lower_bound(SupportRegion.from_measure("centered_square", 0.01), 0) == pytest.approx(l * l, abs=1e-14)
    tiny = SupportRegion.from_measure("disc", 1e-8)
    for m in range(4):
        assert loc.laguerre_lower_bound(tiny, m) == pytest.approx(1.0, abs=1e-6)
    assert loc.laguerre_lower_bound(SupportRegion.grid_union(2, 0.2), 0) == math.inf


@pytest.mark.parametrize("shape", ["disc", "centered_square"])
def test_laguerre_closed_forms_vs_quadrature(shape):
    U = SupportRegion.from_measure(shape, 0.9)
    closed = loc.laguerre_mean(U, 0)
    generic = SupportRegion.rect(*U.bounding_box()) if shape == "centered_square" else None
    if generic is not None:
        assert loc.laguerre_mean(generic, 0) == pytest.approx(closed, abs=1e-11)
    else:
        # the m >= 1 branch of the disc integrates l_m(t) over t in [0, |U|]; check it reduces correctly at m = 0
        from tfchan.specfun import integrate_1d, laguerre_fn
        val = integrate_1d(lambda t: laguerre_fn(0, t), 0.0, U.measure, 1e-13).value / U.measure
        assert val == pytest.approx(closed, abs=1e-12)


def test_n_r_examples():
    assert loc.n_r(0.01, 2) == pytest.approx(math.exp(-0.01 / math.e), abs=1e-15)
    assert loc.n_r(0.01, 2) == pytest.approx(0.996327, abs=1e-6)
    assert loc.n_r(4.0, 1) == pytest.approx(0.5)
    assert loc.n_r(math.e, 2) == pytest.approx(math.exp(-1))
    assert loc.n_r(math.e * (1 + 1e-12), 2) == pytest.approx(math.exp(-1), rel=1e-10)
    with pytest.raises(ValueError):
        loc.n_r(0.0, 1)


@settings(max_examples=40, deadline=None)
@given(m=st.floats(1e-3, 20.0), r=st.floats(0.2, 6.0))
def test_n_r_numeric_matches_closed_form(m, r):
    assert abs(loc.n_r_numeric(loc.flat_norms(m), r) - loc.n_r(m, r)) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(m=st.floats(1e-3, 20.0), r=st.floats(0.2, 6.0), f=st.floats(1.01, 3.0))
def test_n_r_monotone(m, r, f):
    v = loc.n_r(m, r)
    assert loc.n_r(m * f, r) <= v * (1 + 1e-15)
    assert loc.n_r(m, r * f) <= v * (1 + 1e-15)


def test_r_inf_necessary_size():
    assert loc.r_inf_necessary_size(1.0, 2) == pytest.approx(2 * math.e * math.log(2))
    assert loc.r_inf_necessary_size(1.0, 2) == pytest.approx(3.768339, abs=1e-6)
    assert loc.r_inf_necessary_size(1.0, 1) == math.inf
    assert loc.r_inf_necessary_size(0.0, 1) == 0.0
    vals = [loc.r_inf_necessary_size(2 - e, 2) for e in (1e-1, 1e-3, 1e-6, 1e-9)]
    assert np.all(np.diff(vals) > 0) and vals[-1] > 100
    with pytest.raises(ValueError):
        loc.r_inf_necessary_size(-0.1, 1)


def test_loc_report():
    rep = loc.loc_report(SupportRegion.from_measure("disc", 0.2), r=3.0)
    assert rep["converged"] and len(rep["laguerre_lower"]) == 4
    assert rep["lambda_max_QstarQ"] == pytest.approx(rep["lambda_max_Q"] ** 2, rel=1e-8)
    assert rep["Nr"] == loc.n_r(0.2, 3.0)
    assert rep["laguerre_lower"][0] <= rep["lambda_max_QstarQ"] * (1 + 1e-9) <= rep["N2"] * (1 + 1e-9)
