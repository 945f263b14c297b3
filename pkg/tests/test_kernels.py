import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from gphit import kernels as K
from gphit.errors import DiagonalUndefined, InvalidArgument

ALL = [K.fbm(0.3), K.fbm(0.5), K.fbm(0.75), K.brownian(), K.linear(), K.independent_increments(2.0, 1.5)]
H1 = [K.fbm(0.6), K.fbm(0.75), K.fbm(0.9), K.linear()]
PROBES = np.linspace(0.1, 5.0, 50)

times = st.floats(0.0, 20.0, allow_nan=False)


def test_cov_examples():
    assert K.cov(K.fbm(0.5), 1.0, 2.0) == pytest.approx(1.0, abs=1e-15)
    assert K.cov(K.fbm(0.75), 0.5, 1.0) == pytest.approx(0.5, abs=1e-15)
    for k in ALL:
        assert K.cov(k, 0.0, 3.0) == 0.0


def test_dcov_examples():
    assert K.dcov_ds(K.fbm(0.75), 1.0, 2.0) == pytest.approx(1.5, rel=1e-15)
    assert K.dcov_ds(K.brownian(), 1.0, 2.0) == 1.0
    assert K.dcov_ds(K.brownian(), 2.0, 1.0) == 0.0
    assert K.dcov_ds(K.linear(), 3.0, 4.0) == 4.0


def test_variance_examples():
    assert K.variance(K.fbm(0.75), 2.0) == pytest.approx(2.0**1.5, rel=1e-15)
    assert K.variance(K.brownian(), 7.0) == 7.0
    for k in ALL:
        assert K.variance(k, 0.0) == 0.0


def test_negative_time_rejected():
    with pytest.raises(InvalidArgument):
        K.cov(K.brownian(), -1.0, 1.0)
    with pytest.raises(InvalidArgument):
        K.variance(K.fbm(0.7), -0.5)


@pytest.mark.parametrize("k", [K.brownian(), K.fbm(0.3), K.fbm(0.5), K.independent_increments()])
def test_diagonal_undefined_without_h1(k):
    with pytest.raises(DiagonalUndefined):
        K.dcov_ds(k, 1.0, 1.0)


def test_kernel_validation():
    with pytest.raises(InvalidArgument):
        K.fbm(1.5)
    with pytest.raises(InvalidArgument):
        K.fbm(0.0)
    with pytest.raises(InvalidArgument):
        K.Kernel("bm", hurst=0.5)
    with pytest.raises(InvalidArgument):
        K.independent_increments(c=-1.0)


def test_flags():
    assert K.fbm(0.75).h1_satisfied and K.linear().h1_satisfied
    assert not K.brownian().h1_satisfied and not K.fbm(0.5).h1_satisfied
    assert K.fbm(0.3).dr_nonneg is False and K.fbm(0.5).dr_nonneg
    assert K.linear().h2_status == "documented-false"


@pytest.mark.parametrize("k", ALL, ids=lambda k: k.label())
def test_json_roundtrip(k):
    assert K.from_json(k.to_json()) == k


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(InvalidArgument):
        K.from_dict({"family": "bm", "colour": "red"})


@pytest.mark.parametrize("k", ALL, ids=lambda k: k.label())
@given(s=times, t=times)
@settings(max_examples=50, deadline=None)
def test_symmetry(k, s, t):
    assert K.cov(k, s, t) == K.cov(k, t, s)


@pytest.mark.parametrize("k", ALL, ids=lambda k: k.label())
def test_finite_difference(k):
    h = 1e-4
    S, T = np.meshgrid(PROBES, PROBES, indexing="ij")
    # keep the central stencil off the kink at s == t
    mask = np.abs(S - T) > 2 * h
    s, t = S[mask], T[mask]
    fd = (K.cov(k, s + h, t) - K.cov(k, s - h, t)) / (2 * h)
    err = np.abs(K.dcov_ds(k, s, t) - fd)
    # third derivative of |t - s|^{2H} near the closest probe pair sets C
    d = np.maximum(np.abs(t - s) - h, 1e-3)
    C = 10.0 * (1.0 + d ** (2 * (k.hurst or 1.0) - 3.0)) + 1e-6 / h**2
    assert np.all(err <= C * h * h)


@pytest.mark.parametrize("h", [0.6, 0.75, 0.9])
def test_diagonal_limit(h):
    k = K.fbm(h)
    for s in [0.3, 1.0, 4.0]:
        diag = K.dcov_ds(k, s, s)
        assert diag == pytest.approx(h * s ** (2 * h - 1), rel=1e-14)
        # the one-sided gap is exactly H * delta^(2H-1), which vanishes slowly near H = 1/2
        for delta in (1e-6, 1e-9):
            gap = h * delta ** (2 * h - 1)
            assert K.dcov_ds(k, s, s + delta) - diag == pytest.approx(gap, rel=1e-4)
            assert diag - K.dcov_ds(k, s, s - delta) == pytest.approx(gap, rel=1e-4)
        delta = (1e-4 * s ** (2 * h - 1)) ** (1 / (2 * h - 1))
        for t in (s - delta, s + delta):
            assert K.dcov_ds(k, s, t) == pytest.approx(diag, rel=1e-3)
    if h >= 0.9:
        for t in (1.0 - 1e-6, 1.0 + 1e-6):
            assert K.dcov_ds(k, 1.0, t) == pytest.approx(K.dcov_ds(k, 1.0, 1.0), rel=1e-3)


@pytest.mark.parametrize("k", H1, ids=lambda k: k.label())
def test_variance_telescoping(k):
    pairs = [(0.2, 1.0), (0.5, 3.0), (1.0, 1.5), (2.0, 5.0)]
    for s, t in pairs:
        lhs = K.variance(k, t) + K.variance(k, s) - 2 * K.cov(k, s, t)
        f = lambda u: K.dcov_ds(k, u, t) - K.dcov_ds(k, u, s)
        rhs, _ = integrate.quad(f, s, t, points=[s, t], epsabs=0, epsrel=1e-12, limit=200)
        assert rhs == pytest.approx(lhs, rel=1e-6)


def test_check_hypotheses_examples():
    rep = K.check_hypotheses(K.fbm(0.75), PROBES)
    assert rep.all_pass and rep.dr_nonneg_pass
    rep = K.check_hypotheses(K.fbm(0.3), PROBES)
    assert not rep.h1_pass and not rep.all_pass
    rep = K.check_hypotheses(K.linear(), PROBES)
    assert rep.all_pass and rep.min_dr_offdiag >= 0
    assert rep.to_dict()["h2"]["documented"] == "documented-false"


def test_check_hypotheses_brownian_flags_h1():
    rep = K.check_hypotheses(K.brownian(), PROBES)
    assert rep.h3_pass and not rep.h1_pass


def test_check_hypotheses_rejects_bad_grid():
    with pytest.raises(InvalidArgument):
        K.check_hypotheses(K.brownian(), [1.0, 0.5])


@given(h=st.floats(0.05, 1.0), s=st.floats(0.01, 10), t=st.floats(0.01, 10))
@settings(max_examples=100, deadline=None)
def test_fbm_cauchy_schwarz(h, s, t):
    k = K.fbm(h)
    c = K.cov(k, s, t)
    assert c * c <= K.variance(k, s) * K.variance(k, t) * (1 + 1e-12) + 1e-300
    assert not math.isnan(c)
