"""Loss family values, derivatives, and client summaries.

The numeric constants in this file were produced by hand computation or by
an independent oracle script (finite differences, direct arithmetic) and
are frozen here; the tests check the library against them, never the other
way around.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedwd.core import (ClientData, Hyper, LabeledPoint, ModelState,
                        Regularizer, client_curvature, client_gradient,
                        client_summary, loss, predict, predict_batch,
                        smoothing_coeffs, vq, vq_prime, vq_prime_smoothed,
                        vq_second_smoothed)

# -- frozen oracle values ---------------------------------------------------

# d = (q+1)/(u0+eps) * (u0/(u0+eps))^(q+1) at q=1, eps=0.1: 250/108
_D_Q1_E01 = 2.314814814814815
_COEFFS_Q1_E01 = (5.787037037037037, 1.1574074074074074, -0.9421296296296297)


def test_vq_values():
    assert vq(0.5, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert vq(0.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert vq(1.0, 1.0) == pytest.approx(0.25, abs=1e-15)
    assert vq(2.0, 2.0) == pytest.approx(1.0 / 27.0, abs=1e-15)


def test_vq_array_matches_scalar():
    u = np.array([-1.0, 0.0, 0.3, 0.5, 0.7, 2.0])
    got = vq(u, 1.0)
    assert got.shape == u.shape
    for i, ui in enumerate(u):
        assert got[i] == pytest.approx(vq(float(ui), 1.0), abs=1e-15)


def test_vq_prime_values():
    assert vq_prime(0.3, 1.0) == pytest.approx(-1.0, abs=1e-15)
    assert vq_prime(1.0, 1.0) == pytest.approx(-0.25, abs=1e-15)
    # continuity at the kink: both branches give -1
    assert vq_prime(0.5, 1.0) == pytest.approx(-1.0, abs=1e-15)
    assert vq_prime(0.5 + 1e-12, 1.0) == pytest.approx(-1.0, abs=1e-9)


def test_vq_rejects_bad_q():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            vq(0.5, bad)


def test_smoothing_coeffs_frozen_values():
    a, b, c = smoothing_coeffs(1.0, 0.1)
    assert a == pytest.approx(_COEFFS_Q1_E01[0], abs=1e-12)
    assert b == pytest.approx(_COEFFS_Q1_E01[1], abs=1e-12)
    assert c == pytest.approx(_COEFFS_Q1_E01[2], abs=1e-12)


def test_smoothing_coeffs_eps_guard():
    # eps must stay below u0 = q/(q+1)
    with pytest.raises(ValueError):
        smoothing_coeffs(1.0, 0.5)
    with pytest.raises(ValueError):
        smoothing_coeffs(1.0, 0.0)
    smoothing_coeffs(1.0, 0.499)


def test_vq_prime_smoothed_values():
    assert vq_prime_smoothed(0.4, 1.0, 0.1) == pytest.approx(-1.0, abs=1e-15)
    assert vq_prime_smoothed(0.5, 1.0, 0.1) == pytest.approx(
        _COEFFS_Q1_E01[2], abs=1e-12)
    assert vq_prime_smoothed(2.0, 1.0, 0.1) == pytest.approx(
        -0.0625, abs=1e-15)


def test_vq_second_smoothed_values():
    assert vq_second_smoothed(0.2, 1.0, 0.1) == 0.0
    # right knot: quadratic slope 2*a*eps + b meets the exact branch
    assert vq_second_smoothed(0.6, 1.0, 0.1) == pytest.approx(
        _D_Q1_E01, abs=1e-12)
    # left knot from inside the band: -2*a*eps + b cancels to zero
    assert vq_second_smoothed(0.4 + 1e-15, 1.0, 0.1) == pytest.approx(
        0.0, abs=1e-12)


def _random_q_eps(rng):
    q = math.exp(rng.uniform(math.log(0.01), math.log(100.0)))
    u0 = q / (q + 1.0)
    eps = u0 * rng.uniform(0.01, 0.99)
    return q, u0, eps


def test_smoothed_derivative_continuity_random():
    """The smoothed slope is continuous at the left knot and the smoothed
    curvature at both knots, over 1000 random (q, eps) pairs.  The slope
    bridge only matches the right branch to O(eps^2), so the right knot is
    checked for the curvature alone."""
    rng = np.random.default_rng(101)
    h = 1e-12
    for _ in range(1000):
        q, u0, eps = _random_q_eps(rng)
        a, _, _ = smoothing_coeffs(q, eps)
        # straddling the knot by h picks up the bridge slope 2a
        tol2 = 1e-10 + 4.0 * a * h
        left = u0 - eps
        lo = vq_prime_smoothed(left - h, q, eps)
        hi = vq_prime_smoothed(left + h, q, eps)
        assert abs(hi - lo) < 1e-10 * (1.0 + abs(lo))
        for knot in (left, u0 + eps):
            lo2 = vq_second_smoothed(knot - h, q, eps)
            hi2 = vq_second_smoothed(knot + h, q, eps)
            assert abs(hi2 - lo2) < tol2 * (1.0 + abs(lo2))


def test_derivative_bounds_random():
    rng = np.random.default_rng(102)
    for _ in range(1000):
        q, u0, eps = _random_q_eps(rng)
        cap = (q + 1.0) ** 2 / q
        u = rng.uniform(-2.0, 10.0, size=32)
        assert np.all(np.abs(vq_prime(u, q)) <= 1.0 + 1e-12)
        assert np.all(np.abs(vq_prime_smoothed(u, q, eps)) <= 1.0 + 1e-12)
        second = vq_second_smoothed(u, q, eps)
        assert np.all(second >= -1e-12)
        assert np.all(second <= cap * (1.0 + 1e-12))


def test_vq_prime_matches_finite_difference():
    """Central difference of vq, away from the kink at u0."""
    rng = np.random.default_rng(103)
    h = 1e-6
    checked = 0
    while checked < 1000:
        q = math.exp(rng.uniform(math.log(0.05), math.log(20.0)))
        u0 = q / (q + 1.0)
        u = rng.uniform(-1.0, 5.0)
        if abs(u - u0) < 1e-3:
            continue
        fd = (vq(u + h, q) - vq(u - h, q)) / (2.0 * h)
        d = vq_prime(u, q)
        assert abs(fd - d) < 1e-5 * max(1.0, abs(d))
        checked += 1


def test_vq_convexity_chord():
    rng = np.random.default_rng(104)
    for _ in range(1000):
        q = math.exp(rng.uniform(math.log(0.05), math.log(20.0)))
        pts = np.sort(rng.uniform(-2.0, 6.0, size=3))
        u1, u2, u3 = pts
        if u3 - u1 < 1e-9:
            continue
        t = (u2 - u1) / (u3 - u1)
        chord = (1.0 - t) * vq(u1, q) + t * vq(u3, q)
        assert vq(u2, q) <= chord + 1e-12


# -- losses, gradients, curvatures -----------------------------------------


def test_loss_hand_values():
    hyper = Hyper(lam=0.1, q=1.0)
    theta0 = np.array([0.0, 0.0])
    theta1 = np.array([0.0, 1.0])
    pt = [LabeledPoint([1.0], 1)]
    assert loss(pt, theta0, hyper) == pytest.approx(1.0, abs=1e-15)
    assert loss(pt, theta1, hyper) == pytest.approx(0.30, abs=1e-15)
    assert loss([], theta1, hyper) == 0.0


def test_client_gradient_hand_value():
    hyper = Hyper(lam=0.1, q=1.0)
    pts = [LabeledPoint([1.0], 1), LabeledPoint([-1.0], -1)]
    g = client_gradient(pts, np.zeros(2), hyper)
    np.testing.assert_allclose(g, [0.0, -2.0], atol=1e-15)
    g_empty = client_gradient([], np.zeros(2), hyper)
    np.testing.assert_allclose(g_empty, [0.0, 0.0], atol=0)


def test_client_gradient_matches_loss_fd():
    """Gradient against central differences of the loss, off the kink."""
    rng = np.random.default_rng(105)
    hyper = Hyper(lam=0.3, q=1.5, eps_smooth=0.05)
    u0 = hyper.q / (hyper.q + 1.0)
    h = 1e-6
    checked = 0
    while checked < 60:
        n, p = rng.integers(1, 8), rng.integers(1, 4)
        data = ClientData(rng.standard_normal((n, p)),
                          np.where(rng.random(n) < 0.5, 1.0, -1.0))
        th = rng.standard_normal(p + 1)
        margins = data.y * (th[0] + data.x @ th[1:])
        if np.min(np.abs(margins - u0)) < 1e-3:
            continue
        g = client_gradient(data, th, hyper)
        for j in range(p + 1):
            e = np.zeros(p + 1)
            e[j] = h
            fd = (loss(data, th + e, hyper) - loss(data, th - e, hyper)) \
                / (2.0 * h)
            assert abs(fd - g[j]) < 1e-5 * max(1.0, abs(g[j]))
        checked += 1


def test_client_curvature_hand_value():
    hyper = Hyper(lam=0.1, q=1.0, eps_smooth=0.01)
    pts = [LabeledPoint([1.0], 1), LabeledPoint([-1.0], -1)]
    h = client_curvature(pts, np.zeros(2), hyper)
    np.testing.assert_allclose(h, 0.2 * np.eye(2), atol=1e-15)


def test_client_curvature_ridge_only_when_margins_left():
    # all margins below u0 - eps: the data term vanishes entirely
    hyper = Hyper(lam=0.2, q=1.0, eps_smooth=0.05)
    data = ClientData([[2.0], [3.0]], [-1.0, -1.0])  # margins negative
    h = client_curvature(data, np.array([0.0, 1.0]), hyper)
    np.testing.assert_allclose(h, 2 * 0.2 * np.eye(2), atol=1e-15)


def test_client_curvature_matches_smoothed_gradient_fd():
    """FD of the smoothed-derivative gradient, away from both knots.

    The exposed gradient uses the exact derivative, so the oracle builds
    the smoothed gradient directly from vq_prime_smoothed.
    """
    rng = np.random.default_rng(106)
    hyper = Hyper(lam=0.4, q=2.0, eps_smooth=0.05)
    u0 = hyper.q / (hyper.q + 1.0)

    def smoothed_grad(data, th):
        u = data.y * (th[0] + data.x @ th[1:])
        w = vq_prime_smoothed(u, hyper.q, hyper.eps_smooth) * data.y
        xbar = np.column_stack([np.ones(len(data)), data.x])
        g = xbar.T @ w
        g[1:] += len(data) * hyper.lam * th[1:]
        return g

    h = 1e-6
    checked = 0
    while checked < 40:
        n, p = rng.integers(2, 10), rng.integers(1, 4)
        data = ClientData(rng.standard_normal((n, p)),
                          np.where(rng.random(n) < 0.5, 1.0, -1.0))
        th = rng.standard_normal(p + 1)
        margins = data.y * (th[0] + data.x @ th[1:])
        knots = np.abs(margins - (u0 - hyper.eps_smooth))
        knots = np.minimum(knots,
                           np.abs(margins - (u0 + hyper.eps_smooth)))
        if knots.min() < 1e-3:
            continue
        curv = client_curvature(data, th, hyper,
                                regularizer=Regularizer.INTERCEPT_FREE)
        for j in range(p + 1):
            e = np.zeros(p + 1)
            e[j] = h
            fd = (smoothed_grad(data, th + e) - smoothed_grad(data, th - e)) \
                / (2.0 * h)
            scale = np.maximum(1.0, np.abs(curv[:, j]))
            assert np.all(np.abs(fd - curv[:, j]) < 1e-4 * scale)
        checked += 1


def test_client_summary_consistent_with_parts():
    rng = np.random.default_rng(107)
    hyper = Hyper(lam=0.05, q=1.0)
    data = ClientData(rng.standard_normal((9, 3)),
                      np.where(rng.random(9) < 0.5, 1.0, -1.0))
    th = rng.standard_normal(4)
    summary, val = client_summary(data, th, hyper, want_loss=True)
    assert summary.count == 9
    np.testing.assert_allclose(summary.gradient,
                               client_gradient(data, th, hyper), atol=1e-12)
    np.testing.assert_allclose(summary.curvature,
                               client_curvature(data, th, hyper), atol=1e-12)
    assert val == pytest.approx(loss(data, th, hyper), abs=1e-12)
    asym = np.abs(summary.curvature - summary.curvature.T).max()
    assert asym <= 1e-12 * max(1.0, np.abs(summary.curvature).max())


def test_predict_rules():
    theta = np.array([0.0, 1.0])
    assert predict(theta, [2.0]) == 1
    assert predict(theta, [-3.0]) == -1
    # tie at margin zero goes to +1
    assert predict(np.zeros(2), [123.0]) == 1
    np.testing.assert_array_equal(
        predict_batch(theta, [[2.0], [-3.0], [0.0]]), [1.0, -1.0, 1.0])


# -- validation -------------------------------------------------------------


def test_labeled_point_validation():
    with pytest.raises(ValueError):
        LabeledPoint([1.0], 0)
    with pytest.raises(ValueError):
        LabeledPoint([np.inf], 1)
    with pytest.raises(ValueError):
        LabeledPoint([[1.0]], 1)


def test_client_data_validation():
    with pytest.raises(ValueError):
        ClientData([[1.0]], [2.0])
    with pytest.raises(ValueError):
        ClientData([[np.nan]], [1.0])
    with pytest.raises(ValueError):
        ClientData([[1.0], [2.0]], [1.0])


def test_model_state_accessors():
    m = ModelState([1.5, 2.0, -3.0])
    assert m.p == 2
    assert m.intercept == 1.5
    np.testing.assert_array_equal(m.slopes, [2.0, -3.0])
    with pytest.raises(ValueError):
        ModelState([1.0])


def test_hyper_validation():
    with pytest.raises(ValueError):
        Hyper(lam=0.0)
    with pytest.raises(ValueError):
        Hyper(q=-1.0)
    with pytest.raises(ValueError):
        Hyper(eps_smooth=0.9)  # above u0 = 0.5 at q=1
    with pytest.raises(ValueError):
        Hyper(max_iter=0)
    with pytest.raises(ValueError):
        Hyper(tol=0.0)


def test_dimension_mismatch_message():
    hyper = Hyper()
    data = ClientData([[1.0, 2.0]], [1.0])
    with pytest.raises(ValueError, match="dimension mismatch"):
        client_gradient(data, np.zeros(2), hyper)


# -- property tests ----------------------------------------------------------

_qs = st.floats(min_value=0.01, max_value=100.0,
                allow_nan=False, allow_infinity=False)
_us = st.floats(min_value=-50.0, max_value=50.0,
                allow_nan=False, allow_infinity=False)


@settings(derandomize=True, max_examples=200)
@given(u=_us, q=_qs)
def test_vq_is_nonnegative_and_decreasing(u, q):
    val = vq(u, q)
    assert val >= 0.0
    assert vq(u + 0.25, q) <= val + 1e-12


@settings(derandomize=True, max_examples=200)
@given(u=_us, v=_us, q=_qs, t=st.floats(min_value=0.0, max_value=1.0))
def test_vq_chord_lies_above(u, v, q, t):
    mid = t * u + (1.0 - t) * v
    chord = t * vq(u, q) + (1.0 - t) * vq(v, q)
    assert vq(mid, q) <= chord + 1e-12 * (1.0 + abs(chord))


@settings(derandomize=True, max_examples=200)
@given(u=_us, q=_qs, frac=st.floats(min_value=0.01, max_value=0.99))
def test_smoothed_slope_stays_in_unit_band(u, q, frac):
    eps = q / (q + 1.0) * frac
    s = vq_prime_smoothed(u, q, eps)
    assert -1.0 - 1e-12 <= s <= 0.0
    assert 0.0 <= vq_second_smoothed(u, q, eps) \
        <= (q + 1.0) ** 2 / q * (1.0 + 1e-12)
