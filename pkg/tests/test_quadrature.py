import numpy as np
import pytest

from dickecpt.quadrature import (
    GAUSS_WEIGHTS,
    KRONROD_NODES,
    KRONROD_WEIGHTS,
    QuadratureError,
    decay_horizon,
    fourier_half_line,
    integrate_panels,
)


def test_kronrod_rule_exactness():
    for k in range(23):
        exact = (1 - (-1) ** (k + 1)) / (k + 1)
        assert np.dot(KRONROD_WEIGHTS, KRONROD_NODES**k) == pytest.approx(exact, abs=1e-14)
    for k in range(14):
        exact = (1 - (-1) ** (k + 1)) / (k + 1)
        assert np.dot(GAUSS_WEIGHTS, KRONROD_NODES**k) == pytest.approx(exact, abs=1e-14)


def test_exponential_cosine_transform():
    # int_0^inf e^{-a t} cos(w t) dt = a / (a^2 + w^2)
    a = 0.7
    w = np.linspace(-20, 20, 81)
    tmax = decay_horizon(lambda t: -a * t, eps=1e-14)
    got = fourier_half_line(lambda t: np.exp(-a * t), w, tmax, mode="cos", rel_tol=1e-11)
    assert np.allclose(got, a / (a**2 + w**2), rtol=0, atol=1e-11)


def test_complex_mode_matches_closed_form():
    a = 1.3
    w = np.array([-3.0, 0.0, 0.5, 7.0])
    tmax = decay_horizon(lambda t: -a * t, eps=1e-14)
    got = fourier_half_line(lambda t: np.exp(-a * t), w, tmax, mode="exp", rel_tol=1e-11)
    assert np.allclose(got, 1.0 / (a - 1j * w), atol=1e-11)


def test_decay_horizon_root():
    t = decay_horizon(lambda t: -2.0 * t, eps=1e-12)
    assert t == pytest.approx(np.log(1e12) / 2.0, rel=1e-10)
    with pytest.raises(ValueError):
        decay_horizon(lambda t: 0.0 * t, t_cap=1e3)


def test_refinement_failure_reports_worst_frequency():
    with pytest.raises(QuadratureError) as err:
        fourier_half_line(lambda t: np.exp(-t), [1e9], 40.0, mode="cos", max_panels=1000)
    assert err.value.worst_omega == pytest.approx(1e9)


def test_integrate_panels_graded():
    val = integrate_panels(lambda x: np.exp(-x), 0.0, 30.0, 20, grading=1.3)
    assert val == pytest.approx(1 - np.exp(-30.0), rel=1e-13)
