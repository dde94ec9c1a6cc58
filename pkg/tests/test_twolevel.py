import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from dickecpt.model import memory_g
from dickecpt.twolevel import (
    Regime,
    TwoLevelParams,
    dicke_width,
    regime_classify,
    spectrum_dicke_limit,
    spectrum_doppler_limit,
    spectrum_general,
)
from dickecpt.analysis import fwhm


def qawf_spectrum(p, delta):
    """Independent oracle: QUADPACK's Fourier-integral routine on the same kernel."""
    gd, g = p.Gamma_D, p.motion.gamma
    k = lambda t: np.exp(-p.Gamma * t - (gd / g) ** 2 * memory_g(g * t))
    if delta == 0:
        return integrate.quad(k, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=500)[0]
    return integrate.quad(k, 0, np.inf, weight="cos", wvar=delta, epsabs=1e-13, limlst=200)[0]


@pytest.mark.parametrize("Gamma,Gd,gamma", [(1.0, 5.0, 5.0), (1.0, 5.0, 0.5), (0.2, 1.0, 40.0)])
def test_general_matches_qawf(Gamma, Gd, gamma):
    p = TwoLevelParams.from_widths(Gamma, Gd, gamma)
    grid = np.array([-7.0, 0.0, 0.3, 2.0, 11.0])
    s = spectrum_general(p, grid)
    ref = np.array([qawf_spectrum(p, d) for d in grid])
    assert np.allclose(s.values, ref, rtol=1e-7, atol=1e-10)


def test_general_matches_voigt_without_collisions():
    p = TwoLevelParams.from_widths(0.3, 2.0, 0.0)
    grid = np.linspace(-10, 10, 41)
    s = spectrum_general(p, grid)
    ref = np.pi * special.voigt_profile(grid, 2.0, 0.3)
    assert np.allclose(s.values, ref, rtol=1e-8, atol=1e-12)


def test_doppler_closed_form_examples():
    p = TwoLevelParams.from_widths(0.01, 1.0, 0.0)
    s = spectrum_doppler_limit(p, [0.0, 3.0])
    assert s.values[0] == pytest.approx(1.2533141373155, rel=1e-12)
    assert s.values[1] == pytest.approx(0.013922, rel=1e-4)
    grid = np.linspace(-3, 3, 6001)
    width = fwhm(spectrum_doppler_limit(p, grid), baseline=0.0)
    assert width == pytest.approx(2 * np.sqrt(2 * np.log(2)), rel=1e-6)
    with pytest.raises(ValueError):
        spectrum_doppler_limit(TwoLevelParams.from_widths(1.0, 0.0, 1.0), [0.0])


def test_dicke_closed_form_examples():
    p = TwoLevelParams.from_widths(1.0, 5.0, 100.0)
    s = spectrum_dicke_limit(p, [0.0])
    assert s.values[0] == pytest.approx(0.8)
    assert 2 * dicke_width(p) == pytest.approx(2.5)
    assert s.meta["effective_width"] == pytest.approx(1.25)
    big = TwoLevelParams.from_widths(1.0, 5.0, 1e12)
    grid = np.linspace(-5, 5, 11)
    assert np.allclose(spectrum_dicke_limit(big, grid).values, 1.0 / (grid**2 + 1.0), rtol=1e-10)
    with pytest.raises(ValueError):
        spectrum_dicke_limit(TwoLevelParams.from_widths(1.0, 5.0, 0.0), grid)


def test_doppler_regime_peak():
    gd = 1.0
    p = TwoLevelParams.from_widths(gd / 50, gd, 0.01 * gd)
    peak = spectrum_general(p, [0.0]).values[0]
    assert abs(peak / (np.sqrt(np.pi / 2) / gd) - 1) < 0.02


def test_dicke_regime_width():
    p = TwoLevelParams.from_widths(1.0, 5.0, 500.0)
    grid = np.linspace(-20, 20, 2001)
    s = spectrum_general(p, grid)
    assert 0.5 * fwhm(s, baseline=0.0) == pytest.approx(dicke_width(p), rel=0.02)


def test_evenness_and_positivity():
    p = TwoLevelParams.from_widths(1.0, 5.0, 3.0)
    grid = np.linspace(-30, 30, 121)
    s = spectrum_general(p, grid)
    assert np.allclose(s.values, s.values[::-1], rtol=1e-9)
    assert np.all(s.values > 0)
    assert np.argmax(s.values) == 60


def test_non_decaying_kernel_rejected():
    with pytest.raises(ValueError, match="non-decaying"):
        spectrum_general(TwoLevelParams.from_widths(0.0, 0.0, 1.0), [0.0])


def test_regime_classification():
    gd = 2.0
    assert regime_classify(TwoLevelParams.from_widths(1.0, gd, 0.001 * gd)) is Regime.DOPPLER
    assert regime_classify(TwoLevelParams.from_widths(1.0, gd, 1000 * gd)) is Regime.DICKE
    assert regime_classify(TwoLevelParams.from_widths(1.0, gd, gd)) is Regime.INTERMEDIATE


def test_monotone_narrowing():
    grid = np.linspace(-40, 40, 1601)
    widths = []
    for ratio in np.geomspace(0.01, 100, 9):
        p = TwoLevelParams.from_widths(1.0, 5.0, ratio * 5.0)
        widths.append(fwhm(spectrum_general(p, grid), baseline=0.0))
    assert np.all(np.diff(widths) <= 1e-9)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.0, 10.0), st.floats(0.01, 100.0))
def test_sum_rule_property(Gamma, Gd, gamma):
    p = TwoLevelParams.from_widths(Gamma, Gd, gamma)
    # the integral over all detunings is pi times the kernel at zero
    half = 2000 * max(Gamma, 0.05 * Gd)
    x = np.sinh(np.linspace(-np.arcsinh(half / Gamma), np.arcsinh(half / Gamma), 1201))
    grid = Gamma * x
    s = spectrum_general(p, grid)
    total = integrate.simpson(s.values, x=grid)
    assert total == pytest.approx(np.pi, rel=5e-3)


def test_runtime_budget():
    p = TwoLevelParams.from_widths(0.02, 1.0, 0.01)
    t0 = time.perf_counter()
    spectrum_general(p, np.linspace(-3, 3, 301))
    assert time.perf_counter() - t0 < 10
