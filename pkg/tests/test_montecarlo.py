import mpmath as mp
import numpy as np
import pytest

from dickecpt.cpt import CptParams, _coeffs, _exponent
from dickecpt.model import (
    DriveParams,
    FieldGeometry,
    LambdaSystem,
    MotionParams,
    collinear_geometry,
    geometry_from_angle,
    memory_g,
)
from dickecpt.montecarlo import (
    _ou_step_moments,
    closure_factor,
    cross_correlation_integral,
    empirical_autocorrelation,
    k_variance,
    mc_cpt_kernel_estimate,
    mc_two_level_spectrum,
    phase_factor_estimate,
    sample_trajectory,
    simulate_positions,
    block_rng,
)
from dickecpt.twolevel import TwoLevelParams, spectrum_general
from dickecpt.analysis import fwhm


def z_scores(est, ref, err):
    err = np.where(err > 0, err, np.inf)
    return np.abs(est - ref) / err


def test_ou_step_variance_matches_autocorrelation_integral():
    # Var x(h) given u(0) ~ N(0, v^2) = int int v^2 e^{-g|t-s|} = 2 v^2 G(g h)/g^2
    g = 3.0
    for h in (1e-5, 1e-3, 0.2, 4.0):
        decay, drift, var_u, cov_ux, var_x = _ou_step_moments(g, np.array(h))
        total = drift**2 + var_x
        assert total == pytest.approx(2 * memory_g(g * h) / g**2, rel=1e-10)
        assert var_u + decay**2 == pytest.approx(1.0, rel=1e-14)
        # cov(u(h), x(h)) = int_0^h e^{-g(h-s)} ds  (from u0) ... total covariance
        cov_total = decay * drift + cov_ux
        assert cov_total == pytest.approx(-np.expm1(-g * h) / g, rel=1e-10)


def test_trajectory_reproducible_and_consistent():
    m = MotionParams(1.5, 4.0, "strong")
    a = sample_trajectory(m, 10.0, 7)
    b = sample_trajectory(m, 10.0, 7)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.positions, b.positions)
    seg = a.segment_velocities()
    assert np.allclose(np.diff(a.positions, axis=0), seg * np.diff(a.times)[:, None])
    br = sample_trajectory(MotionParams(1.5, 4.0), 2.0, 7)
    assert np.array_equal(br.positions, sample_trajectory(MotionParams(1.5, 4.0), 2.0, 7).positions)
    assert br.duration == 2.0


def test_trajectory_dump(tmp_path):
    tr = sample_trajectory(MotionParams(1.0, 2.0, "strong"), 3.0, 1)
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    data = np.loadtxt(path, delimiter=",")
    assert data.shape == (tr.times.size, 7)
    assert np.allclose(data[:, 0], tr.times)


def test_still_atoms_never_move():
    tr = sample_trajectory(MotionParams(0.0, 3.0, "strong"), 5.0, 1)
    assert np.all(tr.velocities == 0) and np.all(tr.positions == 0)
    est = phase_factor_estimate(7.0, MotionParams(0.0, 3.0), [0.0, 1.0, 5.0], 200, 1)
    assert np.all(est.mean_re == 1.0) and np.all(est.mean_im == 0.0)


@pytest.mark.parametrize("model", ["brownian", "strong"])
def test_velocity_moments_maxwellian(model):
    pos = simulate_positions(block_rng(3, 0), MotionParams(2.0, 1.0, model), 10_000, [0.0, 0.5])
    assert pos.shape == (10_000, 2, 3)
    tr = [sample_trajectory(MotionParams(2.0, 1.0, model), 1.0, s).velocities[0] for s in range(2000)]
    u = np.asarray(tr)
    mean_err = 2.0 / np.sqrt(len(u))
    assert np.all(np.abs(u.mean(0)) < 3 * mean_err)
    var_err = 4.0 * np.sqrt(2.0 / len(u))
    assert np.all(np.abs(u.var(0) - 4.0) < 3 * var_err)


def test_phase_factor_at_zero_and_bounded():
    est = phase_factor_estimate([1.0, 2.0, 0.5], MotionParams(1.0, 0.5, "strong"), np.linspace(0, 4, 9), 500, 4)
    assert est.mean_re[0] == 1.0 and est.mean_im[0] == 0.0
    assert np.all(np.abs(est.mean) <= 1 + 3 * est.stderr + 1e-15)


def test_estimates_bit_identical_across_threads():
    m = MotionParams(1.0, 2.0)
    taus = np.linspace(0, 2, 9)
    a = phase_factor_estimate(2.0, m, taus, 5000, 3, threads=1, block_size=512)
    b = phase_factor_estimate(2.0, m, taus, 5000, 3, threads=4, block_size=512)
    assert np.array_equal(a.mean_re, b.mean_re) and np.array_equal(a.stderr_im, b.stderr_im)


@pytest.mark.parametrize("model", ["brownian", "strong"])
def test_velocity_autocorrelation_both_models(model):
    m = MotionParams(1.0, 2.0, model)
    lags = np.array([0.0, 0.2, 0.5, 1.0, 2.0])
    mean, err = empirical_autocorrelation(m, lags, 40000, 11)
    assert np.all(z_scores(mean, np.exp(-2.0 * lags), err) < 3.5)


def test_brownian_closure_exact():
    m = MotionParams(1.0, 5.0)
    taus = np.linspace(0, 2, 21)
    est = phase_factor_estimate(4.0, m, taus, 40000, 5)
    assert np.all(z_scores(est.mean_re, closure_factor(4.0, m, taus), est.stderr_re) < 3.5)
    assert np.all(z_scores(est.mean_im, 0.0, est.stderr_im) < 3.5)


def test_strong_collisions_differ_from_closure():
    # at gamma ~ Gamma_D the phase is far from Gaussian and the closure underestimates
    m = MotionParams(1.0, 2.0, "strong")
    est = phase_factor_estimate(3.0, m, [1.0], 40000, 5)
    clos = closure_factor(3.0, m, np.array([1.0]))
    assert (est.mean_re[0] - clos[0]) / est.stderr_re[0] > 5


def test_stationarity_of_time_origin():
    m = MotionParams(1.0, 3.0)
    taus = np.linspace(0.1, 1.5, 8)
    a = phase_factor_estimate(3.0, m, taus, 20000, 21)
    b = phase_factor_estimate(3.0, m, taus, 20000, 22, t0=5.0)
    err = np.hypot(a.stderr_re, b.stderr_re)
    assert np.all(np.abs(a.mean_re - b.mean_re) < 3.5 * err)


def test_magnitude_non_increasing():
    m = MotionParams(1.0, 1.0, "strong")
    taus = np.linspace(0, 3, 13)
    est = phase_factor_estimate(2.0, m, taus, 20000, 9)
    mag = np.abs(est.mean)
    assert np.all(np.diff(mag) < 3 * est.stderr[1:])


def test_minimum_sample_counts():
    m = MotionParams(1.0, 1.0)
    with pytest.raises(ValueError):
        phase_factor_estimate(1.0, m, [0.1], 50, 1)


def test_mc_spectrum_matches_analytic():
    p = TwoLevelParams.from_widths(1.0, 5.0, 5.0)
    grid = np.linspace(-20, 20, 21)
    mc = mc_two_level_spectrum(p, grid, 20000, 4)
    ref = spectrum_general(p, grid)
    assert np.all(z_scores(mc.values, ref.values, mc.stderr) < 3.5)
    assert np.all(np.abs(mc.values - mc.values[::-1]) < 3.5 * np.hypot(mc.stderr, mc.stderr[::-1]) + 1e-15)


def test_mc_spectrum_doppler_width():
    p = TwoLevelParams.from_widths(0.01, 1.0, 0.01)
    grid = np.linspace(-3, 3, 121)
    mc = mc_two_level_spectrum(p, grid, 20000, 8)
    assert fwhm(mc, baseline=0.0) == pytest.approx(2.3548, rel=0.03)


def test_mc_spectrum_short_tau_grid_error():
    p = TwoLevelParams.from_widths(0.1, 1.0, 100.0)
    with pytest.raises(ValueError, match="tau grid too short"):
        mc_two_level_spectrum(p, [0.0, 1.0], 200, 1, tau_max=0.5)


def test_cross_integral_closed_form_vs_quadrature():
    mp.mp.dps = 30
    g = 1.7
    for tau, t1, t3 in [(0.5, 1.0, 0.3), (2.0, 0.4, 0.4), (0.1, 3.0, 0.0), (1.0, 1.0, 0.5)]:
        lo, hi = -t3 - tau, -t3

        def inner(x):
            kink = min(max(x, lo), hi)
            return mp.quad(lambda y: mp.exp(-g * abs(y - x)), [lo, kink, hi])

        ref = float(mp.quad(inner, sorted({-t1 - tau, lo, hi, 0.0})))
        assert cross_correlation_integral(g, tau, t1, t3) == pytest.approx(ref, rel=1e-12)
    assert cross_correlation_integral(0.0, 0.5, 1.0, 0.3) == pytest.approx(0.5 * 1.5)


def test_closure_exponent_matches_line_shape_integrand():
    # -<K^2>/2 must equal the motion part of the (tau1, tau3) exponent plus the outer Raman factor
    geom = geometry_from_angle(3.0, 2.2, 0.5)
    p = CptParams(LambdaSystem.with_ground_decoherence(1.0, 0.1), DriveParams(1e-3, 0.1), geom,
                  MotionParams(1.3, 2.0))
    c = _coeffs(p)
    g = p.motion.gamma
    for tau, t1, t3 in [(0.3, 0.8, 0.2), (1.5, 2.0, 1.9), (0.0, 1.0, 0.5)]:
        motion_part = _exponent(c, np.exp(-g * tau), t1, t3 / t1) + c.rate1 * t1
        outer = -(p.Gamma_D_res / g) ** 2 * memory_g(g * tau)
        assert -0.5 * k_variance(p, tau, t1, t3) == pytest.approx((motion_part + outer).real, rel=1e-10)


def test_cpt_kernel_estimate_identical_phases():
    p = CptParams(LambdaSystem.with_ground_decoherence(1.0, 0.1), DriveParams(1e-3, 0.1),
                  collinear_geometry(2.0, 2.0), MotionParams(1.0, 1.0))
    est = mc_cpt_kernel_estimate(p, [[0.7, 0.0, 0.0]], 2000, 1)
    assert est.mean_re[0] == pytest.approx(1.0, abs=1e-12)
    assert est.stderr_re[0] == pytest.approx(0.0, abs=1e-12)


def test_cpt_kernel_estimate_brownian_closure():
    geom = geometry_from_angle(2.0, 1.8, 0.6)
    p = CptParams(LambdaSystem.with_ground_decoherence(1.0, 0.1), DriveParams(1e-3, 0.1), geom,
                  MotionParams(1.0, 1.5))
    trip = [[0.2, 0.5, 0.1], [1.0, 1.0, 0.5], [0.5, 2.0, 2.0], [2.0, 0.3, 0.0]]
    est = mc_cpt_kernel_estimate(p, trip, 40000, 2)
    assert np.all(z_scores(est.mean_re, est.closure, est.stderr_re) < 3.5)
    assert np.all(z_scores(est.cross_mean, est.cross_closed, est.cross_stderr) < 3.5)


def test_cpt_kernel_estimate_orthogonal_cross_term():
    p = CptParams(LambdaSystem.with_ground_decoherence(1.0, 0.1), DriveParams(1e-3, 0.1),
                  FieldGeometry([0, 0, 2.0], [2.0, 0, 0]), MotionParams(1.0, 1.0))
    est = mc_cpt_kernel_estimate(p, [[0.5, 1.0, 0.4], [1.0, 0.5, 0.0]], 20000, 3)
    assert np.all(est.cross_closed == 0)
    assert np.all(np.abs(est.cross_mean) < 3.5 * est.cross_stderr)


def test_simulate_positions_rejects_unsorted():
    with pytest.raises(ValueError):
        simulate_positions(block_rng(1, 0), MotionParams(1.0, 1.0), 10, [0.5, 0.1])
