"""CPT (two-photon) absorption dip of a moving Lambda atom.

The general line shape factorises into a Raman-time kernel F(tau), built
from a double integral over the two one-photon intervals, followed by a
half-line Fourier transform in the Raman detuning.  F depends on tau only
through s = exp(-gamma tau), so it is tabulated once by Chebyshev
interpolation on s in [0, 1] and reused for every detuning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C

from .model import (
    DriveParams,
    FieldGeometry,
    LambdaSystem,
    MotionParams,
    Spectrum,
    check_grid,
    memory_g,
)
from .quadrature import KRONROD_NODES, KRONROD_WEIGHTS, decay_horizon, fourier_half_line
from .twolevel import TwoLevelParams, spectrum_general

EPS_TRUNC = 1e-12
EPS_QUAD = 1e-8
_KERNEL_RTOL = 1e-9
_COLLINEAR_ANGLE = 1e-9


@dataclass(frozen=True)
class CptParams:
    system: LambdaSystem
    drive: DriveParams
    geom: FieldGeometry
    motion: MotionParams

    @property
    def Gamma_D(self) -> float:
        return self.geom.q1_mag * self.motion.v_th

    @property
    def Gamma_D_res(self) -> float:
        return self.geom.dq_mag * self.motion.v_th

    @property
    def eta(self) -> float:
        g = self.motion.gamma
        if g <= 0:
            return np.inf if self.Gamma_D_res > 0 else 0.0
        return self.Gamma_D_res / g

    @property
    def q1_dot_q2(self) -> float:
        return self.geom.q1_dot_q2

    @property
    def predicted_hwhm(self) -> float:
        """Gamma_21 + eta * Gamma_D_res."""
        return self.system.Gamma21 + self.eta * self.Gamma_D_res

    def flags(self) -> dict:
        s, d = self.system, self.drive
        g, gd, gres = self.motion.gamma, self.Gamma_D, self.Gamma_D_res
        return {
            "low_contrast": abs(d.Omega2) ** 2 < 0.1 * s.Gamma21 * s.Gamma1,
            "weak_probe": abs(d.Omega1) < 0.1 * abs(d.Omega2) if d.Omega2 != 0 else True,
            "doppler_one_photon": gd > 10 * s.Gamma1 and gd > 10 * g,
            "dicke_two_photon": g > 10 * gres,
            "resolved_residual_doppler": gres > 10 * s.Gamma21,
        }

    def intermediate_regime(self) -> bool:
        f = self.flags()
        return f["doppler_one_photon"] and f["dicke_two_photon"] and f["resolved_residual_doppler"]

    def snapshot(self) -> dict:
        s, d = self.system, self.drive
        return {
            "Gamma1": s.Gamma1, "Gamma2": s.Gamma2, "Gamma_exchange": s.Gamma_exchange,
            "Gamma_ad": s.Gamma_ad, "Gamma21": s.Gamma21, "Gamma_C": s.Gamma_C,
            "omega21": s.omega21,
            "Omega1": _jsonable(d.Omega1), "Omega2": _jsonable(d.Omega2), "Delta1": d.Delta1,
            "q1": self.geom.q1.tolist(), "q2": self.geom.q2.tolist(),
            "v_th": self.motion.v_th, "gamma": self.motion.gamma,
            "model": self.motion.model.value,
            "Gamma_D": self.Gamma_D, "Gamma_D_res": self.Gamma_D_res, "eta": self.eta,
        }

    def one_photon_params(self) -> TwoLevelParams:
        return TwoLevelParams(Gamma=self.system.Gamma1, geom=FieldGeometry(self.geom.q1),
                              motion=self.motion)


def _jsonable(z):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def _meta(p: CptParams, source: str, **extra) -> dict:
    m = {"source": source, "params": p.snapshot(), "flags": p.flags()}
    m.update(extra)
    return m


# ---------------------------------------------------------------------------
# Raman-time kernel F


@dataclass(frozen=True)
class _KernelCoeffs:
    rate1: complex      # Gamma1 + i Delta1
    gamma: float
    a: float            # (Gamma_D / gamma)^2
    b: float            # q1.q2 v^2 / gamma^2
    a_minus_b: float    # q1.(q1 - q2) v^2 / gamma^2, computed without cancellation


def _coeffs(p: CptParams) -> _KernelCoeffs:
    v, g = p.motion.v_th, p.motion.gamma
    rate1 = complex(p.system.Gamma1, p.drive.Delta1)
    if v == 0:
        return _KernelCoeffs(rate1, max(g, 1.0), 0.0, 0.0, 0.0)
    if g <= 0:
        raise ValueError("the general CPT kernel requires gamma > 0 when v_th > 0")
    v2g2 = (v / g) ** 2
    return _KernelCoeffs(rate1, g, p.geom.q1_mag**2 * v2g2, p.geom.q1_dot_q2 * v2g2,
                         p.geom.q1_dot_dq * v2g2)


def _exponent(c: _KernelCoeffs, s, tau1, x):
    """Exponent of the (tau1, tau3 = x tau1) integrand at s = exp(-gamma tau); broadcasts."""
    gt1 = c.gamma * tau1
    out = (-c.rate1 * tau1
           - c.a_minus_b * (1.0 - s) * gt1
           - c.a * s * memory_g(gt1)
           - c.b * (1.0 - s) * (memory_g(gt1 * x) + memory_g(gt1 * (1.0 - x))))
    return out


def _inner_scale(c: _KernelCoeffs) -> float:
    rates = [abs(c.rate1)]
    if c.a > 0:
        rates += [np.sqrt(c.a) * c.gamma, c.gamma, abs(c.a_minus_b) * c.gamma]
    rates = [r for r in rates if r > 0]
    return 1.0 / max(rates)


def _tau1_horizon(c: _KernelCoeffs, eps=1e-14) -> float:
    """tau1 beyond which tau1 * |integrand| is negligible for all s and x."""
    if c.rate1.real <= 0 and c.a <= 0:
        raise ValueError("divergent one-photon integral: Gamma1 and Gamma_D are both zero")
    x_star = 0.5 if c.b >= 0 else 0.0

    def log_env(t):
        e = [np.real(_exponent(c, s, t, x_star)) for s in (0.0, 1.0)]
        return np.log(t) + max(e)

    scale = _inner_scale(c)
    t = scale * 1e-3
    peak = log_env(t)
    t_peak = t
    while True:
        t *= 1.25
        val = log_env(t)
        if val > peak:
            peak, t_peak = val, t
        if t > t_peak * 4 and val < peak + np.log(eps):
            return t
        if t > 1e6 * max(scale, 1.0 / max(c.rate1.real, 1e-300)) * 1e3:
            raise ValueError("one-photon integrand does not decay")


def _raman_kernel_on_s(c: _KernelCoeffs, s_values, n_t=24, n_x=4, rtol=_KERNEL_RTOL):
    """F at the given s values by nested composite Kronrod quadrature.

    The tau1 panels are graded from the smallest kinematic scale; both panel
    counts are doubled until successive estimates agree to ``rtol``.
    """
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
    t_max = _tau1_horizon(c)
    h0 = 0.25 * _inner_scale(c)

    def estimate(nt, nx):
        # graded tau1 mesh: geometric growth starting near h0
        ratio = max(t_max / h0, 1.0)
        if ratio <= nt:
            edges = np.linspace(0.0, t_max, nt + 1)
        else:
            # solve h0 * (r^nt - 1) / (r - 1) = t_max for r
            lo, hi = 1.0 + 1e-12, 2.0
            while h0 * (hi**nt - 1) / (hi - 1) < t_max:
                hi *= 2
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if h0 * (mid**nt - 1) / (mid - 1) < t_max:
                    lo = mid
                else:
                    hi = mid
            r = 0.5 * (lo + hi)
            w = r ** np.arange(nt)
            edges = np.concatenate([[0.0], np.cumsum(w)]) * (t_max / w.sum())
        a, b = edges[:-1], edges[1:]
        t_nodes = (0.5 * (a + b))[:, None] + (0.5 * (b - a))[:, None] * KRONROD_NODES
        t_w = (0.5 * (b - a))[:, None] * KRONROD_WEIGHTS
        t_nodes, t_w = t_nodes.ravel(), t_w.ravel()
        # x in [0, 1/2]; the integrand is symmetric under x -> 1 - x
        xe = np.linspace(0.0, 0.5, nx + 1)
        xa, xb = xe[:-1], xe[1:]
        x_nodes = ((0.5 * (xa + xb))[:, None] + (0.5 * (xb - xa))[:, None] * KRONROD_NODES).ravel()
        x_w = ((0.5 * (xb - xa))[:, None] * KRONROD_WEIGHTS).ravel() * 2.0
        out = np.empty(s_values.size, dtype=complex)
        step = max(1, 2_000_000 // (t_nodes.size * x_nodes.size))
        for i in range(0, s_values.size, step):
            s = s_values[i:i + step, None, None]
            e = _exponent(c, s, t_nodes[None, :, None], x_nodes[None, None, :])
            inner = np.exp(e) @ x_w
            out[i:i + step] = inner @ (t_w * t_nodes)
        return out

    nt, nx = n_t, n_x
    prev = estimate(nt, nx)
    for _ in range(8):
        nt, nx = 2 * nt, 2 * nx
        cur = estimate(nt, nx)
        scale = np.max(np.abs(cur))
        if np.max(np.abs(cur - prev)) <= rtol * scale:
            return cur
        prev = cur
    raise RuntimeError(
        f"CPT kernel quadrature did not converge (last change {np.max(np.abs(cur - prev)) / scale:.2e})")


class RamanKernel:
    """F(tau) tabulated as a Chebyshev series in s = exp(-gamma tau)."""

    def __init__(self, p: CptParams, *, rtol=1e-10, max_degree=512):
        self.coeffs = c = _coeffs(p)
        self.gamma = c.gamma
        if c.a == 0 and c.b == 0:
            # stationary atom: exactly 1 / (Gamma1 + i Delta1)^2
            if c.rate1 == 0:
                raise ValueError("divergent one-photon integral: Gamma1 and Gamma_D are both zero")
            self._const = 1.0 / c.rate1**2
            self.series = None
            self.degree = 0
            return
        self._const = None
        deg = 16
        while True:
            nodes = C.chebpts1(deg + 1)
            s = 0.5 * (nodes + 1.0)
            vals = _raman_kernel_on_s(c, s)
            coef_re = C.chebfit(nodes, vals.real, deg)
            coef_im = C.chebfit(nodes, vals.imag, deg)
            coef = coef_re + 1j * coef_im
            tail = np.max(np.abs(coef[-3:]))
            if tail <= rtol * np.max(np.abs(coef)) or deg >= max_degree:
                break
            deg *= 2
        if tail > 1e3 * rtol * np.max(np.abs(coef)):
            raise RuntimeError("Chebyshev tabulation of the CPT kernel did not converge")
        self.series = coef
        self.degree = deg

    @property
    def is_real(self) -> bool:
        if self.series is None:
            return np.imag(self._const) == 0
        return bool(np.all(self.series.imag == 0))

    def at_s(self, s):
        s = np.asarray(s, dtype=float)
        if self.series is None:
            return np.full(s.shape, self._const, dtype=complex)
        return C.chebval(2.0 * s - 1.0, self.series)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.at_s(np.exp(-self.gamma * tau))


def cpt_kernel(p: CptParams, tau):
    """F(tau) evaluated directly (no tabulation); real for Delta1 = 0."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    c = _coeffs(p)
    if c.a == 0 and c.b == 0:
        if c.rate1 == 0:
            raise ValueError("divergent one-photon integral: Gamma1 and Gamma_D are both zero")
        out = np.full(tau.shape, 1.0 / c.rate1**2, dtype=complex)
    else:
        out = _raman_kernel_on_s(c, np.exp(-c.gamma * tau.ravel())).reshape(tau.shape)
    if p.drive.Delta1 == 0:
        out = out.real
    return out if out.ndim else out.item()


def kernel_plateau(p: CptParams):
    """Exact limit of F for gamma tau -> infinity.

    The two one-photon intervals then decorrelate and the double integral
    separates into the square of a single one-photon integral.
    """
    c = _coeffs(p)
    if c.a == 0 and c.b == 0:
        return 1.0 / c.rate1**2
    rate = c.rate1 + c.a_minus_b * c.gamma

    def log_env(u):
        return float(-rate.real * u - c.b * memory_g(c.gamma * u))

    u_max = decay_horizon(log_env, eps=1e-15, t0=_inner_scale(c))
    f = lambda u: np.exp(-rate * u - c.b * memory_g(c.gamma * u))
    val = fourier_half_line(f, [0.0], u_max, mode="exp", rel_tol=1e-12,
                            h_scale=_inner_scale(c))[0]
    val = val * val
    return val.real if p.drive.Delta1 == 0 else val


def closed_form_amplitude(p: CptParams) -> float:
    """Amplitude factor 1 / [Gamma1 + q1.(q1 - q2) v^2 / gamma]^2 of the closed form."""
    return 1.0 / _closed_form_rate(p) ** 2


def _closed_form_rate(p: CptParams) -> float:
    g = p.motion.gamma
    if p.motion.v_th == 0:
        return p.system.Gamma1
    if g <= 0:
        raise ValueError("closed-form CPT line shape requires gamma > 0")
    return p.system.Gamma1 + p.geom.q1_dot_dq * p.motion.v_th**2 / g


# ---------------------------------------------------------------------------
# spectra


def one_photon_spectrum(p: CptParams, detunings1) -> Spectrum:
    """Pump-free probe absorption: the two-level spectrum with Gamma -> Gamma1."""
    s = spectrum_general(p.one_photon_params(), detunings1)
    s.meta = _meta(p, "cpt.one_photon", tau_max=s.meta.get("tau_max"))
    return s


def _outer_log_envelope(p: CptParams):
    g21, gres, g = p.system.Gamma21, p.Gamma_D_res, p.motion.gamma
    if g21 <= 0 and gres <= 0:
        raise ValueError("non-decaying Raman integrand: Gamma21 and Gamma_D_res are both zero")
    if gres == 0:
        return lambda t: -g21 * t
    if g <= 0:
        return lambda t: -g21 * t - 0.5 * (gres * t) ** 2
    c = (gres / g) ** 2
    return lambda t: -g21 * t - c * float(memory_g(g * t))


def cpt_dip_general(p: CptParams, deltaR, *, kernel: RamanKernel | None = None,
                    eps_trunc=EPS_TRUNC, eps_quad=EPS_QUAD) -> Spectrum:
    """Two-photon dip from the full kernel-then-transform evaluation.

    S2(dR) = -|Omega2|^2 Re int_0^inf exp((i dR - Gamma21) tau)
             exp(-(Gamma_D_res/gamma)^2 G(gamma tau)) F(tau) dtau
    """
    grid = check_grid(deltaR)
    log_env = _outer_log_envelope(p)
    if kernel is None:
        kernel = RamanKernel(p)
    omega2_sq = abs(p.drive.Omega2) ** 2
    tau_max = decay_horizon(log_env, eps=eps_trunc,
                            t0=1.0 / max(p.system.Gamma21, p.Gamma_D_res, 1e-300))
    g21, gres, g = p.system.Gamma21, p.Gamma_D_res, p.motion.gamma

    def envelope(t):
        if gres == 0:
            return np.exp(-g21 * t)
        if g <= 0:
            return np.exp(-g21 * t - 0.5 * (gres * t) ** 2)
        return np.exp(-g21 * t - (gres / g) ** 2 * memory_g(g * t))

    h_scale = 4.0 / kernel.gamma if kernel.series is not None else None
    if kernel.is_real:
        vals = fourier_half_line(lambda t: envelope(t) * kernel(t).real, grid, tau_max,
                                 mode="cos", rel_tol=eps_quad, h_scale=h_scale)
    else:
        vals = fourier_half_line(lambda t: envelope(t) * kernel(t), grid, tau_max,
                                 mode="exp", rel_tol=eps_quad, h_scale=h_scale).real
    s2 = -omega2_sq * vals
    return Spectrum(grid, s2, meta=_meta(p, "cpt.general", tau_max=tau_max,
                                         kernel_degree=kernel.degree,
                                         experimental=p.drive.Delta1 != 0))


def cpt_dip_intermediate(p: CptParams, deltaR) -> Spectrum:
    """Closed-form Lorentzian dip valid in the intermediate regime."""
    grid = check_grid(deltaR)
    rate = _closed_form_rate(p)
    w = p.predicted_hwhm
    if rate == 0 or w == 0:
        raise ValueError("closed-form CPT line shape has a zero denominator")
    amp = -abs(p.drive.Omega2) ** 2 / rate**2
    vals = amp * w / (grid**2 + w**2)
    return Spectrum(grid, vals, meta=_meta(p, "cpt.intermediate", hwhm=w,
                                           amplitude=amp,
                                           intermediate_regime=p.intermediate_regime()))


def cpt_dip_collinear(p: CptParams, deltaR) -> Spectrum:
    """Closed form for parallel beams, written through eta * Gamma_D."""
    grid = check_grid(deltaR)
    if p.geom.q1_mag > 0 and p.geom.q2_mag > 0 and p.geom.angle() >= _COLLINEAR_ANGLE:
        raise ValueError(f"beams are not collinear (angle {p.geom.angle():.3e} rad)")
    w = p.predicted_hwhm
    eta = p.eta if p.motion.v_th > 0 else 0.0
    rate = p.system.Gamma1 + eta * p.Gamma_D
    if rate == 0 or w == 0:
        raise ValueError("collinear CPT line shape has a zero denominator")
    amp = -abs(p.drive.Omega2) ** 2 / rate**2
    vals = amp * w / (grid**2 + w**2)
    return Spectrum(grid, vals, meta=_meta(p, "cpt.collinear", hwhm=w, amplitude=amp))


_DIP_METHODS = {
    "general": cpt_dip_general,
    "intermediate": cpt_dip_intermediate,
    "collinear": cpt_dip_collinear,
}


def full_probe_spectrum(p: CptParams, deltaR, *, method="general") -> Spectrum:
    """One-photon background at the fixed probe detuning plus the two-photon dip."""
    try:
        dip_fn = _DIP_METHODS[method]
    except KeyError:
        raise ValueError(f"unknown dip method {method!r}") from None
    grid = check_grid(deltaR)
    s1 = one_photon_spectrum(p, [p.drive.Delta1]).values[0]
    if p.drive.Omega2 == 0:
        s2 = np.zeros_like(grid)
    else:
        s2 = dip_fn(p, grid).values
    return Spectrum(grid, s1 + s2, meta=_meta(p, f"cpt.full.{method}", one_photon=s1))


RB87_HYPERFINE = 2.0 * np.pi * 6.834682610904e9   # rad/s
RB87_D1_WAVELENGTH = 794.979e-9                   # m


def rb_like_params(mean_free_path=1e-6, *, v_th=240.0, theta=0.0, Gamma1=2.0 * np.pi * 5.75e6,
                   Gamma21=2.0 * np.pi * 50.0, Omega2=2.0 * np.pi * 1e3, model="brownian") -> CptParams:
    """Room-temperature 87Rb D1 Lambda system in buffer gas, in SI angular units.

    The pump wave number is the probe's minus omega_HF / c; ``theta`` tilts
    the pump away from the probe.  The collision rate follows from the mean
    free path, gamma = v_th / mean_free_path.
    """
    from scipy import constants

    from .model import geometry_from_angle

    if mean_free_path <= 0:
        raise ValueError("mean free path must be positive")
    q1 = 2.0 * np.pi / RB87_D1_WAVELENGTH
    q2 = q1 - RB87_HYPERFINE / constants.c
    geom = geometry_from_angle(q1, q2, theta)
    return CptParams(
        system=LambdaSystem.with_ground_decoherence(Gamma1, Gamma21),
        drive=DriveParams(Omega1=0.01 * Omega2, Omega2=Omega2),
        geom=geom,
        motion=MotionParams(v_th=v_th, gamma=v_th / mean_free_path, model=model),
    )
