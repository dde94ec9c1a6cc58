"""Two-level absorption line shape with Doppler broadening and Dicke narrowing."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import (
    FieldGeometry,
    MotionParams,
    Spectrum,
    VelocityModel,
    check_grid,
    memory_g,
)
from .quadrature import decay_horizon, fourier_half_line

EPS_TRUNC = 1e-12
EPS_QUAD = 1e-8


class Regime(str, enum.Enum):
    DOPPLER = "doppler"
    DICKE = "dicke"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class TwoLevelParams:
    """Homogeneous width ``Gamma``, probe geometry and thermal motion.

    Only ``geom.q1`` is used.
    """

    Gamma: float
    geom: FieldGeometry
    motion: MotionParams

    def __post_init__(self):
        if not np.isfinite(self.Gamma) or self.Gamma < 0:
            raise ValueError(f"Gamma must be finite and >= 0, got {self.Gamma}")

    @property
    def Gamma_D(self) -> float:
        return self.geom.q1_mag * self.motion.v_th

    @classmethod
    def from_widths(cls, Gamma, Gamma_D, gamma, model=VelocityModel.BROWNIAN, v_th=1.0):
        """Dimensionless construction: v_th fixed, |q| chosen to give ``Gamma_D``."""
        geom = FieldGeometry(np.array([0.0, 0.0, Gamma_D / v_th]))
        return cls(Gamma=Gamma, geom=geom, motion=MotionParams(v_th=v_th, gamma=gamma, model=model))

    def snapshot(self) -> dict:
        return {
            "Gamma": self.Gamma,
            "Gamma_D": self.Gamma_D,
            "gamma": self.motion.gamma,
            "v_th": self.motion.v_th,
            "q1": self.geom.q1.tolist(),
            "model": self.motion.model.value,
        }


def log_kernel(p: TwoLevelParams, tau):
    """log of exp(-Gamma tau - Gamma_D^2 G(gamma tau) / gamma^2)."""
    tau = np.asarray(tau, dtype=float)
    gd, g = p.Gamma_D, p.motion.gamma
    if g == 0:
        return -p.Gamma * tau - 0.5 * (gd * tau) ** 2
    return -p.Gamma * tau - (gd / g) ** 2 * memory_g(g * tau)


def _require_decay(p: TwoLevelParams):
    if p.Gamma <= 0 and p.Gamma_D <= 0:
        raise ValueError("non-decaying kernel: Gamma and Gamma_D are both zero")


def kernel_horizon(p: TwoLevelParams, eps=EPS_TRUNC) -> float:
    _require_decay(p)
    scale = 1.0 / max(p.Gamma, p.Gamma_D, 1e-300)
    return decay_horizon(lambda t: float(log_kernel(p, t)), eps=eps, t0=scale)


def spectrum_general(p: TwoLevelParams, detunings, *, eps_trunc=EPS_TRUNC, eps_quad=EPS_QUAD) -> Spectrum:
    """Cosine transform of the phase-correlation kernel for every detuning.

    The kernel decays like exp(-Gamma tau) times the Gaussian-closure factor;
    it is truncated once it falls below ``eps_trunc`` and integrated with
    adaptive panels to a relative accuracy ``eps_quad``.
    """
    grid = check_grid(detunings)
    _require_decay(p)
    tau_max = kernel_horizon(p, eps_trunc)
    rates = [r for r in (p.Gamma, p.Gamma_D) if r > 0]
    h_scale = 0.5 / max(rates)
    vals = fourier_half_line(lambda t: np.exp(log_kernel(p, t)), grid, tau_max,
                             mode="cos", rel_tol=eps_quad, h_scale=max(h_scale, tau_max / 2e4))
    return Spectrum(grid, vals, meta={"source": "twolevel.general", "params": p.snapshot(),
                                      "tau_max": tau_max})


def spectrum_doppler_limit(p: TwoLevelParams, detunings) -> Spectrum:
    """Gaussian Doppler profile sqrt(pi/2)/Gamma_D exp(-Delta^2 / 2 Gamma_D^2)."""
    grid = check_grid(detunings)
    gd = p.Gamma_D
    if gd <= 0:
        raise ValueError("Doppler limit requires Gamma_D > 0")
    vals = np.sqrt(np.pi / 2) / gd * np.exp(-0.5 * (grid / gd) ** 2)
    return Spectrum(grid, vals, meta={"source": "twolevel.doppler", "params": p.snapshot(),
                                      "fwhm": 2 * np.sqrt(2 * np.log(2)) * gd})


def dicke_width(p: TwoLevelParams) -> float:
    """HWHM of the Dicke-limit Lorentzian, Gamma + Gamma_D^2 / gamma."""
    if p.motion.gamma <= 0:
        raise ValueError("Dicke limit requires gamma > 0")
    return p.Gamma + p.Gamma_D**2 / p.motion.gamma


def spectrum_dicke_limit(p: TwoLevelParams, detunings) -> Spectrum:
    grid = check_grid(detunings)
    w = dicke_width(p)
    if w <= 0:
        raise ValueError("Dicke-limit width is zero")
    vals = w / (grid**2 + w**2)
    # same width written through the Dicke parameter 2 pi Lambda / lambda = Gamma_D / gamma
    narrowing = p.Gamma_D / p.motion.gamma
    return Spectrum(grid, vals, meta={"source": "twolevel.dicke", "params": p.snapshot(),
                                      "hwhm": w, "dicke_parameter": narrowing,
                                      "effective_width": p.Gamma + narrowing * p.Gamma_D})


def regime_classify(p: TwoLevelParams, r_lo=0.1, r_hi=10.0) -> Regime:
    g, gd = p.motion.gamma, p.Gamma_D
    if g < r_lo * gd:
        return Regime.DOPPLER
    if g > r_hi * gd:
        return Regime.DICKE
    return Regime.INTERMEDIATE
