"""Domain types, unit conventions and kinematic quantities.

All rates, detunings and Rabi frequencies are angular [rad/s], wave-vectors
are [rad/m] and speeds [m/s].  Hz only appears at I/O boundaries (see
:func:`to_angular`).  A dimensionless mode is obtained simply by choosing a
reference rate equal to 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy import constants

TWO_PI = 2.0 * np.pi

# G(x) series / closed-form crossover.
_G_SERIES_CUTOFF = 1e-3


class VelocityModel(str, enum.Enum):
    BROWNIAN = "brownian"
    STRONG = "strong"

    @classmethod
    def parse(cls, value: "str | VelocityModel") -> "VelocityModel":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "brownian": cls.BROWNIAN,
            "brownianmotion": cls.BROWNIAN,
            "ou": cls.BROWNIAN,
            "strong": cls.STRONG,
            "strongcollisions": cls.STRONG,
            "strongcollision": cls.STRONG,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown velocity model {value!r}") from None


def to_angular(value, unit: str = "angular"):
    """Convert a rate given in ``unit`` ('angular'/'rad/s' or 'hz') to rad/s."""
    u = unit.strip().lower()
    if u in ("angular", "rad/s", "rad_s", "dimensionless"):
        return value
    if u == "hz":
        return np.multiply(value, TWO_PI)
    raise ValueError(f"unknown frequency unit {unit!r}")


def thermal_velocity(temperature: float, mass_amu: float) -> float:
    """Per-axis RMS speed sqrt(k_B T / m) in m/s."""
    return float(np.sqrt(constants.k * temperature / (mass_amu * constants.atomic_mass)))


@dataclass(frozen=True)
class MotionParams:
    """Thermal motion: per-axis RMS speed, velocity relaxation rate, model."""

    v_th: float
    gamma: float
    model: VelocityModel = VelocityModel.BROWNIAN

    def __post_init__(self):
        object.__setattr__(self, "model", VelocityModel.parse(self.model))
        if not np.isfinite(self.v_th) or self.v_th < 0:
            raise ValueError(f"v_th must be finite and >= 0, got {self.v_th}")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")

    @property
    def mean_free_path(self) -> float:
        return self.v_th / self.gamma if self.gamma > 0 else np.inf


def _as_vec3(q) -> np.ndarray:
    arr = np.asarray(q, dtype=float)
    if arr.ndim == 0:
        arr = np.array([0.0, 0.0, float(arr)])
    if arr.shape != (3,):
        raise ValueError(f"wave-vector must have 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("wave-vector components must be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FieldGeometry:
    """Probe (q1) and pump (q2) wave-vectors in rad/m.

    A scalar is accepted for either vector and placed along z.
    """

    q1: np.ndarray
    q2: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "q1", _as_vec3(self.q1))
        object.__setattr__(self, "q2", _as_vec3(self.q2))

    @property
    def q1_mag(self) -> float:
        return float(np.linalg.norm(self.q1))

    @property
    def q2_mag(self) -> float:
        return float(np.linalg.norm(self.q2))

    @property
    def dq(self) -> np.ndarray:
        return self.q1 - self.q2

    @property
    def dq_mag(self) -> float:
        return float(np.linalg.norm(self.q1 - self.q2))

    @property
    def q1_dot_q2(self) -> float:
        return float(np.dot(self.q1, self.q2))

    @property
    def q1_dot_dq(self) -> float:
        return float(np.dot(self.q1, self.q1 - self.q2))

    def angle(self) -> float:
        """Angle between q1 and q2 (0 when either vanishes)."""
        n1, n2 = self.q1_mag, self.q2_mag
        if n1 == 0 or n2 == 0:
            return 0.0
        # atan2 form keeps precision for nearly parallel vectors
        cross = np.linalg.norm(np.cross(self.q1, self.q2))
        return float(np.arctan2(cross, np.dot(self.q1, self.q2)))

    def __eq__(self, other):
        if not isinstance(other, FieldGeometry):
            return NotImplemented
        return np.array_equal(self.q1, other.q1) and np.array_equal(self.q2, other.q2)

    def __hash__(self):
        return hash((self.q1.tobytes(), self.q2.tobytes()))


@dataclass(frozen=True)
class LambdaSystem:
    """Relaxation rates and ground splitting of the three-level Lambda atom.

    ``Gamma_exchange`` is the ground-state population exchange rate and
    ``Gamma_ad`` the adiabatic (pure dephasing) ground decoherence rate.
    """

    Gamma1: float
    Gamma2: float = 0.0
    Gamma_exchange: float = 0.0
    Gamma_ad: float = 0.0
    omega21: float = 0.0

    def __post_init__(self):
        for name in ("Gamma1", "Gamma2", "Gamma_exchange", "Gamma_ad"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {val}")

    @property
    def Gamma_C(self) -> float:
        return 0.5 * (self.Gamma1 + self.Gamma2 + self.Gamma_exchange + self.Gamma_ad)

    @property
    def Gamma21(self) -> float:
        return self.Gamma_exchange + 2.0 * self.Gamma_ad

    @classmethod
    def with_ground_decoherence(cls, Gamma1: float, Gamma21: float, **kw) -> "LambdaSystem":
        """Build a system whose ground coherence decays at ``Gamma21`` through pure dephasing."""
        return cls(Gamma1=Gamma1, Gamma_ad=0.5 * Gamma21, **kw)


@dataclass(frozen=True)
class DriveParams:
    """Probe/pump Rabi frequencies and one-photon probe detuning.

    Rabi frequencies may be complex; their phase is the field phase.
    """

    Omega1: complex
    Omega2: complex
    Delta1: float = 0.0

    @property
    def weak_probe(self) -> bool:
        return abs(self.Omega1) < 0.1 * abs(self.Omega2) if self.Omega2 != 0 else True


@dataclass
class Spectrum:
    """Values of a line shape on a strictly increasing detuning grid."""

    detunings: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.detunings.ndim != 1 or self.detunings.shape != self.values.shape:
            raise ValueError("detunings and values must be 1-D arrays of equal length")
        if self.detunings.size > 1 and np.any(np.diff(self.detunings) <= 0):
            raise ValueError("detunings must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrum values must be finite")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.values.shape:
                raise ValueError("stderr must match values")

    @property
    def source(self) -> str:
        return self.meta.get("source", "")

    def __len__(self):
        return self.detunings.size

    def scaled(self, factor: float) -> "Spectrum":
        err = None if self.stderr is None else self.stderr * abs(factor)
        return replace(self, values=self.values * factor, stderr=err, meta=dict(self.meta))


def check_grid(detunings) -> np.ndarray:
    grid = np.asarray(detunings, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("detuning grid must be a non-empty 1-D array")
    if not np.all(np.isfinite(grid)):
        raise ValueError("detuning grid must be finite")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("detuning grid must be strictly increasing")
    return grid


def memory_g(x):
    """G(x) = x - 1 + exp(-x), accurate down to x -> 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("memory_g requires x >= 0")
    small = x < _G_SERIES_CUTOFF
    out = np.empty_like(x)
    xs = x[small]
    out[small] = xs * xs * (0.5 - xs * (1.0 / 6.0 - xs * (1.0 / 24.0 - xs / 120.0)))
    xl = x[~small]
    out[~small] = xl + np.expm1(-xl)
    return out if out.ndim else float(out)


def velocity_autocorrelation(motion: MotionParams, t, axis_pair=(0, 0)):
    """<u_a(t) u_b(0)> = delta_ab v_th^2 exp(-gamma |t|); same for both models."""
    a, b = axis_pair
    t = np.asarray(t, dtype=float)
    if a != b:
        return np.zeros_like(t) if t.ndim else 0.0
    val = motion.v_th**2 * np.exp(-motion.gamma * np.abs(t))
    return val if val.ndim else float(val)


def phase_variance(q_mag: float, motion: MotionParams, tau):
    """Variance of the phase q.[r(tau) - r(0)] accumulated over tau."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be >= 0")
    qv2 = (q_mag * motion.v_th) ** 2
    if motion.gamma == 0:
        out = qv2 * tau**2
    else:
        out = 2.0 * qv2 * memory_g(motion.gamma * tau) / motion.gamma**2
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def doppler_width(q_mag: float, motion: MotionParams) -> float:
    return q_mag * motion.v_th


def residual_doppler_width(geom: FieldGeometry, motion: MotionParams) -> float:
    return geom.dq_mag * motion.v_th


@dataclass(frozen=True)
class DickeParameter:
    eta: float
    mean_free_path: float
    wavelength_cpt: float


def dicke_parameter(geom: FieldGeometry, motion: MotionParams) -> DickeParameter:
    """CPT-Dicke parameter |q1 - q2| v_th / gamma with its length scales."""
    if motion.gamma <= 0:
        raise ValueError("dicke_parameter requires gamma > 0")
    dq = geom.dq_mag
    lam = TWO_PI / dq if dq > 0 else np.inf
    eta = dq * motion.v_th / motion.gamma
    return DickeParameter(eta=eta, mean_free_path=motion.v_th / motion.gamma, wavelength_cpt=lam)


def geometry_from_angle(q_mag1: float, q_mag2: float, theta: float) -> FieldGeometry:
    """q1 along z, q2 at angle theta to it in the x-z plane."""
    if q_mag1 <= 0 or q_mag2 <= 0:
        raise ValueError("wave-vector magnitudes must be > 0")
    if not 0 <= theta <= np.pi:
        raise ValueError("theta must lie in [0, pi]")
    q1 = np.array([0.0, 0.0, q_mag1])
    q2 = q_mag2 * np.array([np.sin(theta), 0.0, np.cos(theta)])
    return FieldGeometry(q1, q2)


def collinear_geometry(q_mag1: float, q_mag2: float) -> FieldGeometry:
    """Co-propagating beams along z (counter-propagating for negative q_mag2)."""
    return FieldGeometry(np.array([0.0, 0.0, q_mag1]), np.array([0.0, 0.0, q_mag2]))


def dq_from_angle(q_mag1: float, q_mag2: float, theta: float) -> float:
    """|q1 - q2| without cancellation for small angles."""
    return float(np.hypot(q_mag1 - q_mag2, 2.0 * np.sqrt(q_mag1 * q_mag2) * np.sin(0.5 * theta)))
