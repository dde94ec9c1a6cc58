"""Density-matrix oracle for the Lambda atom moving along sampled trajectories.

The optical coherences are stored in a frame co-moving with both the field
frequencies and the field phases at the atom's position,

    s31 = rho31 exp(i w1 t - i q1.r),  s32 = rho32 exp(i w2 t - i q2.r),
    s21 = rho21 exp(i (w1 - w2) t - i (q1 - q2).r),

so the equations have constant coefficients while the velocity is constant
and the Doppler shifts q_n.u enter as detunings.  Along a trajectory with
piecewise-constant velocity the evolution over each segment is therefore an
exact matrix exponential.  The generator is augmented with two rows that
accumulate the time integral of s31, which gives the windowed time average
without sampling error.

State vector layout (real): rho11, rho22, rho33, Re s21, Im s21, Re s31,
Im s31, Re s32, Im s32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .model import (
    DriveParams,
    FieldGeometry,
    LambdaSystem,
    Spectrum,
    VelocityModel,
    check_grid,
)
from .montecarlo import BLOCK_SIZE, Trajectory, _mean_and_stderr, map_blocks

N_STATE = 9
N_AUG = N_STATE + 2
POP_EPS = 1e-6
TRACE_TOL = 1e-7


class IntegrationError(RuntimeError):
    """The propagated state violated trace or positivity bounds."""

    def __init__(self, message, time=None, trace=None, populations=None):
        super().__init__(message)
        self.time = time
        self.trace = trace
        self.populations = populations


@dataclass(frozen=True)
class DensityMatrixState:
    rho11: float
    rho22: float
    rho33: float
    rho21: complex
    rho31: complex
    rho32: complex

    @classmethod
    def from_vector(cls, x) -> "DensityMatrixState":
        x = np.asarray(x, dtype=float)
        return cls(x[0], x[1], x[2], complex(x[3], x[4]), complex(x[5], x[6]), complex(x[7], x[8]))

    @classmethod
    def ground(cls) -> "DensityMatrixState":
        return cls(1.0, 0.0, 0.0, 0j, 0j, 0j)

    def to_vector(self) -> np.ndarray:
        return np.array([self.rho11, self.rho22, self.rho33,
                         self.rho21.real, self.rho21.imag,
                         self.rho31.real, self.rho31.imag,
                         self.rho32.real, self.rho32.imag])

    @property
    def trace(self) -> float:
        return self.rho11 + self.rho22 + self.rho33

    def matrix(self) -> np.ndarray:
        """Full Hermitian 3x3 matrix in the co-moving frame."""
        r = np.diag([self.rho11, self.rho22, self.rho33]).astype(complex)
        r[1, 0], r[2, 0], r[2, 1] = self.rho21, self.rho31, self.rho32
        r[0, 1], r[0, 2], r[1, 2] = np.conj(self.rho21), np.conj(self.rho31), np.conj(self.rho32)
        return r


def _rhs(x, sysm: LambdaSystem, om1, om2, d1, dR, k1, k2):
    """Time derivative of the real state vector for fixed Doppler shifts."""
    r11, r22, r33 = x[0], x[1], x[2]
    s21 = x[3] + 1j * x[4]
    s31 = x[5] + 1j * x[6]
    s32 = x[7] + 1j * x[8]
    gC, g21 = sysm.Gamma_C, sysm.Gamma21
    gx = sysm.Gamma_exchange
    d2 = d1 + dR
    a1 = np.imag(np.conj(om1) * s31)
    a2 = np.imag(np.conj(om2) * s32)
    dr11 = -2 * a1 + sysm.Gamma1 * r33 + gx * (r22 - r11)
    dr22 = -2 * a2 + sysm.Gamma2 * r33 - gx * (r22 - r11)
    dr33 = 2 * (a1 + a2) - (sysm.Gamma1 + sysm.Gamma2) * r33
    ds21 = (1j * np.conj(om2) * s31 - 1j * om1 * np.conj(s32)
            - (1j * (-dR + k1 - k2) + g21) * s21)
    ds31 = -1j * om1 * (r33 - r11) + 1j * om2 * s21 - (1j * (d1 + k1) + gC) * s31
    ds32 = -1j * om2 * (r33 - r22) + 1j * om1 * np.conj(s21) - (1j * (d2 + k2) + gC) * s32
    return np.array([dr11, dr22, dr33, ds21.real, ds21.imag,
                     ds31.real, ds31.imag, ds32.real, ds32.imag])


def generator_parts(sysm: LambdaSystem, drive: DriveParams, deltaR: float = 0.0):
    """Matrices (A0, B1, B2) with generator A0 + (q1.u) B1 + (q2.u) B2."""
    eye = np.eye(N_STATE)
    args = (sysm, complex(drive.Omega1), complex(drive.Omega2), float(drive.Delta1), float(deltaR))
    a0 = np.column_stack([_rhs(e, *args, 0.0, 0.0) for e in eye])
    b1 = np.column_stack([_rhs(e, *args, 1.0, 0.0) for e in eye]) - a0
    b2 = np.column_stack([_rhs(e, *args, 0.0, 1.0) for e in eye]) - a0
    return a0, b1, b2


def _augment(a0):
    """Embed 9x9 generators in the 11x11 space with the s31-integral rows."""
    out = np.zeros(a0.shape[:-2] + (N_AUG, N_AUG))
    out[..., :N_STATE, :N_STATE] = a0
    return out


_INTEGRAL_ROWS = np.zeros((N_AUG, N_AUG))
_INTEGRAL_ROWS[N_STATE, 5] = 1.0
_INTEGRAL_ROWS[N_STATE + 1, 6] = 1.0


def default_burn_in(sysm: LambdaSystem, drive: DriveParams) -> float:
    """Ten lifetimes of the slowest coherence that the drive populates."""
    rates = [sysm.Gamma_C]
    if drive.Omega2 != 0 and sysm.Gamma21 > 0:
        rates.append(sysm.Gamma21)
    slow = min(r for r in rates if r > 0) if any(r > 0 for r in rates) else None
    if slow is None:
        raise ValueError("no relaxation: the transient never decays")
    return 10.0 / slow


def _check_state(x, t):
    tr = x[..., 0] + x[..., 1] + x[..., 2]
    pops = x[..., :3]
    if np.any(np.abs(tr - 1.0) > TRACE_TOL):
        raise IntegrationError(f"trace drift {np.max(np.abs(tr - 1)):.3e} at t={t:.6g}", time=t,
                               trace=float(np.max(np.abs(tr - 1.0))))
    if np.any(pops < -POP_EPS) or np.any(pops > 1 + POP_EPS):
        raise IntegrationError(f"population left [0, 1] at t={t:.6g}", time=t, populations=pops)


def propagate_segments(a0_aug, b1, b2, durations, k1, k2, in_window, x0):
    """Exact propagation through padded segment arrays.

    a0_aug: (D, 11, 11) drive-dependent generators (one per configuration);
    durations, k1, k2, in_window: (M, K) per trajectory and segment;
    x0: (11,) initial augmented state.  Returns final states (M, D, 11).
    """
    m, n_seg = durations.shape
    d = a0_aug.shape[0]
    x = np.broadcast_to(x0, (m, d, N_AUG)).copy()
    b1a, b2a = _augment(b1), _augment(b2)
    for j in range(n_seg):
        dt = durations[:, j]
        live = dt > 0
        if not np.any(live):
            continue
        idx = np.flatnonzero(live)
        gen = (a0_aug[None, :, :, :]
               + k1[idx, j, None, None, None] * b1a
               + k2[idx, j, None, None, None] * b2a
               + in_window[idx, j, None, None, None] * _INTEGRAL_ROWS)
        prop = expm(gen * dt[idx, None, None, None])
        x[idx] = np.einsum("mdij,mdj->mdi", prop, x[idx])
    _check_state(x[..., :N_STATE], float(np.max(durations.sum(axis=1))))
    return x


# ---------------------------------------------------------------------------
# single trajectory


@dataclass
class DensityMatrixSeries:
    """States at the segment boundaries of one trajectory, plus the s31 integral."""

    times: np.ndarray
    states: np.ndarray          # (T, 9)
    sigma31_integral: np.ndarray  # (T,) complex, integral of s31 from 0
    deltaR: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.size

    def state(self, i) -> DensityMatrixState:
        return DensityMatrixState.from_vector(self.states[i])

    @property
    def trace(self) -> np.ndarray:
        return self.states[:, :3].sum(axis=1)

    def to_csv(self, path) -> None:
        header = "t,rho11,rho22,rho33,re21,im21,re31,im31,re32,im32"
        np.savetxt(path, np.column_stack([self.times, self.states]), delimiter=",",
                   header=header, fmt="%.17g")


def integrate_density_matrix(sysm: LambdaSystem, drive: DriveParams, geom: FieldGeometry,
                             traj: Trajectory, t_end: float, *, deltaR: float = 0.0,
                             t_eval=None, initial: DensityMatrixState | None = None) -> DensityMatrixSeries:
    """Propagate the density matrix from |1><1| along ``traj`` up to ``t_end``.

    Output times are the trajectory's segment boundaries below ``t_end``
    together with ``t_eval`` (if given) and ``t_end`` itself.
    """
    if t_end <= 0 or t_end > traj.duration * (1 + 1e-12):
        raise ValueError(f"t_end must lie in (0, {traj.duration}]")
    seg_t = traj.times
    seg_u = traj.segment_velocities()
    extra = np.atleast_1d(np.asarray([] if t_eval is None else t_eval, dtype=float))
    if np.any(extra < 0) or np.any(extra > t_end):
        raise ValueError("t_eval points must lie in [0, t_end]")
    times = np.unique(np.concatenate([seg_t[seg_t < t_end], extra, [0.0, t_end]]))
    seg_idx = np.clip(np.searchsorted(seg_t, times[:-1], side="right") - 1, 0, len(seg_u) - 1)
    k1 = seg_u[seg_idx] @ geom.q1
    k2 = seg_u[seg_idx] @ geom.q2
    a0, b1, b2 = generator_parts(sysm, drive, deltaR)
    a0a, b1a, b2a = _augment(a0), _augment(b1), _augment(b2)
    x = np.zeros(N_AUG)
    x[:N_STATE] = (initial or DensityMatrixState.ground()).to_vector()
    out = np.empty((times.size, N_AUG))
    out[0] = x
    for j, dt in enumerate(np.diff(times)):
        gen = a0a + k1[j] * b1a + k2[j] * b2a + _INTEGRAL_ROWS
        x = expm(gen * dt) @ x
        out[j + 1] = x
        _check_state(x[:N_STATE], float(times[j + 1]))
    return DensityMatrixSeries(times, out[:, :N_STATE], out[:, N_STATE] + 1j * out[:, N_STATE + 1],
                               deltaR=float(deltaR), meta={"model": traj.model.value})


def trajectory_absorption(series: DensityMatrixSeries, drive: DriveParams, window) -> float:
    """Time average of Im[s31 / Omega1] over ``window = (t_start, t_stop)``."""
    if drive.Omega1 == 0:
        raise ValueError("absorption is undefined for a zero probe field")
    t0, t1 = map(float, window)
    if t0 < series.times[0] or t1 > series.times[-1] * (1 + 1e-12) or t1 <= t0:
        raise ValueError(f"window {window} is not inside the series [{series.times[0]}, {series.times[-1]}]")
    integ = series.sigma31_integral
    i0 = np.interp(t0, series.times, integ.real) + 1j * np.interp(t0, series.times, integ.imag)
    i1 = np.interp(t1, series.times, integ.real) + 1j * np.interp(t1, series.times, integ.imag)
    avg = (i1 - i0) / (t1 - t0)
    om1 = complex(drive.Omega1)
    return float(np.imag(avg * np.conj(om1)) / abs(om1) ** 2)


# ---------------------------------------------------------------------------
# ensembles


def _strong_segments(rng, m, motion, geom, t_burn, t_end):
    """Segment durations and Doppler shifts for m strong-collision trajectories."""
    g, v = motion.gamma, motion.v_th
    mean_n = g * t_end
    cap = int(mean_n + 10.0 * np.sqrt(mean_n) + 20) if g > 0 else 0
    if cap:
        waits = rng.exponential(1.0 / g, size=(m, cap))
        coll = np.cumsum(waits, axis=1)
        while np.any(coll[:, -1] < t_end):
            more = np.cumsum(rng.exponential(1.0 / g, size=(m, cap)), axis=1) + coll[:, -1:]
            coll = np.concatenate([coll, more], axis=1)
    else:
        coll = np.empty((m, 0))
    vel = v * rng.standard_normal((m, coll.shape[1] + 1, 3))
    coll = np.where(coll < t_end, coll, t_end)
    edges = np.sort(np.concatenate([np.zeros((m, 1)), coll, np.full((m, 1), t_burn),
                                    np.full((m, 1), t_end)], axis=1), axis=1)
    starts = edges[:, :-1]
    dur = np.diff(edges, axis=1)
    # velocity index = number of collisions at or before the segment start
    vidx = np.stack([np.searchsorted(c, st, side="right") for c, st in zip(coll, starts)])
    vidx = np.minimum(vidx, vel.shape[1] - 1)
    u = np.take_along_axis(vel, vidx[:, :, None], axis=1)
    return dur, u @ geom.q1, u @ geom.q2, (starts >= t_burn).astype(float)


def _brownian_segments(rng, m, motion, geom, t_burn, t_end, dt):
    """Uniform steps with the exact mean velocity over each step."""
    from .montecarlo import _ou_advance

    n_steps = max(1, int(np.ceil(t_end / dt)))
    grid = np.unique(np.concatenate([np.linspace(0.0, t_end, n_steps + 1), [t_burn]]))
    dur = np.diff(grid)
    u = motion.v_th * rng.standard_normal((m, 3))
    x = np.zeros((m, 3))
    mean_u = np.empty((m, dur.size, 3))
    for j, h in enumerate(dur):
        u, x_new = _ou_advance(rng, u, x, h, motion.gamma, motion.v_th)
        mean_u[:, j] = (x_new - x) / h
        x = x_new
    starts = grid[:-1]
    win = np.broadcast_to((starts >= t_burn).astype(float), (m, dur.size))
    return (np.broadcast_to(dur, (m, dur.size)), mean_u @ geom.q1, mean_u @ geom.q2, win)


def _ensemble_samples(sysm, geom, motion, configs, n, seed, burn_in, window, threads,
                      block_size, brownian_dt=None):
    """Per-trajectory windowed absorptions for each (drive, deltaR) configuration."""
    drives = [c[0] for c in configs]
    if any(d.Omega1 == 0 for d in drives):
        raise ValueError("absorption is undefined for a zero probe field")
    a0 = np.stack([_augment(generator_parts(sysm, d, dR)[0]) for d, dR in configs])
    _, b1, b2 = generator_parts(sysm, drives[0], 0.0)
    t_end = burn_in + window
    x0 = np.zeros(N_AUG)
    x0[0] = 1.0
    om1 = np.array([complex(d.Omega1) for d in drives])

    def block(rng, m, _b):
        if motion.model is VelocityModel.STRONG or motion.gamma == 0:
            dur, k1, k2, win = _strong_segments(rng, m, motion, geom, burn_in, t_end)
        else:
            dt = brownian_dt or 0.05 / motion.gamma
            dur, k1, k2, win = _brownian_segments(rng, m, motion, geom, burn_in, t_end, dt)
        xf = propagate_segments(a0, b1, b2, dur, k1, k2, win, x0)
        avg = (xf[..., N_STATE] + 1j * xf[..., N_STATE + 1]) / window
        return np.imag(avg * np.conj(om1)[None, :]) / np.abs(om1)[None, :] ** 2

    return np.concatenate(map_blocks(block, n, seed, threads, block_size), axis=0)


def _resolve_times(p, burn_in, window):
    if burn_in is None:
        burn_in = default_burn_in(p.system, p.drive)
    if window is None:
        window = 2.0 * burn_in
    if burn_in < 0 or window <= 0:
        raise ValueError("burn_in must be >= 0 and window > 0")
    return float(burn_in), float(window)


def _spectrum_from_samples(grid, samples, meta):
    n = samples.shape[0]
    mean, err = _mean_and_stderr(samples.sum(0), (samples * samples).sum(0), n)
    return Spectrum(grid, mean, stderr=err, meta=meta)


def ensemble_absorption(p, deltaR, n: int, seed: int, *, burn_in=None, window=None, threads=None,
                        block_size=BLOCK_SIZE // 4, brownian_dt=None) -> Spectrum:
    """Probe absorption versus Raman detuning averaged over n trajectories.

    The same trajectories (same seed) are used for every detuning, so
    neighbouring points share their velocity noise.
    """
    grid = check_grid(deltaR)
    if n < 2:
        raise ValueError("need at least two trajectories")
    burn_in, window = _resolve_times(p, burn_in, window)
    configs = [(p.drive, dR) for dR in grid]
    samples = _ensemble_samples(p.system, p.geom, p.motion, configs, n, seed, burn_in, window,
                                threads, block_size, brownian_dt)
    meta = {"source": f"dynamics.{p.motion.model.value}", "params": p.snapshot(), "n": int(n),
            "seed": int(seed), "burn_in": burn_in, "window": window}
    return _spectrum_from_samples(grid, samples, meta)


def ensemble_dip(p, deltaR, n: int, seed: int, *, burn_in=None, window=None, threads=None,
                 block_size=BLOCK_SIZE // 4, brownian_dt=None) -> Spectrum:
    """Two-photon part of the absorption: the run minus the same run with Omega2 = 0.

    Both runs use identical trajectories, so the one-photon background and
    its velocity noise cancel trajectory by trajectory.
    """
    from dataclasses import replace

    grid = check_grid(deltaR)
    burn_in, window = _resolve_times(p, burn_in, window)
    bare = replace(p.drive, Omega2=0.0)
    configs = [(p.drive, dR) for dR in grid] + [(bare, 0.0)]
    samples = _ensemble_samples(p.system, p.geom, p.motion, configs, n, seed, burn_in, window,
                                threads, block_size, brownian_dt)
    diff = samples[:, :-1] - samples[:, -1:]
    meta = {"source": f"dynamics.dip.{p.motion.model.value}", "params": p.snapshot(), "n": int(n),
            "seed": int(seed), "burn_in": burn_in, "window": window,
            "background": float(samples[:, -1].mean())}
    return _spectrum_from_samples(grid, diff, meta)


def ensemble_probe_scan(sysm: LambdaSystem, drive: DriveParams, geom: FieldGeometry, motion,
                        delta1, n: int, seed: int, *, burn_in=None, window=None, threads=None,
                        block_size=BLOCK_SIZE // 4, brownian_dt=None) -> Spectrum:
    """Absorption versus one-photon detuning Delta1 (Raman detuning held at 0)."""
    from dataclasses import replace

    grid = check_grid(delta1)
    if burn_in is None:
        burn_in = default_burn_in(sysm, drive)
    if window is None:
        window = 2.0 * burn_in
    configs = [(replace(drive, Delta1=float(d)), 0.0) for d in grid]
    samples = _ensemble_samples(sysm, geom, motion, configs, n, seed, float(burn_in), float(window),
                                threads, block_size, brownian_dt)
    meta = {"source": f"dynamics.probe.{motion.model.value}", "n": int(n), "seed": int(seed),
            "burn_in": burn_in, "window": window}
    return _spectrum_from_samples(grid, samples, meta)
