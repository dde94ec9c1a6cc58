"""Stochastic trajectory oracle for the phase-correlation factors.

Trajectories follow either an exactly sampled Ornstein-Uhlenbeck velocity
(Brownian motion) or piecewise-constant velocities redrawn from the
Maxwell-Boltzmann distribution at Poisson collision times (strong
collisions).  Ensembles are split into fixed-size blocks, each with its own
counter-based random stream keyed by (seed, block index), so results do not
depend on how many threads process the blocks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import MotionParams, Spectrum, VelocityModel, check_grid, memory_g, phase_variance
from .quadrature import decay_horizon, panel_nodes
from .twolevel import TwoLevelParams, log_kernel

BLOCK_SIZE = 2048


def resolve_threads(threads=None) -> int:
    if threads is None:
        env = os.environ.get("DICKE_CPT_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    threads = int(threads)
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Philox stream for one block of trajectories."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def block_sizes(n: int, block_size: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(int(n), block_size)
    return [block_size] * full + ([rest] if rest else [])


def map_blocks(fn, n, seed, threads=None, block_size=BLOCK_SIZE):
    """Run ``fn(rng, n_block, block_index)`` over all blocks, results in block order."""
    sizes = block_sizes(n, block_size)
    jobs = [(block_rng(seed, b), m, b) for b, m in enumerate(sizes)]
    threads = resolve_threads(threads)
    if threads == 1 or len(jobs) == 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda job: fn(*job), jobs))


# ---------------------------------------------------------------------------
# exact Ornstein-Uhlenbeck step


def _ou_step_moments(gamma, h):
    """Mean factors and covariance of (u', x' - x) given u, per unit v_th^2.

    Returns (decay, drift, var_u, cov_ux, var_x) for a step of length h.
    """
    h = np.asarray(h, dtype=float)
    if gamma == 0:
        return np.ones_like(h), h, np.zeros_like(h), np.zeros_like(h), np.zeros_like(h)
    y = gamma * h
    decay = np.exp(-y)
    drift = -np.expm1(-y) / gamma
    var_u = -np.expm1(-2.0 * y)
    cov_ux = np.expm1(-y) ** 2 / gamma
    # 2y - 3 + 4 e^-y - e^-2y, series below y = 1e-2
    small = y < 1e-2
    poly = np.where(
        small,
        _series_var_x(np.where(small, y, 0.0)),
        2.0 * y + 4.0 * np.expm1(-y) - np.expm1(-2.0 * y),
    )
    var_x = poly / gamma**2
    return decay, drift, var_u, cov_ux, var_x


def _series_var_x(y):
    return y**3 * (2.0 / 3.0 - y * (0.5 - y * (7.0 / 30.0 - y * (1.0 / 12.0 - y * 31.0 / 1260.0))))


def _ou_advance(rng, u, x, h, gamma, v_th):
    """Advance velocity and position arrays over a step h, exactly in distribution."""
    decay, drift, var_u, cov_ux, var_x = _ou_step_moments(gamma, h)
    if gamma == 0 or v_th == 0:
        return u, x + u * h
    z1 = rng.standard_normal(u.shape)
    z2 = rng.standard_normal(u.shape)
    su = np.sqrt(var_u)
    u_new = u * decay + v_th * su * z1
    cond_var = max(float(var_x - cov_ux**2 / var_u), 0.0)
    x_new = x + u * drift + v_th * (cov_ux / su) * z1 + v_th * np.sqrt(cond_var) * z2
    return u_new, x_new


def _strong_advance(rng, u, x, h, gamma, v_th):
    """Advance over h with Poisson collisions that redraw the velocity."""
    if gamma == 0 or v_th == 0:
        return u, x + u * h
    n = u.shape[0]
    remaining = np.full(n, float(h))
    u = u.copy()
    x = x.copy()
    active = np.ones(n, dtype=bool)
    while np.any(active):
        idx = np.flatnonzero(active)
        wait = rng.exponential(1.0 / gamma, size=idx.size)
        hit = wait < remaining[idx]
        step = np.where(hit, wait, remaining[idx])
        x[idx] += u[idx] * step[:, None]
        remaining[idx] -= step
        hit_idx = idx[hit]
        if hit_idx.size:
            u[hit_idx] = v_th * rng.standard_normal((hit_idx.size, u.shape[1]))
        active[idx[~hit]] = False
    return u, x


def simulate_positions(rng, motion: MotionParams, n: int, times, dim: int = 3):
    """Positions (n, len(times), dim) at sorted times, starting at the origin.

    Initial velocities are Maxwell-Boltzmann; every coordinate is an
    independent copy of the one-dimensional process.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be sorted and non-negative")
    v = motion.v_th
    u = v * rng.standard_normal((n, dim))
    x = np.zeros((n, dim))
    out = np.empty((n, times.size, dim))
    advance = _ou_advance if motion.model is VelocityModel.BROWNIAN else _strong_advance
    t_prev = 0.0
    for j, t in enumerate(times):
        h = t - t_prev
        if h > 0:
            u, x = advance(rng, u, x, h, motion.gamma, v)
        out[:, j] = x
        t_prev = t
    return out


def _basis_for(qs):
    """Orthonormal basis of span(qs) and the projected wave-vectors."""
    q = np.atleast_2d(np.asarray(qs, dtype=float))
    u, s, vt = np.linalg.svd(q, full_matrices=False)
    rank = int(np.sum(s > 1e-12 * max(s.max(), 1e-300)))
    if rank == 0:
        return np.zeros((q.shape[0], 1))
    basis = vt[:rank]
    return q @ basis.T


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Velocity/position history of one atom.

    For strong collisions ``times`` are the collision instants (plus 0 and
    the duration) and the velocity is constant on each interval.  For
    Brownian motion ``times`` is a uniform sampling grid on which velocity and
    position are exact joint samples.
    """

    times: np.ndarray
    velocities: np.ndarray
    positions: np.ndarray
    model: VelocityModel
    seed: int | None = None

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def segment_velocities(self) -> np.ndarray:
        """Constant velocity per interval that reproduces the sampled positions."""
        if self.model is VelocityModel.STRONG:
            return self.velocities[:-1]
        dt = np.diff(self.times)[:, None]
        return np.diff(self.positions, axis=0) / dt

    def position_at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, 3))
        for k in range(3):
            out[:, k] = np.interp(t, self.times, self.positions[:, k])
        return out

    def to_csv(self, path) -> None:
        """One record per segment start: t, ux, uy, uz, x, y, z."""
        header = ("trajectory dump; model={} seed={}\n"
                  "one row per segment start; velocity holds until the next row\n"
                  "t,ux,uy,uz,x,y,z").format(self.model.value, self.seed)
        data = np.column_stack([self.times, self.velocities, self.positions])
        np.savetxt(path, data, delimiter=",", header=header, fmt="%.17g")


def sample_trajectory(motion: MotionParams, duration: float, seed: int, *, dt=None) -> Trajectory:
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    v, g = motion.v_th, motion.gamma
    u0 = v * rng.standard_normal(3)
    if motion.model is VelocityModel.STRONG:
        times = [0.0]
        vels = [u0]
        if g > 0 and v > 0:
            t = rng.exponential(1.0 / g)
            while t < duration:
                times.append(t)
                vels.append(v * rng.standard_normal(3))
                t += rng.exponential(1.0 / g)
        times.append(duration)
        vels.append(vels[-1])
        times = np.asarray(times)
        vels = np.asarray(vels)
        pos = np.zeros_like(vels)
        pos[1:] = np.cumsum(vels[:-1] * np.diff(times)[:, None], axis=0)
        return Trajectory(times, vels, pos, motion.model, seed)
    if dt is None:
        dt = 0.05 / g if g > 0 else duration
    n_steps = max(1, int(np.ceil(duration / dt)))
    times = np.linspace(0.0, duration, n_steps + 1)
    vels = np.empty((n_steps + 1, 3))
    pos = np.zeros((n_steps + 1, 3))
    vels[0] = u0
    u, x = u0[None, :], np.zeros((1, 3))
    for k in range(n_steps):
        u, x = _ou_advance(rng, u, x, times[k + 1] - times[k], g, v)
        vels[k + 1], pos[k + 1] = u[0], x[0]
    return Trajectory(times, vels, pos, motion.model, seed)


# ---------------------------------------------------------------------------
# phase factor <exp(i Phi(tau))>


@dataclass
class PhaseFactorEstimate:
    tau_grid: np.ndarray
    mean_re: np.ndarray
    mean_im: np.ndarray
    stderr_re: np.ndarray
    stderr_im: np.ndarray
    n_samples: int
    meta: dict = field(default_factory=dict)

    @property
    def mean(self) -> np.ndarray:
        return self.mean_re + 1j * self.mean_im

    @property
    def stderr(self) -> np.ndarray:
        return np.hypot(self.stderr_re, self.stderr_im)


def closure_factor(q_mag: float, motion: MotionParams, tau):
    """Gaussian closure exp(-<Phi^2>/2)."""
    return np.exp(-0.5 * phase_variance(q_mag, motion, tau))


def _mean_and_stderr(sums, sumsq, n):
    """Mean and its standard error (the per-sample jackknife of a mean)."""
    mean = sums / n
    var = np.maximum(sumsq / n - mean**2, 0.0) * n / (n - 1)
    return mean, np.sqrt(var / n)


def phase_factor_estimate(q, motion: MotionParams, tau_grid, n: int, seed: int, *,
                          t0: float = 0.0, threads=None, block_size=BLOCK_SIZE) -> PhaseFactorEstimate:
    """Monte Carlo average of exp(i q.[r(t0 + tau) - r(t0)]) over n trajectories."""
    if n < 100:
        raise ValueError("phase_factor_estimate needs n >= 100")
    tau = np.asarray(tau_grid, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau grid must be non-negative")
    qv = np.asarray(q, dtype=float)
    q_mag = float(np.linalg.norm(qv)) if qv.ndim else abs(float(qv))
    order = np.argsort(tau, kind="stable")
    times = np.concatenate([[t0], t0 + tau[order]]) if t0 > 0 else tau[order]

    def block(rng, m, _b):
        pos = simulate_positions(rng, motion, m, times, dim=1)[:, :, 0]
        if t0 > 0:
            pos = pos[:, 1:] - pos[:, :1]
        phi = q_mag * pos
        c, s = np.cos(phi), np.sin(phi)
        return np.stack([c.sum(0), s.sum(0), (c * c).sum(0), (s * s).sum(0)])

    parts = map_blocks(block, n, seed, threads, block_size)
    tot = np.sum(np.stack(parts), axis=0)
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    tot = tot[:, inv]
    m_re, e_re = _mean_and_stderr(tot[0], tot[2], n)
    m_im, e_im = _mean_and_stderr(tot[1], tot[3], n)
    # tau = 0 is exactly 1
    zero = tau == 0
    m_re[zero], m_im[zero], e_re[zero], e_im[zero] = 1.0, 0.0, 0.0, 0.0
    return PhaseFactorEstimate(tau, m_re, m_im, e_re, e_im, int(n),
                               meta={"model": motion.model.value, "seed": seed, "t0": t0})


# ---------------------------------------------------------------------------
# Monte Carlo two-level spectrum


def mc_tau_nodes(p: TwoLevelParams, detunings, *, tau_max=None, eps=1e-10):
    """Kronrod nodes/weights covering [0, tau_max] at the transform resolution."""
    grid = check_grid(detunings)
    if tau_max is None:
        if p.Gamma <= 0 and p.Gamma_D <= 0:
            raise ValueError("non-decaying kernel: Gamma and Gamma_D are both zero")
        tau_max = decay_horizon(lambda t: float(log_kernel(p, t)), eps=eps,
                                t0=1.0 / max(p.Gamma, p.Gamma_D))
    w_max = float(np.max(np.abs(grid)))
    h = tau_max / 16
    if w_max > 0:
        h = min(h, 0.25 * 2 * np.pi / w_max)
    h = min(h, 0.5 / max(p.Gamma, p.Gamma_D))
    n_pan = int(np.ceil(tau_max / h))
    nodes, wk, _ = panel_nodes(np.linspace(0.0, tau_max, n_pan + 1))
    return nodes.ravel(), wk.ravel(), tau_max


def mc_two_level_spectrum(p: TwoLevelParams, detunings, n: int, seed: int, *, tau_max=None,
                          threads=None, block_size=BLOCK_SIZE) -> Spectrum:
    """Spectrum from the empirical phase factor, with per-trajectory error propagation.

    Each trajectory yields its own transform
    S_i(Delta) = sum_j w_j exp(-Gamma tau_j) Re[exp(-i Delta tau_j) exp(i Phi_i(tau_j))];
    the spectrum is their mean and the error its standard error.
    """
    grid = check_grid(detunings)
    if n < 100:
        raise ValueError("mc_two_level_spectrum needs n >= 100")
    nodes, weights, tau_max = mc_tau_nodes(p, grid, tau_max=tau_max)
    order = np.argsort(nodes)
    nodes, weights = nodes[order], weights[order]
    damp = weights * np.exp(-p.Gamma * nodes)
    cos_m = damp[:, None] * np.cos(nodes[:, None] * grid[None, :])
    sin_m = damp[:, None] * np.sin(nodes[:, None] * grid[None, :])
    q_mag = p.geom.q1_mag
    motion = p.motion

    def block(rng, m, _b):
        pos = simulate_positions(rng, motion, m, nodes, dim=1)[:, :, 0]
        phi = q_mag * pos
        tail = np.exp(1j * phi[:, -1]).sum()
        s_i = np.cos(phi) @ cos_m + np.sin(phi) @ sin_m
        return np.stack([s_i.sum(0), (s_i * s_i).sum(0)]), tail

    parts = map_blocks(block, n, seed, threads, block_size)
    tot = np.sum(np.stack([pt[0] for pt in parts]), axis=0)
    # pooled phase factor at tau_max; only a tail above the sampling noise counts
    tail = abs(sum(pt[1] for pt in parts)) / n * np.exp(-p.Gamma * tau_max)
    if tail > max(1e-3, 4.0 / np.sqrt(n)):
        suggestion = tau_max * max(2.0, np.log(tail / 1e-4))
        raise ValueError(f"tau grid too short: phase factor still {tail:.2e} at tau_max={tau_max:.4g}; "
                         f"try tau_max >= {suggestion:.4g}")
    mean, err = _mean_and_stderr(tot[0], tot[1], n)
    return Spectrum(grid, mean, stderr=err,
                    meta={"source": f"montecarlo.{motion.model.value}", "params": p.snapshot(),
                          "n": int(n), "seed": int(seed), "tau_max": tau_max})


# ---------------------------------------------------------------------------
# CPT phase kernel <exp(i K)>


def cross_correlation_integral(gamma: float, tau, tau1, tau3):
    """int_{-tau1-tau}^0 dt1 int_{-tau3-tau}^{-tau3} dt2 exp(-gamma |t2 - t1|).

    Closed form gamma^2 I = 2 gamma tau - (1 - e^{-gamma tau})(e^{-gamma tau3} + e^{-gamma (tau1 - tau3)}),
    valid for 0 <= tau3 <= tau1.
    """
    tau, tau1, tau3 = (np.asarray(a, dtype=float) for a in (tau, tau1, tau3))
    if np.any(tau3 < 0) or np.any(tau3 > tau1 + 1e-15 * np.abs(tau1)):
        raise ValueError("need 0 <= tau3 <= tau1")
    if gamma == 0:
        return tau * (tau1 + tau)
    g = gamma
    # 2 g tau - (1 - e^{-g tau})(e^{-g tau3} + e^{-g(tau1 - tau3)})
    #   = 2 G(g tau) + (1 - e^{-g tau}) (2 - e^{-g tau3} - e^{-g(tau1-tau3)})
    one_m = -np.expm1(-g * tau)
    rest = -np.expm1(-g * tau3) - np.expm1(-g * (tau1 - tau3))
    return (2.0 * memory_g(g * tau) + one_m * rest) / g**2


def k_variance(p, tau, tau1, tau3):
    """<K^2> assembled from the two single-field variances and the cross term."""
    m = p.motion
    v2 = m.v_th**2
    var2 = phase_variance(p.geom.q2_mag, m, tau)
    var1 = phase_variance(p.geom.q1_mag, m, np.asarray(tau) + np.asarray(tau1))
    cross = p.geom.q1_dot_q2 * v2 * cross_correlation_integral(m.gamma, tau, tau1, tau3)
    return var2 + var1 - 2.0 * cross


@dataclass
class CptKernelEstimate:
    triplets: np.ndarray        # (m, 3) rows of (tau, tau1, tau3)
    mean_re: np.ndarray
    mean_im: np.ndarray
    stderr_re: np.ndarray
    stderr_im: np.ndarray
    closure: np.ndarray         # exp(-<K^2>/2)
    cross_mean: np.ndarray      # empirical <Phi2 Phi1>
    cross_stderr: np.ndarray
    cross_closed: np.ndarray    # q1.q2 v^2 I
    n_samples: int

    @property
    def mean(self):
        return self.mean_re + 1j * self.mean_im


def mc_cpt_kernel_estimate(p, triplets, n: int, seed: int, *, threads=None,
                           block_size=BLOCK_SIZE) -> CptKernelEstimate:
    """Estimate <exp(iK)> with K = Phi2(t - tau3, tau) - Phi1(t, tau1 + tau).

    By stationarity t = tau + tau1, so the positions needed are at
    0, tau1 - tau3, tau1 - tau3 + tau and tau1 + tau.
    """
    if n < 1000:
        raise ValueError("mc_cpt_kernel_estimate needs n >= 1000")
    trip = np.atleast_2d(np.asarray(triplets, dtype=float))
    if trip.shape[1] != 3 or np.any(trip < 0) or np.any(trip[:, 2] > trip[:, 1]):
        raise ValueError("triplets must be rows (tau, tau1, tau3) with 0 <= tau3 <= tau1")
    qp = _basis_for([p.geom.q1, p.geom.q2])
    q1p, q2p = qp[0], qp[1]
    dim = qp.shape[1]
    m_trip = trip.shape[0]

    def block(rng, m, _b):
        acc = np.zeros((6, m_trip))
        for i, (tau, tau1, tau3) in enumerate(trip):
            pts = np.array([0.0, tau1 - tau3, tau1 - tau3 + tau, tau1 + tau])
            order = np.argsort(pts, kind="stable")
            pos_sorted = simulate_positions(rng, p.motion, m, pts[order], dim=dim)
            pos = np.empty_like(pos_sorted)
            pos[:, order] = pos_sorted
            phi2 = (pos[:, 2] - pos[:, 1]) @ q2p
            phi1 = (pos[:, 3] - pos[:, 0]) @ q1p
            k = phi2 - phi1
            c, s = np.cos(k), np.sin(k)
            prod = phi2 * phi1
            acc[:, i] = [c.sum(), s.sum(), (c * c).sum(), (s * s).sum(), prod.sum(), (prod * prod).sum()]
        return acc

    parts = map_blocks(block, n, seed, threads, block_size)
    tot = np.sum(np.stack(parts), axis=0)
    m_re, e_re = _mean_and_stderr(tot[0], tot[2], n)
    m_im, e_im = _mean_and_stderr(tot[1], tot[3], n)
    x_mean, x_err = _mean_and_stderr(tot[4], tot[5], n)
    tau, tau1, tau3 = trip.T
    closure = np.exp(-0.5 * k_variance(p, tau, tau1, tau3))
    cross_closed = p.geom.q1_dot_q2 * p.motion.v_th**2 * cross_correlation_integral(
        p.motion.gamma, tau, tau1, tau3)
    return CptKernelEstimate(trip, m_re, m_im, e_re, e_im, closure, x_mean, x_err,
                             cross_closed, int(n))


def empirical_autocorrelation(motion: MotionParams, lags, n: int, seed: int, *, threads=None):
    """Mean and standard error of u_x(t) u_x(0) over n independent trajectories."""
    lags = np.asarray(lags, dtype=float)
    order = np.argsort(lags)

    def block(rng, m, _b):
        v, g = motion.v_th, motion.gamma
        u = v * rng.standard_normal((m, 1))
        u0 = u.copy()
        x = np.zeros((m, 1))
        advance = _ou_advance if motion.model is VelocityModel.BROWNIAN else _strong_advance
        t_prev = 0.0
        out = np.empty((2, lags.size))
        for j in order:
            h = lags[j] - t_prev
            if h > 0:
                u, x = advance(rng, u, x, h, g, v)
            prod = (u * u0)[:, 0]
            out[:, j] = prod.sum(), (prod * prod).sum()
            t_prev = lags[j]
        return out

    tot = np.sum(np.stack(map_blocks(block, n, seed, threads)), axis=0)
    return _mean_and_stderr(tot[0], tot[1], n)
