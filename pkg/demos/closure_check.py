"""Is the accumulated Doppler phase Gaussian?

The analytic line shapes replace <exp(i Phi)> by exp(-<Phi^2>/2).  For
Brownian (Ornstein-Uhlenbeck) velocities the phase is a linear functional of
a Gaussian process and the replacement is exact; for strong collisions it is
only approximate.  Sample both velocity models and compare.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dickecpt import MotionParams
from dickecpt.montecarlo import closure_factor, phase_factor_estimate

out = os.environ.get("DEMO_OUT", "demo_output")
os.makedirs(out, exist_ok=True)

q, v_th, gamma = 1.0, 1.0, 1.0        # Gamma_D = gamma: far from either limit
taus = np.linspace(0, 4, 25)

fig, ax = plt.subplots(figsize=(6.4, 4.2))
for model, marker in (("brownian", "o"), ("strong", "s")):
    m = MotionParams(v_th, gamma, model)
    est = phase_factor_estimate(q, m, taus, 50_000, seed=7)
    z = (est.mean_re - closure_factor(q, m, taus)) / np.where(est.stderr_re > 0, est.stderr_re, np.inf)
    print(f"{model:9s} max |z| against the closure: {np.max(np.abs(z)):.1f}")
    ax.errorbar(taus, est.mean_re, yerr=est.stderr_re, fmt=marker, ms=3, label=f"{model} (MC)")
ax.plot(taus, closure_factor(q, MotionParams(v_th, gamma), taus), "k-", label="Gaussian closure")
ax.set_yscale("log")
ax.set_xlabel(r"$\tau$")
ax.set_ylabel(r"$\langle e^{i\Phi(\tau)}\rangle$")
ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(os.path.join(out, "closure_check.svg"))
# strong collisions leave a heavier tail: atoms that happen not to collide keep their phase coherent
