"""Checking the CPT line shape against brute-force density-matrix dynamics.

Each atom follows a strong-collision trajectory; the three-level density
matrix is propagated exactly along it (the Doppler shifts are constant between
collisions) and the probe absorption is averaged over a window after the
transient.  Subtracting the same run without pump isolates the two-photon dip.
The parameters are desk-scale numbers that keep the intermediate-regime
ordering while staying cheap: Gamma1 = 100, Gamma21 = 1, gamma = 400,
Gamma_D = 5000, Gamma_D_res = 20 (so eta Gamma_D_res = 1 and HWHM = 2).

A small ensemble is used here; the acceptance suite runs 500 trajectories.
"""

import os
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dickecpt import CptParams, DriveParams, LambdaSystem, MotionParams, collinear_geometry, cpt_dip_general
from dickecpt.analysis import fit_lorentzian
from dickecpt.dynamics import ensemble_dip

out = os.environ.get("DEMO_OUT", "demo_output")
os.makedirs(out, exist_ok=True)
n = int(os.environ.get("DEMO_TRAJECTORIES", "64"))

p = CptParams(LambdaSystem.with_ground_decoherence(100.0, 1.0), DriveParams(1e-3, 1.0),
              collinear_geometry(5000.0, 4980.0), MotionParams(1.0, 400.0, "strong"))
grid = np.array([0.0, 1.0, 2.0, 3.0, 5.0])

t0 = time.perf_counter()
dip = ensemble_dip(p, grid, n, seed=2024, burn_in=5.0, window=10.0)
print(f"{n} trajectories in {time.perf_counter() - t0:.0f} s")
fit = fit_lorentzian(dip, offset=0.0, center=0.0)
ref = cpt_dip_general(p, np.linspace(0, 5, 101))
print(f"fitted HWHM {fit['hwhm']:.2f} +/- {fit['hwhm_err']:.2f}  (predicted {p.predicted_hwhm:.2f})")
print(f"depth at 0: dynamics {dip.values[0]:.3e} +/- {dip.stderr[0]:.1e}, general line shape {ref.values[0]:.3e}")

fig, ax = plt.subplots(figsize=(6.4, 4.2))
ax.errorbar(dip.detunings, dip.values, yerr=dip.stderr, fmt="o", label=f"density matrix, N={n}")
ax.plot(ref.detunings, ref.values, label="general line shape")
ax.set_xlabel(r"Raman detuning $\Delta_R$")
ax.set_ylabel("two-photon absorption")
ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(os.path.join(out, "dynamics_oracle.svg"))
