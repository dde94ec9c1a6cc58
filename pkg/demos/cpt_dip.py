"""CPT dip narrowed by collisions, and what the closed form gets wrong.

The two-photon resonance only sees the wave-vector difference |q1 - q2|, so
the residual Doppler width Gamma_D_res is tiny and the Dicke factor
eta = Gamma_D_res / gamma makes it tinier still.  The full numerical line shape
(general) and the intermediate-regime Lorentzian agree on the width
Gamma21 + eta Gamma_D_res.  Their depths do not agree: the closed-form
prefactor 1/[Gamma1 + q1.(q1-q2) v^2/gamma]^2 drops the large Doppler
suppression of the one-photon legs, which the general kernel keeps.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dickecpt import (
    CptParams,
    DriveParams,
    LambdaSystem,
    MotionParams,
    collinear_geometry,
    cpt_dip_general,
    cpt_dip_intermediate,
    geometry_from_angle,
)
from dickecpt.analysis import fwhm

out = os.environ.get("DEMO_OUT", "demo_output")
os.makedirs(out, exist_ok=True)

system = LambdaSystem.with_ground_decoherence(300.0, 1.0)
drive = DriveParams(1e-3, 1.0)
p = CptParams(system, drive, collinear_geometry(3e4, 3e4 - 30.0), MotionParams(1.0, 900.0))
print(f"eta = {p.eta:.4f}, predicted HWHM = {p.predicted_hwhm:.3f}")

grid = np.linspace(-10, 10, 201)
gen = cpt_dip_general(p, grid)
closed = cpt_dip_intermediate(p, grid)
print(f"general:     depth {gen.values[100]:.3e}, HWHM {0.5 * fwhm(gen, baseline=0.0):.3f}")
print(f"closed form: depth {closed.values[100]:.3e}, HWHM {0.5 * fwhm(closed, baseline=0.0):.3f}")

fig, ax = plt.subplots(figsize=(6.4, 4.2))
ax.plot(grid, gen.values / -gen.values.min(), label="general (normalized)")
ax.plot(grid, closed.values / -closed.values.min(), "--", label="closed form (normalized)")
ax.set_xlabel(r"Raman detuning $\Delta_R/\Gamma_{21}$")
ax.set_ylabel("dip / depth")
ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(os.path.join(out, "cpt_dip_shapes.svg"))

# Tilting equal-magnitude beams by theta makes |q1 - q2| ~ q theta, and both
# eta and Gamma_D_res grow with theta, so the excess width goes as theta^2.
thetas = np.geomspace(1e-3, 1e-2, 6)
excess = []
for th in thetas:
    pt = CptParams(system, drive, geometry_from_angle(3e4, 3e4, th), MotionParams(1.0, 900.0))
    w = pt.predicted_hwhm
    s = cpt_dip_general(pt, np.linspace(-10 * w, 10 * w, 801))
    excess.append(0.5 * fwhm(s, baseline=0.0) - system.Gamma21)
slope = np.polyfit(np.log(thetas), np.log(excess), 1)[0]
print(f"log-log slope of the excess width against theta: {slope:.3f}")

fig, ax = plt.subplots(figsize=(5, 3.8))
ax.loglog(thetas, excess, "o-")
ax.set_xlabel(r"beam angle $\theta$ [rad]")
ax.set_ylabel(r"HWHM $-\ \Gamma_{21}$")
ax.set_title(f"slope {slope:.2f}")
fig.tight_layout()
fig.savefig(os.path.join(out, "cpt_theta_sweep.svg"))
