"""Collisional narrowing of a single optical line.

Starting from a Doppler-broadened Gaussian, raise the velocity relaxation
rate gamma at fixed Doppler width Gamma_D = 5 Gamma and watch the line
collapse towards a Lorentzian of half width Gamma + Gamma_D^2 / gamma.
The two limiting closed forms are overlaid on the extreme cases.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dickecpt import TwoLevelParams, spectrum_dicke_limit, spectrum_doppler_limit, spectrum_general
from dickecpt.analysis import fwhm

out = os.environ.get("DEMO_OUT", "demo_output")
os.makedirs(out, exist_ok=True)

Gamma, Gamma_D = 1.0, 5.0
grid = np.linspace(-25, 25, 1001)

fig, ax = plt.subplots(figsize=(6.4, 4.2))
print("Gamma_D/gamma   peak      FWHM")
for ratio in (20, 5, 2, 1, 0.5, 0.2, 0.05):
    p = TwoLevelParams.from_widths(Gamma, Gamma_D, Gamma_D / ratio)
    s = spectrum_general(p, grid)
    print(f"{ratio:10.2f}  {s.values.max():8.4f}  {fwhm(s, baseline=0.0):8.3f}")
    ax.plot(grid, s.values, label=f"$\\Gamma_D/\\gamma$ = {ratio:g}")
ax.set_xlabel(r"detuning $\Delta/\Gamma$")
ax.set_ylabel(r"$S(\Delta)$")
ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig(os.path.join(out, "two_level_family.svg"))

# the two ends of the family against their closed forms
slow = TwoLevelParams.from_widths(0.02, 1.0, 0.01)
fast = TwoLevelParams.from_widths(1.0, 5.0, 500.0)
x_slow = np.linspace(-3, 3, 301)
x_fast = np.linspace(-20, 20, 401)
fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.6))
a.plot(x_slow, spectrum_general(slow, x_slow).values, label="general")
a.plot(x_slow, spectrum_doppler_limit(slow, x_slow).values, "--", label="Gaussian")
a.set_title(r"$\gamma = 0.01\Gamma_D$")
b.plot(x_fast, spectrum_general(fast, x_fast).values, label="general")
b.plot(x_fast, spectrum_dicke_limit(fast, x_fast).values, "--", label="Lorentzian")
b.set_title(r"$\gamma = 100\Gamma_D$")
for axis in (a, b):
    axis.legend(fontsize="small")
    axis.set_xlabel(r"$\Delta$")
fig.tight_layout()
fig.savefig(os.path.join(out, "two_level_limits.svg"))
print("figures written to", out)
