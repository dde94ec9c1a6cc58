"""Width budget of a room-temperature Rb CPT resonance in a buffer gas.

For copropagating beams the two-photon wave-vector mismatch is the hyperfine
splitting over c, giving a CPT wavelength of about 4.4 cm.  The Dicke factor
eta = 2 pi Lambda / lambda_CPT is then tiny for any realistic mean free path
Lambda, and the residual Doppler width all but disappears from the line.
"""

import numpy as np

from dickecpt.analysis import format_report, narrowing_report
from dickecpt.cpt import rb_like_params

print(format_report(narrowing_report(rb_like_params(1e-6))))

print("Lambda [um]   eta        residual Doppler [Hz]   its share of the HWHM [Hz]")
for lam in np.geomspace(0.1e-6, 10e-6, 5):
    rep = narrowing_report(rb_like_params(lam))
    res = rep["Gamma_D_res"] / (2 * np.pi)
    print(f"{lam * 1e6:10.2f}  {rep['eta']:.2e}  {res:20.0f}  {rep['eta'] * res:22.3f}")

# A small tilt between the beams adds about q * theta to |q1 - q2|; eta and Gamma_D_res
# both grow with it, so the broadening goes as theta^2 and a milliradian already adds kHz.
for theta in (0.0, 1e-3, 3e-3):
    rep = narrowing_report(rb_like_params(1e-6, theta=theta))
    print(f"theta = {theta:.0e} rad: eta Gamma_D_res = {rep['eta'] * rep['Gamma_D_res'] / (2 * np.pi):.2f} Hz")
