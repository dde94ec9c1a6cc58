"""Line-shape metrics: peak location, full width at half maximum, Lorentzian fits."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares

from .model import Spectrum, dicke_parameter


class MetricError(ValueError):
    """A metric cannot be extracted from the given spectrum."""


@dataclass
class LineMetrics:
    """Position and signed value of the extremum, its FWHM and an optional fit.

    ``peak_value`` is measured from zero, not from the baseline; for a dip it
    is the (signed) minimum.
    """

    peak_position: float
    peak_value: float
    fwhm: float
    baseline: float
    is_dip: bool
    fit: dict | None = None
    regime: str | None = None

    @property
    def hwhm(self) -> float:
        return 0.5 * self.fwhm

    @property
    def depth(self) -> float:
        """Extremum measured from the baseline (negative for dips)."""
        return self.peak_value - self.baseline

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_baseline(spec: Spectrum, edge_fraction: float = 0.1) -> float:
    """Median of the outer ``edge_fraction`` of points on each side."""
    n = len(spec)
    k = max(1, int(round(edge_fraction * n)))
    return float(np.median(np.concatenate([spec.values[:k], spec.values[-k:]])))


def _orient(spec: Spectrum, baseline, is_dip):
    if baseline is None:
        baseline = estimate_baseline(spec)
    rel = spec.values - baseline
    if is_dip is None:
        is_dip = abs(rel.min()) > abs(rel.max())
    return (-rel if is_dip else rel), float(baseline), bool(is_dip)


def peak(spec: Spectrum, *, baseline=None, is_dip=None) -> tuple[float, float]:
    """Extremum position and value, refined by the parabola through three points.

    Dips are recognised automatically from the sign of the feature relative to
    the baseline.  An extremum on the grid edge is an error.
    """
    if len(spec) < 3:
        raise MetricError("peak needs at least three points")
    y, baseline, is_dip = _orient(spec, baseline, is_dip)
    x = spec.detunings
    i = int(np.argmax(y))
    if y[i] <= 0:
        raise MetricError("flat spectrum: no feature above the baseline")
    if i == 0 or i == len(x) - 1:
        raise MetricError("no interior extremum")
    x0, x1, x2 = x[i - 1:i + 2]
    y0, y1, y2 = y[i - 1:i + 2]
    # vertex of the interpolating parabola on a possibly non-uniform grid
    d = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / d
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / d
    xc, yc = x1, y1
    if a < 0:
        xv = -b / (2 * a)
        if x0 <= xv <= x2:
            xc, yc = xv, y1 + a * (xv - x1) * (xv + x1) + b * (xv - x1)
    sign = -1.0 if is_dip else 1.0
    return float(xc), float(baseline + sign * yc)


def fwhm(spec: Spectrum, *, baseline=None, is_dip=None) -> float:
    """Full width at half of the extremum (half depth for dips).

    Crossings are linearly interpolated.  ``baseline`` defaults to the
    far-wing median; pass 0 for spectra that vanish far from resonance.
    """
    y, baseline, is_dip = _orient(spec, baseline, is_dip)
    x = spec.detunings
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    if half <= 0:
        raise MetricError("flat spectrum: no feature above the baseline")
    left = np.flatnonzero(y[:i] < half)
    right = np.flatnonzero(y[i:] < half)
    if left.size == 0:
        raise MetricError("half maximum not crossed on the left")
    if right.size == 0:
        raise MetricError("half maximum not crossed on the right")
    j = left[-1]
    xl = x[j] + (half - y[j]) * (x[j + 1] - x[j]) / (y[j + 1] - y[j])
    k = i + right[0]
    xr = x[k - 1] + (half - y[k - 1]) * (x[k] - x[k - 1]) / (y[k] - y[k - 1])
    return float(xr - xl)


def lorentzian(x, center, hwhm, amplitude, offset=0.0):
    """amplitude * hwhm / ((x - center)^2 + hwhm^2) + offset."""
    return amplitude * hwhm / ((x - center) ** 2 + hwhm**2) + offset


def fit_lorentzian(spec: Spectrum, *, offset=None, center=None, weighted=True, max_nfev=2000) -> dict:
    """Least-squares Lorentzian fit started from the measured peak and width.

    ``offset`` or ``center`` given as numbers are held fixed.  With
    ``weighted`` and a spectrum carrying errors the residuals are divided by
    them.  Returns the parameters, their standard errors, the RMS residual
    and the reduced chi^2.
    """
    if len(spec) < 5:
        raise MetricError("Lorentzian fit needs at least five points")
    x, y = spec.detunings, spec.values
    b0 = estimate_baseline(spec) if offset is None else float(offset)
    try:
        c0, v0 = peak(spec, baseline=b0)
    except MetricError:
        i = int(np.argmax(np.abs(y - b0)))
        c0, v0 = x[i], y[i]
    if center is not None:
        c0 = float(center)
    try:
        w0 = 0.5 * fwhm(spec, baseline=b0)
    except MetricError:
        w0 = 0.25 * (x[-1] - x[0])
    a0 = (v0 - b0) * w0
    sigma = spec.stderr if (weighted and spec.stderr is not None and np.all(spec.stderr > 0)) else None

    names, p0 = [], []
    if center is None:
        names.append("center")
        p0.append(c0)
    names += ["hwhm", "amplitude"]
    p0 += [w0, a0]
    if offset is None:
        names.append("offset")
        p0.append(b0)

    def unpack(theta):
        d = dict(zip(names, theta))
        return d.get("center", c0), d["hwhm"], d["amplitude"], d.get("offset", b0)

    def resid(theta):
        r = lorentzian(x, *unpack(theta)) - y
        return r / sigma if sigma is not None else r

    scale = np.where(np.asarray(p0) != 0, np.abs(p0), max(w0, 1e-300))
    sol = least_squares(resid, p0, x_scale=scale, method="trf", max_nfev=max_nfev,
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if sol.status <= 0:
        raise MetricError(f"Lorentzian fit did not converge: last iterate {dict(zip(names, sol.x))}")
    c, w, a, b = unpack(sol.x)
    dof = max(len(x) - len(p0), 1)
    chi2 = float(np.sum(sol.fun**2))
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac)
        if sigma is None:
            cov *= chi2 / dof
        errs = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        errs = np.full(len(p0), np.nan)
    if w < 0:
        w, a = -w, -a
    raw = lorentzian(x, c, w, a, b) - y
    out = {"center": float(c), "hwhm": float(w), "amplitude": float(a), "offset": float(b),
           "rms_residual": float(np.sqrt(np.mean(raw**2))), "reduced_chi2": chi2 / dof}
    for n, e in zip(names, errs):
        out[f"{n}_err"] = float(e)
    return out


def line_metrics(spec: Spectrum, *, baseline=None, is_dip=None, fit=False, regime=None) -> LineMetrics:
    y, base, dip = _orient(spec, baseline, is_dip)
    pos, val = peak(spec, baseline=base, is_dip=dip)
    width = fwhm(spec, baseline=base, is_dip=dip)
    fit_res = fit_lorentzian(spec, offset=base) if fit else None
    return LineMetrics(peak_position=pos, peak_value=val, fwhm=width, baseline=base, is_dip=dip,
                       fit=fit_res, regime=None if regime is None else str(getattr(regime, "value", regime)))


def narrowing_report(p) -> dict:
    """Width budget of the CPT resonance: residual Doppler width and its Dicke-narrowed share."""
    dp = dicke_parameter(p.geom, p.motion)
    res = p.Gamma_D_res
    g21 = p.system.Gamma21
    return {
        "Gamma_D": p.Gamma_D,
        "Gamma_D_res": res,
        "mean_free_path": dp.mean_free_path,
        "wavelength_cpt": dp.wavelength_cpt,
        "eta": dp.eta,
        "gamma": p.motion.gamma,
        "Gamma21": g21,
        "predicted_hwhm": g21 + dp.eta * res,
        "naive_residual_doppler_width": res,
        "flags": p.flags(),
    }


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def format_report(report: dict) -> str:
    """Flat ``key = value`` lines, floats with 17 significant digits."""
    lines = []
    for k, v in _flatten(report):
        if isinstance(v, float):
            v = f"{v:.17g}"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def report_json(report: dict) -> str:
    return json.dumps(report, default=float, sort_keys=True)
