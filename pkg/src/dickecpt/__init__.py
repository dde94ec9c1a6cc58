"""Dicke narrowing of two-level and coherent-population-trapping line shapes."""

from .model import (
    DickeParameter,
    DriveParams,
    FieldGeometry,
    LambdaSystem,
    MotionParams,
    Spectrum,
    VelocityModel,
    collinear_geometry,
    dicke_parameter,
    geometry_from_angle,
    memory_g,
    to_angular,
)
from .twolevel import (
    Regime,
    TwoLevelParams,
    regime_classify,
    spectrum_dicke_limit,
    spectrum_doppler_limit,
    spectrum_general,
)
from .cpt import (
    CptParams,
    RamanKernel,
    cpt_dip_collinear,
    cpt_dip_general,
    cpt_dip_intermediate,
    cpt_kernel,
    full_probe_spectrum,
    kernel_plateau,
)

__version__ = "0.1.0"
