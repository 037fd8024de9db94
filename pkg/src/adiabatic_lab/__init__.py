"""Numerical laboratory for adiabatic theorems of non-unitary evolutions.

The modules build on each other in this order:

``linop``           dense operator primitives
``family``          time-dependent families ``t -> A(t)``
``evolution``       propagators ``U_T(t, s)``
``spectra``         spectral windows, gaps and stability probes
``riesz``           Riesz projections and their derivatives
``adiabatic``       defect sweeps and rate fits
``superadiabatic``  the ``E_k`` chain and ``P_eps``
``transport``       discrete-ordinates slab model
``cli``             JSON scenario runner
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AdiabaticLabError,
    ConfigError,
    ContourError,
    IntegrationFailure,
    InvalidInputError,
    NonUniformGapError,
    NumericalError,
)
from .family import OperatorFamily, ScalarFamily, lambda_d  # noqa: E402
from .evolution import propagate, propagate_checkpoints  # noqa: E402
from .riesz import Contour, ProjectionFamily, riesz_projection, track_projections  # noqa: E402
from .adiabatic import DefectTable, RateFit, defect_sweep, rate_fit  # noqa: E402
from .gallery import get_example, list_examples  # noqa: E402

__all__ = [
    "AdiabaticLabError", "ConfigError", "ContourError", "IntegrationFailure", "InvalidInputError",
    "NonUniformGapError", "NumericalError", "OperatorFamily", "ScalarFamily", "lambda_d",
    "propagate", "propagate_checkpoints", "Contour", "ProjectionFamily", "riesz_projection",
    "track_projections", "DefectTable", "RateFit", "defect_sweep", "rate_fit", "get_example",
    "list_examples", "__version__",
]
