"""Numerics for omega^q-plurisubharmonic functions on flat Kahler domains.

Submodules: ``forms`` (exterior algebra of (p,q)-forms), ``positivity``
(eigenvalue margins and positivity cones), ``fields`` (finite-difference
calculus on grids), ``heat`` (spectral smoothing on the torus),
``constructions`` (neighbourhood potentials and the Sibony experiment) and
``cli`` (batch front end).
"""

__version__ = "0.1.0"

from .positivity import (  # noqa: F401
    hermitian_eigenvalues,
    is_strongly_q_convex,
    kyfan_min_trace,
    nu_wedge_omega_k,
    psh_margin,
    strong_positivity_certificate,
    weak_positivity_test,
)
from .fields import GridDomain, HermitianField, ScalarField, ddc_field, psh_margin_field, regularized_max  # noqa: F401
from .heat import heat_smooth, smoothing_preserves_psh  # noqa: F401
