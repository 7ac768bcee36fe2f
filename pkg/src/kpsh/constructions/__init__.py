"""Analytic potentials, the neighbourhood constructions and the pole-singularity experiment."""

from .potentials import (  # noqa: F401
    LogDistance,
    PotentialSpec,
    Quadratic,
    RadialPower,
    RegMax,
    Sum,
    abs2,
    potential_from_json,
)
from .neighbourhood import (  # noqa: F401
    ConstructionError,
    Subvariety,
    exhaustion_potential,
    glue_constant,
    local_product_potential,
    smooth_cutoff,
    torus_embedding_potential,
)
from .sibony import pole_truncation_sequence, sibony_integral  # noqa: F401
