"""Metric spaces, semicontractions and metric functionals."""

from .functionals import (
    DualVector,
    MetricFunctional,
    busemann_functional,
    disk_busemann,
    internal_functional,
    lipschitz_excess,
    norming_functional,
)
from .maps import (
    Affine,
    Blaschke,
    ConeLinear,
    Congruence,
    MapElement,
    MaxPlusMatrix,
    Mobius,
    Orbit,
    SemicontractionSystem,
    Topical,
    check_nonexpansive,
    check_topical,
    make_map,
    orbit,
)
from .metrics import (
    Banach,
    HilbertCone,
    MaxPlus,
    MetricSpace,
    PoincareDisk,
    PosDef,
    distance,
    operator_norm,
    space_from_dict,
    vector_norm,
)
from .spd import op_norm_sym, positive_part, random_spd, random_sym, sym_exp, sym_log, sym_sqrt, symmetrize


def apply_map(f: MapElement, x):
    """Image of a point (or batch of points) under a map element."""
    return f(x)


__all__ = [name for name in dir() if not name.startswith("_")]
