"""Private read-update-write (PRUW) over storage-constrained databases."""

from .codec import SchemeParams, make_params
from .ffmath import DEFAULT_MODULUS, PrimeField, field_new
from .planner import AllocationPlan, BasicPoint, HullCurve, enumerate_basic_points, lower_hull, plan, total_cost
from .sim import ModelSpec, SystemState, build, measure, restore, snapshot

__all__ = [
    "AllocationPlan",
    "BasicPoint",
    "DEFAULT_MODULUS",
    "HullCurve",
    "ModelSpec",
    "PrimeField",
    "SchemeParams",
    "SystemState",
    "build",
    "enumerate_basic_points",
    "field_new",
    "lower_hull",
    "make_params",
    "measure",
    "plan",
    "restore",
    "snapshot",
    "total_cost",
]

__version__ = "0.1.0"
