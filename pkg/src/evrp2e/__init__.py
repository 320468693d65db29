"""Solvers for the two-echelon electric vehicle routing problem and its variants."""

from .instance import (
    DistancePolicy, Fleet, Instance, InstanceError, Node, NodeRole, PdTransformConfig, Variant,
    apply_pd_transform, expand_copies, load_instance, loads_instance, parse_instance,
)
from .solution import Evaluation, Route, Solution, Violation, evaluate

__all__ = [
    "DistancePolicy", "Evaluation", "Fleet", "Instance", "InstanceError", "Node", "NodeRole",
    "PdTransformConfig", "Route", "Solution", "Variant", "Violation", "apply_pd_transform",
    "evaluate", "expand_copies", "load_instance", "loads_instance", "parse_instance",
]

__version__ = "0.1.0"
