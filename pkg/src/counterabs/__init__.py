"""Parameterized verification of controller/user systems via 01-counter abstraction."""

from .constraints import ConstraintClass, classify, parse_constraint
from .crp import decide_crp, reachable_abstract
from .protocol import (
    AbstractConfiguration,
    Configuration,
    Protocol,
    load_protocol,
    parse_protocol,
)
from .semantics import abstract_successors, concrete_successors, is_step

__all__ = [
    "AbstractConfiguration",
    "Configuration",
    "ConstraintClass",
    "Protocol",
    "abstract_successors",
    "classify",
    "concrete_successors",
    "decide_crp",
    "is_step",
    "load_protocol",
    "parse_constraint",
    "parse_protocol",
    "reachable_abstract",
]
