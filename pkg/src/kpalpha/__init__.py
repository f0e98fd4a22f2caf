"""Exact two-variable pseudodifferential operator algebra and KP-type hierarchies."""

from .pdo import PdoOp
from .pdo_inner import InnerOp, NonCommuting, NotInvertible
from .scalars import AlphaFn, ScalarSeries, TimeIndex, Truncation, TruncationMismatch

__all__ = [
    "AlphaFn",
    "InnerOp",
    "NonCommuting",
    "NotInvertible",
    "PdoOp",
    "ScalarSeries",
    "TimeIndex",
    "Truncation",
    "TruncationMismatch",
]
