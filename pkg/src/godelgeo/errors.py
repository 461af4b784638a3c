"""Exception types shared across the package."""

from __future__ import annotations

import numpy as np


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ExprDomainError(ArithmeticError):
    """Evaluation left the domain of an operation (log/sqrt of a negative, x/0, ...)."""

    def __init__(self, message: str, point):
        self.point = None if point is None else np.asarray(point, dtype=float).copy()
        where = "" if point is None else f" at x={self.point.tolist()}"
        super().__init__(f"{message}{where}")


class LorentzViolation(ValueError):
    """H(x) = B^2 + A C <= 0 at a sampled point, so the metric is not Lorentzian there."""

    def __init__(self, x, H: float):
        self.x = np.asarray(x, dtype=float).copy()
        self.H = float(H)
        super().__init__(f"H(x) = {self.H!r} <= 0 at x={self.x.tolist()}")


class DegenerateL(ArithmeticError):
    """|b^2 + a c| fell below the configured floor on a path."""

    def __init__(self, ell: float, floor: float):
        self.ell = float(ell)
        self.floor = float(floor)
        super().__init__(f"|L| = {abs(self.ell)!r} <= floor {self.floor!r}")
