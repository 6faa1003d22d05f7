"""Phase-space vectors (E, A, q, P) and perturbations (e, a, r, pi) share one layout."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import FieldPair, FourierGrid


@dataclass
class State:
    """Fields as half-spectrum coefficient arrays plus two particle 3-vectors.

    For a full state the slots hold (E, A, q, P); for a perturbation they
    hold (e, a, r, pi) in the moving frame.
    """

    e: np.ndarray
    a: np.ndarray
    q: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, grid: FourierGrid) -> "State":
        return cls(grid.zeros(), grid.zeros(), np.zeros(3), np.zeros(3))

    @classmethod
    def from_fields(cls, pair: FieldPair, q, p) -> "State":
        return cls(pair.e, pair.a, np.asarray(q, dtype=float).copy(), np.asarray(p, dtype=float).copy())

    @property
    def fields(self) -> FieldPair:
        return FieldPair(self.e, self.a)

    def copy(self) -> "State":
        return State(self.e.copy(), self.a.copy(), self.q.copy(), self.p.copy())

    def __add__(self, o: "State") -> "State":
        return State(self.e + o.e, self.a + o.a, self.q + o.q, self.p + o.p)

    def __sub__(self, o: "State") -> "State":
        return State(self.e - o.e, self.a - o.a, self.q - o.q, self.p - o.p)

    def __neg__(self) -> "State":
        return State(-self.e, -self.a, -self.q, -self.p)

    def __mul__(self, s: float) -> "State":
        return State(self.e * s, self.a * s, self.q * s, self.p * s)

    __rmul__ = __mul__

    def axpy(self, s: float, o: "State") -> "State":
        """self + s * o."""
        return State(self.e + s * o.e, self.a + s * o.a, self.q + s * o.q, self.p + s * o.p)

    def translated(self, grid: FourierGrid, shift) -> "State":
        """Fields shifted by ``shift`` in space; particle slots untouched."""
        ph = grid.phase(shift)
        return State(ph * self.e, ph * self.a, self.q.copy(), self.p.copy())

    def norm(self, grid: FourierGrid) -> float:
        """Energy-space norm sqrt(|e|^2 + |grad a|^2 + |q|^2 + |p|^2)."""
        return math.sqrt(
            grid.inner(self.e, self.e)
            + grid.grad_norm(self.a) ** 2
            + float(self.q @ self.q)
            + float(self.p @ self.p)
        )
