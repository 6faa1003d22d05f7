"""The soliton family, its momentum and the tangent frame of the solitary manifold.

All formulas are mode-by-mode in Fourier space with D0(k) = k^2 - (k.v)^2:

    A_v(k) = -rho_hat / D0 * ((k.v) k / k^2 - v)
    E_v(k) = i (k.v) rho_hat / D0 * ((k.v) k / k^2 - v)

The k = 0 coefficient is set to zero, which is the limit for a neutral
density.  Inner products with rho use the same discrete sums as the
dynamics, so the discrete soliton is an exact travelling wave of the
discrete system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .charge import RadialChargeDensity
from .errors import VelocityOutOfRange
from .fields import FieldPair, FourierGrid
from .state import State

__all__ = [
    "SolitonParams",
    "TangentFrame",
    "rho_hat_grid",
    "check_velocity",
    "b_matrix",
    "soliton_fields",
    "soliton_state",
    "soliton_momentum",
    "stationary_residual",
    "tangent_frame",
]

V_LIMIT = 1.0 - 1e-9


@lru_cache(maxsize=16)
def rho_hat_grid(rho: RadialChargeDensity, grid: FourierGrid) -> np.ndarray:
    """rho_hat sampled on the stored half spectrum (read-only)."""
    table = grid.radial_table(rho)
    table.setflags(write=False)
    return table


def check_velocity(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)) or math.sqrt(float(v @ v)) > V_LIMIT:
        raise VelocityOutOfRange(f"|v| = {np.linalg.norm(v):.12g} is not below 1")
    return v


def b_matrix(v) -> np.ndarray:
    """B_v = sqrt(1 - v^2) (I - v v^T), the inverse Hessian of sqrt(1 + p^2) at p = gamma v."""
    v = np.asarray(v, dtype=float)
    nu = math.sqrt(1.0 - float(v @ v))
    return nu * (np.eye(3) - np.outer(v, v))


def b_matrix_inverse(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    gamma = 1.0 / math.sqrt(1.0 - float(v @ v))
    return gamma * np.eye(3) + gamma**3 * np.outer(v, v)


@dataclass(frozen=True)
class SolitonParams:
    """Coordinates on the solitary manifold: position b and velocity v."""

    b: tuple[float, float, float]
    v: tuple[float, float, float]

    def __post_init__(self):
        check_velocity(self.v)

    @property
    def b_array(self) -> np.ndarray:
        return np.array(self.b, dtype=float)

    @property
    def v_array(self) -> np.ndarray:
        return np.array(self.v, dtype=float)

    @classmethod
    def of(cls, b, v) -> "SolitonParams":
        return cls(tuple(float(x) for x in b), tuple(float(x) for x in v))


class _ModeData:
    """Per-mode quantities shared by the soliton and its v-derivatives."""

    def __init__(self, rho, v, grid):
        self.grid = grid
        self.v = v
        self.rhat = rho_hat_grid(rho, grid)
        self.k = grid.kvec
        self.kv = grid.k_dot(v)
        d0 = grid.k2 - self.kv**2
        self.inv_d0 = np.divide(1.0, d0, out=np.zeros(grid.shape), where=grid.k2 > 0)
        self.s = self.rhat * self.inv_d0

    def profile_vector(self) -> np.ndarray:
        """(k.v) k / k^2 - v at every mode (zero at k = 0)."""
        t = self.kv * self.grid.inv_k2
        return np.stack([(t * self.k[i] - self.v[i]) * self.grid.mask for i in range(3)])


def soliton_fields(rho: RadialChargeDensity, v, grid: FourierGrid, b=None) -> FieldPair:
    """Fields (E_v, A_v) of the soliton centred at ``b`` (origin by default)."""
    v = check_velocity(v)
    md = _ModeData(rho, v, grid)
    w = md.profile_vector()
    a = -md.s * w
    e = 1j * md.kv * md.s * w
    if b is not None:
        ph = grid.phase(b)
        e, a = ph * e, ph * a
    return FieldPair(e.astype(complex), a.astype(complex))


def _rho_pairing(grid: FourierGrid, rhat: np.ndarray, f: np.ndarray) -> np.ndarray:
    """<f, rho> componentwise, as the discrete Parseval sum."""
    return np.array([float(np.sum(grid.weight * (f[i] * rhat).real) * grid.measure) for i in range(3)])


def soliton_momentum(rho: RadialChargeDensity, v, grid: FourierGrid) -> np.ndarray:
    """P_v = gamma v + <A_v, rho>."""
    v = check_velocity(v)
    gamma = 1.0 / math.sqrt(1.0 - float(v @ v))
    pair = soliton_fields(rho, v, grid)
    return gamma * v + _rho_pairing(grid, rho_hat_grid(rho, grid), pair.a)


def soliton_state(rho: RadialChargeDensity, params: SolitonParams, grid: FourierGrid) -> State:
    """The phase-space point S(b, v) = (E_v(x-b), A_v(x-b), b, P_v)."""
    v = params.v_array
    pair = soliton_fields(rho, v, grid, params.b_array)
    return State(pair.e, pair.a, params.b_array.copy(), soliton_momentum(rho, v, grid))


def stationary_residual(rho: RadialChargeDensity, v, grid: FourierGrid, fields: FieldPair | None = None,
                        momentum=None) -> float:
    """Largest residual of the four stationary equations.

    E = v.grad A;  v.grad E = Lap A + Pi_s(rho v);  the velocity relation
    v = p / sqrt(1 + p^2) with p = P - <rho, A>;  and <rho, v.grad A> = 0.
    Field residuals are L2 norms; the others are Euclidean norms.
    """
    v = check_velocity(v)
    if fields is None:
        fields = soliton_fields(rho, v, grid)
    if momentum is None:
        momentum = soliton_momentum(rho, v, grid)
    rhat = rho_hat_grid(rho, grid)
    kv = grid.k_dot(v)
    kk = grid.kvec
    e, a = fields.e, fields.a
    r1 = grid.norm(e + 1j * kv * a)
    # Pi_s(rho v) mode by mode.
    div = (kk[0] * v[0] + kk[1] * v[1] + kk[2] * v[2]) * grid.inv_k2
    src = np.stack([rhat * (v[i] - div * kk[i]) * grid.mask for i in range(3)])
    r2 = grid.norm(-1j * kv * e + grid.k2 * a - src)
    p = np.asarray(momentum) - _rho_pairing(grid, rhat, a)
    r3 = float(np.linalg.norm(v - p / math.sqrt(1.0 + float(p @ p))))
    r4 = float(np.linalg.norm(_rho_pairing(grid, rhat, -1j * kv * a)))
    return max(r1, r2, r3, r4)


@dataclass
class TangentFrame:
    """tau_1..tau_6 at velocity v, stored in the moving frame.

    ``e`` and ``a`` have shape (6, 3, *grid.shape); ``r`` and ``p`` are 6x3.
    """

    v: np.ndarray
    e: np.ndarray
    a: np.ndarray
    r: np.ndarray
    p: np.ndarray

    def vector(self, j: int) -> State:
        return State(self.e[j], self.a[j], self.r[j].copy(), self.p[j].copy())

    def __len__(self):
        return 6


def _v_derivatives(md: _ModeData):
    """Closed-form d/dv_l of E_v and A_v for l = 1, 2, 3."""
    k, kv, v, s = md.k, md.kv, md.v, md.s
    k2 = md.grid.k2
    inv_d0 = md.inv_d0
    inv_k2 = md.grid.inv_k2
    mask = md.grid.mask
    big = (k2 + kv**2) * inv_d0
    de = np.empty((3, 3) + md.grid.shape, dtype=complex)
    da = np.empty((3, 3) + md.grid.shape, dtype=complex)
    for l in range(3):
        kl = k[l]
        ce_k = 2.0 * kl * kv * inv_d0
        ce_v = -kl * big
        ca_v = 2.0 * kl * kv * inv_d0
        ca_k = -kl * big * inv_k2
        for i in range(3):
            unit = 1.0 if i == l else 0.0
            de[l, i] = 1j * s * (ce_k * k[i] + ce_v * v[i] - kv * unit) * mask
            da[l, i] = s * (ca_v * v[i] + ca_k * k[i] + unit) * mask
    return de, da


def tangent_frame(rho: RadialChargeDensity, v, grid: FourierGrid) -> TangentFrame:
    """Basis of the tangent space: translations tau_1..3 and velocity derivatives tau_4..6."""
    v = check_velocity(v)
    md = _ModeData(rho, v, grid)
    pair = soliton_fields(rho, v, grid)
    de, da = _v_derivatives(md)
    e = np.empty((6, 3) + grid.shape, dtype=complex)
    a = np.empty((6, 3) + grid.shape, dtype=complex)
    r = np.zeros((6, 3))
    p = np.zeros((6, 3))
    binv = b_matrix_inverse(v)
    for j in range(3):
        # -d/dx_j is multiplication by +i k_j.
        e[j] = 1j * md.k[j] * pair.e
        a[j] = 1j * md.k[j] * pair.a
        r[j, j] = 1.0
        e[j + 3] = de[j]
        a[j + 3] = da[j]
        p[j + 3] = binv[:, j] + _rho_pairing(grid, md.rhat, da[j])
    return TangentFrame(v, e, a, r, p)
