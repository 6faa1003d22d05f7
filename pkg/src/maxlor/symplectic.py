"""Symplectic form, the Gram matrix of the tangent frame and the two projections.

omega(Y1, Y2) = \\int (E1.A2 - E2.A1) dx + q1.P2 - q2.P1.

``project_to_manifold`` finds sigma = (b, v) such that Y - S(sigma) is
symplectically orthogonal to the tangent space at S(sigma); the six
orthogonality residuals are driven to zero by damped Newton iteration with a
central-difference Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charge import RadialChargeDensity
from .errors import NoConvergence, OmegaDegenerate, VelocityOutOfRange
from .fields import FourierGrid
from .soliton import (
    SolitonParams,
    TangentFrame,
    V_LIMIT,
    check_velocity,
    soliton_fields,
    soliton_momentum,
    tangent_frame,
)
from .state import State

__all__ = [
    "omega",
    "OmegaMatrix",
    "omega_matrix",
    "frame_pairings",
    "transversal_projector",
    "ProjectionResult",
    "project_to_manifold",
]


def omega(grid: FourierGrid, y1: State, y2: State) -> float:
    return (
        grid.inner(y1.e, y2.a)
        - grid.inner(y2.e, y1.a)
        + float(y1.q @ y2.p)
        - float(y2.q @ y1.p)
    )


def frame_pairings(grid: FourierGrid, frame: TangentFrame, x: State) -> np.ndarray:
    """The six numbers omega(x, tau_j)."""
    out = np.empty(6)
    for j in range(6):
        out[j] = (
            grid.inner(x.e, frame.a[j])
            - grid.inner(frame.e[j], x.a)
            + float(x.q @ frame.p[j])
            - float(frame.r[j] @ x.p)
        )
    return out


@dataclass
class OmegaMatrix:
    """Gram matrix full[j, l] = omega(tau_j, tau_l) and its upper-right block."""

    full: np.ndarray
    plus: np.ndarray
    plus_inverse: np.ndarray
    zero_block_residual: float
    antisymmetry_residual: float
    eigenvalues: np.ndarray


def omega_matrix(rho: RadialChargeDensity, v, grid: FourierGrid, frame: TangentFrame | None = None) -> OmegaMatrix:
    v = check_velocity(v)
    if frame is None:
        frame = tangent_frame(rho, v, grid)
    full = np.zeros((6, 6))
    for j in range(6):
        for l in range(j + 1, 6):
            val = omega(grid, frame.vector(j), frame.vector(l))
            full[j, l] = val
            full[l, j] = -val
    plus = full[:3, 3:]
    scale = max(np.abs(plus).max(), 1e-300)
    zero_res = max(np.abs(full[:3, :3]).max(), np.abs(full[3:, 3:]).max()) / scale
    anti = np.abs(full + full.T).max() / scale
    eig = np.linalg.eigvalsh(0.5 * (plus + plus.T))
    if not np.all(eig > 0):
        raise OmegaDegenerate(f"omega+ is not positive definite at v={v}: eigenvalues {eig}")
    return OmegaMatrix(full, plus.copy(), np.linalg.inv(plus), float(zero_res), float(anti), eig)


def transversal_projector(rho: RadialChargeDensity, v, grid: FourierGrid, x: State,
                          frame: TangentFrame | None = None, gram: OmegaMatrix | None = None) -> State:
    """Remove the tangent component: the result is omega-orthogonal to every tau_j.

    With G[j, m] = omega(tau_j, tau_m), writing x - sum_j c_j tau_j and
    asking omega(., tau_m) = 0 gives c = G^{-T} omega(x, tau).
    """
    v = check_velocity(v)
    if frame is None:
        frame = tangent_frame(rho, v, grid)
    if gram is None:
        gram = omega_matrix(rho, v, grid, frame)
    coeff = np.linalg.solve(gram.full.T, frame_pairings(grid, frame, x))
    e = x.e - np.tensordot(coeff, frame.e, axes=1)
    a = x.a - np.tensordot(coeff, frame.a, axes=1)
    return State(e, a, x.q - coeff @ frame.r, x.p - coeff @ frame.p)


@dataclass
class ProjectionResult:
    sigma: SolitonParams
    z: State
    iterations: int
    residual: float


class _ResidualMap:
    """sigma -> omega(T_{-b} Y - S_v, tau_j(v)) with per-velocity caching."""

    def __init__(self, rho, grid, y):
        self.rho, self.grid, self.y = rho, grid, y
        self._cache: dict[tuple, tuple] = {}

    def _velocity_data(self, v):
        key = tuple(v)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        grid, y = self.grid, self.y
        frame = tangent_frame(self.rho, v, grid)
        sol = soliton_fields(self.rho, v, grid)
        pv = soliton_momentum(self.rho, v, grid)
        # Field part of omega(T_{-b}Y, tau_j) = Re sum w exp(-ik.b) g_j(k).
        g = np.einsum("ixyz,jixyz->jxyz", y.e, np.conj(frame.a)) - np.einsum(
            "ixyz,jixyz->jxyz", y.a, np.conj(frame.e)
        )
        g *= grid.weight * grid.measure
        sol_part = np.array(
            [grid.inner(sol.e, frame.a[j]) - grid.inner(frame.e[j], sol.a) for j in range(6)]
        )
        data = (frame, pv, g, sol_part)
        if len(self._cache) > 16:
            self._cache.clear()
        self._cache[key] = data
        return data

    def __call__(self, b, v) -> np.ndarray:
        frame, pv, g, sol_part = self._velocity_data(v)
        ph = np.conj(self.grid.phase(b))
        field = np.array([float(np.sum((ph * g[j]).real)) for j in range(6)]) - sol_part
        r = self.y.q - b
        pi = self.y.p - pv
        return field + frame.p @ r - frame.r @ pi

    def perturbation(self, b, v) -> State:
        ph = np.conj(self.grid.phase(b))
        sol = soliton_fields(self.rho, v, self.grid)
        pv = soliton_momentum(self.rho, v, self.grid)
        return State(ph * self.y.e - sol.e, ph * self.y.a - sol.a, self.y.q - b, self.y.p - pv)


def project_to_manifold(rho: RadialChargeDensity, y: State, grid: FourierGrid, guess: SolitonParams | None = None,
                        tol: float = 1e-10, max_iter: int = 50, fd_step: float = 1e-5) -> ProjectionResult:
    """Symplectic orthogonal projection of ``y`` onto the solitary manifold.

    Returns sigma, the perturbation Z = Y - S(sigma) in the moving frame
    y = x - b, the number of Newton iterations and the final residual
    max_j |omega(Z, tau_j)|.  Raises NoConvergence when the residual is not
    below ``tol * ||Y||`` after ``max_iter`` iterations.
    """
    if guess is None:
        p = np.asarray(y.p, dtype=float)
        v0 = p / math.sqrt(1.0 + float(p @ p))
        b0 = np.asarray(y.q, dtype=float)
    else:
        v0, b0 = guess.v_array, guess.b_array
    v0 = check_velocity(v0)
    target = tol * max(y.norm(grid), 1e-300)
    fmap = _ResidualMap(rho, grid, y)
    x = np.concatenate([b0, v0])
    res = fmap(x[:3], x[3:])
    size = float(np.max(np.abs(res)))
    it = 0
    while size >= target:
        if it >= max_iter:
            raise NoConvergence(f"projection residual {size:.3e} after {it} iterations")
        it += 1
        jac = np.empty((6, 6))
        for i in range(6):
            dx = np.zeros(6)
            dx[i] = fd_step
            xp, xm = x + dx, x - dx
            jac[:, i] = (fmap(xp[:3], xp[3:]) - fmap(xm[:3], xm[3:])) / (2.0 * fd_step)
        step = np.linalg.solve(jac, res)
        lam = 1.0
        while True:
            trial = x - lam * step
            if np.linalg.norm(trial[3:]) <= V_LIMIT:
                new = fmap(trial[:3], trial[3:])
                new_size = float(np.max(np.abs(new)))
                if new_size < size:
                    break
            lam *= 0.5
            if lam < 1e-4:
                if np.linalg.norm(trial[3:]) > V_LIMIT:
                    raise VelocityOutOfRange("projection iterate left the region |v| < 1")
                raise NoConvergence(f"damped Newton stalled at residual {size:.3e}")
        x, res, size = trial, new, new_size
    sigma = SolitonParams.of(x[:3], x[3:])
    return ProjectionResult(sigma, fmap.perturbation(x[:3], x[3:]), it, size)
