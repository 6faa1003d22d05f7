"""The linearization of the dynamics at a soliton, in the co-moving frame.

For X = (e, a, r, pi) and soliton velocity v, with transport velocity w,

    de/dt  = w.grad e - Lap a + Pi_s(rho B_v <rho, a>) + Pi_s((r.grad rho) v) - Pi_s(rho B_v pi)
    da/dt  = -e + w.grad a
    dr/dt  = -B_v <rho, a> + B_v pi
    dpi/dt = <rho, grad(v.a)> - <r.grad rho, grad(v.A_v)>

where B_v = sqrt(1 - v^2)(I - v v^T).  The last term is G r with the
constant symmetric matrix G[j, l] = <d_j rho, d_l (v.A_v)>.

``integrate_frozen`` evolves dX/dt = A_{v,v} X with the modified wave group
(free rotation plus transport by v) as exact integrating factor, so only the
bounded rho couplings go through the Runge-Kutta stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .charge import RadialChargeDensity
from .dynamics import LawsonRK4, wrap_time
from .errors import StepUnstable, WrapGuard
from .fields import FourierGrid, norm_weighted
from .soliton import b_matrix, check_velocity, rho_hat_grid, soliton_fields, tangent_frame
from .state import State
from .symplectic import frame_pairings, omega, omega_matrix, transversal_projector

__all__ = [
    "LinearizedOperator",
    "apply_linearized",
    "linearized_hamiltonian",
    "check_skew_symmetry",
    "perturbation_norm",
    "linearization_remainder",
    "ModulationRates",
    "modulation_rates",
    "velocity_derivative_frames",
    "FrozenTrajectory",
    "integrate_frozen",
]


class LinearizedOperator:
    """A_{v,w} with its mode data precomputed for one (rho, v, grid)."""

    def __init__(self, rho: RadialChargeDensity, v, grid: FourierGrid, w=None):
        self.v = check_velocity(v)
        self.w = self.v.copy() if w is None else np.asarray(w, dtype=float).reshape(3)
        self.rho = rho
        self.grid = grid
        self.rhat = np.ascontiguousarray(rho_hat_grid(rho, grid))
        self.bmat = b_matrix(self.v)
        self.k1d = tuple(np.ascontiguousarray(k) for k in grid.k1d)
        self.weight = np.ascontiguousarray(grid.weight)
        self.inv_k2 = np.ascontiguousarray(grid.inv_k2)
        self._unit = tuple(np.ones(len(k), dtype=complex) for k in self.k1d)
        # rho_hat Pi_s(k) v, the profile of the (r.grad rho) v source.
        self.rho_v = kernels.transverse_source(self.rhat, *self._unit, *self.k1d, self.inv_k2, self.v, 1.0)
        av = soliton_fields(rho, self.v, grid).a
        va = (self.v[0] * av[0] + self.v[1] * av[1] + self.v[2] * av[2]).real
        kk = grid.kvec
        base = self.weight * self.rhat * va * grid.measure
        self.g_matrix = np.array([[float(np.sum(base * kk[j] * kk[l])) for l in range(3)] for j in range(3)])
        self._zero = grid.zeros()
        self._zero.setflags(write=False)

    # -- pieces ---------------------------------------------------------
    def rho_pairings(self, a: np.ndarray):
        """<rho, a> and the matrix m[j, i] = <rho, d_j a_i> (both real)."""
        s, m = kernels.coupling_pairings(self.rhat, *self._unit, self.weight, *self.k1d, a)
        return s * self.grid.measure, m * self.grid.measure

    def coupling(self, x: State) -> State:
        """Every term of A_{v,w} except transport and the free rotation."""
        rho_a, m = self.rho_pairings(x.a)
        bp = self.bmat @ (rho_a - x.p)
        e = kernels.transverse_source(self.rhat, *self._unit, *self.k1d, self.inv_k2, bp, 1.0)
        kr = self.grid.k_dot(x.q)
        e = e - 1j * kr * self.rho_v
        rdot = -bp
        pidot = m @ self.v - self.g_matrix @ x.q
        return State(e, self._zero, rdot, pidot)

    def apply(self, x: State) -> State:
        out = self.coupling(x)
        kw = self.grid.k_dot(self.w)
        e = out.e - 1j * kw * x.e + self.grid.k2 * x.a
        a = -x.e - 1j * kw * x.a
        return State(e, a, out.q, out.p)

    def hamiltonian(self, x: State) -> float:
        grid = self.grid
        rho_a, _ = self.rho_pairings(x.a)
        kw = grid.k_dot(self.w)
        # \int a (w.grad) e = sum conj(a) (-i k.w) e over the full spectrum.
        transport = grid.inner(-1j * kw * x.e, x.a)
        # <(r.grad rho) v, a> and <rho B_v pi, a>.
        kr = grid.k_dot(x.q)
        r_term = grid.inner(-1j * kr * self.rho_v, x.a)
        pi_term = float((self.bmat @ x.p) @ rho_a)
        return (
            0.5 * (grid.inner(x.e, x.e) + grid.grad_norm(x.a) ** 2)
            + transport
            + 0.5 * float((self.bmat @ rho_a) @ rho_a)
            + 0.5 * float(x.p @ self.bmat @ x.p)
            + r_term
            - pi_term
            + 0.5 * float(x.q @ self.g_matrix @ x.q)
        )


def apply_linearized(rho: RadialChargeDensity, v, w, x: State, grid: FourierGrid) -> State:
    """A_{v,w} X."""
    return LinearizedOperator(rho, v, grid, w).apply(x)


def linearized_hamiltonian(rho: RadialChargeDensity, v, w, x: State, grid: FourierGrid) -> float:
    """The quadratic form H_{v,w}(X) whose symplectic gradient is A_{v,w} X.

    1/2 (|e|^2 + |grad a|^2) + \\int a (w.grad) e + 1/2 B_v<rho,a>.<rho,a>
    + 1/2 pi.B_v pi + <(r.grad rho) v, a> - <rho B_v pi, a> + 1/2 r.G r
    """
    return LinearizedOperator(rho, v, grid, w).hamiltonian(x)


def check_skew_symmetry(rho: RadialChargeDensity, v, w, x1: State, x2: State, grid: FourierGrid) -> float:
    """|omega(A X1, X2) + omega(X1, A X2)| / (|X1| |X2|)."""
    op = LinearizedOperator(rho, v, grid, w)
    num = omega(grid, op.apply(x1), x2) + omega(grid, x1, op.apply(x2))
    den = x1.norm(grid) * x2.norm(grid)
    return abs(num) / den if den > 0 else 0.0


def linearization_remainder(rho: RadialChargeDensity, v, x: State, grid: FourierGrid, eps: float) -> float:
    """|N(eps X) - eps A_{v,v} X| in the energy norm, with N the nonlinear field in the moving frame.

    N(X) = F(S + X) - F(S) plus transport of the field slots by v, where F is
    the full vector field and S the soliton at the origin.  The remainder is
    quadratic in ``eps`` when A_{v,v} is the derivative of N at zero.
    """
    from .dynamics import CoupledSystem
    from .soliton import SolitonParams, soliton_state

    v = check_velocity(v)
    system = CoupledSystem(rho, grid)
    base = soliton_state(rho, SolitonParams.of((0.0, 0.0, 0.0), v), grid)
    kv = grid.k_dot(v)
    f0 = system.rhs(base)
    f1 = system.rhs(base.axpy(eps, x))
    moved = State(f1.e - f0.e - 1j * kv * eps * x.e, f1.a - f0.a - 1j * kv * eps * x.a, f1.q - f0.q, f1.p - f0.p)
    return (moved - LinearizedOperator(rho, v, grid).apply(x) * eps).norm(grid)


def _rate_difference(system, base: State, z: State) -> State:
    """F(S + Z) - F(S) with the particle velocity difference computed without cancellation.

    The velocity P/sqrt(1 + P^2) is of order one while its change is of order
    |Z|; subtracting two rounded velocities would leave an absolute error of
    one ulp of v, which swamps the second-order terms the modulation
    equations are made of.  The difference is rewritten through
    gamma_S - gamma_Y = -(2 p_S.delta + delta.delta) / (gamma_S + gamma_Y).
    """
    y = base.axpy(1.0, z)
    fy = system.rhs(y)
    fs = system.rhs(base)
    meas = system.grid.measure
    s_y, _ = kernels.coupling_pairings(system.rhat, *system.phases(y.q), system.weight, *system.k1d, y.a)
    s_s, _ = kernels.coupling_pairings(system.rhat, *system.phases(base.q), system.weight, *system.k1d, base.a)
    p_s = base.p - s_s * meas
    delta = z.p - (s_y - s_s) * meas
    p_y = p_s + delta
    g_s = math.sqrt(1.0 + float(p_s @ p_s))
    g_y = math.sqrt(1.0 + float(p_y @ p_y))
    dq = delta / g_y - p_s * (2.0 * float(p_s @ delta) + float(delta @ delta)) / ((g_s + g_y) * g_y * g_s)
    return State(fy.e - fs.e, fy.a - fs.a, dq, fy.p - fs.p)


@dataclass
class ModulationRates:
    """Time derivatives of the soliton parameters along the flow.

    ``c_dot`` is db/dt - v and ``v_dot`` is dv/dt, both exact derivatives of
    the symplectic projection (no differencing in time).
    """

    c_dot: np.ndarray
    v_dot: np.ndarray
    forcing: np.ndarray


def velocity_derivative_frames(rho: RadialChargeDensity, v, grid: FourierGrid, step: float = 1e-4):
    """Tangent frames at v +- step e_l, for the d tau_j / d v_l terms of ``modulation_rates``."""
    v = check_velocity(v)
    out = []
    for l in range(3):
        shift = np.zeros(3)
        shift[l] = step
        out.append((tangent_frame(rho, v + shift, grid), tangent_frame(rho, v - shift, grid), step))
    return out


def modulation_rates(rho: RadialChargeDensity, v, z: State, grid: FourierGrid,
                     derivative_frames=None, system=None) -> ModulationRates:
    """(db/dt - v, dv/dt) for the state S(b, v) + Z, with Z in the moving frame and transversal.

    Differentiating omega(Z, tau_j(v)) = 0 along the flow gives six linear
    equations M (c_dot, v_dot) = f with

        f_j          = omega(F(S + Z) - F(S) + v.grad Z, tau_j)
        M[j, l]      = omega(tau_l, tau_j) - omega(d_l Z, tau_j)
        M[j, l + 3]  = omega(tau_{l+3}, tau_j) - omega(Z, d tau_j / d v_l)

    The forcing f is quadratic in Z: its linear part is omega(A_{v,v} Z, tau_j),
    which vanishes on transversal Z.  ``derivative_frames`` may be reused
    across nearby velocities; they only enter a term of order |Z| |v_dot|.
    """
    from .dynamics import CoupledSystem
    from .soliton import SolitonParams, soliton_state

    v = check_velocity(v)
    if system is None:
        system = CoupledSystem(rho, grid)
    if derivative_frames is None:
        derivative_frames = velocity_derivative_frames(rho, v, grid)
    frame = tangent_frame(rho, v, grid)
    base = soliton_state(rho, SolitonParams.of((0.0, 0.0, 0.0), v), grid)
    diff = _rate_difference(system, base, z)
    kv = grid.k_dot(v)
    moved = State(diff.e - 1j * kv * z.e, diff.a - 1j * kv * z.a, diff.q, diff.p)
    forcing = frame_pairings(grid, frame, moved)
    matrix = omega_matrix(rho, v, grid, frame).full.T.copy()
    zero = np.zeros(3)
    for l in range(3):
        shifted = State(-1j * grid.kvec[l] * z.e, -1j * grid.kvec[l] * z.a, zero, zero)
        matrix[:, l] -= frame_pairings(grid, frame, shifted)
        plus, minus, step = derivative_frames[l]
        matrix[:, l + 3] -= (frame_pairings(grid, plus, z) - frame_pairings(grid, minus, z)) / (2.0 * step)
    rates = np.linalg.solve(matrix, forcing)
    return ModulationRates(rates[:3], rates[3:], forcing)


def perturbation_norm(grid: FourierGrid, x: State, alpha: float) -> float:
    """|e|_{0,alpha} + |a|_{1,alpha} + |r| + |pi| with weights (1+|y|)^alpha."""
    return (
        norm_weighted(grid, x.e, alpha, 0)
        + norm_weighted(grid, x.a, alpha, 1)
        + float(np.linalg.norm(x.q))
        + float(np.linalg.norm(x.p))
    )


@dataclass
class FrozenTrajectory:
    times: np.ndarray
    weighted_norm: np.ndarray
    energy: np.ndarray
    secular: np.ndarray
    alpha: float
    states: list = field(default_factory=list)

    def columns(self) -> dict[str, np.ndarray]:
        out = {"t": self.times, "norm_weighted": self.weighted_norm, "H_lin": self.energy}
        for l in range(6):
            out[f"omega_tau{l + 1}"] = self.secular[:, l]
        return out


def integrate_frozen(rho: RadialChargeDensity, v, x0: State, grid: FourierGrid, t_final: float, dt: float = 0.01,
                     project_first: bool = False, delta: float = 0.25, output_every: float | None = None,
                     keep_states: bool = False, check_wrap: bool = True) -> FrozenTrajectory:
    """Evolve dX/dt = A_{v,v} X and record |X(t)|_{-2-delta}, H_{v,v}(X(t)) and omega(tau_l, X(t)).

    With ``project_first`` the initial data is replaced by its transversal
    projection, which removes the secular (linearly growing) modes.
    """
    v = check_velocity(v)
    if not dt > 0 or not t_final >= 0:
        raise ValueError("dt must be positive and t_final non-negative")
    if check_wrap and t_final > wrap_time(grid, rho):
        raise WrapGuard(f"t_final={t_final} exceeds the wrap-around time {wrap_time(grid, rho):.3f}")
    frame = tangent_frame(rho, v, grid)
    gram = omega_matrix(rho, v, grid, frame)
    if project_first:
        x0 = transversal_projector(rho, v, grid, x0, frame, gram)
    op = LinearizedOperator(rho, v, grid)
    stepper = LawsonRK4(grid, dt, velocity=v)
    alpha = -(2.0 + delta)
    nsteps = int(round(t_final / dt))
    stride = nsteps if not output_every else max(1, int(round(output_every / dt)))
    stride = max(stride, 1)
    rows: dict[str, list] = {"t": [], "n": [], "h": [], "s": []}
    states = []
    h0 = op.hamiltonian(x0)
    scale = max(abs(h0), x0.norm(grid) ** 2, 1e-300)

    def record(t, x):
        energy = op.hamiltonian(x)
        if not math.isfinite(energy) or abs(energy - h0) > 1e-4 * scale:
            raise StepUnstable(f"linearized energy drifted at t={t:.4f}; reduce dt")
        rows["t"].append(t)
        rows["n"].append(perturbation_norm(grid, x, alpha))
        rows["h"].append(energy)
        rows["s"].append(-frame_pairings(grid, frame, x))
        if keep_states:
            states.append(x.copy())

    x = x0.copy()
    record(0.0, x)
    for i in range(1, nsteps + 1):
        x = stepper.step(x, op.coupling)
        if i % stride == 0 or i == nsteps:
            record(i * dt, x)
    return FrozenTrajectory(
        times=np.array(rows["t"]),
        weighted_norm=np.array(rows["n"]),
        energy=np.array(rows["h"]),
        secular=np.array(rows["s"]).reshape(-1, 6),
        alpha=alpha,
        states=states,
    )
