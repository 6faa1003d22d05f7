"""Nonlinear evolution of the coupled field and particle system.

Equations of motion in Fourier coefficients (grad -> -i k):

    dE/dt = k^2 A - Pi_s(k) (rho_hat exp(i k.q) qdot)
    dA/dt = -E
    dq/dt = p / sqrt(1 + p^2),   p = P - A_rho(q)
    dP/dt = [grad(qdot.A)]_rho(q)

A_rho(q) is the pairing of A with the translated profile rho(x - q).  All
particle and field coupling reduces to sums of rho_hat(k) exp(i k.q) against
field coefficients, so there is no interpolation error.

Time stepping is Lawson RK4: the free wave rotation is integrated exactly per
mode and only the coupling terms go through the Runge-Kutta stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .charge import RadialChargeDensity
from .errors import StepUnstable, WrapGuard
from .fields import FourierGrid, transversality_defect
from .soliton import rho_hat_grid
from .state import State

__all__ = [
    "CoupledSystem",
    "LawsonRK4",
    "Trajectory",
    "hamiltonian",
    "rhs",
    "default_dt",
    "wrap_time",
    "evolve",
    "time_reversed",
]

ENERGY_DRIFT_LIMIT = 1e-4


def default_dt(grid: FourierGrid) -> float:
    """0.01 min(1, 2L / (pi n)), scaled to the fastest retained mode."""
    return 0.01 * min(1.0, 2.0 * grid.L / (math.pi * grid.n))


def wrap_time(grid: FourierGrid, rho: RadialChargeDensity) -> float:
    """Time before radiation leaving the particle re-enters through the periodic boundary."""
    return grid.L - 2.0 * rho.support_radius


class WaveRotation:
    """exp(L t) for the linear part: the free rotation times exp(-i (k.v) t).

    With ``velocity`` = 0 this is the free Maxwell group; otherwise it is the
    modified wave group of the moving frame.
    """

    def __init__(self, grid: FourierGrid, t: float, velocity=None):
        k = np.sqrt(grid.k2)
        self.c = np.cos(k * t)
        self.ks = k * np.sin(k * t)
        self.sk = np.where(k > 0, np.sin(k * t) / np.where(k > 0, k, 1.0), t)
        v = np.zeros(3) if velocity is None else np.asarray(velocity, dtype=float)
        self.phases = tuple(np.exp(-1j * grid.k1d[i] * v[i] * t) for i in range(3))

    @property
    def factors(self):
        return (self.c, self.ks, self.sk) + self.phases

    def __call__(self, y: State) -> State:
        e, a = kernels.rotate(self.c, self.ks, self.sk, *self.phases, y.e, y.a)
        return State(e, a, y.q, y.p)


class LawsonRK4:
    """Lawson (integrating factor) RK4 for Y' = L Y + N(Y) with exact exp(L t).

    One step:
        k1 = N(Y)
        k2 = N(U(h/2)(Y + h/2 k1))
        k3 = N(U(h/2) Y + h/2 k2)
        k4 = N(U(h) Y + h U(h/2) k3)
        Y+ = U(h)(Y + h/6 k1) + h/3 U(h/2)(k2 + k3) + h/6 k4

    N must return increments whose A part is zero; each stage is then a
    single fused kernel call.
    """

    def __init__(self, grid: FourierGrid, dt: float, velocity=None):
        self.dt = float(dt)
        self.half = WaveRotation(grid, 0.5 * dt, velocity)
        self.full = WaveRotation(grid, dt, velocity)

    def step(self, y: State, nonlinear: Callable[[State], State]) -> State:
        h = self.dt
        half, full = self.half.factors, self.full.factors
        comb = kernels.lawson_combine
        k1 = nonlinear(y)
        e, a = comb(half, y.e, y.a, 0.5 * h, k1.e, None, 0.0, None, None, 0.0, None)
        k2 = nonlinear(State(e, a, y.q + 0.5 * h * k1.q, y.p + 0.5 * h * k1.p))
        e, a = comb(half, y.e, y.a, 0.0, None, None, 0.0, None, None, 0.5 * h, k2.e)
        k3 = nonlinear(State(e, a, y.q + 0.5 * h * k2.q, y.p + 0.5 * h * k2.p))
        e, a = comb(full, y.e, y.a, 0.0, None, half, h, k3.e, None, 0.0, None)
        k4 = nonlinear(State(e, a, y.q + h * k3.q, y.p + h * k3.p))
        e, a = comb(full, y.e, y.a, h / 6.0, k1.e, half, h / 3.0, k2.e, k3.e, h / 6.0, k4.e)
        dq = (k1.q + 2.0 * (k2.q + k3.q) + k4.q) * (h / 6.0)
        dp = (k1.p + 2.0 * (k2.p + k3.p) + k4.p) * (h / 6.0)
        return State(e, a, y.q + dq, y.p + dp)


class CoupledSystem:
    """Precomputed mode data for one (rho, grid) pair."""

    def __init__(self, rho: RadialChargeDensity, grid: FourierGrid):
        self.rho = rho
        self.grid = grid
        self.rhat = np.ascontiguousarray(rho_hat_grid(rho, grid))
        self.weight = np.ascontiguousarray(grid.weight)
        self.inv_k2 = np.ascontiguousarray(grid.inv_k2)
        self.k1d = tuple(np.ascontiguousarray(k) for k in grid.k1d)
        self._zero = grid.zeros()
        self._zero.setflags(write=False)

    def phases(self, q):
        return tuple(np.exp(1j * self.k1d[i] * q[i]) for i in range(3))

    def particle_terms(self, y: State):
        """(kinetic momentum p, velocity qdot, force dP/dt, axis phases at q)."""
        ph = self.phases(y.q)
        s, m = kernels.coupling_pairings(self.rhat, *ph, self.weight, *self.k1d, y.a)
        meas = self.grid.measure
        p = y.p - s * meas
        qdot = p / math.sqrt(1.0 + float(p @ p))
        force = (m * meas) @ qdot
        return p, qdot, force, ph

    def coupling(self, y: State) -> State:
        """The non-rotational part of the vector field."""
        _, qdot, force, ph = self.particle_terms(y)
        src = kernels.transverse_source(self.rhat, *ph, *self.k1d, self.inv_k2, qdot, -1.0)
        return State(src, self._zero, qdot, force)

    def rhs(self, y: State) -> State:
        out = self.coupling(y)
        return State(out.e + self.grid.k2 * y.a, -y.e, out.q, out.p)

    def hamiltonian(self, y: State) -> float:
        p, _, _, _ = self.particle_terms(y)
        field_part = 0.5 * (self.grid.inner(y.e, y.e) + self.grid.grad_norm(y.a) ** 2)
        return field_part + math.sqrt(1.0 + float(p @ p))


def hamiltonian(rho: RadialChargeDensity, y: State, grid: FourierGrid) -> float:
    """Total energy 1/2 |E|^2 + 1/2 |grad A|^2 + sqrt(1 + (P - A_rho(q))^2)."""
    return CoupledSystem(rho, grid).hamiltonian(y)


def rhs(rho: RadialChargeDensity, y: State, grid: FourierGrid) -> State:
    """Time derivative of ``y`` under the coupled equations."""
    return CoupledSystem(rho, grid).rhs(y)


def time_reversed(y: State) -> State:
    """The time-reversal map (E, A, q, P) -> (E, -A, q, -P).

    Evolving R(Y(t)) forward for time t returns R(Y(0)).
    """
    return State(y.e.copy(), -y.a, y.q.copy(), -y.p)


@dataclass
class Trajectory:
    """Output samples of a run; ``states`` is empty unless requested."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    qdot: np.ndarray
    energy: np.ndarray
    e_norm: np.ndarray
    grad_a_norm: np.ndarray
    transversality: np.ndarray
    states: list = field(default_factory=list)
    dt: float = 0.0

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])) / abs(self.energy[0]))

    def columns(self) -> dict[str, np.ndarray]:
        out = {"t": self.times}
        for name, arr in (("q", self.q), ("P", self.p), ("qdot", self.qdot)):
            for i, ax in enumerate("xyz"):
                out[f"{name}_{ax}"] = arr[:, i]
        out["H"] = self.energy
        out["E_norm"] = self.e_norm
        out["gradA_norm"] = self.grad_a_norm
        return out


def evolve(rho: RadialChargeDensity, y0: State, grid: FourierGrid, t_final: float, dt: float | None = None,
           output_every: float | None = None, keep_states: bool = False,
           observer: Callable[[float, State], None] | None = None,
           guard_time: float | None = None, check_wrap: bool = True) -> Trajectory:
    """Integrate the coupled system from ``y0`` up to ``t_final``.

    Outputs are taken every ``output_every`` time units (rounded to whole
    steps; by default only the endpoints).  At each output the energy, speed
    and transversality are recorded and ``observer(t, Y)`` is called.

    Raises WrapGuard if ``t_final`` exceeds the wrap-around time of the box
    and StepUnstable if the relative energy drift passes 1e-4 or the state
    stops being finite.
    """
    if dt is None:
        dt = default_dt(grid)
    if not dt > 0 or not t_final >= 0:
        raise ValueError("dt must be positive and t_final non-negative")
    limit = wrap_time(grid, rho) if guard_time is None else guard_time
    if check_wrap and t_final > limit:
        raise WrapGuard(f"t_final={t_final} exceeds the wrap-around time {limit:.3f}")
    nsteps = int(round(t_final / dt))
    stride = nsteps if not output_every else max(1, int(round(output_every / dt)))
    stride = max(stride, 1)

    system = CoupledSystem(rho, grid)
    stepper = LawsonRK4(grid, dt)
    rows: dict[str, list] = {k: [] for k in ("t", "q", "p", "qdot", "H", "e", "a", "div")}
    states = []
    h0 = system.hamiltonian(y0)

    def record(t, y):
        _, qdot, _, _ = system.particle_terms(y)
        energy = system.hamiltonian(y)
        if not (np.isfinite(energy) and np.all(np.isfinite(qdot))):
            raise StepUnstable(f"non-finite state at t={t:.4f}")
        if float(np.linalg.norm(qdot)) >= 1.0:
            raise StepUnstable(f"particle speed reached 1 at t={t:.4f}")
        drift = abs(energy - h0) / abs(h0)
        if drift > ENERGY_DRIFT_LIMIT:
            raise StepUnstable(f"relative energy drift {drift:.2e} at t={t:.4f}; reduce dt")
        rows["t"].append(t)
        rows["q"].append(y.q.copy())
        rows["p"].append(y.p.copy())
        rows["qdot"].append(qdot)
        rows["H"].append(energy)
        rows["e"].append(grid.norm(y.e))
        rows["a"].append(grid.grad_norm(y.a))
        rows["div"].append(max(transversality_defect(grid, y.e), transversality_defect(grid, y.a)))
        if keep_states:
            states.append(y.copy())
        if observer is not None:
            observer(t, y)

    y = y0.copy()
    record(0.0, y)
    for i in range(1, nsteps + 1):
        y = stepper.step(y, system.coupling)
        if i % stride == 0 or i == nsteps:
            record(i * dt, y)
    return Trajectory(
        times=np.array(rows["t"]),
        q=np.array(rows["q"]).reshape(-1, 3),
        p=np.array(rows["p"]).reshape(-1, 3),
        qdot=np.array(rows["qdot"]).reshape(-1, 3),
        energy=np.array(rows["H"]),
        e_norm=np.array(rows["e"]),
        grad_a_norm=np.array(rows["a"]),
        transversality=np.array(rows["div"]),
        states=states,
        dt=dt,
    )
