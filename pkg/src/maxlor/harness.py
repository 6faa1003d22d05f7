"""Experiment orchestration: configured perturbed-soliton runs and their analysis.

A run starts from S(sigma0) + Z0, where Z0 is made transversal by the
projector P_v, evolves the nonlinear system and projects the state back onto
the solitary manifold at every output time.  The report keeps the raw series
(weighted norm of Z, soliton position and velocity, particle orbit) and the
decay fits over the configured window.

Config files are TOML; an example lives in the README.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .charge import RadialChargeDensity, from_spec
from .dynamics import CoupledSystem, Trajectory, evolve, wrap_time
from .errors import NoConvergence, NonPositiveValues, ProjectionLost, VelocityOutOfRange, WindowTooSmall, WrapGuard
from .fields import FieldPair, FourierGrid, free_wave_group
from .linearized import modulation_rates, perturbation_norm, velocity_derivative_frames
from .soliton import SolitonParams, check_velocity, soliton_fields, soliton_state
from .state import State
from .symplectic import project_to_manifold, transversal_projector

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ExperimentConfig",
    "FitResult",
    "DecayReport",
    "ScatteringReport",
    "load_config",
    "make_perturbation",
    "initial_state",
    "run_perturbed_soliton",
    "extract_scattered_field",
    "fit_decay",
    "write_csv",
    "write_json",
]


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class ExperimentConfig:
    """Everything a run needs; ``from_dict`` accepts the nested TOML tables."""

    charge: dict = field(default_factory=lambda: {"family": "reference", "radius": 1.0})
    n: int = 64
    L: float = 32.0
    b0: tuple = (0.0, 0.0, 0.0)
    v0: tuple = (0.3, 0.0, 0.0)
    perturbation: str = "bump"
    amplitude: float = 1e-3
    width: float = 1.5
    dt: float = 0.01
    t_final: float = 24.0
    output_every: float = 0.5
    delta: float = 0.25
    window: tuple = (5.0, 24.0)
    neighborhood: float = 0.5
    out_dir: str = "out"
    seed: int = 0

    PERTURBATIONS = ("none", "bump", "kick", "offset")

    @property
    def beta(self) -> float:
        return 4.0 + self.delta

    def validate(self, rho: RadialChargeDensity | None = None) -> None:
        if self.perturbation not in self.PERTURBATIONS:
            raise ValueError(f"perturbation must be one of {self.PERTURBATIONS}")
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if not (self.dt > 0 and self.t_final > 0 and self.output_every > 0):
            raise ValueError("dt, t_final and output_every must be positive")
        if self.amplitude < 0 or self.width <= 0:
            raise ValueError("amplitude must be non-negative and width positive")
        if not self.window[0] < self.window[1]:
            raise ValueError("window must be an increasing pair")
        check_velocity(self.v0)
        if rho is not None and self.t_final > wrap_time(self.grid(), rho):
            raise WrapGuard(f"t_final={self.t_final} exceeds the wrap-around time {wrap_time(self.grid(), rho):.3f}")

    def grid(self) -> FourierGrid:
        return FourierGrid(self.n, self.L)

    def rho(self) -> RadialChargeDensity:
        return from_spec(self.charge)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {
            "charge", "grid", "soliton", "perturbation", "integrator", "analysis", "output", "seed",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        cfg = cls()
        if "charge" in data:
            cfg.charge = dict(data["charge"])
        grid = data.get("grid", {})
        cfg.n = int(grid.get("n", cfg.n))
        cfg.L = float(grid.get("L", cfg.L))
        sol = data.get("soliton", {})
        cfg.b0 = tuple(float(x) for x in sol.get("b", cfg.b0))
        cfg.v0 = tuple(float(x) for x in sol.get("v", cfg.v0))
        pert = data.get("perturbation", {})
        cfg.perturbation = str(pert.get("kind", cfg.perturbation))
        cfg.amplitude = float(pert.get("amplitude", cfg.amplitude))
        cfg.width = float(pert.get("width", cfg.width))
        integ = data.get("integrator", {})
        cfg.dt = float(integ.get("dt", cfg.dt))
        cfg.t_final = float(integ.get("t_final", cfg.t_final))
        cfg.output_every = float(integ.get("output_every", cfg.output_every))
        ana = data.get("analysis", {})
        cfg.delta = float(ana.get("delta", cfg.delta))
        cfg.window = tuple(float(x) for x in ana.get("window", cfg.window))
        cfg.neighborhood = float(ana.get("neighborhood", cfg.neighborhood))
        cfg.out_dir = str(data.get("output", {}).get("dir", cfg.out_dir))
        cfg.seed = int(data.get("seed", cfg.seed))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "charge": dict(self.charge),
            "grid": {"n": self.n, "L": self.L},
            "soliton": {"b": list(self.b0), "v": list(self.v0)},
            "perturbation": {"kind": self.perturbation, "amplitude": self.amplitude, "width": self.width},
            "integrator": {"dt": self.dt, "t_final": self.t_final, "output_every": self.output_every},
            "analysis": {"delta": self.delta, "window": list(self.window), "neighborhood": self.neighborhood},
            "output": {"dir": self.out_dir},
        }


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return ExperimentConfig.from_dict(tomllib.load(fh))


# ---------------------------------------------------------------------------
# Initial data


def _localized_field(grid: FourierGrid, rng: np.random.Generator, width: float) -> np.ndarray:
    """Curl of a Gaussian envelope times random linear polynomials.

    The field is smooth on the scale ``width`` and exactly solenoidal.  Being
    a curl, its spectrum vanishes at k = 0: long waves that would fill the
    periodic box and never leave the weighted window carry almost no energy.
    """
    x, y, z = grid.coordinates()
    env = np.exp(-((x**2 + y**2 + z**2) / width**2))
    coef = rng.standard_normal((3, 4))
    pot = grid.from_physical(np.stack([env * (c[0] + (c[1] * x + c[2] * y + c[3] * z) / width) for c in coef]))
    d = [-1j * kc for kc in grid.kvec]
    return width * np.stack([d[1] * pot[2] - d[2] * pot[1], d[2] * pot[0] - d[0] * pot[2], d[0] * pot[1] - d[1] * pot[0]])


def make_perturbation(config: ExperimentConfig, rho: RadialChargeDensity, grid: FourierGrid) -> State:
    """Z0 in the moving frame, transversal to the tangent space at v0.

    bump: smooth random solenoidal fields under a Gaussian envelope; kick: a
    momentum change along v0 (or e1 at rest); offset: a position change
    along e2.  The raw perturbation is scaled so that ||Z0||_beta equals the
    configured amplitude before projection, then projected with P_v.
    """
    rng = np.random.default_rng(config.seed)
    kind = config.perturbation
    if kind == "none" or config.amplitude == 0.0:
        return State.zeros(grid)
    v = np.asarray(config.v0, dtype=float)
    if kind == "bump":
        raw = State(_localized_field(grid, rng, config.width), _localized_field(grid, rng, config.width),
                    np.zeros(3), np.zeros(3))
    elif kind == "kick":
        direction = v / np.linalg.norm(v) if np.linalg.norm(v) > 0 else np.array([1.0, 0.0, 0.0])
        raw = State(grid.zeros(), grid.zeros(), np.zeros(3), direction + 0.1 * rng.standard_normal(3))
    else:
        raw = State(grid.zeros(), grid.zeros(), np.array([0.0, 1.0, 0.0]) + 0.1 * rng.standard_normal(3),
                    np.zeros(3))
    size = perturbation_norm(grid, raw, config.beta)
    raw = raw * (config.amplitude / size)
    return transversal_projector(rho, v, grid, raw)


def initial_state(config: ExperimentConfig, rho: RadialChargeDensity, grid: FourierGrid) -> tuple[State, State]:
    """(Y0, Z0) with Y0 = S(b0, v0) + Z0 translated to b0."""
    z0 = make_perturbation(config, rho, grid)
    params = SolitonParams.of(config.b0, config.v0)
    y0 = soliton_state(rho, params, grid)
    shifted = z0.translated(grid, params.b_array)
    return State(y0.e + shifted.e, y0.a + shifted.a, y0.q + z0.q, y0.p + z0.p), z0


# ---------------------------------------------------------------------------
# Fits


@dataclass
class FitResult:
    """Least squares line through (log t, log value)."""

    exponent: float
    intercept: float
    r_squared: float
    stderr: float
    window: tuple
    points: int

    @property
    def amplitude(self) -> float:
        return math.exp(self.intercept)

    def as_dict(self) -> dict:
        return asdict(self) | {"amplitude": self.amplitude}


def fit_decay(times, values, window=None, min_points: int = 8) -> FitResult:
    """Fit value ~ amplitude * t^exponent over ``window`` (inclusive).

    Raises WindowTooSmall with fewer than ``min_points`` samples in the window
    and NonPositiveValues if any sample there (or any time) is not positive.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape:
        raise ValueError("times and values must have the same shape")
    lo, hi = (float(t.min()), float(t.max())) if window is None else (float(window[0]), float(window[1]))
    sel = (t >= lo) & (t <= hi)
    if int(sel.sum()) < min_points:
        raise WindowTooSmall(f"{int(sel.sum())} samples in [{lo}, {hi}], need {min_points}")
    ts, ys = t[sel], y[sel]
    if np.any(ts <= 0) or np.any(~(ys > 0)):
        raise NonPositiveValues("decay fits need positive times and values")
    x, z = np.log(ts), np.log(ys)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, z, rcond=None)
    resid = z - design @ coef
    total = float(np.sum((z - z.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / total if total > 0 else 1.0
    dof = max(len(x) - 2, 1)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if sxx > 0 else 0.0
    return FitResult(float(coef[0]), float(coef[1]), r2, stderr, (lo, hi), int(sel.sum()))


# ---------------------------------------------------------------------------
# Runs


@dataclass
class DecayReport:
    """Raw series and fits of one perturbed-soliton run."""

    times: np.ndarray
    z_norm: np.ndarray
    b: np.ndarray
    v: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    energy: np.ndarray
    projection_residual: np.ndarray
    v_rate: np.ndarray
    c_rate: np.ndarray
    v_plus: np.ndarray
    a_plus: np.ndarray
    v_plus_uncertainty: float
    a_plus_uncertainty: float
    fits: dict
    trajectory: Trajectory
    states: list = field(default_factory=list)
    state_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def v_dot(self) -> np.ndarray:
        """|dv/dt| from the modulation equations at every output time."""
        return np.linalg.norm(self.v_rate, axis=1)

    @property
    def v_dot_differences(self) -> tuple[np.ndarray, np.ndarray]:
        """|dv/dt| at interval midpoints from consecutive projections.

        Only meaningful while the change of v between outputs is far above
        one ulp of |v|.
        """
        dt = np.diff(self.times)
        rate = np.linalg.norm(np.diff(self.v, axis=0), axis=1) / dt
        return 0.5 * (self.times[1:] + self.times[:-1]), rate

    def columns(self) -> dict:
        out = {"t [time]": self.times, "z_norm_weighted [field]": self.z_norm}
        for name, arr, unit in (("b", self.b, "length"), ("v", self.v, "c"), ("q", self.q, "length"),
                                ("qdot", self.qdot, "c")):
            for i, ax in enumerate("xyz"):
                out[f"{name}_{ax} [{unit}]"] = arr[:, i]
        out["qdot_minus_vplus [c]"] = np.linalg.norm(self.qdot - self.v_plus, axis=1)
        out["q_minus_asymptote [length]"] = np.linalg.norm(
            self.q - np.outer(self.times, self.v_plus) - self.a_plus, axis=1)
        out["v_dot [c/time]"] = self.v_dot
        out["c_dot [c]"] = np.linalg.norm(self.c_rate, axis=1)
        out["H [energy]"] = self.energy
        out["projection_residual [action]"] = self.projection_residual
        return out

    def summary(self) -> dict:
        return {
            "v_plus": self.v_plus.tolist(),
            "v_plus_uncertainty": self.v_plus_uncertainty,
            "a_plus": self.a_plus.tolist(),
            "a_plus_uncertainty": self.a_plus_uncertainty,
            "energy_drift": self.trajectory.energy_drift,
            "max_projection_residual": float(self.projection_residual.max()),
            "fits": {k: v.as_dict() for k, v in self.fits.items()},
        }


def _asymptotics(times, b, v):
    """v+ = v(t_end), a+ from b(t) = v+ t + a+, with last-window drifts as uncertainties."""
    v_plus = v[-1].copy()
    a_series = b - np.outer(times, v_plus)
    a_plus = a_series[-1].copy()
    half = len(times) // 2
    v_err = float(np.linalg.norm(v[-1] - v[half]))
    a_err = float(np.linalg.norm(a_series[-1] - a_series[half]))
    return v_plus, a_plus, v_err, a_err


def run_perturbed_soliton(config: ExperimentConfig, keep_states=False) -> DecayReport:
    """Evolve S(sigma0) + Z0 and decompose Y(t) = S(sigma(t)) + Z(t) at every output.

    Raises ProjectionLost when the projection stops converging or ||Z||_{-beta}
    exceeds the configured neighborhood radius; the message carries the time.

    ``keep_states`` is False, True (every output) or a list of output times
    at which the full state is kept; a 64^3 state takes about 13 MB.
    """
    rho = config.rho()
    grid = config.grid()
    config.validate(rho)
    y0, _ = initial_state(config, rho, grid)
    alpha = -config.beta
    rows: dict[str, list] = {k: [] for k in ("t", "z", "b", "v", "res", "vdot", "cdot")}
    states = []
    state_times = []
    wanted = None if isinstance(keep_states, bool) else np.asarray(list(keep_states), dtype=float)
    guess = [SolitonParams.of(config.b0, config.v0)]
    system = CoupledSystem(rho, grid)
    # The d tau / dv terms multiply |Z| |v_dot|, so frames at v0 serve the whole run.
    derivative_frames = velocity_derivative_frames(rho, config.v0, grid)

    def observe(t, y):
        try:
            proj = project_to_manifold(rho, y, grid, guess=guess[0], tol=1e-12)
        except (NoConvergence, VelocityOutOfRange) as exc:
            raise ProjectionLost(f"projection failed at t={t:.4f}: {exc}", t) from exc
        guess[0] = proj.sigma
        z = proj.z
        size = perturbation_norm(grid, z, alpha)
        if size > config.neighborhood:
            raise ProjectionLost(f"||Z||_-beta = {size:.3e} left the neighborhood at t={t:.4f}", t)
        rows["t"].append(t)
        rows["z"].append(size)
        rows["b"].append(proj.sigma.b_array)
        rows["v"].append(proj.sigma.v_array)
        rows["res"].append(proj.residual)
        rates = modulation_rates(rho, proj.sigma.v_array, z, grid, derivative_frames, system)
        rows["vdot"].append(rates.v_dot)
        rows["cdot"].append(rates.c_dot)
        if (wanted is None and keep_states) or (wanted is not None and np.any(np.abs(wanted - t) < 1e-9)):
            states.append(y.copy())
            state_times.append(t)

    traj = evolve(rho, y0, grid, config.t_final, dt=config.dt, output_every=config.output_every,
                  observer=observe)
    times = np.array(rows["t"])
    b = np.array(rows["b"]).reshape(-1, 3)
    v = np.array(rows["v"]).reshape(-1, 3)
    v_plus, a_plus, v_err, a_err = _asymptotics(times, b, v)
    report = DecayReport(times, np.array(rows["z"]), b, v, traj.q, traj.qdot, traj.energy, np.array(rows["res"]),
                         np.array(rows["vdot"]).reshape(-1, 3), np.array(rows["cdot"]).reshape(-1, 3), v_plus, a_plus, v_err, a_err, {}, traj, states, np.array(state_times))
    report.fits = _decay_fits(report, config.window)
    return report


def _decay_fits(report: DecayReport, window) -> dict:
    fits = {}
    candidates = [("z_norm", report.times, report.z_norm), ("v_dot", report.times, report.v_dot),
                  ("v_dot_differences", *report.v_dot_differences)]
    for name, t, y in candidates:
        try:
            fits[name] = fit_decay(t, y, window)
        except (WindowTooSmall, NonPositiveValues):
            continue
    return fits


# ---------------------------------------------------------------------------
# Scattered field


@dataclass
class ScatteringReport:
    """W0(-t)(F(t) - F_{v(t)}(t)) at increasing times and its convergence."""

    times: np.ndarray
    estimates: list
    cauchy_residuals: np.ndarray
    remainder_norms: np.ndarray

    @property
    def psi_plus(self) -> FieldPair:
        return self.estimates[-1]

    def columns(self) -> dict:
        return {
            "t [time]": self.times,
            "cauchy_residual [field]": np.concatenate([[np.nan], self.cauchy_residuals]),
            "remainder_norm [field]": self.remainder_norms,
        }


def extract_scattered_field(states: list, times, rho: RadialChargeDensity, grid: FourierGrid,
                            check_wrap: bool = True) -> ScatteringReport:
    """Scattered-field estimates from full states Y(t_i).

    The accompanying soliton uses the particle velocity qdot(t_i) and
    position q(t_i); differences are measured in the energy norm
    sqrt(|e|^2 + |grad a|^2).  ``remainder_norms`` are the distances of each
    estimate to the last one.
    """
    times = np.asarray(times, dtype=float)
    if len(states) != len(times) or len(times) < 3:
        raise ValueError("need at least three states with matching times")
    if check_wrap and times.max() > wrap_time(grid, rho):
        raise WrapGuard(f"extraction time {times.max()} exceeds the wrap-around time {wrap_time(grid, rho):.3f}")
    system = CoupledSystem(rho, grid)
    estimates = []
    for t, y in zip(times, states):
        _, qdot, _, _ = system.particle_terms(y)
        accompanying = soliton_fields(rho, qdot, grid, y.q)
        estimates.append(free_wave_group(grid, FieldPair(y.e, y.a) - accompanying, -t))
    cauchy = np.array([(estimates[i + 1] - estimates[i]).energy_norm(grid) for i in range(len(estimates) - 1)])
    remainder = np.array([(est - estimates[-1]).energy_norm(grid) for est in estimates])
    return ScatteringReport(times, estimates, cauchy, remainder)


# ---------------------------------------------------------------------------
# Output


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path, columns: dict) -> None:
    """One header row of (unit-annotated) names, then one row per sample; RFC 4180 quoting."""
    names = list(columns)
    data = [np.asarray(columns[k]) for k in names]
    length = len(data[0]) if data else 0
    if any(len(c) != length for c in data):
        raise ValueError("all columns must have the same length")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(names)
        for i in range(length):
            writer.writerow([_fmt(c[i]) for c in data])


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else str(val)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, data: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(to_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def output_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def set_threads(count: int | None) -> None:
    """Limit BLAS/OpenMP threads for this process (effective before heavy imports)."""
    if count:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(int(count))
