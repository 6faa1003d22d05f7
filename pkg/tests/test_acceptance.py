"""Acceptance criteria 1-11 on the desk-scale grid n = 64, L = 32 (charge radius 1).

Each test records one PASS/FAIL line (printed in the terminal summary) before
asserting.  Heavy runs are module fixtures shared between criteria: the
soliton run feeds criteria 1 and 2, the perturbed run feeds 2, 9 and 10.
"""

import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import random_field, random_state, record_criterion
from maxlor import spectral
from maxlor.charge import reference_profile
from maxlor.dynamics import evolve
from maxlor.fields import FieldPair, FourierGrid, modified_wave_group, norm_weighted
from maxlor.harness import ExperimentConfig, extract_scattered_field, fit_decay, run_perturbed_soliton
from maxlor.linearized import (LinearizedOperator, check_skew_symmetry, integrate_frozen, linearization_remainder)
from maxlor.soliton import SolitonParams, soliton_state, stationary_residual, tangent_frame
from maxlor.symplectic import omega_matrix, transversal_projector

pytestmark = pytest.mark.acceptance

V = (0.3, 0.0, 0.0)
WINDOW = (5.0, 24.0)
# Perturbation size d_beta = |Z0|_beta for the nonlinear run; |Z0|_{-beta} is then about 0.31.
AMPLITUDE = 1e4
EXTRACTION_TIMES = [6.0, 10.5, 15.0, 19.5, 24.0]


@pytest.fixture(scope="module")
def rho():
    return reference_profile(1.0)


@pytest.fixture(scope="module")
def grid():
    return FourierGrid(64, 32.0)


@pytest.fixture(scope="module")
def soliton_run(rho, grid):
    y0 = soliton_state(rho, SolitonParams.of((0.0, 0.0, 0.0), V), grid)
    return y0, evolve(rho, y0, grid, 10.0, dt=0.01, output_every=2.5, keep_states=True)


@pytest.fixture(scope="module")
def perturbed_run():
    cfg = ExperimentConfig(amplitude=AMPLITUDE, t_final=24.0, dt=0.01, output_every=0.5, window=WINDOW)
    return cfg, run_perturbed_soliton(cfg, keep_states=EXTRACTION_TIMES)


def test_criterion_1_soliton_exactness(rho, grid, soliton_run):
    y0, traj = soliton_run
    residual = stationary_residual(rho, V, grid)
    field_err = q_err = 0.0
    for t, y in zip(traj.times, traj.states):
        moved = y0.translated(grid, np.array(V) * t)
        field_err = max(field_err, grid.norm(y.e - moved.e), grid.norm(y.a - moved.a))
        q_err = max(q_err, float(np.abs(y.q - np.array(V) * t).max()))
    ok = residual < 1e-10 and field_err < 1e-6 and q_err < 1e-6 and traj.times[-1] == pytest.approx(10.0)
    record_criterion(1, ok, f"stationary residual {residual:.1e}; over t=10 field L2 error {field_err:.1e}, "
                            f"|q - q0 - vt| {q_err:.1e}")
    assert ok


def test_criterion_2_energy_conservation(soliton_run, perturbed_run):
    _, soliton = soliton_run
    cfg, report = perturbed_run
    per_ten = report.trajectory.energy_drift * 10.0 / cfg.t_final
    ok = soliton.energy_drift < 1e-8 and report.trajectory.energy_drift < 1e-8
    record_criterion(2, ok, f"relative drift at dt=0.01: soliton {soliton.energy_drift:.1e} over t=10, "
                            f"perturbed {report.trajectory.energy_drift:.1e} over t=24 ({per_ten:.1e} per 10)")
    assert ok


def test_criterion_3_zero_modes(rho, grid):
    worst_kernel = worst_chain = 0.0
    for speed in (0.0, 0.3, 0.6):
        v = (speed, 0.0, 0.0)
        op = LinearizedOperator(rho, v, grid)
        frame = tangent_frame(rho, v, grid)
        for j in range(3):
            worst_kernel = max(worst_kernel, op.apply(frame.vector(j)).norm(grid))
            worst_chain = max(worst_chain, (op.apply(frame.vector(j + 3)) - frame.vector(j)).norm(grid))
    frame = tangent_frame(rho, V, grid)
    traj = integrate_frozen(rho, V, frame.vector(4), grid, 10.0, dt=0.05, keep_states=True, output_every=1.0)
    secular = max((x - frame.vector(4).axpy(t, frame.vector(1))).norm(grid) for t, x in zip(traj.times, traj.states))
    ok = worst_kernel < 1e-9 and worst_chain < 1e-9 and secular < 1e-6 and traj.times[-1] == pytest.approx(10.0)
    record_criterion(3, ok, f"|A tau_j| {worst_kernel:.1e}, |A tau_(j+3) - tau_j| {worst_chain:.1e} "
                            f"for |v| in (0, 0.3, 0.6); secular solution error {secular:.1e} on [0, 10]")
    assert ok


def test_criterion_4_symplectic_structure(rho, grid):
    zero_block = 0.0
    smallest = math.inf
    for speed in (0.0, 0.3, 0.6, 0.9):
        for direction in ((1.0, 0.0, 0.0), (0.6, 0.8, 0.0)):
            gram = omega_matrix(rho, speed * np.array(direction), grid)
            zero_block = max(zero_block, gram.zero_block_residual)
            smallest = min(smallest, float(gram.eigenvalues.min()))
    rng = np.random.default_rng(4)
    skew = 0.0
    for w in (V, (0.35, -0.1, 0.05)):
        for _ in range(3):
            skew = max(skew, check_skew_symmetry(rho, V, w, random_state(grid, rng), random_state(grid, rng), grid))
    op = LinearizedOperator(rho, V, grid)
    worst = math.inf
    for _ in range(1000):
        x = random_state(grid, rng, width=0.5 + 3.0 * rng.random()) * (10.0 ** rng.uniform(-3, 3))
        worst = min(worst, op.hamiltonian(x) / x.norm(grid) ** 2)
    ok = zero_block < 1e-10 and smallest > 0 and skew < 1e-10 and worst >= -1e-12
    record_criterion(4, ok, f"zero blocks {zero_block:.1e}; min eigenvalue of omega+ for |v| <= 0.9: {smallest:.3f}; "
                            f"skew residual {skew:.1e}; min H/|X|^2 over 1000 states {worst:.2e}")
    assert ok


def test_criterion_5_resolvent_identities(rho):
    row_sum = max(spectral.coeffs_at(rho, 0.3, lam).checks["c_row_sum"] for lam in (1.0, 0.5 + 2.0j))
    det = max(spectral.m_matrix(rho, 0.3, lam).det_residual for lam in (1.0, 0.5 + 2.0j))
    g1 = spectral.coeffs_at(rho, 0.3, 1.0).g1
    small = [abs(spectral.coeffs_on_axis(rho, 0.3, om).c1 + g1) / om**2 for om in (1e-1, 1e-2, 1e-3)]
    structure = []
    growth = []
    for om in (5.0, 10.0, 20.0, 50.0, 100.0):
        inv = spectral.m_inverse_structure(rho, 0.3, om)
        structure.append(inv.structure_residual)
        growth.append(inv.norm * om)
    ok = (row_sum < 1e-10 and det < 1e-10 and max(small) < 2 * min(small) and max(structure) < 1e-8
          and max(growth) < 2 * growth[0])
    record_criterion(5, ok, f"c row sum {row_sum:.1e}; det M - d1 d^2 {det:.1e}; |c1+g1|/w^2 at w=1e-1..1e-3 "
                            f"{', '.join(f'{s:.3g}' for s in small)}; L11 identity {max(structure):.1e}; "
                            f"|M^-1| w on [5, 100] in [{min(growth):.3f}, {max(growth):.3f}]")
    assert ok


@pytest.mark.xfail(strict=True, reason="Im d(-w) = -Im d(w) exactly, so Im d < 0 for w < 0; see the decision ledger")
def test_criterion_6_wiener_positivity(rho):
    literal = {}
    signed = True
    richardson = 0.0
    for om in (0.5, 1.0, 2.0, -0.5, -1.0, -2.0):
        axis = spectral.coeffs_on_axis(rho, 0.3, om)
        literal[om] = axis.d1.imag > 0 and axis.d.imag > 0
        signed &= math.copysign(1.0, om) * axis.d1.imag > 0 and math.copysign(1.0, om) * axis.d.imag > 0
        vals = [spectral.coeffs_at(rho, 0.3, complex(eps, om), check=False) for eps in (1e-2, 1e-3, 1e-4)]
        for name in ("d1", "d"):
            seq = [getattr(x, name) for x in vals]
            first = [(10 * seq[j + 1] - seq[j]) / 9 for j in range(2)]
            limit = (100 * first[1] - first[0]) / 99
            target = getattr(axis, name)
            richardson = max(richardson, abs(limit - target) / abs(target))
    positive = all(literal[om] for om in (0.5, 1.0, 2.0))
    negative = all(literal[om] for om in (-0.5, -1.0, -2.0))
    ok = positive and negative and richardson < 1e-5
    record_criterion(6, ok, f"Im d1, Im d > 0 at w = 0.5, 1, 2: {positive}; at w = -0.5, -1, -2: {negative} "
                            f"(sign(w) Im d > 0 at all six: {signed}); Richardson limits agree to {richardson:.1e}")
    assert ok


def test_criterion_7_orthogonality_equivalence(rho, grid):
    rng = np.random.default_rng(7)
    frame = tangent_frame(rho, V, grid)
    worst = 0.0
    flagged = 0
    for _ in range(50):
        x = transversal_projector(rho, V, grid, random_state(grid, rng, width=0.5 + 2.0 * rng.random()), frame)
        scale = x.norm(grid)
        worst = max(worst, spectral.orthogonality_conditions(rho, V, x, grid).size() / scale)
        j = int(rng.integers(6))
        dirty = x.axpy(0.1 * scale / frame.vector(j).norm(grid), frame.vector(j))
        flagged += spectral.orthogonality_conditions(rho, V, dirty, grid).size() > 1e-8 * dirty.norm(grid)
    ok = worst < 1e-8 and flagged == 50
    record_criterion(7, ok, f"max residual / |X0| over 50 projected states {worst:.1e}; "
                            f"tangent-contaminated states flagged {flagged}/50")
    assert ok


def test_criterion_8_linearization_consistency(rho):
    # The coupling must be resolved for the remainder to rise above roundoff, so a fine box is used.
    fine = FourierGrid(32, 4.0)
    x = random_state(fine, np.random.default_rng(8))
    eps = np.array([1e-2, 1e-3, 1e-4])
    rem = np.array([linearization_remainder(rho, V, x, fine, e) for e in eps])
    slope = float(np.polyfit(np.log(eps), np.log(rem), 1)[0])
    ok = abs(slope - 2.0) <= 0.2
    record_criterion(8, ok, f"remainder slope {slope:.3f} over eps = 1e-2, 1e-3, 1e-4 (n=32, L=4)")
    assert ok


def test_criterion_9_decay_proxies(rho, grid, perturbed_run):
    cfg, report = perturbed_run
    fits = {}
    x0 = transversal_projector(rho, V, grid, random_state(grid, np.random.default_rng(9), width=1.5))
    frozen = integrate_frozen(rho, V, x0, grid, WINDOW[1], dt=0.05, output_every=0.5)
    fits["linearized |X|_-(2+delta)"] = fit_decay(frozen.times, frozen.weighted_norm, WINDOW)
    fits["nonlinear |Z|_-beta"] = report.fits["z_norm"]
    fits["nonlinear |v'|"] = report.fits["v_dot"]
    pair = FieldPair(random_field(grid, np.random.default_rng(10), 1.5), random_field(grid, np.random.default_rng(11), 1.5))
    times = np.arange(WINDOW[0], WINDOW[1] + 1e-9, 1.0)
    local = []
    for t in times:
        w = modified_wave_group(grid, pair, V, t)
        local.append(norm_weighted(grid, w.e, -2.0, 0) + norm_weighted(grid, w.a, -2.0, 1))
    fits["wave group |W|_-2"] = fit_decay(times, local, WINDOW)
    limits = {"linearized |X|_-(2+delta)": -0.8, "nonlinear |Z|_-beta": -0.8, "nonlinear |v'|": -1.5,
              "wave group |W|_-2": -(2.0 - 1.0) + 0.3}
    ok = all(fits[k].exponent <= limits[k] and fits[k].r_squared >= 0.9 for k in limits)
    detail = "; ".join(f"{k} slope {fits[k].exponent:.2f} (<= {limits[k]:.1f}) R^2 {fits[k].r_squared:.3f}"
                       for k in limits)
    record_criterion(9, ok, f"window [{WINDOW[0]:g}, {WINDOW[1]:g}]: {detail}")
    assert ok


def test_criterion_10_scattering(rho, grid, perturbed_run):
    cfg, report = perturbed_run
    scat = extract_scattered_field(report.states, report.state_times, rho, grid)
    residuals = scat.cauchy_residuals
    ok = len(scat.times) >= 3 and bool(np.all(np.diff(residuals) < 0))
    record_criterion(10, ok, f"Cauchy residuals at t = {', '.join(f'{t:g}' for t in scat.times[1:])}: "
                             f"{', '.join(f'{r:.2e}' for r in residuals)}")
    assert ok


def test_criterion_11_oracle_agreements():
    tests_dir = Path(__file__).parent
    done = subprocess.run([sys.executable, "-m", "pytest", "-q", "-m", "derived", "-p", "no:cacheprovider",
                           str(tests_dir)], capture_output=True, text=True, cwd=tests_dir.parent)
    summary = done.stdout.strip().splitlines()[-1] if done.stdout.strip() else done.stderr.strip()[-200:]
    ok = done.returncode == 0 and " passed" in summary and "failed" not in summary
    record_criterion(11, ok, f"oracle-backed examples: {summary}")
    assert ok, done.stdout[-4000:]
