import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import CubicSpline

from conftest import random_state
from maxlor import spectral
from maxlor.charge import reference_profile
from maxlor.fields import FieldPair, FourierGrid, modified_wave_group
from maxlor.soliton import rho_hat_grid, tangent_frame
from maxlor.symplectic import frame_pairings, transversal_projector

SPEED = 0.3
NU = math.sqrt(1 - SPEED**2)


@pytest.fixture(scope="module")
def at_one(rho):
    return spectral.coeffs_at(rho, SPEED, 1.0)


def cylindrical_f11(rho, lam, speed, cutoff=60.0, width=1.0, order=16):
    """f11 by a tensor Gauss-Legendre rule in cylindrical coordinates (k1, k_perp) around v."""
    nu = math.sqrt(1 - speed**2)
    grid_k = np.arange(0.0, 1.5 * cutoff, 0.005)
    spline = CubicSpline(grid_k, rho.transform(grid_k))
    x, w = np.polynomial.legendre.leggauss(order)

    def composite(a, b):
        edges = np.arange(a, b + 1e-12, width)
        half = 0.5 * np.diff(edges)[:, None]
        return (half * (x + 1) + edges[:-1, None]).ravel(), (half * w).ravel()

    k1, w1 = composite(-cutoff, cutoff)
    kp, wp = composite(0.0, cutoff)
    k1, kp = k1[:, None], kp[None, :]
    k2 = k1**2 + kp**2
    shift = lam + 1j * k1 * speed
    integrand = nu**3 * shift * spline(np.sqrt(k2)) ** 2 / (k2 + shift**2) * (k1**2 / k2 - 1)
    return np.sum(integrand * 2 * math.pi * kp * w1[:, None] * wp[None, :])


def test_rest_coefficients_vanish(rho):
    co = spectral.coeffs_at(rho, 0.0, 1.0)
    assert co.c1 == 0 and co.c == 0 and co.g1 == 0 and co.g == 0


def test_rest_m_matrix(rho):
    m = spectral.m_matrix(rho, 0.0, 1.0).matrix
    co = spectral.coeffs_at(rho, 0.0, 1.0)
    assert np.allclose(m[:3, 3:], -np.eye(3))
    assert np.allclose(m[3:, :3], 0.0)
    assert np.allclose(np.diag(m[3:, 3:]), [1 - co.f1, 1 - co.f, 1 - co.f])


def test_c_row_sum_vanishes(at_one):
    assert at_one.checks["c_row_sum"] < 1e-10
    assert at_one.checks["quadrature"] < 1e-9


@pytest.mark.derived
def test_f11_matches_cylindrical_tensor_quadrature(rho, at_one):
    assert at_one.f1 == pytest.approx(cylindrical_f11(rho, 1.0, SPEED), rel=1e-6)


def test_determinant_factorizes(rho):
    assert spectral.m_matrix(rho, SPEED, 1.0).det_residual < 1e-10
    assert spectral.m_matrix(rho, SPEED, 0.5 + 2j).det_residual < 1e-10


@settings(max_examples=5, deadline=None)
@given(re=st.floats(0.2, 3.0), im=st.floats(-3.0, 3.0))
def test_coefficients_are_analytic(re, im, rho):
    assert spectral.cauchy_riemann_residual(rho, SPEED, complex(re, im)) < 1e-5


def test_conjugation_symmetry(rho):
    a = spectral.coeffs_at(rho, SPEED, 0.7 + 1.3j, check=False)
    b = spectral.coeffs_at(rho, SPEED, 0.7 - 1.3j, check=False)
    for name in ("c1", "c", "f1", "f", "d1", "d"):
        assert getattr(b, name) == pytest.approx(np.conj(getattr(a, name)), rel=1e-12, abs=1e-18)


@pytest.mark.parametrize("omega", [1.0, 2.0])
@pytest.mark.derived
def test_axis_values_are_limits_from_the_right(omega, rho):
    axis = spectral.coeffs_on_axis(rho, SPEED, omega)
    eps = [1e-2, 1e-3, 1e-4]
    vals = [spectral.coeffs_at(rho, SPEED, complex(e, omega), check=False) for e in eps]
    for name in ("c1", "c", "f1", "f", "d1", "d"):
        seq = [getattr(x, name) for x in vals]
        first = [(10 * seq[j + 1] - seq[j]) / 9 for j in range(2)]
        limit = (100 * first[1] - first[0]) / 99
        assert abs(limit - getattr(axis, name)) <= 1e-5 * abs(getattr(axis, name))


@pytest.mark.parametrize("omega", [0.5, 1.0, 2.0])
def test_imaginary_parts_positive_for_positive_frequency(omega, rho):
    co = spectral.coeffs_on_axis(rho, SPEED, omega)
    assert co.d1.imag > 0 and co.d.imag > 0


def test_boundary_values_are_conjugate_in_frequency(rho):
    plus = spectral.coeffs_on_axis(rho, SPEED, 2.0)
    minus = spectral.coeffs_on_axis(rho, SPEED, -2.0)
    assert minus.d1 == pytest.approx(np.conj(plus.d1), rel=1e-10)
    assert minus.d == pytest.approx(np.conj(plus.d), rel=1e-10)


@pytest.mark.parametrize("omega", [1.0, 3.0, -2.0])
def test_surface_integrand_is_nonnegative(omega, rho):
    total, smallest = spectral.surface_positivity(rho, SPEED, omega)
    assert smallest >= 0.0 and total > 0.0


@pytest.mark.derived
def test_taylor_structure_near_zero(rho):
    taylor = spectral.taylor_data(rho, SPEED)
    ratios = []
    for omega in (1e-1, 1e-2):
        co = spectral.coeffs_on_axis(rho, SPEED, omega)
        ratios.append(co.d1 / omega**2)
        assert abs(co.c1 + co.g1) / omega**2 < 10 * abs(taylor.i1) + 1.0
    assert abs(ratios[1] + taylor.den1) < abs(ratios[0] + taylor.den1)
    assert abs(ratios[1] + taylor.den1) < 1e-3 * taylor.den1


def test_c_plus_g_vanishes_quadratically(rho):
    vals = [abs(spectral.coeffs_on_axis(rho, SPEED, w).c1 + spectral.coeffs_at(rho, SPEED, 1.0).g1) / w**2
            for w in (1e-1, 1e-2, 1e-3)]
    assert max(vals) < 2 * min(vals)


@pytest.mark.derived
def test_derivative_closed_forms_match_finite_differences(rho):
    taylor = spectral.taylor_data(rho, SPEED)
    h = 5e-3
    f1 = [spectral.coeffs_at(rho, SPEED, s * h, check=False).f1.real / (s * h) for s in (1, 2)]
    f = [spectral.coeffs_at(rho, SPEED, s * h, check=False).f.real / (s * h) for s in (1, 2)]
    assert 2 * f1[0] - f1[1] == pytest.approx(taylor.j1, rel=1e-6)
    assert 2 * f[0] - f[1] == pytest.approx(taylor.j, rel=1e-6)


def test_positivity_at_zero(rho):
    taylor = spectral.taylor_data(rho, SPEED)
    assert -taylor.j + NU * taylor.i > 0
    assert taylor.positivity == pytest.approx(-taylor.j + NU * taylor.i, rel=1e-9)


@pytest.mark.parametrize("omega", [5.0, 20.0, 100.0])
def test_inverse_block_structure(omega, rho):
    inv = spectral.m_inverse_structure(rho, SPEED, omega)
    assert inv.inverse_residual < 1e-10
    assert inv.structure_residual < 1e-8
    assert inv.norm * omega < 2.0


def test_phi_psi_of_zero_data(rho, small_grid):
    z = small_grid.zeros()
    phi, psi = spectral.phi_psi(rho, (SPEED, 0, 0), 1.0, z, z, small_grid)
    assert not np.any(phi) and not np.any(psi)


@pytest.mark.derived
def test_phi_is_the_laplace_transform_of_the_modified_group():
    """Phi(1) equals the integral of exp(-t) <W1(t)(e0, a0), rho> over t >= 0."""
    rho = reference_profile()
    g = FourierGrid(32, 16.0)
    v = (SPEED, 0.0, 0.0)
    x = random_state(g, np.random.default_rng(2))
    rhat = rho_hat_grid(rho, g)
    phi, _ = spectral.phi_psi(rho, v, 1.0, x.e, x.a, g)
    nodes, weights = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0.0, 14.0, 57)
    total = np.zeros(3)
    for a, b in zip(edges[:-1], edges[1:]):
        for t, w in zip(0.5 * (b - a) * (nodes + 1) + a, 0.5 * (b - a) * weights):
            e = modified_wave_group(g, FieldPair(x.e, x.a), v, t).e
            total += w * math.exp(-t) * np.array([g.inner(e[i], rhat) for i in range(3)])
    assert np.abs(total - phi.real).max() <= 1e-4 * np.abs(phi).max()
    assert np.abs(phi.imag).max() <= 1e-10 * np.abs(phi).max()


def test_phi_psi_derivative(rho, small_grid, rng):
    x = random_state(small_grid, rng)
    v = (SPEED, 0.0, 0.0)
    h = 1e-4
    plus = spectral.phi_psi(rho, v, 1.0 + h, x.e, x.a, small_grid)
    minus = spectral.phi_psi(rho, v, 1.0 - h, x.e, x.a, small_grid)
    exact = spectral.phi_psi(rho, v, 1.0, x.e, x.a, small_grid, derivative=True)
    for p, m, d in zip(plus, minus, exact):
        assert np.abs((p - m) / (2 * h) - d).max() <= 1e-6 * np.abs(d).max()


def test_secular_matrix_matches_closed_forms(rho, small_grid):
    v = (SPEED, 0.0, 0.0)
    j1, j = spectral.grid_taylor_j(rho, v, small_grid)
    expected = np.diag([1 / NU**3, 1 / NU, 1 / NU]) @ np.diag([1 - j1, 1 - j, 1 - j])
    assert np.allclose(spectral.secular_matrix(rho, v, small_grid), expected, rtol=1e-12, atol=1e-14)


def test_orthogonality_conditions_are_symplectic_pairings(rho, small_grid, rng):
    v = (SPEED, 0.0, 0.0)
    frame = tangent_frame(rho, v, small_grid)
    x = random_state(small_grid, rng)
    res = spectral.orthogonality_conditions(rho, v, x, small_grid)
    pair = frame_pairings(small_grid, frame, x)
    scale = x.norm(small_grid)
    assert np.abs(res.first + pair[:3]).max() < 1e-12 * scale
    assert np.abs(res.second - pair[3:]).max() < 1e-12 * scale


def test_projected_states_satisfy_the_conditions(rho, small_grid, rng):
    v = (SPEED, 0.0, 0.0)
    x = transversal_projector(rho, v, small_grid, random_state(small_grid, rng))
    assert spectral.orthogonality_conditions(rho, v, x, small_grid).size() < 1e-8 * x.norm(small_grid)


@pytest.mark.derived
def test_tangent_vectors_are_flagged(rho, small_grid):
    v = (SPEED, 0.0, 0.0)
    frame = tangent_frame(rho, v, small_grid)
    for j in range(6):
        res = spectral.orthogonality_conditions(rho, v, frame.vector(j), small_grid)
        assert res.size() > 0.1
    tau4 = spectral.orthogonality_conditions(rho, v, frame.vector(3), small_grid)
    direct = frame_pairings(small_grid, frame, frame.vector(3))
    assert np.allclose(tau4.first, -direct[:3], atol=1e-12)
    assert np.abs(tau4.first).max() > 0.1


def test_zero_state_has_zero_residuals(rho, small_grid):
    from maxlor.state import State

    res = spectral.orthogonality_conditions(rho, (SPEED, 0, 0), State.zeros(small_grid), small_grid)
    assert res.size() == 0.0
