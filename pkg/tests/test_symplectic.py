import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from conftest import random_state
from maxlor.fields import FourierGrid
from maxlor.soliton import SolitonParams, soliton_state, tangent_frame
from maxlor.state import State
from maxlor.symplectic import frame_pairings, omega, omega_matrix, project_to_manifold, transversal_projector

V = (0.3, 0.0, 0.0)


def test_omega_of_a_state_with_itself_vanishes(small_grid, rng):
    y = random_state(small_grid, rng)
    assert abs(omega(small_grid, y, y)) < 1e-15 * y.norm(small_grid) ** 2


def test_omega_particle_pairing(small_grid):
    y1 = State.zeros(small_grid)
    y2 = State.zeros(small_grid)
    y1.q[0] = 1.0
    y2.p[0] = 1.0
    assert omega(small_grid, y1, y2) == 1.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(-3, 3))
def test_omega_is_bilinear_and_antisymmetric(seed, s, small_grid):
    rng = np.random.default_rng(seed)
    a, b, c = (random_state(small_grid, rng) for _ in range(3))
    g = small_grid
    scale = a.norm(g) * b.norm(g) + a.norm(g) * c.norm(g)
    assert abs(omega(g, a, b) + omega(g, b, a)) <= 1e-13 * scale
    assert abs(omega(g, a, b.axpy(s, c)) - omega(g, a, b) - s * omega(g, a, c)) <= 1e-12 * (1 + abs(s)) * scale


@pytest.mark.derived
def test_rest_gram_entry_matches_radial_quadrature(rho):
    grid = FourierGrid(64, 4.0)
    gram = omega_matrix(rho, (0, 0, 0), grid)
    radial = integrate.quad(lambda k: rho.transform(k) ** 2, 0, 60, limit=400, epsabs=0, epsrel=1e-13)[0]
    expected = 1.0 + 2.0 / 3.0 * 4.0 * math.pi * radial
    for j in range(3):
        assert gram.full[j, j + 3] == pytest.approx(expected, rel=1e-6)


def test_gram_blocks(rho, small_grid):
    gram = omega_matrix(rho, V, small_grid)
    assert gram.zero_block_residual < 1e-10
    assert gram.antisymmetry_residual < 1e-12
    assert np.abs(gram.full + gram.full.T).max() < 1e-12


@pytest.mark.parametrize("speed", [0.0, 0.3, 0.6, 0.9])
def test_gram_plus_block_is_positive_definite(speed, rho, small_grid):
    gram = omega_matrix(rho, (speed, 0, 0), small_grid)
    assert np.all(gram.eigenvalues > 0)


def test_projection_fixed_point(rho, small_grid):
    sigma = SolitonParams.of((0.5, -0.25, 1.0), V)
    y = soliton_state(rho, sigma, small_grid)
    res = project_to_manifold(rho, y, small_grid, guess=sigma)
    assert res.iterations <= 2
    assert np.allclose(res.sigma.b_array, sigma.b_array, atol=1e-12)
    assert np.allclose(res.sigma.v_array, sigma.v_array, atol=1e-12)
    assert res.z.norm(small_grid) < 1e-10


def test_projection_from_particle_guess(rho, small_grid):
    sigma = SolitonParams.of((0.5, 0.0, 0.0), (0.2, 0.1, 0.0))
    y = soliton_state(rho, sigma, small_grid)
    res = project_to_manifold(rho, y, small_grid)
    assert np.allclose(res.sigma.v_array, sigma.v_array, atol=1e-9)


def test_projection_commutes_with_translation(rho, small_grid, rng):
    g = small_grid
    sigma = SolitonParams.of((0, 0, 0), V)
    z = transversal_projector(rho, V, g, random_state(g, rng) * 1e-3)
    y = soliton_state(rho, sigma, g) + z
    base = project_to_manifold(rho, y, g, guess=sigma)
    shift = np.array([0.75, -0.5, 0.25])
    moved = y.translated(g, shift)
    moved.q = moved.q + shift
    res = project_to_manifold(rho, moved, g, guess=sigma)
    assert np.allclose(res.sigma.b_array, base.sigma.b_array + shift, atol=1e-9)
    assert np.allclose(res.sigma.v_array, base.sigma.v_array, atol=1e-9)


@pytest.mark.derived
def test_projection_recovers_parameters_of_perturbed_soliton(rho, small_grid, rng):
    g = small_grid
    sigma = SolitonParams.of((0.0, 0.0, 0.0), V)
    raw = random_state(g, rng)
    z = transversal_projector(rho, V, g, raw * (1e-3 / raw.norm(g)))
    y = soliton_state(rho, sigma, g) + z
    res = project_to_manifold(rho, y, g, guess=sigma, tol=1e-12)
    assert np.allclose(res.sigma.b_array, sigma.b_array, atol=1e-10)
    assert np.allclose(res.sigma.v_array, sigma.v_array, atol=1e-10)
    assert res.residual < 1e-10
    assert (res.z - z).norm(g) < 1e-9


def test_projector_kills_tangent_vectors(rho, small_grid):
    frame = tangent_frame(rho, V, small_grid)
    for j in range(6):
        out = transversal_projector(rho, V, small_grid, frame.vector(j), frame)
        assert out.norm(small_grid) < 1e-10 * max(frame.vector(j).norm(small_grid), 1.0)


@pytest.mark.derived
def test_projector_is_idempotent_and_orthogonal(rho, small_grid, rng):
    g = small_grid
    frame = tangent_frame(rho, V, g)
    x = random_state(g, rng)
    once = transversal_projector(rho, V, g, x, frame)
    twice = transversal_projector(rho, V, g, once, frame)
    assert (twice - once).norm(g) < 1e-12 * x.norm(g)
    assert np.max(np.abs(frame_pairings(g, frame, once))) < 1e-10 * x.norm(g)
