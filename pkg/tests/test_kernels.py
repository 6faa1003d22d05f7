"""The compiled kernels must agree with the numpy reference implementation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxlor import _kernels_py, kernels
from maxlor.charge import reference_profile
from maxlor.dynamics import WaveRotation
from maxlor.fields import FourierGrid
from maxlor.soliton import rho_hat_grid

compiled = pytest.importorskip("maxlor._kernels")

GRID = FourierGrid(16, 6.0)
RHAT = np.ascontiguousarray(rho_hat_grid(reference_profile(), GRID))


def _field(rng):
    return rng.normal(size=(3,) + GRID.shape) + 1j * rng.normal(size=(3,) + GRID.shape)


def _phases(q):
    return tuple(np.exp(1j * GRID.k1d[i] * q[i]) for i in range(3))


def test_compiled_module_is_selected_by_default():
    assert kernels.IMPLEMENTATION == compiled.IMPLEMENTATION


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_coupling_pairings_parity(seed):
    rng = np.random.default_rng(seed)
    a = _field(rng)
    args = (RHAT, *_phases(rng.normal(size=3)), np.ascontiguousarray(GRID.weight), *GRID.k1d, a)
    s1, m1 = compiled.coupling_pairings(*args)
    s2, m2 = _kernels_py.coupling_pairings(*args)
    assert np.allclose(s1, s2, rtol=1e-12, atol=1e-12 * np.abs(s2).max())
    assert np.allclose(m1, m2, rtol=1e-12, atol=1e-12 * np.abs(m2).max())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(-2, 2))
def test_transverse_source_parity(seed, scale):
    rng = np.random.default_rng(seed)
    args = (RHAT, *_phases(rng.normal(size=3)), *GRID.k1d, np.ascontiguousarray(GRID.inv_k2),
            rng.normal(size=3), scale)
    assert np.allclose(compiled.transverse_source(*args), _kernels_py.transverse_source(*args),
                       rtol=1e-13, atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(-2, 2), vx=st.floats(-0.9, 0.9))
def test_rotate_parity(seed, t, vx):
    rng = np.random.default_rng(seed)
    rot = WaveRotation(GRID, t, (vx, 0.0, 0.0))
    e, a = _field(rng), _field(rng)
    out1 = compiled.rotate(*rot.factors, e, a)
    out2 = _kernels_py.rotate(*rot.factors, e, a)
    for x, y in zip(out1, out2):
        assert np.allclose(x, y, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("pattern", ["k", "g1", "g1g2", "h", "all"])
def test_lawson_combine_parity(pattern):
    rng = np.random.default_rng(len(pattern))
    r1 = WaveRotation(GRID, 0.01, (0.3, 0, 0)).factors
    r2 = WaveRotation(GRID, 0.005, (0.3, 0, 0)).factors
    e, a = _field(rng), _field(rng)
    k = _field(rng) if pattern in ("k", "all") else None
    g1 = _field(rng) if pattern in ("g1", "g1g2", "all") else None
    g2 = _field(rng) if pattern in ("g1g2", "all") else None
    h = _field(rng) if pattern in ("h", "all") else None
    rot2 = r2 if (g1 is not None or g2 is not None) else None
    args = (r1, e, a, 0.3, k, rot2, 0.7, g1, g2, 0.2, h)
    out1 = compiled.lawson_combine(*args)
    out2 = _kernels_py.lawson_combine(*args)
    for x, y in zip(out1, out2):
        assert np.allclose(x, y, rtol=1e-13, atol=1e-13)
