"""Lattice, transform and free-flow contracts."""

import numpy as np
import pytest

from nfnls.errors import ConfigurationError
from nfnls.grids import Field, forward, free_propagate, inverse, make_grid


def random_field(grid, rng):
    s = rng.standard_normal(grid.M) + 1j * rng.standard_normal(grid.M)
    return Field(grid=grid, samples=s)


@pytest.mark.parametrize(
    "B,n_max,M,L_over_pi",
    [(16, 32, 1024, 32), (1, 1, 2, 2), (8, 4, 64, 16)],
)
def test_make_grid_arithmetic(B, n_max, M, L_over_pi):
    g = make_grid(B, n_max)
    assert g.M == M
    assert g.L == pytest.approx(L_over_pi * np.pi)
    xi = g.bin_frequencies()
    assert xi[0] == -M // 2 / B
    assert np.allclose(np.diff(xi), 1.0 / B)


def test_make_grid_rejects_bad_sizes():
    with pytest.raises(ConfigurationError):
        make_grid(0, 4)
    with pytest.raises(ConfigurationError):
        make_grid(4, 0)


def test_constant_field_is_dc():
    g = make_grid(8, 4)
    F = forward(Field(grid=g, samples=np.ones(g.M)))
    hot = np.abs(F.coeffs) > 1e-12
    assert hot.sum() == 1
    assert np.flatnonzero(hot)[0] == g.M // 2  # bin j = 0


def test_pure_tone_is_single_bin():
    g = make_grid(8, 4)
    k = 2.5  # bin-aligned: j = k*B = 20
    x = g.sample_points()
    F = forward(Field(grid=g, samples=np.exp(1j * k * x)))
    hot = np.abs(F.coeffs) > 1e-9 * np.max(np.abs(F.coeffs))
    assert hot.sum() == 1
    assert np.flatnonzero(hot)[0] == g.M // 2 + int(k * g.bins_per_box)


def test_round_trip_100_random_fields():
    g = make_grid(16, 8)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        f = random_field(g, rng)
        back = inverse(forward(f))
        err = np.max(np.abs(back.samples - f.samples)) / np.max(np.abs(f.samples))
        worst = max(worst, err)
    assert worst < 1e-12


def test_parseval_equality():
    g = make_grid(16, 8)
    rng = np.random.default_rng(8)
    for _ in range(20):
        f = random_field(g, rng)
        F = forward(f)
        assert F.l2_norm() == pytest.approx(f.l2_norm(), rel=1e-12)


def test_free_propagate_identity_and_unitarity():
    g = make_grid(16, 8)
    rng = np.random.default_rng(9)
    F = forward(random_field(g, rng))
    assert np.allclose(free_propagate(F, 0.0).coeffs, F.coeffs)
    for t in (0.1, 1.0, 10.0):
        assert free_propagate(F, t).l2_norm() == pytest.approx(F.l2_norm(), rel=1e-12)


def test_free_propagate_single_bin_phase():
    # tone at xi = 2, t = 0.5: phase must be exactly -t*xi^2 under direction=+1
    g = make_grid(8, 4)
    coeffs = np.zeros(g.M, dtype=complex)
    j = 2 * g.bins_per_box  # xi = 2
    coeffs[g.M // 2 + j] = 1.0
    from nfnls.grids import Spectrum

    F = Spectrum(grid=g, coeffs=coeffs)
    t = 0.5
    out = free_propagate(F, t)
    val = out.coeffs[g.M // 2 + j]
    assert val == pytest.approx(np.exp(-1j * t * 4.0))
    # direction=-1 undoes it
    assert np.allclose(free_propagate(out, t, direction=-1).coeffs, F.coeffs)


def test_free_propagate_group_law():
    g = make_grid(16, 8)
    rng = np.random.default_rng(10)
    F = forward(random_field(g, rng))
    one = free_propagate(F, 0.7 + 0.4)
    two = free_propagate(free_propagate(F, 0.7), 0.4)
    assert np.max(np.abs(one.coeffs - two.coeffs)) < 1e-12 * np.max(np.abs(F.coeffs))
