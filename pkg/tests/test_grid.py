import numpy as np
import pytest

from hierlab.grid import (Field, bessel_multiply, dft_forward, dft_inverse,
                          free_propagate, inner, l2_norm, make_grid,
                          normalized, random_low_mode_field, sobolev_norm_field,
                          zero_field)


def plane_wave(grid, mode=1):
    x = grid.points
    return Field(grid, 1, np.exp(1j * (2 * np.pi * mode / grid.L) * x))


def test_make_grid_mesh():
    g = make_grid(1, 8, 2 * np.pi)
    assert g.h == pytest.approx(np.pi / 4)
    assert g.h * g.n == pytest.approx(g.L)


def test_make_grid_dft_layout():
    g = make_grid(2, 4, 1.0)
    assert g.num_points == 16
    assert set(np.round(g.frequencies, 10)) == {0.0, round(2 * np.pi, 10),
                                                round(-4 * np.pi, 10),
                                                round(-2 * np.pi, 10)}


@pytest.mark.parametrize("dim,n,L", [(1, 7, 1.0), (1, 2, 1.0), (1, 8, -1.0),
                                     (4, 8, 1.0)])
def test_make_grid_rejects(dim, n, L):
    with pytest.raises(ValueError):
        make_grid(dim, n, L)


def test_dft_constant_concentrates_at_zero():
    g = make_grid(1, 8, 2 * np.pi)
    f = Field(g, 1, np.ones(8))
    spec = dft_forward(f).data
    assert abs(spec[0]) > 1e-12
    assert np.max(np.abs(spec[1:])) < 1e-12


def test_dft_roundtrip_random():
    g = make_grid(2, 8, 2 * np.pi)
    rng = np.random.default_rng(0)
    f = random_low_mode_field(g, 1, rng)
    back = dft_inverse(dft_forward(f))
    assert np.max(np.abs(back.data - f.data)) < 1e-12


def test_dft_single_mode():
    g = make_grid(1, 16, 2 * np.pi)
    spec = dft_forward(plane_wave(g)).data
    mask = np.zeros(16, dtype=bool)
    mask[1] = True
    assert np.all(np.abs(spec[~mask]) < 1e-10)
    assert abs(spec[1]) > 1.0


def test_parseval():
    g = make_grid(1, 16, 2 * np.pi)
    rng = np.random.default_rng(1)
    f = random_low_mode_field(g, 2, rng, unit_norm=False)
    spatial = g.h**2 * np.sum(np.abs(f.data) ** 2)
    spectral = np.sum(np.abs(dft_forward(f).data) ** 2) / g.L**2
    assert spatial == pytest.approx(spectral, rel=1e-12)


def test_bessel_constant_unchanged():
    g = make_grid(1, 8, 2 * np.pi)
    f = Field(g, 1, np.full(8, 2.0 + 1.0j))
    for alpha in (0.0, 1.0, 2.0):
        out = bessel_multiply(f, alpha)
        assert np.max(np.abs(out.data - f.data)) < 1e-12


def test_bessel_plane_wave_alpha2():
    g = make_grid(1, 16, 2 * np.pi)
    f = plane_wave(g)
    out = bessel_multiply(f, 2.0)
    assert np.max(np.abs(out.data - 2.0 * f.data)) < 1e-10


def test_bessel_alpha_zero_identity():
    g = make_grid(1, 8, 2 * np.pi)
    rng = np.random.default_rng(2)
    f = random_low_mode_field(g, 1, rng)
    assert np.max(np.abs(bessel_multiply(f, 0.0).data - f.data)) == 0.0


def test_bessel_rejects_negative_alpha():
    g = make_grid(1, 8, 2 * np.pi)
    with pytest.raises(ValueError):
        bessel_multiply(zero_field(g, 1), -1.0)


def test_free_propagate_t0_identity():
    g = make_grid(1, 8, 2 * np.pi)
    rng = np.random.default_rng(3)
    f = random_low_mode_field(g, 1, rng)
    assert np.max(np.abs(free_propagate(f, 0.0).data - f.data)) == 0.0


def test_free_propagate_plane_wave_phase():
    g = make_grid(1, 16, 2 * np.pi)
    f = plane_wave(g)
    out = free_propagate(f, 1.0, [1])
    assert np.max(np.abs(out.data - np.exp(-1j) * f.data)) < 1e-12


def test_free_propagate_group_law_and_inverse():
    g = make_grid(1, 16, 2 * np.pi)
    rng = np.random.default_rng(4)
    f = random_low_mode_field(g, 2, rng)
    fwd = free_propagate(free_propagate(f, 0.3, [1, -1]), -0.3, [1, -1])
    assert np.max(np.abs(fwd.data - f.data)) < 1e-12
    ab = free_propagate(free_propagate(f, 0.2), 0.1)
    once = free_propagate(f, 0.3)
    assert np.max(np.abs(ab.data - once.data)) / l2_norm(f) < 1e-10


def test_free_propagate_preserves_l2():
    g = make_grid(1, 16, 2 * np.pi)
    rng = np.random.default_rng(5)
    f = random_low_mode_field(g, 1, rng)
    assert l2_norm(free_propagate(f, 0.7)) == pytest.approx(1.0, abs=1e-12)


def test_free_propagate_commutes_with_bessel():
    g = make_grid(1, 16, 2 * np.pi)
    rng = np.random.default_rng(6)
    f = random_low_mode_field(g, 1, rng)
    a = free_propagate(bessel_multiply(f, 1.0), 0.4)
    b = bessel_multiply(free_propagate(f, 0.4), 1.0)
    assert np.max(np.abs(a.data - b.data)) < 1e-12


def test_sobolev_field_norm_plane_wave():
    g = make_grid(1, 16, 2 * np.pi)
    f = normalized(plane_wave(g))
    assert sobolev_norm_field(f, 1.0) == pytest.approx(np.sqrt(2.0), rel=1e-12)


def test_inner_and_norm_consistency():
    g = make_grid(1, 8, 2 * np.pi)
    rng = np.random.default_rng(7)
    f = random_low_mode_field(g, 1, rng, unit_norm=False)
    assert l2_norm(f) ** 2 == pytest.approx(inner(f, f).real, rel=1e-12)
