"""Spot checks that the slot/axis bookkeeping survives d > 1."""

import warnings

import numpy as np
import pytest

from hierlab.definetti import nls_flow
from hierlab.grid import Field, make_grid, random_low_mode_field
from hierlab.interactions import (bbgky_collision_main,
                                  collision_fourier_oracle, delta_surrogate,
                                  gaussian_profile, gp_collision,
                                  realize_potential)
from hierlab.marginals import (free_propagate_marginal, partial_trace,
                               pure_product_marginal, sobolev_norm, trace)

G2 = make_grid(2, 6, 2 * np.pi)


def test_planar_product_kernel_algebra():
    phi = random_low_mode_field(G2, 1, np.random.default_rng(0), max_mode=1)
    g2 = pure_product_marginal(phi, 2)
    assert trace(g2).real == pytest.approx(1.0, abs=1e-12)
    reduced = partial_trace(g2)
    assert sobolev_norm(reduced - pure_product_marginal(phi, 1), 0.0) < 1e-13


def test_planar_delta_surrogate_contraction():
    phi = random_low_mode_field(G2, 1, np.random.default_rng(1), max_mode=1)
    g2 = pure_product_marginal(phi, 2)
    a = bbgky_collision_main(g2, 1, "+", delta_surrogate(G2))
    b = gp_collision(g2, 1, "+")
    assert np.max(np.abs(a.kernel - b.kernel)) < 1e-14


def test_planar_fourier_oracle_agreement():
    phi = random_low_mode_field(G2, 1, np.random.default_rng(2), max_mode=1)
    g2 = pure_product_marginal(phi, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pot = realize_potential(gaussian_profile(G2, 0.8), 0.2, 9, width=0.8)
    assert pot.mass_ratio == pytest.approx(1.0, abs=1e-12)
    oracle = collision_fourier_oracle(g2, 0.07, pot)
    spatial = bbgky_collision_main(free_propagate_marginal(g2, 0.07), 1, "+", pot)
    rel = sobolev_norm(oracle - spatial, 0.0) / sobolev_norm(spatial, 0.0)
    assert rel < 1e-12


def test_cubic_flow_in_three_dimensions():
    g3 = make_grid(3, 4, 2 * np.pi)
    c = 0.3 + 0.2j
    phi = Field(g3, 1, np.full(g3.slot_shape(1), c))
    out = nls_flow(phi, 0.4, 1e-3)
    expected = c * np.exp(-1j * abs(c) ** 2 * 0.4)
    assert np.max(np.abs(out.data - expected)) < 1e-12
