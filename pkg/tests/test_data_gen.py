import math

import numpy as np
import pytest

from pnsdecay.data_gen import (DataRecipe, certify_class, delta_star, gen_density,
                               gen_velocity)
from pnsdecay.exceptions import GridTooSmallError, VacuumError
from pnsdecay.lame import project_q
from pnsdecay.littlewood_paley import BesovSpec, besov_norm, partition_for
from pnsdecay.spectral import BoxGrid, SpectralField
from pnsdecay.verify import plane_wave

GRID = BoxGrid(2, 128, 128.0)


def weighted_profile(f, sigma, ks):
    part = partition_for(f.grid)
    norms = part.block_norms(f)
    return np.array([2.0 ** (sigma * k) * norms[list(part.ks).index(k)] for k in ks])


def test_recipe_violations_cite_range():
    msgs = DataRecipe(sigma0=2.0).violations(2)
    assert any("[-d/2, d/2-1)" in m and "[-1, 0)" in m for m in msgs)
    assert DataRecipe(kind="nope", divergence_mix=2).violations(2)
    assert not DataRecipe().violations(2)
    assert DataRecipe(sigma0=-0.5).density_sigma == 0.5


def test_zero_amplitude():
    u, cert = gen_velocity(DataRecipe(amplitude=0.0), GRID)
    assert not np.any(u.amplitudes)
    assert cert.certified == [] and not cert.member and cert.c0 == 0
    assert not np.any(gen_density(DataRecipe(density_amplitude=0.0), GRID).amplitudes)


def test_grid_too_small_reports_needed_length():
    with pytest.raises(GridTooSmallError) as err:
        gen_velocity(DataRecipe(), BoxGrid(2, 32, 2 * math.pi))
    assert "required_L" in err.value.summary


@pytest.mark.parametrize("d,N,L", [(2, 128, 128.0), (3, 32, 64.0)])
def test_lowest_sigma0_profile_is_flat(d, N, L):
    grid = BoxGrid(d, N, L)
    sigma0 = -d / 2
    u, cert = gen_velocity(DataRecipe(sigma0=sigma0, amplitude=0.7), grid)
    ks = cert.ks
    prof = weighted_profile(u, sigma0, ks)
    assert np.allclose(prof, 0.7, rtol=1e-10)
    assert cert.flatness <= 1.5 and cert.member


def test_calibrated_low_norm():
    u, _ = gen_velocity(DataRecipe(sigma0=-1.0, amplitude=1.0), GRID)
    assert abs(besov_norm(u, BesovSpec(-1, math.inf, "low")) - 1) <= 0.2


def test_fields_are_real_mean_zero_and_dealiased():
    for kind in ("lower-bound-class", "besov-tail", "smooth-small"):
        u, _ = gen_velocity(DataRecipe(kind=kind, amplitude=0.05, seed=3), GRID)
        assert u.hermitian_defect() < 1e-12
        assert np.all(u.amplitudes[:, 0, 0] == 0)
        assert not np.any(u.amplitudes * ~GRID.dealias_mask)


def test_smooth_small_critical_norm():
    u, _ = gen_velocity(DataRecipe(kind="smooth-small", amplitude=0.02), GRID)
    assert besov_norm(u, BesovSpec(0, 1)) == pytest.approx(0.02, rel=1e-12)


def test_divergence_mix_extremes():
    u, _ = gen_velocity(DataRecipe(divergence_mix=0.0), GRID)
    assert np.linalg.norm(project_q(u).amplitudes) < 1e-12 * np.linalg.norm(u.amplitudes)
    u, _ = gen_velocity(DataRecipe(divergence_mix=1.0), GRID)
    assert np.linalg.norm(project_q(u).amplitudes - u.amplitudes) < 1e-12 * np.linalg.norm(u.amplitudes)


def test_seeded_determinism_and_certificate_consistency():
    r = DataRecipe(seed=11)
    u1, c1 = gen_velocity(r, GRID)
    u2, c2 = gen_velocity(r, GRID)
    assert np.array_equal(u1.amplitudes, u2.amplitudes)
    assert certify_class(u1, r.sigma0) == c1 == c2
    u3, _ = gen_velocity(DataRecipe(seed=12), GRID)
    assert not np.array_equal(u1.amplitudes, u3.amplitudes)


def test_velocity_critical_norm_rescale():
    u, cert = gen_velocity(DataRecipe(velocity_critical_norm=0.01), GRID)
    assert besov_norm(u, BesovSpec(0, 1)) == pytest.approx(0.01, rel=1e-12)
    assert cert.member


def test_density_amplitude_and_profile():
    recipe = DataRecipe(density_amplitude=0.01)
    a = gen_density(recipe, GRID)
    assert abs(besov_norm(a, BesovSpec(1, 1)) - 0.01) <= 1e-6
    assert 1 + a.to_physical().min() > 0.95
    ks = [k for k in partition_for(GRID).ks if k <= -1]
    prof = weighted_profile(a, recipe.density_sigma, ks)
    assert prof.max() / prof.min() <= 1.5
    with pytest.raises(VacuumError):
        gen_density(DataRecipe(density_amplitude=50.0), GRID)


def test_certificate_examples():
    z = SpectralField.zeros(GRID, 2)
    assert certify_class(z, -1.0).c0 == 0
    u, cert = gen_velocity(DataRecipe(amplitude=2.0), GRID)
    assert cert.c0 >= 0.5 * 2.0 and cert.M0 == 1 and cert.member
    for m in [(1, 0), (3, 0), (6, 2), (20, 0)]:
        single = plane_wave(GRID, m, (0.0, 1.0))
        c = certify_class(single, -1.0)
        assert not c.member and c.M0 == math.inf


def test_delta_star_components():
    recipe = DataRecipe(density_amplitude=0.01, velocity_critical_norm=0.01)
    u, _ = gen_velocity(recipe, GRID)
    a = gen_density(recipe, GRID)
    ds = delta_star(a, u, -1.0)
    assert 0.01 < ds < 0.01 + 2 * besov_norm(u, BesovSpec(-1, math.inf)) + 0.01
