import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnsdecay.data_gen import DataRecipe, gen_velocity
from pnsdecay.decay import (DecayFit, check_lower_bound, evaluate_functionals, fit_decay,
                            fit_series, predicted_slope, stability_experiment,
                            validity_horizon)
from pnsdecay.exceptions import (CertificateError, InsufficientSamplesError,
                                 MissingProbeError, WindowExceededError)
from pnsdecay.lame import Viscosity, lame_propagate
from pnsdecay.littlewood_paley import BesovSpec, NormTrajectory, partition_for
from pnsdecay.solver import StepperConfig
from pnsdecay.spectral import BoxGrid


def power_law_traj(exponent, times, ks=(-1, 0), s=0.0, field="u"):
    tr = NormTrajectory(np.array(ks), BesovSpec(s, 1, "all", field))
    for t in times:
        row = np.zeros(len(ks))
        row[ks.index(0)] = (1 + t) ** exponent
        tr.append(t, row)
    return tr


def test_exact_power_law_slope():
    t = np.linspace(0, 50, 40)
    model = DecayFit().fit(t, 3.0 * (1 + t) ** -0.75)
    assert model.slope_ == pytest.approx(-0.75, abs=1e-10)
    assert model.score(t, 3.0 * (1 + t) ** -0.75) == pytest.approx(1.0)
    assert np.allclose(model.predict(t), 3.0 * (1 + t) ** -0.75, rtol=1e-10)
    res = fit_decay(power_law_traj(-0.75, t), 0.5, -1.0, (1.0, 50.0))
    assert res.fitted_slope == pytest.approx(-0.75, abs=1e-10) and res.passed


def test_predicted_slopes():
    assert predicted_slope(0.0, -1.0) == -0.5
    d, sigma0 = 2, -1.0
    assert -0.5 * (d / 2 + 1 - sigma0) == -1.5


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1e6), st.floats(min_value=-3, max_value=0))
def test_fit_is_unit_invariant(c, exponent):
    t = np.linspace(1, 30, 20)
    y = (1 + t) ** exponent * np.exp(0.01 * np.sin(t))
    a = DecayFit().fit(t, y)
    b = DecayFit().fit(t, c * y)
    assert b.slope_ == pytest.approx(a.slope_, abs=1e-9)


def test_preconditions():
    t = np.linspace(0, 20, 8)
    with pytest.raises(InsufficientSamplesError):
        fit_decay(power_law_traj(-1, t), 1.0, -1.0, (1.0, 20.0))
    tr = power_law_traj(-1, np.linspace(0, 20, 40))
    tr.horizon = 10.0
    with pytest.raises(WindowExceededError):
        fit_decay(tr, 1.0, -1.0, (1.0, 20.0))


def test_floor_truncation(caplog):
    t = np.linspace(0, 40, 81)
    y = np.exp(-t)
    with caplog.at_level(logging.WARNING):
        res = fit_series(t, y, 1.0, -1.0, (1.0, 40.0), predicted=-1.0, label="u:2:1:high")
    assert res.truncated and res.window[1] < 33
    assert "floor" in caplog.text


def test_lower_bound_band():
    grid = BoxGrid(2, 128, 128.0)
    u, cert = gen_velocity(DataRecipe(), grid)
    t = np.linspace(0, 30, 40)
    res = check_lower_bound(power_law_traj(-0.5, t), 0.0, -1.0, (1.0, 30.0), cert)
    assert res.band_ratio == pytest.approx(1.0, abs=1e-12) and res.passed
    bad = cert.__class__(sigma0=-1.0, ks=cert.ks, profile=cert.profile)
    with pytest.raises(CertificateError):
        check_lower_bound(power_law_traj(-0.5, t), 0.0, -1.0, (1.0, 30.0), bad)
    with pytest.raises(CertificateError):
        check_lower_bound(power_law_traj(-0.5, t), 0.0, -1.0, (1.0, 30.0), None)


def test_validity_horizon():
    grid = BoxGrid(2, 512, 256.0)
    h = validity_horizon(grid, Viscosity(1.0))
    # max(mu, 2 mu + nu) = 2
    assert h == pytest.approx(0.1 * (256 / (2 * math.pi)) ** 2 / 2)
    assert h > 64


def test_linear_slope_ordering():
    grid = BoxGrid(2, 128, 128.0)
    visc = Viscosity(1.0)
    u, _ = gen_velocity(DataRecipe(), grid)
    part = partition_for(grid)
    tr = NormTrajectory(part.ks, BesovSpec(0.0), horizon=validity_horizon(grid, visc))
    for t in np.linspace(1, 16, 30):
        tr.append(t, part.block_norms(lame_propagate(u, visc, t)))
    slopes = [fit_decay(tr, s, -1.0, (1.0, 16.0)).fitted_slope for s in (0.0, 0.5, 1.0, 2.0)]
    assert all(b <= a + 0.05 for a, b in zip(slopes, slopes[1:]))


def _two_block(times, bu, ba, ks=(-1, 0)):
    tu = NormTrajectory(np.array(ks), BesovSpec(0.0))
    ta = NormTrajectory(np.array(ks), BesovSpec(1.0, 1, "all", "a"))
    for t in times:
        tu.append(t, bu)
        ta.append(t, ba)
    return ta, tu


def test_functionals_zero_solution():
    ta, tu = _two_block(np.linspace(0, 2, 5), [0, 0], [0, 0])
    rep = evaluate_functionals([ta, tu], 2, -1.0)
    assert rep.X_t == rep.X_low_sigma0 == rep.X_M == rep.D_t == 0
    assert rep.alpha == 1.5 and rep.M == 2.0 and rep.theta == 0.1


def test_functionals_closed_form():
    T = 2.0
    bu, ba = np.array([0.3, 0.2]), np.array([0.05, 0.04])
    ta, tu = _two_block(np.linspace(0, T, 2001), bu, ba)
    rep = evaluate_functionals([ta, tu], 2, -1.0, M=2.0)
    w = 2.0 ** np.array([-1, 0])
    assert rep.X_t == pytest.approx(np.sum(w * ba) + np.sum(bu) + T * np.sum(w**2 * bu), rel=1e-12)
    assert rep.X_low_sigma0 == pytest.approx(max(bu / w) + T * max(bu * w), rel=1e-12)
    x_m = T**2 * np.sum(bu) + T**3 / 3 * np.sum(w**2 * bu)
    assert rep.X_M == pytest.approx(x_m, rel=1e-5)
    assert rep.sources["X_t"] and rep.sources["D_t"]


def test_functionals_validation():
    ta, tu = _two_block(np.linspace(0, 1, 3), [1, 1], [1, 1])
    with pytest.raises(MissingProbeError) as err:
        evaluate_functionals([tu], 2, -1.0)
    assert "a:1:1:all" in err.value.summary
    with pytest.raises(ValueError):
        evaluate_functionals([ta, tu], 2, -1.0, M=1.5)
    with pytest.raises(ValueError):
        evaluate_functionals([ta, tu], 2, -1.0, theta=0.0)


def test_stability_small_grid():
    grid = BoxGrid(2, 64, 64.0)
    recipe = DataRecipe(density_amplitude=0.01, velocity_critical_norm=0.01)
    reports = stability_experiment(recipe, [0.0, 1e-3, 1e-4], StepperConfig(dt=0.125), 4.0,
                                   grid, Viscosity(1.0), sample_every=2)
    zero, big, small = reports
    assert zero.flagged and math.isnan(zero.amplification) and zero.sup_error_functional <= 1e-12
    assert big.initial_error == pytest.approx(1e-3)
    assert 1 <= big.amplification <= 10
    assert abs(big.amplification / small.amplification - 1) <= 0.3
    single = stability_experiment(recipe, 1e-3, StepperConfig(dt=0.125), 1.0, grid, Viscosity(1.0))
    assert single.initial_error == pytest.approx(1e-3)
    with pytest.raises(ValueError):
        stability_experiment(DataRecipe(), 1e-3, StepperConfig(dt=0.125), 1.0, grid, Viscosity(1.0))
