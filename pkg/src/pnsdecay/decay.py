"""Decay-exponent fits, lower-bound bands, stability runs and functionals."""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin

from .data_gen import DataRecipe, delta_star, gen_density, gen_velocity
from .exceptions import (CertificateError, InsufficientSamplesError,
                         MissingProbeError, PNSError, SimulationError,
                         WindowExceededError)
from .littlewood_paley import (BesovSpec, NormTrajectory, aggregate,
                               chemin_lerner_norm, lebesgue_besov_norm,
                               partition_for)
from .solver import FluidState, Solver, step_count

log = logging.getLogger(__name__)

NORM_FLOOR = 1e-14
MIN_SAMPLES = 10
HORIZON_FRACTION = 0.1
TOLERANCES = {"linear": 0.10, "nonlinear": 0.15, "high": 0.20}


def validity_horizon(grid, visc, fraction=HORIZON_FRACTION):
    """Latest time at which box decay still mimics the whole space."""
    return fraction * grid.heat_time(visc.max_rate)


def predicted_slope(sigma, sigma0):
    return -0.5 * (sigma - sigma0)


class DecayFit(RegressorMixin, BaseEstimator):
    """Least-squares power law ``norm ~ C (1+t)^slope``.

    ``fit(t, norms)`` regresses ``log(norms)`` on ``log(1+t)``; ``predict``
    returns norms. ``abscissa='log'`` uses ``log t`` instead.
    """

    def __init__(self, abscissa="log1p"):
        self.abscissa = abscissa

    def _x(self, t):
        t = np.asarray(t, dtype=float).ravel()
        return np.log1p(t) if self.abscissa == "log1p" else np.log(t)

    def fit(self, X, y):
        x = self._x(X)
        y = np.log(np.asarray(y, dtype=float).ravel())
        if x.size < 3:
            raise InsufficientSamplesError("need at least 3 samples to fit", n=x.size)
        res = stats.linregress(x, y)
        self.slope_ = float(res.slope)
        self.intercept_ = float(res.intercept)
        self.stderr_ = float(res.stderr)
        self.n_samples_ = int(x.size)
        return self

    def predict(self, X):
        return np.exp(self.intercept_ + self.slope_ * self._x(X))

    def score(self, X, y):
        """R^2 in log space."""
        ly = np.log(np.asarray(y, dtype=float).ravel())
        resid = ly - np.log(self.predict(X))
        ss = np.sum((ly - ly.mean()) ** 2)
        return float(1.0 - np.sum(resid**2) / ss) if ss else 1.0


@dataclass
class DecayFitResult:
    sigma: float
    sigma0: float
    fitted_slope: float
    predicted_slope: float
    stderr: float
    window: tuple
    regime: str
    tolerance: float
    passed: bool
    n_samples: int
    truncated: bool = False
    label: str = ""

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"

    def to_dict(self):
        out = asdict(self)
        out["window"] = list(self.window)
        out["verdict"] = self.verdict
        return out


def fit_series(t, y, sigma, sigma0, window=(1.0, None), regime="all",
               tolerance=TOLERANCES["linear"], horizon=math.inf, predicted=None,
               label=""):
    """Decay fit of a bare norm series ``y(t)``; see ``fit_decay``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    t_end = window[1] if window[1] is not None else t[-1]
    window = (float(window[0]), float(t_end))
    if window[1] > horizon * (1 + 1e-12):
        raise WindowExceededError("fit window ends beyond the validity horizon",
                                  t_end=window[1], horizon=f"{horizon:.4g}")
    keep = (t >= window[0]) & (t <= window[1])
    t, y = t[keep], y[keep]
    truncated = False
    below = np.flatnonzero(y < NORM_FLOOR)
    if below.size:
        cut = below[0]
        log.warning("norm %s hit the %.0e floor at t=%.4g; window truncated",
                    label or f"sigma={sigma:g}", NORM_FLOOR, t[cut])
        t, y = t[:cut], y[:cut]
        truncated = True
        window = (window[0], float(t[-1]) if t.size else window[0])
    if t.size < MIN_SAMPLES:
        raise InsufficientSamplesError("too few samples inside the fit window",
                                       n=int(t.size), required=MIN_SAMPLES)
    model = DecayFit().fit(t, y)
    pred = predicted_slope(sigma, sigma0) if predicted is None else predicted
    passed = abs(model.slope_ - pred) <= tolerance * abs(pred)
    return DecayFitResult(sigma=sigma, sigma0=sigma0, fitted_slope=model.slope_,
                          predicted_slope=pred, stderr=model.stderr_, window=window,
                          regime=regime, tolerance=tolerance, passed=bool(passed),
                          n_samples=int(t.size), truncated=truncated, label=label)


def fit_decay(traj, sigma, sigma0, window=(1.0, None), regime="all",
              tolerance=TOLERANCES["linear"], r=1, horizon=None, predicted=None):
    """Fit the decay exponent of ``||f||_{B^sigma_{2,r}}`` over a window.

    Samples whose norm falls below ``1e-14`` end the window early (a warning
    is logged and ``truncated`` set). Passes when the fitted slope is within
    ``tolerance * |predicted|`` of the prediction.
    """
    spec = BesovSpec(sigma, r, regime, traj.spec.field)
    return fit_series(traj.t, traj.series(spec), sigma, sigma0, window, regime,
                      tolerance, traj.horizon if horizon is None else horizon,
                      predicted, spec.label())


@dataclass
class LowerBoundResult:
    passed: bool
    g_min: float
    g_max: float
    band_ratio: float
    band_limit: float
    sigma: float
    sigma0: float
    window: tuple

    def to_dict(self):
        out = asdict(self)
        out["window"] = list(self.window)
        return out


def check_lower_bound(traj, sigma, sigma0, window=(1.0, None), certificate=None,
                      band_ratio=10.0, r=1, regime="all"):
    """Compensated norm ``g(t) = ||f(t)|| (1+t)^((sigma-sigma0)/2)`` band check."""
    if certificate is None or not certificate.member:
        raise CertificateError("initial data are not certified lower-bound class")
    t_end = window[1] if window[1] is not None else traj.t[-1]
    window = (float(window[0]), float(t_end))
    spec = BesovSpec(sigma, r, regime, traj.spec.field)
    t, y = traj.t, traj.series(spec)
    keep = (t >= window[0]) & (t <= window[1])
    t, y = t[keep], y[keep]
    if t.size == 0:
        raise InsufficientSamplesError("no samples inside the window", n=0)
    g = y * (1.0 + t) ** (0.5 * (sigma - sigma0))
    gmin, gmax = float(g.min()), float(g.max())
    ratio = gmax / gmin if gmin > 0 else math.inf
    return LowerBoundResult(passed=bool(gmin > 0 and ratio <= band_ratio), g_min=gmin,
                            g_max=gmax, band_ratio=ratio, band_limit=band_ratio,
                            sigma=sigma, sigma0=sigma0, window=window)


# -- stability ---------------------------------------------------------------

@dataclass
class StabilityReport:
    initial_error: float
    sup_error_functional: float
    amplification: float
    components: dict = field(default_factory=dict)
    flagged: bool = False

    def to_dict(self):
        return asdict(self)


def error_functional_parts(diff_a, diff_u, d):
    """``||a~||_{L~inf B^{d/2}} , ||u~||_{L~inf B^{d/2-1}}, ||u~||_{L1 B^{d/2+1}}``."""
    return {
        "a_Linf": chemin_lerner_norm(diff_a, math.inf, BesovSpec(d / 2, 1, "all", "a")),
        "u_Linf": chemin_lerner_norm(diff_u, math.inf, BesovSpec(d / 2 - 1, 1)),
        "u_L1": lebesgue_besov_norm(diff_u, 1, BesovSpec(d / 2 + 1, 1)),
    }


def perturbation_direction(grid, seed):
    """Smooth velocity direction with unit ``B^{d/2-1}_{2,1}`` norm."""
    recipe = DataRecipe(kind="smooth-small", amplitude=1.0, seed=seed + 7919,
                        sigma0=-grid.d / 2)
    return gen_velocity(recipe, grid)[0]


def stability_experiment(base, perturbation_size, cfg, t_end, grid, visc,
                         sample_every=1, perturbation=None, smallness=0.05):
    """Run base and perturbed data side by side and measure the error growth.

    The perturbation ``size * direction`` is added to u0 only. A sequence of
    sizes shares one base run and returns one report per size. ``smallness``
    bounds ``||a0||_{B^{d/2}} + ||u0||_{B^{d/2-1}}`` for every data set.
    """
    sizes = np.atleast_1d(np.asarray(perturbation_size, dtype=float))
    partition = partition_for(grid)
    d = grid.d
    crit_u, crit_a = BesovSpec(d / 2 - 1, 1), BesovSpec(d / 2, 1, "all", "a")
    u0, _ = gen_velocity(base, grid)
    a0 = gen_density(base, grid)
    direction = perturbation if perturbation is not None else perturbation_direction(grid, base.seed)
    branches = {"base": u0}
    for i, eps in enumerate(sizes):
        branches[f"perturbed-{i}"] = u0 + direction * float(eps)
    a_size = partition_norm(partition, a0, crit_a)
    for name, u in branches.items():
        size = a_size + partition_norm(partition, u, crit_u)
        if size > smallness:
            raise ValueError(f"{name} data fail the smallness gate: {size:.4g} > {smallness}")
    nsteps, dt = step_count(0.0, t_end, cfg.dt)
    solvers = {name: Solver(FluidState(0.0, a0, u, visc), cfg, dt=dt)
               for name, u in branches.items()}
    diffs = {name: (NormTrajectory(partition.ks, crit_a), NormTrajectory(partition.ks, crit_u))
             for name in branches if name != "base"}

    def record():
        sb = solvers["base"]
        for name, (ta, tu) in diffs.items():
            sp = solvers[name]
            da, du = sp.ah - sb.ah, sp.uh - sb.uh
            ta.append(sb.t, partition.block_norms_from_power(np.abs(da[0]) ** 2, "half"))
            tu.append(sb.t, partition.block_norms_from_power(
                np.sum(du.real**2 + du.imag**2, axis=0), "half"))

    record()
    for i in range(1, nsteps + 1):
        for name, s in solvers.items():
            try:
                s.advance()
            except PNSError as exc:
                label = "base" if name == "base" else "perturbed"
                raise SimulationError(exc, s.t, branch=label) from exc
        if i % sample_every == 0 or i == nsteps:
            record()
    reports = []
    for name, (ta, tu) in diffs.items():
        initial = partition_norm(partition, branches[name] - u0, crit_u)
        parts = error_functional_parts(ta, tu, d)
        sup = float(sum(parts.values()))
        reports.append(StabilityReport(
            initial_error=initial, sup_error_functional=sup,
            amplification=sup / initial if initial > 0 else math.nan,
            components=parts, flagged=not initial > 0))
    return reports if np.ndim(perturbation_size) else reports[0]


def partition_norm(partition, f, spec):
    return float(aggregate(partition.block_norms(f), partition.ks, spec.s, spec.r, spec.regime))


# -- time-weighted functionals -----------------------------------------------

@dataclass
class FunctionalReport:
    X_t: float
    X_low_sigma0: float
    X_M: float
    D_t: float
    M: float
    theta: float
    alpha: float
    sources: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _angle(t):
    return math.sqrt(1.0 + t * t)


def functional_probes(d, sigma0):
    """Probe specs the functional evaluation reads from."""
    return [BesovSpec(d / 2, 1, "all", "a"), BesovSpec(d / 2 - 1, 1, "all", "u"),
            BesovSpec(d / 2 + 1, 1, "all", "u"), BesovSpec(sigma0, math.inf, "low", "u"),
            BesovSpec(sigma0 + 2, math.inf, "low", "u")]


def evaluate_functionals(trajs, d, sigma0, M=None, theta=0.1, n_sigma=17):
    """Discrete X(t), X_{l,sigma0}(t), X_M(t) and D(t) at the last recorded time.

    ``trajs`` is a list of ``NormTrajectory``; block norms are shared by every
    spec on the same field, so one trajectory per field suffices.
    """
    alpha = 0.5 * (d / 2 + 1 - sigma0)
    m_floor = max(alpha, 1.0)
    M = m_floor + 0.5 if M is None else M
    if not M > m_floor:
        raise ValueError(f"M must exceed max((d/2+1-sigma0)/2, 1) = {m_floor:g}")
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    by_field = {}
    for tr in trajs:
        by_field.setdefault(tr.spec.field, tr)
    missing = [s.label() for s in functional_probes(d, sigma0) if s.field not in by_field]
    if missing:
        raise MissingProbeError("functionals need probes that were not recorded",
                                missing=",".join(missing))
    ta, tu = by_field["a"], by_field["u"]
    sources = {}

    def cl(tr, rho, spec, name):
        sources.setdefault(name, []).append(f"L~{'inf' if rho == math.inf else 1}:{spec.label()}")
        return chemin_lerner_norm(tr, rho, spec)

    def lb(tr, rho, spec, name):
        sources.setdefault(name, []).append(f"L{'inf' if rho == math.inf else 1}:{spec.label()}")
        return lebesgue_besov_norm(tr, rho, spec)

    x_t = (cl(ta, math.inf, BesovSpec(d / 2, 1, "all", "a"), "X_t")
           + cl(tu, math.inf, BesovSpec(d / 2 - 1, 1), "X_t")
           + lb(tu, 1, BesovSpec(d / 2 + 1, 1), "X_t"))
    x_low = (cl(tu, math.inf, BesovSpec(sigma0, math.inf, "low"), "X_low_sigma0")
             + lb(tu, 1, BesovSpec(sigma0 + 2, math.inf, "low"), "X_low_sigma0"))
    weighted = tu.time_weighted(lambda t: t**M)
    x_m = (cl(weighted, math.inf, BesovSpec(d / 2 - 1, 1), "X_M")
           + lb(weighted, 1, BesovSpec(d / 2 + 1, 1), "X_M"))
    sup_low = 0.0
    for sigma in np.linspace(sigma0 + theta, d / 2 + 1, n_sigma):
        w = tu.time_weighted(lambda t, s=sigma: _angle(t) ** (0.5 * (s - sigma0)))
        sup_low = max(sup_low, lebesgue_besov_norm(w, math.inf, BesovSpec(sigma, 1, "low")))
    sources["D_t"] = [f"sup over {n_sigma} sigma in [{sigma0 + theta:g}, {d / 2 + 1:g}] of "
                      f"L_inf(<t>^((s-sigma0)/2) u, B^s_2,1 low)"]
    d_t = (sup_low
           + cl(tu.time_weighted(lambda t: _angle(t) ** alpha), math.inf,
                BesovSpec(d / 2 - 1, 1, "high"), "D_t")
           + cl(tu.time_weighted(lambda t: t**alpha), math.inf,
                BesovSpec(d / 2 + 1, 1, "high"), "D_t"))
    return FunctionalReport(X_t=x_t, X_low_sigma0=x_low, X_M=x_m, D_t=d_t, M=M,
                            theta=theta, alpha=alpha, sources=sources)


def initial_delta_star(state, sigma0):
    return delta_star(state.a, state.u, sigma0)
