"""Experiment pipelines behind the command-line subcommands.

Each pipeline writes its data files into ``out`` and returns a ``RunRecord``
holding the verdicts plus whatever was measured along the way.
"""

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import records
from .data_gen import delta_star, gen_density, gen_velocity
from .decay import (TOLERANCES, check_lower_bound, evaluate_functionals, fit_decay,
                    fit_series, stability_experiment, validity_horizon)
from .exceptions import InsufficientSamplesError
from .lame import lame_propagate
from .littlewood_paley import BesovSpec, NormTrajectory, partition_for
from .solver import FluidState, simulate
from .verify import run_suite


@dataclass
class RunRecord:
    verdicts: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(v["passed"] for v in self.verdicts)

    def add(self, experiment, passed, predicted=None, fitted=None, stderr=None, detail=""):
        self.verdicts.append({"experiment": experiment, "passed": bool(passed),
                              "predicted": predicted, "fitted": fitted, "stderr": stderr,
                              "detail": detail})

    def add_fit(self, name, res):
        detail = f"window=[{res.window[0]:g},{res.window[1]:g}] n={res.n_samples} tol={res.tolerance:g}"
        if res.truncated:
            detail += " truncated-at-norm-floor"
        self.add(name, res.passed, res.predicted_slope, res.fitted_slope, res.stderr, detail)


def initial_state(cfg):
    u0, cert = gen_velocity(cfg.recipe, cfg.grid)
    a0 = gen_density(cfg.recipe, cfg.grid)
    return FluidState(0.0, a0, u0, cfg.viscosity), cert


def horizon_of(cfg):
    return validity_horizon(cfg.grid, cfg.viscosity)


def _split_by_field(trajs):
    out = {}
    for tr in trajs:
        out.setdefault(tr.spec.field, []).append(tr)
    return out


def _write_trajectories(out, trajs):
    for fld, group in _split_by_field(trajs).items():
        records.write_norm_csv(out / f"norms_{fld}.csv", group)
        records.write_block_csv(out / f"blocks_{fld}.csv", group[0])


def _try_fit(record, name, fn):
    try:
        res = fn()
    except InsufficientSamplesError as exc:
        record.add(name, False, detail=exc.summary)
        return None
    record.add_fit(name, res)
    return res


def _sigma_fits(cfg, record, traj, tolerance, prefix):
    sigma0 = cfg.recipe.sigma0
    window = cfg.fit.window
    for s in cfg.fit.sigmas:
        _try_fit(record, f"{prefix}:sigma={s:g}",
                 lambda s=s: fit_decay(traj, s, sigma0, window, cfg.fit.regime, tolerance))


def run_linear(cfg, out):
    """Exact Lame propagation sampled on the fit window."""
    state, cert = initial_state(cfg)
    partition = partition_for(cfg.grid)
    horizon = horizon_of(cfg)
    traj = NormTrajectory(partition.ks, BesovSpec(cfg.fit.sigmas[0]), horizon=horizon)
    times = np.concatenate([[0.0], np.linspace(*cfg.fit.window, cfg.samples)])
    for t in np.unique(times):
        traj.append(t, partition.block_norms(lame_propagate(state.u, cfg.viscosity, t)))
    trajs = [traj.with_spec(BesovSpec(s)) for s in cfg.fit.sigmas]
    _write_trajectories(out, trajs)
    record = RunRecord()
    tol = cfg.fit.tolerance or TOLERANCES["linear"]
    _sigma_fits(cfg, record, traj, tol, "linear-decay")
    lower = cfg.fit.lower_sigma
    if lower is None and cfg.experiment == "lower-bound":
        lower = cfg.fit.sigmas[0]
    dstar = delta_star(state.a, state.u, cfg.recipe.sigma0, partition)
    record.constants["delta_star"] = dstar
    if lower is not None:
        lb = check_lower_bound(traj, lower, cfg.recipe.sigma0, cfg.fit.window, cert,
                               cfg.fit.band_ratio)
        record.add(f"lower-bound:sigma={lower:g}", lb.passed, cfg.fit.band_ratio, lb.band_ratio,
                   detail=f"g_min={lb.g_min:.6g} g_max={lb.g_max:.6g}")
        record.constants["c5"] = lb.g_min
        record.constants["C3_over_delta_star"] = lb.g_max / dstar if dstar else math.nan
    record.extra["certificate"] = cert.to_dict()
    return record


def density_verdicts(cfg, record, traj_a):
    """Boundedness without decay for the density's critical norm."""
    d = cfg.grid.d
    spec = BesovSpec(d / 2, 1, "all", "a")
    t, y = traj_a.t, traj_a.series(spec)
    w0, w1 = cfg.fit.window
    keep = (t >= w0) & (t <= w1)
    if not np.any(keep) or y[keep][0] == 0:
        return
    ref = y[keep][0]
    ratio = max(float(np.max(y[keep] / ref)), float(np.max(ref / y[keep])))
    record.add("density-bounded", ratio <= cfg.fit.density_band, cfg.fit.density_band, ratio,
               detail="max factor away from the value at the window start")
    res = fit_series(t, y, d / 2, d / 2, cfg.fit.window, tolerance=1.0, predicted=0.0,
                     label=spec.label(), horizon=traj_a.horizon)
    ok = abs(res.fitted_slope) <= cfg.fit.density_tolerance
    record.add("density-no-decay", ok, 0.0, res.fitted_slope, res.stderr,
               detail=f"|slope| <= {cfg.fit.density_tolerance:g}")


def run_simulate(cfg, out, initial=None):
    if initial is None:
        state, cert = initial_state(cfg)
    else:
        state, cert = initial, None
    horizon = horizon_of(cfg)
    started = time.perf_counter()
    result = simulate(state, cfg.stepper, cfg.t_end, cfg.all_probes(), cfg.sample_every,
                      horizon=horizon)
    record = RunRecord()
    record.extra["solver"] = result.metadata
    record.extra["wall_seconds"] = time.perf_counter() - started
    _write_trajectories(out, result.trajectories)
    records.save_checkpoint(out / "final.npz", result.state)
    by_field = _split_by_field(result.trajectories)
    traj_u, traj_a = by_field["u"][0], by_field["a"][0]
    tol = cfg.fit.tolerance or TOLERANCES["nonlinear"]
    if result.state.t >= cfg.fit.window[1]:
        _sigma_fits(cfg, record, traj_u, tol, "nonlinear-decay")
        d, sigma0 = cfg.grid.d, cfg.recipe.sigma0
        if cfg.fit.high_sigma is not None:
            _try_fit(record, f"high-frequency:sigma={cfg.fit.high_sigma:g}",
                     lambda: fit_decay(traj_u, cfg.fit.high_sigma, sigma0, cfg.fit.window,
                                       "high", cfg.fit.high_tolerance,
                                       predicted=-0.5 * (d / 2 + 1 - sigma0)))
        density_verdicts(cfg, record, traj_a)
    partition = partition_for(cfg.grid)
    dstar = delta_star(state.a, state.u, cfg.recipe.sigma0, partition)
    record.constants["delta_star"] = dstar
    try:
        fr = evaluate_functionals([traj_a, traj_u], cfg.grid.d, cfg.recipe.sigma0)
        record.extra["functionals"] = fr.to_dict()
        if dstar > 0:
            record.constants["X_low_over_delta_star"] = fr.X_low_sigma0 / dstar
    except ValueError as exc:
        record.extra["functionals_error"] = str(exc)
    if cert is not None:
        record.extra["certificate"] = cert.to_dict()
    return record


def run_stability(cfg, out):
    sizes = tuple(cfg.fit.perturbations)
    reports = stability_experiment(cfg.recipe, list(sizes), cfg.stepper, cfg.t_end,
                                   cfg.grid, cfg.viscosity, cfg.sample_every)
    record = RunRecord()
    amps = []
    for eps, rep in zip(sizes, reports):
        record.extra.setdefault("stability", []).append({"size": eps, **rep.to_dict()})
        if rep.flagged:
            record.add(f"stability:eps={eps:g}", rep.sup_error_functional <= 1e-12, 0.0,
                       rep.sup_error_functional, detail="zero perturbation: determinism")
            continue
        amps.append(rep.amplification)
        record.add(f"stability:eps={eps:g}", rep.amplification <= cfg.fit.amplification_gate,
                   cfg.fit.amplification_gate, rep.amplification,
                   detail=f"initial={rep.initial_error:.6g} sup={rep.sup_error_functional:.6g}")
    if len(amps) >= 2:
        spread = max(amps) / min(amps) - 1.0
        record.add("stability:linearity", spread <= cfg.fit.linearity, cfg.fit.linearity, spread,
                   detail="relative spread of amplification across sizes")
    if amps:
        record.constants["C2_measured"] = max(amps)
    with open(out / "stability.csv", "w") as fh:
        fh.write("perturbation,initial_error,sup_error_functional,amplification\n")
        for eps, rep in zip(sizes, reports):
            fh.write(f"{eps!r},{rep.initial_error!r},{rep.sup_error_functional!r},"
                     f"{rep.amplification!r}\n")
    return record


def run_gen_data(cfg, out):
    state, cert = initial_state(cfg)
    records.save_checkpoint(out / "initial.npz", state, {"config_digest": cfg.digest()})
    record = RunRecord()
    record.extra["certificate"] = cert.to_dict()
    record.constants["delta_star"] = delta_star(state.a, state.u, cfg.recipe.sigma0)
    if cfg.recipe.kind == "lower-bound-class":
        record.add("certificate", cert.member, detail=f"c0={cert.c0:.6g} M0={cert.M0:g}")
    return record


def run_norms(cfg, out, state=None):
    if state is None:
        state, _ = initial_state(cfg)
    partition = partition_for(state.grid)
    trajs = []
    cache = {}
    for spec in cfg.all_probes():
        if spec.field not in cache:
            cache[spec.field] = partition.block_norms(state.a if spec.field == "a" else state.u)
        tr = NormTrajectory(partition.ks, spec)
        tr.append(state.t, cache[spec.field])
        trajs.append(tr)
    _write_trajectories(out, trajs)
    record = RunRecord()
    record.extra["norms"] = {tr.spec.label(): float(tr.series()[0]) for tr in trajs}
    return record


def run_fit(cfg, out, csv_path):
    """Refit decay exponents from a norm CSV written by an earlier run."""
    series = records.read_norm_csv(csv_path)
    record = RunRecord()
    d, sigma0 = cfg.grid.d, cfg.recipe.sigma0
    tol = cfg.fit.tolerance or TOLERANCES["linear"]
    for (s, r, regime), (t, y) in sorted(series.items(), key=lambda kv: (kv[0][2], kv[0][0])):
        if regime == "high":
            pred, tolerance = -0.5 * (d / 2 + 1 - sigma0), cfg.fit.high_tolerance
        else:
            pred, tolerance = None, tol
        _try_fit(record, f"fit:sigma={s:g}:r={'inf' if r == math.inf else 1}:{regime}",
                 lambda: fit_series(t, y, s, sigma0, cfg.fit.window, regime, tolerance,
                                    horizon_of(cfg), pred))
    return record


def run_verify(out, scale=1.0):
    record = RunRecord()
    started = time.perf_counter()
    checks = run_suite(scale)
    with open(Path(out) / "verify.csv", "w") as fh:
        fh.write("check,error,tolerance,seconds,cases\n")
        for c in checks:
            record.add(f"verify:{c.name}", c.passed, c.tolerance, c.error,
                       detail=f"cases={c.cases} seconds={c.seconds:.3g}")
            fh.write(f"{c.name},{c.error!r},{c.tolerance!r},{c.seconds:.6f},{c.cases}\n")
    record.extra["wall_seconds"] = time.perf_counter() - started
    return record
