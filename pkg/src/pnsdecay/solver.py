"""Pseudo-spectral time stepper for the fluctuation form of the system.

    da/dt + div u = -div(a u)
    du/dt - mu Lap u - (mu+nu) grad div u
        = -u.grad u + mu f(a) Lap u + (mu+nu) f(a) grad div u,   f(a) = -a/(1+a)

The Lame part is integrated exactly through its P/Q eigen-decomposition
(exponential time differencing); everything else is explicit. Internally the
solver works on real-FFT half spectra; public functions take and return full
``SpectralField`` objects.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .exceptions import (CFLError, NonFiniteError, PNSError, SimulationError,
                         VacuumError)
from .lame import Viscosity, q_project_array
from .littlewood_paley import BesovSpec, NormTrajectory, partition_for
from .spectral import SpectralField

SCHEMES = ("etdrk2", "exp-euler")
UNDER_RESOLVED_RATIO = 1e-6


@dataclass
class StepperConfig:
    dt: float
    scheme: str = "etdrk2"
    cfl_guard: float = 0.5
    vacuum_floor: float = 0.1

    def violations(self):
        out = []
        if not self.dt > 0:
            out.append(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            out.append(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0 < self.cfl_guard < 1:
            out.append(f"cfl_guard must lie in (0, 1), got {self.cfl_guard}")
        if not self.vacuum_floor > 0:
            out.append(f"vacuum_floor must be positive, got {self.vacuum_floor}")
        return out

    def validate(self):
        v = self.violations()
        if v:
            raise ValueError("; ".join(v))

    def to_dict(self):
        return {"dt": self.dt, "scheme": self.scheme, "cfl_guard": self.cfl_guard,
                "vacuum_floor": self.vacuum_floor}


@dataclass
class FluidState:
    t: float
    a: SpectralField
    u: SpectralField
    visc: Viscosity

    @property
    def grid(self):
        return self.u.grid

    def copy(self):
        return FluidState(self.t, self.a.copy(), self.u.copy(), self.visc)


# -- half-spectrum helpers ---------------------------------------------------

def to_half(f):
    return f.amplitudes[..., : f.grid.N // 2 + 1].copy()


def to_full(grid, half):
    """Rebuild the full FFT layout from a real-FFT half spectrum."""
    n = grid.N
    tail = half[..., 1 : n // 2][..., ::-1]
    # mirror the remaining axes: index i -> (-i) mod N
    if grid.d > 1:
        axes = tuple(range(-grid.d, -1))
        tail = np.roll(np.flip(tail, axis=axes), 1, axis=axes)
    return SpectralField(grid, np.concatenate([half, np.conj(tail)], axis=-1))


def _phi1(z):
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(zs) / zs)


def _phi2(z):
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    series = 0.5 + z / 6.0 + z * z / 24.0 + z**3 / 120.0
    return np.where(small, series, (np.expm1(zs) - zs) / (zs * zs))


class _Kernel:
    """Wavevectors, dealias mask and exponential coefficients in half layout."""

    def __init__(self, grid, visc, dt):
        self.grid = grid
        self.visc = visc
        d, n = grid.d, grid.N
        self.s = float(n**d)
        self.axes = grid.axes
        kf = grid.k_fundamental
        m_full = np.fft.fftfreq(n, d=1.0 / n)
        m_half = np.arange(n // 2 + 1, dtype=float)
        ms = [m_full] * (d - 1) + [m_half]
        shape = (n,) * (d - 1) + (n // 2 + 1,)
        self.half_shape = shape
        k, kodd, keep = [], [], np.ones(shape, dtype=bool)
        for axis, m in enumerate(ms):
            bshape = [1] * d
            bshape[axis] = m.size
            mm = m.reshape(bshape)
            k.append(kf * mm)
            kodd.append(np.where(np.abs(mm) == n // 2, 0.0, kf * mm))
            keep = keep & (3 * np.abs(mm) <= n)
        self.k = k
        self.kodd = kodd
        self.k2 = sum(kk**2 for kk in k)
        self.mask = keep
        self.set_dt(dt)

    def set_dt(self, dt):
        self.dt = dt
        lam_p = -self.visc.mu * self.k2 * dt
        lam_q = -self.visc.potential_rate * self.k2 * dt
        self.E = (np.exp(lam_p), np.exp(lam_q))
        self.P1 = (dt * _phi1(lam_p), dt * _phi1(lam_q))
        self.P2 = (dt * _phi2(lam_p), dt * _phi2(lam_q))

    def apply(self, coeffs, v):
        """``g_P P v + g_Q Q v`` per mode."""
        gp, gq = coeffs
        return gp * v + (gq - gp) * q_project_array(v, self.kodd)

    def physical(self, h):
        return sfft.irfftn(h * self.s, s=self.grid.shape, axes=self.axes, workers=-1)

    def spectral(self, x):
        return sfft.rfftn(x, axes=self.axes, workers=-1) / self.s

    def evaluate(self, ah, uh, cfg=None, check_cfl=False):
        """Nonlinear momentum terms and full density RHS, dealiased.

        Returns ``(N_hat, R_hat, diag)``.
        """
        mu, nu = self.visc.mu, self.visc.nu
        a = self.physical(ah[0])
        u = self.physical(uh)
        rho = 1.0 + a
        floor = cfg.vacuum_floor if cfg is not None else 0.0
        imin = int(np.argmin(rho))
        rho_min = float(rho.flat[imin])
        if not rho_min > floor:
            loc = np.unravel_index(imin, rho.shape)
            raise VacuumError("density fell to the vacuum floor",
                              min_density=f"{rho_min:.6g}", location=tuple(int(i) for i in loc),
                              floor=floor)
        umax = float(np.sqrt(np.max(np.sum(u * u, axis=0))))
        if check_cfl and cfg is not None:
            number = self.dt * umax * self.grid.k_nyquist
            if number > cfg.cfl_guard:
                raise CFLError("CFL guard exceeded", cfl=f"{number:.4g}",
                               guard=cfg.cfl_guard, dt=self.dt)
        f = -a / rho
        conv = np.zeros_like(u)
        for i, ki in enumerate(self.kodd):
            conv += u[i] * self.physical(1j * ki * uh)
        div_h = sum(1j * ki * uh[i] for i, ki in enumerate(self.kodd))
        lame_h = np.stack([-mu * self.k2 * uh[j] + (mu + nu) * 1j * kj * div_h
                           for j, kj in enumerate(self.kodd)])
        nonlin = -conv + f * self.physical(lame_h)
        n_h = self.spectral(nonlin) * self.mask
        flux_h = self.spectral(a * u)
        div_flux = sum(1j * ki * flux_h[i] for i, ki in enumerate(self.kodd))
        r_h = ((-div_h - div_flux) * self.mask)[None]
        return n_h, r_h, {"rho_min": rho_min, "u_max": umax}


# -- public single-evaluation API --------------------------------------------

def _kernel_for(state, dt=1.0):
    return _Kernel(state.grid, state.visc, dt)


def rhs_density(state, cfg=None):
    """``-div u - div(a u)``, assembled pseudo-spectrally."""
    cfg = cfg or StepperConfig(dt=1.0)
    k = _kernel_for(state)
    _, r, _ = k.evaluate(to_half(state.a), to_half(state.u), cfg)
    return to_full(state.grid, r)


def rhs_momentum_nonlinear(state, cfg=None):
    """``-u.grad u + mu f(a) Lap u + (mu+nu) f(a) grad div u`` (no Lame part)."""
    cfg = cfg or StepperConfig(dt=1.0)
    k = _kernel_for(state)
    n, _, _ = k.evaluate(to_half(state.a), to_half(state.u), cfg)
    return to_full(state.grid, n)


class Solver:
    """Stateful stepper; ``advance`` moves one step of the configured size."""

    def __init__(self, state, cfg, dt=None):
        cfg.validate()
        self.cfg = cfg
        self.grid = state.grid
        self.visc = state.visc
        self.t0 = float(state.t)
        self.nsteps = 0
        self.kernel = _Kernel(self.grid, self.visc, dt or cfg.dt)
        self.ah = to_half(state.a)
        self.uh = to_half(state.u)
        self.partition = partition_for(self.grid)
        self.rho_min = math.inf
        self.u_max = 0.0

    @property
    def dt(self):
        return self.kernel.dt

    @property
    def t(self):
        return self.t0 + self.nsteps * self.kernel.dt

    def state(self):
        return FluidState(self.t, to_full(self.grid, self.ah),
                          to_full(self.grid, self.uh), self.visc)

    def advance(self):
        k = self.kernel
        n0, r0, diag = k.evaluate(self.ah, self.uh, self.cfg, check_cfl=True)
        self._track(diag)
        u1 = k.apply(k.E, self.uh) + k.apply(k.P1, n0)
        a1 = self.ah + k.dt * r0
        if self.cfg.scheme == "exp-euler":
            u_new, a_new = u1, a1
        else:
            n1, r1, diag = k.evaluate(a1, u1, self.cfg)
            self._track(diag)
            u_new = u1 + k.apply(k.P2, n1 - n0)
            a_new = self.ah + 0.5 * k.dt * (r0 + r1)
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(a_new))):
            raise NonFiniteError("non-finite amplitude after step", step=self.nsteps + 1)
        self.uh, self.ah = u_new, a_new
        self.nsteps += 1

    def _track(self, diag):
        self.rho_min = min(self.rho_min, diag["rho_min"])
        self.u_max = max(self.u_max, diag["u_max"])

    def block_norms(self, which):
        h = self.uh if which == "u" else self.ah
        power = np.sum(h.real**2 + h.imag**2, axis=0)
        return self.partition.block_norms_from_power(power, layout="half")

    def density_tail_ratio(self):
        """Largest density amplitude in the outermost retained shell, relative."""
        top = float(np.max(np.abs(self.ah)))
        if top == 0:
            return 0.0
        n = self.grid.N
        m = [np.abs(kk) / self.grid.k_fundamental for kk in self.kernel.k]
        mmax = np.zeros(self.kernel.half_shape)
        for mm in m:
            mmax = np.maximum(mmax, mm)
        shell = (mmax >= n // 3 - 1) & self.kernel.mask
        return float(np.max(np.abs(self.ah[0][shell])) / top)

    def metadata(self):
        ratio = self.density_tail_ratio()
        return {
            "dt": self.dt,
            "steps": self.nsteps,
            "scheme": self.cfg.scheme,
            "min_density": self.rho_min,
            "max_speed": self.u_max,
            "density_tail_ratio": ratio,
            "under_resolved": ratio > UNDER_RESOLVED_RATIO,
            "block_range": self.partition.truncation(),
        }


def step(state, cfg):
    """One step of size ``cfg.dt``."""
    solver = Solver(state, cfg)
    solver.advance()
    return solver.state()


def step_count(t0, t_end, dt):
    """Steps needed to reach ``t_end``; dt is shrunk to land on it exactly."""
    n = max(1, math.ceil((t_end - t0) / dt - 1e-9))
    return n, (t_end - t0) / n


@dataclass
class SimulationResult:
    state: FluidState
    trajectories: list
    metadata: dict = field(default_factory=dict)


def simulate(initial, cfg, t_end, probes=(), sample_every=1, horizon=math.inf,
             callback=None):
    """Step from ``initial.t`` to ``t_end`` recording block norms.

    Every probe gets a ``NormTrajectory`` of its field's block norms, sampled
    at the initial time, every ``sample_every`` steps, and at the end.
    """
    probes = [p if isinstance(p, BesovSpec) else BesovSpec.from_label(p) for p in probes]
    cfg.validate()
    if t_end < initial.t:
        raise ValueError(f"t_end={t_end} precedes the initial time {initial.t}")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    partition = partition_for(initial.grid)
    trajs = [NormTrajectory(partition.ks, p, horizon=horizon) for p in probes]
    if t_end == initial.t:
        return SimulationResult(initial, trajs, {"steps": 0})
    nsteps, dt = step_count(initial.t, t_end, cfg.dt)
    solver = Solver(initial, cfg, dt=dt)

    def record():
        cache = {}
        for tr in trajs:
            fld = tr.spec.field
            if fld not in cache:
                cache[fld] = solver.block_norms(fld)
            tr.append(solver.t, cache[fld])

    record()
    for i in range(1, nsteps + 1):
        try:
            solver.advance()
        except PNSError as exc:
            raise SimulationError(exc, solver.t) from exc
        if i % sample_every == 0 or i == nsteps:
            record()
        if callback is not None:
            callback(solver)
    return SimulationResult(solver.state(), trajs, solver.metadata())
