"""Machine-precision invariant suite: projectors, semigroup, Besov norms."""

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .lame import Viscosity, helmholtz, lame_propagate, project_p, project_q
from .littlewood_paley import BesovSpec, besov_norm, partition_for, phi, regime_mask
from .spectral import BoxGrid, SpectralField, divergence, transform_forward

RTOL = 1e-12


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    seconds: float
    cases: int

    @property
    def passed(self):
        return bool(self.error <= self.tolerance)

    def to_dict(self):
        out = asdict(self)
        out["passed"] = self.passed
        return out


def random_field(grid, rng, components):
    return transform_forward(rng.standard_normal((components,) + grid.shape), grid)


def _rel(diff, ref):
    ref = np.linalg.norm(np.ravel(ref))
    return float(np.linalg.norm(np.ravel(diff)) / ref) if ref else float(np.linalg.norm(np.ravel(diff)))


def check_projectors(n_fields=100, seed=0, grid=None):
    """P+Q=I, PQ=0, P^2=P, div P=0 and S(t)S(s)=S(t+s) on random fields."""
    grid = grid or BoxGrid(2, 64, 2 * math.pi)
    visc = Viscosity(0.05, 0.03)
    rng = np.random.default_rng(seed)
    kscale = np.sqrt(grid.k_squared)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(n_fields):
        u = random_field(grid, rng, grid.d)
        pair = helmholtz(u)
        p, q = pair.p_part.amplitudes, pair.q_part.amplitudes
        a = u.amplitudes
        worst = max(
            worst,
            _rel(p + q - a, a),
            _rel(project_q(pair.p_part).amplitudes, a),
            _rel(project_p(pair.p_part).amplitudes - p, a),
            _rel(divergence(pair.p_part).amplitudes, kscale * np.abs(a).sum(axis=0)),
        )
        t, s = rng.uniform(0.05, 1.0, size=2)
        two = lame_propagate(lame_propagate(u, visc, s), visc, t).amplitudes
        one = lame_propagate(u, visc, s + t).amplitudes
        worst = max(worst, _rel(two - one, one))
    return CheckResult("projector-semigroup", worst, RTOL, time.perf_counter() - start, n_fields)


def plane_wave(grid, m, direction):
    """Exact spectrum of ``direction * cos(k.x)`` for lattice index ``m``."""
    amp = np.zeros((grid.d,) + grid.shape, dtype=complex)
    idx = tuple(int(mi) % grid.N for mi in m)
    neg = tuple(-int(mi) % grid.N for mi in m)
    for c, v in enumerate(direction):
        amp[(c,) + idx] += 0.5 * v
        amp[(c,) + neg] += 0.5 * v
    return SpectralField(grid, amp)


def check_single_modes(times=(0.1, 1.0, 10.0)):
    """Solenoidal and potential plane waves against their closed forms."""
    grid = BoxGrid(2, 32, 2 * math.pi)
    visc = Viscosity(0.1, 0.05)
    x, y = grid.coordinates()
    m = (1, 2)
    k = [grid.k_fundamental * mi for mi in m]
    phase = k[0] * x + k[1] * y
    k2 = k[0] ** 2 + k[1] ** 2
    modes = {
        "solenoidal": ((-k[1], k[0]), visc.mu),
        "potential": ((k[0], k[1]), visc.potential_rate),
    }
    worst = 0.0
    start = time.perf_counter()
    for direction, rate in modes.values():
        f = plane_wave(grid, m, direction)
        for t in times:
            got = lame_propagate(f, visc, t).to_physical()
            exact = math.exp(-rate * k2 * t) * np.stack([v * np.cos(phase) for v in direction])
            worst = max(worst, _rel(got - exact, exact))
    return CheckResult("single-mode-propagator", worst, RTOL, time.perf_counter() - start,
                       len(modes) * len(times))


def brute_force_besov(f, spec):
    """Dense per-mode evaluation, independent of the cached sparse blocks."""
    grid = f.grid
    partition = partition_for(grid)
    power = np.sum(np.abs(f.amplitudes) ** 2, axis=0)
    kmag = np.sqrt(grid.k_squared)
    total = [] if spec.r == math.inf else 0.0
    mask = regime_mask(partition.ks, spec.regime)
    for k, keep in zip(partition.ks, mask):
        if not keep:
            continue
        m = phi(kmag / 2.0**k)
        term = 2.0 ** (spec.s * k) * math.sqrt(grid.volume * np.sum(m * m * power))
        if spec.r == math.inf:
            total.append(term)
        else:
            total += term
    if spec.r == math.inf:
        return max(total) if total else 0.0
    return total


def check_besov_oracle(n_fields=50, seed=1, grid=None):
    grid = grid or BoxGrid(2, 64, 64.0)
    rng = np.random.default_rng(seed)
    specs = [BesovSpec(s, r, regime) for s in (-1, 0, 1, 2) for r in (1, math.inf)
             for regime in ("all", "low", "high")]
    worst = 0.0
    start = time.perf_counter()
    for _ in range(n_fields):
        f = random_field(grid, rng, 1)
        for spec in specs:
            fast = besov_norm(f, spec)
            slow = brute_force_besov(f, spec)
            worst = max(worst, abs(fast - slow) / slow if slow else abs(fast))
    return CheckResult("besov-oracle", worst, RTOL, time.perf_counter() - start,
                       n_fields * len(specs))


def run_suite(scale=1.0):
    """All checks; ``scale`` shrinks the random-field counts."""
    return [check_projectors(max(1, int(100 * scale))), check_single_modes(),
            check_besov_oracle(max(1, int(50 * scale)))]
