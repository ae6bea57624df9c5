"""Initial data with prescribed low-frequency Besov profiles."""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import GridTooSmallError, VacuumError
from .lame import q_project_array
from .littlewood_paley import (CHI_OUTER, LOW_BLOCK_BUFFER, LOW_SPLIT_LAST,
                               BesovSpec, besov_norm, low_high_split,
                               partition_for, phi)
from .spectral import SpectralField, transform_forward

KINDS = ("smooth-small", "besov-tail", "lower-bound-class")
MIN_LOW_BLOCKS = 4
MIN_CERTIFIED = 3
CALIBRATION_ITERS = 200
MIN_DENSITY = 0.9


@dataclass
class DataRecipe:
    """How to build ``(a0, u0)``.

    ``amplitude`` is the flat level of ``2^(sigma0 k)||Delta_k u0||`` over the
    low blocks (or the critical norm for ``smooth-small``).
    ``velocity_critical_norm``, when set, rescales u0 so its
    ``B^{d/2-1}_{2,1}`` norm takes that value.
    """

    kind: str = "lower-bound-class"
    sigma0: float = -1.0
    amplitude: float = 1.0
    seed: int = 0
    divergence_mix: float = 0.5
    density_sigma: float = None
    density_amplitude: float = 0.0
    velocity_critical_norm: float = None

    def __post_init__(self):
        if self.density_sigma is None:
            self.density_sigma = self.sigma0 + 1.0

    def violations(self, d):
        out = []
        if self.kind not in KINDS:
            out.append(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not -d / 2 <= self.sigma0 < d / 2 - 1:
            out.append(f"sigma0={self.sigma0} outside admissible range "
                       f"[-d/2, d/2-1) = [{-d / 2:g}, {d / 2 - 1:g})")
        if self.amplitude < 0:
            out.append(f"amplitude must be nonnegative, got {self.amplitude}")
        if not 0 <= self.divergence_mix <= 1:
            out.append(f"divergence_mix must lie in [0, 1], got {self.divergence_mix}")
        if self.density_amplitude < 0:
            out.append(f"density_amplitude must be nonnegative, got {self.density_amplitude}")
        if self.velocity_critical_norm is not None and self.velocity_critical_norm < 0:
            out.append("velocity_critical_norm must be nonnegative")
        return out

    def validate(self, d):
        v = self.violations(d)
        if v:
            raise ValueError("; ".join(v))

    def to_dict(self):
        return asdict(self)


@dataclass
class BesovCertificate:
    """Per-block evidence for membership in the lower-bound class."""

    sigma0: float
    ks: np.ndarray
    profile: np.ndarray
    certified: list = field(default_factory=list)
    c0: float = 0.0
    M0: float = math.inf
    flatness: float = math.inf
    member: bool = False
    k_floor: int = 0

    def to_dict(self):
        return {
            "sigma0": self.sigma0,
            "ks": [int(k) for k in self.ks],
            "profile": [float(p) for p in self.profile],
            "certified": [int(k) for k in self.certified],
            "c0": self.c0,
            "M0": self.M0,
            "flatness": self.flatness,
            "member": self.member,
            "k_floor": self.k_floor,
        }

    def __eq__(self, other):
        if not isinstance(other, BesovCertificate):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def certify_class(f, sigma0, partition=None, rtol=1e-12):
    """Certify ``f`` on the resolvable low blocks ``k_min <= k <= -1``.

    Blocks whose weighted norm exceeds ``rtol`` times the largest one form the
    certified set; ``c0`` is their minimum and ``M0`` the largest gap. Since
    ``k_j -> -inf`` cannot be observed on a box, membership requires the set
    to reach down to ``k_min + 1`` and to hold at least ``MIN_CERTIFIED``
    blocks (a single Fourier shell never touches more than two).
    """
    partition = partition or partition_for(f.grid)
    ks = partition.ks
    low = ks <= LOW_SPLIT_LAST
    ks_low = ks[low]
    profile = 2.0 ** (sigma0 * ks_low) * partition.block_norms(f)[low]
    cert = BesovCertificate(sigma0=float(sigma0), ks=ks_low, profile=profile,
                            k_floor=int(partition.k_min))
    top = profile.max() if profile.size else 0.0
    if top <= 0:
        return cert
    keep = profile > rtol * top
    certified = ks_low[keep]
    cert.certified = [int(k) for k in certified]
    cert.c0 = float(profile[keep].min())
    cert.flatness = float(profile[keep].max() / cert.c0)
    gaps = np.diff(certified)
    reaches_floor = certified[0] <= partition.k_min + 1
    cert.member = bool(reaches_floor and certified.size >= MIN_CERTIFIED)
    if cert.member:
        cert.M0 = float(gaps.max())
    return cert


def _low_blocks(grid):
    partition = partition_for(grid)
    ks = partition.ks[partition.ks <= LOW_SPLIT_LAST]
    if ks.size < MIN_LOW_BLOCKS:
        # k_min <= -MIN_LOW_BLOCKS needs 2 pi / L * 4/3 <= 2^(buffer - MIN_LOW_BLOCKS)
        needed = 2 * math.pi * CHI_OUTER * 2.0 ** (MIN_LOW_BLOCKS - LOW_BLOCK_BUFFER)
        raise GridTooSmallError("grid resolves fewer than 4 dyadic blocks below k = 0",
                                blocks=int(ks.size), required_L=f"{needed:.4g}")
    return partition, ks


def _white_spectrum(grid, rng, components):
    """Spectrum of seeded real white noise (Hermitian by construction)."""
    noise = rng.standard_normal((components,) + grid.shape)
    return transform_forward(noise, grid).amplitudes


def _normalize_modes(v):
    mag = np.sqrt(np.sum(v.real**2 + v.imag**2, axis=0))
    return np.divide(v, mag, out=np.zeros_like(v), where=mag > 0)


def _random_direction(grid, rng, mix, vector):
    """Per-mode unit vectors, Hermitian, with energy split P:Q = (1-mix):mix."""
    if not vector:
        return _normalize_modes(_white_spectrum(grid, rng, 1))
    g = _white_spectrum(grid, rng, grid.d)
    q = q_project_array(g, grid.odd_wavenumbers)
    p = g - q
    return math.sqrt(1.0 - mix) * _normalize_modes(p) + math.sqrt(mix) * _normalize_modes(q)


def _calibrated_profile(grid, partition, ks, weight_exponent, level):
    """Radial profile sum_j w_j phi_j with ``2^(e k)||Delta_k||`` = level on ks.

    Assumes unit per-mode modulus in the direction field; the fixed-point
    rescale removes the shell-count constant. Modes the 2/3 rule drops are
    left out of the measurement.
    """
    kmag = grid.k_magnitude
    phis = {int(j): phi(kmag * 2.0 ** (-j)) for j in ks}
    target = level * 2.0 ** (-weight_exponent * ks)
    # shell-count initial guess: |u_hat| ~ 2^(-j(e + d/2)) L^(-d) (2 pi)^(d/2)
    w = target * 2.0 ** (-ks * grid.d / 2.0) * (2 * math.pi) ** (grid.d / 2) / grid.volume
    all_ks = partition.ks
    keep = grid.dealias_mask
    for _ in range(CALIBRATION_ITERS):
        prof = sum(wj * phis[int(j)] for wj, j in zip(w, ks))
        power = prof**2 * keep
        measured = partition.block_norms_from_power(power)
        measured = measured[np.isin(all_ks, ks)]
        ratio = np.divide(target, measured, out=np.ones_like(target), where=measured > 0)
        w = w * ratio
        if np.max(np.abs(ratio - 1.0)) < 1e-13:
            break
    return sum(wj * phis[int(j)] for wj, j in zip(w, ks))


def _build(grid, profile, direction):
    amp = profile[None] * direction
    amp[(slice(None),) + (0,) * grid.d] = 0.0
    return SpectralField(grid, amp * grid.dealias_mask)


def gen_velocity(recipe, grid):
    """Velocity field and its lower-bound-class certificate."""
    recipe.validate(grid.d)
    partition, ks = _low_blocks(grid)
    if recipe.amplitude == 0:
        u = SpectralField.zeros(grid, grid.d)
        return u, certify_class(u, recipe.sigma0, partition)
    rng = np.random.default_rng(recipe.seed)
    direction = _random_direction(grid, rng, recipe.divergence_mix, vector=True)
    if recipe.kind == "lower-bound-class":
        profile = _calibrated_profile(grid, partition, ks, recipe.sigma0, recipe.amplitude)
    elif recipe.kind == "besov-tail":
        # block levels drawn in [amplitude/4, amplitude]; bounded, not flat
        levels = recipe.amplitude * rng.uniform(0.25, 1.0, size=ks.size)
        profile = sum(
            _calibrated_profile(grid, partition, np.array([j]), recipe.sigma0, lvl)
            for j, lvl in zip(ks, levels))
    else:
        profile = _smooth_profile(grid)
    u = _build(grid, profile, direction)
    if recipe.kind == "smooth-small":
        u = u * (recipe.amplitude / besov_norm(u, BesovSpec(grid.d / 2 - 1, 1), partition))
    if recipe.velocity_critical_norm is not None:
        crit = besov_norm(u, BesovSpec(grid.d / 2 - 1, 1), partition)
        u = u * (recipe.velocity_critical_norm / crit)
    return u, certify_class(u, recipe.sigma0, partition)


def _smooth_profile(grid):
    # Gaussian bump centred on |xi| = 1/2, well inside the dealias band
    kmag = grid.k_magnitude
    return np.exp(-((kmag - 0.5) ** 2) / (2 * 0.15**2))


def gen_density(recipe, grid):
    """Density fluctuation with ``B^{d/2}_{2,1}`` norm ``density_amplitude``.

    The low-block profile ``2^(k density_sigma)||Delta_k a0||`` is flat.
    """
    recipe.validate(grid.d)
    partition, ks = _low_blocks(grid)
    if recipe.density_amplitude == 0:
        return SpectralField.zeros(grid, 1)
    # independent stream from the velocity
    rng = np.random.default_rng([recipe.seed, 1])
    direction = _random_direction(grid, rng, 0.0, vector=False)
    if recipe.kind == "smooth-small":
        profile = _smooth_profile(grid)
    else:
        profile = _calibrated_profile(grid, partition, ks, recipe.density_sigma, 1.0)
    a = _build(grid, profile, direction)
    a = a * (recipe.density_amplitude / besov_norm(a, BesovSpec(grid.d / 2, 1), partition))
    lowest = 1.0 + float(a.to_physical().min())
    if lowest < MIN_DENSITY:
        raise VacuumError("requested density amplitude violates the no-vacuum floor",
                          min_density=f"{lowest:.4g}", floor=MIN_DENSITY)
    return a


def delta_star(a0, u0, sigma0, partition=None):
    """``||u0^l||_{B^sigma0_{2,inf}} + ||u0^h||_{B^{d/2-1}_{2,1}} + ||a0||_{B^{d/2}_{2,1}}``."""
    partition = partition or partition_for(u0.grid)
    d = u0.grid.d
    ul, uh = low_high_split(u0, partition)
    return (besov_norm(ul, BesovSpec(sigma0, math.inf), partition)
            + besov_norm(uh, BesovSpec(d / 2 - 1, 1), partition)
            + besov_norm(a0, BesovSpec(d / 2, 1), partition))
