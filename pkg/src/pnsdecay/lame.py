"""Helmholtz projectors and the exact Fourier-side Lame semigroup."""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import CertificateError, ShapeError, WindowExceededError
from .littlewood_paley import partition_for
from .spectral import SpectralField


@dataclass(frozen=True)
class Viscosity:
    mu: float
    nu: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 2 * self.mu + self.nu > 0:
            raise ValueError(f"2 mu + nu must be positive, got {2 * self.mu + self.nu}")

    @property
    def potential_rate(self):
        """Decay rate factor ``2 mu + nu`` of curl-free modes."""
        return 2 * self.mu + self.nu

    @property
    def max_rate(self):
        return max(self.mu, self.potential_rate)

    def to_dict(self):
        return {"mu": self.mu, "nu": self.nu}


@dataclass
class HelmholtzPair:
    p_part: SpectralField
    q_part: SpectralField


def _check_vector(u):
    if u.components != u.grid.d:
        raise ShapeError("Helmholtz projection needs a d-component field",
                         expected=u.grid.d, received=u.components)


def q_project_array(amp, kvec):
    """``xi xi^T / |xi|^2`` applied per mode; the zero mode maps to zero.

    ``amp`` has the component axis first; ``kvec`` is a tuple of broadcastable
    wavenumber arrays (Nyquist-zeroed).
    """
    k2 = sum(k * k for k in kvec)
    inv = np.divide(1.0, k2, out=np.zeros(np.broadcast(*kvec).shape), where=k2 > 0)
    kdotu = sum(k * amp[i] for i, k in enumerate(kvec))
    coef = kdotu * inv
    return np.stack([k * coef for k in kvec])


def helmholtz(u):
    """Split ``u`` into divergence-free and potential parts.

    The mean mode goes entirely into ``p_part``.
    """
    _check_vector(u)
    q = q_project_array(u.amplitudes, u.grid.odd_wavenumbers)
    return HelmholtzPair(SpectralField(u.grid, u.amplitudes - q), SpectralField(u.grid, q))


def project_p(u):
    return helmholtz(u).p_part


def project_q(u):
    return helmholtz(u).q_part


def lame_factors(grid, visc, t):
    """Per-mode decay factors ``(exp(-mu|k|^2 t), exp(-(2mu+nu)|k|^2 t))``."""
    k2 = grid.k_squared
    return np.exp(-visc.mu * k2 * t), np.exp(-visc.potential_rate * k2 * t)


def lame_propagate(u0, visc, t):
    """Exact solution of the linear Lame system at time ``t``."""
    if t < 0:
        raise ValueError(f"propagation time must be nonnegative, got {t}")
    _check_vector(u0)
    if t == 0:
        return u0.copy()
    ep, eq = lame_factors(u0.grid, visc, t)
    q = q_project_array(u0.amplitudes, u0.grid.odd_wavenumbers)
    return SpectralField(u0.grid, ep * (u0.amplitudes - q) + eq * q)


def envelope_threshold(t):
    """Largest admissible block index ``-log2(1+t)/2``."""
    return -0.5 * math.log2(1.0 + t)


def linear_lower_envelope(u0, visc, t, sigma, sigma0, certificate=None, partition=None):
    """Single-block analytic lower envelope for ``||u_L(t)||_{B^sigma_{2,1}}``.

    Maximum over resolvable ``k <= -log2(1+t)/2`` of
    ``exp(-64 max(mu, 2mu+nu) 4^k t / 9) 2^(sigma k) ||Delta_k u0||``.
    """
    from .data_gen import certify_class

    if t < 1:
        raise ValueError(f"the lower envelope is stated for t >= 1, got {t}")
    partition = partition or partition_for(u0.grid)
    norms = partition.block_norms(u0)
    if not np.any(norms):
        return 0.0
    cert = certificate if certificate is not None else certify_class(u0, sigma0, partition)
    if not cert.member:
        raise CertificateError("initial velocity is not certified lower-bound class",
                               c0=cert.c0, M0=cert.M0)
    ks = partition.ks
    admissible = ks <= envelope_threshold(t)
    if not np.any(admissible):
        raise WindowExceededError("no resolvable block below -log2(1+t)/2",
                                  t=t, k_min=partition.k_min)
    k = ks[admissible]
    terms = (np.exp(-64.0 * visc.max_rate * 4.0**k * t / 9.0)
             * 2.0 ** (sigma * k) * norms[admissible])
    return float(terms.max())
