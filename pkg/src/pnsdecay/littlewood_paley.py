"""Dyadic blocks, homogeneous Besov norms and Chemin-Lerner time norms.

Only ``p = 2`` is supported, so every block norm is an L2 norm evaluated on
the Fourier side via Parseval.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import (BlockRangeError, EmptyTrajectoryError,
                         UnsupportedNormError)
from .spectral import BoxGrid, SpectralField

CHI_INNER = 3.0 / 4.0
CHI_OUTER = 4.0 / 3.0
REGIMES = ("all", "low", "high")
# f^l sums k <= LOW_SPLIT_LAST; low norms use k <= LOW_NORM_LAST, high norms k >= HIGH_NORM_FIRST
LOW_SPLIT_LAST = -1
LOW_NORM_LAST = 0
HIGH_NORM_FIRST = -1
LOW_BLOCK_BUFFER = 2


def chi(r):
    """Radial cutoff: 1 on ``[0, 3/4]``, C2 quintic descent, 0 from 4/3 on."""
    r = np.asarray(r, dtype=float)
    s = np.clip((r - CHI_INNER) / (CHI_OUTER - CHI_INNER), 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def phi(r):
    """Annulus profile ``chi(r/2) - chi(r)``, supported in ``[3/4, 8/3]``."""
    return chi(np.asarray(r, dtype=float) / 2.0) - chi(r)


@dataclass(frozen=True)
class BesovSpec:
    """Which Besov norm to evaluate, and on which field (``'u'`` or ``'a'``)."""

    s: float
    r: float = 1
    regime: str = "all"
    field: str = "u"
    p: float = 2

    def __post_init__(self):
        if self.p != 2:
            raise UnsupportedNormError("only p = 2 Besov norms are supported",
                                       p=self.p)
        if self.r not in (1, math.inf):
            raise UnsupportedNormError("r must be 1 or inf", r=self.r)
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if not math.isfinite(self.s):
            raise ValueError("s must be finite")

    @property
    def r_label(self):
        return "inf" if self.r == math.inf else "1"

    def label(self):
        return f"{self.field}:{self.s:g}:{self.r_label}:{self.regime}"

    @classmethod
    def from_label(cls, text):
        """Parse ``field:s:r:regime`` (field optional, defaults to ``u``)."""
        parts = [p.strip() for p in text.split(":")]
        if len(parts) == 3:
            parts = ["u"] + parts
        if len(parts) != 4:
            raise ValueError(f"bad probe label {text!r}; want field:s:r:regime")
        fld, s, r, regime = parts
        r = math.inf if r in ("inf", "infty", "oo") else float(r)
        return cls(float(s), r, regime, fld)


def regime_mask(ks, regime):
    ks = np.asarray(ks)
    if regime == "all":
        return np.ones(ks.shape, dtype=bool)
    if regime == "low":
        return ks <= LOW_NORM_LAST
    if regime == "high":
        return ks >= HIGH_NORM_FIRST
    raise ValueError(f"unknown regime {regime!r}")


def aggregate(block_norms, ks, s, r, regime):
    """Weight block norms by ``2**(k s)`` and take the l^r sum over the regime.

    ``block_norms`` may carry leading (e.g. time) axes; blocks are last.
    """
    ks = np.asarray(ks)
    mask = regime_mask(ks, regime)
    weighted = np.asarray(block_norms)[..., mask] * 2.0 ** (s * ks[mask])
    if weighted.shape[-1] == 0:
        return np.zeros(weighted.shape[:-1])
    if r == 1:
        return weighted.sum(axis=-1)
    return weighted.max(axis=-1)


class DyadicPartition:
    """The blocks resolvable on a given grid.

    ``k_min`` sits ``LOW_BLOCK_BUFFER`` below ``ceil(log2(4/3 * 2 pi / L))``,
    which guarantees the fundamental mode is fully covered; ``k_max`` is
    ``floor(log2(3/4 * pi N / L))``. Blocks sum to one for lattice
    frequencies in ``band``.
    """

    def __init__(self, grid):
        self.grid = grid
        self.k_min = math.ceil(math.log2(grid.k_fundamental * CHI_OUTER)) - LOW_BLOCK_BUFFER
        self.k_max = math.floor(math.log2(grid.k_nyquist * CHI_INNER))
        self.ks = np.arange(self.k_min, self.k_max + 1)

    @property
    def band(self):
        """Radial interval on which the resolvable blocks sum to one."""
        return (CHI_OUTER * 2.0**self.k_min, CHI_INNER * 2.0 ** (self.k_max + 1))

    def truncation(self):
        """Metadata describing what the block range leaves out."""
        kmag = self.grid.k_magnitude
        hi = self.band[1]
        return {
            "k_min": int(self.k_min),
            "k_max": int(self.k_max),
            "band_low": float(self.band[0]),
            "band_high": float(hi),
            "max_lattice_wavenumber": float(kmag.max()),
            "modes_beyond_band": int(np.count_nonzero(kmag > hi)),
        }

    def check_k(self, k):
        if not self.k_min <= k <= self.k_max:
            raise BlockRangeError("block index outside resolvable range", k=k,
                                  k_min=self.k_min, k_max=self.k_max)

    def multiplier(self, k):
        self.check_k(k)
        return phi(self.grid.k_magnitude * 2.0 ** (-k))

    @cached_property
    def _sparse_full(self):
        return self._sparse(self.grid.k_magnitude)

    @cached_property
    def _sparse_half(self):
        g = self.grid
        kmag = g.k_magnitude[..., : g.N // 2 + 1]
        # rfft layout: columns 1..N/2-1 stand for two mirrored modes each
        w = np.full(g.N // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        weights = np.broadcast_to(w, kmag.shape)
        return self._sparse(kmag, weights)

    def _sparse(self, kmag, weights=None):
        flat = kmag.ravel()
        wflat = None if weights is None else weights.ravel()
        out = []
        for k in self.ks:
            vals = phi(flat * 2.0 ** (-k))
            idx = np.flatnonzero(vals)
            m2 = vals[idx] ** 2
            if wflat is not None:
                m2 = m2 * wflat[idx]
            out.append((idx, m2))
        return out

    def block_norms_from_power(self, power, layout="full"):
        """Block L2 norms from the per-mode power ``sum_c |amp_c|**2``."""
        sparse = self._sparse_full if layout == "full" else self._sparse_half
        flat = np.asarray(power).ravel()
        vol = self.grid.volume
        return np.array([math.sqrt(vol * float(np.dot(m2, flat[idx])))
                         for idx, m2 in sparse])

    def block_norms(self, f):
        """``||Delta_k f||_{L2}`` for every resolvable k."""
        a = f.amplitudes
        power = np.sum(a.real**2 + a.imag**2, axis=0)
        return self.block_norms_from_power(power)


_PARTITIONS = {}


def partition_for(grid):
    if grid not in _PARTITIONS:
        _PARTITIONS[grid] = DyadicPartition(grid)
    return _PARTITIONS[grid]


def block(f, k, partition=None):
    """Dyadic block ``Delta_k f``."""
    partition = partition or partition_for(f.grid)
    return SpectralField(f.grid, f.amplitudes * partition.multiplier(k))


def besov_norm(f, spec, partition=None):
    """Homogeneous Besov norm ``||f||_{B^s_{2,r}}`` restricted to a regime."""
    if not isinstance(spec, BesovSpec):
        spec = BesovSpec(*spec)
    partition = partition or partition_for(f.grid)
    norms = partition.block_norms(f)
    return float(aggregate(norms, partition.ks, spec.s, spec.r, spec.regime))


def low_high_split(f, partition=None):
    """``(f^l, f^h)`` with ``f^l`` the sum of blocks ``k <= -1``."""
    partition = partition or partition_for(f.grid)
    low = np.zeros(f.grid.shape)
    high = np.zeros(f.grid.shape)
    for k in partition.ks:
        m = partition.multiplier(k)
        if k <= LOW_SPLIT_LAST:
            low += m
        else:
            high += m
    return (SpectralField(f.grid, f.amplitudes * low),
            SpectralField(f.grid, f.amplitudes * high))


@dataclass
class NormTrajectory:
    """Time series of unweighted block norms of one field.

    ``spec`` names the aggregate this trajectory was recorded for; any other
    spec on the same field can be evaluated from the same block norms.
    """

    ks: np.ndarray
    spec: BesovSpec
    times: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    horizon: float = math.inf

    def append(self, t, block_norms):
        if self.times and not t > self.times[-1]:
            raise ValueError(f"times must increase strictly: {t} after {self.times[-1]}")
        row = np.asarray(block_norms, dtype=float)
        if np.any(row < 0):
            raise ValueError("block norms must be nonnegative")
        self.times.append(float(t))
        self.rows.append(row)

    def __len__(self):
        return len(self.times)

    @property
    def t(self):
        return np.asarray(self.times)

    @property
    def block_norms(self):
        if not self.rows:
            return np.zeros((0, len(self.ks)))
        return np.vstack(self.rows)

    def series(self, spec=None):
        """Besov norm at every recorded time."""
        spec = spec or self.spec
        return aggregate(self.block_norms, self.ks, spec.s, spec.r, spec.regime)

    def with_spec(self, spec):
        return NormTrajectory(self.ks, spec, list(self.times), list(self.rows),
                              self.horizon)

    def scaled(self, c):
        return NormTrajectory(self.ks, self.spec, list(self.times),
                              [c * r for r in self.rows], self.horizon)

    def time_weighted(self, weight):
        """Multiply the row at time t by ``weight(t)``."""
        rows = [weight(t) * r for t, r in zip(self.times, self.rows)]
        return NormTrajectory(self.ks, self.spec, list(self.times), rows, self.horizon)


def _time_norm(values, times, rho):
    """L^rho over time along axis 0 (trapezoidal for rho = 1)."""
    if rho == 1:
        if len(times) == 1:
            return np.zeros(values.shape[1:])
        return np.trapezoid(values, times, axis=0)
    if rho == math.inf:
        return values.max(axis=0)
    raise UnsupportedNormError("time exponent must be 1 or inf", rho=rho)


def chemin_lerner_norm(traj, rho, spec=None):
    """``||f||_{L~^rho_T(B^s_{2,r})}``: time norm per block, then l^r."""
    if len(traj) == 0:
        raise EmptyTrajectoryError("trajectory has no samples")
    spec = spec or traj.spec
    per_block = _time_norm(traj.block_norms, traj.t, rho)
    return float(aggregate(per_block, traj.ks, spec.s, spec.r, spec.regime))


def lebesgue_besov_norm(traj, rho, spec=None):
    """``||f||_{L^rho_T(B^s_{2,r})}``: Besov norm per time, then time norm."""
    if len(traj) == 0:
        raise EmptyTrajectoryError("trajectory has no samples")
    spec = spec or traj.spec
    return float(_time_norm(traj.series(spec), traj.t, rho))


class BesovNorm(TransformerMixin, BaseEstimator):
    """Besov-norm feature extractor.

    ``fit`` takes a ``BoxGrid`` (or a field, whose grid is used) and resolves
    the block range; ``transform`` maps a sequence of fields to their
    unweighted block norms, one row per field. ``score_fields`` gives the
    aggregated norm.
    """

    def __init__(self, s=0.0, r=1, regime="all"):
        self.s = s
        self.r = r
        self.regime = regime

    def fit(self, X, y=None):
        grid = X if isinstance(X, BoxGrid) else _first(X).grid
        BesovSpec(self.s, self.r, self.regime)
        self.partition_ = partition_for(grid)
        self.ks_ = self.partition_.ks
        return self

    def transform(self, X):
        fields = [X] if isinstance(X, SpectralField) else list(X)
        return np.vstack([self.partition_.block_norms(f) for f in fields])

    def score_fields(self, X):
        return aggregate(self.transform(X), self.ks_, self.s, self.r, self.regime)


def _first(X):
    return X if isinstance(X, SpectralField) else next(iter(X))
