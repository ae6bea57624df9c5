"""Periodic-box Fourier discretization.

Amplitudes are normalized so that ``sum |amp|**2 * L**d`` equals the squared
L2(box) norm of the physical samples. All arithmetic is float64/complex128.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .exceptions import GridMismatchError, ShapeError

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class BoxGrid:
    """Uniform periodic grid of ``N**d`` points on ``[0, L)**d``."""

    d: int
    N: int
    L: float

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if self.N < 16 or self.N % 2:
            raise ValueError(f"N must be even and >= 16, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))

    @property
    def shape(self):
        return (self.N,) * self.d

    @property
    def axes(self):
        return tuple(range(-self.d, 0))

    @property
    def k_fundamental(self):
        return 2 * np.pi / self.L

    @property
    def k_nyquist(self):
        return np.pi * self.N / self.L

    @property
    def volume(self):
        return self.L**self.d

    @property
    def cell_volume(self):
        return (self.L / self.N) ** self.d

    @cached_property
    def mode_index(self):
        """Integer lattice index ``m`` per axis, broadcastable, full layout."""
        m = np.fft.fftfreq(self.N, d=1.0 / self.N).astype(np.int64)
        return _broadcast_axes(m, self.d)

    @cached_property
    def wavenumbers(self):
        """Per-axis wavenumbers ``2 pi m / L`` (full layout)."""
        return tuple(self.k_fundamental * m for m in self.mode_index)

    @cached_property
    def odd_wavenumbers(self):
        """Wavenumbers with the Nyquist entry zeroed.

        Used for odd-order derivatives and the Helmholtz projectors so that
        real fields stay real (the Nyquist index is its own mirror image).
        """
        out = []
        for m, k in zip(self.mode_index, self.wavenumbers):
            out.append(np.where(m == -self.N // 2, 0.0, k))
        return tuple(out)

    @cached_property
    def k_squared(self):
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def k_magnitude(self):
        return np.sqrt(np.broadcast_to(self.k_squared, self.shape))

    @cached_property
    def dealias_mask(self):
        keep = np.ones(self.shape, dtype=bool)
        for m in self.mode_index:
            keep = keep & (3 * np.abs(m) <= self.N)
        return keep

    def coordinates(self):
        """Physical coordinates, one array per axis (``indexing='ij'``)."""
        x = np.arange(self.N) * (self.L / self.N)
        return np.meshgrid(*([x] * self.d), indexing="ij")

    def heat_time(self, rate):
        """Heat time ``(L / 2 pi)**2 / rate`` of the slowest box mode."""
        return (self.L / (2 * np.pi)) ** 2 / rate

    def to_dict(self):
        return {"d": self.d, "N": self.N, "L": self.L}


def _broadcast_axes(v, d):
    out = []
    for axis in range(d):
        shape = [1] * d
        shape[axis] = v.size
        out.append(v.reshape(shape))
    return tuple(out)


class SpectralField:
    """Complex Fourier amplitudes of a scalar or vector field on a box grid.

    ``amplitudes`` has shape ``(components, N, ..., N)`` in FFT order.
    """

    __slots__ = ("grid", "amplitudes")

    def __init__(self, grid, amplitudes):
        amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        if amplitudes.shape == grid.shape:
            amplitudes = amplitudes[None]
        if amplitudes.ndim != grid.d + 1 or amplitudes.shape[1:] != grid.shape:
            raise ShapeError(
                "amplitude array does not match grid",
                expected=f"(C,)+{grid.shape}",
                received=amplitudes.shape,
            )
        self.grid = grid
        self.amplitudes = amplitudes

    @classmethod
    def zeros(cls, grid, components=1):
        return cls(grid, np.zeros((components,) + grid.shape, dtype=np.complex128))

    @property
    def components(self):
        return self.amplitudes.shape[0]

    def copy(self):
        return SpectralField(self.grid, self.amplitudes.copy())

    def to_physical(self):
        return inverse_transform(self)

    def l2_norm(self):
        """L2(box) norm via Parseval."""
        power = np.sum(self.amplitudes.real**2 + self.amplitudes.imag**2)
        return float(np.sqrt(power * self.grid.volume))

    def mean(self):
        return self.amplitudes[(slice(None),) + (0,) * self.grid.d].real.copy()

    def hermitian_defect(self):
        """Relative distance from Hermitian symmetry ``a(-m) = conj(a(m))``."""
        mirrored = np.conj(mirror(self.amplitudes, self.grid.d))
        scale = np.linalg.norm(self.amplitudes)
        if scale == 0:
            return 0.0
        return float(np.linalg.norm(self.amplitudes - mirrored) / scale)

    def is_real(self, rtol=HERMITIAN_RTOL):
        return self.hermitian_defect() <= rtol

    def _check(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids",
                                    left=self.grid, right=other.grid)
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralField(self.grid, self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SpectralField(self.grid, self.amplitudes - other.amplitudes)

    def __neg__(self):
        return SpectralField(self.grid, -self.amplitudes)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        return SpectralField(self.grid, self.amplitudes * scalar)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SpectralField(grid={self.grid}, components={self.components})"


def mirror(a, d):
    """Return ``a(-m)`` for an array in full FFT layout over the last d axes."""
    axes = tuple(range(-d, 0))
    return np.roll(np.flip(a, axis=axes), 1, axis=axes)


def transform_forward(samples, grid):
    """Physical samples -> normalized Fourier amplitudes."""
    x = np.asarray(samples)
    if x.shape == grid.shape:
        x = x[None]
    if x.ndim != grid.d + 1 or x.shape[1:] != grid.shape:
        raise ShapeError("sample array does not match grid",
                         expected=f"{grid.shape} or (C,)+{grid.shape}",
                         received=np.shape(samples))
    amp = sfft.fftn(x, axes=grid.axes, workers=-1) / grid.N**grid.d
    return SpectralField(grid, amp)


def inverse_transform(f, real=True):
    grid = f.grid
    x = sfft.ifftn(f.amplitudes * grid.N**grid.d, axes=grid.axes, workers=-1)
    return x.real if real else x


def spectral_derivative(f, alpha):
    """Apply the Fourier multiplier ``prod_j (i k_j)**alpha_j``.

    Odd orders use Nyquist-zeroed wavenumbers so real data stays real.
    """
    grid = f.grid
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != grid.d or min(alpha) < 0:
        raise ShapeError("multi-index length must equal d",
                         expected=grid.d, received=len(alpha))
    mult = np.ones((1,) * grid.d, dtype=np.complex128)
    for a, k, kodd in zip(alpha, grid.wavenumbers, grid.odd_wavenumbers):
        if a:
            mult = mult * (1j * (kodd if a % 2 else k)) ** a
    return SpectralField(grid, f.amplitudes * mult)


def gradient(f):
    """Gradient of a scalar field as a d-component field."""
    if f.components != 1:
        raise ShapeError("gradient expects a scalar field", expected=1,
                         received=f.components)
    amp = np.stack([1j * k * f.amplitudes[0] for k in f.grid.odd_wavenumbers])
    return SpectralField(f.grid, amp)


def divergence(u):
    grid = u.grid
    if u.components != grid.d:
        raise ShapeError("divergence expects a d-component field",
                         expected=grid.d, received=u.components)
    amp = sum(1j * k * u.amplitudes[i] for i, k in enumerate(grid.odd_wavenumbers))
    return SpectralField(grid, amp)


def laplacian(f):
    return SpectralField(f.grid, -f.grid.k_squared * f.amplitudes)


def dealias(f):
    """Two-thirds rule: zero every mode with some ``|m_i| > N/3``."""
    return SpectralField(f.grid, f.amplitudes * f.grid.dealias_mask)


def pointwise_product(f, g):
    """Pseudo-spectral product, dealiased.

    A scalar times a vector multiplies every component.
    """
    if f.grid != g.grid:
        raise GridMismatchError("fields live on different grids",
                                left=f.grid, right=g.grid)
    if f.components != g.components and 1 not in (f.components, g.components):
        raise ShapeError("component counts are not broadcastable",
                         expected=f.components, received=g.components)
    prod = f.to_physical() * g.to_physical()
    return dealias(transform_forward(prod, f.grid))
