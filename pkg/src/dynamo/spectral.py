"""Fourier representation of complex 3-vector fields on the torus [0, 2pi)^3.

Coefficients are Fourier-series coefficients with respect to the normalized
torus measure: a constant field has a single k=0 coefficient equal to its
value, and ``l2_norm`` is the root-mean-square of the physical values.

Arrays are stored in numpy FFT order with shape ``(3, nx, ny, nz)``.  The
lattice convention is ``k in {-n/2+1, ..., n/2}`` per axis, so the Nyquist
index carries the wavenumber ``+n/2``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

MAGIC = b"KDE1"
_HEADER = struct.Struct("<4s3I3d")


@dataclass(frozen=True)
class Grid3:
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for n in self.shape:
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"grid sizes must be even integers >= 4, got {self.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nz

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer wavenumbers per axis in FFT order, Nyquist as +n/2."""
        out = []
        for n in self.shape:
            k = np.arange(n)
            k[k > n // 2] -= n
            out.append(k.astype(float))
        return tuple(out)

    @cached_property
    def kvec(self) -> np.ndarray:
        kx, ky, kz = self.wavenumbers
        K = np.empty((3,) + self.shape)
        K[0] = kx[:, None, None]
        K[1] = ky[None, :, None]
        K[2] = kz[None, None, :]
        return K

    @cached_property
    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Collocation coordinates, each broadcastable to ``shape``."""
        x = 2 * np.pi * np.arange(self.nx) / self.nx
        y = 2 * np.pi * np.arange(self.ny) / self.ny
        z = 2 * np.pi * np.arange(self.nz) / self.nz
        return x[:, None, None], y[None, :, None], z[None, None, :]

    def default_dealias(self) -> tuple[int, int, int]:
        # largest fmax per axis with n > 3*fmax: quadratic products stay alias free
        return tuple((n - 1) // 3 for n in self.shape)

    def mode_index(self, k) -> tuple[int, int, int]:
        """Array index of lattice wavevector ``k``."""
        idx = []
        for ki, n in zip(k, self.shape):
            ki = int(ki)
            if not (-n // 2 + 1 <= ki <= n // 2):
                raise ValueError(f"wavevector {tuple(k)} is outside the lattice of {self.shape}")
            idx.append(ki % n)
        return tuple(idx)


def _as_bloch(j) -> np.ndarray:
    j = np.zeros(3) if j is None else np.asarray(j, dtype=float).reshape(3)
    return j.copy()


@dataclass
class SpectralField:
    grid: Grid3
    coeffs: np.ndarray
    bloch_j: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (3,) + self.grid.shape:
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}")
        self.bloch_j = _as_bloch(self.bloch_j)

    @classmethod
    def zeros(cls, grid: Grid3, bloch_j=None) -> "SpectralField":
        return cls(grid, np.zeros((3,) + grid.shape, dtype=complex), _as_bloch(bloch_j))

    @classmethod
    def constant(cls, grid: Grid3, v, bloch_j=None) -> "SpectralField":
        return cls.single_mode(grid, (0, 0, 0), v, bloch_j)

    @classmethod
    def single_mode(cls, grid: Grid3, k, v, bloch_j=None) -> "SpectralField":
        F = cls.zeros(grid, bloch_j)
        F.coeffs[(slice(None),) + grid.mode_index(k)] = np.asarray(v, dtype=complex)
        return F

    def like(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.bloch_j)

    def copy(self) -> "SpectralField":
        return self.like(self.coeffs.copy())

    def mode(self, k) -> np.ndarray:
        return self.coeffs[(slice(None),) + self.grid.mode_index(k)].copy()

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_compatible(self, other)
        return self.like(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_compatible(self, other)
        return self.like(self.coeffs - other.coeffs)

    def __mul__(self, c) -> "SpectralField":
        return self.like(self.coeffs * c)

    __rmul__ = __mul__


@dataclass
class PhysicalField:
    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (3,) + self.grid.shape:
            raise ValueError(f"value shape {self.values.shape} does not match grid {self.grid.shape}")


def _check_compatible(a: SpectralField, b: SpectralField):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    if not np.array_equal(a.bloch_j, b.bloch_j):
        raise ValueError("fields carry different Bloch offsets")


def fft3(values: np.ndarray) -> np.ndarray:
    return sfft.fftn(values, axes=(-3, -2, -1), norm="forward")


def ifft3(coeffs: np.ndarray) -> np.ndarray:
    return sfft.ifftn(coeffs, axes=(-3, -2, -1), norm="forward")


def forward_transform(f: PhysicalField, bloch_j=None) -> SpectralField:
    return SpectralField(f.grid, fft3(f.values), _as_bloch(bloch_j))


def backward_transform(F: SpectralField) -> PhysicalField:
    """Periodic part of the field at the collocation points (the Bloch phase is not applied)."""
    return PhysicalField(F.grid, ifft3(F.coeffs))


def shifted_k(F: SpectralField) -> np.ndarray:
    return F.grid.kvec + F.bloch_j[:, None, None, None]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Complex bilinear cross product over the component axis (-4), no conjugation."""
    a0, a1, a2 = a[..., 0, :, :, :], a[..., 1, :, :, :], a[..., 2, :, :, :]
    b0, b1, b2 = b[..., 0, :, :, :], b[..., 1, :, :, :], b[..., 2, :, :, :]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-4)


def cross_product(a: PhysicalField, b: PhysicalField) -> PhysicalField:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return PhysicalField(a.grid, cross(a.values, b.values))


def curl_bloch(F: SpectralField) -> SpectralField:
    return F.like(cross(1j * shifted_k(F), F.coeffs))


def laplacian_bloch(F: SpectralField) -> SpectralField:
    K = shifted_k(F)
    return F.like(-(K * K).sum(axis=0) * F.coeffs)


def divergence_bloch(F: SpectralField) -> np.ndarray:
    return (1j * shifted_k(F) * F.coeffs).sum(axis=0)


def inverse_laplacian_zero_mean(F: SpectralField) -> SpectralField:
    if np.any(F.bloch_j):
        raise ValueError("inverse_laplacian_zero_mean requires bloch_j = 0")
    k2 = (F.grid.kvec ** 2).sum(axis=0)
    k2[0, 0, 0] = 1.0
    out = -F.coeffs / k2
    out[:, 0, 0, 0] = 0.0
    return F.like(out)


def dealias_mask(grid: Grid3, fmax) -> np.ndarray:
    fx, fy, fz = (fmax,) * 3 if np.isscalar(fmax) else fmax
    kx, ky, kz = grid.wavenumbers
    return (
        (np.abs(kx) <= fx)[:, None, None]
        & (np.abs(ky) <= fy)[None, :, None]
        & (np.abs(kz) <= fz)[None, None, :]
    )


def dealias(F: SpectralField, fmax) -> SpectralField:
    """Zero every coefficient with some |k_axis| > fmax (scalar or per-axis triple)."""
    return F.like(F.coeffs * dealias_mask(F.grid, fmax))


def mean(F: SpectralField) -> np.ndarray:
    return F.coeffs[:, 0, 0, 0].copy()


def l2_norm(F: SpectralField) -> float:
    return float(np.sqrt(np.sum(np.abs(F.coeffs) ** 2)))


def leray_project(F: SpectralField) -> SpectralField:
    K = shifted_k(F)
    k2 = (K * K).sum(axis=0)
    zero = k2 == 0
    k2[zero] = 1.0
    proj = (K * F.coeffs).sum(axis=0) / k2
    out = F.coeffs - K * proj
    out[:, zero] = F.coeffs[:, zero]
    return F.like(out)


def random_field(grid: Grid3, rng: np.random.Generator, bloch_j=None, fmax=None) -> SpectralField:
    """Random coefficients (standard complex normal), optionally band limited."""
    c = rng.standard_normal((3,) + grid.shape) + 1j * rng.standard_normal((3,) + grid.shape)
    F = SpectralField(grid, c, _as_bloch(bloch_j))
    return F if fmax is None else dealias(F, fmax)


# -- checkpoint files --------------------------------------------------------

def _lattice_order(n: int) -> np.ndarray:
    return (np.arange(n) - n // 2 + 1) % n


def write_checkpoint(path, F: SpectralField) -> None:
    g = F.grid
    ix, iy, iz = (_lattice_order(n) for n in g.shape)
    lattice = F.coeffs[:, ix][:, :, iy][:, :, :, iz]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.nx, g.ny, g.nz, *map(float, F.bloch_j)))
        fh.write(np.ascontiguousarray(lattice, dtype="<c16").tobytes())


def read_checkpoint(path) -> SpectralField:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise ValueError(f"{path}: not a KDE1 checkpoint (bad magic bytes)")
    _, nx, ny, nz, j1, j2, j3 = _HEADER.unpack_from(data)
    grid = Grid3(nx, ny, nz)
    body = data[_HEADER.size:]
    expected = 3 * grid.size * 16
    if len(body) != expected:
        raise ValueError(f"{path}: truncated checkpoint ({len(body)} of {expected} payload bytes)")
    lattice = np.frombuffer(body, dtype="<c16").reshape((3,) + grid.shape)
    coeffs = np.empty_like(lattice, dtype=complex)
    ix, iy, iz = (_lattice_order(n) for n in grid.shape)
    coeffs[np.ix_(range(3), ix, iy, iz)] = lattice
    return SpectralField(grid, coeffs, (j1, j2, j3))
