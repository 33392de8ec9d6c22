"""Fourier representation of real, divergence-free vector fields on the 2π-periodic torus.

Convention: ``u(x) = sum_xi c_xi exp(i xi.x)`` over the integer lattice
``{-n/2+1, ..., n/2}^3``.  Coefficients are stored in FFT index order, so the
array index ``j`` along an axis carries wavenumber ``j`` for ``j <= n/2`` and
``j - n`` otherwise.
"""

from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

DIVFREE_TOL = 1e-12

_CHECKPOINT_MAGIC = b"CSPF"
_CHECKPOINT_VERSION = 1
_RECORD = np.dtype([("xi", "<i4", (3,)), ("c", "<c16", (3,))])


def fft_workers() -> int:
    """Worker count for FFTs and chunked reductions (``CRITSPACE_WORKERS``)."""
    raw = os.environ.get("CRITSPACE_WORKERS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Grid:
    """Lattice geometry of an ``n^3`` periodic box of side 2π."""

    n: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise TypeError(f"n must be an integer, got {self.n!r}")
        if self.n < 4:
            raise ValueError(f"n must be >= 4, got {self.n}")
        if self.n % 2:
            raise ValueError(f"n must be even, got {self.n}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @property
    def period(self) -> float:
        return 2.0 * np.pi

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def cutoff(self) -> int:
        """Largest per-axis |xi_i| kept by the dealiasing mask."""
        return int(np.floor(self.dealias_fraction * self.n / 2 + 1e-12))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        j = np.arange(self.n)
        return np.where(j <= self.n // 2, j, j - self.n)

    @cached_property
    def kvec(self) -> np.ndarray:
        k = self.wavenumbers.astype(float)
        return np.stack(np.meshgrid(k, k, k, indexing="ij"))

    @cached_property
    def ksq(self) -> np.ndarray:
        return np.sum(self.kvec**2, axis=0)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def mask(self) -> np.ndarray:
        a = np.abs(self.wavenumbers) <= self.cutoff
        return a[:, None, None] & a[None, :, None] & a[None, None, :]

    @cached_property
    def nyquist(self) -> np.ndarray:
        """Lattice points with at least one component equal to n/2."""
        return np.any(self.kvec == self.n // 2, axis=0)

    @cached_property
    def neg_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Open-mesh index arrays mapping each lattice point to the slot of -xi."""
        neg = (-np.arange(self.n)) % self.n
        return np.ix_(neg, neg, neg)

    def index_of(self, xi) -> tuple[int, int, int]:
        lo, hi = -self.n // 2 + 1, self.n // 2
        xi = tuple(int(v) for v in xi)
        if len(xi) != 3 or any(v < lo or v > hi for v in xi):
            raise ValueError(f"wavevector {xi} outside lattice [{lo}, {hi}]^3")
        return tuple(v % self.n for v in xi)

    def physical_coordinates(self) -> np.ndarray:
        x = self.period * np.arange(self.n) / self.n
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))


def make_grid(n: int, dealias_fraction: float = 2.0 / 3.0) -> Grid:
    return Grid(n, dealias_fraction)


def _readonly(a: np.ndarray) -> np.ndarray:
    # adding +0.0 copies and turns every -0.0 into +0.0, giving one bit pattern per value
    a = np.add(np.asarray(a, dtype=np.complex128), 0.0)
    a.setflags(write=False)
    return a


def conjugate_reflection(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Return ``conj(c_{-xi})`` laid out at slot ``xi``."""
    i, j, k = grid.neg_index
    return np.conj(coeffs[..., i, j, k])


def hermitian_symmetrize(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    # (a + conj b)/2 and (b + conj a)/2 are exact conjugates in IEEE arithmetic
    return 0.5 * (coeffs + conjugate_reflection(coeffs, grid))


class _FieldOps:
    grid: Grid
    coeffs: np.ndarray

    # numpy scalars defer to our operators instead of broadcasting over us
    __array_ufunc__ = None

    def _new(self, coeffs):
        return type(self)(self.grid, coeffs)

    def _check_compatible(self, other):
        if type(other) is not type(self):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        return None

    def __add__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return self._new(self.coeffs + other.coeffs)

    def __sub__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return self._new(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return self._new(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self._new(-self.coeffs)

    def hermitian_defect(self) -> float:
        """Largest ``|c_{-xi} - conj(c_xi)|``; zero for an exactly real field."""
        return float(np.max(np.abs(self.coeffs - conjugate_reflection(self.coeffs, self.grid)), initial=0.0))

    def max_amplitude(self) -> float:
        return float(np.max(self.amplitudes(), initial=0.0))


@dataclass(frozen=True, eq=False)
class SpectralVectorField(_FieldOps):
    """Real 3-component field held as coefficients of shape ``(3, n, n, n)``."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (3,) + self.grid.shape:
            raise ValueError(f"coeffs shape {self.coeffs.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "coeffs", _readonly(self.coeffs))

    @classmethod
    def zeros(cls, grid: Grid) -> SpectralVectorField:
        return cls(grid, np.zeros((3,) + grid.shape, dtype=complex))

    def amplitudes(self) -> np.ndarray:
        """Euclidean norm of the 3-component coefficient at every lattice point."""
        c = self.coeffs
        return np.sqrt(c[0].real**2 + c[0].imag**2 + c[1].real**2 + c[1].imag**2 + c[2].real**2 + c[2].imag**2)

    def divergence_residual(self) -> float:
        """``max |xi.c_xi| / max |c_xi|`` (zero for the zero field)."""
        scale = self.max_amplitude()
        if scale == 0.0:
            return 0.0
        div = np.abs(np.einsum("i...,i...->...", self.grid.kvec, self.coeffs))
        return float(div.max() / scale)

    def is_divergence_free(self, tol: float = DIVFREE_TOL) -> bool:
        return self.divergence_residual() <= tol

    @property
    def mean(self) -> np.ndarray:
        return np.array(self.coeffs[:, 0, 0, 0])


@dataclass(frozen=True, eq=False)
class ScalarSpectralField(_FieldOps):
    """Real scalar field; unlike velocity fields the mean mode may be nonzero."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(f"coeffs shape {self.coeffs.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "coeffs", _readonly(self.coeffs))

    @classmethod
    def zeros(cls, grid: Grid) -> ScalarSpectralField:
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    def amplitudes(self) -> np.ndarray:
        return np.abs(self.coeffs)


def _fill_modes(grid: Grid, modes, width: int | None):
    shape = grid.shape if width is None else (width,) + grid.shape
    out = np.zeros(shape, dtype=complex)
    assigned: dict[tuple[int, int, int], np.ndarray] = {}

    def put(idx, value):
        prev = assigned.get(idx)
        if prev is not None:
            scale = max(np.max(np.abs(prev)), np.max(np.abs(value)), 1.0)
            if np.max(np.abs(prev - value)) > 1e-14 * scale:
                raise ValueError(f"conflicting conjugate assignments at lattice slot {idx}")
            return
        assigned[idx] = value
        out[(Ellipsis,) + idx] = value

    for xi, c in modes:
        idx = grid.index_of(xi)
        c = np.asarray(c, dtype=complex)
        if width is not None and c.shape != (width,):
            raise ValueError(f"mode {tuple(xi)}: expected {width} components, got shape {c.shape}")
        if idx == (0, 0, 0) and width is not None:
            if np.any(c != 0):
                warnings.warn("nonzero mean mode supplied for a velocity field; forced to zero", stacklevel=3)
            continue
        partner = tuple((-v) % grid.n for v in idx)
        put(idx, c)
        put(partner, np.conj(c))
    return out


def from_modes(grid: Grid, modes) -> SpectralVectorField:
    """Build a real vector field from ``[(xi, c), ...]``; conjugate partners are filled in."""
    return SpectralVectorField(grid, _fill_modes(grid, list(modes), 3))


def scalar_from_modes(grid: Grid, modes) -> ScalarSpectralField:
    return ScalarSpectralField(grid, _fill_modes(grid, list(modes), None))


def leray_project(u: SpectralVectorField) -> SpectralVectorField:
    """Remove the gradient part of every mode: ``c - (xi.c / |xi|^2) xi``.

    Modes with some ``|xi_i| = n/2`` are zeroed: ``xi`` and ``-xi`` share a slot
    there, so no projector keeps the field real.
    """
    grid = u.grid
    k = grid.kvec
    ksq = grid.ksq
    inv = np.divide(1.0, ksq, out=np.zeros_like(ksq), where=ksq > 0)
    dot = np.einsum("i...,i...->...", k, u.coeffs)
    return SpectralVectorField(grid, (u.coeffs - (dot * inv)[None] * k) * ~grid.nyquist)


def dealias(field):
    """Zero every coefficient outside the 2/3-rule mask."""
    return type(field)(field.grid, field.coeffs * field.grid.mask)


def random_divfree_field(
    grid: Grid,
    seed: int,
    slope: float = 2.0,
    amplitude: float = 1.0,
    k_max: float | None = None,
) -> SpectralVectorField:
    """Random solenoidal field with ``|c_xi| ~ amplitude |xi|^-slope`` on ``0 < |xi| <= k_max``."""
    if k_max is None:
        k_max = grid.cutoff
    if k_max > grid.cutoff:
        raise ValueError(f"k_max={k_max} exceeds dealias cutoff {grid.cutoff} for n={grid.n}")
    rng = np.random.default_rng(seed)
    shape = (3,) + grid.shape
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    g /= np.linalg.norm(g, axis=0, keepdims=True)
    kmag = grid.kmag
    support = (kmag > 0) & (kmag <= k_max + 1e-12)
    weight = np.zeros_like(kmag)
    weight[support] = amplitude * kmag[support] ** (-slope)
    u = leray_project(SpectralVectorField(grid, g * weight))
    return SpectralVectorField(grid, hermitian_symmetrize(u.coeffs, grid))


def shear_mode(grid: Grid, amplitude: float = 1.0) -> SpectralVectorField:
    """``(0, amplitude cos x_1, 0)``: an exact heat-decaying solution."""
    return from_modes(grid, [((1, 0, 0), (0, 0.5 * amplitude, 0))])


def taylor_green(grid: Grid, amplitude: float = 1.0) -> SpectralVectorField:
    """``amplitude (sin x_1 cos x_2, -cos x_1 sin x_2, 0)``; its X^-1 norm equals ``amplitude``."""
    a = 0.25j * amplitude
    return from_modes(grid, [((1, 1, 0), (-a, a, 0)), ((1, -1, 0), (-a, -a, 0))])


def random_scalar_field(grid: Grid, seed, support: int, rng: np.random.Generator | None = None) -> ScalarSpectralField:
    """Random real scalar field with coefficients on the cube ``|xi_i| <= support`` (mean included)."""
    if not 0 <= support < grid.n // 2:
        raise ValueError(f"support {support} must lie in [0, n/2) for n={grid.n}")
    rng = np.random.default_rng(seed) if rng is None else rng
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    box = np.abs(grid.wavenumbers) <= support
    c *= box[:, None, None] & box[None, :, None] & box[None, None, :]
    return ScalarSpectralField(grid, hermitian_symmetrize(c, grid))


def transform_to_physical(field) -> np.ndarray:
    """Samples on the uniform grid ``x_j = 2π j / n``; shape ``(3, n, n, n)`` or ``(n, n, n)``."""
    return scipy.fft.ifftn(field.coeffs, axes=(-3, -2, -1), norm="forward", workers=fft_workers()).real


def transform_to_spectral(samples: np.ndarray, grid: Grid):
    """Inverse of :func:`transform_to_physical`.

    A ``(3, n, n, n)`` array gives a :class:`SpectralVectorField` (mean removed,
    with a warning when it was not negligible); ``(n, n, n)`` gives a scalar field.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape == (3,) + grid.shape:
        c = scipy.fft.fftn(samples, axes=(1, 2, 3), norm="forward", workers=fft_workers())
        c = hermitian_symmetrize(c, grid)
        mean = np.abs(c[:, 0, 0, 0]).max()
        if mean > 1e-12 * max(np.abs(c).max(), 1e-300):
            warnings.warn("samples carry a nonzero mean; velocity mean mode forced to zero", stacklevel=2)
        c[:, 0, 0, 0] = 0.0
        return SpectralVectorField(grid, c)
    if samples.shape == grid.shape:
        c = scipy.fft.fftn(samples, norm="forward", workers=fft_workers())
        return ScalarSpectralField(grid, hermitian_symmetrize(c, grid))
    raise ValueError(f"samples shape {samples.shape} incompatible with grid n={grid.n}")


def _half_lattice(grid: Grid) -> np.ndarray:
    """Boolean selector for one representative of every conjugate pair (self-pairs included)."""
    n = grid.n
    flat = np.arange(n**3).reshape(grid.shape)
    i, j, k = grid.neg_index
    return flat <= flat[i, j, k]


def save_checkpoint(field: SpectralVectorField, path) -> None:
    """Write ``field`` as header ``CSPF | u32 version | u32 n | u32 count`` plus packed records.

    Each little-endian record is ``int32 xi[3]`` followed by ``complex128 c[3]``
    for the non-redundant half of the lattice, nonzero coefficients only.
    """
    grid = field.grid
    sel = _half_lattice(grid) & (field.amplitudes() > 0)
    idx = np.argwhere(sel)
    rec = np.zeros(len(idx), dtype=_RECORD)
    rec["xi"] = grid.wavenumbers[idx]
    rec["c"] = field.coeffs[:, idx[:, 0], idx[:, 1], idx[:, 2]].T
    with open(Path(path), "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC + struct.pack("<III", _CHECKPOINT_VERSION, grid.n, len(rec)))
        fh.write(rec.tobytes())


def load_checkpoint(path) -> SpectralVectorField:
    data = Path(path).read_bytes()
    if data[:4] != _CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a critspace checkpoint")
    version, n, count = struct.unpack("<III", data[4:16])
    if version != _CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    rec = np.frombuffer(data[16:], dtype=_RECORD)
    if len(rec) != count:
        raise ValueError(f"{path}: truncated checkpoint ({len(rec)} of {count} records)")
    grid = make_grid(int(n))
    c = np.zeros((3,) + grid.shape, dtype=complex)
    idx = rec["xi"] % n
    neg = (-idx) % n
    c[:, neg[:, 0], neg[:, 1], neg[:, 2]] = np.conj(rec["c"].T)
    c[:, idx[:, 0], idx[:, 1], idx[:, 2]] = rec["c"].T
    return SpectralVectorField(grid, c)
