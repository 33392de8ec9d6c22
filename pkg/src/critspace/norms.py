"""Weighted Fourier-side norms: X^s (s = -1, 0, 1), L^2, homogeneous H^s, and the two
elementary X-space inequalities (product bound and X^-1/X^1 interpolation).

All sums run over the full lattice (both members of each conjugate pair) with no
volume factors.  Reductions are split into fixed-size chunks, each summed
pairwise, and the partial sums combined in lattice order, so the result does not
depend on how many workers evaluate the chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from critspace.spectral import Grid, ScalarSpectralField, SpectralVectorField, fft_workers

REL_SLACK = 1e-12
_CHUNK = 1 << 14
_pools: dict[int, ThreadPoolExecutor] = {}


def _pool(workers: int) -> ThreadPoolExecutor:
    if workers not in _pools:
        _pools[workers] = ThreadPoolExecutor(max_workers=workers)
    return _pools[workers]


def tree_sum(values: np.ndarray, workers: int | None = None) -> float:
    """Deterministic sum: chunked pairwise partials combined in fixed order."""
    flat = np.ascontiguousarray(values, dtype=float).ravel()
    chunks = [flat[i : i + _CHUNK] for i in range(0, flat.size, _CHUNK)]
    if not chunks:
        return 0.0
    workers = fft_workers() if workers is None else workers
    if workers > 1 and len(chunks) > 1:
        partials = list(_pool(workers).map(np.sum, chunks))
    else:
        partials = [np.sum(c) for c in chunks]
    return float(np.sum(np.asarray(partials)))


@lru_cache(maxsize=64)
def _weight(grid: Grid, s: float) -> np.ndarray:
    kmag = grid.kmag
    w = np.zeros_like(kmag)
    nz = kmag > 0
    w[nz] = kmag[nz] ** s
    if s == 0:
        w[0, 0, 0] = 1.0
    w.setflags(write=False)
    return w


def _has_mean(field) -> bool:
    return bool(field.amplitudes()[0, 0, 0] != 0.0)


def x_norm(field, s: int, workers: int | None = None) -> float:
    """``sum_xi |xi|^s |c_xi|`` for ``s`` in {-1, 0, 1}; the mean mode counts only for s = 0."""
    if s not in (-1, 0, 1):
        raise ValueError(f"s must be -1, 0 or 1, got {s}")
    if s == -1 and _has_mean(field):
        raise ValueError("mean mode present: X^-1 norm is infinite")
    return tree_sum(_weight(field.grid, float(s)) * field.amplitudes(), workers)


def fourier_l1(field, workers: int | None = None) -> float:
    """``||u_hat||_{L^1}``; identical to the X^0 norm."""
    return x_norm(field, 0, workers)


def l2_norm(field, workers: int | None = None) -> float:
    return float(np.sqrt(tree_sum(field.amplitudes() ** 2, workers)))


def hs_norm(field, s: float, workers: int | None = None) -> float:
    """Homogeneous Sobolev norm ``(sum_{xi != 0} |xi|^{2s} |c_xi|^2)^{1/2}``."""
    a = field.amplitudes()
    if s == 0:
        w = _weight(field.grid, 0.0).copy()
        w[0, 0, 0] = 0.0
    else:
        w = _weight(field.grid, 2.0 * float(s))
    return float(np.sqrt(tree_sum(w * a**2, workers)))


@dataclass(frozen=True)
class NormReport:
    x_m1: float
    x_0: float
    x_1: float
    l2: float
    hs: float
    s: float = 1.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["hs_s"] = d.pop("hs")
        return {k: d[k] for k in ("x_m1", "x_0", "x_1", "l2", "hs_s", "s")}


def norm_report(field: SpectralVectorField, s: float = 1.0, workers: int | None = None) -> NormReport:
    a = field.amplitudes()
    grid = field.grid
    if a[0, 0, 0] != 0.0:
        raise ValueError("mean mode present: X^-1 norm is infinite")
    a2 = a**2
    hs_w = _weight(grid, 2.0 * float(s))
    return NormReport(
        x_m1=tree_sum(_weight(grid, -1.0) * a, workers),
        x_0=tree_sum(_weight(grid, 0.0) * a, workers),
        x_1=tree_sum(_weight(grid, 1.0) * a, workers),
        l2=float(np.sqrt(tree_sum(a2, workers))),
        hs=float(np.sqrt(tree_sum(hs_w * a2, workers))),
        s=float(s),
    )


@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs: float
    holds: bool
    equality: bool = False

    @property
    def ratio(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else np.inf
        return self.lhs / self.rhs


def centered_coefficients(field: ScalarSpectralField) -> np.ndarray:
    """Coefficients reordered so that axis index ``a`` carries wavenumber ``a - n/2 + 1``."""
    order = np.argsort(field.grid.wavenumbers)
    return field.coeffs[np.ix_(order, order, order)]


def _crop(a: np.ndarray) -> np.ndarray:
    nz = np.argwhere(a != 0)
    if nz.size == 0:
        return a[:0, :0, :0]
    lo, hi = nz.min(axis=0), nz.max(axis=0) + 1
    return a[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]


def product_coefficients(f: ScalarSpectralField, g: ScalarSpectralField) -> np.ndarray:
    """Coefficients of ``f g`` by free (non-periodic) convolution of the two coefficient arrays.

    The output array is large enough to hold every sum of wavevectors, so no
    mode wraps around the torus.
    """
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    a, b = _crop(centered_coefficients(f)), _crop(centered_coefficients(g))
    if a.size == 0 or b.size == 0:
        return np.zeros((0, 0, 0), dtype=complex)
    return fftconvolve(a, b)


def check_product_inequality(f: ScalarSpectralField, g: ScalarSpectralField) -> InequalityReport:
    """``||f g||_{X^0} <= ||f||_{X^0} ||g||_{X^0}``."""
    lhs = tree_sum(np.abs(product_coefficients(f, g)))
    rhs = x_norm(f, 0) * x_norm(g, 0)
    return InequalityReport(lhs, rhs, lhs <= rhs * (1.0 + REL_SLACK))


def single_shell(field) -> bool:
    """True when every active mode sits on one sphere ``|xi| = const``."""
    k = field.grid.kmag[field.amplitudes() > 0]
    if k.size == 0:
        return True
    return bool(k.max() - k.min() <= 1e-12 * k.max())


def check_interpolation(f) -> InequalityReport:
    """``||f||_{X^0} <= ||f||_{X^-1}^{1/2} ||f||_{X^1}^{1/2}``."""
    lhs = x_norm(f, 0)
    rhs = float(np.sqrt(x_norm(f, -1) * x_norm(f, 1)))
    return InequalityReport(lhs, rhs, lhs <= rhs * (1.0 + REL_SLACK), equality=single_shell(f))
