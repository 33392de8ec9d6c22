"""Time integration of the incompressible Navier-Stokes system on the torus.

The viscous part is applied exactly through the multiplier ``exp(-nu t |xi|^2)``;
the Leray-projected nonlinearity is advanced by integrating-factor RK4.  Every
time-integral used by the critical-norm bounds is accumulated by the trapezoid
rule at every step.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from pathlib import Path
from typing import Iterator

import numpy as np
import scipy.fft

from critspace.norms import NormReport, norm_report, x_norm
from critspace.spectral import Grid, SpectralVectorField, fft_workers, save_checkpoint

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t", "x_m1", "x_0", "x_1", "l2",
    "int_x1", "int_x0_sq", "int_l1hat_sq", "bound_lhs", "bound_rhs",
)
_DIVFREE_INPUT_TOL = 1e-10
_OVERFLOW = 1e100


class UnresolvedError(RuntimeError):
    """The discrete run lost resolution (NaN/overflow); never evidence of PDE blow-up."""

    def __init__(self, t: float, message: str = "resolution or dt insufficient", series=None):
        super().__init__(f"{message} (t={t:.6g})")
        self.t = t
        self.series = series


class _Kernel:
    """Index maps and wavevectors for the dealiased modes with ``k_3 >= 0``.

    The stepper state lives on this compact block: per-axis wavenumbers
    ``|k_1|, |k_2| <= cutoff`` and ``0 <= k_3 <= cutoff``.  Modes with
    ``k_3 < 0`` are conjugates of stored ones, and everything else is zero.
    """

    _PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
    # position of u_i u_k inside the stacked products, indexed [i][k]
    _SLOT = ((0, 1, 2), (1, 3, 4), (2, 4, 5))

    def __init__(self, grid: Grid):
        n, c = grid.n, grid.cutoff
        self.grid = grid
        self.h = n // 2 + 1
        ax = np.r_[0 : c + 1, n - c : n] if c > 0 else np.array([0])
        az = np.arange(c + 1)
        self.block = np.ix_(ax, ax, az)
        neg_ax = (-ax) % n
        self.neg_block = np.ix_(neg_ax, neg_ax, (-az) % n)
        # position in ``ax`` of the negated wavenumber
        pos = {int(v): i for i, v in enumerate(ax)}
        flip = np.array([pos[int(v)] for v in neg_ax])
        self.plane_neg = np.ix_(flip, flip)
        self.k = grid.kvec[(slice(None),) + self.block].copy()
        ksq = grid.ksq[self.block]
        self.inv_ksq = np.divide(1.0, ksq, out=np.zeros_like(ksq), where=ksq > 0)
        self.shape = (3,) + ksq.shape

    def compact(self, full: np.ndarray) -> np.ndarray:
        return full[(slice(None),) + self.block].copy()

    def symmetrize_plane(self, comp: np.ndarray) -> np.ndarray:
        """Make the self-conjugate ``k_3 = 0`` plane exactly Hermitian, in place."""
        i, j = self.plane_neg
        p = comp[..., 0]
        comp[..., 0] = 0.5 * (p + np.conj(p[..., i, j]))
        return comp

    def expand(self, comp: np.ndarray) -> np.ndarray:
        """Full-lattice coefficients from an exactly Hermitian compact block."""
        n = self.grid.n
        full = np.zeros((3, n, n, n), dtype=complex)
        full[(slice(None),) + self.neg_block] = np.conj(comp)
        full[(slice(None),) + self.block] = comp
        return full

    def nonlinear_compact(self, comp: np.ndarray) -> np.ndarray:
        """``-P div(u (x) u)`` restricted to the compact block."""
        n = self.grid.n
        w = fft_workers()
        half = np.zeros((3, n, n, self.h), dtype=complex)
        half[(slice(None),) + self.block] = comp
        u = scipy.fft.irfftn(half, s=(n, n, n), axes=(1, 2, 3), norm="forward", workers=w)
        prods = np.stack([u[i] * u[k] for i, k in self._PAIRS])
        ph = scipy.fft.rfftn(prods, axes=(1, 2, 3), norm="forward", workers=w)[(slice(None),) + self.block]
        k = self.k
        div = np.empty(self.shape, dtype=complex)
        for i in range(3):
            s = self._SLOT[i]
            div[i] = 1j * (k[0] * ph[s[0]] + k[1] * ph[s[1]] + k[2] * ph[s[2]])
        dot = (k[0] * div[0] + k[1] * div[1] + k[2] * div[2]) * self.inv_ksq
        return self.symmetrize_plane(dot[None] * k - div)

    def nonlinear(self, coeffs: np.ndarray) -> np.ndarray:
        return self.expand(self.nonlinear_compact(self.compact(coeffs)))


@lru_cache(maxsize=8)
def kernel(grid: Grid) -> _Kernel:
    return _Kernel(grid)


def heat_multiplier(grid: Grid, tau: float, nu: float) -> np.ndarray:
    return np.exp(-nu * tau * grid.ksq)


def nonlinear_term(u: SpectralVectorField) -> SpectralVectorField:
    """Projected convective term ``-P div(u (x) u)``, dealiased and divergence-free."""
    if u.divergence_residual() > _DIVFREE_INPUT_TOL:
        raise ValueError(f"input is not divergence-free (residual {u.divergence_residual():.3e})")
    c = u.coeffs * u.grid.mask
    return SpectralVectorField(u.grid, kernel(u.grid).nonlinear(c))


def heat_propagate(u: SpectralVectorField, tau: float, nu: float) -> SpectralVectorField:
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return SpectralVectorField(u.grid, u.coeffs * heat_multiplier(u.grid, tau, nu))


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    dt: float
    t_end: float
    grid: Grid
    record_every: int = 1

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


class Stepper:
    """Integrating-factor RK4 for ``d/dt v = exp(-nu t Delta) N(exp(nu t Delta) v)``."""

    def __init__(self, grid: Grid, nu: float, dt: float):
        self.grid = grid
        self.dt = dt
        self.kernel = kernel(grid)
        block = self.kernel.block
        self.e_half = heat_multiplier(grid, 0.5 * dt, nu)[block]
        self.e_full = heat_multiplier(grid, dt, nu)[block]

    def __call__(self, c: np.ndarray) -> np.ndarray:
        """Advance a compact coefficient block by one step."""
        N, h, eh, ef = self.kernel.nonlinear_compact, self.dt, self.e_half, self.e_full
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = N(c)
            k2 = N(eh * (c + 0.5 * h * k1))
            k3 = N(eh * c + 0.5 * h * k2)
            k4 = N(ef * c + h * eh * k3)
            out = ef * c + (h / 6.0) * (ef * k1 + 2.0 * eh * (k2 + k3) + k4)
        if not np.all(np.isfinite(out)) or np.abs(out).max(initial=0.0) > _OVERFLOW:
            raise FloatingPointError("resolution or dt insufficient")
        return out


def step(u: SpectralVectorField, config: SolverConfig) -> SpectralVectorField:
    """One integrating-factor RK4 step of size ``config.dt``."""
    stepper = Stepper(u.grid, config.nu, config.dt)
    comp = stepper.kernel.compact(u.coeffs)
    try:
        comp = stepper(comp)
    except FloatingPointError as exc:
        raise UnresolvedError(config.dt) from exc
    return SpectralVectorField(u.grid, stepper.kernel.expand(comp))


@dataclass(frozen=True)
class Snapshot:
    step: int
    t: float
    field: SpectralVectorField
    norms: NormReport
    int_x1: float
    int_x0_sq: float
    int_l1hat_sq: float


def cfl_number(u: SpectralVectorField, dt: float) -> float:
    """``dt * ||u||_inf * k_max`` with the sup norm bounded by the X^0 norm."""
    return dt * x_norm(u, 0) * u.grid.cutoff


def trajectory(u0: SpectralVectorField, config: SolverConfig) -> Iterator[Snapshot]:
    """Yield a :class:`Snapshot` at ``t = 0``, every ``record_every`` steps, and at ``t_end``."""
    if u0.grid != config.grid:
        raise ValueError("initial datum and solver config use different grids")
    cfl = cfl_number(u0, config.dt)
    if cfl > 1.0:
        log.warning("advisory CFL estimate %.3g exceeds 1 (dt=%g)", cfl, config.dt)
    stepper = Stepper(config.grid, config.nu, config.dt)
    expand = stepper.kernel.expand
    c = u0.coeffs * config.grid.mask
    if np.any(c != u0.coeffs):
        log.warning("initial datum has modes outside the dealiasing mask; they are dropped")
    u = SpectralVectorField(config.grid, c)
    c = stepper.kernel.compact(c)
    rep = norm_report(u)
    i1 = i0 = 0.0
    yield Snapshot(0, 0.0, u, rep, 0.0, 0.0, 0.0)
    half_dt = 0.5 * config.dt
    n_steps = config.n_steps
    for k in range(1, n_steps + 1):
        t = k * config.dt
        try:
            c = stepper(c)
        except FloatingPointError as exc:
            raise UnresolvedError(t) from exc
        u = SpectralVectorField(config.grid, expand(c))
        new = norm_report(u)
        i1 += half_dt * (rep.x_1 + new.x_1)
        i0 += half_dt * (rep.x_0**2 + new.x_0**2)
        rep = new
        if k % config.record_every == 0 or k == n_steps:
            yield Snapshot(k, t, u, rep, i1, i0, i0)


@dataclass
class TimeSeries:
    """Per-record norms, running integrals, and the small-data bound diagnostics."""

    nu: float
    t: list[float] = dc_field(default_factory=list)
    x_m1: list[float] = dc_field(default_factory=list)
    x_0: list[float] = dc_field(default_factory=list)
    x_1: list[float] = dc_field(default_factory=list)
    l2: list[float] = dc_field(default_factory=list)
    hs: list[float] = dc_field(default_factory=list)
    int_x1: list[float] = dc_field(default_factory=list)
    int_x0_sq: list[float] = dc_field(default_factory=list)
    int_l1hat_sq: list[float] = dc_field(default_factory=list)
    bound_lhs: list[float] = dc_field(default_factory=list)
    bound_rhs: list[float] = dc_field(default_factory=list)
    div_residual: list[float] = dc_field(default_factory=list)

    def append(self, snap: Snapshot) -> None:
        r = snap.norms
        self.t.append(snap.t)
        self.x_m1.append(r.x_m1)
        self.x_0.append(r.x_0)
        self.x_1.append(r.x_1)
        self.l2.append(r.l2)
        self.hs.append(r.hs)
        self.int_x1.append(snap.int_x1)
        self.int_x0_sq.append(snap.int_x0_sq)
        self.int_l1hat_sq.append(snap.int_l1hat_sq)
        u0_norm = self.x_m1[0]
        if u0_norm < self.nu:
            self.bound_lhs.append(r.x_m1 + (self.nu - u0_norm) * snap.int_x1)
            self.bound_rhs.append(u0_norm)
        else:
            self.bound_lhs.append(math.nan)
            self.bound_rhs.append(math.nan)
        self.div_residual.append(snap.field.divergence_residual())

    def __len__(self) -> int:
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    @property
    def small_data(self) -> bool:
        return bool(self.x_m1) and self.x_m1[0] < self.nu

    def bound_excess(self) -> float:
        """``max_t (bound_lhs - bound_rhs)``; NaN when the datum is not small."""
        if not self.small_data:
            return math.nan
        return float(np.max(self.column("bound_lhs") - self.column("bound_rhs")))

    def rows(self, prefix: str = ""):
        header = [prefix + c if c != "t" else c for c in CSV_COLUMNS]
        yield header
        for i in range(len(self.t)):
            yield [repr(float(getattr(self, c)[i])) for c in CSV_COLUMNS]

    def to_csv(self, path, prefix: str = "") -> None:
        with open(Path(path), "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows(prefix))


def evolve(
    u0: SpectralVectorField,
    config: SolverConfig,
    checkpoint_dir=None,
) -> TimeSeries:
    """Run the solver from ``u0`` and return the recorded :class:`TimeSeries`.

    With ``checkpoint_dir`` set, the field at every record is written there as
    ``field_<step>.bin``.
    """
    series = TimeSeries(nu=config.nu)
    it = trajectory(u0, config)
    while True:
        try:
            snap = next(it)
        except StopIteration:
            return series
        except UnresolvedError as exc:
            exc.series = series
            raise
        series.append(snap)
        if checkpoint_dir is not None:
            save_checkpoint(snap.field, Path(checkpoint_dir) / f"field_{snap.step:08d}.bin")


@dataclass(frozen=True)
class BlowupReport:
    int_x0_sq: float
    int_x1: float
    rate_x0_sq: float
    rate_x1: float
    tail_x0_sq: float
    tail_x1: float
    flag: str

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _tail(t: np.ndarray, f: np.ndarray, total: float, plateau_tol: float) -> tuple[float, str]:
    """Exponential-tail extrapolation of ``int f`` past the last record."""
    if f[-1] == 0.0:
        return 0.0, "bounded"
    window = max(3, len(t) // 4)
    tw, fw = t[-window:], f[-window:]
    if len(tw) < 3 or np.any(fw <= 0):
        return math.inf, "inconclusive"
    slope = np.polyfit(tw - tw[0], np.log(fw), 1)[0]
    if slope >= 0 or fw[-1] > fw[0]:
        return math.inf, "unbounded"
    tail = fw[-1] / -slope
    return tail, "bounded" if tail <= plateau_tol * max(total, 1e-300) else "inconclusive"


def blowup_monitor(series: TimeSeries, plateau_tol: float = 1e-2) -> BlowupReport:
    """Report the continuation integrals and whether both have plateaued.

    ``flag`` is ``"bounded"`` when both integrals converge (their extrapolated
    tails are below ``plateau_tol`` of the accumulated value), ``"unbounded"``
    when an integrand is still growing at the end of the record, and
    ``"inconclusive"`` otherwise.
    """
    t = series.column("t")
    f0 = series.column("x_0") ** 2
    f1 = series.column("x_1")
    i0 = float(series.int_x0_sq[-1]) if len(series) else 0.0
    i1 = float(series.int_x1[-1]) if len(series) else 0.0
    if len(series) == 0:
        return BlowupReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, "bounded")
    tail0, flag0 = _tail(t, f0, i0, plateau_tol)
    tail1, flag1 = _tail(t, f1, i1, plateau_tol)
    if "unbounded" in (flag0, flag1):
        flag = "unbounded"
    elif flag0 == flag1 == "bounded":
        flag = "bounded"
    else:
        flag = "inconclusive"
    return BlowupReport(i0, i1, float(f0[-1]), float(f1[-1]), tail0, tail1, flag)

