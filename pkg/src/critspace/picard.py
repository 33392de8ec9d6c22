"""Fixed-point (Duhamel) solver on a uniform time grid.

The mild formulation ``u(t) = e^{nu t Delta} u0 + int_0^t e^{nu (t-s) Delta} N(u(s)) ds``
with ``N(u) = -P div(u (x) u)`` is iterated from the heat flow of ``u0``.  The
s-integral uses the trapezoid rule with the exact heat multiplier inside the
integrand, so the quadrature is the only error source.  Iterates are compared
in ``sup_t ||.||_{X^-1} + nu int ||.||_{X^1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from critspace.dynamics import SolverConfig, heat_multiplier, kernel, trajectory as stepper_trajectory
from critspace.norms import tree_sum, x_norm
from critspace.spectral import Grid, SpectralVectorField

MAX_TRAJECTORY_POINTS = 4_000_000


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Fields sampled at ``times = linspace(0, T, n_time)``; ``coeffs`` has shape ``(n_time, 3, n, n, n)``."""

    grid: Grid
    times: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (len(self.times), 3) + self.grid.shape:
            raise ValueError("trajectory coefficients do not match its grid and time samples")
        if len(self.times) < 2:
            raise ValueError("a trajectory needs at least two time samples")
        dt = np.diff(self.times)
        if self.times[0] != 0.0 or np.any(np.abs(dt - dt[0]) > 1e-12 * max(1.0, self.times[-1])):
            raise ValueError("trajectory must be sampled on a uniform grid starting at t = 0")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def __len__(self) -> int:
        return len(self.times)

    def field(self, j: int) -> SpectralVectorField:
        return SpectralVectorField(self.grid, self.coeffs[j])

    def norms(self, s: int) -> np.ndarray:
        return np.array([x_norm(self.field(j), s) for j in range(len(self))])


def heat_flow(u0: SpectralVectorField, times: np.ndarray, nu: float) -> Trajectory:
    c = np.stack([u0.coeffs * heat_multiplier(u0.grid, t, nu) for t in times])
    return Trajectory(u0.grid, np.asarray(times, dtype=float), c)


def duhamel_map(traj: Trajectory, u0: SpectralVectorField, nu: float) -> Trajectory:
    """One application of the mild-solution map to ``traj``."""
    if traj.grid != u0.grid:
        raise ValueError("grid mismatch between trajectory and initial datum")
    grid = traj.grid
    ker = kernel(grid)
    e_dt = heat_multiplier(grid, traj.dt, nu)
    half = 0.5 * traj.dt
    out = np.empty_like(traj.coeffs)
    prev_n = ker.nonlinear(traj.coeffs[0])
    acc = np.zeros_like(prev_n)
    out[0] = u0.coeffs
    for j in range(1, len(traj)):
        n_j = ker.nonlinear(traj.coeffs[j])
        # I_j = E(dt) I_{j-1} + dt/2 (E(dt) N_{j-1} + N_j): composite trapezoid, exact multiplier
        acc = e_dt * (acc + half * prev_n) + half * n_j
        out[j] = u0.coeffs * heat_multiplier(grid, traj.times[j], nu) + acc
        prev_n = n_j
    return Trajectory(grid, traj.times, out)


def _trapezoid(values: np.ndarray, dt: float) -> float:
    return float(dt * (tree_sum(values) - 0.5 * (values[0] + values[-1])))


def mixed_distance(a: Trajectory, b: Trajectory, nu: float) -> float:
    """``sup_t ||a - b||_{X^-1} + nu int_0^T ||a - b||_{X^1} dt``."""
    diff = Trajectory(a.grid, a.times, a.coeffs - b.coeffs)
    return float(diff.norms(-1).max() + nu * _trapezoid(diff.norms(1), a.dt))


@dataclass
class PicardReport:
    iterates: int = 0
    diffs: list[float] = dc_field(default_factory=list)
    ratios: list[float] = dc_field(default_factory=list)
    converged: bool = False
    diverged: bool = False
    bound_excess: float = math.nan

    def to_json(self) -> dict:
        return {
            "iterates": self.iterates,
            "diffs": list(self.diffs),
            "ratios": list(self.ratios),
            "converged": self.converged,
        }

    def tail_ratios(self, count: int = 3) -> list[float]:
        return self.ratios[-count:]


def bound_excess(traj: Trajectory, nu: float) -> float:
    """``max_t [||u(t)||_{X^-1} + (nu - ||u0||_{X^-1}) int_0^t ||u||_{X^1} - ||u0||_{X^-1}]``."""
    xm1 = traj.norms(-1)
    if xm1[0] >= nu:
        return math.nan
    x1 = traj.norms(1)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * traj.dt * (x1[1:] + x1[:-1]))])
    return float(np.max(xm1 + (nu - xm1[0]) * integral - xm1[0]))


def solve_picard(
    u0: SpectralVectorField,
    nu: float,
    T: float,
    n_time: int = 101,
    max_iter: int = 50,
    tol: float = 1e-10,
) -> tuple[Trajectory, PicardReport]:
    """Iterate the Duhamel map from the heat flow until successive iterates agree to ``tol``.

    Non-convergence is reported through ``PicardReport.converged``; a run whose
    iterates grow without bound is stopped early and flagged ``diverged``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if n_time < 2:
        raise ValueError("n_time must be >= 2")
    if n_time * u0.grid.n**3 > MAX_TRAJECTORY_POINTS:
        raise ValueError(f"n_time * n^3 exceeds {MAX_TRAJECTORY_POINTS}; reduce n_time or n")
    u0 = SpectralVectorField(u0.grid, u0.coeffs * u0.grid.mask)
    times = np.linspace(0.0, T, n_time)
    traj = heat_flow(u0, times, nu)
    report = PicardReport()
    scale = max(x_norm(u0, -1), 1e-300)
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            new = duhamel_map(traj, u0, nu)
            d = mixed_distance(new, traj, nu)
        report.iterates += 1
        if report.diffs and report.diffs[-1] > 0:
            report.ratios.append(d / report.diffs[-1])
        report.diffs.append(d)
        if not math.isfinite(d) or d > 1e8 * scale:
            report.diverged = True
            break
        traj = new
        if d < tol:
            report.converged = True
            break
    report.bound_excess = bound_excess(traj, nu)
    return traj, report


@dataclass(frozen=True)
class PicardConfig:
    nu: float = 1.0
    T: float = 0.1
    n_time: int = 101
    max_iter: int = 50
    tol: float = 1e-10
    substeps: int = 4

    def __post_init__(self):
        if not self.nu > 0 or not self.T > 0:
            raise ValueError("nu and T must be positive")
        if self.n_time < 2 or self.max_iter < 1 or self.substeps < 1:
            raise ValueError("n_time >= 2, max_iter >= 1 and substeps >= 1 are required")


@dataclass
class CrossValidationReport:
    max_rel_discrepancy: float
    times: list[float]
    discrepancies: list[float]
    picard: PicardReport

    def to_json(self) -> dict:
        return {
            "max_rel_discrepancy": self.max_rel_discrepancy,
            "picard": self.picard.to_json(),
            "bound_excess": self.picard.bound_excess,
        }


def cross_validate(u0: SpectralVectorField, config: PicardConfig) -> CrossValidationReport:
    """Compare the converged Picard trajectory with the time stepper at the Picard times.

    The discrepancy at each time is ``||u_picard - u_stepper||_{X^-1} / ||u_stepper||_{X^-1}``
    (zero where both vanish).
    """
    traj, rep = solve_picard(u0, config.nu, config.T, config.n_time, config.max_iter, config.tol)
    dt = config.T / (config.n_time - 1) / config.substeps
    cfg = SolverConfig(config.nu, dt, config.T, u0.grid, record_every=config.substeps)
    rel = []
    for j, snap in enumerate(stepper_trajectory(u0, cfg)):
        ref = snap.norms.x_m1
        err = x_norm(SpectralVectorField(u0.grid, traj.coeffs[j] - snap.field.coeffs), -1)
        rel.append(0.0 if err == 0.0 else err / max(ref, 1e-300))
    return CrossValidationReport(max(rel), list(traj.times), rel, rep)
