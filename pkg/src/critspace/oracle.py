"""Radial integrals on R^3 for the Fourier-side norms.

A radial Fourier profile ``phi(r)`` turns every norm into a 1-D integral:
``int |xi|^s phi(|xi|) dxi = 4 pi int r^(s+2) phi(r) dr``.  Profiles are either
piecewise power laws ``coef * r^p`` on ordered segments (evaluated in closed
form) or arbitrary callables (evaluated with adaptive quadrature).  An infinite
integral is reported as ``DIVERGES`` (``math.inf``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

from scipy import integrate

DIVERGES = math.inf
FOUR_PI = 4.0 * math.pi
QUAD_RTOL = 1e-8


@dataclass(frozen=True)
class PowerSegment:
    """``phi(r) = coef * r**p`` for ``r_lo <= r < r_hi``."""

    r_lo: float
    r_hi: float
    coef: float
    p: float

    def __post_init__(self):
        if not (0 <= self.r_lo < self.r_hi):
            raise ValueError(f"segment needs 0 <= r_lo < r_hi, got ({self.r_lo}, {self.r_hi})")
        if self.coef < 0:
            raise ValueError("profile amplitudes must be nonnegative")


def _power_integral(a: float, b: float, e: float) -> float:
    """``int_a^b r^e dr`` with ``0 <= a < b <= inf``; ``DIVERGES`` when infinite."""
    if e == -1.0:
        if a == 0.0 or math.isinf(b):
            return DIVERGES
        return math.log(b / a)
    q = e + 1.0
    if q < 0:
        if a == 0.0:
            return DIVERGES
        upper = 0.0 if math.isinf(b) else b**q
        return (upper - a**q) / q
    if math.isinf(b):
        return DIVERGES
    return (b**q - a**q) / q


class RadialProfile:
    """Nonnegative radial amplitude ``phi``; build with :meth:`power` or :meth:`from_callable`."""

    def __init__(self, segments: Sequence[PowerSegment] = (), func: Callable[[float], float] | None = None,
                 support: tuple[float, float] = (0.0, math.inf), breakpoints: Sequence[float] = ()):
        segs = tuple(segments)
        for left, right in zip(segs, segs[1:]):
            if right.r_lo < left.r_hi:
                raise ValueError("segments must be ordered and non-overlapping")
        if func is not None and segs:
            raise ValueError("give either power segments or a callable, not both")
        self.segments = segs
        self.func = func
        self.support = support
        self.breakpoints = tuple(breakpoints)

    @classmethod
    def power(cls, *segments) -> "RadialProfile":
        return cls([s if isinstance(s, PowerSegment) else PowerSegment(*s) for s in segments])

    @classmethod
    def from_callable(cls, func, support=(0.0, math.inf), breakpoints=()) -> "RadialProfile":
        return cls(func=func, support=support, breakpoints=breakpoints)

    @property
    def is_power(self) -> bool:
        return self.func is None

    def __call__(self, r: float) -> float:
        if self.func is not None:
            lo, hi = self.support
            return self.func(r) if lo <= r < hi else 0.0
        for seg in self.segments:
            if seg.r_lo <= r < seg.r_hi:
                return seg.coef * r**seg.p
        return 0.0

    def restrict(self, lo: float, hi: float) -> "RadialProfile":
        """The profile multiplied by the indicator of ``lo <= r < hi``."""
        if self.func is not None:
            a, b = max(lo, self.support[0]), min(hi, self.support[1])
            if a >= b:
                return RadialProfile()
            return RadialProfile(func=self.func, support=(a, b), breakpoints=self.breakpoints)
        out = []
        for seg in self.segments:
            a, b = max(lo, seg.r_lo), min(hi, seg.r_hi)
            if a < b:
                out.append(PowerSegment(a, b, seg.coef, seg.p))
        return RadialProfile(out)

    def scaled(self, lam: float) -> "RadialProfile":
        """``r -> phi(lam r)``."""
        if not lam > 0:
            raise ValueError("scale must be positive")
        if self.func is not None:
            f = self.func
            lo, hi = self.support
            return RadialProfile(func=lambda r: f(lam * r), support=(lo / lam, hi / lam),
                                 breakpoints=[b / lam for b in self.breakpoints])
        return RadialProfile([PowerSegment(s.r_lo / lam, s.r_hi / lam, s.coef * lam**s.p, s.p) for s in self.segments])

    def moment(self, e: float, power: int = 1) -> float:
        """``4 pi int r^e phi(r)^power dr``."""
        if self.func is None:
            total = 0.0
            for seg in self.segments:
                if seg.coef == 0.0:
                    continue
                part = _power_integral(seg.r_lo, seg.r_hi, e + power * seg.p)
                if math.isinf(part):
                    return DIVERGES
                total += seg.coef**power * part
            return FOUR_PI * total
        return FOUR_PI * self._quad(lambda r: r**e * self.func(r) ** power)

    def quad_moment(self, e: float, power: int = 1) -> float:
        """Same as :meth:`moment` but always by adaptive quadrature (segment by segment)."""
        if self.func is not None:
            return self.moment(e, power)
        total = 0.0
        for seg in self.segments:
            total += RadialProfile(func=lambda r, s=seg: s.coef * r**s.p, support=(seg.r_lo, seg.r_hi))._quad(
                lambda r, s=seg: r**e * (s.coef * r**s.p) ** power
            )
        return FOUR_PI * total

    def _quad(self, integrand) -> float:
        lo, hi = self.support
        inner = sorted(b for b in self.breakpoints if lo < b < hi)
        edges = [lo, *inner, hi]
        total = 0.0
        for a, b in zip(edges, edges[1:]):
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                try:
                    val, err = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-11, limit=500)
                except integrate.IntegrationWarning as exc:
                    raise ValueError(f"quadrature did not converge on [{a}, {b}]: {exc}") from exc
            if not math.isfinite(val) or err > QUAD_RTOL * abs(val) + 1e-300:
                raise ValueError(f"quadrature error {err:.3g} too large on [{a}, {b}]")
            total += val
        return total


def radial_x_norm(profile: RadialProfile, s: float) -> float:
    """``int |xi|^s phi(|xi|) dxi``; ``DIVERGES`` if infinite."""
    return profile.moment(s + 2.0)


def radial_hs_sq(profile: RadialProfile, s: float) -> float:
    """``int |xi|^(2s) phi(|xi|)^2 dxi``; ``s = 0`` is the squared L^2 norm."""
    return profile.moment(2.0 * s + 2.0, power=2)


def embedding_constant(s: float) -> float:
    return math.sqrt(FOUR_PI) + math.sqrt(FOUR_PI / (2.0 * s - 1.0))


@dataclass(frozen=True)
class EmbeddingReport:
    s: float
    lhs: float
    rhs: float
    C_s: float
    R_star: float
    l2: float
    hs: float
    low: float
    low_bound: float
    high: float
    high_bound: float
    holds: bool

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0

    def to_json(self) -> dict:
        return {
            "s": self.s, "lhs": self.lhs, "rhs": self.rhs, "C_s": self.C_s, "R_star": self.R_star,
            "low": self.low, "low_bound": self.low_bound, "high": self.high, "high_bound": self.high_bound,
            "holds": self.holds,
        }


def lemma22_check(profile: RadialProfile, s: float, rel_slack: float = 1e-10) -> EmbeddingReport:
    """Check ``||f||_{X^-1} <= C_s ||f||_2^(1 - 1/(2s)) ||f||_{H^s}^(1/(2s))`` and both split bounds.

    The split radius is ``R = (||f||_{H^s} / ||f||_2)^(1/s)``; the part below ``R``
    is bounded through ``||f||_2`` and the part above through ``||f||_{H^s}``.
    """
    if not s > 0.5:
        raise ValueError("s must exceed 1/2: the embedding into X^-1 fails at s <= 1/2")
    l2 = math.sqrt(radial_hs_sq(profile, 0.0))
    hs = math.sqrt(radial_hs_sq(profile, s))
    if math.isinf(l2) or math.isinf(hs):
        raise ValueError("profile must have finite L^2 and homogeneous H^s norms")
    lhs = radial_x_norm(profile, -1.0)
    c_s = embedding_constant(s)
    if l2 == 0.0:
        return EmbeddingReport(s, lhs, 0.0, c_s, math.nan, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, lhs == 0.0)
    rhs = c_s * l2 ** (1 - 1 / (2 * s)) * hs ** (1 / (2 * s))
    r_star = (hs / l2) ** (1 / s)
    low = radial_x_norm(profile.restrict(0.0, r_star), -1.0)
    high = radial_x_norm(profile.restrict(r_star, math.inf), -1.0)
    low_bound = math.sqrt(FOUR_PI * r_star) * l2
    high_bound = math.sqrt(FOUR_PI / (2 * s - 1)) * r_star ** (0.5 - s) * hs
    tol = 1 + rel_slack
    holds = lhs <= rhs * tol and low <= low_bound * tol and high <= high_bound * tol
    return EmbeddingReport(s, lhs, rhs, c_s, r_star, l2, hs, low, low_bound, high, high_bound, holds)


def _encode(v: float):
    return "DIVERGES" if math.isinf(v) else v


def profile_report(profile: RadialProfile, s: float = 1.0) -> dict:
    """JSON-ready summary of one profile: norms, divergence flags, and the embedding check when it applies."""
    vals = {
        "x_m1": radial_x_norm(profile, -1.0),
        "x_0": radial_x_norm(profile, 0.0),
        "l2": math.sqrt(radial_hs_sq(profile, 0.0)),
        "hs": math.sqrt(radial_hs_sq(profile, s)),
    }
    out = {k: _encode(v) for k, v in vals.items()}
    out["s"] = s
    out["diverges"] = {k: math.isinf(v) for k, v in vals.items()}
    if s > 0.5 and not (out["diverges"]["l2"] or out["diverges"]["hs"]):
        out["lemma22"] = lemma22_check(profile, s).to_json()
    else:
        out["lemma22"] = None
    return out


def remark_f() -> RadialProfile:
    """``|xi|^(-3/2)`` on the unit ball."""
    return RadialProfile.power((0.0, 1.0, 1.0, -1.5))


def remark_g() -> RadialProfile:
    """``|xi|^(-7/4)`` outside the unit ball."""
    return RadialProfile.power((1.0, math.inf, 1.0, -1.75))


def gaussian() -> RadialProfile:
    return RadialProfile.from_callable(lambda r: math.exp(-r * r))


def thin_shell(radius: float = 1.0, width: float = 1e-2) -> RadialProfile:
    return RadialProfile.power((radius - width / 2, radius + width / 2, 1.0, 0.0))


def random_power_profile(rng) -> RadialProfile:
    """A few power segments on ``[0.05, 10]``, sometimes with a fast-decaying tail to infinity.

    Every norm used by :func:`lemma22_check` with ``s <= 2`` is finite for these.
    """
    n = int(rng.integers(1, 5))
    edges = sorted(rng.uniform(0.05, 10.0, size=n + 1))
    segs = [PowerSegment(a, b, rng.uniform(0, 3), rng.uniform(-3, 3)) for a, b in zip(edges, edges[1:])]
    if rng.random() < 0.3:
        segs.append(PowerSegment(edges[-1], math.inf, rng.uniform(0, 1), rng.uniform(-9, -4)))
    return RadialProfile(segs)
