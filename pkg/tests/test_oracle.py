import json
import math

import numpy as np
import pytest

from critspace.oracle import (
    DIVERGES,
    PowerSegment,
    RadialProfile,
    embedding_constant,
    gaussian,
    lemma22_check,
    profile_report,
    radial_hs_sq,
    radial_x_norm,
    random_power_profile,
    remark_f,
    remark_g,
    thin_shell,
)
from oracles import riemann_sum_3d


class TestCounterexampleProfiles:
    def test_f_x_norm(self):
        assert radial_x_norm(remark_f(), -1) == pytest.approx(8 * math.pi, rel=1e-8)

    def test_g_x_norm_diverges(self):
        assert radial_x_norm(remark_g(), -1) == DIVERGES

    def test_f_half_sobolev_is_finite(self):
        # 4 pi int_0^1 r^(1 - 3 + 2) dr
        assert radial_hs_sq(remark_f(), 0.5) == pytest.approx(4 * math.pi, rel=1e-12)

    def test_g_half_sobolev_diverges(self):
        assert radial_hs_sq(remark_g(), 0.5) == DIVERGES

    def test_report_encodes_divergence(self):
        d = profile_report(remark_g(), 0.5)
        assert d["x_m1"] == "DIVERGES" and d["diverges"]["x_m1"]
        assert d["lemma22"] is None
        json.dumps(d)


def test_zero_profile():
    z = RadialProfile.power((0.0, 1.0, 0.0, -5.0))
    assert radial_x_norm(z, -1) == 0.0
    assert radial_hs_sq(z, 2) == 0.0
    assert radial_x_norm(RadialProfile(), 1) == 0.0


def test_log_divergence_and_log_value():
    # r^-3 against r^2 d r: int r^-1
    assert radial_x_norm(RadialProfile.power((0.0, 1.0, 1.0, -3.0)), 0) == DIVERGES
    assert radial_x_norm(RadialProfile.power((1.0, math.e, 1.0, -3.0)), 0) == pytest.approx(4 * math.pi)


def test_bad_segments():
    with pytest.raises(ValueError):
        PowerSegment(1.0, 0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        PowerSegment(0.0, 1.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        RadialProfile.power((0.0, 2.0, 1.0, 0.0), (1.0, 3.0, 1.0, 0.0))


class TestGaussian:
    def test_l2_against_closed_form_and_lattice_sum(self):
        val = radial_hs_sq(gaussian(), 0)
        assert val == pytest.approx(math.pi**1.5 / math.sqrt(8), rel=1e-10)
        ref = riemann_sum_3d(lambda r: np.exp(-2 * r * r), 5.0, 0.1)
        assert val == pytest.approx(ref, rel=1e-4)

    def test_h1_against_lattice_sum(self):
        ref = riemann_sum_3d(lambda r: r * r * np.exp(-2 * r * r), 5.0, 0.1)
        assert radial_hs_sq(gaussian(), 1) == pytest.approx(ref, rel=1e-4)

    def test_x_norms(self):
        assert radial_x_norm(gaussian(), -1) == pytest.approx(2 * math.pi, rel=1e-10)
        assert radial_x_norm(gaussian(), 0) == pytest.approx(math.pi**1.5, rel=1e-10)

    def test_embedding(self):
        rep = lemma22_check(gaussian(), 1.0)
        assert rep.holds and rep.lhs < rep.rhs


@pytest.mark.parametrize("p", [-2.5, -1.0, 0.0, 1.5])
@pytest.mark.parametrize("support", [(0.0, 1.0), (0.5, 3.0), (2.0, math.inf)])
def test_closed_form_matches_quadrature(p, support):
    prof = RadialProfile.power((support[0], support[1], 1.3, p))
    for e, power in [(1.0, 1), (2.0, 1), (2.0, 2), (4.0, 2)]:
        exact = prof.moment(e, power)
        if math.isinf(exact):
            continue
        assert prof.quad_moment(e, power) == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("lam", [0.5, 2.0])
@pytest.mark.parametrize("s", [-1.0, 0.0, 1.0])
def test_scaling_law(lam, s):
    prof = RadialProfile.power((0.0, 1.0, 1.0, -0.5), (1.0, 4.0, 2.0, -3.0))
    assert radial_x_norm(prof.scaled(lam), s) == pytest.approx(lam ** -(s + 3) * radial_x_norm(prof, s), rel=1e-12)


class TestLemma22:
    def test_rejects_half(self):
        with pytest.raises(ValueError):
            lemma22_check(gaussian(), 0.5)

    def test_constant(self):
        assert embedding_constant(1.0) == pytest.approx(2 * math.sqrt(4 * math.pi))

    def test_thin_shell(self):
        rep = lemma22_check(thin_shell(), 1.0)
        assert rep.holds
        # lhs ~ 4 pi w while both Sobolev norms ~ sqrt(4 pi w): ratio sqrt(4 pi w) / C_1
        assert rep.ratio == pytest.approx(math.sqrt(4 * math.pi * 1e-2) / embedding_constant(1.0), rel=1e-3)
        assert rep.R_star == pytest.approx(1.0, rel=1e-3)

    def test_intermediate_bounds_reported(self):
        rep = lemma22_check(RadialProfile.power((0.2, 3.0, 1.0, -1.0)), 2.0)
        assert rep.low <= rep.low_bound and rep.high <= rep.high_bound
        assert rep.low + rep.high == pytest.approx(rep.lhs, rel=1e-12)
        assert rep.low_bound + rep.high_bound == pytest.approx(rep.rhs, rel=1e-12)

    def test_infinite_norm_rejected(self):
        with pytest.raises(ValueError):
            lemma22_check(remark_g(), 1.0)


@pytest.mark.parametrize("s", [0.6, 1.0, 2.0])
def test_random_profiles_never_undercut(s):
    rng = np.random.default_rng(int(s * 10))
    worst = 0.0
    for _ in range(300):
        rep = lemma22_check(random_power_profile(rng), s)
        assert rep.holds, rep.to_json()
        worst = max(worst, rep.ratio)
    assert worst <= 1.0
