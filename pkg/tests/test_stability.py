import json
import math

import numpy as np
import pytest

from critspace.dynamics import SolverConfig, TimeSeries, evolve
from critspace.norms import x_norm
from critspace.spectral import SpectralVectorField, make_grid, random_divfree_field, shear_mode
from critspace.stability import perturbation_threshold, run_stability


def scaled(grid, seed, target, slope=2.0):
    u = random_divfree_field(grid, seed, slope=slope, k_max=grid.cutoff)
    return u * (target / x_norm(u, -1))


class TestThreshold:
    def test_zero_base(self):
        g = make_grid(8)
        s = evolve(SpectralVectorField.zeros(g), SolverConfig(1.0, 0.01, 0.1, g))
        assert perturbation_threshold(s, 1.0).value == 1 / 8

    def test_single_mode_closed_form(self):
        # ||u_hat||_L1 = 0.5 e^{-t}: integral to infinity 0.125
        g = make_grid(8)
        s = evolve(shear_mode(g, 0.5), SolverConfig(1.0, 1e-3, 5.0, g, record_every=50))
        th = perturbation_threshold(s, 1.0)
        assert th.value == pytest.approx(math.exp(-0.25) / 8, rel=1e-6)
        assert th.tail == pytest.approx(0.125 * math.exp(-10), rel=1e-2)

    def test_formula(self):
        s = TimeSeries(nu=1.0)
        s.t, s.x_0, s.int_l1hat_sq = [0.0, 1.0, 2.0, 3.0], [0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 2.0, 2.0]
        assert perturbation_threshold(s, 1.0).value == pytest.approx(math.exp(-4) / 8)

    def test_growing_base_rejected(self):
        s = TimeSeries(nu=1.0)
        s.t = list(np.linspace(0, 1, 10))
        s.x_0 = list(np.exp(np.linspace(0, 1, 10)))
        s.int_l1hat_sq = list(np.linspace(0, 1, 10))
        with pytest.raises(ValueError, match="plateaued"):
            perturbation_threshold(s, 1.0)


@pytest.fixture(scope="module")
def base():
    g = make_grid(16)
    u0 = scaled(g, 11, 0.5)
    cfg = SolverConfig(1.0, 4e-3, 3.0, g, record_every=5)
    return u0, cfg, perturbation_threshold(evolve(u0, cfg), 1.0).value


class TestRun:
    def test_zero_perturbation(self, base):
        u0, cfg, th = base
        rep = run_stability(u0, SpectralVectorField.zeros(u0.grid), cfg, th)
        assert rep.sup_w == 0.0 and rep.passed
        assert all(v == 0.0 for v in rep.lhs)

    def test_below_threshold(self, base):
        u0, cfg, th = base
        rep = run_stability(u0, scaled(u0.grid, 12, 0.9 * th, slope=1.0), cfg, th)
        assert rep.precondition and rep.passed
        assert rep.wall_T is None and rep.sup_w < 1 / 8
        assert rep.max_residual <= 1e-3
        assert rep.sup_w <= rep.sup_bound
        d = json.loads(json.dumps(rep.to_json()))
        assert d["bound"]["holds"]
        header = next(rep.w_series.rows("w_"))
        assert header[:3] == ["t", "w_x_m1", "w_x_0"]

    def test_above_threshold_is_informational(self, base):
        u0, cfg, th = base
        with pytest.warns(UserWarning, match="threshold"):
            rep = run_stability(u0, scaled(u0.grid, 12, 10 * th, slope=1.0), cfg, th)
        assert not rep.precondition
        assert rep.passed  # nothing asserted
        assert len(rep.lhs) == len(rep.t)

    def test_swap_negates_difference(self, base):
        u0, cfg, th = base
        p = scaled(u0.grid, 13, 0.5 * th)
        a = run_stability(u0, p, cfg, th)
        b = run_stability(u0 + p, -1.0 * p, cfg, th)
        np.testing.assert_allclose(b.w_series.x_m1, a.w_series.x_m1, rtol=1e-9)

    def test_halving_delta_is_quasi_linear(self, base):
        u0, cfg, th = base
        p = scaled(u0.grid, 14, 0.8 * th)
        full = run_stability(u0, p, cfg, th).sup_w
        half = run_stability(u0, 0.5 * p, cfg, th).sup_w
        assert half / full == pytest.approx(0.5, rel=0.25)
