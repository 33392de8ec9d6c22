import json
import math

import numpy as np
import pytest

from critspace.norms import x_norm
from critspace.picard import (
    PicardConfig,
    Trajectory,
    cross_validate,
    duhamel_map,
    heat_flow,
    mixed_distance,
    solve_picard,
)
from critspace.spectral import SpectralVectorField, make_grid, random_divfree_field, shear_mode, taylor_green


def small(grid, seed, target):
    u = random_divfree_field(grid, seed, k_max=grid.cutoff)
    return u * (target / x_norm(u, -1))


def test_zero_trajectory_gives_heat_flow():
    g = make_grid(8)
    u0 = small(g, 1, 0.3)
    times = np.linspace(0, 0.2, 11)
    zero = Trajectory(g, times, np.zeros((11, 3) + g.shape, dtype=complex))
    out = duhamel_map(zero, u0, 1.0)
    np.testing.assert_array_equal(out.coeffs, heat_flow(u0, times, 1.0).coeffs)


def test_shear_heat_flow_is_fixed_point():
    g = make_grid(8)
    u0 = shear_mode(g, 0.7)
    traj = heat_flow(u0, np.linspace(0, 1, 21), 0.5)
    out = duhamel_map(traj, u0, 0.5)
    assert np.abs(out.coeffs - traj.coeffs).max() == 0.0


def test_duhamel_preserves_invariants():
    g = make_grid(16)
    u0 = small(g, 2, 0.8)
    out = duhamel_map(heat_flow(u0, np.linspace(0, 0.3, 16), 1.0), u0, 1.0)
    for j in range(len(out)):
        f = out.field(j)
        assert f.hermitian_defect() == 0.0
        assert f.divergence_residual() <= 1e-12


def test_grid_mismatch():
    traj = heat_flow(shear_mode(make_grid(8)), np.linspace(0, 1, 3), 1.0)
    with pytest.raises(ValueError, match="grid mismatch"):
        duhamel_map(traj, shear_mode(make_grid(16)), 1.0)


def test_nonuniform_times_rejected():
    g = make_grid(8)
    with pytest.raises(ValueError, match="uniform"):
        Trajectory(g, np.array([0.0, 0.1, 0.3]), np.zeros((3, 3) + g.shape, dtype=complex))


class TestSolve:
    def test_single_mode_converges_immediately(self):
        g = make_grid(8)
        _, rep = solve_picard(shear_mode(g), 1.0, 1.0, n_time=11)
        assert rep.converged and rep.iterates <= 2

    def test_taylor_green_first_iterate_is_exact(self):
        g = make_grid(8)
        traj, rep = solve_picard(taylor_green(g), 0.4, 1.0, n_time=11)
        assert rep.converged and rep.iterates <= 2
        expect = taylor_green(g).coeffs * math.exp(-0.8)
        assert np.abs(traj.coeffs[-1] - expect).max() <= 1e-12

    def test_half_nu_datum_contracts(self):
        g = make_grid(16)
        traj, rep = solve_picard(small(g, 3, 0.5), 1.0, 0.5, n_time=51)
        assert rep.converged
        assert all(r < 1 for r in rep.tail_ratios())
        assert all(d >= 0 for d in rep.diffs)
        assert rep.bound_excess <= 1e-3

    def test_large_datum_flagged_not_raised(self):
        g = make_grid(16)
        _, rep = solve_picard(small(g, 0, 20.0), 1.0, 2.0, n_time=41, max_iter=8)
        assert not rep.converged
        assert math.isnan(rep.bound_excess)

    def test_report_json(self):
        _, rep = solve_picard(small(make_grid(8), 1, 0.2), 1.0, 0.1, n_time=11)
        d = json.loads(json.dumps(rep.to_json()))
        assert list(d) == ["iterates", "diffs", "ratios", "converged"]
        assert d["iterates"] == len(d["diffs"]) == len(d["ratios"]) + 1

    def test_rejects_bad_horizon(self):
        with pytest.raises(ValueError):
            solve_picard(shear_mode(make_grid(8)), 1.0, 0.0)

    def test_quadrature_is_second_order(self):
        g = make_grid(16)
        u0 = small(g, 4, 0.6)
        ends = [solve_picard(u0, 1.0, 0.4, n_time=m, tol=1e-13)[0] for m in (11, 21, 41, 81)]
        ref = ends[-1].coeffs[-1]
        errs = [x_norm(SpectralVectorField(g, t.coeffs[-1] - ref), -1) for t in ends[:-1]]
        # errors against the finest run: ratio 4 between consecutive halvings, minus the reference's share
        assert 3.0 < errs[0] / errs[1] < 5.5

    def test_iterates_converge_to_same_trajectory_as_first_distance(self):
        g = make_grid(8)
        u0 = small(g, 6, 0.4)
        a, _ = solve_picard(u0, 1.0, 0.2, n_time=21)
        assert mixed_distance(a, duhamel_map(a, u0, 1.0), 1.0) < 1e-9


class TestCrossValidate:
    def test_shear(self):
        rep = cross_validate(shear_mode(make_grid(8), 0.6), PicardConfig(T=0.1, n_time=11))
        assert rep.max_rel_discrepancy <= 1e-10

    def test_zero(self):
        rep = cross_validate(SpectralVectorField.zeros(make_grid(8)), PicardConfig(T=0.1, n_time=11))
        assert rep.max_rel_discrepancy == 0.0

    @pytest.mark.parametrize("seed", [0, 1])
    def test_small_random(self, seed):
        rep = cross_validate(small(make_grid(16), seed, 0.7), PicardConfig(T=0.1))
        assert rep.picard.converged
        assert rep.max_rel_discrepancy <= 1e-4

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PicardConfig(n_time=1)
        with pytest.raises(ValueError):
            PicardConfig(nu=0)
