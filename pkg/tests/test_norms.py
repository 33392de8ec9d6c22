import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critspace.norms import (
    check_interpolation,
    check_product_inequality,
    fourier_l1,
    hs_norm,
    l2_norm,
    norm_report,
    tree_sum,
    x_norm,
)
from critspace.spectral import (
    ScalarSpectralField,
    SpectralVectorField,
    from_modes,
    make_grid,
    random_divfree_field,
    random_scalar_field,
    scalar_from_modes,
)


def brute_force_product_x0(f: ScalarSpectralField, g: ScalarSpectralField) -> float:
    """Sum of |(f g)_xi| with the convolution evaluated mode pair by mode pair."""
    k = f.grid.wavenumbers
    fa = [(tuple(k[i] for i in idx), f.coeffs[idx]) for idx in zip(*np.nonzero(f.coeffs))]
    ga = [(tuple(k[i] for i in idx), g.coeffs[idx]) for idx in zip(*np.nonzero(g.coeffs))]
    acc = {}
    for (p, a), (q, b) in itertools.product(fa, ga):
        key = (p[0] + q[0], p[1] + q[1], p[2] + q[2])
        acc[key] = acc.get(key, 0) + a * b
    return float(sum(abs(v) for v in acc.values()))


@pytest.fixture
def unit_shell():
    return from_modes(make_grid(8), [((1, 0, 0), (0, 0.5, 0))])


class TestXNorm:
    def test_unit_shell(self, unit_shell):
        for s in (-1, 0, 1):
            assert x_norm(unit_shell, s) == pytest.approx(1.0, rel=1e-15)

    def test_shell_three(self):
        # |(2,2,1)| = 3, each member of the pair carries 0.15
        u = from_modes(make_grid(8), [((2, 2, 1), (0.15, -0.15 * 2 / 1, 0.15 * 2))])
        c = u.amplitudes()[2, 2, 1]
        u = u * (0.15 / c)
        assert x_norm(u, 0) == pytest.approx(0.3, rel=1e-14)
        assert x_norm(u, -1) == pytest.approx(0.1, rel=1e-14)
        assert x_norm(u, 1) == pytest.approx(0.9, rel=1e-14)

    def test_zero_field(self):
        z = SpectralVectorField.zeros(make_grid(8))
        assert [x_norm(z, s) for s in (-1, 0, 1)] == [0.0, 0.0, 0.0]

    def test_mean_mode_rejected_for_xm1(self):
        f = scalar_from_modes(make_grid(8), [((0, 0, 0), 1.0)])
        with pytest.raises(ValueError, match="mean mode present"):
            x_norm(f, -1)
        assert x_norm(f, 0) == 1.0
        assert x_norm(f, 1) == 0.0

    def test_bad_exponent(self, unit_shell):
        with pytest.raises(ValueError):
            x_norm(unit_shell, 2)


class TestL2Hs:
    def test_unit_shell(self, unit_shell):
        assert l2_norm(unit_shell) == pytest.approx(np.sqrt(0.5), rel=1e-15)
        assert hs_norm(unit_shell, 1) == pytest.approx(l2_norm(unit_shell), rel=1e-15)

    def test_zero(self):
        z = SpectralVectorField.zeros(make_grid(8))
        assert l2_norm(z) == 0.0 and hs_norm(z, 0.5) == 0.0

    def test_hs_excludes_mean(self):
        f = scalar_from_modes(make_grid(8), [((0, 0, 0), 3.0), ((0, 2, 0), 1.0)])
        assert hs_norm(f, -1) == pytest.approx(np.sqrt(2) / 2)
        assert hs_norm(f, 0) == pytest.approx(np.sqrt(2))
        assert l2_norm(f) == pytest.approx(np.sqrt(11))


class TestFourierL1:
    def test_matches_x0(self):
        u = random_divfree_field(make_grid(16), 4, k_max=5)
        assert fourier_l1(u) == x_norm(u, 0)

    def test_single_pair(self):
        u = from_modes(make_grid(8), [((0, 1, 1), (0.2, 0, 0))])
        assert fourier_l1(u) == pytest.approx(0.4)

    def test_zero(self):
        assert fourier_l1(SpectralVectorField.zeros(make_grid(8))) == 0.0


def test_report_json_keys():
    u = random_divfree_field(make_grid(16), 2, k_max=4)
    d = norm_report(u, s=0.5).to_json()
    assert list(d) == ["x_m1", "x_0", "x_1", "l2", "hs_s", "s"]
    assert d["hs_s"] == pytest.approx(hs_norm(u, 0.5), rel=1e-14)
    json.dumps(d)
    r = norm_report(u)
    assert r.x_0 <= np.sqrt(r.x_m1 * r.x_1) * (1 + 1e-12)


field_seeds = st.integers(0, 2**32 - 1)


ULP = np.finfo(float).eps


@settings(max_examples=25, deadline=None)
@given(seed=field_seeds, lam=st.floats(-50, 50).filter(lambda x: x == 0 or abs(x) > 1e-100))
def test_homogeneity(seed, lam):
    # each coefficient product and square root rounds once, so allow a few ulp
    u = random_divfree_field(make_grid(8), seed, slope=1.0, k_max=2)
    for s in (-1, 0, 1):
        base = x_norm(u, s)
        assert x_norm(u * lam, s) == pytest.approx(abs(lam) * base, rel=4 * ULP, abs=0)


@settings(max_examples=10, deadline=None)
@given(seed=field_seeds, e=st.integers(-20, 20), sign=st.sampled_from([-1.0, 1.0]))
def test_homogeneity_exact_for_powers_of_two(seed, e, sign):
    u = random_divfree_field(make_grid(8), seed, slope=1.0, k_max=2)
    lam = sign * 2.0**e
    for s in (-1, 0, 1):
        assert x_norm(u * lam, s) == abs(lam) * x_norm(u, s)


@settings(max_examples=25, deadline=None)
@given(seed=field_seeds, phase_seed=field_seeds)
def test_phase_invariance(seed, phase_seed):
    g = make_grid(8)
    u = random_divfree_field(g, seed, slope=1.0, k_max=2)
    theta = np.random.default_rng(phase_seed).uniform(-np.pi, np.pi, g.shape)
    i, j, k = g.neg_index
    theta = 0.5 * (theta - theta[i, j, k])  # odd: theta(-xi) = -theta(xi)
    v = SpectralVectorField(g, u.coeffs * np.exp(1j * theta))
    assert v.hermitian_defect() < 1e-15
    for s in (-1, 0, 1):
        assert x_norm(v, s) == pytest.approx(x_norm(u, s), rel=1e-14)
    assert l2_norm(v) == pytest.approx(l2_norm(u), rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(a=field_seeds, b=field_seeds)
def test_triangle_inequality(a, b):
    g = make_grid(8)
    u = random_divfree_field(g, a, k_max=2)
    v = random_divfree_field(g, b, slope=0.0, k_max=2)
    for s in (-1, 0, 1):
        assert x_norm(u + v, s) <= (x_norm(u, s) + x_norm(v, s)) * (1 + 1e-15)


def test_worker_count_does_not_change_bits():
    u = random_divfree_field(make_grid(32), 9, slope=1.0, k_max=10)
    vals = u.amplitudes() * make_grid(32).kmag
    assert tree_sum(vals, workers=1) == tree_sum(vals, workers=4) == tree_sum(vals, workers=7)
    for s in (-1, 0, 1):
        assert x_norm(u, s, workers=1) == x_norm(u, s, workers=3)


class TestProductInequality:
    def test_single_exponential_is_equality(self):
        g = make_grid(8)
        # cos(x1 + 2 x2) has two unit-modulus halves; use a single complex exponential pair
        f = scalar_from_modes(g, [((1, 0, 0), 1.0)])
        single = ScalarSpectralField(g, f.coeffs * (np.arange(8)[:, None, None] == 1))
        rep = check_product_inequality(single, single)
        assert rep.lhs == pytest.approx(1.0, rel=1e-12)
        assert rep.rhs == pytest.approx(1.0, rel=1e-12)
        assert rep.holds

    def test_zero(self):
        g = make_grid(8)
        z = ScalarSpectralField.zeros(g)
        f = random_scalar_field(g, 1, 2)
        rep = check_product_inequality(z, f)
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.holds

    @pytest.mark.parametrize("seed", range(5))
    def test_random_matches_brute_force(self, seed):
        g = make_grid(16)
        rng = np.random.default_rng(seed)
        f = random_scalar_field(g, None, 4, rng=rng)
        h = random_scalar_field(g, None, 3, rng=rng)
        rep = check_product_inequality(f, h)
        assert rep.holds
        assert rep.lhs == pytest.approx(brute_force_product_x0(f, h), rel=1e-12)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            check_product_inequality(random_scalar_field(make_grid(8), 0, 1), random_scalar_field(make_grid(16), 0, 1))


class TestInterpolation:
    def test_single_shell_equality(self):
        u = random_divfree_field(make_grid(16), 3, slope=0, k_max=3)
        shell = SpectralVectorField(u.grid, u.coeffs * (np.abs(u.grid.kmag - np.sqrt(5)) < 1e-12))
        rep = check_interpolation(shell)
        assert rep.equality and rep.holds
        assert rep.lhs == pytest.approx(rep.rhs, rel=1e-12)

    def test_two_shells(self):
        g = make_grid(8)
        u = from_modes(g, [((1, 0, 0), (0, 0.25, 0)), ((2, 2, 1), (0, 0.25 / 3, -0.5 / 3))])
        u = SpectralVectorField(g, u.coeffs)
        a = u.amplitudes()
        assert a[2, 2, 1] == pytest.approx(0.25 * np.sqrt(5) / 3)
        # rescale the |xi| = 3 pair to carry 0.25 per member
        scale = np.where(np.isclose(g.kmag, 3.0), 0.25 / a[2, 2, 1], 1.0)
        u = SpectralVectorField(g, u.coeffs * scale)
        rep = check_interpolation(u)
        assert rep.lhs == pytest.approx(1.0, rel=1e-14)
        assert rep.rhs == pytest.approx(np.sqrt((0.5 + 0.5 / 3) * (0.5 + 1.5)), rel=1e-14)
        assert rep.holds and not rep.equality

    def test_zero(self):
        rep = check_interpolation(SpectralVectorField.zeros(make_grid(8)))
        assert rep.lhs == 0.0 == rep.rhs and rep.holds
