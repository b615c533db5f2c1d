"""Pointwise dual equations: QuadExp, the p = 2 cubic, general power laws and fields."""

from __future__ import annotations

import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import bisect

from antiplane.dual_solver import (
    BOUNDARY_ETA,
    TRIPLE,
    UNIQUE,
    ZERO_STRESS,
    DualRootSet,
    Root,
    critical_zeta,
    cubic_closed_form,
    dual_residual,
    multiplicity_criterion,
    solve_cubic_p2,
    solve_dual,
    solve_field,
    solve_powerlaw,
    solve_quadexp,
)
from antiplane.errors import DegenerateInput, NodeSolveError, NoRealRoot, UnexpectedRoot
from antiplane.fields import Grid2, VectorField2, admissible_stress, side_traction
from antiplane.materials import PowerLaw, QuadExp
from antiplane.oracle import dense_root_scan

E = math.e


def _cubic_exact(c, alpha, t, z):
    z = Fraction(z)
    return float(4 * Fraction(c) * z**3 + 4 * Fraction(alpha) * z * z - Fraction(t))


def _numpy_cubic(c, alpha, t):
    r = np.roots([4 * c, 4 * alpha, 0.0, -t])
    return np.sort(r[np.abs(r.imag) < 1e-9].real)[::-1]


class TestQuadExp:
    def test_zero_stress(self):
        assert solve_quadexp(1.0, 0.5, 0.0) == 1.5

    def test_forward_inverse(self):
        z = 1 + 0.5 * E
        t = 2 * z * z  # log((z - mu)/nu) = 1
        assert t == pytest.approx(11.131092, abs=1e-6)
        assert solve_quadexp(1.0, 0.5, t) == pytest.approx(z, rel=1e-14)
        assert solve_quadexp(1.0, 0.5, t) == pytest.approx(2.359141, abs=1e-6)

    def test_against_bisection(self):
        f = lambda z: 2 * z * z * math.log((z - 1.0) / 0.5) - 1.0  # noqa: E731
        ref = bisect(f, 1.5, 3.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        assert abs(solve_quadexp(1.0, 0.5, 1.0) - ref) <= 1e-12

    @pytest.mark.parametrize("t", [1e-12, 1e-3, 0.7, 5.0, 1e3, 1e8])
    def test_residual(self, t):
        m = QuadExp(1.0, 0.5)
        rs = solve_dual(m, t)
        assert len(rs) == 1 and rs.case == UNIQUE
        assert abs(dual_residual(m, rs[0].zeta, t)) <= 1e-12 * max(1.0, t) + 1e-15 * rs[0].zeta**2
        assert rs[0].zeta >= 1.5

    def test_monotone_in_stress(self):
        ts = np.linspace(0.0, 20.0, 200)
        zs = [solve_quadexp(2.0, 0.3, t) for t in ts]
        assert np.all(np.diff(zs) > 0)
        assert zs[0] == 2.3

    def test_matches_dense_scan(self):
        for t in (0.3, 4.0, 50.0):
            (ref,) = dense_root_scan("quadexp", {"mu": 1.0, "nu": 0.5}, t)
            assert solve_quadexp(1.0, 0.5, t) == pytest.approx(ref, rel=1e-12)

    def test_bad_input(self):
        with pytest.raises(DegenerateInput):
            solve_quadexp(1.0, 0.5, -1.0)
        with pytest.raises(DegenerateInput):
            solve_quadexp(0.0, 0.5, 1.0)


class TestCubic:
    C, ALPHA = 8.0, 4.0

    def test_zero_stress(self):
        rs = solve_cubic_p2(self.C, self.ALPHA, 0.0)
        assert rs.case == ZERO_STRESS
        assert list(rs.zetas) == [0.0, -0.5]
        assert [r.multiplicity for r in rs.roots] == [2, 1]

    def test_three_roots(self):
        rs = solve_cubic_p2(self.C, self.ALPHA, 0.25)
        assert rs.case == TRIPLE
        np.testing.assert_allclose(rs.zetas, [0.112, -0.149, -0.463], atol=1e-3)
        np.testing.assert_allclose(rs.zetas, _numpy_cubic(self.C, self.ALPHA, 0.25), atol=1e-10)
        # Vieta: sum of roots of 32 z^3 + 16 z^2 - 0.25
        assert rs.zetas.sum() == pytest.approx(-self.ALPHA / self.C, abs=1e-14)
        assert np.prod(rs.zetas) == pytest.approx(0.25 / 32, rel=1e-12)

    def test_three_roots_dense_scan(self):
        ref = dense_root_scan("cubic", {"c": self.C, "alpha": self.ALPHA}, 0.25)
        np.testing.assert_allclose(solve_cubic_p2(self.C, self.ALPHA, 0.25).zetas, ref, atol=1e-10)

    def test_unique_root(self):
        rs = solve_cubic_p2(self.C, self.ALPHA, 1.0)
        assert rs.case == UNIQUE and len(rs) == 1
        assert rs[0].zeta == pytest.approx(0.210, abs=1e-3)
        assert rs[0].zeta > 0

    def test_eta(self):
        assert multiplicity_criterion(self.C, self.ALPHA) == pytest.approx(16 / 27, rel=1e-15)

    def test_double_root_at_eta(self):
        eta = multiplicity_criterion(self.C, self.ALPHA)
        rs = solve_cubic_p2(self.C, self.ALPHA, eta)
        zc = critical_zeta(self.C, self.ALPHA)
        assert rs.case == BOUNDARY_ETA
        assert zc == pytest.approx(-1 / 3)
        assert any(r.multiplicity == 2 and r.zeta == pytest.approx(zc, abs=1e-15) for r in rs.roots)
        # h'(zeta_c) = 0 and the discriminant of 4c z^3 + 4 alpha z^2 - eta vanishes
        assert 12 * self.C * zc**2 + 8 * self.ALPHA * zc == pytest.approx(0.0, abs=1e-14)
        a, b, d = 4 * self.C, 4 * self.ALPHA, -eta
        disc = -4 * b**3 * d - 27 * a * a * d * d
        assert abs(disc) <= 1e-12 * abs(4 * b**3 * d)

    @pytest.mark.parametrize("alpha", [0.0, -1.0, -7.5])
    def test_nonpositive_alpha_unique(self, alpha):
        assert multiplicity_criterion(self.C, alpha) <= 0
        for t in (1e-6, 0.3, 2.0, 40.0):
            rs = solve_cubic_p2(self.C, alpha, t)
            assert len(rs) == 1 and rs[0].zeta > 0

    def test_bad_c(self):
        with pytest.raises(DegenerateInput):
            solve_cubic_p2(0.0, 1.0, 0.5)
        with pytest.raises(DegenerateInput):
            multiplicity_criterion(-1.0, 1.0)

    def test_closed_form_three_roots(self):
        cf = cubic_closed_form(self.C, self.ALPHA, 0.25)
        assert np.max(np.abs(cf.imag)) <= 1e-12
        np.testing.assert_allclose(np.sort(cf.real)[::-1], solve_cubic_p2(self.C, self.ALPHA, 0.25).zetas, atol=1e-12)

    def test_closed_form_one_root(self):
        cf = cubic_closed_form(self.C, self.ALPHA, 1.0)
        assert abs(cf[0].imag) <= 1e-12 and abs(cf[1].imag) > 1e-3
        assert cf[0].real == pytest.approx(solve_cubic_p2(self.C, self.ALPHA, 1.0)[0].zeta, abs=1e-12)

    def test_root_continuity(self):
        eta = multiplicity_criterion(self.C, self.ALPHA)
        for lo, hi in ((1e-4, eta * (1 - 1e-6)), (eta * (1 + 1e-6), 1.5)):
            ts = np.linspace(lo, hi, 400)
            Z = np.array([solve_cubic_p2(self.C, self.ALPHA, t).zetas for t in ts])
            dt = ts[1] - ts[0]
            slope = np.abs(12 * self.C * Z**2 + 8 * self.ALPHA * Z)
            bound = 10 * dt / np.minimum(slope[:-1], slope[1:])
            assert np.all(np.abs(np.diff(Z, axis=0)) <= bound)


@settings(max_examples=150, deadline=None)
@given(c=st.floats(0.5, 20.0), alpha=st.floats(-10.0, 10.0), t=st.floats(0.0, 5.0))
def test_cubic_roots_property(c, alpha, t):
    rs = solve_cubic_p2(c, alpha, t)
    eta = multiplicity_criterion(c, alpha)
    for r in rs.roots:
        assert abs(_cubic_exact(c, alpha, t, r.zeta)) <= 1e-11 * max(1.0, t)
    if t > 0 and alpha > 0 and abs(t - eta) > 1e-9 * max(1, eta):
        expected = 3 if t < eta else 1
        assert len(rs) == expected
        z = rs.zetas
        if expected == 3:
            assert z[0] >= 0 >= z[1] >= z[2]
        else:
            assert z[0] > 0
    if alpha <= 0 and t > 0:
        assert len(rs) == 1 and rs[0].zeta > 0
    # companion-matrix eigenvalues cannot tell a tiny complex pair from a real one
    ref = _numpy_cubic(c, alpha, t)
    if t >= 1e-8 and abs(t - eta) > 1e-6 * max(1, abs(eta)):
        assert len(ref) == len(rs)
        np.testing.assert_allclose(rs.zetas, ref, atol=1e-9 * max(1, abs(alpha) / c))


class TestPowerLaw:
    def test_minimal_surface(self):
        m = PowerLaw(1.0, 0.5, 0.5)
        rs = solve_dual(m, 0.75)
        np.testing.assert_allclose(rs.zetas, [0.25, -0.25], rtol=1e-15)
        # the negative root does not map back through V'
        assert rs[0].primal_consistent and not rs[1].primal_consistent

    def test_minimal_surface_no_root(self):
        with pytest.raises(NoRealRoot):
            solve_dual(PowerLaw(1.0, 0.5, 0.5), 1.5)

    def test_minimal_surface_boundary(self):
        rs = solve_dual(PowerLaw(1.0, 0.5, 0.5), 1.0)
        assert list(rs.zetas) == [0.0] and rs.case == BOUNDARY_ETA

    def test_p1_constant(self):
        rs = solve_dual(PowerLaw(1.4, 0.5, 1.0), 3.0)
        assert list(rs.zetas) == [0.7]

    @pytest.mark.parametrize("seed", range(6))
    def test_p3_matches_scan_oracle(self, seed):
        rng = np.random.default_rng(seed)
        mu, b = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
        eps = 3.0 / b + rng.uniform(0.1, 2.0)  # alpha > 0
        m = PowerLaw(mu, b, 3.0, eps)
        assert m.alpha > 0
        t = rng.uniform(0.01, 0.5)
        rs = solve_dual(m, t)
        ref = dense_root_scan("power", {"c": m.c, "alpha": m.alpha, "p": 3.0}, t)
        assert len(rs) == len(ref) == 1
        np.testing.assert_allclose(rs.zetas, ref, atol=1e-10)
        mp.mp.dps = 50
        z = mp.findroot(lambda z: 4 * z * z * (mp.mpf(m.c) * mp.sqrt(z) + mp.mpf(m.alpha)) - mp.mpf(t), rs[0].zeta)
        assert rs[0].zeta == pytest.approx(float(z), rel=1e-13)

    @pytest.mark.parametrize("p, eps, t", [(1.5, 0.0, 0.3), (1.5, 0.0, 5.0), (4 / 3, 0.2, 0.1), (2.5, 4.0, 0.05)])
    def test_other_exponents_match_scan(self, p, eps, t):
        m = PowerLaw(1.0, 0.8, p, eps)
        rs = solve_dual(m, t)
        ref = dense_root_scan("power", {"c": m.c, "alpha": m.alpha, "p": p}, t)
        assert len(rs) == len(ref)
        np.testing.assert_allclose(rs.zetas, ref, atol=1e-10 * max(1.0, float(np.max(np.abs(ref)))))
        for r in rs.roots:
            assert r.residual <= 1e-11 * max(1.0, t)

    def test_below_half_reports_roots(self):
        # the scan finds genuine roots for p < 1/2; they are raised, not returned
        m = PowerLaw(1.0, 0.5, 0.25)
        with pytest.raises(UnexpectedRoot) as info:
            solve_dual(m, 0.1)
        roots = info.value.roots
        assert roots
        ref = dense_root_scan("power", {"c": m.c, "alpha": m.alpha, "p": 0.25}, 0.1)
        np.testing.assert_allclose(sorted(roots, reverse=True), ref, rtol=1e-9)

    def test_below_half_is_no_real_root(self):
        # callers that only care about existence can catch NoRealRoot
        assert issubclass(UnexpectedRoot, NoRealRoot)

    def test_negative_stress_rejected(self):
        with pytest.raises(DegenerateInput):
            solve_powerlaw(PowerLaw(1.0, 0.5, 3.0), -0.1)


class TestRootSet:
    def test_order_enforced(self):
        with pytest.raises(ValueError):
            DualRootSet((Root(-1.0, 0.0, "negative"), Root(1.0, 0.0, "positive")), 1.0, "Multiple")

    def test_positive(self):
        rs = solve_cubic_p2(8.0, 4.0, 0.25)
        assert rs.positive().zeta == rs[0].zeta
        neg = DualRootSet((Root(-1.0, 0.0, "negative"),), 1.0, UNIQUE)
        with pytest.raises(NoRealRoot):
            neg.positive()

    def test_json(self):
        doc = solve_cubic_p2(8.0, 4.0, 0.25).to_json()
        assert doc["case"] == TRIPLE and len(doc["roots"]) == 3
        assert set(doc["roots"][0]) == {"zeta", "residual", "sign", "multiplicity", "primal_consistent"}


class TestSolveField:
    def test_constant_field(self):
        g = Grid2.rectangle(6, 6)
        tau = VectorField2.constant(g, (0.3, 0.4))
        fr = solve_field(PowerLaw(1.0, 0.5, 2.0, 8.0), tau)
        sets = list(fr.sets.values())
        assert all(s is sets[0] for s in sets)
        assert np.all(fr.n_roots()[g.active] == 3)

    def test_counts_follow_eta(self):
        g = Grid2.rectangle(16, 16, dirichlet="left")
        tau, _ = admissible_stress(g, side_traction(right=lambda x, y: 0.5 + 0.6 * y))
        m = PowerLaw(1.0, 0.5, 2.0, 8.0)
        fr = solve_field(m, tau)
        tsq = np.sum(tau.values**2, axis=-1)
        expected = np.where(tsq < 16 / 27, 3, 1)
        expected[tsq == 0] = 2
        np.testing.assert_array_equal(fr.n_roots()[g.active], expected[g.active])
        assert (expected[g.active] == 3).any() and (expected[g.active] == 1).any()

    def test_zero_field(self):
        g = Grid2.rectangle(4, 4)
        fr = solve_field(PowerLaw(1.0, 0.5, 2.0, 8.0), VectorField2.constant(g, (0.0, 0.0)))
        assert set(fr.cases()[g.active]) == {ZERO_STRESS}

    def test_node_errors_aggregated(self):
        g = Grid2.rectangle(4, 4, dirichlet="left")
        tau = VectorField2.from_function(g, lambda x, y: (1.5 * x, 0 * y))
        with pytest.raises(NodeSolveError) as info:
            solve_field(PowerLaw(1.0, 0.5, 0.5), tau)
        bad = info.value.failures
        # |tau|^2 = 2.25 x^2 > 1 exactly where x > 2/3
        assert {round(x, 6) for x, _, _ in bad} == {0.75, 1.0}
        assert all(isinstance(err, NoRealRoot) for _, _, err in bad)

    def test_threads_deterministic(self):
        g = Grid2.rectangle(20, 20, dirichlet="left")
        tau, _ = admissible_stress(g, side_traction(right=lambda x, y: 0.2 + y))
        m = PowerLaw(1.0, 0.5, 2.0, 8.0)
        a, b = solve_field(m, tau), solve_field(m, tau, threads=4)
        assert a.to_json() == b.to_json()

    def test_branch_undefined(self):
        g = Grid2.rectangle(4, 4)
        fr = solve_field(PowerLaw(1.0, 0.5, 2.0, 8.0), VectorField2.constant(g, (1.0, 0.0)))
        fr.branch(0)
        with pytest.raises(Exception, match="branch 1"):
            fr.branch(1)
