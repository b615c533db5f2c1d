"""Dual tensor equation of the St Venant-Kirchhoff material."""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.stats import special_ortho_group

from antiplane.errors import ConfigError, EigenFailure, SingularRoot
from antiplane.tensor3d import (
    LameParams,
    TensorRoot,
    as_sym3,
    classify_tensor_root,
    deformation_gradient_from_root,
    gap_3d,
    solve_tensor_dual,
    svk_conjugate,
    svk_conjugate_gradient,
    svk_energy,
    svk_stress,
    tensor_residual,
)

I3 = np.eye(3)


def _sym(rng, scale=1.0):
    a = scale * rng.standard_normal((3, 3))
    return 0.5 * (a + a.T)


def _residual_oracle(T, C, mu, lam):
    kappa = lam / (mu * (3 * lam + 2 * mu))
    return np.max(np.abs(T @ T + T @ T @ T / mu - kappa * np.trace(T) * T @ T - C))


class TestLame:
    def test_kappa(self):
        assert LameParams(1.0, 1.0).kappa == pytest.approx(1 / 5)
        assert LameParams(2.0, 0.0).kappa == 0.0 and not LameParams(2.0, 0.0).lam_positive

    @pytest.mark.parametrize("mu, lam", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1), (float("nan"), 1.0)])
    def test_invalid(self, mu, lam):
        with pytest.raises(ConfigError):
            LameParams(mu, lam)

    def test_as_sym3(self):
        with pytest.raises(ValueError, match="symmetric"):
            as_sym3([[1, 2, 0], [0, 1, 0], [0, 0, 1]])
        with pytest.raises(ValueError, match="3x3"):
            as_sym3(np.eye(2))


class TestEnergies:
    def test_energy_of_identity(self):
        assert svk_energy(I3, LameParams(1.0, 0.0)) == 3.0
        assert svk_energy(I3, LameParams(1.0, 2.0)) == pytest.approx(3.0 + 9.0)

    def test_conjugate_of_identity(self):
        assert svk_conjugate(I3, LameParams(1.0, 0.0)) == pytest.approx(0.75)

    def test_stress_is_energy_gradient(self):
        rng = np.random.default_rng(0)
        lame = LameParams(1.3, 0.7)
        E = _sym(rng)
        S = svk_stress(E, lame)
        h = 1e-6
        for i, j in itertools.combinations_with_replacement(range(3), 2):
            D = np.zeros((3, 3))
            D[i, j] = D[j, i] = h
            fd = (svk_energy(E + D, lame) - svk_energy(E - D, lame)) / (2 * h)
            assert np.sum(S * D) / h == pytest.approx(fd, rel=1e-8)

    def test_conjugate_gradient_by_finite_differences(self):
        rng = np.random.default_rng(1)
        lame = LameParams(0.8, 1.5)
        T = _sym(rng)
        G = svk_conjugate_gradient(T, lame)
        h = 1e-6
        for i, j in itertools.combinations_with_replacement(range(3), 2):
            D = np.zeros((3, 3))
            D[i, j] = D[j, i] = h
            fd = (svk_conjugate(T + D, lame) - svk_conjugate(T - D, lame)) / (2 * h)
            assert np.sum(G * D) / h == pytest.approx(fd, rel=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_fenchel_equality_and_inequality(self, seed):
        rng = np.random.default_rng(seed)
        lame = LameParams(rng.uniform(0.5, 2), rng.uniform(0, 2))
        T = _sym(rng)
        E = svk_conjugate_gradient(T, lame)
        np.testing.assert_allclose(svk_stress(E, lame), T, atol=1e-12)
        assert svk_energy(E, lame) + svk_conjugate(T, lame) == pytest.approx(np.sum(T * E), rel=1e-12)
        E2 = _sym(rng)
        assert svk_energy(E2, lame) + svk_conjugate(T, lame) >= np.sum(T * E2) - 1e-12


class TestSolve:
    def test_zero_stress(self):
        for lame in (LameParams(1.0, 0.0), LameParams(1.0, 2.0)):
            roots = solve_tensor_dual(np.zeros((3, 3)), lame)
            ts = [r.t for r in roots]
            assert any(np.allclose(t, 0.0, atol=1e-12) for t in ts)
            t_iso = -(3 * lame.lam + 2 * lame.mu) / 2
            assert any(np.allclose(t, t_iso, atol=1e-10) for t in ts)

    def test_identity_load(self):
        lame = LameParams(1.0, 0.0)
        t_star = brentq(lambda t: t * t + t**3 - 1.0, 0.1, 1.0, xtol=1e-15)
        assert t_star == pytest.approx(0.75488, abs=1e-5)
        pd = [r for r in solve_tensor_dual(I3, lame) if r.classification == "PositiveDefinite"]
        assert len(pd) == 1
        np.testing.assert_allclose(pd[0].T, t_star * I3, atol=1e-12)

    def test_decoupled_count_matches_scalar_cubics(self):
        # lam = 0: each eigenvalue solves t^2 + t^3/mu = c_i on its own
        mu = 1.0
        c = (0.05, 0.1, 2.0)
        per_axis = [sorted(r.real for r in np.roots([1 / mu, 1, 0, -ci]) if abs(r.imag) < 1e-12) for ci in c]
        expected = sorted(tuple(np.round(t, 9)) for t in itertools.product(*per_axis))
        roots = solve_tensor_dual(np.diag(c), LameParams(mu, 0.0))
        got = sorted(tuple(np.round(r.t, 9)) for r in roots)
        assert len(got) == len(expected) == 9
        np.testing.assert_allclose(got, expected, atol=1e-10)

    @pytest.mark.parametrize("seed", range(6))
    def test_rotated_loads(self, seed):
        rng = np.random.default_rng(seed)
        lame = LameParams(rng.uniform(0.5, 2.0), rng.uniform(0.0, 2.0))
        Q = special_ortho_group.rvs(3, random_state=seed)
        C = Q @ np.diag(rng.uniform(0.1, 3.0, 3)) @ Q.T
        roots = solve_tensor_dual(C, lame)
        assert 1 <= len(roots) <= 27
        assert sum(r.classification == "PositiveDefinite" for r in roots) == 1
        for r in roots:
            assert _residual_oracle(r.T, C, lame.mu, lame.lam) <= 1e-10 * max(1, np.max(np.abs(C)))
            assert r.residual == pytest.approx(tensor_residual(r.T, C, lame))
            # coaxial with C
            assert np.max(np.abs(r.T @ C - C @ r.T)) <= 1e-9

    def test_deformation_gradient_recovers_stretch(self):
        rng = np.random.default_rng(7)
        lame = LameParams(1.0, 0.5)
        tau = rng.standard_normal((3, 3))
        pd = [r for r in solve_tensor_dual(None, lame, tau=tau) if r.classification == "PositiveDefinite"]
        F = deformation_gradient_from_root(tau, pd[0].T)
        np.testing.assert_allclose(F.T @ F, 2 * svk_conjugate_gradient(pd[0].T, lame) + I3, atol=1e-9)
        np.testing.assert_allclose(F @ pd[0].T, tau, atol=1e-12)

    def test_not_psd(self):
        with pytest.raises(EigenFailure, match="semidefinite"):
            solve_tensor_dual(np.diag([1.0, -1.0, 1.0]), LameParams(1.0, 1.0))

    def test_bad_tau(self):
        with pytest.raises(EigenFailure):
            solve_tensor_dual(None, LameParams(1.0, 1.0), tau=np.ones((2, 3)))

    def test_to_json(self):
        r = solve_tensor_dual(I3, LameParams(1.0, 0.0))[0]
        assert isinstance(r, TensorRoot)
        assert set(r.to_json()) == {"T", "eigenvalues", "classification", "residual"}


class TestClassifyAndGap:
    @pytest.mark.parametrize(
        "diag, label",
        [
            ((1, 2, 3), "PositiveDefinite"),
            ((-1, -2, -3), "NegativeDefinite"),
            ((1, -1, 1), "Indefinite"),
            ((1, 0, 1), "Singular"),
        ],
    )
    def test_classify(self, diag, label):
        Q = special_ortho_group.rvs(3, random_state=3)
        assert classify_tensor_root(Q @ np.diag(diag) @ Q.T) == label

    def test_gap_examples(self):
        assert gap_3d(I3, -I3) == pytest.approx(-1.5)
        F = np.diag([2.0, 1.0, 1.0])
        assert gap_3d(F, I3) == pytest.approx(3.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_gap_non_negative_for_psd(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((3, 3))
        assert gap_3d(rng.standard_normal((3, 3)), A @ A.T) >= 0.0

    def test_isotropic_root_gives_scaled_identity(self):
        tau = 2.0 * I3
        T = 0.5 * I3
        np.testing.assert_allclose(deformation_gradient_from_root(tau, T), 4.0 * I3)

    def test_singular_root(self):
        with pytest.raises(SingularRoot):
            deformation_gradient_from_root(I3, np.diag([1.0, 0.0, 1.0]))
        with pytest.raises(SingularRoot):
            deformation_gradient_from_root(I3, np.zeros((3, 3)))
