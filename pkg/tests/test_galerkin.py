import numpy as np
import pytest
from hypothesis import given, strategies as st

from smcf_lab.config import ConfigError, explicit_dt_bound, parse_config
from smcf_lab.galerkin import (
    coercivity_gap, coercivity_tolerance, galerkin_dt_bound, galerkin_simulate, growth_bound_check, smooth,
    spectral_basis, spectral_project, variational_pairing_A,
)
from smcf_lab.grid import GridSpec, gradient, integrate, norm
from smcf_lab.noise import sample_increments
from smcf_lab.stepper import simulate_path

from conftest import trig_field, trig_fields


def inner(a, b, g):
    return float(integrate(a * b, g))


class TestBasis:
    @pytest.mark.parametrize("dim,res", [(1, 8), (1, 16), (2, 8), (3, 8)])
    def test_orthonormal_and_complete(self, dim, res):
        g = GridSpec(dim, res)
        b = spectral_basis(g)
        assert len(b) == g.size
        E = b.synthesis(np.eye(len(b)))
        gram = np.tensordot(E, E, axes=(tuple(range(1, dim + 1)),) * 2) * g.spacing**dim
        np.testing.assert_allclose(gram, np.eye(len(b)), atol=1e-12)

    @pytest.mark.parametrize("dim,res", [(1, 32), (2, 16)])
    def test_ordering(self, dim, res):
        b = spectral_basis(GridSpec(dim, res))
        assert b.lam[0] == 1.0 and b.kind[0] == 0 and not b.k[0].any()
        assert np.all(np.diff(b.lam) >= 0) and np.all(b.lam >= 1)
        np.testing.assert_allclose(b.lam, 1 + 4 * np.pi**2 * np.sum(b.k**2, axis=1))

    def test_first_modes_1d(self):
        g = GridSpec(1, 16)
        b = spectral_basis(g)
        x = g.coords[0]
        s2 = np.sqrt(2)
        expected = [np.ones(16), s2 * np.cos(2 * np.pi * x), s2 * np.sin(2 * np.pi * x), s2 * np.cos(4 * np.pi * x)]
        for j, e in enumerate(expected):
            coef = np.zeros(4)
            coef[j] = 1
            np.testing.assert_allclose(b.synthesis(coef), e, atol=1e-13)

    def test_nyquist_mode_is_single(self):
        b = spectral_basis(GridSpec(1, 8))
        assert list(b.k[-1]) == [4] and b.kind[-1] == 1 and b.scale[-1] == 1.0

    @given(case=trig_fields())
    def test_analysis_synthesis_round_trip(self, case):
        g, u = case
        b = spectral_basis(g)
        np.testing.assert_allclose(b.synthesis(b.analysis(u)), u, atol=1e-12 * (1 + np.abs(u).max()))

    def test_analysis_is_inner_product(self, rng):
        g = GridSpec(2, 8)
        b = spectral_basis(g)
        u = rng.normal(size=g.shape)
        coef = b.analysis(u)
        for j in (0, 1, 5, len(b) - 1):
            e = np.zeros(len(b))
            e[j] = 1
            assert coef[j] == pytest.approx(inner(u, b.synthesis(e), g), abs=1e-12)

    def test_discrete_eigenvalues(self):
        g = GridSpec(1, 32)
        b = spectral_basis(g)
        from smcf_lab.grid import laplacian
        for j in (1, 2, 7, 20):
            e = np.zeros(j + 1)
            e[j] = 1
            f = b.synthesis(e)
            np.testing.assert_allclose(-laplacian(f, g), b.discrete_eigenvalues()[j] * f, atol=1e-9)


class TestProjection:
    def test_all_modes_identity(self, rng):
        g = GridSpec(2, 16)
        u = rng.normal(size=g.shape)
        np.testing.assert_allclose(spectral_project(u, g, g.size), u, atol=1e-12)

    def test_mode_separation(self):
        g = GridSpec(1, 64)
        x = g.coords[0]
        u = np.sin(2 * np.pi * x) + np.sin(6 * np.pi * x)
        np.testing.assert_allclose(spectral_project(u, g, 3), np.sin(2 * np.pi * x), atol=1e-12)

    def test_contraction_idempotent_self_adjoint(self):
        rng = np.random.default_rng(8)
        for i in range(50):
            g = GridSpec(1 + i % 2, 32 if i % 2 == 0 else 16)
            u, w = trig_field(g, rng, modes=5), trig_field(g, rng, modes=5)
            K = int(rng.integers(1, g.size + 1))
            pu = spectral_project(u, g, K)
            assert norm(pu, g, "L2") <= norm(u, g, "L2") + 1e-12
            np.testing.assert_allclose(spectral_project(pu, g, K), pu, atol=1e-12)
            assert inner(pu, w, g) == pytest.approx(inner(u, spectral_project(w, g, K), g), abs=1e-12)

    def test_matches_synthesis_of_truncated_coefficients(self, rng):
        g = GridSpec(2, 8)
        b = spectral_basis(g)
        u = rng.normal(size=g.shape)
        for K in (1, 2, 5, 13, 40):
            np.testing.assert_allclose(spectral_project(u, g, K), b.synthesis(b.analysis(u, K)), atol=1e-12)

    def test_bad_K(self):
        with pytest.raises(ValueError):
            spectral_project(np.zeros(8), GridSpec(1, 8), 0)


class TestSmoothing:
    def test_zero_is_identity(self, rng):
        g = GridSpec(1, 32)
        u = rng.normal(size=g.shape)
        np.testing.assert_allclose(smooth(u, g, 0.0), u, atol=1e-12)

    def test_single_mode(self):
        g = GridSpec(1, 64)
        s = np.sin(2 * np.pi * g.coords[0])
        for e in (1e-3, 0.05):
            np.testing.assert_allclose(smooth(s, g, e), np.exp(-e * (1 + 4 * np.pi**2)) * s, atol=1e-13)

    def test_strong_convergence(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            g = GridSpec(2, 16)
            u = trig_field(g, rng, modes=4)
            errs = [norm(smooth(u, g, e) - u, g, "L2") for e in (0.1, 0.01, 0.001)]
            assert errs[0] > errs[1] > errs[2] > 0

    @given(case=trig_fields(), a=st.floats(0, 0.05), b=st.floats(0, 0.05))
    def test_semigroup(self, case, a, b):
        g, u = case
        np.testing.assert_allclose(smooth(smooth(u, g, a), g, b), smooth(u, g, a + b), atol=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            smooth(np.zeros(8), GridSpec(1, 8), -1)


class TestPairing:
    def test_constant_w(self, rng):
        g = GridSpec(1, 32)
        assert variational_pairing_A(trig_field(g, rng), np.full(32, 3.0), g, 0.4) == 0

    def test_linear_part_symmetric(self, rng):
        g = GridSpec(2, 16)
        u, w = trig_field(g, rng), trig_field(g, rng)
        a = variational_pairing_A(u, w, g, 0.7, correction=False)
        b = variational_pairing_A(w, u, g, 0.7, correction=False)
        assert a == pytest.approx(b, rel=1e-12)

    def test_brute_force_value(self):
        g = GridSpec(1, 128)
        N, h = g.res, g.spacing
        u = 0.3 * np.sin(2 * np.pi * g.coords[0])
        total = 0.0
        for i in range(N):
            lap = (u[(i + 1) % N] - 2 * u[i] + u[i - 1]) / h**2
            p = (u[(i + 1) % N] - u[i - 1]) / (2 * h)
            v = p / np.sqrt(1 + p * p)
            total += h * (-2 * lap * lap + 0.5 * v * lap * v * lap)
        assert variational_pairing_A(u, u, g, 1.0) == pytest.approx(total, rel=1e-10)


class TestCoercivity:
    def test_constant_exactly_zero(self):
        g = GridSpec(2, 8)
        assert coercivity_gap(np.full(g.shape, 1.5), g, 1.0) == 0.0

    def test_sine_example_and_order(self):
        gaps, tols = [], []
        for N in (128, 256):
            g = GridSpec(1, N)
            u = 0.2 * np.sin(2 * np.pi * g.coords[0])
            gaps.append(coercivity_gap(u, g, 1.0))
            tols.append(coercivity_tolerance(u, g))
        assert gaps[0] <= tols[0] and gaps[1] <= tols[1]
        assert max(gaps[1], 0) <= max(gaps[0], 0) / 3.5 or gaps[1] <= 0
        assert 3.5 <= tols[0] / tols[1] <= 4.5

    @pytest.mark.parametrize("eps", [0.0, 0.5, 1.0])
    def test_random_fields(self, eps):
        rng = np.random.default_rng(11)
        for i in range(20):
            g = GridSpec(1 + i % 2, 64 if i % 2 == 0 else 32)
            u = trig_field(g, rng, modes=4)
            u *= rng.uniform(0.1, 2.0) / norm(gradient(u, g), g, "Linf", 1)
            assert coercivity_gap(u, g, eps) <= coercivity_tolerance(u, g)

    def test_growth_bounds(self):
        rng = np.random.default_rng(4)
        assert growth_bound_check(np.zeros(8), GridSpec(1, 8), 0.3) == {
            "A_ratio": 0.0, "B_ratio": 0.0, "bound": 2 * 1.3**2 + 1, "ok": True}
        for i in range(30):
            g = GridSpec(1 + i % 2, 32 if i % 2 else 64)
            eps = [0.0, 0.5, 1.0][i % 3]
            r = growth_bound_check(trig_field(g, rng, amp=rng.uniform(0.05, 3)), g, eps)
            assert r["ok"] and r["B_ratio"] <= 1.0
            assert r["A_ratio"] <= 2 * (1 + eps) ** 2 + 0.5


class TestGalerkinSimulate:
    def cfg(self, **kw):
        base = {"dim": 1, "res": 32, "scheme": "ExplicitEM", "dt": 1e-4, "T": 0.01, "baseSeed": 42,
                "initial": {"sin": [0.5]}}
        base.update(kw)
        return parse_config(base)

    def test_dt_bound_matches_nodal(self):
        g = GridSpec(1, 32)
        assert galerkin_dt_bound(g, g.size, 0.0) == pytest.approx(explicit_dt_bound(1, 32, 0.0))
        assert galerkin_dt_bound(g, 1, 0.0) == np.inf

    def test_cfl_rejected(self):
        cfg = self.cfg().with_(dt=1e-3, horizon=0.01)
        with pytest.raises(ConfigError, match="Galerkin stability bound"):
            galerkin_simulate(cfg, 32, 0)

    def test_constant_mode_is_brownian(self):
        cfg = self.cfg()
        r = galerkin_simulate(cfg, 1, 3)
        W = sample_increments(cfg.base_seed, 3, cfg.steps, cfg.dt).W[-1]
        np.testing.assert_allclose(r.u_final, W, atol=1e-14)

    def test_all_modes_match_nodal(self):
        cfg = self.cfg()
        a = galerkin_simulate(cfg, cfg.grid.size, 0)
        b = simulate_path(cfg, 0)
        assert np.max(np.abs(a.u_final - b.u_final)) <= 1e-8
        np.testing.assert_allclose(a.trace["dirichlet"], b.trace["dirichlet"], rtol=1e-8)

    def test_truncation_sweep(self):
        cfg = self.cfg()
        full = galerkin_simulate(cfg, cfg.grid.size, 0).u_final
        d = [norm(galerkin_simulate(cfg, K, 0).u_final - full, cfg.grid, "L2") for K in (3, 9, 17)]
        assert d[0] > d[1] > d[2]
