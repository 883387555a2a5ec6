import numpy as np
import pytest
from hypothesis import given, strategies as st

from smcf_lab.config import parse_config
from smcf_lab.geometry import area_element, ito_drift
from smcf_lab.grid import GridSpec, divergence, gradient, laplacian, norm, spatial_mean
from smcf_lab.noise import sample_increments
from smcf_lab.stepper import (
    PathState, SchemeKind, simulate_block, simulate_path, step, step_explicit_em, step_semi_implicit,
    step_stratonovich_heun,
)

from conftest import trig_field

STEPPERS = [step_explicit_em, step_semi_implicit, step_stratonovich_heun]
G1 = GridSpec(1, 64)
G2 = GridSpec(2, 16)


def small_config(**kw):
    force = kw.pop("force", False)
    base = {"dim": 1, "res": 32, "dt": 1e-4, "T": 0.01, "M": 4, "baseSeed": 3,
            "initial": {"sin": [0.5]}}
    base.update(kw)
    return parse_config(base, force=force)


@pytest.mark.parametrize("stepper", STEPPERS)
@pytest.mark.parametrize("grid", [G1, G2])
@given(c=st.floats(-5, 5), dW=st.floats(-0.3, 0.3), eps=st.floats(0, 1))
def test_constant_is_shifted_by_noise(stepper, grid, c, dW, eps):
    u = np.full(grid.shape, c)
    out = stepper(u, grid, eps, 1e-5, dW)
    np.testing.assert_allclose(out, c + dW, rtol=0, atol=1e-14 * (1 + abs(c)))
    assert np.ptp(out) <= 1e-14 * (1 + abs(c))


@pytest.mark.parametrize("scheme", list(SchemeKind))
def test_zero_datum_tracks_brownian_path_exactly(scheme):
    cfg = small_config(scheme=scheme.value, dt=5e-5, T=0.005, initial={"sin": []})
    noise = sample_increments(cfg.base_seed, 0, cfg.steps, cfg.dt)
    u = np.zeros(cfg.grid.shape)
    for n in range(cfg.steps):
        u = step(scheme, PathState(u, n, cfg.dt), 0.0, cfg.dt, noise.increments[n]).u
        assert np.all(u == u.flat[0])
    assert u.flat[0] == pytest.approx(noise.W[-1], abs=1e-14)


@pytest.mark.parametrize("stepper", STEPPERS)
def test_shift_equivariance(stepper, rng):
    u = trig_field(G2, rng, amp=0.4)
    dt = 0.2 * G2.spacing**2
    for c in (0.7, -3.0, 100.0):
        a = stepper(u, G2, 0.3, dt, 0.05)
        b = stepper(u + c, G2, 0.3, dt, 0.05)
        assert np.max(np.abs(b - c - a)) <= 1e-12 * (1 + abs(c))


def test_batch_matches_single(rng):
    us = np.stack([trig_field(G1, rng) for _ in range(3)])
    dWs = np.array([0.01, -0.02, 0.0])
    for stepper in STEPPERS:
        batch = stepper(us, G1, 0.1, 1e-5, dWs)
        for i in range(3):
            np.testing.assert_array_equal(batch[i], stepper(us[i], G1, 0.1, 1e-5, dWs[i]))


@pytest.mark.parametrize("eps", [0.0, 0.5])
@pytest.mark.parametrize("dt", [1e-4, 1e-3, 1e-2])
def test_semi_implicit_linear_mode_amplification(eps, dt):
    g = GridSpec(1, 128)
    h = g.spacing
    amp = 1e-7
    u = amp * np.sin(2 * np.pi * g.coords[0])
    lam1 = (2 / h**2) * (1 - np.cos(2 * np.pi * h))
    out = step_semi_implicit(u, g, eps, dt, 0.0)
    ratio = (out @ u) / (u @ u)
    assert ratio == pytest.approx(1 / (1 + dt * (1 + eps) * lam1), abs=1e-8)
    np.testing.assert_allclose(out, ratio * u, atol=1e-8 * amp)


def test_semi_implicit_vs_explicit_one_step_order(rng):
    g = GridSpec(1, 64)
    u = trig_field(g, rng, modes=2, amp=0.3)
    bound = 0.5 * g.spacing**2 / 2
    dts = bound / 2.0 ** np.arange(5)
    diffs = [norm(step_semi_implicit(u, g, 0.0, dt, 0.0) - step_explicit_em(u, g, 0.0, dt, 0.0), g, "L2")
             for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(diffs), 1)[0]
    assert 1.9 <= slope <= 2.1


def test_heun_deterministic_linear_decay():
    g = GridSpec(1, 64)
    x = g.coords[0]
    s = np.sin(2 * np.pi * x)
    # symbol of div(grad .) on this mode, read off the operator itself
    mu = -(divergence(gradient(s, g), g) @ s) / (s @ s)
    amp = 1e-7
    for dt in (1e-5, 2e-5, 4e-5):
        z = dt * mu
        out = step_stratonovich_heun(amp * s, g, 0.0, dt, 0.0)
        r = (out @ s) / (amp * (s @ s))
        assert r == pytest.approx(1 - z + z * z / 2, abs=1e-9)
        assert abs(r - np.exp(-z)) <= z**3 / 6 * 1.01 + 1e-9


@pytest.mark.parametrize("dim,res", [(1, 64), (2, 16)])
def test_heun_reduces_dirichlet_energy_without_noise(dim, res, rng):
    g = GridSpec(dim, res)
    u = trig_field(g, rng, modes=2, amp=0.01)
    out = step_stratonovich_heun(u, g, 0.0, 0.1 * g.spacing**2, 0.0)
    assert norm(gradient(out, g), g, "L2", 1) < norm(gradient(u, g), g, "L2", 1)


def test_explicit_increment_is_linear_in_dt_and_dW(rng):
    u = trig_field(G1, rng)
    d1 = step_explicit_em(u, G1, 0.2, 1e-6, 1e-3) - u
    d2 = step_explicit_em(u, G1, 0.2, 2e-6, 2e-3) - u
    np.testing.assert_allclose(d2, 2 * d1, rtol=0, atol=1e-12)


def test_mean_changes_only_through_rhs(rng):
    g = G2
    u = trig_field(g, rng, amp=0.5)
    dt, dW = 0.2 * g.spacing**2, 0.03
    q = area_element(gradient(u, g))
    expected = dt * spatial_mean(ito_drift(u, g, 0.4), g) + dW * spatial_mean(q, g)
    got = spatial_mean(step_explicit_em(u, g, 0.4, dt, dW), g) - spatial_mean(u, g)
    assert got == pytest.approx(expected, abs=1e-13)
    # the implicit Laplacian has zero mean, so only the explicit part moves the mean
    semi = spatial_mean(step_semi_implicit(u, g, 0.4, dt, dW), g) - spatial_mean(u, g)
    correction = spatial_mean(ito_drift(u, g, 0.4) - 1.4 * laplacian(u, g), g)
    assert semi == pytest.approx(dt * correction + dW * spatial_mean(q, g), abs=1e-13)


def test_without_correction_explicit_is_heat_plus_noise(rng):
    u = trig_field(G1, rng)
    q = area_element(gradient(u, G1))
    out = step_explicit_em(u, G1, 0.0, 1e-6, 0.01, correction=False)
    np.testing.assert_allclose(out, u + 1e-6 * laplacian(u, G1) + 0.01 * q, atol=1e-14)


def test_step_dispatch_and_time():
    u = np.zeros(8)
    s = step("ExplicitEM", PathState(u, 3, 0.5), 0.0, 0.5, 0.1)
    assert s.t_index == 4 and s.time == 2.0 and np.all(s.u == 0.1)


class TestSimulate:
    def test_zero_horizon(self):
        cfg = small_config(T=0)
        r = simulate_path(cfg, 0)
        assert len(r.trace.times) == 1 and r.trace["t"][0] == 0
        assert r.trace["hess_l2sq_cum"][0] == 0 and r.trace["W"][0] == 0
        assert r.trace["dirichlet"][0] == pytest.approx(0.5 * np.pi**2 * np.sinc(2 / 32) ** 2, rel=1e-12)
        assert r.max_grad == r.initial_grad and not r.diverged

    def test_reproducible(self):
        cfg = small_config()
        a, b = simulate_path(cfg, 2), simulate_path(cfg, 2)
        assert a.u_final.tobytes() == b.u_final.tobytes()
        for k in a.trace.columns:
            assert a.trace[k].tobytes() == b.trace[k].tobytes()

    def test_block_equals_single_paths(self):
        cfg = small_config()
        block = simulate_block(cfg, [0, 1, 2])
        for r in block:
            np.testing.assert_array_equal(r.u_final, simulate_path(cfg, r.path_id).u_final)

    def test_trace_first_row_and_W_column(self):
        cfg = small_config(sampleStride=7)
        r = simulate_path(cfg, 1)
        noise = sample_increments(cfg.base_seed, 1, cfg.steps, cfg.dt)
        np.testing.assert_allclose(r.trace["W"], noise.W[cfg.sample_steps], atol=1e-15)
        assert r.trace["t"][-1] == pytest.approx(cfg.horizon)
        assert r.W_final == pytest.approx(noise.W[-1])

    def test_epsilon_continuity(self):
        cfg = parse_config({"dim": 1, "res": 128, "dt": 1e-3, "T": 1, "baseSeed": 42, "initial": {"sin": [0.5]}})
        a = simulate_path(cfg, 0, record=False)
        b = simulate_path(cfg.with_(epsilon=1e-8), 0, record=False)
        assert norm(a.u_final - b.u_final, cfg.grid, "L2") <= 1e-4

    def test_divergence_detected(self):
        cfg = small_config(scheme="ExplicitEM", dt=1e-2, T=4, force=True)
        r = simulate_path(cfg, 0)
        assert r.diverged and r.diverged_step is not None and np.all(r.u_final == 0)
        assert np.isnan(r.trace["dirichlet"][-1])

    def test_constant_shift_of_initial_datum(self):
        cfg = small_config()
        u0 = 0.5 * np.sin(2 * np.pi * cfg.grid.coords[0])
        a = simulate_path(cfg, 0, u0=u0, record=False)
        b = simulate_path(cfg, 0, u0=u0 + 1.25, record=False)
        assert np.max(np.abs(b.u_final - 1.25 - a.u_final)) <= 1e-12

    def test_short_noise_rejected(self):
        cfg = small_config()
        with pytest.raises(ValueError):
            simulate_path(cfg, 0, noise=sample_increments(0, 0, 3, cfg.dt))

    def test_cumulative_hessian_is_trapezoid(self):
        cfg = small_config()
        t = simulate_path(cfg, 0).trace
        trap = np.concatenate([[0], np.cumsum(0.5 * np.diff(t.times) * (t["hess_l2sq"][1:] + t["hess_l2sq"][:-1]))])
        np.testing.assert_allclose(t["hess_l2sq_cum"], trap, rtol=1e-12)

    def test_h1_deviation_definition(self):
        cfg = small_config()
        t = simulate_path(cfg, 0).trace
        off = t["mean_u"] - t["W"]
        expect = np.sqrt(t["l2dev_sq"] + (off - off[-1]) ** 2 + t["dirichlet"])
        np.testing.assert_allclose(t["h1_dev_from_W"], expect, rtol=1e-14)
