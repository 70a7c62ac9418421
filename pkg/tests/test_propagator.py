import math

import numpy as np
import pytest
from scipy.linalg import expm

from nrules.propagator import (
    EventAt,
    HazardAccumulator,
    IntegrationConfig,
    RanToHorizon,
    Segment,
    SpectralPropagator,
    StepRejected,
    advance_with_hazard,
    ready_membership,
    rk4_step,
    step,
)
from nrules.rules import build_effective_hamiltonian, initialize_frontier
from nrules.state import StateVector, Status

G = np.array([[0, 1], [1, 0]], dtype=complex)


def closed_form(g, t):
    return np.array([math.cos(g * t), -1j * math.sin(g * t)])


def test_diagonal_phase():
    e, dt = 0.7, 0.01
    out = step(StateVector([1.0]), np.array([[e]], dtype=complex), dt)
    assert out.amplitudes[0] == pytest.approx(np.exp(-1j * e * dt), abs=1e-12)
    assert abs(out.amplitudes[0]) == pytest.approx(1.0, abs=1e-12)
    assert out.time == dt


def test_zero_operator_is_identity():
    psi = StateVector([0.6, 0.8j])
    assert np.array_equal(step(psi, np.zeros((2, 2), complex), 0.1).amplitudes, psi.amplitudes)


def test_two_level_closed_form_by_steps():
    state = StateVector([1.0, 0.0])
    for _ in range(1000):
        state = step(state, G, 1e-3)
    assert np.max(np.abs(state.amplitudes - closed_form(1.0, 1.0))) <= 1e-8


def test_spectral_iterates_match_literal_rk4():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    h = (a + a.conj().T) / 2
    psi = rng.normal(size=5) + 0j
    prop = SpectralPropagator(h, 0.01, "rk4", tolerance=1.0)
    lit = psi.copy()
    for _ in range(200):
        lit = rk4_step(h, lit, 0.01)
    assert np.max(np.abs(prop.propagate(psi, 200) - lit)) <= 1e-12


def test_convergence_order():
    errs = []
    for dt in (0.1, 0.05, 0.025):
        n = round(1.0 / dt)
        prop = SpectralPropagator(G, dt, "rk4", tolerance=1.0)
        errs.append(np.max(np.abs(prop.propagate(np.array([1, 0j]), n) - closed_form(1.0, 1.0))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.7)


def test_norm_conservation_long_run():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = (a + a.conj().T) / 2
    prop = SpectralPropagator(h, 0.01, "rk4", tolerance=1e-10, horizon=100_000 * 0.01)
    n = round(1000.0 / prop.dt)
    assert n >= 100_000
    psi = rng.normal(size=6) + 0j
    psi /= np.linalg.norm(psi)
    end = prop.propagate(psi, n)
    assert abs(np.vdot(end, end).real - 1.0) <= 1e-9


def test_expm_matches_scipy():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7))
    h = (a + a.conj().T) / 2
    psi = rng.normal(size=7) + 0j
    prop = SpectralPropagator(h, 0.05, "expm")
    assert np.allclose(prop.propagate(psi, 20), expm(-1j * h * 1.0) @ psi, atol=1e-12)


def test_step_rejection_and_halving():
    with pytest.raises(StepRejected):
        step(StateVector([1.0, 0.0]), G, 0.5, tolerance=1e-12)
    prop = SpectralPropagator(G, 0.5, "rk4", tolerance=1e-12)
    assert prop.dt < 0.5 and prop.estimate <= 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        IntegrationConfig(dt=0.0, t_max=1.0)
    with pytest.raises(ValueError):
        IntegrationConfig(dt=0.1, t_max=1.0, method="euler")


def two_level(two_level_spec):
    part = initialize_frontier(two_level_spec)
    h = build_effective_hamiltonian(two_level_spec, part)
    cfg = IntegrationConfig.from_run(two_level_spec.run)
    return part, h, cfg


def test_advance_event_time(two_level_spec):
    part, h, cfg = two_level(two_level_spec)
    acc = HazardAccumulator(-math.log(0.5))
    out = advance_with_hazard(StateVector([1.0, 0.0]), part, h, acc, cfg)
    assert isinstance(out, EventAt)
    # Lambda(t) = sin^2 t, so the crossing sits at asin(sqrt(ln 2)); the
    # trapezoid rule on a 1e-3 grid is good to ~1e-7 in Lambda
    assert out.t_sc == pytest.approx(math.asin(math.sqrt(math.log(2))), abs=1e-6)
    assert np.allclose(out.state.amplitudes, closed_form(1.0, out.t_sc), atol=1e-12)


def test_advance_beyond_saturation(two_level_spec):
    part, h, cfg = two_level(two_level_spec)
    acc = HazardAccumulator(-math.log(0.3))  # u < 1/e
    out = advance_with_hazard(StateVector([1.0, 0.0]), part, h, acc, cfg)
    assert isinstance(out, RanToHorizon)
    assert acc.value == pytest.approx(1.0, abs=1e-6)


def test_advance_zero_hazard(two_level_spec):
    part, _, cfg = two_level(two_level_spec)
    h = build_effective_hamiltonian(two_level_spec, part)
    out = advance_with_hazard(StateVector([1.0, 0.0]), part, np.diag([0.5, 0.0]).astype(complex), HazardAccumulator(1e-6), cfg)
    assert isinstance(out, RanToHorizon)
    assert h.matrix.shape == (2, 2)


def test_event_localization_tolerance(two_level_spec):
    part, h, cfg = two_level(two_level_spec)
    prop = SpectralPropagator(h, 0.01, "rk4")
    seg = Segment(prop, np.array([1, 0j]), 0.0, cfg.t_max, ready_membership(part))
    for u in (0.9, 0.6, 0.4):
        thr = -math.log(u)
        t_sc, _ = seg.locate(thr)
        k = int(t_sc // seg.dt)
        lam = seg.cumulative_in_step(k, t_sc - seg.time(k))
        assert abs(lam - thr) <= 1e-10 * max(1.0, thr)
        # refined quadrature moves the event by less than one step
        fine = Segment(SpectralPropagator(h, 0.0025, "rk4"), np.array([1, 0j]), 0.0, cfg.t_max, ready_membership(part))
        assert abs(fine.locate(thr)[0] - t_sc) < seg.dt


def test_chunking_does_not_change_events(two_level_spec):
    part, h, cfg = two_level(two_level_spec)
    prop = SpectralPropagator(h, 0.001, "expm")
    member = ready_membership(part)
    a = Segment(prop, np.array([1, 0j]), 0.0, cfg.t_max, member, chunk_size=256)
    b = Segment(prop, np.array([1, 0j]), 0.0, cfg.t_max, member, chunk_size=37)
    for u in (0.95, 0.7, 0.45):
        assert a.locate(-math.log(u))[0] == pytest.approx(b.locate(-math.log(u))[0], abs=1e-12)
    assert np.array_equal(a.state(900), b.state(900))


def clamped_ready_run(h, ready, psi, dt, n_steps):
    """RK4 on the ready rows of i dpsi/dt = H psi with every other amplitude held at zero."""

    def f(y):
        return np.where(ready, -1j * (h @ np.where(ready, y, 0)), 0)

    y = np.where(ready, psi, 0)
    for _ in range(n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def test_frozen_ready_amplitudes(load_scenario):
    spec = load_scenario("observer_chain")
    part = initialize_frontier(spec)
    h = build_effective_hamiltonian(spec, part).matrix
    ready = part.mask(part.having(Status.READY))
    rng = np.random.default_rng(9)
    psi = np.where(ready, rng.normal(size=ready.size) + 1j * rng.normal(size=ready.size), 0)
    end = clamped_ready_run(h, ready, psi, 0.005, 10_000)
    assert np.max(np.abs(end - psi)) <= 1e-12
    # the untruncated operator lets the ready chain evolve internally
    full = clamped_ready_run(spec.hamiltonian_matrix(), ready, psi, 0.005, 100)
    assert np.max(np.abs(full - psi)) > 1e-3
