import math

import numpy as np
import pytest

from nrules import dsl
from nrules.rules import (
    ContractViolation,
    DegenerateStateError,
    NoPositiveCurrent,
    apply_collapse,
    build_effective_hamiltonian,
    choose_component,
    compile_scenario,
    frontier,
    hazard_rate,
    initialize_frontier,
    sample_collapse_time,
)
from nrules.state import (
    ComponentPartition,
    CurrentReport,
    StateVector,
    Status,
    StructuralError,
    component_square_modulus,
    total_square_modulus,
)

R, Y, D = Status.REALIZED, Status.READY, Status.DORMANT


def statuses(part):
    return dict(zip(part.names, part.statuses))


def report(J, s=None, total=1.0):
    J = np.asarray(J, float)
    return CurrentReport(J, np.zeros_like(J) if s is None else np.asarray(s), total)


def test_frontier_counter_chain(load_scenario):
    part = initialize_frontier(load_scenario("counter_chain"))
    assert statuses(part) == {"C0": R, "C1": Y, "C2": D, "C3": D, "C4": D}


def test_frontier_fig1(load_scenario):
    part = initialize_frontier(load_scenario("fig1_parallel"))
    assert statuses(part) == {"A0": R, "Al": Y, "Ar": Y, "Af": D}


def test_frontier_single_component():
    spec = dsl.parse("[basis]\na b\n[components]\nA a b\n[hamiltonian]\na b 1\n[initial]\na 1\n")
    assert statuses(initialize_frontier(spec)) == {"A": R}


def test_amplitude_outside_start_is_rejected():
    spec = dsl.ScenarioSpec(
        name="x",
        basis=("a", "b"),
        components=(("A", ("a",)), ("B", ("b",))),
        hamiltonian=(("a", "b", 1.0, 0.0),),
        jumps=(("A", "B"),),
        initial=(("a", 1.0, 0.0), ("b", 0.1, 0.0)),
        start=("A",),
    )
    with pytest.raises(dsl.ScenarioError):
        initialize_frontier(spec)


def test_two_level_truncation():
    spec = dsl.parse(
        "[basis]\na b\n[components]\nA a\nB b\n[hamiltonian]\na a 0.3\na b 0.7\nb b -1.1\n"
        "[jumps]\nA -> B\n[initial]\na 1\n"
    )
    h = build_effective_hamiltonian(spec, initialize_frontier(spec)).matrix
    assert np.array_equal(h, np.array([[0.3, 0.7], [0.7, 0.0]], dtype=complex))


def test_counter_chain_dormant_rows_zero(load_scenario):
    spec = load_scenario("counter_chain")
    part = initialize_frontier(spec)
    h = build_effective_hamiltonian(spec, part).matrix
    for name in ("C2", "C3", "C4"):
        i = part.components[part.index(name)][0]
        assert not h[i].any() and not h[:, i].any()


def test_all_realized_keeps_full_h(load_scenario):
    spec = load_scenario("fig2_tree")
    model = compile_scenario(spec)
    part = model.template.with_statuses([R] * len(model.template))
    assert np.array_equal(build_effective_hamiltonian(spec, part).matrix, model.hamiltonian)


def test_ready_blocks_removed(load_scenario):
    # two ready components with internal structure and a mutual coupling
    spec = dsl.parse(
        "[basis]\ns x1 x2 y1\n[components]\nS s\nX x1 x2\nY y1\n"
        "[hamiltonian]\ns x1 1\ns y1 1\nx1 x2 0.5\nx1 y1 0.25\nx2 x2 2\n"
        "[jumps]\nS -> X\nS -> Y\n[initial]\ns 1\n"
    )
    part = initialize_frontier(spec)
    h = build_effective_hamiltonian(spec, part).matrix
    ready = part.mask(part.having(Y))
    assert not h[np.ix_(ready, ready)].any()
    assert h[0, 1] == 1 and h[0, 3] == 1
    assert np.allclose(h, h.conj().T, atol=1e-12)


def test_hazard_rate_examples():
    part = ComponentPartition(("A", "B", "C"), ((0,), (1,), (2,)), (R, Y, Y))
    assert hazard_rate(report([0.0, 0.0, 0.0]), part) == 0.0
    assert hazard_rate(report([-0.2, 0.2, 0.0], total=0.5), part) == pytest.approx(0.4)
    assert hazard_rate(report([0.3, -0.3, 0.0]), part) == 0.0
    # currents into realized or dormant components do not count
    part2 = ComponentPartition(("A", "B", "C"), ((0,), (1,), (2,)), (R, Y, D))
    assert hazard_rate(report([0.5, -0.1, 0.4]), part2) == 0.0
    with pytest.raises(DegenerateStateError):
        hazard_rate(report([0, 0, 0], total=0.0), part)


def test_sample_collapse_time_constant_rate():
    times = np.linspace(0, 5, 5001)
    t = sample_collapse_time(times, 2.0 * times, 0.5)
    assert t == pytest.approx(math.log(2) / 2, abs=1e-12)
    assert sample_collapse_time(times, np.zeros_like(times), 0.999) is None
    for bad in (0.0, 1.0, -0.1, 2.0):
        with pytest.raises(StructuralError):
            sample_collapse_time(times, times, bad)


def test_sample_collapse_time_with_refinement():
    times = np.linspace(0, 1, 11)
    lam = lambda t: t**2  # noqa: E731
    t = sample_collapse_time(times, lam(times), math.exp(-0.5), refine=lambda k, tau: lam(times[k] + tau))
    assert t == pytest.approx(math.sqrt(0.5), abs=1e-10)


def test_choose_component_inverse_cdf():
    part = ComponentPartition(("A", "B", "C", "E"), ((0,), (1,), (2,), (3,)), (R, Y, Y, Y))
    rep = report([-1.0, 0.36, -0.5, 0.64])
    assert choose_component(rep, part, 0.0) == 1
    assert choose_component(rep, part, 0.3599) == 1
    assert choose_component(rep, part, 0.3601) == 3
    assert choose_component(rep, part, 0.999999) == 3
    single = ComponentPartition(("A", "B"), ((0,), (1,)), (R, Y))
    assert all(choose_component(report([-0.1, 0.1]), single, v) == 1 for v in (0, 0.5, 0.99))
    with pytest.raises(NoPositiveCurrent):
        choose_component(report([0.1, -0.1]), single, 0.5)


def test_choose_component_frequencies():
    rng = np.random.default_rng(0)
    part = ComponentPartition(("S", "D1", "D2"), ((0,), (1,), (2,)), (R, Y, Y))
    rep = report([-1.0, 0.36, 0.64])
    picks = np.array([choose_component(rep, part, v) for v in rng.random(20000)])
    p = np.mean(picks == 1)
    assert abs(p - 0.36) < 3 * math.sqrt(0.36 * 0.64 / 20000)


def test_apply_collapse_counter(load_scenario):
    spec = load_scenario("counter_chain")
    part = initialize_frontier(spec)
    psi = StateVector(np.array([0.8, -0.6j, 0, 0, 0]), 0.4)
    new, new_part, ev = apply_collapse(psi, part, part.index("C1"), spec, 0.3, 0.7)
    assert statuses(new_part) == {"C0": D, "C1": R, "C2": Y, "C3": D, "C4": D}
    assert new.amplitudes[0] == 0 and new.amplitudes[1] == -0.6j
    assert ev.post_s == pytest.approx(0.36, abs=1e-15)
    assert ev.pre_s == pytest.approx(1.0)
    assert ev.t_sc == 0.4 and ev.chosen_name == "C1"
    assert total_square_modulus(new) == ev.post_s
    with pytest.raises(ContractViolation):
        apply_collapse(psi, part, part.index("C0"), spec)


def test_apply_collapse_cascade(load_scenario):
    spec = load_scenario("cascade")
    part = initialize_frontier(spec)
    rng = np.random.default_rng(1)
    amps = np.zeros(len(spec.basis), complex)
    amps[: 1 + 24] = rng.normal(size=25)
    _, new_part, ev = apply_collapse(StateVector(amps), part, part.index("A2"), spec)
    assert statuses(new_part) == {"A5": D, "A2": R, "A0": Y}
    assert ev.post_s == pytest.approx(component_square_modulus(amps, part, part.index("A2")), abs=1e-12)
    assert ev.post_s < ev.pre_s
