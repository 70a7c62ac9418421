"""The reduction rules: ready marking, truncation, hazard and collapse."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .dsl import ParseDiagnostic, ScenarioError, ScenarioSpec
from .state import (
    ComponentPartition,
    CurrentReport,
    StateVector,
    Status,
    StructuralError,
    component_square_modulus,
    total_square_modulus,
)

HERMITIAN_ATOL = 1e-12


class DegenerateStateError(ValueError):
    """The state carries no square modulus, so no hazard is defined."""


class NoPositiveCurrent(RuntimeError):
    """Every clamped ready current is zero; the caller must relocate the event."""


class ContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class JumpGraph:
    names: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    couplings: tuple[tuple[tuple[int, int], ...], ...]

    def successors(self, m: int) -> tuple[int, ...]:
        return tuple(b for a, b in self.edges if a == m)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    matrix: np.ndarray
    active_mask: np.ndarray
    statuses: tuple[Status, ...]


@dataclass(frozen=True)
class CollapseEvent:
    t_sc: float
    chosen: int
    chosen_name: str
    pre_s: float
    post_s: float
    hazard_draw: float
    choice_draw: float


@dataclass(frozen=True)
class Model:
    """Numeric form of a scenario, shared by every trial."""

    spec: ScenarioSpec
    hamiltonian: np.ndarray
    initial: np.ndarray
    template: ComponentPartition
    graph: JumpGraph


@lru_cache(maxsize=64)
def compile_scenario(spec: ScenarioSpec) -> Model:
    h = spec.hamiltonian_matrix()
    names = spec.component_names
    comps = spec.component_indices
    template = ComponentPartition(names, comps, (Status.DORMANT,) * len(names), len(spec.basis))
    owner = np.empty(len(spec.basis), dtype=int)
    for m, comp in enumerate(comps):
        owner[list(comp)] = m
    edges, couplings = [], []
    for a, b in spec.jumps:
        ia, ib = names.index(a), names.index(b)
        edges.append((ia, ib))
        pairs = [
            (int(i), int(j))
            for i in comps[ia]
            for j in comps[ib]
            if h[i, j] != 0
        ]
        couplings.append(tuple(pairs))
    graph = JumpGraph(names, tuple(edges), tuple(couplings))
    return Model(spec, h, spec.initial_vector(), template, graph)


def _model(scenario) -> Model:
    return scenario if isinstance(scenario, Model) else compile_scenario(scenario)


def frontier(scenario, realized: Sequence[int]) -> ComponentPartition:
    """Statuses implied by a realized set: its jump successors are ready."""
    model = _model(scenario)
    realized = set(realized)
    ready = {b for m in realized for b in model.graph.successors(m)} - realized
    statuses = [
        Status.REALIZED if m in realized else Status.READY if m in ready else Status.DORMANT
        for m in range(len(model.template))
    ]
    return model.template.with_statuses(statuses)


def initialize_frontier(scenario) -> ComponentPartition:
    model = _model(scenario)
    spec = model.spec
    start = {spec.component_names.index(s) for s in spec.start_components()}
    realized = []
    for m, comp in enumerate(model.template.components):
        carries = bool(np.any(model.initial[list(comp)] != 0))
        if carries and m not in start:
            raise ScenarioError(
                [ParseDiagnostic(0, 0, "error", f"initial amplitude in non-start component {spec.component_names[m]!r}")]
            )
        if carries:
            realized.append(m)
    if not realized:
        raise ScenarioError([ParseDiagnostic(0, 0, "error", "initial state has zero square modulus")])
    return frontier(model, realized)


def build_effective_hamiltonian(scenario, part: ComponentPartition) -> EffectiveHamiltonian:
    """Truncate H: ready components are driven but neither evolve nor transmit.

    Kept: realized internal blocks, realized-realized and realized-ready
    couplings. Dropped: every ready-ready block (including ready internal
    blocks) and everything touching a dormant component.
    """
    model = _model(scenario)
    realized = part.mask(part.having(Status.REALIZED))
    ready = part.mask(part.having(Status.READY))
    active = realized | ready
    keep = np.outer(active, active) & ~np.outer(ready, ready)
    matrix = np.where(keep, model.hamiltonian, 0.0)
    if not np.allclose(matrix, matrix.conj().T, rtol=0.0, atol=HERMITIAN_ATOL):
        raise StructuralError("effective Hamiltonian is not Hermitian")
    return EffectiveHamiltonian(matrix, active, part.statuses)


def hazard_rate(report: CurrentReport, part: ComponentPartition) -> float:
    if not report.total_s > 0.0:
        raise DegenerateStateError("total square modulus is zero")
    ready = part.having(Status.READY)
    positive = np.clip(np.asarray(report.per_component_J)[ready], 0.0, None)
    return float(positive.sum() / report.total_s)


def threshold_from_draw(u: float) -> float:
    if not 0.0 < u < 1.0:
        raise StructuralError(f"uniform variate must lie in (0, 1), got {u}")
    return -math.log(u)


def sample_collapse_time(
    times: np.ndarray,
    cumulative: np.ndarray,
    u: float,
    refine: Callable[[int, float], float] | None = None,
) -> float | None:
    """First time the accumulated hazard reaches -ln(u), or None.

    ``cumulative`` holds the accumulated hazard at ``times``. Inside the
    bracketing interval the crossing is found by root search on
    ``refine(k, tau)`` (accumulated hazard at ``times[k] + tau``) when
    given, otherwise by linear interpolation.
    """
    threshold = threshold_from_draw(u)
    cumulative = np.asarray(cumulative, dtype=float)
    k1 = int(np.searchsorted(cumulative, threshold, side="left"))
    if k1 >= len(cumulative):
        return None
    if k1 == 0:
        return float(times[0])
    k = k1 - 1
    width = float(times[k1] - times[k])
    if refine is None:
        frac = (threshold - cumulative[k]) / (cumulative[k1] - cumulative[k])
        return float(times[k] + frac * width)
    return float(times[k] + locate_in_step(lambda tau: refine(k, tau) - threshold, width, threshold))


def locate_in_step(f: Callable[[float], float], width: float, threshold: float) -> float:
    """Root of f on [0, width] given f(0) < 0 <= f(width), to 1e-10 max(1, threshold)."""
    from scipy.optimize import brentq

    tol = 1e-10 * max(1.0, threshold)
    hi_val = f(width)
    if hi_val <= 0.0:
        return width
    root = brentq(f, 0.0, width, xtol=1e-15 * max(1.0, width), rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(f(root)) > tol:
        lo, hi = 0.0, width
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val = f(mid)
            if abs(val) <= tol:
                return mid
            lo, hi = (mid, hi) if val < 0 else (lo, mid)
        return hi
    return root


def clamped_weights(report: CurrentReport, part: ComponentPartition) -> np.ndarray:
    out = np.zeros(len(part))
    ready = part.having(Status.READY)
    out[ready] = np.clip(np.asarray(report.per_component_J)[ready], 0.0, None)
    return out


def choose_component(report: CurrentReport, part: ComponentPartition, v: float) -> int:
    """Inverse-CDF pick of a ready component, weighted by clamped current."""
    if not 0.0 <= v < 1.0:
        raise StructuralError(f"uniform variate must lie in [0, 1), got {v}")
    weights = clamped_weights(report, part)
    total = weights.sum()
    if not total > 0.0:
        raise NoPositiveCurrent("no ready component receives positive current")
    cum = np.cumsum(weights)
    m = int(np.searchsorted(cum, v * total, side="right"))
    # guard against the rounding tail landing on a zero-weight component
    while weights[min(m, len(weights) - 1)] == 0.0:
        m -= 1
    return min(m, len(weights) - 1)


def apply_collapse(
    state: StateVector,
    part: ComponentPartition,
    chosen: int,
    scenario,
    hazard_draw: float = float("nan"),
    choice_draw: float = float("nan"),
) -> tuple[StateVector, ComponentPartition, CollapseEvent]:
    if part.statuses[chosen] is not Status.READY:
        raise ContractViolation(f"component {part.names[chosen]!r} is not ready")
    model = _model(scenario)
    pre_s = total_square_modulus(state)
    keep = part.mask([chosen])
    amps = np.where(keep, state.amplitudes, 0.0)
    new_state = StateVector(amps, state.time)
    new_part = frontier(model, [chosen])
    post_s = component_square_modulus(new_state, new_part, chosen)
    event = CollapseEvent(
        t_sc=float(state.time),
        chosen=chosen,
        chosen_name=part.names[chosen],
        pre_s=pre_s,
        post_s=post_s,
        hazard_draw=hazard_draw,
        choice_draw=choice_draw,
    )
    return new_state, new_part, event
