"""Single-trial driver: evolve, trigger, collapse, repeat until the horizon."""

from __future__ import annotations

import numpy as np

from .dsl import ScenarioSpec
from .propagator import IntegrationConfig, Segment, SpectralPropagator, ready_membership
from .records import Sample, TrialRecord
from .rules import (
    NoPositiveCurrent,
    apply_collapse,
    build_effective_hamiltonian,
    choose_component,
    clamped_weights,
    compile_scenario,
    initialize_frontier,
    threshold_from_draw,
)
from .state import ComponentPartition, StateVector, Status, current_density, modular_currents


def trial_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def draw_open(rng: np.random.Generator) -> float:
    """Uniform variate on the open interval (0, 1)."""
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return u


class Engine:
    """Runs trials of one scenario.

    Effective operators and their propagators are cached per status
    assignment. The first segment of every trial starts from the same state
    at t = 0, so it is built once and shared; it is a pure function of the
    scenario and caching it does not change any result.
    """

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.model = compile_scenario(spec)
        self.cfg = IntegrationConfig.from_run(spec.run)
        self._operators: dict = {}
        self._first: Segment | None = None
        self._start = initialize_frontier(self.model)

    def operator(self, part: ComponentPartition):
        key = part.statuses
        if key not in self._operators:
            h_eff = build_effective_hamiltonian(self.model, part)
            prop = SpectralPropagator(
                h_eff, self.cfg.dt, self.cfg.method, self.cfg.tolerance, horizon=self.cfg.t_max
            )
            self._operators[key] = (h_eff, prop, ready_membership(part))
        return self._operators[key]

    def _segment(self, part, psi, t, prop, member, record: bool) -> Segment:
        if t == 0.0 and not record:
            if self._first is None:
                self._first = Segment(prop, psi, 0.0, self.cfg.t_max, member)
            return self._first
        return Segment(prop, psi, t, self.cfg.t_max, member, keep_states=record)

    def run(self, trial_id: int = 0, seed: int = 0, record: bool = False, sample_every: int = 1) -> TrialRecord:
        rng = trial_rng(seed)
        model = self.model
        part = self._start
        psi = model.initial.copy()
        t = 0.0
        events = []
        series: list[Sample] = []
        n_ops = 0
        realized = part.having(Status.REALIZED)
        sequence = ["+".join(part.names[m] for m in realized)]
        dt_used = self.cfg.dt
        while True:
            h_eff, prop, member = self.operator(part)
            n_ops += 1
            dt_used = min(dt_used, prop.dt)
            has_ready = bool(part.having(Status.READY))
            if not has_ready and not record:
                break
            seg = self._segment(part, psi, t, prop, member, record)
            hit = None
            if has_ready:
                u = draw_open(rng)
                hit = seg.locate(threshold_from_draw(u))
            if record:
                t_stop = hit[0] if hit else self.cfg.t_max
                series.extend(self._samples(seg, part, h_eff, t_stop, sample_every))
            if hit is None:
                if record:
                    psi = seg.end_state()
                    last = series[-1].t if series else -1.0
                    if self.cfg.t_max > last:
                        series.extend(self._describe(psi[None, :], [self.cfg.t_max], part, h_eff))
                break
            t_sc, psi_sc = hit
            v = rng.random()
            chosen = self._choose(seg, part, h_eff, psi_sc, t_sc, v)
            state, part, event = apply_collapse(StateVector(psi_sc, t_sc), part, chosen, model, u, v)
            events.append(event)
            sequence.append(event.chosen_name)
            psi, t = state.amplitudes, t_sc

        realized = part.having(Status.REALIZED)
        return TrialRecord(
            trial_id=trial_id,
            seed=seed,
            components=part.names,
            events=events,
            sequence=tuple(sequence),
            terminal="+".join(part.names[m] for m in realized),
            terminal_time=events[-1].t_sc if events else 0.0,
            n_hamiltonians=n_ops,
            dt=dt_used,
            series=series,
        )

    def _choose(self, seg, part, h_eff, psi_sc, t_sc, v) -> int:
        report = modular_currents(psi_sc, part, h_eff)
        try:
            return choose_component(report, part, v)
        except NoPositiveCurrent:
            pass
        # All clamped currents vanish at the located instant; use the nearest
        # earlier instant in the step that still has positive inflow.
        k = max(0, int((t_sc - seg.t0) // seg.dt))
        psi_k = seg.state(k)
        tau = t_sc - seg.time(k)
        for j in range(52, -1, -1):
            probe = seg.propagator.substep(psi_k, tau * (1.0 - 2.0**-j)) if j else psi_k
            report = modular_currents(probe, part, h_eff)
            if clamped_weights(report, part).sum() > 0.0:
                return choose_component(report, part, v)
        raise NoPositiveCurrent(f"no positive ready current near t = {t_sc}")

    def _samples(self, seg: Segment, part, h_eff, t_stop: float, every: int) -> list[Sample]:
        k_stop = min(seg.n_steps, int(np.floor((t_stop - seg.t0) / seg.dt)) + 1)
        ks = [k for k in range(0, k_stop + 1, every) if seg.time(k) < t_stop]
        if not ks:
            return []
        states = seg.stored_states(0, ks[-1] + 1)[ks]
        return self._describe(states, [seg.time(k) for k in ks], part, h_eff)

    @staticmethod
    def _describe(states, times, part: ComponentPartition, h_eff) -> list[Sample]:
        member = part.membership()
        mods = (states.real**2 + states.imag**2) @ member
        currents = current_density(states, h_eff.matrix) @ member
        status = tuple(s.value for s in part.statuses)
        return [
            Sample(float(t), tuple(map(float, m)), tuple(map(float, j)), status)
            for t, m, j in zip(times, mods, currents)
        ]


def run_trial(spec: ScenarioSpec, seed: int, trial_id: int = 0, record: bool = True, sample_every: int = 1) -> TrialRecord:
    return Engine(spec).run(trial_id, seed, record=record, sample_every=sample_every)
