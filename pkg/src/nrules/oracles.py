"""Independent baselines for checking the engine.

``srules_reference`` evolves the full, untruncated Hamiltonian by exact
diagonalisation and reports Born weights per component. ``two_level_hazard``
is the closed-form collapse CDF of a single realized state coupled to a single
ready state. ``path_probabilities`` tallies engine runs against the exact
support of the jump graph.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh

from .dsl import ScenarioSpec, jump_successors

SEQUENCE_SEP = " > "


class UnsupportedScenarioError(ValueError):
    """The oracle does not apply to this scenario (e.g. a cyclic jump graph)."""


@dataclass(frozen=True)
class OutcomeDistribution:
    outcomes: dict[str, float]
    sample_count: int
    time: float | None = None
    support: tuple[str, ...] | None = None

    def __post_init__(self):
        values = list(self.outcomes.values())
        if any(p < 0 for p in values):
            raise ValueError("negative probability")
        if sum(values) > 1.0 + 1e-9:
            raise ValueError(f"probabilities sum to {sum(values)} > 1")

    def get(self, key: str) -> float:
        return self.outcomes.get(key, 0.0)

    def to_dict(self) -> dict:
        out = {"outcomes": dict(self.outcomes), "sample_count": self.sample_count}
        if self.time is not None:
            out["time"] = self.time
        if self.support is not None:
            out["support"] = list(self.support)
        return out


def sequence_key(sequence: Sequence[str]) -> str:
    return SEQUENCE_SEP.join(sequence)


def _spectral(spec: ScenarioSpec):
    h = spec.hamiltonian_matrix()
    w, v = eigh(h)
    return w, v, v.conj().T @ spec.initial_vector()


def srules_states(spec: ScenarioSpec, times: Sequence[float]) -> np.ndarray:
    """Rows are exp(-iHt) psi0 under the full Hamiltonian."""
    w, v, c = _spectral(spec)
    t = np.asarray(times, dtype=float)
    return (np.exp(-1j * np.outer(t, w)) * c) @ v.T


def srules_weights(spec: ScenarioSpec, times: Sequence[float]) -> np.ndarray:
    """Born weight of every component (columns) at every time (rows)."""
    states = srules_states(spec, times)
    mods = states.real**2 + states.imag**2
    out = np.empty((len(times), len(spec.components)))
    for m, idx in enumerate(spec.component_indices):
        out[:, m] = mods[:, list(idx)].sum(axis=1)
    return out


def srules_reference(spec: ScenarioSpec, observation_times: Sequence[float]) -> list[OutcomeDistribution]:
    """Per-component Born weights of the untruncated evolution, one entry per time."""
    weights = srules_weights(spec, observation_times)
    names = spec.component_names
    return [
        OutcomeDistribution({n: float(p) for n, p in zip(names, row)}, 0, float(t))
        for t, row in zip(observation_times, weights)
    ]


def captured_weight(spec: ScenarioSpec, times: Sequence[float]) -> np.ndarray:
    """sRules weight outside the start components: the probability that a first jump has happened."""
    weights = srules_weights(spec, times)
    start = [spec.component_names.index(s) for s in spec.start]
    return 1.0 - weights[:, start].sum(axis=1)


def first_choice_weights(spec: ScenarioSpec, t: float) -> dict[str, float]:
    """sRules weights at ``t`` of the first-jump targets, normalised to one."""
    succ = jump_successors(spec)
    targets = sorted({b for s in spec.start for b in succ[s]} - set(spec.start))
    row = srules_weights(spec, [t])[0]
    w = np.array([row[spec.component_names.index(b)] for b in targets])
    total = w.sum()
    if not total > 0:
        return {b: 0.0 for b in targets}
    return {b: float(x / total) for b, x in zip(targets, w)}


def two_level_hazard(g: float, t: float) -> float:
    """P(collapse by t) for one realized state coupled with strength g to one ready state.

    The ready weight is sin^2(g t) and its current is positive only until
    g t = pi/2, so the accumulated hazard saturates at one there.
    """
    if not g > 0 or t < 0:
        raise ValueError("need g > 0 and t >= 0")
    return 1.0 - math.exp(-math.sin(g * min(t, math.pi / (2 * g))) ** 2)


def enumerate_sequences(spec: ScenarioSpec) -> tuple[str, ...]:
    """Every root-to-leaf realization sequence of the jump graph, as sequence keys."""
    succ = jump_successors(spec)
    start = tuple(spec.start)
    root = "+".join(start)
    first = sorted({b for s in start for b in succ[s]} - set(start))
    if not first:
        return (root,)
    out: list[str] = []

    def walk(path: tuple[str, ...]):
        nxt = succ[path[-1]]
        if not nxt:
            out.append(sequence_key((root,) + path))
        for b in nxt:
            if b in path or b in start:
                raise UnsupportedScenarioError(f"jump graph has a cycle through {b!r}")
            walk(path + (b,))

    for b in first:
        walk((b,))
    return tuple(sorted(out))


def path_probabilities(spec: ScenarioSpec, n_trials: int, seed: int) -> OutcomeDistribution:
    """Tally engine sequences over n_trials (seeds seed XOR i) with the exact support attached."""
    from .engine import Engine

    support = enumerate_sequences(spec)
    engine = Engine(spec)
    tally = Counter(sequence_key(engine.run(i, seed ^ i).sequence) for i in range(n_trials))
    return OutcomeDistribution(
        {k: tally[k] / n_trials for k in sorted(tally)}, n_trials, support=support
    )


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def first_event_tv(first_times: Sequence[float], spec: ScenarioSpec, bins: int = 20) -> float:
    """Total variation between the empirical first-collapse time law and the sRules capture curve.

    Both laws live on ``bins`` equal bins over [0, t_max] plus one atom for
    "nothing by t_max". Trials with no event carry ``inf``.
    """
    t_max = spec.run.t_max
    edges = np.linspace(0.0, t_max, bins + 1)
    ts = np.asarray(first_times, dtype=float)
    counts, _ = np.histogram(ts[np.isfinite(ts)], bins=edges)
    empirical = np.append(counts, np.sum(~np.isfinite(ts))) / len(ts)
    w = np.maximum.accumulate(np.clip(captured_weight(spec, edges), 0.0, 1.0))
    reference = np.append(np.diff(w), 1.0 - w[-1])
    return total_variation(empirical, reference)


def two_sample_z(p1: float, n1: int, p2: float, n2: int) -> float:
    """Pooled two-proportion z statistic."""
    pooled = (p1 * n1 + p2 * n2) / (n1 + n2)
    var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)
    if var == 0.0:
        return 0.0 if p1 == p2 else math.inf
    return (p1 - p2) / math.sqrt(var)
