"""Trial and ensemble records with their JSON and CSV encodings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

from .rules import CollapseEvent

RNG_ID = "numpy.random.PCG64; trial seed = master_seed XOR trial_index"


@dataclass(frozen=True)
class Sample:
    t: float
    sq_modulus: tuple[float, ...]
    J: tuple[float, ...]
    status: tuple[str, ...]


@dataclass
class TrialRecord:
    trial_id: int
    seed: int
    components: tuple[str, ...]
    events: list[CollapseEvent]
    sequence: tuple[str, ...]
    terminal: str
    terminal_time: float
    n_hamiltonians: int
    dt: float
    series: list[Sample] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "seed": self.seed,
            "rng": RNG_ID,
            "components": list(self.components),
            "events": [asdict(e) for e in self.events],
            "sequence": list(self.sequence),
            "terminal": {"component": self.terminal, "t": self.terminal_time},
            "n_hamiltonians": self.n_hamiltonians,
            "dt": self.dt,
            "series": [
                {"t": s.t, "sq_modulus": list(s.sq_modulus), "J": list(s.J), "status": list(s.status)}
                for s in self.series
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(
            trial_id=d["trial_id"],
            seed=d["seed"],
            components=tuple(d["components"]),
            events=[CollapseEvent(**e) for e in d["events"]],
            sequence=tuple(d["sequence"]),
            terminal=d["terminal"]["component"],
            terminal_time=d["terminal"]["t"],
            n_hamiltonians=d["n_hamiltonians"],
            dt=d["dt"],
            series=[
                Sample(s["t"], tuple(s["sq_modulus"]), tuple(s["J"]), tuple(s["status"]))
                for s in d.get("series", [])
            ],
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "comp_label", "sq_modulus", "J", "status"])
        for s in self.series:
            for name, mod, cur, st in zip(self.components, s.sq_modulus, s.J, s.status):
                w.writerow([repr(s.t), name, repr(mod), repr(cur), st])
        for e in self.events:
            w.writerow(["EVENT", repr(e.t_sc), e.chosen_name, repr(e.pre_s), repr(e.post_s)])
        return buf.getvalue()


@dataclass
class EnsembleReport:
    scenario: str
    n_trials: int
    master_seed: int
    outcomes: dict[str, int]
    terminals: dict[str, int]
    histograms: list[dict]
    comparison: dict | None = None
    rng: str = RNG_ID

    def probabilities(self) -> dict[str, float]:
        return {k: v / self.n_trials for k, v in self.outcomes.items()}

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n_trials": self.n_trials,
            "master_seed": self.master_seed,
            "rng": self.rng,
            "outcomes": dict(self.outcomes),
            "probabilities": self.probabilities(),
            "terminals": dict(self.terminals),
            "histograms": self.histograms,
            "comparison": self.comparison,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleReport":
        return cls(
            scenario=d["scenario"],
            n_trials=d["n_trials"],
            master_seed=d["master_seed"],
            outcomes=dict(d["outcomes"]),
            terminals=dict(d["terminals"]),
            histograms=d["histograms"],
            comparison=d["comparison"],
            rng=d["rng"],
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "key", "a", "b", "c"])
        for key in sorted(self.outcomes):
            w.writerow(["OUTCOME", key, self.outcomes[key], repr(self.outcomes[key] / self.n_trials), ""])
        for key in sorted(self.terminals):
            w.writerow(["TERMINAL", key, self.terminals[key], "", ""])
        for h in self.histograms:
            edges = h["edges"]
            for lo, hi, count in zip(edges[:-1], edges[1:], h["counts"]):
                w.writerow(["HIST", h["event_index"], repr(lo), repr(hi), count])
        for key, value in _flatten(self.comparison or {}):
            w.writerow(["COMPARE", key, repr(value), "", ""])
        return buf.getvalue()


def _flatten(d: dict, prefix: str = ""):
    for key in sorted(d):
        value = d[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        elif isinstance(value, list):
            for i, v in enumerate(value):
                yield f"{name}[{i}]", v
        else:
            yield name, value


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"
