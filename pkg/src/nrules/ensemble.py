"""Ensembles of independent trials, comparison against sRules, and report files."""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracles
from .dsl import ScenarioSpec, load
from .engine import Engine
from .records import EnsembleReport, TrialRecord, dumps

HIST_BINS = 50
FORMATS = ("json", "csv")


def trial_seed(master_seed: int, trial_index: int) -> int:
    return master_seed ^ trial_index


@dataclass
class EnsembleResult:
    report: EnsembleReport
    trials: list[TrialRecord]


def _run_block(spec: ScenarioSpec, master_seed: int, start: int, stop: int, sample_every: int | None):
    engine = Engine(spec)
    record = sample_every is not None
    every = sample_every or 1
    return [
        engine.run(i, trial_seed(master_seed, i), record=record, sample_every=every)
        for i in range(start, stop)
    ]


def _blocks(n: int, workers: int) -> list[tuple[int, int]]:
    size = math.ceil(n / workers)
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def run_trials(
    spec: ScenarioSpec,
    n_trials: int,
    master_seed: int,
    workers: int = 1,
    sample_every: int | None = None,
) -> list[TrialRecord]:
    """Trials 0..n-1 with seeds master XOR i, returned in trial order.

    With several workers the index range is split into contiguous blocks;
    each trial depends only on its own seed, so the result is the same list.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    workers = max(1, min(workers, n_trials))
    if workers == 1:
        return _run_block(spec, master_seed, 0, n_trials, sample_every)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_block, spec, master_seed, a, b, sample_every)
            for a, b in _blocks(n_trials, workers)
        ]
        return [rec for f in futures for rec in f.result()]


def first_event_time(rec: TrialRecord) -> float:
    return rec.events[0].t_sc if rec.events else math.inf


def aggregate(spec: ScenarioSpec, trials: list[TrialRecord], master_seed: int, compare: bool = False) -> EnsembleReport:
    outcomes = Counter(oracles.sequence_key(r.sequence) for r in trials)
    terminals = Counter(r.terminal for r in trials)
    edges = np.linspace(0.0, spec.run.t_max, HIST_BINS + 1)
    depth = max((len(r.events) for r in trials), default=0)
    histograms = []
    for k in range(depth):
        times = [r.events[k].t_sc for r in trials if len(r.events) > k]
        counts, _ = np.histogram(times, bins=edges)
        histograms.append(
            {"event_index": k, "edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}
        )
    report = EnsembleReport(
        scenario=spec.name,
        n_trials=len(trials),
        master_seed=master_seed,
        outcomes={k: outcomes[k] for k in sorted(outcomes)},
        terminals={k: terminals[k] for k in sorted(terminals)},
        histograms=histograms,
    )
    if compare:
        report.comparison = comparison_block(spec, trials)
    return report


def comparison_block(spec: ScenarioSpec, trials: list[TrialRecord]) -> dict:
    """nRules ensemble statistics beside the sRules reference at the horizon."""
    n = len(trials)
    firsts = [first_event_time(r) for r in trials]
    hit = [r for r in trials if r.events]
    first_counts = Counter(r.events[0].chosen_name for r in hit)
    reference = oracles.first_choice_weights(spec, spec.run.t_max)
    keys = sorted(set(reference) | set(first_counts))
    nrules_choice = {k: first_counts[k] / len(hit) if hit else 0.0 for k in keys}
    srules_choice = {k: reference.get(k, 0.0) for k in keys}
    captured = float(oracles.captured_weight(spec, [spec.run.t_max])[0])
    return {
        "first_event_tv": oracles.first_event_tv(firsts, spec),
        "first_choice_nrules": nrules_choice,
        "first_choice_srules": srules_choice,
        "first_choice_tv": oracles.total_variation(
            [nrules_choice[k] for k in keys], [srules_choice[k] for k in keys]
        ),
        "event_fraction_nrules": len(hit) / n,
        "captured_weight_srules": captured,
        "srules_weights_at_horizon": oracles.srules_reference(spec, [spec.run.t_max])[0].outcomes,
    }


def simulate_ensemble(
    spec: ScenarioSpec,
    n_trials: int,
    master_seed: int,
    compare: bool = False,
    workers: int = 1,
    sample_every: int | None = None,
) -> EnsembleResult:
    trials = run_trials(spec, n_trials, master_seed, workers, sample_every)
    return EnsembleResult(aggregate(spec, trials, master_seed, compare), trials)


# file-level operations


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def emit_report(report: EnsembleReport, out_dir, fmt: str = "json") -> Path:
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    text = dumps(report.to_dict()) if fmt == "json" else report.to_csv()
    return _write(Path(out_dir) / f"report.{fmt}", text)


def emit_trial(record: TrialRecord, out_dir, fmt: str = "json") -> Path:
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    text = dumps(record.to_dict()) if fmt == "json" else record.to_csv()
    return _write(Path(out_dir) / f"trial_{record.trial_id}.{fmt}", text)


def emit_trial_log(trials: list[TrialRecord], out_dir) -> Path:
    """One JSON line per trial (events and sequence; series only if recorded)."""
    lines = [json.dumps(r.to_dict(), sort_keys=True, allow_nan=False) for r in trials]
    return _write(Path(out_dir) / "trials.jsonl", "\n".join(lines) + "\n")


def read_trial_log(path) -> list[TrialRecord]:
    with open(path, encoding="utf-8") as fh:
        return [TrialRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def run_trial(scenario_path, seed: int, out_dir=None, fmt: str = "json", sample_every: int = 1) -> TrialRecord:
    spec = load(scenario_path)
    rec = Engine(spec).run(0, seed, record=True, sample_every=sample_every)
    if out_dir is not None:
        emit_trial(rec, out_dir, fmt)
    return rec


def run_ensemble(
    scenario_path,
    n_trials: int,
    master_seed: int,
    out_dir=None,
    compare: bool = False,
    fmt: str = "json",
    workers: int | None = None,
    sample_every: int | None = None,
) -> EnsembleReport:
    spec = load(scenario_path)
    if workers is None:
        workers = os.cpu_count() or 1
    result = simulate_ensemble(spec, n_trials, master_seed, compare, workers, sample_every)
    if out_dir is not None:
        emit_report(result.report, out_dir, fmt)
        emit_trial_log(result.trials, out_dir)
    return result.report
