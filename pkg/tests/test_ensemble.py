import json
from collections import Counter

import pytest

from nrules import ensemble
from nrules.oracles import sequence_key
from nrules.records import EnsembleReport, TrialRecord, dumps

from conftest import scenario_path


def test_single_trial_report_matches_trial(load_scenario):
    spec = load_scenario("fig2_tree")
    res = ensemble.simulate_ensemble(spec, 1, 42)
    rec = ensemble.run_trial(scenario_path("fig2_tree"), 42)
    assert res.report.outcomes == {sequence_key(rec.sequence): 1}
    assert res.report.terminals == {rec.terminal: 1}
    assert [e.t_sc for e in res.trials[0].events] == [e.t_sc for e in rec.events]


def test_counts_and_six_outcomes(load_scenario):
    spec = load_scenario("fig2_tree")
    report = ensemble.simulate_ensemble(spec, 600, 7).report
    assert sum(report.outcomes.values()) == 600 == sum(report.terminals.values())
    assert len(json.loads(dumps(report.to_dict()))["outcomes"]) == 6
    assert sum(report.probabilities().values()) == pytest.approx(1.0)
    for h in report.histograms:
        assert len(h["counts"]) == ensemble.HIST_BINS and len(h["edges"]) == ensemble.HIST_BINS + 1


def test_parallel_equals_serial(load_scenario):
    spec = load_scenario("fig1_parallel")
    a = ensemble.simulate_ensemble(spec, 64, 5, compare=True, workers=1)
    b = ensemble.simulate_ensemble(spec, 64, 5, compare=True, workers=3)
    assert dumps(a.report.to_dict()) == dumps(b.report.to_dict())
    assert [t.to_dict() for t in a.trials] == [t.to_dict() for t in b.trials]


def test_blocks_cover_range():
    assert ensemble._blocks(10, 3) == [(0, 4), (4, 8), (8, 10)]
    assert ensemble._blocks(2, 5) == [(0, 1), (1, 2)]


def test_files_round_trip_and_retally(tmp_path):
    report = ensemble.run_ensemble(scenario_path("two_detector"), 50, 3, out_dir=tmp_path, compare=True, workers=1)
    loaded = EnsembleReport.from_dict(json.loads((tmp_path / "report.json").read_text()))
    assert loaded == report
    trials = ensemble.read_trial_log(tmp_path / "trials.jsonl")
    assert len(trials) == 50
    assert Counter(sequence_key(t.sequence) for t in trials) == Counter(report.outcomes)
    assert Counter(t.terminal for t in trials) == Counter(report.terminals)
    assert [t.seed for t in trials] == [3 ^ i for i in range(50)]


def test_comparison_block(load_scenario):
    spec = load_scenario("two_detector")
    report = ensemble.simulate_ensemble(spec, 200, 1, compare=True).report
    comp = report.comparison
    assert set(comp["first_choice_srules"]) == {"D1", "D2"}
    assert comp["first_choice_srules"]["D1"] == pytest.approx(0.36, abs=1e-9)
    assert 0 <= comp["first_event_tv"] <= 1 and 0 <= comp["first_choice_tv"] <= 1


def test_trial_record_round_trip(load_scenario):
    rec = ensemble.run_trial(scenario_path("counter_chain"), 8)
    again = TrialRecord.from_dict(json.loads(dumps(rec.to_dict())))
    assert again.to_dict() == rec.to_dict()


def test_csv_formats(tmp_path):
    rec = ensemble.run_trial(scenario_path("detector"), 1, out_dir=tmp_path, fmt="csv", sample_every=100)
    lines = (tmp_path / "trial_0.csv").read_text().splitlines()
    assert lines[0] == "t,comp_label,sq_modulus,J,status"
    assert sum(line.startswith("EVENT,") for line in lines) == len(rec.events)
    quiet = next(
        ensemble.run_trial(scenario_path("detector"), s, sample_every=100)
        for s in range(100)
        if not ensemble.run_trial(scenario_path("detector"), s, sample_every=400).events
    )
    text = quiet.to_csv()
    assert "EVENT" not in text and len(text.splitlines()) > 1
    report = ensemble.simulate_ensemble(ensemble.load(scenario_path("detector")), 20, 0, compare=True).report
    path = ensemble.emit_report(report, tmp_path, "csv")
    rows = path.read_text().splitlines()
    assert rows[0] == "kind,key,a,b,c"
    assert any(r.startswith("OUTCOME,") for r in rows) and any(r.startswith("COMPARE,") for r in rows)


def test_unwritable_path_raises(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    report = ensemble.simulate_ensemble(ensemble.load(scenario_path("two_level")), 2, 0).report
    with pytest.raises(OSError):
        ensemble.emit_report(report, blocker / "sub", "json")


def test_bad_arguments(load_scenario):
    with pytest.raises(ValueError):
        ensemble.run_trials(load_scenario("two_level"), 0, 1)
    report = ensemble.simulate_ensemble(load_scenario("two_level"), 1, 0).report
    with pytest.raises(ValueError):
        ensemble.emit_report(report, "/tmp", "xml")
