"""Scenario runner: config parsing, campaign execution, report formats,
exit codes, digest stability."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from byzreg.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SAFETY,
    ConfigError,
    campaign_digest,
    load_scenario,
    main,
    run_scenario,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def write_scenario(tmp_path, obj, name="scenario.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p


BASE = {
    "name": "mini",
    "config": {"n": 4, "t": 0},
    "u0": "init",
    "writer": {"strategy": "correct"},
    "workload": {"writes": ["a"], "reads": {"1": 1}, "read_gap": 1},
    "schedule": {"kind": "seeded", "fair": True},
    "seeds": [0, 1],
    "step_limit": 30000,
    "expected": {"status": "completed"},
}


class TestLoading:
    def test_minimal_scenario_loads(self, tmp_path):
        s = load_scenario(write_scenario(tmp_path, BASE))
        assert s.cfg.n == 4 and s.seeds == [0, 1]

    def test_missing_file_is_config_error(self):
        with pytest.raises(ConfigError):
            load_scenario("/nonexistent/path.json")

    def test_bad_json_is_config_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_scenario(p)

    def test_unknown_strategy_rejected(self, tmp_path):
        obj = dict(BASE)
        obj["readers"] = {"1": {"strategy": "mystery"}}
        with pytest.raises(ConfigError):
            load_scenario(write_scenario(tmp_path, obj))

    def test_byzantine_count_over_t_needs_override(self, tmp_path):
        obj = dict(BASE)
        obj["config"] = {"n": 4, "t": 0}
        obj["readers"] = {"1": {"strategy": "silent"}}
        with pytest.raises(ConfigError):
            load_scenario(write_scenario(tmp_path, obj))
        obj["allow_sub_threshold"] = True
        s = load_scenario(write_scenario(tmp_path, obj))
        assert any("sub-threshold" in w for w in s.warnings)

    def test_sub_threshold_config_warns(self, tmp_path):
        obj = dict(BASE)
        obj["config"] = {"n": 3, "t": 1}
        obj["readers"] = {"3": {"strategy": "silent"}}
        obj["workload"] = {"writes": ["a"], "reads": {"1": 1}}
        s = load_scenario(write_scenario(tmp_path, obj))
        assert any("3t" in w for w in s.warnings)


class TestCampaigns:
    def test_passing_campaign_exit_zero(self, tmp_path):
        path = write_scenario(tmp_path, BASE)
        assert main([str(path)]) == EXIT_OK

    def test_records_format(self, tmp_path, capsys):
        path = write_scenario(tmp_path, BASE)
        assert main([str(path), "--format", "records"]) == EXIT_OK
        out = capsys.readouterr().out.strip().splitlines()
        parsed = [json.loads(line) for line in out]
        assert any("scenario" in rec for rec in parsed)
        assert any("property" in rec for rec in parsed)
        assert any("digest" in rec for rec in parsed)
        head = next(rec for rec in parsed if "scenario" in rec)
        assert head["registers"] == 56

    def test_digest_stable_across_reruns(self, tmp_path):
        path = write_scenario(tmp_path, BASE)
        d1 = campaign_digest(run_scenario(load_scenario(path)))
        d2 = campaign_digest(run_scenario(load_scenario(path)))
        assert d1 == d2

    def test_expected_violation_is_success(self):
        scenario = load_scenario(SCENARIOS / "alternation_n3t1.json")
        campaign = run_scenario(scenario)
        assert campaign.matches_expected()
        assert campaign.exit_code() == EXIT_OK

    def test_unexpected_pass_when_violation_expected_fails(self, tmp_path):
        obj = dict(BASE)
        obj["expected"] = {"status": "completed", "violations": ["genuine_advance"]}
        path = write_scenario(tmp_path, obj)
        assert main([str(path)]) == EXIT_SAFETY

    def test_step_limit_expected(self, tmp_path):
        obj = dict(BASE)
        obj["workload"] = {"writes": ["a"]}
        obj["schedule"] = {"kind": "scripted", "steps": ["w"] * 50, "then": "stop"}
        obj["step_limit"] = 60
        obj["expected"] = {"status": "step_limit"}
        path = write_scenario(tmp_path, obj)
        assert main([str(path)]) == EXIT_OK

    def test_unexpected_step_limit_is_liveness_exit(self, tmp_path):
        from byzreg.cli import EXIT_LIVENESS

        obj = dict(BASE)
        obj["workload"] = {"writes": ["a"]}
        obj["schedule"] = {"kind": "scripted", "steps": ["w"] * 50, "then": "stop"}
        obj["step_limit"] = 60
        path = write_scenario(tmp_path, obj)
        assert main([str(path)]) == EXIT_LIVENESS

    def test_bad_config_exit_two(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{}")
        assert main([str(p)]) == EXIT_CONFIG

    def test_seed_override(self, tmp_path):
        path = write_scenario(tmp_path, BASE)
        assert main([str(path), "--seeds", "1"]) == EXIT_OK

    def test_fail_fast_stops_at_first_mismatch(self, tmp_path):
        obj = dict(BASE)
        obj["seeds"] = [0, 1, 2, 3]
        obj["expected"] = {"status": "step_limit"}  # wrong on purpose
        path = write_scenario(tmp_path, obj)
        assert main([str(path), "--fail-fast"]) != EXIT_OK


class TestScenarioLibrary:
    @pytest.mark.parametrize("name", [p.stem for p in sorted(SCENARIOS.glob("*.json"))])
    def test_library_file_loads(self, name):
        scenario = load_scenario(SCENARIOS / f"{name}.json")
        assert scenario.name

    def test_library_covers_named_attacks(self):
        names = {p.stem for p in SCENARIOS.glob("*.json")}
        assert {"fault_free_n4", "alternation_n3t1", "forged_quorum_n4t2",
                "pseudo_correct", "pseudo_correct_overwrite",
                "liveness_silent_n4t1"} <= names
