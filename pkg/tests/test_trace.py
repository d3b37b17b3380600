"""Trace files: byte determinism, replay, divergence reporting."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

from conftest import run_bundled, scenario_path
from gridmind import trace as trace_mod
from gridmind.trace import TraceError, compare_lines, parse_trace, replay, write_trace


def _trace_for(tmp_path: Path, name: str, **kwargs) -> Path:
    result = run_bundled(name, **kwargs)
    path = tmp_path / f"{name}.trace"
    write_trace(str(path), result.lines)
    return path


class TestDeterminism:
    def test_two_runs_identical_bytes(self):
        a = run_bundled("hotcoffee", seed=3)
        b = run_bundled("hotcoffee", seed=3)
        assert a.lines == b.lines

    def test_different_seeds_with_noise_differ(self):
        a = run_bundled("hotcoffee", seed=1, noise=True)
        b = run_bundled("hotcoffee", seed=2, noise=True)
        assert a.lines != b.lines

    def test_same_seed_with_noise_identical(self):
        a = run_bundled("hotcoffee", seed=5, noise=True)
        b = run_bundled("hotcoffee", seed=5, noise=True)
        assert a.lines == b.lines


class TestReplay:
    def test_fresh_trace_replays_fully_equal(self, tmp_path):
        path = _trace_for(tmp_path, "knockover")
        report = replay(str(path))
        assert report.equal
        assert report.lines_checked == len(path.read_text().splitlines())

    def test_edited_float_reports_tick_and_field(self, tmp_path):
        path = _trace_for(tmp_path, "knockover")
        lines = path.read_text().splitlines()
        target = next(
            i for i, line in enumerate(lines)
            if '"record":"tick"' in line and '"tick":2' in line
        )
        lines[target] = lines[target].replace(
            '"temporal":0.333333', '"temporal":0.999999'
        )
        path.write_text("\n".join(lines) + "\n")
        report = replay(str(path))
        assert not report.equal
        assert report.divergence_line == target + 1
        assert report.divergence_tick == 2
        assert "weights" in report.divergence_path

    def test_truncated_trace_is_malformed(self, tmp_path):
        path = _trace_for(tmp_path, "knockover")
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")  # drop the summary
        with pytest.raises(TraceError):
            replay(str(path))

    def test_non_json_line_is_malformed(self, tmp_path):
        path = _trace_for(tmp_path, "knockover")
        lines = path.read_text().splitlines()
        lines.insert(1, "not json")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TraceError):
            replay(str(path))

    def test_no_hazard_flag_round_trips_through_replay(self, tmp_path):
        path = _trace_for(tmp_path, "waterleak", hazards=False)
        assert replay(str(path)).equal

    def test_external_trace_replays_via_plan_playback(self, tmp_path):
        from gridmind.agent import run_scenario
        from gridmind.config import EngineConfig
        from gridmind.decide import SubprocessPlanner
        from gridmind.world import load_scenario

        stub = [sys.executable, str(Path(__file__).parent / "stub_planner.py"), "fetch"]
        spath = scenario_path("fetch_close")
        scenario = load_scenario(spath)
        with open(spath, "r", encoding="utf-8") as fh:
            text = fh.read()
        client = SubprocessPlanner(stub, timeout=10.0)
        try:
            result = run_scenario(
                scenario,
                EngineConfig(),
                seed=0,
                planner_factory=lambda runtime: client.plan,
                planner_name="external",
                scenario_text=text,
            )
        finally:
            client.close()
        path = tmp_path / "external.trace"
        write_trace(str(path), result.lines)
        report = replay(str(path))
        assert report.equal


class TestParsing:
    def test_parse_splits_header_ticks_summary(self, tmp_path):
        path = _trace_for(tmp_path, "fetch_close")
        header, ticks, summary = parse_trace(path.read_text().splitlines())
        assert header["record"] == "header"
        assert summary["record"] == "summary"
        assert [t["tick"] for t in ticks] == list(range(len(ticks)))

    def test_compare_lines_length_mismatch(self):
        report = compare_lines(["a", "b"], ["a"])
        assert not report.equal
        assert report.divergence_line == 2

    def test_diff_path_pinpoints_nested_field(self):
        a = {"weights": {"temporal": 0.3}, "top": [["e1", 0.5]]}
        b = {"weights": {"temporal": 0.3}, "top": [["e1", 0.6]]}
        assert trace_mod.diff_path(a, b) == "$.top[0][1]"
