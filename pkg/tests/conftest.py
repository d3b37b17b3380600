from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridmind.agent import RuleData, data_root, run_scenario, scripted_planner_factory
from gridmind.config import EngineConfig
from gridmind.world import load_scenario


def scenario_path(name: str) -> str:
    return str(data_root().joinpath("scenarios", f"{name}.scn"))


def run_bundled(name: str, seed: int = 0, hazards: bool = True, noise: bool = False,
                config: EngineConfig | None = None):
    path = scenario_path(name)
    scenario = load_scenario(path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    cfg = config or EngineConfig()
    if scenario.config_overrides:
        cfg = cfg.with_overrides(dict(scenario.config_overrides))
    return run_scenario(
        scenario,
        cfg,
        seed=seed,
        planner_factory=scripted_planner_factory,
        noise=noise,
        hazards_enabled=hazards,
        scenario_text=text,
    )


BUNDLED = [
    "arrange",
    "crossing",
    "driving_salience",
    "fetch_close",
    "hotcoffee",
    "knockover",
    "pickup_fail",
    "teleport_fault",
    "vase_room",
    "waterleak",
]


@pytest.fixture(scope="session")
def rule_data() -> RuleData:
    return RuleData.load_default()
