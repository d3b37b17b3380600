"""gridmind: a deterministic semantic cognition engine for an embodied
agent in a simulated household gridworld.

Layers: perception (parallel temporal/spatial/conceptual pathways with
attention binding), reasoning (closure, prediction, composition, collision,
concept inference), cognition (graph aggregation, contradictions, hazards),
metacognition (monitoring and regulation), memory (working + long-term),
and a semantic-driven decision loop with a scripted or external planner.
"""

from .agent import AgentRuntime, RuleData, run_scenario, scripted_planner_factory
from .config import EngineConfig
from .kb import Atom, Fact, Rule, SemanticGraph, forward_chain, query
from .memory import LongTermMemory, WorkingMemory
from .world import Action, Scenario, WorldState, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AgentRuntime",
    "Atom",
    "EngineConfig",
    "Fact",
    "LongTermMemory",
    "Rule",
    "RuleData",
    "Scenario",
    "SemanticGraph",
    "WorkingMemory",
    "WorldState",
    "forward_chain",
    "load_scenario",
    "query",
    "run_scenario",
    "scripted_planner_factory",
    "__version__",
]
