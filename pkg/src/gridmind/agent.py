"""The complete perception-cognition-action loop, one tick at a time.

Each tick: the world steps, an observation is taken, the three perception
pathways run, features bind under the current attention weights, the
dimension graphs are built and extended by the reasoning engines, the
unified picture is aggregated and assessed for hazards, metacognition
monitors and regulates, and working memory is refreshed. The decision
cycle plans between ticks, executes one step per tick, and replans on
failure or on a TriggerReplan directive.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources

from . import canonical, decide, metacog, perceive, reason
from .cognition import UnifiedCognition, aggregate, assess_hazards
from .config import EngineConfig
from .decide import Plan, PlannerError, PlannerQuery, TaskInstruction
from .kb import Atom, Fact, SemanticGraph
from .memory import Episode, LongTermMemory, WorkingMemory, consolidate, ltm_retrieve, retrieve_episodes
from .metacog import Anomaly, Directive, TickState
from .reason import SPATIAL_VOCABULARY, EventSequenceModel, TemporalInconsistencyError
from .rulefmt import (
    parse_composition,
    parse_exclusions,
    parse_hazard_rules,
    parse_lexicon,
    parse_rules,
)
from .world import Action, ActionResult, Scenario, WorldState


def data_root():
    return resources.files("gridmind").joinpath("data")


@dataclass
class RuleData:
    """The engine's declarative knowledge, loaded from the data files."""

    dependency_rules: list = field(default_factory=list)
    concept_rules: list = field(default_factory=list)
    hazard_rules: list = field(default_factory=list)
    integration_rules: list = field(default_factory=list)
    composition: dict[tuple[str, str], str] = field(default_factory=dict)
    exclusions: list[tuple[str, str]] = field(default_factory=list)
    lexicon: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def load_default(cls) -> "RuleData":
        root = data_root()
        return cls(
            dependency_rules=parse_rules(root.joinpath("rules_dependency.txt").read_text()),
            concept_rules=parse_rules(root.joinpath("rules_concept.txt").read_text()),
            hazard_rules=parse_hazard_rules(root.joinpath("rules_hazard.txt").read_text()),
            integration_rules=[],
            composition=parse_composition(root.joinpath("composition.txt").read_text()),
            exclusions=parse_exclusions(root.joinpath("exclusions.txt").read_text()),
            lexicon=parse_lexicon(root.joinpath("affordances.txt").read_text()),
        )


@dataclass
class TickOutcome:
    result: ActionResult | None
    replan: bool
    row: dict[str, object]


class AgentRuntime:
    """Holds all agent state and advances it one tick per action."""

    def __init__(
        self,
        scenario: Scenario,
        config: EngineConfig,
        seed: int = 0,
        noise: bool = False,
        hazards_enabled: bool = True,
        data: RuleData | None = None,
    ) -> None:
        self.scenario = scenario
        self.config = config
        self.hazards_enabled = hazards_enabled
        self.data = data or RuleData.load_default()
        self.world = WorldState(scenario, seed=seed, noise=noise)
        self.wm = WorkingMemory(capacity=config.wm_capacity, decay=config.wm_decay)
        self.ltm = LongTermMemory()
        self.weights = metacog.normalize_weights(
            config.weights(), config.weight_min, config.weight_max
        )
        self.seq_model = EventSequenceModel(order=config.markov_order)
        self.stream: list[str] = []
        self.window: list[perceive.Observation] = []
        self.task: TaskInstruction | None = None
        self.prediction_confidence = 1.0
        self.last_event_prediction: tuple[str, float] | None = None
        self.last_position_predictions: dict[str, tuple[int, int]] = {}
        self.rows: list[dict[str, object]] = []
        self.cycle_anomalies: list[Anomaly] = []
        self.last_hazards: list[Fact] = []
        self.unified: UnifiedCognition | None = None

    # -- plumbing for decide.execute -----------------------------------------

    def ticks_left(self) -> bool:
        return self.world.tick < self.config.max_ticks

    def bootstrap(self) -> TickOutcome:
        """Tick 0: perceive the initial world before any action."""
        return self._pipeline(action=None, result=None)

    def refresh_focus(self) -> None:
        """Pull current facts about task-referenced entities into WM.

        Runs at the start of every decision cycle so planning sees the
        task's objects even when a previous task never attended to them.
        """
        if self.task is None or self.unified is None:
            return
        refs = self._task_refs()
        tick = self.world.tick
        for fact in self.unified.graph.facts():
            if fact.subject in refs or (isinstance(fact.obj, str) and fact.obj in refs):
                self.wm.insert(fact, salience=1.0, tick=tick)

    def tick(self, action: Action) -> TickOutcome:
        _, result = self.world.step(action)
        return self._pipeline(action=action, result=result)

    # -- the pipeline ---------------------------------------------------------

    def _task_refs(self) -> frozenset[str]:
        if self.task is None:
            return frozenset({self.world.agent})
        return self.task.task_refs

    def _pipeline(self, action: Action | None, result: ActionResult | None) -> TickOutcome:
        cfg = self.config
        tick = self.world.tick
        obs = self.world.observe()
        self.window.append(obs)
        if len(self.window) > cfg.window_size:
            self.window = self.window[-cfg.window_size :]

        ft = perceive.extract_temporal(self.window)
        fs = perceive.extract_spatial(obs, self.world.agent)
        fc = perceive.extract_conceptual(obs, self.data.lexicon)
        bound = perceive.attend_and_bind(
            ft,
            fs,
            fc,
            self.weights,
            task_refs=self._task_refs(),
            threshold=cfg.attention_threshold,
            near_distance=cfg.near_distance,
        )
        t_graph, s_graph, c_graph, facts_by_entity = perceive.build_dimension_graphs(
            obs, ft, fs, fc, near_distance=cfg.near_distance
        )
        for fact in self.scenario.facts:
            self._graph_for_relation(fact.relation, t_graph, s_graph, c_graph).insert(
                replace(fact, tick=tick)
            )

        # reasoning over the merged view; conclusions land per dimension
        merged = SemanticGraph("unified")
        for graph in (t_graph, s_graph, c_graph):
            merged.merge(graph)
        dep_derived = reason.apply_dependency_rules(
            merged, self.data.dependency_rules, cfg.chain_max_iterations
        )
        for fact in dep_derived:
            t_graph.insert(fact)
        concept_derived = reason.infer_concepts(
            merged, self.data.concept_rules, cfg.chain_max_iterations
        )
        for fact in concept_derived:
            c_graph.insert(fact)
        spatial_derived = reason.compose_spatial(s_graph, self.data.composition)

        cycle_payload: tuple[str, ...] | None = None
        try:
            reason.temporal_closure(reason.order_from_events(ft.events))
        except TemporalInconsistencyError as exc:
            cycle_payload = exc.cycle

        trajectories = self._predict_trajectories(obs)
        collision_facts = self._collision_facts(trajectories, tick)
        for fact in collision_facts:
            s_graph.insert(fact)

        observed_kinds = tuple(
            e.kind for e in sorted(ft.starting_at(tick), key=lambda e: (e.entity, e.kind))
        )
        self._train_stream(observed_kinds)

        unified = aggregate(
            t_graph,
            s_graph,
            c_graph,
            integration_rules=self.data.integration_rules,
            exclusion_pairs=self.data.exclusions,
            max_iterations=cfg.chain_max_iterations,
        )
        hazards = (
            assess_hazards(unified, self.data.hazard_rules, cfg.chain_max_iterations)
            if self.hazards_enabled
            else []
        )
        self.unified = unified
        self.last_hazards = hazards

        state = TickState(
            tick=tick,
            predicted_event=self.last_event_prediction,
            observed_events=observed_kinds,
            predicted_positions=self.last_position_predictions,
            observed_positions={e: obs.readings[e].position for e in obs.entities()},
            contradictions=unified.contradictions,
            temporal_cycle=cycle_payload,
            action_failure=(
                (action.name if action else "action", result.reason or "failed")
                if result is not None and result.failed
                else None
            ),
            instability=bool(result and "instability" in result.flags),
            action_name=action.name if action else None,
            stale_keys=self._stale_keys(tick),
        )
        anomalies = metacog.monitor(state, cfg)
        directives, self.weights = metacog.regulate(anomalies, self.weights, cfg)
        replan = self._apply_directives(directives, tick)
        self.cycle_anomalies.extend(anomalies)

        new_facts = sorted(
            dep_derived + concept_derived + spatial_derived + collision_facts
            + unified.derived + hazards,
            key=lambda f: f.key(),
        )
        self._refresh_memory(bound, facts_by_entity, new_facts, hazards, tick)
        self._store_predictions(obs, trajectories)

        row = self._trace_row(
            tick, obs, bound, new_facts, anomalies, directives, action, result
        )
        self.rows.append(row)
        return TickOutcome(result=result, replan=replan, row=row)

    def _graph_for_relation(
        self,
        relation: str,
        t_graph: SemanticGraph,
        s_graph: SemanticGraph,
        c_graph: SemanticGraph,
    ) -> SemanticGraph:
        if relation in SPATIAL_VOCABULARY or relation in ("at", "located_in", "Contains", "CollisionRisk"):
            return s_graph
        if relation == "Before":
            return t_graph
        return c_graph

    def _predict_trajectories(self, obs: perceive.Observation) -> dict[str, reason.Trajectory]:
        """Constant-velocity trajectories for entities currently moving."""
        if len(self.window) < 2:
            return {}
        prev = self.window[-2]
        bounds = (self.world.width, self.world.height)
        trajectories: dict[str, reason.Trajectory] = {}
        for entity in obs.entities():
            reading = obs.readings[entity]
            if "moving" not in reading.visible_flags():
                continue
            history = []
            if entity in prev.readings:
                history.append((prev.tick, prev.readings[entity].position))
            history.append((obs.tick, reading.position))
            trajectories[entity] = reason.predict_trajectory(
                entity, history, self.config.trajectory_horizon, bounds
            )
        return trajectories

    def _collision_facts(
        self, trajectories: dict[str, reason.Trajectory], tick: int
    ) -> list[Fact]:
        facts = []
        names = sorted(trajectories)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                report = reason.detect_collision(
                    trajectories[a], trajectories[b], self.config.collision_epsilon
                )
                if report.risks:
                    facts.append(Fact(a, "CollisionRisk", b, 1.0, tick, "derived"))
        return facts

    def _train_stream(self, kinds: tuple[str, ...]) -> None:
        k = self.seq_model.order
        for kind in kinds:
            self.stream.append(kind)
            self.seq_model.kinds.add(kind)
            if len(self.stream) >= k + 1:
                context = tuple(self.stream[-k - 1 : -1])
                slot = self.seq_model.counts.setdefault(context, {})
                slot[kind] = slot.get(kind, 0) + 1

    def _store_predictions(
        self, obs: perceive.Observation, trajectories: dict[str, reason.Trajectory]
    ) -> None:
        self.last_event_prediction = None
        if len(self.stream) >= self.seq_model.order and self.seq_model.kinds:
            prediction = reason.predict_next(self.seq_model, self.stream)
            if not prediction.uninformed:
                kind, prob = prediction.top()
                self.last_event_prediction = (kind, prob * self.prediction_confidence)
        self.last_position_predictions = {}
        next_tick = obs.tick + 1
        for entity, trajectory in sorted(trajectories.items()):
            if trajectory.low_confidence:
                continue
            if next_tick in trajectory.positions:
                self.last_position_predictions[entity] = trajectory.positions[next_tick]

    def _stale_keys(self, tick: int) -> tuple[str, ...]:
        refs = self._task_refs()
        stale = []
        for key, age in self.wm.ages(tick).items():
            if age > self.config.stale_ttl:
                item = self.wm.get(key)
                fact = item.fact if item else None
                if fact and (fact.subject in refs or (isinstance(fact.obj, str) and fact.obj in refs)):
                    stale.append("|".join(key))
        return tuple(stale)

    def _apply_directives(self, directives: list[Directive], tick: int) -> bool:
        replan = False
        for directive in directives:
            if directive.kind == "TriggerReplan":
                replan = True
            elif directive.kind == "DecayPredictionConfidence" and directive.factor:
                self.prediction_confidence *= directive.factor
            elif directive.kind == "RetrieveFromLTM" and directive.pattern:
                relation, subject, obj = directive.pattern
                pattern = Atom(relation=relation, subject=subject, obj=obj)
                for fact in ltm_retrieve(self.ltm, pattern, self.config.ltm_retrieve_k):
                    retrieved = replace(fact, origin="retrieved")
                    self.wm.insert(retrieved, salience=fact.confidence, tick=tick)
        return replan

    def _refresh_memory(
        self,
        bound: list[perceive.BoundObject],
        facts_by_entity: dict[str, list[Fact]],
        new_facts: list[Fact],
        hazards: list[Fact],
        tick: int,
    ) -> None:
        for bo in bound:
            if bo.below_threshold:
                continue
            salience = min(1.0, max(0.0, bo.score))
            for fact in facts_by_entity.get(bo.entity, []):
                self.wm.insert(fact, salience=salience, tick=tick)
        hazard_keys = {f.key() for f in hazards}
        for fact in new_facts:
            if fact.key() in hazard_keys:
                continue
            self.wm.insert(fact, salience=min(1.0, fact.confidence), tick=tick)
        for fact in hazards:
            self.wm.insert(fact, salience=1.0, tick=tick)

    def _trace_row(
        self,
        tick: int,
        obs: perceive.Observation,
        bound: list[perceive.BoundObject],
        new_facts: list[Fact],
        anomalies: list[Anomaly],
        directives: list[Directive],
        action: Action | None,
        result: ActionResult | None,
    ) -> dict[str, object]:
        import hashlib

        digest = hashlib.sha256(
            canonical.dumps(obs.digest_payload()).encode("utf-8")
        ).hexdigest()[:16]
        return {
            "record": "tick",
            "tick": tick,
            "obs": digest,
            "bound": len(bound),
            "top": [[b.entity, round(b.score, 6)] for b in bound[:5]],
            "new_facts": [f.to_array() for f in new_facts],
            "anomalies": [a.to_record() for a in anomalies],
            "directives": [d.to_record() for d in directives],
            "weights": {
                "temporal": round(self.weights["temporal"], 6),
                "spatial": round(self.weights["spatial"], 6),
                "conceptual": round(self.weights["conceptual"], 6),
            },
            "action": action.to_record() if action else None,
            "result": result.to_record() if result else None,
            "wm": len(self.wm),
        }


@dataclass
class TaskRun:
    task: TaskInstruction
    outcome: str
    episodes: list[Episode]


@dataclass
class RunResult:
    outcome: str  # success | aborted
    exit_code: int
    lines: list[str]
    task_runs: list[TaskRun]
    runtime: AgentRuntime


def run_task(runtime: AgentRuntime, task: TaskInstruction, planner) -> TaskRun:
    """Decision cycles for one task, bounded by the replan limit."""
    cfg = runtime.config
    runtime.task = task
    episodes: list[Episode] = []
    outcome = "aborted"
    for cycle in range(cfg.replan_limit):
        last_cycle = cycle == cfg.replan_limit - 1
        runtime.cycle_anomalies = []
        runtime.refresh_focus()
        start_tick = runtime.world.tick
        query = decide.formulate_query(
            runtime.wm,
            task,
            runtime.last_hazards,
            retrieve_episodes(runtime.ltm, task.kind, cfg.episode_k),
        )
        plan_records: list[dict[str, object]] = []
        results: list[ActionResult] = []
        try:
            plan = planner(query)
            plan_records = plan.to_records()
            results, status = decide.execute(plan, runtime, task)
        except PlannerError as exc:
            anomaly = Anomaly(
                kind="ActionFailure",
                tick=runtime.world.tick,
                payload=(exc.code, exc.detail[:120]),
                severity=cfg.severity_action_failure,
            )
            directives, runtime.weights = metacog.regulate(
                [anomaly], runtime.weights, cfg
            )
            runtime.cycle_anomalies.append(anomaly)
            status = "planner_failed"
        if status == "success":
            cycle_outcome = "success"
        elif status == "out_of_ticks" or last_cycle:
            cycle_outcome = "aborted"
        else:
            cycle_outcome = "failure"
        episode = Episode(
            task_kind=task.kind,
            task_params=dict(task.params),
            plan_steps=plan_records,
            results=[r.to_record() for r in results],
            anomalies=[a.to_record() for a in runtime.cycle_anomalies],
            outcome=cycle_outcome,
            start_tick=start_tick,
            end_tick=runtime.world.tick,
        )
        consolidate(runtime.ltm, runtime.wm, episode, cfg.consolidate_threshold)
        episodes.append(episode)
        if cycle_outcome in ("success", "aborted"):
            outcome = cycle_outcome
            break
    return TaskRun(task=task, outcome=outcome, episodes=episodes)


def run_scenario(
    scenario: Scenario,
    config: EngineConfig,
    seed: int,
    planner_factory,
    noise: bool = False,
    hazards_enabled: bool = True,
    planner_name: str = "scripted",
    scenario_text: str | None = None,
    data: RuleData | None = None,
    ltm_lines: list[str] | None = None,
) -> RunResult:
    """Execute every task in the scenario and assemble the full trace."""
    import hashlib
    import json

    # round-trip the config through its trace echo so a replay reconstructs
    # bit-identical parameters (the echo renders floats at six decimals)
    config = EngineConfig().with_overrides(json.loads(canonical.dumps(config.to_echo())))
    tasks = [decide.interpret_task(spec, scenario) for spec in scenario.tasks]
    runtime = AgentRuntime(
        scenario,
        config,
        seed=seed,
        noise=noise,
        hazards_enabled=hazards_enabled,
        data=data,
    )
    if ltm_lines:
        from .kb import graph_from_lines

        runtime.ltm.semantic = graph_from_lines(ltm_lines, "unified")
    planner = planner_factory(runtime)
    header: dict[str, object] = {
        "record": "header",
        "version": 1,
        "scenario": scenario.path or "<inline>",
        "scenario_sha256": hashlib.sha256(
            (scenario_text or "").encode("utf-8")
        ).hexdigest(),
        "seed": seed,
        "noise": noise,
        "hazards_enabled": hazards_enabled,
        "planner": planner_name,
        "config": config.to_echo(),
    }
    lines = [canonical.dumps(header)]
    if tasks:
        runtime.task = tasks[0]
    runtime.bootstrap()
    task_runs: list[TaskRun] = []
    overall = "success"
    for task in tasks:
        task_run = run_task(runtime, task, planner)
        task_runs.append(task_run)
        if task_run.outcome != "success":
            overall = "aborted"
            break
    for row in runtime.rows:
        lines.append(canonical.dumps(row))
    final_goal = all(t.task.goal_satisfied(runtime.world) for t in task_runs) if task_runs else None
    summary: dict[str, object] = {
        "record": "summary",
        "outcome": overall,
        "ticks": runtime.world.tick,
        "goal": final_goal,
        "episodes": [e.summary() for run in task_runs for e in run.episodes],
    }
    lines.append(canonical.dumps(summary))
    return RunResult(
        outcome=overall,
        exit_code=0 if overall == "success" else 2,
        lines=lines,
        task_runs=task_runs,
        runtime=runtime,
    )


def scripted_planner_factory(runtime: AgentRuntime):
    def plan(query: PlannerQuery) -> Plan:
        return decide.plan_scripted(query)

    return plan
