"""Semantic cognition: aggregate the dimension graphs into one picture.

The unified graph is the identity-keyed union (max-merge) of the temporal,
spatial, and conceptual graphs, extended by integration rules chained to a
fixpoint. Cross-dimension correspondence is tracked per entity, spatial
contradictions are detected (never deleted), and hazard rules spanning at
least two dimensions produce hazard facts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .kb import Fact, Rule, SemanticGraph, ValidationError, forward_chain


@dataclass
class UnifiedCognition:
    graph: SemanticGraph
    correspondence: dict[str, frozenset[str]] = field(default_factory=dict)
    contradictions: list[tuple[Fact, Fact]] = field(default_factory=list)
    hazards: list[Fact] = field(default_factory=list)
    derived: list[Fact] = field(default_factory=list)


def aggregate(
    t: SemanticGraph,
    s: SemanticGraph,
    c: SemanticGraph,
    integration_rules: list[Rule] | None = None,
    exclusion_pairs: list[tuple[str, str]] | None = None,
    max_iterations: int = 100,
) -> UnifiedCognition:
    """Union the three dimension graphs and chain integration rules."""
    expected = (("temporal", t), ("spatial", s), ("conceptual", c))
    for dimension, graph in expected:
        if graph.dimension != dimension:
            raise ValidationError(
                f"aggregate expects a {dimension} graph, got {graph.dimension}"
            )
    unified = SemanticGraph("unified")
    correspondence: dict[str, set[str]] = {}
    for tag, graph in (("T", t), ("S", s), ("C", c)):
        unified.merge(graph)
        for entity in graph.entities:
            correspondence.setdefault(entity, set()).add(tag)
    derived: list[Fact] = []
    if integration_rules:
        derived = forward_chain(unified, integration_rules, max_iterations).derived
    contradictions = detect_contradictions(unified, exclusion_pairs or [])
    return UnifiedCognition(
        graph=unified,
        correspondence={e: frozenset(tags) for e, tags in sorted(correspondence.items())},
        contradictions=contradictions,
        derived=derived,
    )


def detect_contradictions(
    graph: SemanticGraph, exclusion_pairs: list[tuple[str, str]]
) -> list[tuple[Fact, Fact]]:
    """Pairs of co-existing facts that cannot both hold.

    Two patterns, both driven by the exclusion-pair config:

    * opposite relations on the same (subject, object), e.g. both
      LeftOf(a, b) and RightOf(a, b),
    * an oriented relation asserted in both directions, e.g. LeftOf(a, b)
      together with LeftOf(b, a) (antisymmetry violation).

    Detection never deletes anything; the pairs are reported in
    deterministic (key, key) order.
    """
    opposites: set[frozenset[str]] = {frozenset(pair) for pair in exclusion_pairs}
    oriented = {r for pair in exclusion_pairs for r in pair}
    facts = graph.facts()
    found: dict[tuple, tuple[Fact, Fact]] = {}
    index = {f.key(): f for f in facts}
    for fact in facts:
        if not isinstance(fact.obj, str):
            continue
        for other in facts:
            if not isinstance(other.obj, str) or fact.key() >= other.key():
                continue
            same_pair = fact.subject == other.subject and fact.obj == other.obj
            if same_pair and frozenset((fact.relation, other.relation)) in opposites:
                found[(fact.key(), other.key())] = (fact, other)
        if fact.relation in oriented and fact.subject != fact.obj:
            reverse = index.get((fact.obj, fact.relation, fact.subject))
            if reverse is not None and fact.key() < reverse.key():
                found[(fact.key(), reverse.key())] = (fact, reverse)
    return [found[k] for k in sorted(found)]


def assess_hazards(
    unified: UnifiedCognition, hazard_rules: list[Rule], max_iterations: int = 100
) -> list[Fact]:
    """Chain hazard rules over the unified graph; returns hazard facts.

    Rules must span at least two cognitive dimensions (the rule loader
    enforces this; it is re-checked here so hand-built rules cannot slip
    through).
    """
    for rule in hazard_rules:
        if len(rule.dimensions()) < 2:
            raise ValidationError(
                f"hazard rule {rule.name} touches only {sorted(rule.dimensions())}"
            )
    derived = forward_chain(unified.graph, hazard_rules, max_iterations).derived
    hazards = [f for f in derived if f.relation == "hazard"]
    unified.hazards.extend(hazards)
    return hazards
