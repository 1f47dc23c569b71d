"""Integration patterns whose content functions are evaluated as Datalog (ILP).

Each operation takes CDM messages and pattern configuration (conditions,
queries, strategies) and delegates the content decision to Datalog
evaluation; the runtime module wires these into routes. All operations are
pure except for nothing here: aggregator state lives in the runtime.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .cdm import Message, MessageHeader, MetaFact, merge_meta
from .datalog.ast import (
    Atom,
    DatalogProgram,
    Rule,
    StringConst,
    Variable,
    atom_sort_key,
)
from .datalog.evaluate import evaluate, query

logger = logging.getLogger(__name__)

AGGREGATE_SUFFIX = "-aggregate"
SPLIT_SUFFIX = "-split"


class PatternConfigError(Exception):
    pass


class ExclusivityViolation(Exception):
    """The router contract requires exactly one channel condition to hold."""


class AggregationError(Exception):
    pass


class EnrichmentError(Exception):
    pass


@dataclass(frozen=True)
class Condition:
    """Supporting rules plus the goal query evaluated over a message body."""

    rules: tuple[Rule, ...]
    goal: Atom


@dataclass(frozen=True)
class RoutingCondition:
    per_channel: tuple[tuple[str, Condition], ...]

    def __post_init__(self):
        if not self.per_channel:
            raise PatternConfigError("routing condition needs at least one channel")
        ids = [channel for channel, _ in self.per_channel]
        if len(ids) != len(set(ids)):
            raise PatternConfigError("channel ids must be unique")


@dataclass(frozen=True)
class AggregatorConfig:
    strategy: str = "union"
    completion_size: int | None = None
    completion_time_ms: int | None = None
    correlation_queries: tuple[Atom, ...] = ()

    def __post_init__(self):
        if self.strategy != "union":
            raise PatternConfigError(f"unsupported aggregation strategy {self.strategy!r}")
        size_set = self.completion_size is not None
        time_set = self.completion_time_ms is not None
        if size_set == time_set:
            raise PatternConfigError("exactly one completion condition must be set")
        if size_set and self.completion_size < 1:
            raise PatternConfigError("completionSize must be >= 1")
        if time_set and self.completion_time_ms <= 0:
            raise PatternConfigError("completionTime must be > 0")


@dataclass(frozen=True)
class SplitConfig:
    split_queries: tuple[Atom, ...]

    def __post_init__(self):
        if not self.split_queries:
            raise PatternConfigError("splitter needs at least one query")


@dataclass(frozen=True)
class EnrichData:
    program: DatalogProgram
    meta_facts: frozenset[MetaFact] = frozenset()

    def __post_init__(self):
        for fact in self.program.facts:
            if not fact.is_ground():
                raise PatternConfigError(f"enrich data fact {fact} is not ground")


def _references_meta(rules: tuple[Rule, ...], goals: tuple[Atom, ...]) -> bool:
    for goal in goals:
        if goal.predicate == "meta":
            return True
    for rule in rules:
        for elem in rule.body:
            if isinstance(elem, Atom) and elem.predicate == "meta":
                return True
    return False


def _eval_program(message: Message, rules: tuple[Rule, ...], goals: tuple[Atom, ...]) -> DatalogProgram:
    """Body plus condition rules; meta-facts are mirrored into the body only
    when a rule or goal references the ``meta`` predicate."""
    facts = set(message.body.facts)
    if _references_meta(message.body.rules + rules, goals):
        facts |= {m.as_atom() for m in message.header.meta_facts}
    return DatalogProgram(frozenset(facts), message.body.rules + rules)


def ilp_rc(message: Message, conds: RoutingCondition) -> list[tuple[str, frozenset[Atom]]]:
    """Evaluate every channel condition over the message body.

    Returns the per-channel goal results; routing itself is decided by the
    caller (see content_based_route / help_rc).
    """
    results = []
    for channel_id, cond in conds.per_channel:
        try:
            program = _eval_program(message, cond.rules, (cond.goal,))
            results.append((channel_id, query(program, cond.goal)))
        except Exception as exc:
            raise type(exc)(f"channel {channel_id!r}: {exc}") from exc
    return results


def help_rc(per_channel_facts: list[tuple[str, frozenset[Atom]]]) -> list[tuple[str, bool]]:
    """True exactly for the channels whose evaluation produced facts."""
    return [(channel_id, len(facts) > 0) for channel_id, facts in per_channel_facts]


def content_based_route(message: Message, conds: RoutingCondition) -> str:
    """Return the unique matching channel; anything else violates the contract."""
    flags = help_rc(ilp_rc(message, conds))
    matching = [channel_id for channel_id, ok in flags if ok]
    if len(matching) != 1:
        raise ExclusivityViolation(
            f"exactly one channel must match, got {matching or 'none'}"
        )
    return matching[0]


def message_filter(message: Message, cond: Condition) -> Message | None:
    """Pass the message unchanged when the goal evaluates non-empty, else drop."""
    program = _eval_program(message, cond.rules, (cond.goal,))
    return message if query(program, cond.goal) else None


def rd_ilp(message: Message, rule: Rule) -> list[str]:
    """Recipient list: project receiver keys from the body via a unary rule.

    The runtime resolves the returned keys to channel configurations and
    copies the message per resolved receiver.
    """
    if rule.head.arity != 1:
        raise PatternConfigError(
            f"receiver determination rule must have a unary head, got {rule.head}"
        )
    program = _eval_program(message, (rule,), ())
    results = query(program, Atom(rule.head.predicate, (Variable("x"),)))
    keys = []
    for atom in sorted(results, key=atom_sort_key):
        term = atom.terms[0]
        keys.append(term.value if isinstance(term, StringConst) else str(term))
    return keys


def _rename_expr(expr, suffix: str):
    from .datalog.ast import Aggregate, Arith, BuiltIn

    if isinstance(expr, Aggregate):
        pattern = Atom(expr.pattern.predicate + suffix, expr.pattern.terms)
        return Aggregate(expr.func, pattern)
    if isinstance(expr, Arith):
        return Arith(expr.op, _rename_expr(expr.left, suffix), _rename_expr(expr.right, suffix))
    return expr


def rename_predicates(message: Message, suffix: str) -> Message:
    """Rename every body predicate (and its meta-facts) with the suffix.

    Supporting rules are rewritten through: heads, body atoms and predicate
    references inside min/max built-ins all move to the suffixed names.
    """
    from .datalog.ast import BuiltIn

    facts = frozenset(Atom(a.predicate + suffix, a.terms) for a in message.body.facts)

    def rename_element(elem):
        if isinstance(elem, Atom):
            return Atom(elem.predicate + suffix, elem.terms)
        return BuiltIn(elem.op, _rename_expr(elem.left, suffix), _rename_expr(elem.right, suffix))

    rules = tuple(
        Rule(
            Atom(r.head.predicate + suffix, r.head.terms),
            tuple(rename_element(b) for b in r.body),
        )
        for r in message.body.rules
    )
    meta = frozenset(
        MetaFact(m.predicate + suffix, m.parameter_name, m.position)
        for m in message.header.meta_facts
    )
    return Message(
        MessageHeader(meta, message.header.properties),
        DatalogProgram(facts, rules),
    )


def split_messages(message: Message, split: SplitConfig) -> list[Message]:
    """One leaving message per query with a non-empty result, names unchanged."""
    out = []
    for goal in split.split_queries:
        program = _eval_program(message, (), (goal,))
        result = query(program, goal)
        if not result:
            continue
        predicates = {a.predicate for a in result}
        meta = frozenset(
            m for m in message.header.meta_facts if m.predicate in predicates
        )
        out.append(
            Message(
                MessageHeader(meta, message.header.properties),
                DatalogProgram(frozenset(result)),
            )
        )
    return out


def sc_ilp(message: Message, split: SplitConfig) -> list[Message]:
    """Split condition: each query result leaves as a single message with the
    ``-split`` suffix applied; header properties are copied to every part."""
    return [rename_predicates(m, SPLIT_SUFFIX) for m in split_messages(message, split)]


def crc_ilp(message: Message, cfg: AggregatorConfig) -> tuple[bool, ...]:
    """Correlation key: boolean vector of per-query non-emptiness."""
    key = []
    for goal in cfg.correlation_queries:
        program = _eval_program(message, (), (goal,))
        key.append(len(query(program, goal)) > 0)
    return tuple(key)


def cpc_ilp(collection: list[Message], cfg: AggregatorConfig, elapsed_ms: int) -> bool:
    """Completion condition over a collection: size reached or time elapsed."""
    if cfg.completion_size is not None:
        return len(collection) >= cfg.completion_size
    return elapsed_ms >= cfg.completion_time_ms


def merge_messages(collection: list[Message]) -> Message:
    """Union of bodies and meta-facts; properties merge first-writer-wins."""
    if not collection:
        raise AggregationError("cannot aggregate an empty collection")
    facts: set[Atom] = set()
    rules: list[Rule] = []
    meta: frozenset[MetaFact] = frozenset()
    properties: dict[str, str] = {}
    for msg in collection:
        facts |= msg.body.facts
        for rule in msg.body.rules:
            if rule not in rules:
                rules.append(rule)
        try:
            meta = merge_meta(meta, msg.header.meta_facts, "aggregation")
        except Exception as exc:
            raise AggregationError(str(exc)) from exc
        for key, value in msg.header.properties:
            if key in properties and properties[key] != value:
                logger.warning(
                    "property %r conflicts during aggregation (%r vs %r); keeping first",
                    key, properties[key], value,
                )
                continue
            properties.setdefault(key, value)
    return Message(
        MessageHeader(meta, tuple(properties.items())),
        DatalogProgram(frozenset(facts), tuple(rules)),
    )


def as_ilp(collection: list[Message]) -> Message:
    """Aggregation strategy: union of all bodies, predicates suffixed
    ``-aggregate`` so downstream rules can tell pre from post aggregation."""
    return rename_predicates(merge_messages(collection), AGGREGATE_SUFFIX)


def _head_meta(rules: tuple[Rule, ...], exposed: list[str]) -> frozenset[MetaFact]:
    # parameter names come from the head variables of the mapping rules
    meta = set()
    seen = set()
    for rule in rules:
        if rule.head.predicate not in exposed or rule.head.predicate in seen:
            continue
        seen.add(rule.head.predicate)
        for i, term in enumerate(rule.head.terms):
            name = term.name if isinstance(term, Variable) else f"arg{i + 1}"
            meta.add(MetaFact(rule.head.predicate, name, i + 1))
    return frozenset(meta)


def mt_ilp(message: Message, mapping: tuple[Rule, ...], exposed: list[str]) -> Message:
    """Message translator / content filter: evaluate the mapping over the body
    and keep only the exposed predicates; the result may be empty."""
    program = _eval_program(message, mapping, ())
    derived = evaluate(program)
    exposed_set = set(exposed)
    facts = frozenset(a for a in derived if a.predicate in exposed_set)
    head_meta = _head_meta(mapping, exposed)
    mapped = {m.predicate for m in head_meta}
    carried = frozenset(
        m
        for m in message.header.meta_facts
        if m.predicate in exposed_set and m.predicate not in mapped
    )
    return Message(
        MessageHeader(head_meta | carried, message.header.properties),
        DatalogProgram(facts),
    )


def ep_ilp(message: Message, data: EnrichData) -> Message:
    """Content enricher: union the enrichment program into the message body."""
    try:
        meta = merge_meta(message.header.meta_facts, data.meta_facts, "enrichment")
    except Exception as exc:
        raise EnrichmentError(str(exc)) from exc
    rules = message.body.rules + tuple(
        r for r in data.program.rules if r not in message.body.rules
    )
    return Message(
        MessageHeader(meta, message.header.properties),
        DatalogProgram(message.body.facts | data.program.facts, rules),
    )
