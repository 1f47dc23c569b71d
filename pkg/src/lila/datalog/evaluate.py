"""Naive-recursive bottom-up evaluation of positive Datalog with built-ins.

All rules are applied to the current fact set until no new facts can be
derived. The dialect is positive, so the fixpoint is a least model; the only
source of non-termination is arithmetic in assignment built-ins, which is
guarded by an iteration cap.
"""

from __future__ import annotations

from typing import Iterable, Optional

from .ast import (
    ASSIGN_OP,
    STRING_OPS,
    Aggregate,
    Atom,
    BuiltIn,
    DatalogProgram,
    Expr,
    NumberConst,
    Rule,
    StringConst,
    Term,
    Variable,
)

DEFAULT_MAX_ITERATIONS = 10_000

Subst = dict[str, Term]
FactIndex = dict[str, list[Atom]]


class EvaluationError(Exception):
    pass


class _RowFail(Exception):
    """Internal: the current substitution does not satisfy a built-in."""


def _index(facts: Iterable[Atom]) -> FactIndex:
    index: FactIndex = {}
    for fact in facts:
        index.setdefault(fact.predicate, []).append(fact)
    return index


def _match_atom(pattern: Atom, fact: Atom, subst: Subst) -> Optional[Subst]:
    if pattern.arity != fact.arity:
        return None
    out = subst
    copied = False
    for p, f in zip(pattern.terms, fact.terms):
        if isinstance(p, Variable):
            bound = out.get(p.name)
            if bound is None:
                if not copied:
                    out = dict(out)
                    copied = True
                out[p.name] = f
            elif bound != f:
                return None
        elif p != f:
            return None
    return out if copied else dict(out)


def _const_value(term: Term):
    if isinstance(term, NumberConst):
        return term.value
    if isinstance(term, StringConst):
        return term.value
    raise EvaluationError(f"expected constant, got variable {term}")


def _to_term(value) -> Term:
    if isinstance(value, (int, float)):
        return NumberConst(value)
    return StringConst(value)


def _int_div(a, b):
    # integer division truncates toward zero (minute sampling relies on it)
    q = a // b
    if q < 0 and q * b != a:
        q += 1
    return q


def _eval_aggregate(agg: Aggregate, subst: Subst, index: FactIndex):
    terms = []
    collect_pos = None
    for i, t in enumerate(agg.pattern.terms):
        if isinstance(t, Variable) and t.name in subst:
            terms.append(subst[t.name])
        elif isinstance(t, Variable):
            if collect_pos is not None:
                raise EvaluationError(
                    f"{agg.func} pattern {agg.pattern} has more than one free variable"
                )
            collect_pos = i
            terms.append(t)
        else:
            terms.append(t)
    if collect_pos is None:
        raise EvaluationError(f"{agg.func} pattern {agg.pattern} has no free variable")
    values = []
    for fact in index.get(agg.pattern.predicate, ()):
        if _match_atom(Atom(agg.pattern.predicate, tuple(terms)), fact, subst) is not None:
            values.append(_const_value(fact.terms[collect_pos]))
    if not values:
        raise _RowFail()
    return max(values) if agg.func == "max" else min(values)


def _eval_expr(expr: Expr, subst: Subst, index: FactIndex, rule: Rule):
    if isinstance(expr, Variable):
        bound = subst.get(expr.name)
        if bound is None:
            raise EvaluationError(
                f"unbound variable '{expr.name}' in built-in of rule {rule}"
            )
        return _const_value(bound)
    if isinstance(expr, (NumberConst, StringConst)):
        return _const_value(expr)
    if isinstance(expr, Aggregate):
        return _eval_aggregate(expr, subst, index)
    left = _eval_expr(expr.left, subst, index, rule)
    right = _eval_expr(expr.right, subst, index, rule)
    if not isinstance(left, (int, float)) or not isinstance(right, (int, float)):
        raise EvaluationError(f"non-numeric operand in arithmetic of rule {rule}")
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    if right == 0:
        raise EvaluationError(f"division by zero in rule {rule}")
    if isinstance(left, int) and isinstance(right, int):
        return _int_div(left, right)
    return left / right


def _numeric_pair(left, right, op: str, rule: Rule):
    if isinstance(left, (int, float)) and isinstance(right, (int, float)):
        return left, right
    raise EvaluationError(f"comparison '{op}' requires numeric operands in rule {rule}")


def _eval_builtin(builtin: BuiltIn, subst: Subst, index: FactIndex, rule: Rule) -> Optional[Subst]:
    op = builtin.op
    try:
        if op in STRING_OPS:
            left = _eval_expr(builtin.left, subst, index, rule)
            right = _eval_expr(builtin.right, subst, index, rule)
            if op == "equals":
                ok = left == right
            else:
                l, r = str(left), str(right)
                ok = {"contains": r in l, "startswith": l.startswith(r), "endswith": l.endswith(r)}[op]
            return subst if ok else None

        if op in ("=", ASSIGN_OP):
            left_var = builtin.left if isinstance(builtin.left, Variable) else None
            right_var = builtin.right if isinstance(builtin.right, Variable) else None
            left_unbound = left_var is not None and left_var.name not in subst
            right_unbound = right_var is not None and right_var.name not in subst
            if op == "=" and right_unbound and not left_unbound:
                value = _eval_expr(builtin.left, subst, index, rule)
                out = dict(subst)
                out[right_var.name] = _to_term(value)
                return out
            if left_unbound:
                value = _eval_expr(builtin.right, subst, index, rule)
                out = dict(subst)
                out[left_var.name] = _to_term(value)
                return out
            # both sides bound (or expressions): comparison semantics
            left = _eval_expr(builtin.left, subst, index, rule)
            right = _eval_expr(builtin.right, subst, index, rule)
            return subst if left == right else None

        left = _eval_expr(builtin.left, subst, index, rule)
        right = _eval_expr(builtin.right, subst, index, rule)
        left, right = _numeric_pair(left, right, op, rule)
        ok = {"<": left < right, ">": left > right, "<=": left <= right, ">=": left >= right}[op]
        return subst if ok else None
    except _RowFail:
        return None


def _ground_head(head: Atom, subst: Subst, rule: Rule) -> Atom:
    terms = []
    for t in head.terms:
        if isinstance(t, Variable):
            bound = subst.get(t.name)
            if bound is None:
                raise EvaluationError(
                    f"head variable '{t.name}' unbound when deriving {head} in rule {rule}"
                )
            terms.append(bound)
        else:
            terms.append(t)
    return Atom(head.predicate, tuple(terms))


def _apply_rule(rule: Rule, index: FactIndex) -> set[Atom]:
    substs: list[Subst] = [{}]
    for elem in rule.body:
        if isinstance(elem, Atom):
            next_substs = []
            candidates = index.get(elem.predicate, ())
            for s in substs:
                for fact in candidates:
                    matched = _match_atom(elem, fact, s)
                    if matched is not None:
                        next_substs.append(matched)
            substs = next_substs
        else:
            substs = [s2 for s in substs if (s2 := _eval_builtin(elem, s, index, rule)) is not None]
        if not substs:
            return set()
    return {_ground_head(rule.head, s, rule) for s in substs}


def evaluate(
    program: DatalogProgram, max_iterations: int = DEFAULT_MAX_ITERATIONS
) -> frozenset[Atom]:
    """Compute the least fixpoint and return the full fact set (EDB and IDB)."""
    facts = set(program.facts)
    if not program.rules:
        return frozenset(facts)
    iterations = 0
    last_productive: Rule | None = None
    while True:
        iterations += 1
        if iterations > max_iterations:
            raise EvaluationError(
                f"evaluation did not reach a fixpoint after {max_iterations} iterations; "
                f"last productive rule: {last_productive}"
            )
        index = _index(facts)
        new_facts: set[Atom] = set()
        for rule in program.rules:
            derived = _apply_rule(rule, index)
            fresh = derived - facts
            if fresh:
                new_facts |= fresh
                last_productive = rule
        if not new_facts:
            return frozenset(facts)
        facts |= new_facts


def query(
    program: DatalogProgram, goal: Atom, max_iterations: int = DEFAULT_MAX_ITERATIONS
) -> frozenset[Atom]:
    """Evaluate the program and return the facts unifying with ``goal``.

    Constants in the goal select; variables project (repeated variables must
    match equal values).
    """
    facts = evaluate(program, max_iterations)
    return frozenset(
        f
        for f in facts
        if f.predicate == goal.predicate and _match_atom(goal, f, {}) is not None
    )
