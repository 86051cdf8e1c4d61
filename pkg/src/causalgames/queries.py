"""Interventional queries: a small formula DSL and the staged evaluator.

A query quantifies over rational outcomes (``forall ne`` / ``exists ne``) or
draws them (``sampled``) and evaluates a boolean formula — or a bare
arithmetic expression — over probabilities and expected utilities of the
final joint distribution.

Evaluation walks the stages of a visibility decomposition.  Each stage
applies its primitives to the running game, solves the *stage-visible* game
(every agent treated as rational in it; earlier stage fixes are realized-play
bookkeeping, not solve constraints), and pins the stage's agents to their
rules from a rational outcome.  A direct fix of a decision-rule node
overrides the owner's realized rule only when some agent at the same or a
later stage can observe it: an intervention on a rule that nobody will ever
see cannot re-bind a policy that has already been resolved.  Object-level
fixes of decisions always bind.  The final joint combines the last game
state with the realized rules.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace as dc_replace
from typing import Mapping, Sequence

from .equilibrium import pure_nash, behavioral_nash_small
from .errors import QueryError, SolverError
from .graphs import BEST_RESPONSE, RationalityRelation
from .interventions import (
    AddVariable,
    Decomposition,
    FixMechanism,
    FixObject,
    RemoveVariable,
    apply_all,
    apply_primitive,
    decompose,
)
from .model import (
    DECISION,
    CausalGame,
    PolicyProfile,
    TabularCPD,
    cpds_equal,
    expected_utility_from_joint,
    induced_joint,
)


# -- query AST -----------------------------------------------------------------


@dataclass(frozen=True)
class Prob:
    event: tuple  # ((variable, value-token), ...)


@dataclass(frozen=True)
class Utility:
    agent: object  # int or "total"


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Comparison:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    body: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Query:
    mode: str  # "forall" | "exists" | "sampled"
    body: object


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<sym><=|>=|[<>=:+\-*,()\[\]]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].lstrip()
            if not rest:
                break
            raise QueryError(
                f"parse error at column {pos + 1}: unexpected {rest[0]!r}"
            )
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("sym", m.group("sym"), m.start("sym")))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser for the query grammar.

    query  := mode ':' formula
    mode   := 'forall' 'ne' | 'exists' 'ne' | 'sampled'
    formula:= disjunction | expr            (bare expr allowed at top level)
    atom   := expr cmp expr
    expr   := term (('+'|'-') term)*
    term   := factor ('*' factor)*
    factor := '-' factor | 'P' '(' event ')' | 'E' '[' agent ']' | number
    event  := NAME '=' value (',' NAME '=' value)*
    """

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, value, pos = self.peek()
        shown = value if kind != "eof" else "end of query"
        raise QueryError(
            f"parse error at column {pos + 1}: expected {expected}, got {shown!r}"
        )

    def expect(self, kind, value=None):
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            self.fail(value or kind)
        return self.next()

    def parse(self) -> Query:
        kind, value, _ = self.peek()
        if kind == "name" and value in ("forall", "exists"):
            self.next()
            self.expect("name", "ne")
            mode = value
        elif kind == "name" and value == "sampled":
            self.next()
            mode = "sampled"
        else:
            self.fail("'forall ne', 'exists ne', or 'sampled'")
        self.expect("sym", ":")
        body = self.formula(top=True)
        if self.peek()[0] != "eof":
            self.fail("end of query")
        return Query(mode, body)

    def formula(self, top=False):
        node = self.conjunction()
        while self.peek()[:2] == ("name", "or"):
            self.next()
            right = self.conjunction()
            self._require_boolean(node)
            self._require_boolean(right)
            node = Or(node, right)
        if not top:
            self._require_boolean(node)
        return node

    def conjunction(self):
        node = self.negation()
        while self.peek()[:2] == ("name", "and"):
            self.next()
            right = self.negation()
            self._require_boolean(node)
            self._require_boolean(right)
            node = And(node, right)
        return node

    def negation(self):
        if self.peek()[:2] == ("name", "not"):
            self.next()
            body = self.negation()
            self._require_boolean(body)
            return Not(body)
        return self.atom()

    def _require_boolean(self, node):
        if not isinstance(node, (Comparison, Not, And, Or)):
            raise QueryError(
                "type mismatch: expected a comparison, got a bare expression"
            )

    def atom(self):
        left = self.expr()
        kind, value, _ = self.peek()
        if kind == "sym" and value in ("<", "<=", "=", ">=", ">"):
            self.next()
            right = self.expr()
            return Comparison(value, left, right)
        return left

    def expr(self):
        node = self.term()
        while self.peek()[0] == "sym" and self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[:2] == ("sym", "*"):
            self.next()
            node = BinOp("*", node, self.factor())
        return node

    def factor(self):
        kind, value, pos = self.peek()
        if kind == "sym" and value == "-":
            self.next()
            inner = self.factor()
            return BinOp("-", Const(0.0), inner)
        if kind == "num":
            self.next()
            return Const(float(value))
        if kind == "name" and value == "P":
            self.next()
            self.expect("sym", "(")
            event = self.event()
            self.expect("sym", ")")
            return Prob(event)
        if kind == "name" and value == "E":
            self.next()
            self.expect("sym", "[")
            k, v, _ = self.peek()
            if k == "name" and v == "total":
                self.next()
                agent = "total"
            elif k == "num" and float(v) == int(float(v)):
                self.next()
                agent = int(float(v))
            else:
                self.fail("an agent index or 'total'")
            self.expect("sym", "]")
            return Utility(agent)
        self.fail("a probability, expected utility, or number")

    def event(self):
        assignments = []
        while True:
            name = self.expect("name")[1]
            self.expect("sym", "=")
            kind, value, _ = self.peek()
            if kind not in ("name", "num"):
                self.fail("a domain value")
            self.next()
            assignments.append((name, value))
            if self.peek()[:2] == ("sym", ","):
                self.next()
                continue
            return tuple(assignments)


def parse_query(text: str) -> Query:
    """Parse a query string into its AST; errors carry a column position."""
    return _Parser(text).parse()


# -- evaluation ------------------------------------------------------------------


def _resolve_value(game: CausalGame, variable: str, token: str):
    if not game.has_variable(variable):
        raise QueryError(f"query references unknown variable {variable!r}")
    for v in game.domain(variable):
        if str(v) == token:
            return v
    raise QueryError(
        f"value {token!r} not in the domain of {variable!r}"
    )


def _eval_expr(node, game, joint):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Prob):
        assignment = {
            var: _resolve_value(game, var, tok) for var, tok in node.event
        }
        return joint.prob(assignment)
    if isinstance(node, Utility):
        if node.agent == "total":
            return sum(
                expected_utility_from_joint(game, joint, a)
                for a in range(1, game.n_agents + 1)
            )
        if not (1 <= node.agent <= game.n_agents):
            raise QueryError(f"query references unknown agent {node.agent}")
        return expected_utility_from_joint(game, joint, node.agent)
    if isinstance(node, BinOp):
        left = _eval_expr(node.left, game, joint)
        right = _eval_expr(node.right, game, joint)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        return left * right
    raise QueryError(f"cannot evaluate {node!r} as an expression")


def _eval_formula(node, game, joint, eps):
    if isinstance(node, Not):
        return not _eval_formula(node.body, game, joint, eps)
    if isinstance(node, And):
        return _eval_formula(node.left, game, joint, eps) and _eval_formula(
            node.right, game, joint, eps
        )
    if isinstance(node, Or):
        return _eval_formula(node.left, game, joint, eps) or _eval_formula(
            node.right, game, joint, eps
        )
    if isinstance(node, Comparison):
        a = _eval_expr(node.left, game, joint)
        b = _eval_expr(node.right, game, joint)
        if node.op == "=":
            return abs(a - b) <= eps
        if node.op == "<=":
            return a <= b + eps
        if node.op == ">=":
            return a >= b - eps
        if node.op == "<":
            return a < b - eps
        return a > b + eps
    return _eval_expr(node, game, joint)


# -- jobs ------------------------------------------------------------------------


@dataclass(frozen=True)
class QueryJob:
    """Everything needed to evaluate one interventional query."""

    game: CausalGame
    interventions: tuple = ()
    visibility: Mapping[int, tuple] = field(default_factory=dict)
    query: Query | str = "sampled: E[1]"
    seed: int = 0
    mix_ties: bool = False
    include_behavioral: bool = False
    epsilon: float = 1e-9
    agent_order: Sequence[int] | None = None
    merge_common: bool = True
    relation: RationalityRelation = BEST_RESPONSE

    def parsed_query(self) -> Query:
        if isinstance(self.query, str):
            return parse_query(self.query)
        return self.query

    def decomposition(self) -> Decomposition:
        return decompose(
            self.game,
            self.interventions,
            self.visibility,
            agent_order=self.agent_order,
            merge_common=self.merge_common,
        )


@dataclass(frozen=True)
class Leaf:
    """One evaluated branch: per-stage outcome choices and the formula value."""

    choices: tuple
    value: object
    rules: Mapping[str, TabularCPD]


@dataclass(frozen=True)
class QueryResult:
    verdict: object  # bool, float, or None when leaves disagree
    leaves: tuple[Leaf, ...]
    trace: tuple
    seed: int

    @property
    def leaf_values(self):
        return [leaf.value for leaf in self.leaves]


def _stage_outcomes(game, relation, include_behavioral):
    outcomes = list(pure_nash(game, relation).outcomes)
    if include_behavioral:
        behavioral = behavioral_nash_small(game, relation)
        for fam in behavioral.families:
            for prof in fam.extreme_profiles():
                if not any(
                    set(prof.rules) == set(o.rules)
                    and all(cpds_equal(prof[d], o[d]) for d in prof.rules)
                    for o in outcomes
                ):
                    outcomes.append(prof)
    return outcomes


def _mixture_rule(game, decision, outcomes):
    """Entrywise uniform mixture of a decision's distinct rules at a stage."""
    rules = []
    for o in outcomes:
        r = o[decision]
        if not any(cpds_equal(r, q) for q in rules):
            rules.append(r)
    contexts = game.contexts(decision)
    table = {}
    for ctx in contexts:
        rows = [r.row(ctx) for r in rules]
        table[tuple(ctx)] = tuple(
            sum(row[i] for row in rows) / len(rows)
            for i in range(len(rows[0]))
        )
    return TabularCPD(decision, game.parents_of(decision), table)


def _prim_binds(prim, stage_idx, stages):
    """Whether a primitive rebinding a rule can take effect on realized play."""
    if not (isinstance(prim, FixMechanism) and prim.target.startswith("PI_")):
        return True, None
    decision = prim.target[len("PI_"):]
    observed = any(stages[k].agents for k in range(stage_idx, len(stages)))
    return observed, decision


def evaluate_query(job: QueryJob) -> QueryResult:
    """Run the staged evaluator and fold the leaves per the query's mode."""
    query = job.parsed_query()
    dec = job.decomposition()
    stages = dec.stages
    rng = random.Random(job.seed)
    leaves: list[Leaf] = []
    trace: list[dict] = []

    def final_value(game, realized):
        rules = dict(realized)
        for d in game.decisions():
            if d in game.object_fixed:
                continue
            if d not in rules:
                if d in game.rule_fixes:
                    rules[d] = game.rule_fixes[d]
                else:
                    raise SolverError(
                        f"decision {d} was never resolved by any stage"
                    )
        stripped = dc_replace(game, rule_fixes={})
        joint = induced_joint(stripped, PolicyProfile(rules))
        return _eval_formula(query.body, game, joint, job.epsilon), rules

    def walk(idx, game, realized, choices):
        if idx == len(stages):
            value, rules = final_value(game, realized)
            leaves.append(Leaf(tuple(choices), value, rules))
            return
        stage = stages[idx]
        record = {
            "stage": idx,
            "applied": [type(p).__name__ for p in stage.primitives],
            "agents": sorted(stage.agents),
            "suppressed": [],
            "a_prime": [],
        }
        new_realized = dict(realized)
        for prim in stage.primitives:
            binds, decision = _prim_binds(prim, idx, stages)
            game = apply_primitive(game, prim)
            touched = _intervened_owner(game, prim)
            if touched is not None:
                record["a_prime"].append(touched)
            if decision is not None:
                if binds and prim.cpd is not None:
                    new_realized[decision] = prim.cpd
                elif prim.cpd is not None:
                    record["suppressed"].append(prim.target)
                else:
                    new_realized.pop(decision, None)
            if isinstance(prim, (FixObject, RemoveVariable)):
                new_realized.pop(prim.target, None)
        if not stage.agents:
            trace.append(record)
            walk(idx + 1, game, new_realized, choices + [None])
            return
        outcomes = _stage_outcomes(game, job.relation, job.include_behavioral)
        if not outcomes:
            raise SolverError(
                f"no rational outcome found at stage {idx}: the configured "
                "solver found no equilibrium of the stage game"
            )
        record["outcomes"] = len(outcomes)
        to_fix = [
            d
            for a in sorted(stage.agents)
            for d in game.free_decisions_of(a)
        ]
        if job.mix_ties:
            fixed = dict(new_realized)
            for d in to_fix:
                fixed[d] = _mixture_rule(game, d, outcomes)
            record["choice"] = "mix-ties"
            trace.append(record)
            walk(idx + 1, game, fixed, choices + ["mix"])
            return
        if query.mode == "sampled":
            k = rng.randrange(len(outcomes))
            record["choice"] = k
            trace.append(record)
            fixed = dict(new_realized)
            for d in to_fix:
                fixed[d] = outcomes[k][d]
            walk(idx + 1, game, fixed, choices + [k])
            return
        trace.append(record)
        for k, outcome in enumerate(outcomes):
            fixed = dict(new_realized)
            for d in to_fix:
                fixed[d] = outcome[d]
            walk(idx + 1, game, fixed, choices + [k])

    walk(0, job.game, {}, [])

    values = [leaf.value for leaf in leaves]
    bare = not isinstance(
        query.body, (Comparison, Not, And, Or)
    )
    if query.mode == "sampled":
        verdict = values[0]
    elif bare:
        if all(abs(v - values[0]) <= job.epsilon for v in values):
            verdict = values[0]
        else:
            verdict = None
    elif query.mode == "forall":
        verdict = all(values)
    else:
        verdict = any(values)
    return QueryResult(verdict, tuple(leaves), tuple(trace), job.seed)


def _intervened_owner(game, prim):
    """Agent whose decision or rule node the primitive directly targets."""
    name = None
    if isinstance(prim, FixMechanism) and prim.target.startswith("PI_"):
        name = prim.target[len("PI_"):]
    elif isinstance(prim, (FixObject, RemoveVariable)):
        name = prim.target
    elif isinstance(prim, AddVariable):
        name = prim.variable.name
    if name is None or not game.has_variable(name):
        return None
    if game.kind(name) != DECISION:
        return None
    return game.agent_of(name)


# -- visibility classification ---------------------------------------------------


def classify_visibility(job: QueryJob) -> dict[int, str]:
    """Tag each agent pre-policy, post-policy, or interleaved.

    Pre-policy: by the agent's stage the applied primitives are exactly the
    declared interventions.  Post-policy: nothing has been applied yet.
    Anything else (including seeing an intervention and its inverse) is
    interleaved.
    """
    dec = job.decomposition()
    declared = frozenset((label, False) for label in dec.labels)
    tags_by_stage = [s.tags for s in dec.stages]
    out = {}
    for agent, j in dec.agent_stage.items():
        seen = frozenset().union(*tags_by_stage[: j + 1]) if j >= 0 else frozenset()
        if not seen:
            out[agent] = "post_policy"
        elif seen == declared:
            out[agent] = "pre_policy"
        else:
            out[agent] = "interleaved"
    return out


# -- quantitative environment specifications --------------------------------------


def _event_assignment(game: CausalGame, event) -> dict:
    if isinstance(event, str):
        parsed = _Parser(f"sampled: P({event}) >= 0").parse()
        atoms = parsed.body.left.event
    else:
        atoms = tuple((k, str(v)) for k, v in event.items())
    return {var: _resolve_value(game, var, tok) for var, tok in atoms}


def _event_probabilities(game, event, relation, include_behavioral):
    profiles = list(pure_nash(game, relation).outcomes)
    if include_behavioral:
        behavioral = behavioral_nash_small(game, relation)
        profiles.extend(behavioral.outcomes)
        for fam in behavioral.families:
            profiles.extend(fam.extreme_profiles())
    if not profiles:
        raise SolverError("no rational outcomes to evaluate the event over")
    assignment = _event_assignment(game, event)
    values = []
    for profile in profiles:
        values.append(induced_joint(game, profile).prob(assignment))
    return values


def check_spec_env(
    game: CausalGame,
    interventions,
    event,
    direction: str = "raise",
    include_behavioral: bool = False,
    relation: RationalityRelation = BEST_RESPONSE,
    eps: float = 1e-9,
) -> bool:
    """Does the intervention move the event probability the right way?

    ``raise``: the worst (minimum) event probability over equilibria of the
    intervened game must be at least the best (maximum) over equilibria of
    the original game.  ``lower`` is the mirror image.  With
    ``include_behavioral``, behavioral families contribute their extreme
    points on both sides.
    """
    if direction not in ("raise", "lower"):
        raise QueryError(f"unknown direction {direction!r}")
    base = _event_probabilities(game, event, relation, include_behavioral)
    intervened_game = apply_all(game, interventions)
    new = _event_probabilities(
        intervened_game, event, relation, include_behavioral
    )
    if direction == "raise":
        return min(new) >= max(base) - eps
    return max(new) <= min(base) + eps
