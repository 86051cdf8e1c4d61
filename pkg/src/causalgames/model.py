"""Core model: variables, tabular CPDs, games, joint distributions, utilities.

A causal game is a DAG over typed variables (chance / decision / utility,
the latter two owned by an agent) with a tabular CPD for every non-decision
variable.  Agents choose decision rules (CPDs over actions given the
decision's parents); a full assignment of rules induces a joint distribution
as the product of all factors.

All values are immutable after construction and every operation is a pure
function of its inputs; nothing here holds shared mutable state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Mapping

from .errors import ValidationError

PROB_EPS = 1e-9

CHANCE = "chance"
DECISION = "decision"
UTILITY = "utility"
KINDS = (CHANCE, DECISION, UTILITY)


@dataclass(frozen=True)
class Variable:
    """A typed variable with a finite ordered domain.

    ``agent`` is required exactly when the kind is decision or utility.
    Utility domains must consist of real numbers.
    """

    name: str
    kind: str
    domain: tuple
    agent: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(self.domain))


@dataclass(frozen=True)
class TabularCPD:
    """A conditional probability table.

    ``table`` maps each full parent instantiation (a tuple of parent values,
    in parent order) to a probability vector over the variable's domain, in
    domain order.  The empty context ``()`` keys the row of a parentless
    variable.
    """

    variable: str
    parents: tuple[str, ...]
    table: Mapping[tuple, tuple[float, ...]]

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        norm = {}
        for ctx, row in self.table.items():
            norm[tuple(ctx)] = tuple(float(p) for p in row)
        object.__setattr__(self, "table", norm)

    def row(self, ctx: tuple) -> tuple[float, ...]:
        return self.table[tuple(ctx)]

    def contexts(self) -> list[tuple]:
        return list(self.table.keys())

    @property
    def is_pure(self) -> bool:
        """True when every entry is 0 or 1 (within tolerance)."""
        return all(
            min(abs(p), abs(p - 1.0)) <= PROB_EPS
            for row in self.table.values()
            for p in row
        )

    @property
    def is_fully_stochastic(self) -> bool:
        """True when every entry is strictly positive."""
        return all(p > PROB_EPS for row in self.table.values() for p in row)

    @classmethod
    def delta(cls, variable, value, domain, parents=(), contexts=((),)):
        """Degenerate CPD putting mass 1 on ``value`` in every context."""
        domain = tuple(domain)
        if value not in domain:
            raise ValidationError(
                f"{variable}: value {value!r} not in domain {domain}"
            )
        idx = domain.index(value)
        row = tuple(1.0 if i == idx else 0.0 for i in range(len(domain)))
        return cls(variable, tuple(parents), {tuple(c): row for c in contexts})

    @classmethod
    def uniform(cls, variable, domain, parents=(), contexts=((),)):
        n = len(tuple(domain))
        row = tuple(1.0 / n for _ in range(n))
        return cls(variable, tuple(parents), {tuple(c): row for c in contexts})


# A decision rule is a CPD attached to a decision variable.
DecisionRule = TabularCPD


@dataclass(frozen=True)
class PolicyProfile:
    """A (possibly partial) assignment of decision rules to decisions."""

    rules: Mapping[str, TabularCPD]

    def __post_init__(self):
        object.__setattr__(self, "rules", dict(self.rules))

    def __getitem__(self, decision: str) -> TabularCPD:
        return self.rules[decision]

    def __contains__(self, decision: str) -> bool:
        return decision in self.rules

    def decisions(self) -> tuple[str, ...]:
        return tuple(self.rules.keys())

    def merged(self, other: "PolicyProfile") -> "PolicyProfile":
        rules = dict(self.rules)
        rules.update(other.rules)
        return PolicyProfile(rules)

    def is_full(self, game: "CausalGame") -> bool:
        return all(d in self.rules for d in game.free_decisions())


@dataclass(frozen=True)
class CausalGame:
    """A causal game: agents, a typed DAG, and tabular parameters.

    ``cpds`` holds one CPD per chance/utility variable, plus one per decision
    listed in ``object_fixed`` (a decision pinned by an object-level
    intervention, which also severs its rule node's edge to it).
    ``rule_fixes`` holds externally imposed decision rules (commitments);
    those decisions are no longer strategic but their rule node still governs
    them.  Remaining decisions are "free": rational agents pick their rules.
    """

    n_agents: int
    variables: tuple[Variable, ...]
    parents: Mapping[str, tuple[str, ...]]
    cpds: Mapping[str, TabularCPD]
    rule_fixes: Mapping[str, TabularCPD] = field(default_factory=dict)
    object_fixed: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(
            self, "parents", {k: tuple(v) for k, v in self.parents.items()}
        )
        object.__setattr__(self, "cpds", dict(self.cpds))
        object.__setattr__(self, "rule_fixes", dict(self.rule_fixes))
        object.__setattr__(self, "object_fixed", frozenset(self.object_fixed))

    # -- lookups ----------------------------------------------------------

    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise ValidationError(f"unknown variable {name!r}")

    def has_variable(self, name: str) -> bool:
        return any(v.name == name for v in self.variables)

    def kind(self, name: str) -> str:
        return self.variable(name).kind

    def domain(self, name: str) -> tuple:
        return self.variable(name).domain

    def agent_of(self, name: str) -> int | None:
        return self.variable(name).agent

    def parents_of(self, name: str) -> tuple[str, ...]:
        return self.parents.get(name, ())

    def children_of(self, name: str) -> tuple[str, ...]:
        return tuple(
            v.name for v in self.variables if name in self.parents.get(v.name, ())
        )

    def decisions(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.kind == DECISION)

    def free_decisions(self) -> tuple[str, ...]:
        return tuple(
            d
            for d in self.decisions()
            if d not in self.rule_fixes and d not in self.object_fixed
        )

    def decisions_of(self, agent: int) -> tuple[str, ...]:
        return tuple(d for d in self.decisions() if self.agent_of(d) == agent)

    def free_decisions_of(self, agent: int) -> tuple[str, ...]:
        return tuple(d for d in self.free_decisions() if self.agent_of(d) == agent)

    def utilities_of(self, agent: int) -> tuple[str, ...]:
        return tuple(
            v.name
            for v in self.variables
            if v.kind == UTILITY and v.agent == agent
        )

    def contexts(self, name: str) -> list[tuple]:
        """All parent instantiations of ``name``, in deterministic order.

        The product runs over parent domains in parent order, last parent
        varying fastest.
        """
        doms = [self.domain(p) for p in self.parents_of(name)]
        return [tuple(c) for c in itertools.product(*doms)]

    def delta_rule(self, decision: str, action) -> TabularCPD:
        return TabularCPD.delta(
            decision, action, self.domain(decision),
            parents=self.parents_of(decision), contexts=self.contexts(decision),
        )

    def delta_cpd(self, name: str, value) -> TabularCPD:
        return TabularCPD.delta(
            name, value, self.domain(name),
            parents=self.parents_of(name), contexts=self.contexts(name),
        )

    def factor_cpd(self, name: str) -> TabularCPD | None:
        """The CPD governing ``name`` in the induced joint, if pinned."""
        if name in self.cpds:
            return self.cpds[name]
        return self.rule_fixes.get(name)


@dataclass(frozen=True)
class JointDistribution:
    """A full joint table over every variable of a game."""

    variables: tuple[str, ...]
    domains: tuple[tuple, ...]
    table: Mapping[tuple, float]

    def __post_init__(self):
        object.__setattr__(self, "table", dict(self.table))

    def total(self) -> float:
        return sum(self.table.values())

    def prob(self, assignment: Mapping[str, object]) -> float:
        """Marginal probability of a partial assignment."""
        idx = {}
        for var, val in assignment.items():
            if var not in self.variables:
                raise ValidationError(f"unknown variable {var!r} in event")
            i = self.variables.index(var)
            if val not in self.domains[i]:
                raise ValidationError(
                    f"value {val!r} not in domain of {var!r}"
                )
            idx[i] = val
        return sum(
            p for inst, p in self.table.items()
            if all(inst[i] == v for i, v in idx.items())
        )


# -- validation -------------------------------------------------------------


def _object_graph_cycle(game: CausalGame) -> list[str] | None:
    """Return one cycle among object-level variables, or None."""
    color = {n: 0 for n in game.names()}
    stack: list[str] = []

    def visit(n):
        color[n] = 1
        stack.append(n)
        for c in game.children_of(n):
            if color[c] == 1:
                return stack[stack.index(c):] + [c]
            if color[c] == 0:
                found = visit(c)
                if found:
                    return found
        stack.pop()
        color[n] = 2
        return None

    for n in game.names():
        if color[n] == 0:
            found = visit(n)
            if found:
                return found
    return None


def _check_cpd(game, cpd, name, expect_parents, report, eps):
    if cpd.variable != name:
        report.append(f"{name}: CPD declares variable {cpd.variable!r}")
        return
    if tuple(cpd.parents) != tuple(expect_parents):
        report.append(
            f"{name}: CPD parents {cpd.parents} do not match game parents "
            f"{tuple(expect_parents)}"
        )
        return
    want = set(map(tuple, game.contexts(name)))
    got = set(cpd.table.keys())
    for missing in sorted(want - got, key=repr):
        report.append(f"{name}: missing CPD row for context {missing}")
    for extra in sorted(got - want, key=repr):
        report.append(f"{name}: CPD row for unknown context {extra}")
    ncol = len(game.domain(name))
    for ctx in sorted(got & want, key=repr):
        row = cpd.table[ctx]
        if len(row) != ncol:
            report.append(
                f"{name}: row {ctx} has {len(row)} entries, domain has {ncol}"
            )
            continue
        if any(p < -eps for p in row):
            report.append(f"{name}: row {ctx} has a negative entry")
        if abs(sum(row) - 1.0) > eps:
            report.append(f"{name}: row {ctx} sums to {sum(row)!r}, not 1")


def validate_game(game: CausalGame, eps: float = PROB_EPS) -> list[str]:
    """Check every structural invariant; return a list of violations.

    An empty report means the game is valid.  Each violation names the
    variable or row at fault.
    """
    report: list[str] = []
    if game.n_agents < 1:
        report.append("game declares no agents")

    seen = set()
    for v in game.variables:
        if v.name in seen:
            report.append(f"{v.name}: duplicate variable name")
        seen.add(v.name)
        if v.kind not in KINDS:
            report.append(f"{v.name}: unknown kind {v.kind!r}")
            continue
        if not v.domain:
            report.append(f"{v.name}: empty domain")
        if len(set(v.domain)) != len(v.domain):
            report.append(f"{v.name}: duplicate domain values")
        if v.kind in (DECISION, UTILITY):
            if v.agent is None or not (1 <= v.agent <= game.n_agents):
                report.append(
                    f"{v.name}: {v.kind} variable needs an agent in "
                    f"1..{game.n_agents}"
                )
        elif v.agent is not None:
            report.append(f"{v.name}: chance variable must not have an agent")
        if v.kind == UTILITY:
            if not all(isinstance(u, (int, float)) for u in v.domain):
                report.append(f"{v.name}: utility domain must be numeric")

    for name, ps in game.parents.items():
        if name not in seen:
            report.append(f"parent list for unknown variable {name!r}")
        for p in ps:
            if p not in seen:
                report.append(f"{name}: unknown parent {p!r}")
        if len(set(ps)) != len(ps):
            report.append(f"{name}: duplicate parents")
    if report:
        return report

    cycle = _object_graph_cycle(game)
    if cycle:
        report.append("object-level graph has a cycle: " + " -> ".join(cycle))
        return report

    for v in game.variables:
        if v.kind == UTILITY and game.children_of(v.name):
            report.append(f"{v.name}: utility variables must be leaves")

    for v in game.variables:
        pinned = v.name in game.cpds
        if v.kind == DECISION:
            if v.name in game.object_fixed and not pinned:
                report.append(f"{v.name}: object-fixed decision lacks a CPD")
            if v.name not in game.object_fixed and pinned:
                report.append(
                    f"{v.name}: decision variable carries a CPD but is not "
                    "object-fixed"
                )
            if v.name in game.rule_fixes:
                _check_cpd(
                    game, game.rule_fixes[v.name], v.name,
                    game.parents_of(v.name), report, eps,
                )
        else:
            if not pinned:
                report.append(f"{v.name}: missing CPD")
        if pinned:
            _check_cpd(
                game, game.cpds[v.name], v.name, game.parents_of(v.name),
                report, eps,
            )
    for name in game.rule_fixes:
        if name not in seen or game.kind(name) != DECISION:
            report.append(f"rule fix on non-decision {name!r}")
    for name in game.object_fixed:
        if name not in seen or game.kind(name) != DECISION:
            report.append(f"object fix recorded for non-decision {name!r}")
    return report


def require_valid(game: CausalGame, eps: float = PROB_EPS) -> CausalGame:
    report = validate_game(game, eps)
    if report:
        raise ValidationError("; ".join(report))
    return game


# -- joint distribution and utilities ----------------------------------------


def induced_joint(game: CausalGame, profile: PolicyProfile) -> JointDistribution:
    """The joint distribution induced by a full policy profile.

    Every variable contributes exactly one factor: its CPD for chance,
    utility, and object-fixed decisions; an imposed rule for committed
    decisions; and the profile's rule for free decisions.
    """
    factors = {}
    for v in game.variables:
        cpd = game.factor_cpd(v.name)
        if cpd is None:
            if v.name not in profile:
                raise ValidationError(f"missing decision rule for {v.name}")
            cpd = profile[v.name]
        factors[v.name] = cpd
    for d in profile.decisions():
        if not game.has_variable(d) or game.kind(d) != DECISION:
            raise ValidationError(f"profile names non-decision {d!r}")

    names = game.names()
    domains = tuple(game.domain(n) for n in names)
    # the declared variable order need not be topological (added variables
    # append at the end); walk in dependency order, keep keys in game order
    order: list[int] = []
    seen: set[str] = set()

    def push(name):
        if name in seen:
            return
        seen.add(name)
        for p in game.parents_of(name):
            push(p)
        order.append(names.index(name))

    for n in names:
        push(n)
    pidx = {
        i: tuple(names.index(p) for p in game.parents_of(names[i]))
        for i in order
    }
    tables = {i: factors[names[i]].table for i in order}
    table = {}
    assignment = [None] * len(names)

    def descend(k, prob):
        if k == len(order):
            table[tuple(assignment)] = prob
            return
        i = order[k]
        row = tables[i][tuple(assignment[j] for j in pidx[i])]
        dom = domains[i]
        for vi, p in enumerate(row):
            if p == 0.0:
                continue
            assignment[i] = dom[vi]
            descend(k + 1, prob * p)
        assignment[i] = None

    descend(0, 1.0)
    return JointDistribution(names, domains, table)


def expected_utility(game: CausalGame, profile: PolicyProfile, agent: int) -> float:
    """Expected sum of the agent's utility variables under the profile."""
    if not (1 <= agent <= game.n_agents):
        raise ValidationError(f"unknown agent index {agent}")
    joint = induced_joint(game, profile)
    return expected_utility_from_joint(game, joint, agent)


def expected_utility_from_joint(
    game: CausalGame, joint: JointDistribution, agent: int
) -> float:
    if not (1 <= agent <= game.n_agents):
        raise ValidationError(f"unknown agent index {agent}")
    names = joint.variables
    uidx = [
        (names.index(u), game.domain(u)) for u in game.utilities_of(agent)
    ]
    total = 0.0
    for inst, p in joint.table.items():
        total += p * sum(inst[i] for i, _ in uidx)
    return total


def enumerate_pure_rules(game: CausalGame, decision: str) -> list[TabularCPD]:
    """All pure decision rules for ``decision``, lexicographically ordered.

    Order: the tuple of actions over contexts (contexts in their
    deterministic order, first context most significant, actions in domain
    order).  Count: |dom(D)| ** |dom(Pa_D)|.
    """
    if game.kind(decision) != DECISION:
        raise ValidationError(f"{decision!r} is not a decision variable")
    contexts = game.contexts(decision)
    domain = game.domain(decision)
    rules = []
    for actions in itertools.product(domain, repeat=len(contexts)):
        table = {}
        for ctx, a in zip(contexts, actions):
            table[ctx] = tuple(
                1.0 if v == a else 0.0 for v in domain
            )
        rules.append(TabularCPD(decision, game.parents_of(decision), table))
    return rules


# -- structural equality ------------------------------------------------------


def cpds_equal(a: TabularCPD, b: TabularCPD, eps: float = PROB_EPS) -> bool:
    if a.variable != b.variable or a.parents != b.parents:
        return False
    if set(a.table) != set(b.table):
        return False
    for ctx, row in a.table.items():
        other = b.table[ctx]
        if len(row) != len(other):
            return False
        if any(abs(x - y) > eps for x, y in zip(row, other)):
            return False
    return True


def games_equal(a: CausalGame, b: CausalGame, eps: float = PROB_EPS) -> bool:
    """Structural equality: same variables, edges, and tables within eps."""
    if a.n_agents != b.n_agents:
        return False
    if a.variables != b.variables:
        return False
    if a.parents != b.parents:
        return False
    if a.object_fixed != b.object_fixed:
        return False
    for attr in ("cpds", "rule_fixes"):
        ma, mb = getattr(a, attr), getattr(b, attr)
        if set(ma) != set(mb):
            return False
        if any(not cpds_equal(ma[k], mb[k], eps) for k in ma):
            return False
    return True


def with_updates(game: CausalGame, **changes) -> CausalGame:
    """Convenience wrapper around dataclasses.replace."""
    return replace(game, **changes)
