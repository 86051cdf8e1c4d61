"""The intervention algebra.

Four primitive game modifications: fixing an object-level variable's CPD
(and possibly its parent set), fixing a mechanism (a parameter node's CPD or
a decision-rule node's imposed rule), adding a variable, and removing one.
Edge additions/removals are derived fixes.  Every application can journal
the replaced state, so primitives invert exactly; ordered compositions
invert by reversing inverted steps.

``decompose`` turns a set of labelled interventions plus per-agent
visibility into an ordered list of primitive stages such that, after the
stages up to an agent's own, the game equals exactly the state that agent
sees when choosing their policy.  Later stages undo the previous agent's
non-shared primitives before applying the next agent's.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace as dc_replace
from typing import Iterable, Mapping, Sequence, Union

from .errors import InterventionError
from .graphs import (
    build_mechanised_graph,
    reachability_paths,
    rule_node,
    variable_of_mechanism,
)
from .model import (
    CHANCE,
    DECISION,
    UTILITY,
    CausalGame,
    TabularCPD,
    Variable,
    games_equal,
)


@dataclass(frozen=True)
class Journal:
    """Pre-image of an applied primitive, enabling exact inversion."""

    prev_parents: tuple | None = None
    prev_cpd: TabularCPD | None = None
    prev_rule_state: tuple | None = None  # ("free",) | ("rule_fixed", r) | ("object_fixed", cpd)
    prev_child_cpds: Mapping[str, TabularCPD] | None = None
    prev_child_parents: Mapping[str, tuple] | None = None
    removed_variable: Variable | None = None
    removed_children: tuple | None = None
    removed_index: int | None = None


@dataclass(frozen=True)
class FixObject:
    """Replace a variable's parent set and CPD.

    On a decision, a non-None ``cpd`` pins the decision at the object level
    (its rule node no longer governs it); ``cpd=None`` rewires the
    information set and leaves the rule to be re-solved.  ``rule_fix`` is
    used by inversion to restore a previously committed rule.
    """

    target: str
    parents: tuple[str, ...]
    cpd: TabularCPD | None = None
    rule_fix: TabularCPD | None = None
    journal: Journal | None = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))


@dataclass(frozen=True)
class FixMechanism:
    """Fix a mechanism node: THETA_<v> gets a new CPD, PI_<d> an imposed rule.

    ``cpd=None`` on a rule node removes the imposed rule, restoring the
    default rationality relation.
    """

    target: str
    cpd: TabularCPD | None = None
    journal: Journal | None = None


@dataclass(frozen=True)
class AddVariable:
    """Insert a new variable with the given parents and children.

    Children keep their rows by default, duplicated across the new parent's
    values (appended last); ``child_cpds`` overrides that with explicit
    extended tables (each carrying its own parent order), ``child_parents``
    does the same for decision children.  ``rule_fix`` re-commits an added
    free decision (inversion of removing a committed one).
    """

    variable: Variable
    parents: tuple[str, ...]
    children: tuple[str, ...]
    cpd: TabularCPD | None = None
    child_cpds: Mapping[str, TabularCPD] | None = None
    child_parents: Mapping[str, tuple] | None = None
    rule_fix: TabularCPD | None = None
    index: int | None = None
    journal: Journal | None = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class RemoveVariable:
    """Delete a variable, marginalising it out of its children's CPDs.

    Auto-marginalisation needs the removed variable to carry a CPD whose
    parents are nested in the child's remaining parents; otherwise an
    explicit replacement in ``child_cpds`` is required.
    """

    target: str
    child_cpds: Mapping[str, TabularCPD] | None = None
    child_parents: Mapping[str, tuple] | None = None
    journal: Journal | None = None


Primitive = Union[FixObject, FixMechanism, AddVariable, RemoveVariable]


@dataclass(frozen=True)
class CompoundIntervention:
    """An ordered list of primitives, applied first to last."""

    steps: tuple[Primitive, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def apply(self, game: CausalGame) -> tuple[CausalGame, "CompoundIntervention"]:
        journaled = []
        for p in self.steps:
            game, jp = apply_journaled(game, p)
            journaled.append(jp)
        return game, CompoundIntervention(tuple(journaled))

    def invert(self) -> "CompoundIntervention":
        return CompoundIntervention(tuple(invert(p) for p in reversed(self.steps)))


def as_compound(x) -> CompoundIntervention:
    """Coerce a primitive, compound, or iterable of either to a compound."""
    if isinstance(x, CompoundIntervention):
        return x
    if isinstance(x, (FixObject, FixMechanism, AddVariable, RemoveVariable)):
        return CompoundIntervention((x,))
    steps: list[Primitive] = []
    for item in x:
        steps.extend(as_compound(item).steps)
    return CompoundIntervention(tuple(steps))


# -- application ---------------------------------------------------------------


def _contexts_for(game: CausalGame, parents: tuple) -> list[tuple]:
    doms = [game.domain(p) for p in parents]
    return [tuple(c) for c in itertools.product(*doms)]


def _validate_cpd(game, cpd, name, parents, domain):
    if cpd.variable != name:
        raise InterventionError(
            f"CPD for {name} declares variable {cpd.variable!r}"
        )
    if tuple(cpd.parents) != tuple(parents):
        raise InterventionError(
            f"CPD for {name} declares parents {cpd.parents}, expected {tuple(parents)}"
        )
    want = set(_contexts_for(game, tuple(parents)))
    got = set(cpd.table.keys())
    if want != got:
        raise InterventionError(
            f"CPD for {name} covers contexts {sorted(got, key=repr)}, "
            f"expected {sorted(want, key=repr)}"
        )
    for ctx, row in cpd.table.items():
        if len(row) != len(domain):
            raise InterventionError(
                f"CPD for {name}: row {ctx} has {len(row)} entries, "
                f"domain has {len(domain)}"
            )
        if any(p < -1e-9 for p in row) or abs(sum(row) - 1.0) > 1e-9:
            raise InterventionError(
                f"CPD for {name}: row {ctx} is not a distribution"
            )


def _check_acyclic(names: Sequence[str], parents: Mapping[str, tuple]):
    color = {n: 0 for n in names}

    def visit(n, stack):
        color[n] = 1
        for c in names:
            if n in parents.get(c, ()):
                if color[c] == 1:
                    raise InterventionError(
                        "intervention would create a cycle through "
                        + " -> ".join(stack + [c])
                    )
                if color[c] == 0:
                    visit(c, stack + [c])
        color[n] = 2

    for n in names:
        if color[n] == 0:
            visit(n, [n])


def _rule_state(game: CausalGame, decision: str) -> tuple:
    if decision in game.object_fixed:
        return ("object_fixed", game.cpds[decision])
    if decision in game.rule_fixes:
        return ("rule_fixed", game.rule_fixes[decision])
    return ("free",)


def _apply_fix_object(game: CausalGame, p: FixObject):
    if not game.has_variable(p.target):
        raise InterventionError(f"unknown variable {p.target!r}")
    for parent in p.parents:
        if not game.has_variable(parent):
            raise InterventionError(f"unknown parent {parent!r}")
        if parent == p.target:
            raise InterventionError(f"{p.target} cannot be its own parent")
    if len(set(p.parents)) != len(p.parents):
        raise InterventionError(f"duplicate parents for {p.target}")
    new_parents = dict(game.parents)
    new_parents[p.target] = tuple(p.parents)
    _check_acyclic(game.names(), new_parents)

    kind = game.kind(p.target)
    cpds = dict(game.cpds)
    rule_fixes = dict(game.rule_fixes)
    object_fixed = set(game.object_fixed)

    if kind != DECISION:
        if p.cpd is None:
            raise InterventionError(
                f"object-level fix on {p.target} requires a CPD"
            )
        journal = Journal(
            prev_parents=game.parents_of(p.target),
            prev_cpd=game.cpds[p.target],
        )
        # validate against the rewired game so new parent contexts resolve
        probe = CausalGame(
            game.n_agents, game.variables, new_parents, cpds,
            rule_fixes, object_fixed,
        )
        _validate_cpd(probe, p.cpd, p.target, p.parents, game.domain(p.target))
        cpds[p.target] = p.cpd
    else:
        journal = Journal(
            prev_parents=game.parents_of(p.target),
            prev_rule_state=_rule_state(game, p.target),
        )
        probe = CausalGame(
            game.n_agents, game.variables, new_parents, game.cpds,
            {}, game.object_fixed,
        )
        if p.cpd is not None:
            _validate_cpd(probe, p.cpd, p.target, p.parents, game.domain(p.target))
            cpds[p.target] = p.cpd
            rule_fixes.pop(p.target, None)
            object_fixed.add(p.target)
        else:
            cpds.pop(p.target, None)
            object_fixed.discard(p.target)
            if p.rule_fix is not None:
                _validate_cpd(
                    probe, p.rule_fix, p.target, p.parents, game.domain(p.target)
                )
                rule_fixes[p.target] = p.rule_fix
            elif p.target in rule_fixes:
                raise InterventionError(
                    f"cannot rewire committed decision {p.target}; unfix the "
                    "rule first"
                )
    new_game = CausalGame(
        game.n_agents, game.variables, new_parents, cpds, rule_fixes,
        frozenset(object_fixed),
    )
    return new_game, journal


def _apply_fix_mechanism(game: CausalGame, p: FixMechanism):
    var = variable_of_mechanism(p.target)
    if not game.has_variable(var):
        raise InterventionError(f"unknown variable behind {p.target!r}")
    kind = game.kind(var)
    if p.target.startswith("THETA_"):
        if kind == DECISION:
            raise InterventionError(
                f"{p.target}: decisions have rule nodes, not parameter nodes"
            )
        if p.cpd is None:
            raise InterventionError(
                f"{p.target}: a parameter fix requires a CPD"
            )
        if tuple(p.cpd.parents) != game.parents_of(var):
            raise InterventionError(
                f"{p.target}: a mechanism fix may not change the parent set; "
                "use an object-level fix"
            )
        _validate_cpd(game, p.cpd, var, game.parents_of(var), game.domain(var))
        journal = Journal(prev_cpd=game.cpds[var])
        cpds = dict(game.cpds)
        cpds[var] = p.cpd
        return (
            CausalGame(
                game.n_agents, game.variables, game.parents, cpds,
                game.rule_fixes, game.object_fixed,
            ),
            journal,
        )
    # rule node
    if kind != DECISION:
        raise InterventionError(f"{p.target}: {var} is not a decision")
    if var in game.object_fixed:
        raise InterventionError(
            f"{p.target}: {var} is object-fixed; its rule no longer governs it"
        )
    journal = Journal(prev_rule_state=_rule_state(game, var))
    rule_fixes = dict(game.rule_fixes)
    if p.cpd is None:
        if var not in rule_fixes:
            raise InterventionError(f"{p.target}: decision rule is not fixed")
        rule_fixes.pop(var)
    else:
        _validate_cpd(game, p.cpd, var, game.parents_of(var), game.domain(var))
        rule_fixes[var] = p.cpd
    return (
        CausalGame(
            game.n_agents, game.variables, game.parents, game.cpds,
            rule_fixes, game.object_fixed,
        ),
        journal,
    )


def _extend_child_cpd(game, child, y_name, y_domain, override):
    """Extend a child's CPD over the new parent.

    With an override, the override's own parent tuple fixes the order;
    otherwise the new parent is appended and rows are duplicated across its
    values, leaving the induced joint unchanged until re-parameterised.
    """
    old_parents = game.parents_of(child)
    old_cpd = game.cpds[child]
    if override is not None:
        new_parents = tuple(override.parents)
        if set(new_parents) != set(old_parents) | {y_name}:
            raise InterventionError(
                f"replacement CPD for {child} must cover parents "
                f"{sorted(set(old_parents) | {y_name})}"
            )
        return new_parents, override
    new_parents = old_parents + (y_name,)
    table = {}
    for ctx, row in old_cpd.table.items():
        for y in y_domain:
            table[ctx + (y,)] = row
    return new_parents, TabularCPD(child, new_parents, table)


def _apply_add_variable(game: CausalGame, p: AddVariable):
    v = p.variable
    if game.has_variable(v.name):
        raise InterventionError(f"variable {v.name!r} already exists")
    if v.kind not in (CHANCE, DECISION, UTILITY):
        raise InterventionError(f"{v.name}: unknown kind {v.kind!r}")
    for n in p.parents + p.children:
        if not game.has_variable(n):
            raise InterventionError(f"unknown variable {n!r}")
    if v.kind != DECISION and p.cpd is None:
        raise InterventionError(f"adding {v.name} requires a CPD")

    new_parents = {k: tuple(ps) for k, ps in game.parents.items()}
    new_parents[v.name] = tuple(p.parents)
    cpds = dict(game.cpds)
    rule_fixes = dict(game.rule_fixes)
    object_fixed = set(game.object_fixed)
    prev_child_cpds = {}
    prev_child_parents = {}

    for child in p.children:
        prev_child_parents[child] = game.parents_of(child)
        if game.kind(child) == DECISION:
            if child in game.rule_fixes:
                raise InterventionError(
                    f"cannot change the information set of committed "
                    f"decision {child}"
                )
            if p.child_parents and child in p.child_parents:
                order = tuple(p.child_parents[child])
                if set(order) != set(game.parents_of(child)) | {v.name}:
                    raise InterventionError(
                        f"parent order for {child} must cover its parents plus "
                        f"{v.name}"
                    )
                new_parents[child] = order
            else:
                new_parents[child] = game.parents_of(child) + (v.name,)
        else:
            prev_child_cpds[child] = game.cpds[child]
            override = (p.child_cpds or {}).get(child)
            nps, ncpd = _extend_child_cpd(game, child, v.name, v.domain, override)
            new_parents[child] = nps
            cpds[child] = ncpd

    pos = len(game.variables) if p.index is None else p.index
    variables = game.variables[:pos] + (v,) + game.variables[pos:]
    _check_acyclic([x.name for x in variables], new_parents)

    probe = CausalGame(
        game.n_agents, variables, new_parents, cpds, rule_fixes, object_fixed
    )
    if v.kind == DECISION:
        if p.cpd is not None:
            _validate_cpd(probe, p.cpd, v.name, p.parents, v.domain)
            cpds[v.name] = p.cpd
            object_fixed.add(v.name)
        elif p.rule_fix is not None:
            _validate_cpd(probe, p.rule_fix, v.name, p.parents, v.domain)
            rule_fixes[v.name] = p.rule_fix
    else:
        _validate_cpd(probe, p.cpd, v.name, p.parents, v.domain)
        cpds[v.name] = p.cpd

    # re-validate overridden child CPDs against their final parent tuples
    final = CausalGame(
        game.n_agents, variables, new_parents, cpds, rule_fixes,
        frozenset(object_fixed),
    )
    for child in p.children:
        if game.kind(child) != DECISION:
            _validate_cpd(
                final, cpds[child], child, new_parents[child],
                game.domain(child),
            )
    journal = Journal(
        prev_child_cpds=prev_child_cpds, prev_child_parents=prev_child_parents
    )
    return final, journal


def _marginalise_out(game, child, y_name, remaining):
    """Marginalise the removed parent out of a child's CPD."""
    y_cpd = game.cpds.get(y_name)
    if y_cpd is None:
        raise InterventionError(
            f"removing {y_name}: child {child} needs an explicit replacement "
            "CPD (the removed variable has no pinned distribution)"
        )
    if not set(y_cpd.parents) <= set(remaining):
        raise InterventionError(
            f"removing {y_name}: cannot marginalise it out of {child} because "
            f"its CPD conditions on {sorted(set(y_cpd.parents) - set(remaining))}; "
            "provide an explicit replacement CPD"
        )
    old_parents = game.parents_of(child)
    old_cpd = game.cpds[child]
    y_pos = old_parents.index(y_name)
    y_domain = game.domain(y_name)
    table = {}
    for ctx in _contexts_for(game, tuple(remaining)):
        by_name = dict(zip(remaining, ctx))
        y_ctx = tuple(by_name[q] for q in y_cpd.parents)
        y_row = y_cpd.row(y_ctx)
        acc = None
        for yi, y in enumerate(y_domain):
            full_ctx = list(ctx)
            full_ctx.insert(y_pos, y)
            row = old_cpd.row(tuple(full_ctx))
            if acc is None:
                acc = [0.0] * len(row)
            for i, val in enumerate(row):
                acc[i] += y_row[yi] * val
        table[ctx] = tuple(acc)
    return TabularCPD(child, tuple(remaining), table)


def _apply_remove_variable(game: CausalGame, p: RemoveVariable):
    if not game.has_variable(p.target):
        raise InterventionError(f"unknown variable {p.target!r}")
    var = game.variable(p.target)
    children = game.children_of(p.target)

    new_parents = {
        k: tuple(ps) for k, ps in game.parents.items() if k != p.target
    }
    cpds = {k: c for k, c in game.cpds.items() if k != p.target}
    rule_fixes = {k: r for k, r in game.rule_fixes.items() if k != p.target}
    object_fixed = set(game.object_fixed) - {p.target}
    prev_child_cpds = {}
    prev_child_parents = {}

    for child in children:
        prev_child_parents[child] = game.parents_of(child)
        remaining = tuple(
            q for q in game.parents_of(child) if q != p.target
        )
        if p.child_parents and child in p.child_parents:
            order = tuple(p.child_parents[child])
            if set(order) != set(remaining):
                raise InterventionError(
                    f"parent order for {child} must cover {sorted(remaining)}"
                )
            remaining = order
        new_parents[child] = remaining
        if game.kind(child) == DECISION:
            if child in game.rule_fixes:
                raise InterventionError(
                    f"cannot change the information set of committed "
                    f"decision {child}"
                )
            continue
        prev_child_cpds[child] = game.cpds[child]
        override = (p.child_cpds or {}).get(child)
        if override is not None:
            if tuple(override.parents) != remaining:
                raise InterventionError(
                    f"replacement CPD for {child} must declare parents "
                    f"{remaining}"
                )
            cpds[child] = override
        else:
            cpds[child] = _marginalise_out(game, child, p.target, remaining)

    variables = tuple(x for x in game.variables if x.name != p.target)
    final = CausalGame(
        game.n_agents, variables, new_parents, cpds, rule_fixes,
        frozenset(object_fixed),
    )
    for child in children:
        if game.kind(child) != DECISION:
            _validate_cpd(
                final, cpds[child], child, new_parents[child], game.domain(child)
            )
    journal = Journal(
        prev_parents=game.parents_of(p.target),
        prev_cpd=game.cpds.get(p.target),
        prev_rule_state=_rule_state(game, p.target)
        if var.kind == DECISION
        else None,
        prev_child_cpds=prev_child_cpds,
        prev_child_parents=prev_child_parents,
        removed_variable=var,
        removed_children=children,
        removed_index=game.names().index(p.target),
    )
    return final, journal


_APPLIERS = {
    FixObject: _apply_fix_object,
    FixMechanism: _apply_fix_mechanism,
    AddVariable: _apply_add_variable,
    RemoveVariable: _apply_remove_variable,
}


def apply_journaled(game: CausalGame, p: Primitive):
    """Apply a primitive; return the new game and the journaled primitive."""
    new_game, journal = _APPLIERS[type(p)](game, p)
    return new_game, dc_replace(p, journal=journal)


def apply_primitive(game: CausalGame, p: Primitive) -> CausalGame:
    """Apply a primitive intervention, returning the intervened game."""
    return _APPLIERS[type(p)](game, p)[0]


def apply_all(game: CausalGame, interventions: Iterable) -> CausalGame:
    for item in interventions:
        game, _ = as_compound(item).apply(game)
    return game


def invert(p: Primitive) -> Primitive:
    """The primitive restoring the pre-image recorded in the journal."""
    j = p.journal
    if j is None:
        raise InterventionError(
            "cannot invert an intervention that was never applied (no journal)"
        )
    if isinstance(p, FixObject):
        if j.prev_rule_state is None:
            return FixObject(p.target, j.prev_parents, j.prev_cpd)
        state = j.prev_rule_state
        if state[0] == "free":
            return FixObject(p.target, j.prev_parents, None)
        if state[0] == "object_fixed":
            return FixObject(p.target, j.prev_parents, state[1])
        return FixObject(p.target, j.prev_parents, None, rule_fix=state[1])
    if isinstance(p, FixMechanism):
        if j.prev_cpd is not None:
            return FixMechanism(p.target, j.prev_cpd)
        state = j.prev_rule_state
        if state[0] == "free":
            return FixMechanism(p.target, None)
        return FixMechanism(p.target, state[1])
    if isinstance(p, AddVariable):
        return RemoveVariable(
            p.variable.name,
            child_cpds=j.prev_child_cpds,
            child_parents=j.prev_child_parents,
        )
    if isinstance(p, RemoveVariable):
        cpd = None
        rule_fix = None
        if j.prev_rule_state is None:
            cpd = j.prev_cpd
        else:
            state = j.prev_rule_state
            if state[0] == "object_fixed":
                cpd = state[1]
            elif state[0] == "rule_fixed":
                rule_fix = state[1]
        return AddVariable(
            j.removed_variable,
            j.prev_parents,
            j.removed_children,
            cpd=cpd,
            child_cpds=j.prev_child_cpds,
            child_parents=j.prev_child_parents,
            rule_fix=rule_fix,
            index=j.removed_index,
        )
    raise InterventionError(f"unknown primitive {p!r}")


# -- derived interventions -----------------------------------------------------


def make_add_edge(game: CausalGame, src: str, dst: str) -> FixObject:
    """The object-level fix realising a new dependency ``src -> dst``."""
    if not game.has_variable(src) or not game.has_variable(dst):
        raise InterventionError(f"unknown edge endpoint in {src}->{dst}")
    if src in game.parents_of(dst):
        raise InterventionError(f"edge {src}->{dst} already present")
    new_parents = game.parents_of(dst) + (src,)
    if game.kind(dst) == DECISION:
        return FixObject(dst, new_parents, None)
    old = game.cpds[dst]
    table = {}
    for ctx, row in old.table.items():
        for v in game.domain(src):
            table[ctx + (v,)] = row
    return FixObject(dst, new_parents, TabularCPD(dst, new_parents, table))


def make_remove_edge(game: CausalGame, src: str, dst: str) -> FixObject:
    """The object-level fix deleting the dependency ``src -> dst``.

    Non-decision targets get the source marginalised out of their CPD under
    its current distribution; decision targets just lose the observation.
    """
    if src not in game.parents_of(dst):
        raise InterventionError(f"edge {src}->{dst} not present")
    remaining = tuple(q for q in game.parents_of(dst) if q != src)
    if game.kind(dst) == DECISION:
        return FixObject(dst, remaining, None)
    cpd = _marginalise_out(game, dst, src, remaining)
    return FixObject(dst, remaining, cpd)


def add_edge(game: CausalGame, src: str, dst: str) -> CausalGame:
    return apply_primitive(game, make_add_edge(game, src, dst))


def remove_edge(game: CausalGame, src: str, dst: str) -> CausalGame:
    return apply_primitive(game, make_remove_edge(game, src, dst))


def decompose_fix_object(game: CausalGame, p: FixObject) -> list[Primitive]:
    """Rewrite an object-level fix as remove-then-add.

    The add step re-attaches the original children with their journaled
    tables (including parent order), so the composition equals the direct
    fix exactly, structurally and in induced joints.
    """
    if not game.has_variable(p.target):
        raise InterventionError(f"unknown variable {p.target!r}")
    var = game.variable(p.target)
    children = game.children_of(p.target)
    placeholder = {}
    original = {}
    original_order = {}
    for child in children:
        original_order[child] = game.parents_of(child)
        if game.kind(child) == DECISION:
            continue
        original[child] = game.cpds[child]
        remaining = tuple(q for q in game.parents_of(child) if q != p.target)
        placeholder[child] = TabularCPD.uniform(
            child,
            game.domain(child),
            parents=remaining,
            contexts=_contexts_for(game, remaining),
        )
    remove = RemoveVariable(p.target, child_cpds=placeholder)
    add = AddVariable(
        var,
        p.parents,
        children,
        cpd=p.cpd,
        child_cpds=original,
        child_parents={
            c: original_order[c] for c in children if game.kind(c) == DECISION
        },
        rule_fix=p.rule_fix,
        index=game.names().index(p.target),
    )
    return [remove, add]


# -- side effects and structural analyses ---------------------------------------


@dataclass(frozen=True)
class SideEffectReport:
    """Inter-mechanism edges removed/added by an intervention."""

    removed: frozenset
    added: frozenset

    @property
    def empty(self) -> bool:
        return not self.removed and not self.added


def side_effects(game: CausalGame, intervention) -> SideEffectReport:
    """Diff of inter-mechanism edges after rebuilding the mechanised graph."""
    before = build_mechanised_graph(game).inter_mechanism_edges
    intervened = apply_all(game, [intervention])
    after = build_mechanised_graph(intervened).inter_mechanism_edges
    return SideEffectReport(
        frozenset(before - after), frozenset(after - before)
    )


def predicted_edge_removals(game: CausalGame, p: FixObject) -> set:
    """Removals implied by the severed-edge path criterion.

    An object-level fix on X severs the incoming edges W -> X for parents W
    dropped from the new parent set (plus the rule edge when it pins a
    decision).  An inter-mechanism edge is predicted to disappear when every
    one of its reachability paths crosses a severed edge.  The criterion is
    sufficient, not complete: the rebuilt graph is ground truth.
    """
    if not isinstance(p, FixObject):
        raise InterventionError("the path criterion applies to object fixes")
    severed = {
        (w, p.target)
        for w in game.parents_of(p.target)
        if w not in p.parents
    }
    if game.kind(p.target) == DECISION and p.cpd is not None:
        severed.add((rule_node(p.target), p.target))
    out = set()
    for mech, target in build_mechanised_graph(game).inter_mechanism_edges:
        paths = reachability_paths(game, mech, target)
        if paths and all(
            any(e in severed for e in path.edges()) for path in paths
        ):
            out.add((mech, target))
    return out


def minimum_intervention_set(
    game: CausalGame, mech: str, target: str
) -> tuple[str, ...]:
    """Smallest set of object-level variables breaking a mechanism dependency.

    Each reachability path contributes the set of its on-path nodes with an
    incoming on-path edge; the answer is a minimum hitting set over those,
    found by exhaustive search in increasing size with a lexicographic
    tie-break over variable names.
    """
    paths = reachability_paths(game, mech, target)
    if not paths:
        raise InterventionError(
            f"dependency already absent: no reachability paths from {mech} "
            f"to {target}"
        )
    object_nodes = set(game.names())
    hit_sets = []
    for path in paths:
        s = frozenset(
            head for _, head in path.edges() if head in object_nodes
        )
        hit_sets.append(s)
    universe = sorted(set().union(*hit_sets))
    for k in range(1, len(universe) + 1):
        for combo in itertools.combinations(universe, k):
            chosen = set(combo)
            if all(chosen & s for s in hit_sets):
                return tuple(combo)
    raise InterventionError("no hitting set exists")  # unreachable: universe hits


def incentive_invariant(game: CausalGame, intervention) -> bool:
    """Whether the zero/positive reachability pattern survives the intervention.

    Quantifies over mechanism/rule-node pairs present in both the original
    and the intervened game.
    """
    intervened = apply_all(game, [intervention])
    shared = set(game.names()) & set(intervened.names())
    from .graphs import mechanism_node  # local to avoid import noise at top

    for d in game.decisions():
        if d not in shared or intervened.kind(d) != DECISION:
            continue
        target = rule_node(d)
        for v in game.variables:
            if v.name not in shared:
                continue
            mech_before = mechanism_node(game, v.name)
            mech_after = mechanism_node(intervened, v.name)
            if mech_before != mech_after or mech_before == target:
                continue
            pre = bool(reachability_paths(game, mech_before, target))
            post = bool(reachability_paths(intervened, mech_after, target))
            if pre != post:
                return False
    return True


# -- decomposition of visible intervention sets ---------------------------------


@dataclass(frozen=True)
class Stage:
    """One stage of a decomposition: primitives applied, then agents fixing."""

    primitives: tuple[Primitive, ...]
    agents: frozenset
    tags: frozenset  # of (label, inverted: bool)


@dataclass(frozen=True)
class Decomposition:
    """Ordered primitive stages with the agent partition they serve.

    For every agent in a stage's set, the game after the stages up to and
    including that one structurally equals the game under exactly the
    agent's visible interventions.
    """

    stages: tuple[Stage, ...]
    agent_stage: Mapping[int, int]
    labels: tuple[str, ...]
    final_game: CausalGame

    def primitive_sets(self):
        return [s.primitives for s in self.stages]

    def agent_partition(self):
        return [s.agents for s in self.stages]


def _agent_view(game, compounds, visible_labels, common, merge_common):
    order = []
    if merge_common:
        order = [l for l in common if l in visible_labels]
        order += [l for l in visible_labels if l not in common]
    else:
        order = list(visible_labels)
    g = game
    for label in order:
        g, _ = compounds[label].apply(g)
    return g


def decompose(
    game: CausalGame,
    interventions: Sequence,
    visibility: Mapping[int, Iterable[str]],
    agent_order: Sequence[int] | None = None,
    merge_common: bool = True,
) -> Decomposition:
    """Stage a labelled intervention set by per-agent visibility.

    ``interventions`` is a sequence of (label, intervention) pairs in
    application order; ``visibility`` maps each agent to the labels it sees
    (absent agents see nothing).  The commonly visible labels form stage 0,
    whose agent set collects everyone seeing exactly the common set; each
    remaining visibility group gets a stage that first undoes the previous
    group's non-shared primitives and then applies its own.  Interventions
    visible to no one are applied in a trailing agentless stage.  With
    ``merge_common=False`` the common stage is skipped and groups follow
    ``agent_order`` directly, undoing everything the previous group applied.
    """
    labels = [lab for lab, _ in interventions]
    if len(set(labels)) != len(labels):
        raise InterventionError("duplicate intervention labels")
    compounds = {lab: as_compound(iv) for lab, iv in interventions}

    agents = list(range(1, game.n_agents + 1))
    vis: dict[int, tuple[str, ...]] = {}
    for a in agents:
        raw = list(visibility.get(a, ()))
        for lab in raw:
            if lab not in compounds:
                raise InterventionError(
                    f"visibility for agent {a} references unknown "
                    f"intervention {lab!r}"
                )
        vis[a] = tuple(lab for lab in labels if lab in set(raw))

    if agent_order is None:
        ordered_agents = agents
    else:
        if sorted(agent_order) != agents:
            raise InterventionError("agent_order must enumerate every agent")
        ordered_agents = list(agent_order)

    common = [
        lab for lab in labels if all(lab in vis[a] for a in agents)
    ] if agents else []
    common_set = set(common) if merge_common else set()

    # group agents by visible set, ordered by first appearance
    groups: list[tuple[frozenset, list[int]]] = []
    for a in ordered_agents:
        key = frozenset(vis[a])
        for k, members in groups:
            if k == key:
                members.append(a)
                break
        else:
            groups.append((key, [a]))

    stages: list[Stage] = []
    agent_stage: dict[int, int] = {}
    running = game

    def apply_labels(g, labs):
        journaled = []
        prims = []
        for lab in labs:
            g, jc = compounds[lab].apply(g)
            journaled.append((lab, jc))
            prims.extend(jc.steps)
        return g, journaled, prims

    prev_extras: list[tuple[str, CompoundIntervention]] = []

    if merge_common:
        running, _, prims = apply_labels(running, common)
        stage0_agents = frozenset(
            a for a in agents if set(vis[a]) == set(common)
        )
        stages.append(
            Stage(tuple(prims), stage0_agents, frozenset((l, False) for l in common))
        )
        for a in stage0_agents:
            agent_stage[a] = 0
        remaining = [
            (k, m) for k, m in groups if set(k) != set(common)
        ]
    else:
        remaining = groups

    for key, members in remaining:
        prims = []
        tags = set()
        for lab, jc in reversed(prev_extras):
            inv = jc.invert()
            inv_game, jinv = inv.apply(running)
            running = inv_game
            prims.extend(jinv.steps)
            tags.add((lab, True))
        extras = [lab for lab in labels if lab in key and lab not in common_set]
        running, journaled, extra_prims = apply_labels(running, extras)
        prims.extend(extra_prims)
        tags.update((lab, False) for lab in extras)
        prev_extras = journaled
        stages.append(Stage(tuple(prims), frozenset(members), frozenset(tags)))
        for a in members:
            agent_stage[a] = len(stages) - 1

    seen_by_someone = set().union(*(set(v) for v in vis.values())) if vis else set()
    unseen = [lab for lab in labels if lab not in seen_by_someone]
    if unseen:
        running, _, prims = apply_labels(running, unseen)
        stages.append(
            Stage(tuple(prims), frozenset(), frozenset((l, False) for l in unseen))
        )

    dec = Decomposition(tuple(stages), agent_stage, tuple(labels), running)

    # internal consistency: replay each agent's view and compare
    for a in agents:
        j = agent_stage[a]
        g = game
        for s in dec.stages[: j + 1]:
            for prim in s.primitives:
                g = apply_primitive(g, prim)
        view = _agent_view(game, compounds, vis[a], common, merge_common)
        if not games_equal(g, view):
            raise InterventionError(
                f"decomposition failed to reproduce agent {a}'s view"
            )
    return dec
