"""Game and scenario files.

Games are YAML documents with four sections: ``agents`` (count),
``variables`` (name/kind/agent/domain/parents), ``cpds`` (rows keyed by a
comma-joined parent instantiation, with a bare value as sugar for a
degenerate row), and ``rationality``.  Scenarios reference a game file and
add labelled interventions, a visibility map, a query, and options.
Unknown keys are rejected everywhere; parse errors carry line/column where
the YAML parser provides them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Mapping

import yaml

from .errors import GameFileError
from .interventions import (
    AddVariable,
    FixMechanism,
    FixObject,
    RemoveVariable,
    as_compound,
    make_add_edge,
    make_remove_edge,
)
from .model import (
    UTILITY,
    CausalGame,
    TabularCPD,
    Variable,
    validate_game,
)

GAME_KEYS = {"agents", "variables", "cpds", "rationality"}
VARIABLE_KEYS = {"name", "kind", "agent", "domain", "parents"}
SCENARIO_KEYS = {"game", "interventions", "visibility", "query", "options"}
OPTION_KEYS = {
    "mix_ties",
    "merge_common",
    "agent_order",
    "include_behavioral",
    "epsilon",
    "seed",
}
INTERVENTION_KINDS = {
    "fix_object",
    "fix_mechanism",
    "add_var",
    "remove_var",
    "add_edge",
    "del_edge",
    "unfix",
}


def _reject_unknown(mapping, allowed, where, path):
    unknown = set(mapping) - allowed
    if unknown:
        raise GameFileError(
            f"unknown key(s) {sorted(unknown)} in {where}", path=path
        )


def _load_yaml(text, path):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise GameFileError(
                str(getattr(exc, "problem", exc)),
                path=path,
                line=mark.line + 1,
                column=mark.column + 1,
            ) from exc
        raise GameFileError(str(exc), path=path) from exc
    if not isinstance(data, dict):
        raise GameFileError("document must be a mapping", path=path)
    return data


def _context_key(ctx) -> str:
    return ",".join(str(v) for v in ctx)


def _parse_context(key, parents, game_domains, name, path):
    key = str(key)
    tokens = [] if key == "" else key.split(",")
    if len(tokens) != len(parents):
        raise GameFileError(
            f"{name}: context {key!r} has {len(tokens)} values for "
            f"{len(parents)} parents",
            path=path,
        )
    ctx = []
    for tok, parent in zip(tokens, parents):
        tok = tok.strip()
        for v in game_domains[parent]:
            if str(v) == tok:
                ctx.append(v)
                break
        else:
            raise GameFileError(
                f"{name}: context value {tok!r} not in the domain of {parent}",
                path=path,
            )
    return tuple(ctx)


def _parse_cpd(name, spec, parents, domains, path):
    if not isinstance(spec, dict):
        raise GameFileError(
            f"{name}: CPD must map contexts to rows or values", path=path
        )
    domain = domains[name]
    table = {}
    for key, row in spec.items():
        ctx = _parse_context(key, parents, domains, name, path)
        if isinstance(row, (list, tuple)):
            table[ctx] = tuple(float(p) for p in row)
        else:
            matches = [v for v in domain if str(v) == str(row)]
            if not matches:
                raise GameFileError(
                    f"{name}: value {row!r} not in domain", path=path
                )
            idx = domain.index(matches[0])
            table[ctx] = tuple(
                1.0 if i == idx else 0.0 for i in range(len(domain))
            )
    return TabularCPD(name, tuple(parents), table)


def parse_game(text: str, path: str | None = None) -> CausalGame:
    data = _load_yaml(text, path)
    _reject_unknown(data, GAME_KEYS, "game file", path)
    for key in ("agents", "variables", "cpds"):
        if key not in data:
            raise GameFileError(f"missing section {key!r}", path=path)
    rationality = data.get("rationality", "best_response")
    if rationality != "best_response":
        raise GameFileError(
            f"unsupported rationality {rationality!r}", path=path
        )
    if not isinstance(data["agents"], int) or data["agents"] < 1:
        raise GameFileError("'agents' must be a positive integer", path=path)

    variables = []
    parents = {}
    domains = {}
    for entry in data["variables"]:
        if not isinstance(entry, dict):
            raise GameFileError("each variable must be a mapping", path=path)
        _reject_unknown(entry, VARIABLE_KEYS, "variable entry", path)
        for key in ("name", "kind", "domain"):
            if key not in entry:
                raise GameFileError(
                    f"variable entry missing {key!r}", path=path
                )
        name = str(entry["name"])
        kind = str(entry["kind"])
        domain = entry["domain"]
        if kind == UTILITY:
            domain = tuple(float(v) if isinstance(v, float) else v for v in domain)
        else:
            domain = tuple(str(v) for v in domain)
        variables.append(Variable(name, kind, domain, entry.get("agent")))
        parents[name] = tuple(str(p) for p in entry.get("parents", ()))
        domains[name] = domain

    cpds = {}
    if not isinstance(data["cpds"], dict):
        raise GameFileError("'cpds' must be a mapping", path=path)
    for name, spec in data["cpds"].items():
        name = str(name)
        if name not in parents:
            raise GameFileError(f"CPD for unknown variable {name!r}", path=path)
        cpds[name] = _parse_cpd(name, spec, parents[name], domains, path)

    game = CausalGame(data["agents"], tuple(variables), parents, cpds)
    report = validate_game(game)
    if report:
        raise GameFileError(
            "invalid game: " + "; ".join(report), path=path
        )
    return game


def load_game(path: str) -> CausalGame:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise GameFileError(str(exc), path=path) from exc
    return parse_game(text, path)


def game_to_dict(game: CausalGame) -> dict:
    variables = []
    for v in game.variables:
        entry = {"name": v.name, "kind": v.kind}
        if v.agent is not None:
            entry["agent"] = v.agent
        entry["domain"] = list(v.domain)
        if game.parents_of(v.name):
            entry["parents"] = list(game.parents_of(v.name))
        variables.append(entry)
    cpds = {}
    for v in game.variables:
        if v.name not in game.cpds:
            continue
        cpd = game.cpds[v.name]
        cpds[v.name] = {
            _context_key(ctx): [round(p, 12) for p in cpd.row(ctx)]
            for ctx in sorted(cpd.table, key=repr)
        }
    return {
        "agents": game.n_agents,
        "variables": variables,
        "cpds": cpds,
        "rationality": "best_response",
    }


def serialize_game(game: CausalGame) -> str:
    """Deterministic textual form; parse(serialize(g)) equals g structurally."""
    if game.rule_fixes or game.object_fixed:
        raise GameFileError(
            "only base games serialize to the file format; intervened games "
            "carry rule or object fixes"
        )
    return yaml.safe_dump(game_to_dict(game), sort_keys=False)


# -- scenarios -------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """A game plus labelled interventions, visibility, query, and options."""

    game: CausalGame
    interventions: tuple  # ((label, CompoundIntervention), ...)
    visibility: Mapping[int, tuple]
    query: str | None
    options: Mapping[str, object] = field(default_factory=dict)


def _intervention_cpd(game, name, spec, parents, path, value=None):
    domains = {v.name: v.domain for v in game.variables}
    if value is not None:
        dom = game.domain(name)
        matches = [v for v in dom if str(v) == str(value)]
        if not matches:
            raise GameFileError(
                f"{name}: value {value!r} not in domain", path=path
            )
        idx = dom.index(matches[0])
        row = tuple(1.0 if i == idx else 0.0 for i in range(len(dom)))
        import itertools as _it

        contexts = [tuple(c) for c in _it.product(*[domains[p] for p in parents])]
        return TabularCPD(name, tuple(parents), {c: row for c in contexts})
    return _parse_cpd(name, spec, parents, domains, path)


def _build_primitive(game, entry, journaled, path):
    kind = entry.get("kind")
    if kind not in INTERVENTION_KINDS:
        raise GameFileError(
            f"unknown intervention kind {kind!r}", path=path
        )
    allowed = {
        "fix_object": {"label", "kind", "target", "parents", "rows", "value"},
        "fix_mechanism": {"label", "kind", "target", "rows", "value"},
        "add_var": {
            "label", "kind", "name", "var_kind", "agent", "domain",
            "parents", "children", "rows", "value",
        },
        "remove_var": {"label", "kind", "name"},
        "add_edge": {"label", "kind", "from", "to"},
        "del_edge": {"label", "kind", "from", "to"},
        "unfix": {"label", "kind", "of"},
    }[kind]
    _reject_unknown(entry, allowed, f"{kind} intervention", path)

    if kind == "fix_object":
        target = str(entry["target"])
        parents = tuple(str(p) for p in entry.get("parents", ()))
        if "value" in entry:
            cpd = _intervention_cpd(game, target, None, parents, path, entry["value"])
        elif "rows" in entry:
            cpd = _intervention_cpd(game, target, entry["rows"], parents, path)
        else:
            cpd = None
        return FixObject(target, parents, cpd)
    if kind == "fix_mechanism":
        target = str(entry["target"])
        var = target.split("_", 1)[1] if "_" in target else target
        if not game.has_variable(var):
            raise GameFileError(
                f"mechanism target {target!r} names no variable", path=path
            )
        parents = game.parents_of(var)
        if "value" in entry:
            cpd = _intervention_cpd(game, var, None, parents, path, entry["value"])
        elif "rows" in entry:
            cpd = _intervention_cpd(game, var, entry["rows"], parents, path)
        else:
            cpd = None
        return FixMechanism(target, cpd)
    if kind == "add_var":
        name = str(entry["name"])
        var_kind = str(entry.get("var_kind", "chance"))
        domain = entry["domain"]
        if var_kind == UTILITY:
            domain = tuple(float(v) if isinstance(v, float) else v for v in domain)
        else:
            domain = tuple(str(v) for v in domain)
        variable = Variable(name, var_kind, domain, entry.get("agent"))
        parents = tuple(str(p) for p in entry.get("parents", ()))
        children = tuple(str(c) for c in entry.get("children", ()))
        domains = {v.name: v.domain for v in game.variables}
        domains[name] = domain
        cpd = None
        if "value" in entry:
            dom = domain
            matches = [v for v in dom if str(v) == str(entry["value"])]
            if not matches:
                raise GameFileError(
                    f"{name}: value {entry['value']!r} not in domain", path=path
                )
            idx = dom.index(matches[0])
            row = tuple(1.0 if i == idx else 0.0 for i in range(len(dom)))
            import itertools as _it

            contexts = [
                tuple(c) for c in _it.product(*[domains[p] for p in parents])
            ]
            cpd = TabularCPD(name, parents, {c: row for c in contexts})
        elif "rows" in entry:
            spec = entry["rows"]
            table = {}
            for key, row in spec.items():
                ctx = _parse_context(key, parents, domains, name, path)
                table[ctx] = tuple(float(p) for p in row)
            cpd = TabularCPD(name, parents, table)
        return AddVariable(variable, parents, children, cpd=cpd)
    if kind == "remove_var":
        return RemoveVariable(str(entry["name"]))
    if kind in ("add_edge", "del_edge"):
        src, dst = str(entry["from"]), str(entry["to"])
        maker = make_add_edge if kind == "add_edge" else make_remove_edge
        return maker(game, src, dst)
    # unfix
    ref = str(entry["of"])
    if ref not in journaled:
        raise GameFileError(
            f"unfix references unknown or not-yet-applied label {ref!r}",
            path=path,
        )
    return journaled[ref].invert()


def parse_scenario(
    text: str,
    path: str | None = None,
    base_dir: str = ".",
    game_loader=None,
) -> Scenario:
    data = _load_yaml(text, path)
    _reject_unknown(data, SCENARIO_KEYS, "scenario file", path)
    if "game" not in data:
        raise GameFileError("missing 'game' reference", path=path)
    if game_loader is not None:
        game = game_loader(str(data["game"]))
    else:
        game = load_game(os.path.join(base_dir, str(data["game"])))

    interventions = []
    journaled = {}
    running = game
    for i, entry in enumerate(data.get("interventions", ()) or ()):
        if not isinstance(entry, dict):
            raise GameFileError("each intervention must be a mapping", path=path)
        label = str(entry.get("label", f"i{i}"))
        if label in journaled:
            raise GameFileError(
                f"duplicate intervention label {label!r}", path=path
            )
        prim = _build_primitive(running, entry, journaled, path)
        compound = as_compound(prim)
        running, jc = compound.apply(running)
        journaled[label] = jc
        interventions.append((label, compound))

    visibility = {}
    for agent, labels in (data.get("visibility", {}) or {}).items():
        try:
            agent_idx = int(agent)
        except (TypeError, ValueError):
            raise GameFileError(
                f"visibility keys must be agent indices, got {agent!r}",
                path=path,
            )
        labels = tuple(str(l) for l in (labels or ()))
        for l in labels:
            if l not in journaled:
                raise GameFileError(
                    f"visibility references unknown intervention {l!r}",
                    path=path,
                )
        visibility[agent_idx] = labels

    options = dict(data.get("options", {}) or {})
    _reject_unknown(options, OPTION_KEYS, "options", path)
    query = data.get("query")
    return Scenario(
        game,
        tuple(interventions),
        visibility,
        str(query) if query is not None else None,
        options,
    )


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise GameFileError(str(exc), path=path) from exc
    return parse_scenario(text, path, base_dir=os.path.dirname(path) or ".")
