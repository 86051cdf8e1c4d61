"""Shared test utilities: random game generators and independent oracles.

The oracles here deliberately avoid the library's own computation paths:
joints are rebuilt by direct nested loops over instantiations, conditional
independence is checked numerically on the joint table, and hitting sets
are verified by exhaustive subset scans.
"""

from __future__ import annotations

import itertools
import random

from causalgames.model import (
    CausalGame,
    PolicyProfile,
    TabularCPD,
    Variable,
)


def random_distribution(rng, n):
    cuts = sorted(rng.random() for _ in range(n - 1))
    row = []
    prev = 0.0
    for c in cuts:
        row.append(c - prev)
        prev = c
    row.append(1.0 - prev)
    return tuple(row)


def random_cbn(rng: random.Random, max_vars=5, max_parents=2) -> CausalGame:
    """A random chance-only game (a causal Bayesian network)."""
    n = rng.randint(3, max_vars)
    names = [f"X{i}" for i in range(n)]
    variables = []
    parents = {}
    cpds = {}
    domains = {}
    for i, name in enumerate(names):
        dom = tuple(f"v{k}" for k in range(rng.randint(2, 3)))
        domains[name] = dom
        pool = names[:i]
        k = rng.randint(0, min(max_parents, len(pool)))
        ps = tuple(sorted(rng.sample(pool, k)))
        variables.append(Variable(name, "chance", dom))
        parents[name] = ps
        table = {}
        for ctx in itertools.product(*[domains[p] for p in ps]):
            table[ctx] = random_distribution(rng, len(dom))
        cpds[name] = TabularCPD(name, ps, table)
    return CausalGame(1, tuple(variables), parents, cpds)


def random_game(rng: random.Random, max_chance=3) -> CausalGame:
    """A random small causal game with 1-2 agents, one decision each."""
    n_agents = rng.randint(1, 2)
    n_chance = rng.randint(0, max_chance)
    names = [f"X{i}" for i in range(n_chance)]
    variables = []
    parents = {}
    cpds = {}
    domains = {}
    for i, name in enumerate(names):
        dom = tuple(f"v{k}" for k in range(rng.randint(2, 3)))
        domains[name] = dom
        pool = names[:i]
        k = rng.randint(0, min(2, len(pool)))
        ps = tuple(sorted(rng.sample(pool, k)))
        variables.append(Variable(name, "chance", dom))
        parents[name] = ps
        table = {}
        for ctx in itertools.product(*[domains[p] for p in ps]):
            table[ctx] = random_distribution(rng, len(dom))
        cpds[name] = TabularCPD(name, ps, table)
    upstream = list(names)
    for agent in range(1, n_agents + 1):
        dname = f"D{agent}"
        dom = ("a", "b")
        domains[dname] = dom
        k = rng.randint(0, min(2, len(upstream)))
        ps = tuple(sorted(rng.sample(upstream, k)))
        variables.append(Variable(dname, "decision", dom, agent))
        parents[dname] = ps
        upstream.append(dname)
    for agent in range(1, n_agents + 1):
        uname = f"U{agent}"
        udom = tuple(sorted(rng.sample(range(-5, 6), rng.randint(2, 3))))
        domains[uname] = udom
        k = rng.randint(1, min(2, len(upstream)))
        ps = tuple(sorted(rng.sample(upstream, k)))
        variables.append(Variable(uname, "utility", udom, agent))
        parents[uname] = ps
        table = {}
        for ctx in itertools.product(*[domains[p] for p in ps]):
            table[ctx] = random_distribution(rng, len(udom))
        cpds[uname] = TabularCPD(uname, ps, table)
    return CausalGame(n_agents, tuple(variables), parents, cpds)


def random_full_profile(rng: random.Random, game: CausalGame) -> PolicyProfile:
    rules = {}
    for d in game.free_decisions():
        table = {}
        for ctx in game.contexts(d):
            table[tuple(ctx)] = random_distribution(rng, len(game.domain(d)))
        rules[d] = TabularCPD(d, game.parents_of(d), table)
    return PolicyProfile(rules)


# -- independent oracles -------------------------------------------------------


def brute_force_joint(game: CausalGame, profile: PolicyProfile) -> dict:
    """Joint table via direct nested loops, independent of induced_joint."""
    names = list(game.names())
    out = {}

    def recurse(i, assignment, prob):
        if i == len(names):
            if prob > 0.0:
                out[tuple(assignment[n] for n in names)] = (
                    out.get(tuple(assignment[n] for n in names), 0.0) + prob
                )
            return
        name = names[i]
        if name in game.cpds:
            cpd = game.cpds[name]
        elif name in game.rule_fixes:
            cpd = game.rule_fixes[name]
        else:
            cpd = profile[name]
        ctx = tuple(assignment[p] for p in game.parents_of(name))
        row = cpd.row(ctx)
        for value, p in zip(game.domain(name), row):
            assignment[name] = value
            recurse(i + 1, assignment, prob * p)
            del assignment[name]

    recurse(0, {}, 1.0)
    return out


def numeric_conditional_independence(
    joint: dict, names: list, domains: dict, xs, zs, given, tol=1e-7
) -> bool:
    """Check P(x | y, z) == P(x | y) for all instantiations with P(y, z) > 0."""
    xs, zs, given = sorted(xs), sorted(zs), sorted(given)

    def marg(assign):
        idx = {names.index(k): v for k, v in assign.items()}
        return sum(
            p
            for inst, p in joint.items()
            if all(inst[i] == v for i, v in idx.items())
        )

    for yvals in itertools.product(*[domains[y] for y in given]):
        y_assign = dict(zip(given, yvals))
        p_y = marg(y_assign)
        if p_y <= 0.0:
            continue
        for zvals in itertools.product(*[domains[z] for z in zs]):
            yz_assign = {**y_assign, **dict(zip(zs, zvals))}
            p_yz = marg(yz_assign)
            if p_yz <= 0.0:
                continue
            for xvals in itertools.product(*[domains[x] for x in xs]):
                x_assign = dict(zip(xs, xvals))
                lhs = marg({**yz_assign, **x_assign}) / p_yz
                rhs = marg({**y_assign, **x_assign}) / p_y
                if abs(lhs - rhs) > tol:
                    return False
    return True


def is_minimum_hitting_set(chosen, sets) -> bool:
    """Exhaustively confirm minimality and coverage."""
    chosen = set(chosen)
    if not all(chosen & s for s in sets):
        return False
    universe = sorted(set().union(*sets))
    for k in range(1, len(chosen)):
        for combo in itertools.combinations(universe, k):
            if all(set(combo) & s for s in sets):
                return False
    return True
