"""Deterministic DOT export of object and mechanised graphs."""

from __future__ import annotations

from .graphs import build_mechanised_graph, independent_mechanised_graph, mechanism_node
from .model import CHANCE, DECISION, UTILITY, CausalGame

_AGENT_COLORS = (
    "firebrick",
    "royalblue",
    "forestgreen",
    "darkorange",
    "purple",
    "teal",
)

_SHAPES = {CHANCE: "ellipse", DECISION: "box", UTILITY: "diamond"}

WHICH = ("object", "mechanised", "independent_mechanised")


def _object_node_line(game, v):
    attrs = [f"shape={_SHAPES[v.kind]}"]
    if v.agent is not None:
        attrs.append(f"color={_AGENT_COLORS[(v.agent - 1) % len(_AGENT_COLORS)]}")
    return f'  "{v.name}" [{", ".join(attrs)}];'


def export_dot(game: CausalGame, which: str = "object") -> str:
    """Graph description text with stable node and edge ordering.

    Object nodes are styled by kind and agent, mechanism nodes are dashed,
    and inter-mechanism edges are grey.
    """
    if which not in WHICH:
        raise ValueError(f"which must be one of {WHICH}, got {which!r}")
    lines = ["digraph G {"]
    for v in game.variables:
        lines.append(_object_node_line(game, v))
    for v in game.variables:
        for p in game.parents_of(v.name):
            lines.append(f'  "{p}" -> "{v.name}";')
    if which != "object":
        mech_edges = []
        if which == "mechanised":
            mg = build_mechanised_graph(game)
            inter = sorted(mg.inter_mechanism_edges)
            mech_edges = list(mg.mechanism_edges)
        else:
            graph = independent_mechanised_graph(game)
            inter = []
            mech_edges = [
                (mechanism_node(game, v.name), v.name)
                for v in game.variables
                if v.name not in game.object_fixed
            ]
        for v in game.variables:
            m = mechanism_node(game, v.name)
            lines.append(f'  "{m}" [shape=ellipse, style=dashed, color=gray40];')
        for src, dst in mech_edges:
            lines.append(f'  "{src}" -> "{dst}" [color=gray];')
        for src, dst in inter:
            lines.append(f'  "{src}" -> "{dst}" [color=gray];')
    lines.append("}")
    return "\n".join(lines) + "\n"
