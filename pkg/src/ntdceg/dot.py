"""DOT export of NT-DCEGs and finite CEGs."""

from __future__ import annotations

import re

from .positions import CEG, NTDCEG

PALETTE = (
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462",
    "#b3de69", "#fccde5", "#d9d9d9", "#bc80bd", "#ccebc5", "#ffed6f",
)


def _natural(s: str):
    return [int(x) if x.isdigit() else x for x in re.split(r"(\d+)", s)]


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def _quote(s: str) -> str:
    return '"' + _escape(s) + '"'


def _prob(p: float) -> str:
    return f"{p:.6g}"


def _node_label(name: str, stage: str) -> str:
    # the line break is a DOT escape, so it is added after escaping
    return '"' + _escape(name) + "\\n" + _escape(stage) + '"'


def _edge_label(label: str, p: float) -> str:
    return _quote(f"{label} : {_prob(p)}")


def stage_colours(stages) -> dict[str, str]:
    """Stage id -> fill colour, stable under stage-id order.

    Colours repeat after twelve stages, so the stage id is also written into
    each node label.
    """
    return {s: PALETTE[i % len(PALETTE)] for i, s in enumerate(sorted(stages, key=_natural))}


def ntdceg_to_dot(model: NTDCEG, name: str = "ntdceg") -> str:
    colours = stage_colours(model.stages)
    lines = [f"digraph {_quote(name)} {{", "  rankdir=LR;", '  node [shape=circle, style=filled, fontsize=10];']
    for region, title in (("D_I", "initial"), ("D_H", "cyclic")):
        members = model.subgraph(region)
        if not members:
            continue
        lines.append(f"  subgraph cluster_{region} {{")
        lines.append(f"    label={_quote(f'{region} ({title})')};")
        for n in sorted(members, key=_natural):
            stage = model.positions[n].stage
            lines.append(f"    {_quote(n)} [label={_node_label(n, stage)}, fillcolor={_quote(colours[stage])}];")
        lines.append("  }")
    for s in model.sinks:
        lines.append(f"  {_quote(s)} [shape=doublecircle, fillcolor=\"white\"];")
    for e in model.edges:
        attrs = [f"label={_edge_label(e.label, e.prob)}"]
        if e.kind != "within":
            attrs.append("style=dashed")
        if e.kind == "cyclic":
            attrs.append("constraint=false")
        lines.append(f"  {_quote(e.source)} -> {_quote(e.target)} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def ceg_to_dot(ceg: CEG, model: NTDCEG, name: str | None = None) -> str:
    colours = stage_colours(model.stages)
    name = name or f"ceg_{ceg.t}"
    lines = [f"digraph {_quote(name)} {{", "  rankdir=LR;", '  node [shape=circle, style=filled, fontsize=10];']
    for n in sorted(ceg.nodes, key=_natural):
        stage = ceg.nodes[n].stage
        lines.append(f"  {_quote(n)} [label={_node_label(n, stage)}, fillcolor={_quote(colours[stage])}];")
    lines.append(f"  {_quote(ceg.sink)} [shape=doublecircle, fillcolor=\"white\"];")
    for e in ceg.edges:
        lines.append(f"  {_quote(e.source)} -> {_quote(e.target)} [label={_edge_label(e.label, e.prob)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
