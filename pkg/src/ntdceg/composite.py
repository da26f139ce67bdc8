"""Composite models from panel-built NT-DCEGs.

Each panel stages the shared slice tree for the units behind some leaves of
the time-invariant tree.  The panels' stagings are installed under their
leaves and a declared colour agreement unions selected stages across panels.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .model import (
    DEFAULT_TOL,
    EventTree,
    ModelError,
    Segment,
    Stage,
    StagedTreePrefix,
    TogSpec,
    Vertex,
    validate_event_tree,
    validate_staging,
)
from .positions import build_ntdceg, compute_positions


class MergeError(ModelError):
    pass


@dataclass(frozen=True)
class Panel:
    id: str
    leaves: tuple[Segment, ...]
    model: StagedTreePrefix


@dataclass(frozen=True)
class Agreement:
    """Join stage ``a`` of one panel with stage ``b`` of another.

    ``label_map`` sends b's canonical labels onto a's (identity when omitted);
    ``probs``, in a's label order, replaces both vectors.
    """

    a: tuple[str, str]
    b: tuple[str, str]
    probs: tuple[float, ...] | None = None
    label_map: Mapping[str, str] | None = None


@dataclass(frozen=True)
class MergePlan:
    t_minus1: EventTree
    t_minus1_stages: Mapping[str, Stage]
    panels: tuple[Panel, ...]
    agreement: tuple[Agreement, ...] = ()
    tol: float = DEFAULT_TOL


@dataclass
class MergeReport:
    stages: int
    merged: list[list[str]] = field(default_factory=list)
    replaced: list[str] = field(default_factory=list)


def _ns(panel: str, stage: str) -> str:
    return f"{panel}:{stage}"


def validate_plan(plan: MergePlan) -> list[str]:
    errors = []
    rep = validate_event_tree(plan.t_minus1)
    errors += [f"t_minus1: {e}" for e in rep.errors]
    if not plan.panels:
        errors.append("no panels")
        return errors
    base = plan.panels[0].model
    ids = [p.id for p in plan.panels]
    if len(set(ids)) != len(ids):
        errors.append("duplicate panel ids")
    leaves = {path for v, path in plan.t_minus1.label_paths().items() if not plan.t_minus1.children[v]}
    owned: dict[Segment, str] = {}
    for p in plan.panels:
        if p.model.tog.t_minus1 is not None:
            errors.append(f"panel {p.id}: panel models must not carry their own time-invariant tree")
        if p.model.tog.t_slice.to_nested() != base.tog.t_slice.to_nested():
            errors.append(f"panel {p.id}: slice tree differs from panel {plan.panels[0].id}")
        if p.model.horizon != base.horizon:
            errors.append(f"panel {p.id}: horizon {p.model.horizon} differs from {base.horizon}")
        for leaf in p.leaves:
            if leaf not in leaves:
                errors.append(f"panel {p.id}: {'.'.join(leaf)!r} is not a leaf of the time-invariant tree")
            elif leaf in owned:
                errors.append(f"leaf {'.'.join(leaf)!r} owned by panels {owned[leaf]} and {p.id}")
            else:
                owned[leaf] = p.id
    missing = leaves - owned.keys()
    if missing:
        errors.append(f"leaves without a panel: {sorted('.'.join(x) for x in missing)}")
    stage_ids = {p.id: p.model.stages for p in plan.panels}
    for ag in plan.agreement:
        sides = []
        for pid, sid in (ag.a, ag.b):
            if pid not in stage_ids or sid not in stage_ids[pid]:
                errors.append(f"agreement refers to unknown stage {pid}:{sid}")
            else:
                sides.append(stage_ids[pid][sid])
        if len(sides) < 2:
            continue
        sa, sb = sides
        if ag.a[0] == ag.b[0]:
            errors.append(f"agreement {_ns(*ag.a)} ~ {_ns(*ag.b)} joins two stages of one panel")
        if len(sa.label_order) != len(sb.label_order):
            errors.append(
                f"arity mismatch: {_ns(*ag.a)} has {len(sa.label_order)} outcomes, {_ns(*ag.b)} has {len(sb.label_order)}"
            )
            continue
        lm = ag.label_map or {x: x for x in sb.label_order}
        if sorted(lm.get(x, "\0") for x in sb.label_order) != sorted(sa.label_order):
            errors.append(f"agreement {_ns(*ag.a)} ~ {_ns(*ag.b)}: labels do not correspond")
        if ag.probs is not None and (len(ag.probs) != len(sa.label_order) or abs(sum(ag.probs) - 1) > plan.tol or min(ag.probs) < 0):
            errors.append(f"agreement {_ns(*ag.a)} ~ {_ns(*ag.b)}: replacement vector is not a probability vector")
    return errors


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def merge_panels(plan: MergePlan, report: MergeReport | None = None) -> StagedTreePrefix:
    errors = validate_plan(plan)
    if errors:
        raise MergeError("; ".join(errors))
    base = plan.panels[0].model
    tog = TogSpec(base.tog.t_slice, plan.t_minus1)
    # namespaced stages with composite situations and per-situation label maps
    members: dict[str, list[Vertex]] = {}
    maps: dict[str, dict[Vertex, Mapping[str, str]]] = {}
    vectors: dict[str, tuple[tuple[str, ...], tuple[float, ...]]] = {}
    for sid, st in plan.t_minus1_stages.items():
        key = _ns("T-1", sid)
        members[key] = list(st.situations)
        maps[key] = dict(st.label_maps)
        vectors[key] = (st.label_order, st.probs)
    for p in sorted(plan.panels, key=lambda p: p.id):
        for sid, st in p.model.stages.items():
            key = _ns(p.id, sid)
            vs, lm = [], {}
            for leaf in sorted(p.leaves):
                for v in st.situations:
                    cv = (leaf,) + v
                    vs.append(cv)
                    if v in st.label_maps:
                        lm[cv] = st.label_maps[v]
            members[key] = vs
            maps[key] = lm
            vectors[key] = (st.label_order, st.probs)
    uf = _UnionFind()
    for key in members:
        uf.find(key)
    # relabelling of b's canonical labels onto a's, composed along the union
    relabel: dict[str, dict[str, str]] = {}
    replacement: dict[str, tuple[float, ...]] = {}
    agreements = sorted(plan.agreement, key=lambda ag: (min(_ns(*ag.a), _ns(*ag.b)), max(_ns(*ag.a), _ns(*ag.b))))
    edges: dict[str, list[tuple[str, dict[str, str]]]] = defaultdict(list)
    for ag in agreements:
        ka, kb = _ns(*ag.a), _ns(*ag.b)
        lm = dict(ag.label_map or {x: x for x in vectors[kb][0]})
        # each entry maps the neighbour's labels onto the owner's labels
        edges[ka].append((kb, lm))
        edges[kb].append((ka, _inverse(lm)))
        uf.union(ka, kb)
        if ag.probs is not None:
            replacement[ka] = tuple(ag.probs)
    groups: dict[str, list[str]] = defaultdict(list)
    for key in members:
        groups[uf.find(key)].append(key)
    stages: dict[str, Stage] = {}
    for root, keys in sorted(groups.items()):
        keys.sort()
        head = keys[0]
        # breadth-first label translation from every member onto the head's labels
        to_head = {head: {x: x for x in vectors[head][0]}}
        queue = [head]
        while queue:
            k = queue.pop(0)
            for nb, m in edges[k]:
                if nb not in to_head:
                    to_head[nb] = {y: to_head[k][m[y]] for y in vectors[nb][0]}
                    queue.append(nb)
        order, probs = vectors[head]
        explicit = {}
        for k in keys:
            if k in replacement:
                # replacement vectors are given in the label order of the agreement's a-side
                back = _inverse(to_head[k])
                explicit[k] = tuple(replacement[k][vectors[k][0].index(back[x])] for x in order)
        if explicit:
            vecs = list(explicit.values())
            if any(max(abs(a - b) for a, b in zip(vecs[0], v)) > plan.tol for v in vecs[1:]):
                raise MergeError(f"conflicting replacement vectors for {'|'.join(keys)}")
            probs = vecs[0]
            if report is not None:
                report.replaced.append("|".join(keys))
        else:
            for k in keys[1:]:
                o, pk = vectors[k]
                mapped = {to_head[k][x]: p for x, p in zip(o, pk)}
                if any(abs(mapped[x] - p) > plan.tol for x, p in zip(order, probs)):
                    raise MergeError(
                        f"probability conflict between {head} and {k} without a replacement vector"
                    )
        name = "|".join(keys)
        situations, label_maps = [], {}
        for k in keys:
            for v in members[k]:
                situations.append(v)
                own = maps[k].get(v)
                labels = tog.labels(v)
                canon = {x: (own[x] if own else x) for x in labels}
                composed = {x: to_head[k][canon[x]] for x in labels}
                if any(a != b for a, b in composed.items()):
                    label_maps[v] = composed
        stages[name] = Stage(tuple(situations), tuple(probs), tuple(order), label_maps)
        if report is not None and len(keys) > 1:
            report.merged.append(keys)
    prefix = StagedTreePrefix(tog, base.horizon, dict(sorted(stages.items())), plan.tol)
    rep = validate_staging(prefix)
    if not rep.ok:
        raise MergeError("composite staging invalid: " + "; ".join(rep.errors[:5]))
    if report is not None:
        report.stages = len(stages)
    return prefix


def _inverse(m: Mapping[str, str]) -> dict[str, str]:
    return {v: k for k, v in m.items()}


# ---------------------------------------------------------------------------
# conservativity


@dataclass
class ConservativityReport:
    panel: str
    ok: bool
    composite_blocks: int
    panel_blocks: int
    mismatches: list = field(default_factory=list)


def conservativity(plan: MergePlan, composite: StagedTreePrefix) -> list[ConservativityReport]:
    """Compare, leaf by leaf, composite positions inside each panel's subtree with the panel's own."""
    comp_blocks = compute_positions(composite)
    out = []
    for p in plan.panels:
        own = compute_positions(p.model)
        ok = True
        mismatches = []
        for leaf in p.leaves:
            lifted: dict[int, set] = defaultdict(set)
            mine: dict[int, set] = defaultdict(set)
            for v, b in own.items():
                cv = (leaf,) + v
                if cv in comp_blocks:
                    lifted[comp_blocks[cv]].add(v)
                mine[b].add(v)
            a = {frozenset(x) for x in lifted.values()}
            b = {frozenset(x) for x in mine.values()}
            if a != b:
                ok = False
                mismatches.append(".".join(leaf))
        out.append(ConservativityReport(p.id, ok, len({b for v, b in comp_blocks.items()}), len(set(own.values())), mismatches))
    return out


def restrict_to_panel(plan: MergePlan, composite: StagedTreePrefix, panel_id: str) -> StagedTreePrefix:
    """The panel's own staging recovered from the composite by undoing cross-panel merges."""
    panel = next(p for p in plan.panels if p.id == panel_id)
    leaf = sorted(panel.leaves)[0]
    prefix_ns = f"{panel_id}:"
    stages = {}
    for name, st in composite.stages.items():
        for part in name.split("|"):
            if not part.startswith(prefix_ns):
                continue
            sid = part[len(prefix_ns):]
            original = panel.model.stages[sid]
            stages[sid] = original
            vs = [v[1:] for v in st.situations if v[0] == leaf and v[1:] in set(original.situations)]
            if set(vs) != set(original.situations):
                raise MergeError(f"stage {sid} of panel {panel_id} lost situations in the composite")
    return StagedTreePrefix(panel.model.tog, panel.model.horizon, stages, composite.tol)


def example_plan() -> MergePlan:
    """The two-panel conviction/nationality plan built from the fixtures."""
    from .fixtures import panel2_model, radicalisation_model, radicalisation_tog

    tog = radicalisation_tog(with_conviction=True)
    t1 = tog.t_minus1
    t1_stages = {
        "c": Stage((((),),), (0.3, 0.7), ("y", "n")),
        "ny": Stage(((("y",),),), (0.6, 0.4), ("b", "f")),
        "nn": Stage(((("n",),),), (0.8, 0.2), ("b", "f")),
    }
    panels = (
        Panel("p1", (("y", "b"), ("y", "f")), radicalisation_model()),
        Panel("p2", (("n", "b"), ("n", "f")), panel2_model()),
    )
    agreement = (
        Agreement(("p2", "uc"), ("p1", "u9"), probs=(0.3, 0.3, 0.4)),
        Agreement(("p2", "ue"), ("p1", "u14")),
        Agreement(("p2", "ug"), ("p1", "u6")),
    )
    return MergePlan(t1, t1_stages, panels, agreement)
