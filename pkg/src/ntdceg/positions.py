"""T-positions, the NT-DCEG graph and its family of finite CEGs."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable

from .model import (
    HomogeneityError,
    ModelError,
    SizeGuardError,
    StagedTreePrefix,
    TogSpec,
    Vertex,
    parse_vertex,
    sort_key,
    unroll_tog,
    unrolled_vertices,
    validate_staging,
)

LEAF = "LEAF"
GLOBAL_SINK = "winf"


def sink_name(t: int | None) -> str:
    return GLOBAL_SINK if t is None else f"winf{t}"


def _refine(nodes: list[Hashable], initial: dict, signature) -> dict:
    """Moore-style partition refinement.

    ``signature(node, block)`` must return a hashable summary of the node's
    outgoing structure in terms of the current ``block`` map.  Returns the
    coarsest stable map node -> block index.
    """
    keys = {}
    block = {}
    for n in nodes:
        block[n] = keys.setdefault(initial[n], len(keys))
    count = len(keys)
    while True:
        keys = {}
        new = {}
        for n in nodes:
            new[n] = keys.setdefault((block[n], signature(n, block)), len(keys))
        if len(keys) == count:
            return new
        block, count = new, len(keys)


def _follow(prefix: StagedTreePrefix, v: Vertex, label: str):
    """Child of ``v`` folded back into slices -1..N-1 plus its kind."""
    tog = prefix.tog
    c = tog.child(v, label)
    crosses = len(c) > len(v)
    if tog.is_terminal(c):
        return LEAF, crosses
    while tog.slice_of(c) > prefix.horizon - 1:
        c = tog.shift(c)
    return c, crosses


def compute_positions(prefix: StagedTreePrefix, check: bool = True) -> dict[Vertex, int]:
    """Partition the situations of slices -1..N-1 into (N-1)-positions.

    Situations at slices >= N are represented by their time shift into slice
    N-1, which the homogeneity contract makes equivalent.  Returns a map from
    each representative situation to a block index.
    """
    if check:
        validate_staging(prefix).raise_if_failed(
            lambda msg: HomogeneityError(msg) if "homogeneity" in msg else ModelError(msg)
        )
    tog = prefix.tog
    nodes = unrolled_vertices(tog, prefix.horizon)[0]
    initial = {v: (prefix.stage_of(v), prefix.slice_class(v)) for v in nodes}
    succ = {}
    for v in nodes:
        out = []
        for label in tog.labels(v):
            c, crosses = _follow(prefix, v, label)
            out.append((label, prefix.canonical_label(v, label), crosses, c))
        succ[v] = out

    def signature(v, block):
        return tuple(
            (label, canon, crosses, LEAF if c == LEAF else block[c]) for label, canon, crosses, c in succ[v]
        )

    return _refine(nodes, initial, signature)


@dataclass(frozen=True)
class Position:
    name: str
    situations: tuple[Vertex, ...]
    stage: str
    slice_class: int | str  # an int for the initial part, "H" for the homogeneous part
    representative: Vertex

    @property
    def region(self) -> str:
        return "D_H" if self.slice_class == "H" else "D_I"


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    label: str
    prob: float
    kind: str  # "within", "temporal" (E_dagger) or "cyclic" (E_circ)
    canonical: str = ""


@dataclass
class NTDCEG:
    prefix: StagedTreePrefix
    positions: dict[str, Position]
    edges: list[Edge]
    sinks: list[str]
    block_of: dict[Vertex, str] = field(repr=False)

    @property
    def horizon(self) -> int:
        return self.prefix.horizon

    @property
    def tog(self) -> TogSpec:
        return self.prefix.tog

    @property
    def root(self) -> str:
        return self.block_of[self.tog.root()]

    @cached_property
    def out_edges(self) -> dict[str, list[Edge]]:
        out: dict[str, list[Edge]] = {n: [] for n in list(self.positions) + self.sinks}
        for e in self.edges:
            out[e.source].append(e)
        return out

    @property
    def stage_colour(self) -> dict[str, str]:
        return {n: p.stage for n, p in self.positions.items()}

    @property
    def stages(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for n, p in self.positions.items():
            out[p.stage].append(n)
        return dict(out)

    @property
    def temporal_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.kind == "temporal"]

    @property
    def cyclic_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.kind == "cyclic"]

    def subgraph(self, region: str) -> list[str]:
        return [n for n, p in self.positions.items() if p.region == region]

    def position_of(self, v: Vertex) -> str:
        """Position of any situation of the infinite tree."""
        while self.tog.slice_of(v) > self.horizon - 1:
            v = self.tog.shift(v)
        return self.block_of[v]

    def slice_of_position(self, name: str, t: int | None = None) -> int:
        p = self.positions[name]
        if p.slice_class == "H":
            return self.horizon - 1 if t is None else t
        return p.slice_class

    def check_invariants(self, tol: float = 1e-9) -> list[str]:
        """Return violated structural invariants (empty when all hold)."""
        import networkx as nx

        problems = []
        for n in self.positions:
            total = sum(e.prob for e in self.out_edges[n])
            if abs(total - 1.0) > tol:
                problems.append(f"{n}: outgoing probabilities sum to {total}")
        g = nx.MultiDiGraph()
        g.add_nodes_from(self.positions)
        g.add_edges_from((e.source, e.target) for e in self.edges if e.kind != "cyclic" and e.target in self.positions)
        if not nx.is_directed_acyclic_graph(g):
            problems.append("a cycle avoids every cyclical temporal edge")
        di = g.subgraph(self.subgraph("D_I"))
        if not nx.is_directed_acyclic_graph(di):
            problems.append("D_I is not acyclic")
        by_stage = defaultdict(set)
        for n, p in self.positions.items():
            vec = tuple(sorted((e.canonical, round(e.prob / tol)) for e in self.out_edges[n]))
            by_stage[p.stage].add(vec)
        for s, vecs in by_stage.items():
            if len(vecs) > 1:
                problems.append(f"stage {s}: positions disagree on their probability vectors")
        return problems


def build_ntdceg(prefix: StagedTreePrefix, check: bool = True) -> NTDCEG:
    blocks = compute_positions(prefix, check=check)
    tog = prefix.tog
    n_slices_last = prefix.horizon - 1
    members: dict[int, list[Vertex]] = defaultdict(list)
    for v, b in blocks.items():
        members[b].append(v)
    for vs in members.values():
        vs.sort(key=lambda v: sort_key(tog, v))
    order = sorted(members, key=lambda b: sort_key(tog, members[b][0]))
    name_of = {b: f"w{i}" for i, b in enumerate(order)}
    positions = {}
    for b in order:
        rep = members[b][0]
        positions[name_of[b]] = Position(
            name=name_of[b],
            situations=tuple(members[b]),
            stage=prefix.stage_of(rep),
            slice_class=prefix.slice_class(rep),
            representative=rep,
        )
    block_of = {v: name_of[b] for v, b in blocks.items()}
    edges = []
    sinks = set()
    for name, pos in positions.items():
        v = pos.representative
        t = tog.slice_of(v)
        for label in tog.labels(v):
            c, crosses = _follow(prefix, v, label)
            if c == LEAF:
                target = sink_name(t if t < n_slices_last else None)
                sinks.add(target)
            else:
                target = block_of[c]
            if not crosses:
                kind = "within"
            elif t < n_slices_last:
                kind = "temporal"
            else:
                kind = "cyclic"
            edges.append(Edge(name, target, label, prefix.prob(v, label), kind, prefix.canonical_label(v, label)))
    sink_list = sorted(sinks, key=lambda s: (s == GLOBAL_SINK, s))
    return NTDCEG(prefix, positions, edges, sink_list, block_of)


# ---------------------------------------------------------------------------
# finite CEGs C_t


@dataclass(frozen=True)
class CEGNode:
    name: str
    members: tuple[tuple[str, int], ...]  # (NT-DCEG position, slice)
    stage: str
    slice: int


@dataclass
class CEG:
    """Acyclic chain event graph over slices -1..t-1 with a single sink."""

    t: int
    nodes: dict[str, CEGNode]
    edges: list[Edge]
    sink: str = GLOBAL_SINK

    @property
    def root(self) -> str:
        return "c0"

    def node_of(self, position: str, t: int) -> str:
        for n in self.nodes.values():
            if (position, t) in n.members:
                return n.name
        raise KeyError((position, t))

    @cached_property
    def _member_index(self) -> dict[tuple[str, int], str]:
        return {m: n.name for n in self.nodes.values() for m in n.members}

    def lookup(self, position: str, t: int) -> str | None:
        return self._member_index.get((position, t))

    def slice_partition(self, t: int) -> list[list[tuple[str, int]]]:
        return [list(n.members) for n in self.nodes.values() if n.slice == t]

    def path_probabilities(self) -> dict[tuple[str, ...], float]:
        """Probability of every root-to-sink label sequence."""
        out_edges = defaultdict(list)
        for e in self.edges:
            out_edges[e.source].append(e)
        out = {}
        stack = [(self.root, (), 1.0)]
        while stack:
            n, labels, p = stack.pop()
            if n == self.sink:
                out[labels] = out.get(labels, 0.0) + p
                continue
            for e in out_edges[n]:
                stack.append((e.target, labels + (e.label,), p * e.prob))
        return out


def unroll_to_ceg(model: NTDCEG, t: int) -> CEG:
    """The CEG supported by the staged tree of the first ``t`` slices (slices -1..t-1).

    Unrolls the cyclic part as (position, slice) pairs, sends every
    terminal leaf and every edge leaving slice t-1 to one sink, then merges
    pairs of the same slice whose truncated coloured futures coincide.
    """
    if t < 1:
        raise ModelError("t must be >= 1")
    start = (model.root, model.tog.slice_of(model.tog.root()))
    nodes = []
    seen = {start}
    stack = [start]
    succ = {}
    while stack:
        node = stack.pop()
        nodes.append(node)
        pos, s = node
        out = []
        for e in model.out_edges[pos]:
            s2 = s + 1 if e.kind != "within" else s
            if e.target in model.sinks or s2 >= t:
                tgt = LEAF
            else:
                tgt = (e.target, s2)
                if tgt not in seen:
                    seen.add(tgt)
                    stack.append(tgt)
            out.append((e, tgt, s2 != s))
        succ[node] = out
    initial = {n: (model.positions[n[0]].stage, n[1]) for n in nodes}

    def signature(n, block):
        return tuple(
            (e.label, e.canonical, crosses, LEAF if c == LEAF else block[c]) for e, c, crosses in succ[n]
        )

    blocks = _refine(nodes, initial, signature)
    groups: dict[int, list] = defaultdict(list)
    for n, b in blocks.items():
        groups[b].append(n)

    def key(n):
        pos, s = n
        return (s, int(pos[1:]))

    for g in groups.values():
        g.sort(key=key)
    order = sorted(groups, key=lambda b: key(groups[b][0]))
    order.remove(blocks[start])
    order.insert(0, blocks[start])
    name = {b: f"c{i}" for i, b in enumerate(order)}
    ceg_nodes = {}
    edges = []
    for b in order:
        rep = groups[b][0]
        ceg_nodes[name[b]] = CEGNode(name[b], tuple(groups[b]), model.positions[rep[0]].stage, rep[1])
        for e, c, _ in succ[rep]:
            tgt = GLOBAL_SINK if c == LEAF else name[blocks[c]]
            edges.append(Edge(name[b], tgt, e.label, e.prob, e.kind, e.canonical))
    return CEG(t, ceg_nodes, edges)


# ---------------------------------------------------------------------------
# literal oracle


def brute_force_positions(
    prefix: StagedTreePrefix,
    depth: int,
    lookahead: int | None = None,
    limit: int = 200_000,
) -> list[frozenset[Vertex]]:
    """Positions by literal comparison of truncated coloured subtrees.

    Unrolls ``depth`` slices, hashes every situation's subtree truncated
    ``lookahead`` slice boundaries ahead, and groups situations of the
    compared slices (those with at least ``lookahead`` full slices of future
    inside the unrolled tree) by (T-position time class, hash).
    """
    tog = prefix.tog
    n = prefix.horizon
    if lookahead is None:
        lookahead = max(1, depth - 1 - n)
    last = depth - 1 - lookahead
    if last < 0:
        raise ModelError("depth too small for the requested lookahead")
    _, leaves = unrolled_vertices(tog, depth, limit=limit)
    tree = unroll_tog(tog, depth)
    vid_children = tree.children
    memo: dict[tuple[str, int], int] = {}
    interned: dict[tuple, int] = {}

    def h(vid: str, budget: int) -> int:
        key = (vid, budget)
        if key in memo:
            return memo[key]
        ch = vid_children[vid]
        v = parse_vertex(vid)
        if not ch:
            sig = ("T",) if tree.leaf_kind.get(vid) == "terminal" else ("F",)
        else:
            parts = []
            for label, cid in ch:
                crosses = cid.count("/") > vid.count("/")
                nb = budget - 1 if crosses else budget
                sub = ("CUT",) if nb < 0 else h(cid, nb)
                parts.append((label, prefix.canonical_label(v, label), crosses, sub))
            sig = (prefix.stage_of(v), tuple(parts))
        out = interned.setdefault(sig, len(interned))
        memo[key] = out
        return out

    groups: dict[tuple, set] = defaultdict(set)
    for vid in vid_children:
        if not vid_children[vid]:
            continue
        v = parse_vertex(vid)
        s = tog.slice_of(v)
        if s > last:
            continue
        cls = s if s < n - 1 else "H"
        groups[(cls, h(vid, lookahead))].add(v)
    return [frozenset(g) for g in groups.values()]


def positions_partition(model: NTDCEG, vertices: Iterable[Vertex]) -> list[frozenset[Vertex]]:
    """Group arbitrary situations by their NT-DCEG position."""
    groups = defaultdict(set)
    for v in vertices:
        groups[model.position_of(v)].add(v)
    return [frozenset(g) for g in groups.values()]


def same_partition(a: Iterable[frozenset], b: Iterable[frozenset]) -> bool:
    return set(map(frozenset, a)) == set(map(frozenset, b))


__all__ = [
    "CEG",
    "CEGNode",
    "Edge",
    "NTDCEG",
    "Position",
    "SizeGuardError",
    "brute_force_positions",
    "build_ntdceg",
    "compute_positions",
    "positions_partition",
    "same_partition",
    "sink_name",
    "unroll_to_ceg",
]
