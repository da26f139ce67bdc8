"""Event trees, periodic tree generators and staged tree prefixes.

Vertices of an unrolled tree are tuples of *segments*: one tuple of edge
labels per time-slice, read from the slice root.  When the time-invariant
tree is present the first segment belongs to slice -1.  A vertex that closes
a slice (a recurrent leaf of the slice tree, or a leaf of the time-invariant
tree) is always written as the root of the next slice, i.e. with an empty
trailing segment, so every situation has exactly one identifier.
"""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Sequence

Segment = tuple[str, ...]
Vertex = tuple[Segment, ...]

TERMINAL = "terminal"
RECURRENT = "recurrent"

DEFAULT_TOL = float(os.environ.get("NTDCEG_TOL", "1e-9"))


class ModelError(ValueError):
    """Raised when a model object violates one of its structural invariants."""


class HomogeneityError(ModelError):
    pass


class SizeGuardError(RuntimeError):
    """Raised when an exhaustive computation would exceed its size budget."""


# ---------------------------------------------------------------------------
# event trees


@dataclass(frozen=True)
class EventTree:
    """A finite rooted tree with labelled edges.

    ``leaf_kind`` only matters for the per-slice tree of a generator, where
    every leaf is either ``"terminal"`` or ``"recurrent"``.
    """

    root: str
    edges: tuple[tuple[str, str, str], ...] = ()
    leaf_kind: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_nested(cls, nested: Mapping, root: str = "") -> EventTree:
        """Build a tree from ``{label: subtree}`` maps.

        A leaf is given by a string (its kind) or ``None``.  Vertex ids are the
        dot-joined label paths, the root being ``""``.
        """
        edges: list[tuple[str, str, str]] = []
        kinds: dict[str, str] = {}

        def walk(vid: str, sub) -> None:
            if not isinstance(sub, Mapping) or not sub:
                if isinstance(sub, str):
                    kinds[vid] = sub
                return
            for label, child_sub in sub.items():
                cid = f"{vid}.{label}" if vid else label
                edges.append((vid, cid, label))
                walk(cid, child_sub)

        walk(root, nested)
        return cls(root=root, edges=tuple(edges), leaf_kind=kinds)

    @cached_property
    def vertices(self) -> frozenset[str]:
        out = {self.root}
        for p, c, _ in self.edges:
            out.add(p)
            out.add(c)
        return frozenset(out)

    @cached_property
    def children(self) -> dict[str, list[tuple[str, str]]]:
        out: dict[str, list[tuple[str, str]]] = {v: [] for v in self.vertices}
        for p, c, label in self.edges:
            out[p].append((label, c))
        return out

    @property
    def leaves(self) -> list[str]:
        return [v for v in self.vertices if not self.children[v]]

    @property
    def situations(self) -> list[str]:
        return [v for v in self.vertices if self.children[v]]

    def to_nested(self):
        def walk(v):
            ch = self.children[v]
            if not ch:
                return self.leaf_kind.get(v)
            return {label: walk(c) for label, c in ch}

        return walk(self.root)

    def label_paths(self) -> dict[str, Segment]:
        """Map every vertex to the tuple of labels on its root path."""
        out = {self.root: ()}
        queue = deque([self.root])
        while queue:
            v = queue.popleft()
            for label, c in self.children[v]:
                out[c] = out[v] + (label,)
                queue.append(c)
        return out


@dataclass
class ValidationReport:
    ok: bool
    errors: list[str] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def raise_if_failed(self, exc=ModelError) -> None:
        if not self.ok:
            raise exc("; ".join(self.errors))


def validate_event_tree(tree: EventTree) -> ValidationReport:
    errors: list[str] = []
    parents: dict[str, list[str]] = {}
    for p, c, label in tree.edges:
        parents.setdefault(c, []).append(p)
        if not isinstance(label, str) or not label:
            errors.append(f"edge {p!r}->{c!r} has an empty label")
        elif "/" in label or "." in label:
            errors.append(f"edge label {label!r} contains a reserved character ('/' or '.')")
    if tree.root in parents:
        errors.append(f"root {tree.root!r} has a parent")
    for v, ps in parents.items():
        if len(ps) > 1:
            errors.append(f"vertex {v!r} has {len(ps)} parents")
    for v, ch in tree.children.items():
        labels = [label for label, _ in ch]
        dups = sorted({x for x in labels if labels.count(x) > 1})
        if dups:
            errors.append(f"duplicate sibling label(s) {dups} under {v!r}")
    # connectivity / acyclicity: every vertex reachable from the root exactly once
    seen = set()
    queue = deque([tree.root])
    while queue:
        v = queue.popleft()
        if v in seen:
            errors.append(f"vertex {v!r} reached twice (cycle)")
            continue
        seen.add(v)
        queue.extend(c for _, c in tree.children.get(v, []))
    unreached = tree.vertices - seen
    if unreached:
        errors.append(f"unreachable vertices: {sorted(unreached)[:5]}")
    leaves = tree.leaves
    stats = {
        "situations": len(tree.situations),
        "leaves": len(leaves),
        "terminal": sum(1 for v in leaves if tree.leaf_kind.get(v) == TERMINAL),
        "recurrent": sum(1 for v in leaves if tree.leaf_kind.get(v) == RECURRENT),
    }
    return ValidationReport(ok=not errors, errors=errors, stats=stats)


# ---------------------------------------------------------------------------
# compiled label trees and the periodic generator


@dataclass(frozen=True)
class _LabelTree:
    children: dict[Segment, tuple[str, ...]]
    kind: dict[Segment, str]  # leaves only

    @classmethod
    def of(cls, tree: EventTree) -> _LabelTree:
        paths = tree.label_paths()
        children = {paths[v]: tuple(label for label, _ in tree.children[v]) for v in tree.vertices}
        kind = {paths[v]: tree.leaf_kind.get(v, TERMINAL) for v in tree.leaves}
        return cls(children, kind)

    def is_leaf(self, path: Segment) -> bool:
        return not self.children[path]


@dataclass(frozen=True)
class TogSpec:
    """Generator of the infinite periodic tree.

    ``t_minus1`` is ``None`` for a homogeneous population (no time-invariant
    tree); otherwise each of its leaves starts a copy of ``t_slice``.
    """

    t_slice: EventTree
    t_minus1: EventTree | None = None

    @property
    def has_invariant_part(self) -> bool:
        return self.t_minus1 is not None

    @property
    def offset(self) -> int:
        return 1 if self.t_minus1 is not None else 0

    @cached_property
    def slice_tree(self) -> _LabelTree:
        return _LabelTree.of(self.t_slice)

    @cached_property
    def invariant_tree(self) -> _LabelTree | None:
        return _LabelTree.of(self.t_minus1) if self.t_minus1 is not None else None

    def validate(self) -> ValidationReport:
        rep = validate_event_tree(self.t_slice)
        errors = [f"t_slice: {e}" for e in rep.errors]
        if rep.ok:
            if not self.t_slice.edges:
                errors.append("t_slice: the slice tree has no edges")
            kinds = [self.t_slice.leaf_kind.get(v) for v in self.t_slice.leaves]
            bad = [v for v, k in zip(self.t_slice.leaves, kinds) if k not in (TERMINAL, RECURRENT)]
            if bad:
                errors.append(f"t_slice: leaves without terminal/recurrent flag: {sorted(bad)[:5]}")
            if RECURRENT not in kinds:
                errors.append("t_slice: no recurrent leaf, the process cannot continue")
        if self.t_minus1 is not None:
            rep1 = validate_event_tree(self.t_minus1)
            errors += [f"t_minus1: {e}" for e in rep1.errors]
            if rep1.ok and not self.t_minus1.edges:
                errors.append("t_minus1: declared but empty; use t_minus1=None instead")
        return ValidationReport(ok=not errors, errors=errors, stats=rep.stats)

    # -- vertex helpers -------------------------------------------------

    def slice_of(self, v: Vertex) -> int:
        return len(v) - 1 - self.offset

    def root(self) -> Vertex:
        return ((),)

    def normalize(self, v: Vertex) -> Vertex:
        """Rewrite a slice-closing vertex as the root of the next slice."""
        last = v[-1]
        if self.t_minus1 is not None and len(v) == 1:
            tree = self.invariant_tree
            if tree.is_leaf(last):
                return v + ((),)
            return v
        tree = self.slice_tree
        if tree.is_leaf(last) and tree.kind[last] == RECURRENT:
            return v + ((),)
        return v

    def current_tree(self, v: Vertex) -> _LabelTree:
        if self.t_minus1 is not None and len(v) == 1:
            return self.invariant_tree
        return self.slice_tree

    def labels(self, v: Vertex) -> tuple[str, ...]:
        """Outgoing labels of ``v`` in the infinite tree (empty for terminal leaves)."""
        return self.current_tree(v).children[v[-1]]

    def child(self, v: Vertex, label: str) -> Vertex:
        return self.normalize(v[:-1] + (v[-1] + (label,),))

    def is_terminal(self, v: Vertex) -> bool:
        return not self.labels(v)

    def depth_in_slice(self, v: Vertex) -> int:
        return len(v[-1])

    def shift(self, v: Vertex) -> Vertex:
        """Drop the oldest time-varying segment (time shift by one slice)."""
        k = self.offset
        return v[:k] + v[k + 1:]


def unroll_tog(tog: TogSpec, depth: int) -> EventTree:
    """Finite prefix of the infinite tree covering slices 0..depth-1."""
    if depth < 1:
        raise ModelError("depth must be >= 1")
    situations, leaves = unrolled_vertices(tog, depth)
    edges = []
    kinds = {}
    for v in situations:
        for label in tog.labels(v):
            c = tog.child(v, label)
            edges.append((vertex_id(v), vertex_id(c), label))
    for v in leaves:
        kinds[vertex_id(v)] = TERMINAL if tog.is_terminal(v) else RECURRENT
    return EventTree(root=vertex_id(tog.root()), edges=tuple(edges), leaf_kind=kinds)


def unrolled_vertices(tog: TogSpec, depth: int, limit: int | None = None) -> tuple[list[Vertex], list[Vertex]]:
    """Situations and leaves of the prefix over slices -1..depth-1, breadth first.

    Leaves are terminal leaves plus the frontier roots of slice ``depth``.
    """
    situations: list[Vertex] = []
    leaves: list[Vertex] = []
    queue = deque([tog.root()])
    while queue:
        v = queue.popleft()
        if tog.slice_of(v) >= depth or tog.is_terminal(v):
            leaves.append(v)
            continue
        situations.append(v)
        if limit is not None and len(situations) + len(leaves) > limit:
            raise SizeGuardError(f"unrolled tree exceeds {limit} vertices")
        for label in tog.labels(v):
            queue.append(tog.child(v, label))
    return situations, leaves


def vertex_id(v: Vertex) -> str:
    return "/".join(".".join(seg) for seg in v)


def parse_vertex(s: str) -> Vertex:
    return tuple(tuple(part.split(".")) if part else () for part in s.split("/"))


def sort_key(tog: TogSpec, v: Vertex) -> tuple:
    """Breadth-first canonical order following the declared child order."""
    idx = []
    cur: Vertex = tog.root()
    for k, seg in enumerate(v):
        for label in seg:
            idx.append(tog.labels(cur).index(label))
            cur = tog.child(cur, label)
    return (len(v), sum(len(seg) for seg in v), tuple(idx))


# ---------------------------------------------------------------------------
# staged prefixes


@dataclass(frozen=True)
class Stage:
    """A colour class: member situations share ``probs`` under their label maps.

    ``label_maps[v]`` maps the outgoing labels of ``v`` onto ``label_order``;
    situations absent from it use the identity.
    """

    situations: tuple[Vertex, ...]
    probs: tuple[float, ...]
    label_order: tuple[str, ...]
    label_maps: Mapping[Vertex, Mapping[str, str]] = field(default_factory=dict)

    def canonical(self, v: Vertex, label: str) -> str:
        m = self.label_maps.get(v)
        return m[label] if m else label

    def prob(self, v: Vertex, label: str) -> float:
        return self.probs[self.label_order.index(self.canonical(v, label))]


@dataclass(frozen=True)
class StagedTreePrefix:
    """Staging of the unrolled tree over slices -1..horizon.

    ``horizon`` is the N of an N time-slice model.  Slices beyond ``horizon``
    inherit the stage of their time shift.
    """

    tog: TogSpec
    horizon: int
    stages: Mapping[str, Stage]
    tol: float = DEFAULT_TOL

    @cached_property
    def situations(self) -> list[Vertex]:
        return unrolled_vertices(self.tog, self.horizon + 1)[0]

    @cached_property
    def _stage_index(self) -> dict[Vertex, str]:
        out: dict[Vertex, str] = {}
        for sid, st in self.stages.items():
            for v in st.situations:
                out[v] = sid
        return out

    def stage_of(self, v: Vertex) -> str:
        while self.tog.slice_of(v) > self.horizon:
            v = self.tog.shift(v)
        return self._stage_index[v]

    def prob(self, v: Vertex, label: str) -> float:
        while self.tog.slice_of(v) > self.horizon:
            v = self.tog.shift(v)
        return self.stages[self._stage_index[v]].prob(v, label)

    def canonical_label(self, v: Vertex, label: str) -> str:
        while self.tog.slice_of(v) > self.horizon:
            v = self.tog.shift(v)
        return self.stages[self._stage_index[v]].canonical(v, label)

    def slice_class(self, v: Vertex) -> int | str:
        t = self.tog.slice_of(v)
        return t if t < self.horizon - 1 else "H"

    def path_probability(self, v: Vertex) -> float:
        p = 1.0
        cur = self.tog.root()
        for seg_i, seg in enumerate(v):
            for label in seg:
                p *= self.prob(cur, label)
                cur = self.tog.child(cur, label)
        return p


def validate_staging(prefix: StagedTreePrefix, check_homogeneity: bool = True) -> ValidationReport:
    tog = prefix.tog
    rep = tog.validate()
    if not rep.ok:
        return rep
    errors: list[str] = []
    if prefix.horizon < 1:
        errors.append("horizon N must be a positive integer")
        return ValidationReport(False, errors)
    situations = set(prefix.situations)
    owner: dict[Vertex, str] = {}
    for sid, st in prefix.stages.items():
        probs = st.probs
        if len(probs) != len(st.label_order):
            errors.append(f"stage {sid}: {len(probs)} probabilities for {len(st.label_order)} labels")
        if len(set(st.label_order)) != len(st.label_order):
            errors.append(f"stage {sid}: repeated label in label_order")
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > prefix.tol:
            errors.append(f"stage {sid}: probability vector {list(probs)} is not normalized")
        slices = set()
        for v in st.situations:
            if v in owner:
                errors.append(f"situation {vertex_id(v)!r} in stages {owner[v]} and {sid}")
                continue
            owner[v] = sid
            if v not in situations:
                errors.append(f"stage {sid}: {vertex_id(v)!r} is not a situation of the prefix")
                continue
            slices.add(tog.slice_of(v) == -1)
            labels = tog.labels(v)
            if len(labels) != len(st.label_order):
                errors.append(
                    f"stage {sid}: arity mismatch, {vertex_id(v)!r} has {len(labels)} "
                    f"outcomes, stage has {len(st.label_order)}"
                )
                continue
            m = st.label_maps.get(v)
            image = [m.get(x) for x in labels] if m else list(labels)
            if sorted(map(str, image)) != sorted(st.label_order):
                errors.append(f"stage {sid}: labels of {vertex_id(v)!r} do not biject onto {list(st.label_order)}")
        if len(slices) > 1:
            errors.append(f"stage {sid} mixes slice -1 with time-varying situations")
    missing = situations - owner.keys()
    if missing:
        sample = sorted(map(vertex_id, missing))[:5]
        errors.append(f"{len(missing)} situations without a stage, e.g. {sample}")
    if not errors and check_homogeneity:
        errors += _homogeneity_errors(prefix)
    return ValidationReport(
        ok=not errors,
        errors=errors,
        stats={"stages": len(prefix.stages), "situations": len(situations)},
    )


def _homogeneity_errors(prefix: StagedTreePrefix) -> list[str]:
    tog = prefix.tog
    idx = prefix._stage_index
    errors = []
    for v in prefix.situations:
        if tog.slice_of(v) != prefix.horizon:
            continue
        w = tog.shift(v)
        if idx[v] != idx[w]:
            errors.append(
                f"homogeneity: {vertex_id(v)!r} in stage {idx[v]} but its shift {vertex_id(w)!r} in {idx[w]}"
            )
        else:
            st = prefix.stages[idx[v]]
            if any(st.canonical(v, x) != st.canonical(w, x) for x in tog.labels(v)):
                errors.append(f"homogeneity: label maps of {vertex_id(v)!r} and its shift differ")
        if len(errors) > 20:
            break
    return errors


def identity_staging(tog: TogSpec, horizon: int, probs=None) -> StagedTreePrefix:
    """Every situation of slices -1..N-1 is its own stage; slice N reuses the shift."""
    situations = unrolled_vertices(tog, horizon + 1)[0]
    members: dict[Vertex, list[Vertex]] = {}
    for v in situations:
        base = tog.shift(v) if tog.slice_of(v) == horizon else v
        members.setdefault(base, []).append(v)
    stages = {}
    for base, vs in members.items():
        labels = tog.labels(base)
        p = probs(base) if probs else tuple(1.0 / len(labels) for _ in labels)
        stages[f"s{len(stages)}"] = Stage(tuple(vs), tuple(p), labels)
    return StagedTreePrefix(tog, horizon, stages)


def tree_joint(prefix: StagedTreePrefix, slices: int, limit: int = 2_000_000) -> dict[Vertex, float]:
    """Probability of every root-to-leaf path of the tree over slices -1..slices-1.

    Keys are the leaf vertices with any empty frontier segment stripped.
    """
    tog = prefix.tog
    out: dict[Vertex, float] = {}
    stack = [(tog.root(), 1.0)]
    while stack:
        v, p = stack.pop()
        if tog.is_terminal(v) or tog.slice_of(v) >= slices:
            key = v[:-1] if v[-1] == () else v
            out[key] = out.get(key, 0.0) + p
            if len(out) > limit:
                raise SizeGuardError(f"joint table exceeds {limit} rows")
            continue
        for label in tog.labels(v):
            stack.append((tog.child(v, label), p * prefix.prob(v, label)))
    return out


def iter_situation_paths(tog: TogSpec, v: Vertex) -> Iterator[tuple[Vertex, str]]:
    """(situation, label) pairs along the root path to ``v``."""
    cur = tog.root()
    for seg in v:
        for label in seg:
            yield cur, label
            cur = tog.child(cur, label)


def relabel_stages(prefix: StagedTreePrefix, names: Sequence[str] | None = None) -> StagedTreePrefix:
    """Rename stages u0, u1, ... in canonical order of their first situation."""
    order = sorted(prefix.stages, key=lambda s: min(sort_key(prefix.tog, v) for v in prefix.stages[s].situations))
    names = names or [f"u{i}" for i in range(len(order))]
    stages = {names[i]: prefix.stages[s] for i, s in enumerate(order)}
    return StagedTreePrefix(prefix.tog, prefix.horizon, stages, prefix.tol)


def staging_from_function(
    tog: TogSpec,
    horizon: int,
    classify,
    probs: Mapping[str, Sequence[float]],
    label_maps=None,
    tol: float = DEFAULT_TOL,
) -> StagedTreePrefix:
    """Stage every situation of slices -1..N by ``classify(vertex) -> stage id``.

    ``probs[stage]`` is read in the label order of the first member met in
    canonical order; ``label_maps(vertex)``, if given, returns the label map
    of a situation onto that order.
    """
    situations = sorted(unrolled_vertices(tog, horizon + 1)[0], key=lambda v: sort_key(tog, v))
    members: dict[str, list[Vertex]] = {}
    for v in situations:
        members.setdefault(classify(v), []).append(v)
    stages = {}
    for sid, vs in members.items():
        maps = {}
        if label_maps is not None:
            for v in vs:
                m = label_maps(v)
                if m:
                    maps[v] = m
        first = vs[0]
        order = tuple(maps[first][x] for x in tog.labels(first)) if first in maps else tog.labels(first)
        stages[sid] = Stage(tuple(vs), tuple(float(p) for p in probs[sid]), order, maps)
    return StagedTreePrefix(tog, horizon, stages, tol)
