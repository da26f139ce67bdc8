"""Cuts, fine cuts and the random variables they induce.

A walk is identified by its label sequence from the root position, which
keeps parallel edges between the same two positions apart.  Every walk of the
graph corresponds to exactly one situation of the infinite tree, which is what
the independence oracles exploit: they rebuild the joint law of upstream and
downstream variables from the staged tree itself, not from the graph.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .model import ModelError, SizeGuardError, Vertex
from .positions import NTDCEG, unroll_to_ceg


def h(model: NTDCEG, t: int) -> int:
    """Number of cyclical temporal edges on a walk ending at slice ``t``."""
    return max(0, t - model.horizon + 1)


def g(model: NTDCEG, t: int) -> int:
    return t if t <= model.horizon - 2 else model.horizon - 1


@dataclass(frozen=True)
class Walk:
    positions: tuple[str, ...]
    labels: tuple[str, ...]
    prob: float
    cycles: int

    @property
    def last(self) -> str:
        return self.positions[-1]


def enumerate_walks(model: NTDCEG, targets, t: int, limit: int = 500_000) -> list[Walk]:
    """All walks from the root to a target position reached at slice ``t``."""
    targets = set(targets)
    if not targets:
        raise ModelError("empty target set")
    unknown = targets - set(model.positions)
    if unknown:
        raise ModelError(f"unknown positions {sorted(unknown)}")
    out: list[Walk] = []
    start_slice = model.tog.slice_of(model.tog.root())
    stack = [(model.root, start_slice, (model.root,), (), 1.0, 0)]
    while stack:
        pos, s, ps, labels, p, cyc = stack.pop()
        if s == t and pos in targets:
            out.append(Walk(ps, labels, p, cyc))
            if len(out) > limit:
                raise SizeGuardError(f"more than {limit} walks")
        for e in model.out_edges[pos]:
            if e.target in model.sinks:
                continue
            s2 = s if e.kind == "within" else s + 1
            if s2 > t:
                continue
            stack.append((e.target, s2, ps + (e.target,), labels + (e.label,), p * e.prob, cyc + (e.kind == "cyclic")))
    out.sort(key=lambda w: (len(w.labels), w.labels))
    return out


def walk_vertex(model: NTDCEG, labels: Sequence[str]) -> Vertex:
    tog = model.tog
    v = tog.root()
    for x in labels:
        v = tog.child(v, x)
    return v


# ---------------------------------------------------------------------------
# verification on C minus its cyclical temporal edges


def _heads(model: NTDCEG, t: int) -> set[str]:
    n = model.horizon

    def at_t(w: str) -> bool:
        cls = model.positions[w].slice_class
        return cls == t or (cls == "H" and t >= n - 1)

    out = {model.root} if at_t(model.root) else set()
    for e in model.edges:
        if e.kind != "within" and e.target not in model.sinks and at_t(e.target):
            out.add(e.target)
    return out


def slice_paths(model: NTDCEG, t: int) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Head-to-tail position paths of slice ``t`` in the graph without E_circ."""
    out = []
    for head in sorted(_heads(model, t), key=lambda w: int(w[1:])):
        stack = [((head,), ())]
        while stack:
            ps, labels = stack.pop()
            ended = False
            for e in model.out_edges[ps[-1]]:
                if e.kind != "within" or e.target in model.sinks:
                    ended = True
                    continue
                stack.append((ps + (e.target,), labels + (e.label,)))
            if ended:
                out.append((ps, labels))
    return out


@dataclass
class CutCheck:
    ok: bool
    paths: int
    witness: tuple | None = None


def _check_crossings(model: NTDCEG, t: int, member: Callable[[str], bool]) -> CutCheck:
    paths = slice_paths(model, t)
    for ps, labels in paths:
        hits = [w for w in ps if member(w)]
        if len(hits) != 1:
            return CutCheck(False, len(paths), (ps, labels, hits))
    return CutCheck(bool(paths), len(paths), None if paths else ((), (), []))


def verify_cut(model: NTDCEG, stages, t: int) -> CutCheck:
    stages = set(stages)
    unknown = stages - set(model.stages)
    if unknown:
        raise ModelError(f"unknown stages {sorted(unknown)}")
    return _check_crossings(model, t, lambda w: model.positions[w].stage in stages)


def verify_fine_cut(model: NTDCEG, positions, t: int) -> CutCheck:
    positions = set(positions)
    unknown = positions - set(model.positions)
    if unknown:
        raise ModelError(f"unknown positions {sorted(unknown)}")
    return _check_crossings(model, t, lambda w: w in positions)


# ---------------------------------------------------------------------------
# induced random variables


@dataclass
class CutVarTriple:
    """State spaces and laws of the downstream X, separator Q and upstream Z.

    State ``k`` of each variable is ``states[k]``; ``x_given_q[q, x]`` is the
    recovery table of X given Q.
    """

    t: int
    x_states: list
    x_pmf: np.ndarray
    q_states: list
    q_pmf: np.ndarray
    z_states: list[Walk]
    z_pmf: np.ndarray
    x_given_q: np.ndarray
    q_of_z: list[int]
    s: int | None = None
    mass: float = 1.0  # unnormalized total mass of the walks

    def report(self) -> dict:
        return {
            "t": self.t,
            "s": self.s,
            "X": [{"state": i + 1, "event": _fmt(x), "p": float(p)} for i, (x, p) in enumerate(zip(self.x_states, self.x_pmf))],
            "Q": [{"state": i + 1, "value": _fmt(q), "p": float(p)} for i, (q, p) in enumerate(zip(self.q_states, self.q_pmf))],
            "Z_size": len(self.z_states),
            "walk_mass": float(self.mass),
            "X_given_Q": [[float(x) for x in row] for row in self.x_given_q],
        }


def _fmt(x):
    if isinstance(x, (tuple, list, frozenset)):
        return [_fmt(y) for y in (sorted(x) if isinstance(x, frozenset) else x)]
    return x


def _normalize(v: np.ndarray) -> tuple[np.ndarray, float]:
    z = float(v.sum())
    if z <= 0:
        raise ModelError("the walk set has zero probability")
    return v / z, z


def cut_variables(model: NTDCEG, stages: Sequence[str], t: int) -> CutVarTriple:
    stages = list(stages)
    check = verify_cut(model, stages, t)
    if not check.ok:
        raise ModelError(f"not a cut at t={t}: witness {check.witness}")
    targets = [w for s in stages for w in model.stages[s]]
    walks = enumerate_walks(model, targets, t)
    if not walks:
        raise ModelError(f"cut unreachable at t={t}")
    events: list[str] = []
    for s in stages:
        for x in model.prefix.stages[s].label_order:
            if x not in events:
                events.append(x)
    q_index = {s: i for i, s in enumerate(stages)}
    x_given_q = np.zeros((len(stages), len(events)))
    for s in stages:
        st = model.prefix.stages[s]
        for x, p in zip(st.label_order, st.probs):
            x_given_q[q_index[s], events.index(x)] = p
    z_raw = np.array([w.prob for w in walks])
    q_of_z = [q_index[model.positions[w.last].stage] for w in walks]
    q_raw = np.zeros(len(stages))
    x_raw = np.zeros(len(events))
    for w, p, q in zip(walks, z_raw, q_of_z):
        q_raw[q] += p
        x_raw += p * x_given_q[q]
    z_pmf, mass = _normalize(z_raw)
    return CutVarTriple(
        t=t,
        x_states=events,
        x_pmf=x_raw / mass,
        q_states=stages,
        q_pmf=q_raw / mass,
        z_states=walks,
        z_pmf=z_pmf,
        x_given_q=x_given_q,
        q_of_z=q_of_z,
        mass=mass,
    )


def developments(model: NTDCEG, w: str, t: int, s: int) -> dict[tuple[str, ...], float]:
    """Event sequences unfolding from ``w`` (at slice ``t``) until the end of slice t+s."""
    out: dict[tuple[str, ...], float] = defaultdict(float)
    stack = [(w, t, (), 1.0)]
    while stack:
        pos, sl, labels, p = stack.pop()
        for e in model.out_edges[pos]:
            lab = labels + (e.label,)
            sl2 = sl if e.kind == "within" else sl + 1
            if e.target in model.sinks or sl2 > t + s:
                out[lab] += p * e.prob
            else:
                stack.append((e.target, sl2, lab, p * e.prob))
    return dict(out)


def beth_partition(model: NTDCEG, positions: Sequence[str], t: int, s: int) -> list[tuple[str, ...]]:
    """Blocks of the fine cut that the CEG of the first g(t)+s+1 slices merges.

    For s >= N-1 the partition is the identity.
    """
    positions = list(positions)
    if s >= model.horizon - 1:
        return [(w,) for w in positions]
    gt = g(model, t)
    ceg = unroll_to_ceg(model, gt + s + 1)
    groups: dict[str, list[str]] = {}
    for w in positions:
        node = ceg.lookup(w, gt)
        if node is None:
            raise ModelError(f"position {w} does not occur at slice {gt}")
        groups.setdefault(node, []).append(w)
    return [tuple(ws) for ws in groups.values()]


def fine_cut_variables(model: NTDCEG, positions: Sequence[str], t: int, s: int = 0) -> CutVarTriple:
    if s < 0:
        raise ModelError("s must be >= 0")
    positions = list(positions)
    check = verify_fine_cut(model, positions, t)
    if not check.ok:
        raise ModelError(f"not a fine cut at t={t}: witness {check.witness}")
    walks = enumerate_walks(model, positions, t)
    if not walks:
        raise ModelError(f"fine cut unreachable at t={t}")
    beth = beth_partition(model, positions, t, s)
    block_of = {w: i for i, b in enumerate(beth) for w in b}
    dev = {w: developments(model, w, model.slice_of_position(w, t), s) for w in positions}
    x_index: dict[tuple[str, ...], int] = {}
    for w in positions:
        for seq in sorted(dev[w], key=lambda q: (len(q), q)):
            x_index.setdefault(seq, len(x_index))
    xi = list(x_index)
    z_raw = np.array([wk.prob for wk in walks])
    q_of_z = [block_of[wk.last] for wk in walks]
    arrive: dict[str, float] = defaultdict(float)
    for wk, p in zip(walks, z_raw):
        arrive[wk.last] += p
    q_raw = np.zeros(len(beth))
    x_by_q = np.zeros((len(beth), len(xi)))
    for w, p in arrive.items():
        q = block_of[w]
        q_raw[q] += p
        for seq, px in dev[w].items():
            x_by_q[q, x_index[seq]] += p * px
    x_raw = x_by_q.sum(axis=0)
    z_pmf, mass = _normalize(z_raw)
    with np.errstate(invalid="ignore", divide="ignore"):
        x_given_q = np.where(q_raw[:, None] > 0, x_by_q / q_raw[:, None], 0.0)
    return CutVarTriple(
        t=t,
        s=s,
        x_states=xi,
        x_pmf=x_raw / mass,
        q_states=beth,
        q_pmf=q_raw / mass,
        z_states=walks,
        z_pmf=z_pmf,
        x_given_q=x_given_q,
        q_of_z=q_of_z,
        mass=mass,
    )


# ---------------------------------------------------------------------------
# oracles: X independent of Z given Q, rebuilt from the staged tree


@dataclass
class CutIndependenceReport:
    holds: bool
    residual: float
    recovery_residual: float
    z_states: int
    converse: dict | None = None
    details: dict = field(default_factory=dict)


def _ci_residual(joint: np.ndarray, labels: Sequence[Hashable]) -> float:
    """max |P(x|z) - P(x|label(z))| over z with positive mass."""
    pz = joint.sum(axis=1)
    groups: dict[Hashable, list[int]] = defaultdict(list)
    for i, lab in enumerate(labels):
        if pz[i] > 0:
            groups[lab].append(i)
    worst = 0.0
    for idx in groups.values():
        block = joint[idx]
        ref = block.sum(axis=0) / block.sum()
        cond = block / block.sum(axis=1, keepdims=True)
        worst = max(worst, float(np.abs(cond - ref).max()))
    return worst


def _tree_situations(model: NTDCEG, t: int, keep: Callable[[Vertex], bool]) -> dict[tuple[str, ...], tuple[Vertex, float]]:
    """Situations of slice ``t`` selected by ``keep``, found by walking the staged tree."""
    tog, prefix = model.tog, model.prefix
    out = {}
    stack = [(tog.root(), (), 1.0)]
    while stack:
        v, labels, p = stack.pop()
        sl = tog.slice_of(v)
        if sl == t and keep(v):
            out[labels] = (v, p)
        for x in tog.labels(v):
            c = tog.child(v, x)
            if not tog.is_terminal(c) and tog.slice_of(c) <= t:
                stack.append((c, labels + (x,), p * prefix.prob(v, x)))
    return out


def _tree_developments(model: NTDCEG, v: Vertex, last_slice: int) -> dict[tuple[str, ...], float]:
    tog, prefix = model.tog, model.prefix
    out: dict[tuple[str, ...], float] = defaultdict(float)
    stack = [(v, (), 1.0)]
    while stack:
        u, labels, p = stack.pop()
        for x in tog.labels(u):
            c = tog.child(u, x)
            q = p * prefix.prob(u, x)
            if tog.is_terminal(c) or tog.slice_of(c) > last_slice:
                out[labels + (x,)] += q
            else:
                stack.append((c, labels + (x,), q))
    return out


def _tree_joint_table(model: NTDCEG, triple: CutVarTriple, fine: bool, keep) -> tuple[np.ndarray, int]:
    """Joint of (Z, X) from the staged tree, plus the count of unmatched situations."""
    prefix = model.prefix
    found = _tree_situations(model, triple.t, keep)
    z_index = {wk.labels: i for i, wk in enumerate(triple.z_states)}
    x_index = {x: j for j, x in enumerate(triple.x_states)}
    joint = np.zeros((len(triple.z_states), len(triple.x_states)))
    unmatched = len(set(found) ^ set(z_index))
    for labels, (v, pv) in found.items():
        i = z_index.get(labels)
        if i is None:
            continue
        if fine:
            for seq, q in _tree_developments(model, v, triple.t + triple.s).items():
                j = x_index.get(seq)
                if j is None:
                    unmatched += 1
                else:
                    joint[i, j] += pv * q
        else:
            for y in model.tog.labels(v):
                joint[i, x_index[prefix.canonical_label(v, y)]] += pv * prefix.prob(v, y)
    return joint, unmatched


def _check(model, triple, fine, keep, f, tol) -> CutIndependenceReport:
    joint, unmatched = _tree_joint_table(model, triple, fine, keep)
    total = joint.sum()
    joint_n = joint / total
    residual = _ci_residual(joint_n, triple.q_of_z)
    # recovery: the tree-derived law of X given Q must match the graph table
    q_idx = np.array(triple.q_of_z)
    rec = 0.0
    for q in range(len(triple.q_states)):
        rows = joint_n[q_idx == q]
        if rows.sum() > 0:
            rec = max(rec, float(np.abs(rows.sum(axis=0) / rows.sum() - triple.x_given_q[q]).max()))
    rec = max(rec, float(np.abs(joint_n.sum(axis=0) - triple.x_pmf).max()))
    converse = None
    if f is not None:
        f_labels = [f(wk) for wk in triple.z_states]
        r_f = _ci_residual(joint_n, f_labels)
        holds_f = r_f <= tol
        q_of_f: dict = {}
        measurable = True
        for lab, q, pz in zip(f_labels, triple.q_of_z, joint_n.sum(axis=1)):
            if pz <= 0:
                continue
            if q_of_f.setdefault(lab, q) != q:
                measurable = False
        converse = {
            "ci_given_f": holds_f,
            "residual_given_f": r_f,
            "q_function_of_f": measurable,
            "consistent": (not holds_f) or measurable,
        }
    return CutIndependenceReport(
        residual <= tol and rec <= tol and unmatched == 0,
        residual,
        rec,
        len(triple.z_states),
        converse,
        {"unmatched": unmatched},
    )


def check_cut_independence(model: NTDCEG, stages, t: int, f: Callable[[Walk], Hashable] | None = None, tol: float = 1e-9) -> CutIndependenceReport:
    triple = cut_variables(model, stages, t)
    stages = set(stages)
    return _check(model, triple, False, lambda v: model.positions[model.position_of(v)].stage in stages, f, tol)


def check_fine_cut_independence(
    model: NTDCEG, positions, t: int, s: int = 0, f: Callable[[Walk], Hashable] | None = None, tol: float = 1e-9
) -> CutIndependenceReport:
    triple = fine_cut_variables(model, positions, t, s)
    positions = set(positions)
    return _check(model, triple, True, lambda v: model.position_of(v) in positions, f, tol)
