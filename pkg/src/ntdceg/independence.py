"""Local, contemporaneous and stochastic independence between process variables.

Every statement quantifies over all slices t >= T.  The engine checks slices
T..H on exact conditional laws and reports whether the pattern of histories
that the projections identify had already stopped changing by H.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .model import ModelError, SizeGuardError, StagedTreePrefix, Vertex
from .positions import NTDCEG

ABSENT = None


@dataclass(frozen=True)
class VariableView:
    """Binds each depth of the slice tree to a process variable."""

    levels: tuple[str, ...]

    def depth_of(self, name: str) -> int:
        try:
            return self.levels.index(name)
        except ValueError:
            raise ModelError(f"unknown variable {name!r}; levels are {list(self.levels)}") from None

    def depths(self, names: Iterable[str]) -> frozenset[int]:
        return frozenset(self.depth_of(n) for n in names)


def is_stratified(prefix: StagedTreePrefix) -> bool:
    """No stage mixes situations at different depths of their slice tree."""
    for st in prefix.stages.values():
        if len({len(v[-1]) for v in st.situations}) > 1:
            return False
    return True


def check_view(model: NTDCEG, view: VariableView) -> None:
    if not is_stratified(model.prefix):
        raise ModelError("independence queries need a stratified model")
    depth = max(len(path) for path in model.tog.slice_tree.children)
    if depth > len(view.levels):
        raise ModelError(f"slice tree has {depth} levels but only {len(view.levels)} variables are named")


@dataclass
class Verdict:
    holds: bool
    kind: str
    witness: dict | None = None
    checked_slices: tuple[int, ...] = ()
    stabilized: bool = False
    histories: int = 0
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "holds": self.holds,
            "witness": self.witness,
            "checked_slices": list(self.checked_slices),
            "stabilized": self.stabilized,
            "histories": self.histories,
            "notes": self.notes,
        }


# ---------------------------------------------------------------------------
# exact laws


class _Engine:
    def __init__(self, model: NTDCEG, view: VariableView, use_tree: bool = False, limit: int = 400_000):
        check_view(model, view)
        self.model = model
        self.view = view
        self.use_tree = use_tree
        self.limit = limit
        self._slice_cache: dict = {}
        self._hist_cache: dict[int, list[tuple[Vertex, float]]] = {}
        self._pos_cache: dict[Vertex, str] = {}
        self._law_cache: dict[tuple, dict[tuple, float]] = {}
        self._proj_cache: dict[tuple, tuple] = {}

    @classmethod
    def of(cls, model: NTDCEG, view: VariableView, use_tree: bool = False) -> _Engine:
        """Shared engine per model, view and law source; models are not mutated after construction."""
        cache = model.__dict__.setdefault("_independence_engines", {})
        key = (view, use_tree)
        if key not in cache:
            cache[key] = cls(model, view, use_tree)
        return cache[key]

    def position_of(self, v: Vertex) -> str:
        w = self._pos_cache.get(v)
        if w is None:
            w = self._pos_cache[v] = self.model.position_of(v)
        return w

    def law(self, v: Vertex, depths: frozenset[int]) -> dict[tuple, float]:
        """Marginal slice law of ``depths`` after history root ``v``."""
        if self.use_tree:
            return self.marginal(self._tree_slice_law(v), depths)
        key = (self.position_of(v), depths)
        out = self._law_cache.get(key)
        if out is None:
            out = self._law_cache[key] = self.marginal(self.slice_law(v), depths)
        return out

    def histories(self, t: int) -> list[tuple[Vertex, float]]:
        """Positive-probability roots of slice ``t`` with their probabilities."""
        if t in self._hist_cache:
            return self._hist_cache[t]
        tog, prefix = self.model.tog, self.model.prefix
        out = []
        stack = [(tog.root(), 1.0)]
        while stack:
            v, p = stack.pop()
            if tog.slice_of(v) == t and not v[-1]:
                out.append((v, p))
                if len(out) > self.limit:
                    raise SizeGuardError(f"more than {self.limit} histories at slice {t}")
                continue
            for x in tog.labels(v):
                q = p * prefix.prob(v, x)
                c = tog.child(v, x)
                if q > 0 and not tog.is_terminal(c):
                    stack.append((c, q))
        self._hist_cache[t] = out
        return out

    def slice_law(self, v: Vertex) -> dict[tuple, float]:
        """Law of the slice path starting at history root ``v``, as depth-indexed value tuples."""
        if self.use_tree:
            return self._tree_slice_law(v)
        w = self.position_of(v)
        if w not in self._slice_cache:
            out: dict[tuple, float] = defaultdict(float)
            stack = [(w, (), 1.0)]
            while stack:
                pos, labels, p = stack.pop()
                for e in self.model.out_edges[pos]:
                    if e.kind == "within" and e.target not in self.model.sinks:
                        stack.append((e.target, labels + (e.label,), p * e.prob))
                    else:
                        out[labels + (e.label,)] += p * e.prob
            self._slice_cache[w] = dict(out)
        return self._slice_cache[w]

    def _tree_slice_law(self, v: Vertex) -> dict[tuple, float]:
        tog, prefix = self.model.tog, self.model.prefix
        out: dict[tuple, float] = defaultdict(float)
        stack = [(v, 1.0)]
        n = len(v)
        while stack:
            u, p = stack.pop()
            for x in tog.labels(u):
                c = tog.child(u, x)
                q = p * prefix.prob(u, x)
                if tog.is_terminal(c) or len(c) > n:
                    out[u[-1] + (x,)] += q
                else:
                    stack.append((c, q))
        return dict(out)

    def marginal(self, law: dict[tuple, float], depths: frozenset[int]) -> dict[tuple, float]:
        out: dict[tuple, float] = defaultdict(float)
        d = sorted(depths)
        for path, p in law.items():
            out[tuple(path[k] if k < len(path) else ABSENT for k in d)] += p
        return dict(out)

    def project(self, v: Vertex, erase: frozenset[int]) -> tuple:
        key = (v, erase)
        hit = self._proj_cache.get(key)
        if hit is not None:
            return hit
        off = self.model.tog.offset
        segs = list(v[:-1])
        out = list(segs[:off])
        for seg in segs[off:]:
            out.append(tuple("*" if k in erase else x for k, x in enumerate(seg)))
        res = self._proj_cache[key] = tuple(out)
        return res


def _close(a: dict, b: dict, tol: float) -> bool:
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in set(a) | set(b))


def _slices(model: NTDCEG, T: int, H: int | None) -> range:
    if H is None:
        H = model.horizon + 2
    if H < T:
        raise ModelError("horizon H must be >= T")
    if T < 0:
        raise ModelError("T must be >= 0")
    return range(T, H + 1)


def _disjoint(X, Y):
    if not X or not Y:
        return
    if set(X) & set(Y):
        raise ModelError("variable sets must be disjoint")


def _groups(eng: _Engine, t: int, erase: frozenset[int]) -> dict[tuple, list[tuple[Vertex, float]]]:
    groups: dict[tuple, list] = defaultdict(list)
    for v, p in eng.histories(t):
        groups[eng.project(v, erase)].append((v, p))
    return groups


def _pair_signature(eng: _Engine, groups) -> frozenset:
    pairs = set()
    for members in groups.values():
        ws = sorted({eng.position_of(v) for v, _ in members})
        pairs.update((a, b) for a in ws for b in ws)
    return frozenset(pairs)


def _stabilized(eng: _Engine, slices: range, erase: frozenset[int]) -> bool:
    n = eng.model.horizon
    H = slices[-1]
    if H - 1 < n - 1 or H - 1 < slices[0]:
        return False
    return _pair_signature(eng, _groups(eng, H, erase)) == _pair_signature(eng, _groups(eng, H - 1, erase))


def _fmt_hist(v: Vertex) -> str:
    return "/".join(".".join(s) for s in v[:-1])


def local_independence(
    model: NTDCEG, view: VariableView, X: Sequence[str], Y: Sequence[str], T: int = 0, H: int | None = None,
    tol: float = 1e-9, use_tree: bool = False,
) -> Verdict:
    """X is T-locally independent of Y: p(X(t) | past) depends on the past only without Y."""
    _disjoint(X, Y)
    eng = _Engine.of(model, view, use_tree)
    dx, dy = view.depths(X), view.depths(Y)
    slices = _slices(model, T, H)
    count = 0
    for t in slices:
        for key, members in _groups(eng, t, dy).items():
            count += len(members)
            ref_v, ref = members[0][0], eng.law(members[0][0], dx)
            for v, _ in members[1:]:
                law = eng.law(v, dx)
                if not _close(ref, law, tol):
                    return Verdict(
                        False, "local",
                        {"t": t, "history_a": _fmt_hist(ref_v), "history_b": _fmt_hist(v), "law_a": _keyed(ref), "law_b": _keyed(law)},
                        tuple(slices), False, count,
                    )
    return Verdict(True, "local", None, tuple(slices), _stabilized(eng, slices, dy), count)


def contemporaneous_independence(
    model: NTDCEG, view: VariableView, X: Sequence[str], Y: Sequence[str], T: int = 0, H: int | None = None,
    tol: float = 1e-9, use_tree: bool = False,
) -> Verdict:
    _disjoint(X, Y)
    eng = _Engine.of(model, view, use_tree)
    dx, dy = view.depths(X), view.depths(Y)
    slices = _slices(model, T, H)
    count = 0
    for t in slices:
        for v, _ in eng.histories(t):
            count += 1
            joint = eng.law(v, dx | dy)
            px, py = eng.law(v, dx), eng.law(v, dy)
            order = sorted(dx | dy)
            ix = [order.index(k) for k in sorted(dx)]
            iy = [order.index(k) for k in sorted(dy)]
            for a in px:
                for b in py:
                    key = _merge(order, ix, iy, a, b)
                    if abs(joint.get(key, 0.0) - px[a] * py[b]) > tol:
                        return Verdict(
                            False, "contemporaneous",
                            {"t": t, "history": _fmt_hist(v), "x": list(a), "y": list(b), "joint": joint.get(key, 0.0), "product": px[a] * py[b]},
                            tuple(slices), False, count,
                        )
    return Verdict(True, "contemporaneous", None, tuple(slices), _stabilized(eng, slices, frozenset()), count)


def _merge(order, ix, iy, a, b) -> tuple:
    out = [None] * len(order)
    for i, x in zip(ix, a):
        out[i] = x
    for i, y in zip(iy, b):
        out[i] = y
    return tuple(out)


def _class_law(eng: _Engine, members, depths) -> dict:
    out: dict[tuple, float] = defaultdict(float)
    z = sum(p for _, p in members)
    for v, p in members:
        for k, q in eng.law(v, depths).items():
            out[k] += p * q / z
    return dict(out)


def stochastic_independence(
    model: NTDCEG, view: VariableView, X: Sequence[str], Y: Sequence[str], T: int = 0, H: int | None = None,
    tol: float = 1e-9, use_tree: bool = False,
) -> Verdict:
    """p(X(t), Y(t) | past) = p(X(t) | past without Y) p(Y(t) | past without X)."""
    _disjoint(X, Y)
    eng = _Engine.of(model, view, use_tree)
    dx, dy = view.depths(X), view.depths(Y)
    slices = _slices(model, T, H)
    order = sorted(dx | dy)
    ix = [order.index(k) for k in sorted(dx)]
    iy = [order.index(k) for k in sorted(dy)]
    count = 0
    for t in slices:
        gy = _groups(eng, t, dy)
        gx = _groups(eng, t, dx)
        law_x = {k: _class_law(eng, m, dx) for k, m in gy.items()}
        law_y = {k: _class_law(eng, m, dy) for k, m in gx.items()}
        for v, _ in eng.histories(t):
            count += 1
            joint = eng.law(v, dx | dy)
            px = law_x[eng.project(v, dy)]
            py = law_y[eng.project(v, dx)]
            keys = {_merge(order, ix, iy, a, b) for a in px for b in py} | set(joint)
            for key in keys:
                a = tuple(key[i] for i in ix)
                b = tuple(key[i] for i in iy)
                if abs(joint.get(key, 0.0) - px.get(a, 0.0) * py.get(b, 0.0)) > tol:
                    return Verdict(
                        False, "stochastic",
                        {"t": t, "history": _fmt_hist(v), "x": list(a), "y": list(b), "joint": joint.get(key, 0.0),
                         "product": px.get(a, 0.0) * py.get(b, 0.0)},
                        tuple(slices), False, count,
                    )
    stab = _stabilized(eng, slices, dx) and _stabilized(eng, slices, dy)
    return Verdict(True, "stochastic", None, tuple(slices), stab, count)


def _keyed(law: dict) -> dict:
    return {",".join("-" if x is None else x for x in k): v for k, v in sorted(law.items(), key=lambda kv: str(kv[0]))}


@dataclass
class GrangerAnswer:
    noncausal: bool
    verdict: Verdict
    assumption: str = "the event tree is taken to describe the natural behaviour of the process completely"

    @property
    def label(self) -> str:
        return "noncausal" if self.noncausal else "prima_facie"

    def as_dict(self) -> dict:
        return {"answer": self.label, "assumption": self.assumption, **self.verdict.as_dict()}


def granger_query(
    model: NTDCEG, view: VariableView, cause: Sequence[str], effect: Sequence[str], T: int = 0, H: int | None = None,
    tol: float = 1e-9,
) -> GrangerAnswer:
    """``cause`` is Granger noncausal for ``effect`` iff effect is locally independent of cause."""
    if not cause or not effect:
        raise ModelError("cause and effect must be non-empty")
    if set(cause) & set(effect):
        raise ModelError("cause and effect must be disjoint")
    v = local_independence(model, view, effect, cause, T, H, tol)
    return GrangerAnswer(v.holds, v)
