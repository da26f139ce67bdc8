"""Discrete dynamic Bayesian networks and their conversion to stratified DCEGs.

The conversion builds the product-space event tree of the variables in the
caller's order, then stages each situation by the variable it branches on,
the table in force at its slice and the configuration of that table's
parents along the root path.  Tables with identical parent lists and rows at
different slices share their stages.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .model import (
    DEFAULT_TOL,
    RECURRENT,
    TERMINAL,
    EventTree,
    ModelError,
    SizeGuardError,
    Stage,
    StagedTreePrefix,
    TogSpec,
    Vertex,
    sort_key,
    tree_joint,
    unrolled_vertices,
)

INVARIANT = "I"
HOMOGENEOUS = "H"


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]
    terminal: tuple[str, ...] = ()
    time_invariant: bool = False


@dataclass(frozen=True)
class Cpt:
    """Conditional table of ``variable`` at ``slice`` (an int, ``"H"`` or ``"I"``).

    ``parents`` lists ``(name, lag)`` pairs; lag 0 means the same slice.
    Parents that are time-invariant variables are written with lag 0.
    ``rows`` maps a tuple of parent values to a probability vector over the
    variable's states.
    """

    variable: str
    slice: int | str
    parents: tuple[tuple[str, int], ...]
    rows: Mapping[tuple[str, ...], tuple[float, ...]]


@dataclass(frozen=True)
class DbnSpec:
    variables: tuple[Variable, ...]
    horizon: int
    tables: tuple[Cpt, ...]
    tol: float = DEFAULT_TOL

    @property
    def invariant(self) -> list[Variable]:
        return [v for v in self.variables if v.time_invariant]

    @property
    def varying(self) -> list[Variable]:
        return [v for v in self.variables if not v.time_invariant]

    def var(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def table(self, name: str, t: int | str) -> Cpt:
        if self.var(name).time_invariant:
            key = INVARIANT
        else:
            key = t if isinstance(t, int) and t < self.horizon - 1 else HOMOGENEOUS
        for c in self.tables:
            if c.variable == name and c.slice == key:
                return c
        raise ModelError(f"no table for {name} at slice {key}")


@dataclass
class ConversionReport:
    ok: bool
    errors: list[str] = field(default_factory=list)


def validate_dbn(dbn: DbnSpec) -> ConversionReport:
    errors = []
    names = [v.name for v in dbn.variables]
    if not names:
        errors.append("no variables")
    if len(set(names)) != len(names):
        errors.append("duplicate variable names")
    if dbn.horizon < 1:
        errors.append("order N must be >= 1")
    seen_varying = False
    for v in dbn.variables:
        if v.time_invariant and seen_varying:
            errors.append(f"time-invariant variable {v.name} placed after a time-varying one")
        seen_varying |= not v.time_invariant
        if len(set(v.states)) != len(v.states) or not v.states:
            errors.append(f"{v.name}: empty or repeated states")
        if any(s not in v.states for s in v.terminal):
            errors.append(f"{v.name}: terminal state not in its state space")
        if v.time_invariant and v.terminal:
            errors.append(f"{v.name}: time-invariant variables cannot terminate the process")
    if errors:
        return ConversionReport(False, errors)
    if not dbn.varying:
        errors.append("no time-varying variable")
    order = {v.name: i for i, v in enumerate(dbn.variables)}
    keys = set()
    for c in dbn.tables:
        if c.variable not in order:
            errors.append(f"table for unknown variable {c.variable}")
            continue
        key = (c.variable, c.slice)
        if key in keys:
            errors.append(f"two tables for {c.variable} at slice {c.slice}")
        keys.add(key)
        var = dbn.var(c.variable)
        t = c.slice
        if var.time_invariant and t != INVARIANT:
            errors.append(f"{c.variable}: time-invariant tables use slice 'I'")
            continue
        if not var.time_invariant and not (t == HOMOGENEOUS or (isinstance(t, int) and 0 <= t < dbn.horizon - 1)):
            errors.append(f"{c.variable}: invalid table slice {t!r}")
            continue
        for p, lag in c.parents:
            if p not in order:
                errors.append(f"{c.variable}@{t}: unknown parent {p}")
                continue
            pv = dbn.var(p)
            if pv.time_invariant:
                if var.time_invariant and order[p] >= order[c.variable]:
                    errors.append(f"{c.variable}: parent {p} is not earlier in the order")
                continue
            if var.time_invariant:
                errors.append(f"{c.variable}: time-invariant variable with time-varying parent {p}")
            elif lag < 0 or lag > dbn.horizon - 1:
                errors.append(f"{c.variable}@{t}: lag {lag} of {p} breaks the order-{dbn.horizon - 1} Markov condition")
            elif lag == 0 and order[p] >= order[c.variable]:
                errors.append(f"{c.variable}@{t}: contemporaneous parent {p} is not earlier in the order")
            elif isinstance(t, int) and t - lag < 0:
                errors.append(f"{c.variable}@{t}: parent {p} at lag {lag} precedes slice 0")
            elif t == HOMOGENEOUS and lag > dbn.horizon - 1:
                errors.append(f"{c.variable}@H: lag {lag} too large")
        configs = itertools.product(*[dbn.var(p).states for p, _ in c.parents])
        for cfg in configs:
            row = c.rows.get(tuple(cfg))
            if row is None:
                errors.append(f"{c.variable}@{t}: missing row for parents {cfg}")
                break
            if len(row) != len(var.states):
                errors.append(f"{c.variable}@{t}: row {cfg} has {len(row)} entries for {len(var.states)} states")
            elif any(x < 0 for x in row) or abs(sum(row) - 1.0) > dbn.tol:
                errors.append(f"{c.variable}@{t}: row {cfg} is not a probability vector")
    for v in dbn.variables:
        needed = [INVARIANT] if v.time_invariant else list(range(dbn.horizon - 1)) + [HOMOGENEOUS]
        for t in needed:
            if (v.name, t) not in keys:
                errors.append(f"missing table for {v.name} at slice {t}")
    return ConversionReport(not errors, errors)


def build_variable_tree(variables: Sequence[Variable], leaf_kind: bool = True) -> EventTree:
    """Product-space tree branching on each variable in turn.

    Paths stop below a terminal state; those leaves are terminal, the others
    recurrent (or unflagged when ``leaf_kind`` is false).
    """
    if not variables:
        raise ModelError("empty variable list")

    def grow(k: int):
        if k == len(variables):
            return RECURRENT if leaf_kind else None
        var = variables[k]
        return {s: (TERMINAL if leaf_kind else None) if s in var.terminal else grow(k + 1) for s in var.states}

    return EventTree.from_nested(grow(0))


def dbn_tog(dbn: DbnSpec) -> TogSpec:
    inv = dbn.invariant
    t_minus1 = build_variable_tree(inv, leaf_kind=False) if inv else None
    return TogSpec(build_variable_tree(dbn.varying), t_minus1)


def _values(dbn: DbnSpec, v: Vertex, tog: TogSpec) -> dict[tuple[str, int], str]:
    """Variable instances realised on the root path of ``v``: (name, slice) -> value."""
    out = {}
    segs = list(v)
    if tog.offset:
        for var, val in zip(dbn.invariant, segs[0]):
            out[(var.name, -1)] = val
        segs = segs[1:]
    for t, seg in enumerate(segs):
        for var, val in zip(dbn.varying, seg):
            out[(var.name, t)] = val
    return out


def _canonical_tables(dbn: DbnSpec) -> dict[tuple[str, int | str], int]:
    """Tables of one variable with equal parents and rows share an id."""
    out: dict[tuple[str, int | str], int] = {}
    reps: list[Cpt] = []
    for c in dbn.tables:
        for i, r in enumerate(reps):
            if (
                r.variable == c.variable
                and r.parents == c.parents
                and r.rows.keys() == c.rows.keys()
                and all(
                    all(abs(a - b) <= dbn.tol for a, b in zip(r.rows[k], c.rows[k])) for k in r.rows
                )
            ):
                out[(c.variable, c.slice)] = i
                break
        else:
            out[(c.variable, c.slice)] = len(reps)
            reps.append(c)
    return out


def dbn_to_sdceg(dbn: DbnSpec, merge_across_slices: bool = True) -> StagedTreePrefix:
    """Stratified staged prefix of the DBN over slices -1..N."""
    rep = validate_dbn(dbn)
    if not rep.ok:
        raise ModelError("; ".join(rep.errors))
    tog = dbn_tog(dbn)
    canon = _canonical_tables(dbn) if merge_across_slices else {(c.variable, c.slice): i for i, c in enumerate(dbn.tables)}
    members: dict[tuple, list[Vertex]] = defaultdict(list)
    probs: dict[tuple, tuple[float, ...]] = {}
    situations = sorted(unrolled_vertices(tog, dbn.horizon + 1)[0], key=lambda v: sort_key(tog, v))
    for v in situations:
        t = tog.slice_of(v)
        level = len(v[-1])
        var = dbn.invariant[level] if t == -1 else dbn.varying[level]
        table = dbn.table(var.name, t)
        vals = _values(dbn, v, tog)
        rho = tuple(
            vals[(p, -1)] if dbn.var(p).time_invariant else vals[(p, t - lag)] for p, lag in table.parents
        )
        key = (var.name, canon[(var.name, table.slice)], rho)
        members[key].append(v)
        probs[key] = tuple(float(x) for x in table.rows[rho])
    stages = {}
    for i, (key, vs) in enumerate(members.items()):
        var = dbn.var(key[0])
        stages[f"u{i}"] = Stage(tuple(vs), probs[key], var.states)
    return StagedTreePrefix(tog, dbn.horizon, stages, dbn.tol)


def dbn_joint(dbn: DbnSpec, slices: int, limit: int = 2_000_000) -> dict[Vertex, float]:
    """Joint law of all realised variable instances over slices 0..slices-1.

    Enumerates assignments slice by slice with the chain rule on the CPTs;
    a terminal state ends the trajectory.  Keys use the vertex encoding of
    the converted tree so the two joints can be compared directly.
    """
    inv = dbn.invariant
    var = dbn.varying
    out: dict[Vertex, float] = {}

    def cpt_prob(name, t, vals, value):
        table = dbn.table(name, t)
        rho = tuple(vals[(p, -1)] if dbn.var(p).time_invariant else vals[(p, t - lag)] for p, lag in table.parents)
        return table.rows[rho][dbn.var(name).states.index(value)]

    starts = [((), {}, 1.0)]
    if inv:
        starts = []
        for combo in itertools.product(*[v.states for v in inv]):
            vals = {}
            p = 1.0
            for v, x in zip(inv, combo):
                p *= cpt_prob(v.name, -1, vals, x)
                vals[(v.name, -1)] = x
            starts.append(((tuple(combo),), vals, p))

    def extend(segs, vals, p, t):
        if p == 0.0:
            return
        if t == slices:
            out[segs] = out.get(segs, 0.0) + p
            return
        for combo in itertools.product(*[v.states for v in var]):
            vals2 = dict(vals)
            q = p
            seg = []
            stopped = False
            for v, x in zip(var, combo):
                q *= cpt_prob(v.name, t, vals2, x)
                vals2[(v.name, t)] = x
                seg.append(x)
                if x in v.terminal:
                    stopped = True
                    break
            if stopped:
                # all combos sharing this prefix collapse onto one terminal path
                if combo[len(seg):] != tuple(v.states[0] for v in var[len(seg):]):
                    continue
                key = segs + (tuple(seg),)
                out[key] = out.get(key, 0.0) + q
            else:
                extend(segs + (tuple(seg),), vals2, q, t + 1)
            if len(out) > limit:
                raise SizeGuardError(f"joint exceeds {limit} rows")

    for segs, vals, p in starts:
        extend(segs, vals, p, 0)
    return {k: v for k, v in out.items() if v > 0.0}


def max_joint_gap(a: Mapping[Vertex, float], b: Mapping[Vertex, float]) -> float:
    keys = set(a) | set(b)
    return max((abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys), default=0.0)


# ---------------------------------------------------------------------------
# conditional independence on enumerated joints


def instance_rows(dbn: DbnSpec, joint: Mapping[Vertex, float], tog: TogSpec) -> list[tuple[dict, float]]:
    return [(_values(dbn, v, tog), p) for v, p in joint.items()]


def context_ci_holds(
    rows: Iterable[tuple[Mapping, float]],
    target: Sequence,
    independent_of: Sequence,
    given: Sequence = (),
    context: Mapping | None = None,
    tol: float = DEFAULT_TOL,
) -> tuple[bool, tuple | None]:
    """Check target ⊥ independent_of | given, within ``context``.

    ``context`` maps a variable instance to the set of values it must take.
    Rows in which any involved instance is not realised are skipped.
    Returns (holds, witness) where the witness is
    ``(given values, independent_of values, conditional law, reference law)``.
    """
    context = context or {}
    involved = list(target) + list(independent_of) + list(given) + list(context)
    table: dict[tuple, dict[tuple, dict[tuple, float]]] = defaultdict(lambda: defaultdict(lambda: defaultdict(float)))
    for vals, p in rows:
        if p <= 0 or any(k not in vals for k in involved):
            continue
        if any(vals[k] not in allowed for k, allowed in context.items()):
            continue
        g = tuple(vals[k] for k in given)
        b = tuple(vals[k] for k in independent_of)
        a = tuple(vals[k] for k in target)
        table[g][b][a] += p
    for g, by_b in table.items():
        ref: dict[tuple, float] = defaultdict(float)
        for dist in by_b.values():
            for a, p in dist.items():
                ref[a] += p
        z = sum(ref.values())
        ref = {a: p / z for a, p in ref.items()}
        for b, dist in by_b.items():
            zb = sum(dist.values())
            for a in set(ref) | set(dist):
                if abs(dist.get(a, 0.0) / zb - ref.get(a, 0.0)) > tol * 10:
                    return False, (g, b, {k: x / zb for k, x in dist.items()}, ref)
    return True, None


@dataclass
class OmpReport:
    ok: bool
    checked: int
    violations: list[str] = field(default_factory=list)


def omp_statements(dbn: DbnSpec, slices: int) -> list[tuple[tuple, list, list]]:
    """(instance, earlier non-parents, parents) for every variable instance."""
    order = [(v.name, -1) for v in dbn.invariant]
    for t in range(slices):
        order += [(v.name, t) for v in dbn.varying]
    out = []
    for k, (name, t) in enumerate(order):
        table = dbn.table(name, t)
        parents = [(p, -1) if dbn.var(p).time_invariant else (p, t - lag) for p, lag in table.parents]
        earlier = [x for x in order[:k] if x not in parents]
        out.append(((name, t), earlier, parents))
    return out


def ci_statements_preserved(
    dbn: DbnSpec, prefix: StagedTreePrefix, slices: int = 3, limit: int = 200_000
) -> OmpReport:
    """Verify every ordered-Markov statement of the DBN on the staged tree's joint."""
    joint = tree_joint(prefix, slices, limit=limit)
    rows = instance_rows(dbn, joint, prefix.tog)
    violations = []
    statements = omp_statements(dbn, slices)
    for inst, earlier, parents in statements:
        if not earlier:
            continue
        ok, witness = context_ci_holds(rows, [inst], earlier, parents, tol=prefix.tol)
        if not ok:
            violations.append(f"{inst} not independent of earlier non-parents given {parents}: {witness}")
    return OmpReport(not violations, len(statements), violations)
