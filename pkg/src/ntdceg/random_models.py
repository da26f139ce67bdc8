"""Seeded random models for the oracle sweeps.

Every generator takes an integer seed and is deterministic in it.  Models
are small enough for exhaustive enumeration: binary variables, at most
three per slice, two or three specified slices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .dbn import Cpt, DbnSpec, Variable, dbn_to_sdceg
from .independence import VariableView
from .model import (
    RECURRENT,
    TERMINAL,
    EventTree,
    StagedTreePrefix,
    TogSpec,
    Vertex,
    sort_key,
    staging_from_function,
    unrolled_vertices,
)

BINARY = ("0", "1")


def _probs(rng: np.random.Generator, k: int) -> tuple[float, ...]:
    # bounded away from zero so every path stays reachable
    p = rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
    p = np.round(p, 6)
    p[-1] = round(1.0 - float(p[:-1].sum()), 6)
    return tuple(float(x) for x in p)


def random_slice_tree(rng: np.random.Generator, n_vars: int, p_terminal: float = 0.25) -> EventTree:
    """Binary product tree with ``n_vars`` levels; some leaves end the process."""
    leaves = list(itertools.product(BINARY, repeat=n_vars))
    kinds = [TERMINAL if rng.random() < p_terminal else RECURRENT for _ in leaves]
    if RECURRENT not in kinds:
        kinds[int(rng.integers(len(kinds)))] = RECURRENT

    def nest(prefix: tuple[str, ...]):
        if len(prefix) == n_vars:
            return kinds[leaves.index(prefix)]
        return {x: nest(prefix + (x,)) for x in BINARY}

    return EventTree.from_nested(nest(()))


def random_staged_model(
    seed: int,
    n_vars: int = 2,
    horizon: int | None = None,
    with_t_minus1: bool | None = None,
    stratified: bool = False,
    p_new_stage: float = 0.5,
    p_swap: float = 0.2,
) -> StagedTreePrefix:
    """A random time-homogeneous staging of a random binary product TOG.

    Situations of slices -1..N-1 join an existing compatible stage or open a
    new one; slice N copies the stage of its time shift.  ``stratified``
    keeps each stage inside one tree level.  With probability ``p_swap`` a
    situation reads its two labels swapped onto the stage's order.
    """
    rng = np.random.default_rng(seed)
    if horizon is None:
        horizon = int(rng.integers(1, 3))
    if with_t_minus1 is None:
        with_t_minus1 = bool(rng.random() < 0.3)
    t_minus1 = EventTree.from_nested({"c0": None, "c1": None}) if with_t_minus1 else None
    tog = TogSpec(random_slice_tree(rng, n_vars), t_minus1)
    situations = sorted(unrolled_vertices(tog, horizon + 1)[0], key=lambda v: sort_key(tog, v))
    stage_of: dict[Vertex, str] = {}
    swapped: dict[Vertex, bool] = {}
    buckets: dict[tuple, list[str]] = {}
    for v in situations:
        if tog.slice_of(v) == horizon:
            continue
        key = (tog.slice_of(v) == -1, len(v[-1]) if stratified else None)
        pool = buckets.setdefault(key, [])
        if pool and rng.random() >= p_new_stage:
            stage_of[v] = pool[int(rng.integers(len(pool)))]
        else:
            stage_of[v] = f"s{sum(map(len, buckets.values()))}"
            pool.append(stage_of[v])
        swapped[v] = bool(rng.random() < p_swap)

    def base(v: Vertex) -> Vertex:
        return tog.shift(v) if tog.slice_of(v) == horizon else v

    def label_map(v: Vertex):
        if not swapped[base(v)]:
            return None
        a, b = tog.labels(v)
        return {a: b, b: a}

    stage_ids = sorted(set(stage_of.values()), key=lambda s: int(s[1:]))
    probs = {s: _probs(rng, 2) for s in stage_ids}
    return staging_from_function(tog, horizon, lambda v: stage_of[base(v)], probs, label_map)


# ---------------------------------------------------------------------------
# DBNs


def random_dbn(
    seed: int,
    max_vars: int = 3,
    horizon: int = 2,
    p_parent: float = 0.5,
    p_terminal: float = 0.3,
    p_invariant: float = 0.2,
    p_shared_row: float = 0.3,
) -> DbnSpec:
    """A random binary N-slice DBN.

    Parents are drawn among earlier variables of the same slice and, for
    the homogeneous tables, all variables ``1..N-1`` slices back.  Rows
    repeat an earlier row with probability ``p_shared_row`` so that
    context-specific merges occur; the homogeneous table sometimes copies
    the slice-0 table outright.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_vars + 1))
    variables = []
    for i in range(n):
        invariant = i == 0 and n > 1 and rng.random() < p_invariant
        terminal = ("1",) if (i == n - 1 and rng.random() < p_terminal) else ()
        variables.append(Variable(f"V{i}", BINARY, terminal, invariant))
    inv = [v.name for v in variables if v.time_invariant]
    varying = [v.name for v in variables if not v.time_invariant]

    def rows(parents) -> dict:
        out: dict = {}
        seen: list[tuple[float, ...]] = []
        for cfg in itertools.product(BINARY, repeat=len(parents)):
            if seen and rng.random() < p_shared_row:
                out[cfg] = seen[int(rng.integers(len(seen)))]
            else:
                out[cfg] = _probs(rng, 2)
                seen.append(out[cfg])
        return out

    tables = []
    for name in inv:
        tables.append(Cpt(name, "I", (), rows(())))
    slice_specs = list(range(horizon - 1)) + ["H"]
    for name in varying:
        k = varying.index(name)
        zero_parents = tuple((p, 0) for p in inv + varying[:k] if rng.random() < p_parent)
        first = None
        for sl in slice_specs:
            cand = [(p, 0) for p in inv + varying[:k]]
            if sl == "H":
                cand += [(p, lag) for lag in range(1, horizon) for p in varying]
            if sl == slice_specs[0]:
                parents = zero_parents
            else:
                parents = tuple(c for c in cand if rng.random() < p_parent)
            if first is not None and rng.random() < 0.3:
                parents, table_rows = first
            else:
                table_rows = rows(parents)
            first = first or (parents, table_rows)
            tables.append(Cpt(name, sl, parents, table_rows))
    return DbnSpec(tuple(variables), horizon, tuple(tables))


# ---------------------------------------------------------------------------
# stratified models with variable views


@dataclass(frozen=True)
class StratifiedCase:
    seed: int
    prefix: StagedTreePrefix
    view: VariableView
    source: str  # "staging" or "dbn"


def random_stratified_model(seed: int) -> StratifiedCase:
    """A stratified model with named levels.

    Even seeds give a random level-respecting staging, odd seeds a converted
    sparse DBN; the latter make independence statements hold often enough
    for both verdicts to be exercised.
    """
    rng = np.random.default_rng(seed)
    n_vars = int(rng.integers(2, 4))
    levels = tuple(f"X{i}" for i in range(n_vars))
    if seed % 2 == 0:
        prefix = random_staged_model(seed, n_vars=n_vars, horizon=int(rng.integers(1, 3)), with_t_minus1=False,
                                     stratified=True, p_new_stage=0.6, p_swap=0.0)
        return StratifiedCase(seed, prefix, VariableView(levels), "staging")
    while True:
        dbn = random_dbn(seed, max_vars=3, p_parent=0.35, p_invariant=0.0)
        varying = [v.name for v in dbn.varying]
        if len(varying) >= 2:
            break
        seed += 1_000_003
    return StratifiedCase(seed, dbn_to_sdceg(dbn), VariableView(tuple(varying)), "dbn")
