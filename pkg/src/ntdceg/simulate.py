"""Forward sampling and exact enumeration of NT-DCEG walks.

Sampling uses numpy's ``PCG64`` generator.  The master seed is expanded by
``numpy.random.SeedSequence`` into one child seed per batch of
``BATCH`` trajectories, so the output depends only on the seed and the
trajectory count, never on how many worker threads ran the batches.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .model import ModelError, SizeGuardError, Vertex
from .positions import NTDCEG

BATCH = 100_000


@dataclass(frozen=True)
class Trajectory:
    seed: int
    events: tuple[tuple[str, ...], ...]  # one label sequence per slice, oldest first
    positions: tuple[str, ...]  # every position entered, ending with a sink when terminated
    terminated_at: int | None

    def key(self) -> Vertex:
        """The path as a tree vertex, comparable with ``exact_joint`` keys."""
        return self.events


class _Compiled:
    """Integer tables for the walk: per position the out-edges and their CDF."""

    def __init__(self, model: NTDCEG):
        self.names = list(model.positions) + list(model.sinks)
        self.index = {n: i for i, n in enumerate(self.names)}
        self.n_positions = len(model.positions)
        self.edges = [e for n in model.positions for e in model.out_edges[n]]
        self.edge_source = np.array([self.index[e.source] for e in self.edges])
        self.edge_target = np.array([self.index[e.target] for e in self.edges])
        self.edge_crosses = np.array([e.kind != "within" for e in self.edges])
        self.out: list[np.ndarray] = []
        self.cdf: list[np.ndarray] = []
        for n in model.positions:
            ids = [k for k, e in enumerate(self.edges) if e.source == n]
            probs = np.array([self.edges[k].prob for k in ids])
            self.out.append(np.array(ids))
            cdf = np.cumsum(probs)
            cdf[-1] = np.inf  # guards against rounding in the last bin
            self.cdf.append(cdf)
        self.root = self.index[model.root]
        self.first_slice = -1 if model.tog.t_minus1 is not None else 0
        depth = max(len(s) for s in model.tog.slice_tree.children) + 1
        inv = model.tog.invariant_tree
        self.depth_minus1 = max(len(s) for s in inv.children) + 1 if inv is not None else 0
        self.slice_depth = depth


@dataclass
class TrajectorySet:
    """Sampled walks stored column-wise.

    ``steps[i, k]`` is the k-th edge index taken by trajectory i (-1 after it
    stopped); ``slices[i, k]`` the slice in which that edge was taken.
    """

    seed: int
    max_slices: int
    model: NTDCEG
    steps: np.ndarray
    slices: np.ndarray
    terminated_at: np.ndarray  # slice of the terminating event, or -2 when the walk was cut off

    def __len__(self) -> int:
        return self.steps.shape[0]

    @property
    def _compiled(self) -> _Compiled:
        c = self.__dict__.get("_c")
        if c is None:
            c = self.__dict__["_c"] = _Compiled(self.model)
        return c

    def trajectory(self, i: int) -> Trajectory:
        comp = self._compiled
        events: list[list[str]] = [[]]
        positions = [comp.names[comp.root]]
        for k in self.steps[i]:
            if k < 0:
                break
            e = comp.edges[k]
            events[-1].append(e.label)
            positions.append(e.target)
            if comp.edge_crosses[k]:
                events.append([])
        if not events[-1]:
            events.pop()
        term = int(self.terminated_at[i])
        return Trajectory(self.seed, tuple(map(tuple, events)), tuple(positions), None if term == -2 else term)

    def __iter__(self) -> Iterator[Trajectory]:
        for i in range(len(self)):
            yield self.trajectory(i)

    def path_codes(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct edge sequences and the count of each."""
        uniq, counts = np.unique(self.steps, axis=0, return_counts=True)
        return uniq, counts

    def frequencies(self) -> dict[Vertex, int]:
        """Counts per path, keyed like ``exact_joint``."""
        uniq, counts = self.path_codes()
        return {self._key(row): int(c) for row, c in zip(uniq, counts)}

    def _key(self, row: np.ndarray) -> Vertex:
        comp = self._compiled
        events: list[list[str]] = [[]]
        for k in row:
            if k < 0:
                break
            events[-1].append(comp.edges[k].label)
            if comp.edge_crosses[k]:
                events.append([])
        if not events[-1]:
            events.pop()
        return tuple(map(tuple, events))

    def visits(self, positions: Sequence[str], t: int) -> np.ndarray:
        """Index into ``positions`` of the position entered while in slice ``t``, or -1.

        The root counts as entered in the first slice.  When a walk enters
        several of the listed positions in slice ``t`` the first one is
        reported.
        """
        comp = self._compiled
        wanted = np.full(len(comp.names), -1)
        for j, p in enumerate(positions):
            wanted[comp.index[p]] = j
        out = np.full(len(self), -1)
        if t == comp.first_slice and wanted[comp.root] >= 0:
            out[:] = wanted[comp.root]
        valid = self.steps >= 0
        tgt = np.where(valid, comp.edge_target[np.where(valid, self.steps, 0)], -1)
        # an edge's target lives in the next slice when the edge crosses a boundary
        tslice = self.slices + np.where(valid, comp.edge_crosses[np.where(valid, self.steps, 0)], 0)
        hit = valid & (tslice == t) & (np.where(tgt >= 0, wanted[np.maximum(tgt, 0)], -1) >= 0)
        for i, k in zip(*np.nonzero(hit)):
            if out[i] < 0:
                out[i] = wanted[tgt[i, k]]
        return out


def _sample_batch(comp: _Compiled, n: int, max_slices: int, seed: np.random.SeedSequence):
    rng = np.random.Generator(np.random.PCG64(seed))
    n_steps = comp.depth_minus1 + max_slices * comp.slice_depth
    steps = np.full((n, n_steps), -1, dtype=np.int32)
    slices = np.full((n, n_steps), -2, dtype=np.int32)
    state = np.full(n, comp.root)
    cur_slice = np.full(n, comp.first_slice)
    terminated = np.full(n, -2)
    active = np.ones(n, dtype=bool)
    for k in range(n_steps):
        if not active.any():
            break
        u = rng.random(n)
        chosen = np.full(n, -1)
        for p in np.unique(state[active]):
            sel = active & (state == p)
            chosen[sel] = comp.out[p][np.searchsorted(comp.cdf[p], u[sel], side="right")]
        idx = np.nonzero(active)[0]
        steps[idx, k] = chosen[idx]
        slices[idx, k] = cur_slice[idx]
        tgt = comp.edge_target[chosen[idx]]
        crosses = comp.edge_crosses[chosen[idx]]
        to_sink = tgt >= comp.n_positions
        terminated[idx[to_sink]] = cur_slice[idx[to_sink]]
        cur_slice[idx] += crosses
        state[idx] = tgt
        active[idx[to_sink]] = False
        active &= cur_slice < max_slices
    return steps, slices, terminated


def sample(model: NTDCEG, n_trajectories: int, max_slices: int, seed: int, workers: int = 1) -> TrajectorySet:
    """Draw i.i.d. walks covering slices up to ``max_slices - 1``.

    A walk stops at a sink or when it would enter slice ``max_slices``.
    """
    if max_slices < 1:
        raise ModelError("max_slices must be at least 1")
    if n_trajectories < 0:
        raise ModelError("n_trajectories must be non-negative")
    comp = _Compiled(model)
    sizes = [BATCH] * (n_trajectories // BATCH)
    if n_trajectories % BATCH:
        sizes.append(n_trajectories % BATCH)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, children))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda j: _sample_batch(comp, j[0], max_slices, j[1]), jobs))
    else:
        parts = [_sample_batch(comp, n, max_slices, s) for n, s in jobs]
    n_steps = comp.depth_minus1 + max_slices * comp.slice_depth
    if parts:
        steps = np.concatenate([p[0] for p in parts])
        slices = np.concatenate([p[1] for p in parts])
        term = np.concatenate([p[2] for p in parts])
    else:
        steps = np.empty((0, n_steps), dtype=np.int32)
        slices = np.empty((0, n_steps), dtype=np.int32)
        term = np.empty(0, dtype=int)
    ts = TrajectorySet(seed, max_slices, model, steps, slices, term)
    ts.__dict__["_c"] = comp
    return ts


def exact_joint(model: NTDCEG, slices: int, limit: int = 1_000_000) -> dict[Vertex, float]:
    """Probability of every walk from the root until a sink or slice ``slices``.

    Keys are per-slice label tuples, matching ``tree_joint`` on the staged
    tree the model was built from.
    """
    if slices < 1:
        raise ModelError("slices must be at least 1")
    first = -1 if model.tog.t_minus1 is not None else 0
    out: dict[Vertex, float] = {}
    stack: list[tuple[str, int, Vertex, float]] = [(model.root, first, ((),), 1.0)]
    while stack:
        node, t, path, p = stack.pop()
        for e in model.out_edges[node]:
            q = p * e.prob
            new = path[:-1] + (path[-1] + (e.label,),)
            if e.target not in model.positions:
                out[new] = out.get(new, 0.0) + q
            elif e.kind != "within":
                if t + 1 >= slices:
                    out[new] = out.get(new, 0.0) + q
                else:
                    stack.append((e.target, t + 1, new + ((),), q))
            else:
                stack.append((e.target, t, new, q))
            if len(out) > limit:
                raise SizeGuardError(f"joint table exceeds {limit} rows")
    return out


def binomial_band(p: float, n: int, k: float = 3.0) -> float:
    """Half-width of the ``k``-sigma band for an empirical frequency."""
    return k * float(np.sqrt(max(p * (1 - p), 0.0) / n)) if n else float("inf")
