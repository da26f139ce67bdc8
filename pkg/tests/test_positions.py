from __future__ import annotations

import time
from collections import Counter

from hypothesis import given, settings
from hypothesis import strategies as st

from ntdceg.fixtures import REFERENCE_STAGES, match_stage_memberships, reference_isomorphisms, radicalisation_model
from ntdceg.model import EventTree, TogSpec, identity_staging, tree_joint
from ntdceg.positions import (
    brute_force_positions,
    build_ntdceg,
    compute_positions,
    positions_partition,
    same_partition,
    unroll_to_ceg,
)
from ntdceg.random_models import random_staged_model


def test_fixture_structure(rad):
    assert len(rad.positions) == 28
    assert len(rad.stages) == 15
    sizes = Counter(len(ws) for ws in rad.stages.values())
    assert sizes == Counter(len(ws) for ws in REFERENCE_STAGES.values())
    assert rad.sinks == ["winf0", "winf"]
    assert rad.check_invariants() == []


def test_fixture_matches_reference_memberships(rad):
    assert len(reference_isomorphisms(rad)) == 1
    rename = match_stage_memberships(rad)
    assert rename is not None
    iso = reference_isomorphisms(rad)[0]
    # u12 = {w19, w20, w21} and u6 = {w10, w13}
    assert sorted(rad.stages[rename["u12"]]) == sorted(iso[w] for w in ("w19", "w20", "w21"))
    assert sorted(rad.stages[rename["u6"]]) == sorted(iso[w] for w in ("w10", "w13"))


def test_build_is_fast():
    start = time.perf_counter()
    build_ntdceg(radicalisation_model())
    assert time.perf_counter() - start < 1.0


def test_temporal_and_cyclic_edges(rad):
    iso = reference_isomorphisms(rad)[0]
    entries = {iso[f"w{i}"] for i in range(10, 16)}
    assert len(rad.temporal_edges) == 6 and len(rad.cyclic_edges) == 6
    for e in rad.temporal_edges + rad.cyclic_edges:
        assert e.label == "n"
        assert e.target in entries
    assert {e.source for e in rad.cyclic_edges} <= set(rad.subgraph("D_H"))
    assert {e.source for e in rad.temporal_edges} <= set(rad.subgraph("D_I"))


def test_regions(rad):
    assert len(rad.subgraph("D_I")) == 10
    assert len(rad.subgraph("D_H")) == 18


def test_panel2_structure(panel2):
    assert len(panel2.positions) == 19
    assert len(panel2.stages) == 9
    assert len(panel2.stages["uc"]) == 3
    assert panel2.check_invariants() == []


def test_identical_subtrees_merge():
    tree = EventTree.from_nested({"a": {"x": "recurrent", "y": "terminal"}, "b": {"x": "recurrent", "y": "terminal"}})
    prefix = identity_staging(TogSpec(tree), 1, probs=lambda v: (0.5, 0.5))
    # identity staging keeps the two subtree roots in different stages
    model = build_ntdceg(prefix)
    assert model.position_of((("a",),)) != model.position_of((("b",),))
    # sharing one stage makes their coloured subtrees identical
    from ntdceg.model import staging_from_function

    merged = staging_from_function(
        TogSpec(tree), 1, lambda v: "root" if v[-1] == () else "mid", {"root": (0.5, 0.5), "mid": (0.3, 0.7)}
    )
    model = build_ntdceg(merged)
    assert model.position_of((("a",),)) == model.position_of((("b",),))


def test_positions_refine_stages(rad_prefix):
    blocks = compute_positions(rad_prefix)
    by_block: dict[int, set] = {}
    for v, b in blocks.items():
        by_block.setdefault(b, set()).add((rad_prefix.stage_of(v), rad_prefix.slice_class(v)))
    assert all(len(s) == 1 for s in by_block.values())


def test_brute_force_on_fixture(rad_prefix, rad):
    bf = brute_force_positions(rad_prefix, 5)
    vs = [v for b in bf for v in b]
    assert {0, 1, 2} <= {rad_prefix.tog.slice_of(v) for v in vs}
    assert same_partition(bf, positions_partition(rad, vs))


def test_ceg_two_contracts_final_slice(rad):
    iso = reference_isomorphisms(rad)[0]
    ceg = unroll_to_ceg(rad, 2)
    node = {ceg.lookup(iso[w], 1) for w in ("w19", "w20", "w21")}
    assert len(node) == 1 and None not in node
    # the non-adopting transfer positions contract too
    assert len({ceg.lookup(iso[w], 1) for w in ("w22", "w23", "w24")}) == 1


def test_ceg_refines_with_t(rad):
    c2, c3 = unroll_to_ceg(rad, 2), unroll_to_ceg(rad, 3)
    for s in (0, 1):
        for block in c3.slice_partition(s):
            assert len({c2.lookup(p, t) for p, t in block}) == 1


def test_ceg_at_n_minus_one_is_initial_graph(rad):
    ceg = unroll_to_ceg(rad, 1)
    members = {p for n in ceg.nodes.values() for p, _ in n.members}
    assert members == set(rad.subgraph("D_I"))


def test_long_unroll_recovers_cyclic_positions(rad):
    ceg = unroll_to_ceg(rad, 5)
    for t in (1, 2):
        blocks = ceg.slice_partition(t)
        assert all(len(b) == 1 for b in blocks)
        assert {b[0][0] for b in blocks} == set(rad.subgraph("D_H"))


def test_ceg_preserves_path_probabilities(rad_prefix, rad):
    for t in (1, 2, 3):
        ceg = unroll_to_ceg(rad, t)
        paths = ceg.path_probabilities()
        expected = {sum(k, ()): p for k, p in tree_joint(rad_prefix, t).items()}
        assert paths.keys() == expected.keys()
        assert max(abs(paths[k] - expected[k]) for k in paths) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_models_match_brute_force(seed):
    prefix = random_staged_model(seed)
    model = build_ntdceg(prefix)
    assert model.check_invariants() == []
    bf = brute_force_positions(prefix, 6)
    assert same_partition(bf, positions_partition(model, [v for b in bf for v in b]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_ceg_probabilities(seed):
    prefix = random_staged_model(seed)
    model = build_ntdceg(prefix)
    paths = unroll_to_ceg(model, 3).path_probabilities()
    expected = {sum(k, ()): p for k, p in tree_joint(prefix, 3).items()}
    assert paths.keys() == expected.keys()
    assert max(abs(paths[k] - expected[k]) for k in paths) <= 1e-9
