from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntdceg.fixtures import radicalisation_slice_tree, radicalisation_tog
from ntdceg.model import (
    RECURRENT,
    TERMINAL,
    EventTree,
    HomogeneityError,
    Stage,
    StagedTreePrefix,
    TogSpec,
    identity_staging,
    parse_vertex,
    tree_joint,
    unroll_tog,
    unrolled_vertices,
    validate_event_tree,
    validate_staging,
    vertex_id,
)
from ntdceg.positions import compute_positions


def test_slice_tree_counts():
    rep = validate_event_tree(radicalisation_slice_tree())
    assert rep.ok
    assert rep.stats == {"situations": 13, "leaves": 18, "terminal": 9, "recurrent": 9}


def test_single_root_tree():
    rep = validate_event_tree(EventTree(root="r"))
    assert rep.ok
    assert rep.stats["situations"] == 0 and rep.stats["leaves"] == 1


def test_duplicate_sibling_label():
    tree = EventTree(root="", edges=(("", "x", "a"), ("", "y", "a")))
    rep = validate_event_tree(tree)
    assert not rep.ok
    assert any("duplicate sibling" in e for e in rep.errors)


def test_two_parents_and_cycle_reported():
    tree = EventTree(root="r", edges=(("r", "a", "x"), ("r", "b", "y"), ("a", "c", "z"), ("b", "c", "w")))
    rep = validate_event_tree(tree)
    assert any("2 parents" in e for e in rep.errors)


def test_reserved_characters_rejected():
    tree = EventTree.from_nested({"a.b": RECURRENT})
    assert not validate_event_tree(tree).ok


def test_tog_requires_recurrent_leaf():
    tog = TogSpec(EventTree.from_nested({"a": TERMINAL, "b": TERMINAL}))
    rep = tog.validate()
    assert not rep.ok and any("no recurrent leaf" in e for e in rep.errors)


def test_nested_round_trip():
    tree = radicalisation_slice_tree()
    assert EventTree.from_nested(tree.to_nested()) == tree


def test_unroll_depth_one_is_slice_tree():
    tog = radicalisation_tog()
    tree = unroll_tog(tog, 1)
    assert len(tree.leaves) == 18
    assert len(tree.situations) == 13


def test_unroll_leaf_recurrence():
    # L_{d+1} = L_d - R_d + R_d * L_1 with R_d the recurrent frontier of depth d
    tog = radicalisation_tog()
    l1 = len(unroll_tog(tog, 1).leaves)
    prev = l1
    for d in range(1, 5):
        _, leaves = unrolled_vertices(tog, d)
        r = sum(1 for v in leaves if not tog.is_terminal(v))
        nxt = len(unrolled_vertices(tog, d + 1)[1])
        assert nxt == prev - r + r * l1
        prev = nxt
    assert len(unroll_tog(tog, 2).leaves) == 171


def test_unroll_prefix_stability():
    tog = radicalisation_tog(with_conviction=True)
    small = unroll_tog(tog, 2)
    big = unroll_tog(tog, 3)
    assert set(small.situations) <= set(big.situations)
    assert set(small.edges) <= set(big.edges)


def test_conviction_tree_has_four_slice_copies():
    tog = radicalisation_tog(with_conviction=True)
    situations, leaves = unrolled_vertices(tog, 1)
    roots = [v for v in situations if tog.slice_of(v) == 0 and v[-1] == ()]
    assert len(roots) == 4
    assert len(leaves) == 4 * 18


def test_unroll_rejects_zero_depth():
    with pytest.raises(ValueError):
        unroll_tog(radicalisation_tog(), 0)


def test_fixture_staging_validates(rad_prefix):
    rep = validate_staging(rad_prefix)
    assert rep.ok, rep.errors
    assert rep.stats["stages"] == 15


def _edit(prefix, sid, **changes):
    stages = dict(prefix.stages)
    stages[sid] = Stage(**{**stages[sid].__dict__, **changes})
    return StagedTreePrefix(prefix.tog, prefix.horizon, stages)


def test_unnormalized_stage_rejected(rad_prefix):
    bad = _edit(rad_prefix, "u4", probs=(0.5, 0.6))
    rep = validate_staging(bad)
    assert any("not normalized" in e for e in rep.errors)


def test_arity_mismatch_rejected(rad_prefix):
    # put a 3-outcome situation into the 2-outcome stage u4
    stages = dict(rad_prefix.stages)
    moved = stages["u1"].situations[0]
    stages["u1"] = Stage(stages["u1"].situations[1:] or (), stages["u1"].probs, stages["u1"].label_order)
    stages["u4"] = Stage(stages["u4"].situations + (moved,), stages["u4"].probs, stages["u4"].label_order)
    rep = validate_staging(StagedTreePrefix(rad_prefix.tog, 2, stages))
    assert any("arity mismatch" in e for e in rep.errors)


def test_missing_situation_rejected(rad_prefix):
    stages = dict(rad_prefix.stages)
    st0 = stages["u13"]
    stages["u13"] = Stage(st0.situations[1:], st0.probs, st0.label_order)
    rep = validate_staging(StagedTreePrefix(rad_prefix.tog, 2, stages))
    assert any("without a stage" in e for e in rep.errors)


def test_homogeneity_violation(rad_prefix):
    # move one slice-2 situation of u13 into its own stage
    stages = dict(rad_prefix.stages)
    st0 = stages["u13"]
    late = next(v for v in st0.situations if rad_prefix.tog.slice_of(v) == 2)
    stages["u13"] = Stage(tuple(v for v in st0.situations if v != late), st0.probs, st0.label_order)
    stages["late"] = Stage((late,), st0.probs, st0.label_order)
    bad = StagedTreePrefix(rad_prefix.tog, 2, stages)
    rep = validate_staging(bad)
    assert not rep.ok and all(e.startswith("homogeneity") for e in rep.errors)
    with pytest.raises(HomogeneityError):
        compute_positions(bad)


def test_tree_joint_sums_to_one(rad_prefix):
    for slices in (1, 2, 3):
        assert abs(sum(tree_joint(rad_prefix, slices).values()) - 1.0) < 1e-9


# -- property tests on random trees ---------------------------------------------


@st.composite
def slice_trees(draw, max_depth=3):
    def node(depth):
        if depth == max_depth or (depth > 0 and draw(st.booleans())):
            return draw(st.sampled_from([TERMINAL, RECURRENT]))
        k = draw(st.integers(1, 3))
        return {f"e{i}": node(depth + 1) for i in range(k)}

    nested = node(0)
    if not isinstance(nested, dict):
        nested = {"e0": RECURRENT}
    tree = EventTree.from_nested(nested)
    if RECURRENT not in [tree.leaf_kind.get(v) for v in tree.leaves]:
        nested = {**nested, "loop": RECURRENT}
        tree = EventTree.from_nested(nested)
    return tree


@settings(max_examples=40, deadline=None)
@given(slice_trees(), st.integers(1, 2), st.booleans())
def test_identity_staging_always_validates(tree, horizon, invariant):
    t_minus1 = EventTree.from_nested({"p": None, "q": None}) if invariant else None
    prefix = identity_staging(TogSpec(tree, t_minus1), horizon)
    rep = validate_staging(prefix)
    assert rep.ok, rep.errors


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.text("abcxyz019", min_size=1, max_size=3), max_size=4), min_size=1, max_size=4))
def test_vertex_id_round_trip(segments):
    v = tuple(tuple(s) for s in segments)
    assert parse_vertex(vertex_id(v)) == v
