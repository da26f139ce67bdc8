from __future__ import annotations

import dataclasses

import pytest

from ntdceg.composite import (
    Agreement,
    MergeError,
    MergeReport,
    Panel,
    conservativity,
    example_plan,
    merge_panels,
    restrict_to_panel,
    validate_plan,
)
from ntdceg.model import tree_joint, validate_staging
from ntdceg.positions import build_ntdceg

LEAF_PROB = {("y", "b"): 0.3 * 0.6, ("y", "f"): 0.3 * 0.4, ("n", "b"): 0.7 * 0.8, ("n", "f"): 0.7 * 0.2}


def partition(prefix):
    return {frozenset(st.situations) for st in prefix.stages.values()}


def test_example_plan_merges():
    plan = example_plan()
    report = MergeReport(0)
    composite = merge_panels(plan, report)
    assert validate_staging(composite).ok
    assert len(composite.stages) == report.stages == 24
    assert sorted(map(sorted, report.merged)) == [["p1:u14", "p2:ue"], ["p1:u6", "p2:ug"], ["p1:u9", "p2:uc"]]
    assert report.replaced == ["p1:u9|p2:uc"]
    assert composite.stages["p1:u9|p2:uc"].probs == pytest.approx((0.3, 0.3, 0.4))
    assert len(build_ntdceg(composite).positions) == 50


def test_conservativity():
    plan = example_plan()
    reports = conservativity(plan, merge_panels(plan))
    assert [r.panel for r in reports] == ["p1", "p2"]
    assert all(r.ok and not r.mismatches for r in reports)


def test_restriction_recovers_panels():
    plan = example_plan()
    composite = merge_panels(plan)
    for panel in plan.panels:
        restored = restrict_to_panel(plan, composite, panel.id)
        assert partition(restored) == partition(panel.model)


def test_joint_is_mixture_without_replacement():
    plan = example_plan()
    plan = dataclasses.replace(plan, agreement=tuple(a for a in plan.agreement if a.probs is None))
    joint = tree_joint(merge_panels(plan), 2)
    expected = {}
    for panel in plan.panels:
        own = tree_joint(panel.model, 2)
        for leaf in panel.leaves:
            for path, p in own.items():
                expected[(leaf,) + path] = LEAF_PROB[leaf] * p
    assert joint.keys() == expected.keys()
    assert max(abs(joint[k] - expected[k]) for k in joint) <= 1e-12


def test_single_panel_plan():
    plan = example_plan()
    p1 = plan.panels[0]
    single = dataclasses.replace(plan, panels=(Panel("p1", tuple(LEAF_PROB), p1.model),), agreement=())
    composite = merge_panels(single)
    assert len(composite.stages) == len(p1.model.stages) + 3
    assert all(r.ok for r in conservativity(single, composite))


def test_merge_is_order_independent():
    plan = example_plan()
    base = merge_panels(plan)
    flipped = dataclasses.replace(
        plan,
        panels=plan.panels[::-1],
        agreement=tuple(
            Agreement(a.b, a.a, a.probs) if a.probs is None else a for a in reversed(plan.agreement)
        ),
    )
    other = merge_panels(flipped)
    assert partition(base) == partition(other)
    for st in base.stages.values():
        v = st.situations[0]
        for x in base.tog.labels(v):
            assert base.prob(v, x) == pytest.approx(other.prob(v, x))


def test_arity_mismatch_rejected():
    plan = example_plan()
    bad = dataclasses.replace(plan, agreement=(Agreement(("p2", "uc"), ("p1", "u13")),))
    errors = validate_plan(bad)
    assert any("arity mismatch" in e for e in errors)
    with pytest.raises(MergeError):
        merge_panels(bad)


def test_probability_conflict_needs_replacement():
    plan = example_plan()
    bad = dataclasses.replace(plan, agreement=(Agreement(("p2", "uc"), ("p1", "u9")),))
    with pytest.raises(MergeError, match="probability conflict"):
        merge_panels(bad)


def test_plan_structure_errors():
    plan = example_plan()
    p1, p2 = plan.panels
    overlap = dataclasses.replace(plan, panels=(p1, dataclasses.replace(p2, leaves=p2.leaves + (("y", "b"),))))
    assert any("owned by panels" in e for e in validate_plan(overlap))
    missing = dataclasses.replace(plan, panels=(p1,), agreement=())
    assert any("leaves without a panel" in e for e in validate_plan(missing))
    unknown = dataclasses.replace(plan, agreement=(Agreement(("p2", "zz"), ("p1", "u9")),))
    assert any("unknown stage" in e for e in validate_plan(unknown))
    same = dataclasses.replace(plan, agreement=(Agreement(("p1", "u13"), ("p1", "u14")),))
    assert any("one panel" in e for e in validate_plan(same))
    bad_vec = dataclasses.replace(plan, agreement=(Agreement(("p2", "uc"), ("p1", "u9"), probs=(0.5, 0.6, 0.1)),))
    assert any("not a probability vector" in e for e in validate_plan(bad_vec))
