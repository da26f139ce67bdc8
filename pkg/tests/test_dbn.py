from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntdceg.dbn import (
    Cpt,
    DbnSpec,
    Variable,
    ci_statements_preserved,
    context_ci_holds,
    dbn_joint,
    dbn_to_sdceg,
    instance_rows,
    max_joint_gap,
    validate_dbn,
)
from ntdceg.fixtures import radicalisation_dbn
from ntdceg.model import ModelError, SizeGuardError, tree_joint, validate_staging
from ntdceg.positions import build_ntdceg
from ntdceg.random_models import random_dbn


def coin_chain(p_same: float = 0.7) -> DbnSpec:
    x = Variable("X", ("0", "1"))
    tables = (
        Cpt("X", 0, (), {(): (0.5, 0.5)}),
        Cpt("X", "H", (("X", 1),), {("0",): (p_same, 1 - p_same), ("1",): (1 - p_same, p_same)}),
    )
    return DbnSpec((x,), 2, tables)


def test_radicalisation_conversion():
    dbn = radicalisation_dbn()
    assert validate_dbn(dbn).ok
    prefix = dbn_to_sdceg(dbn)
    assert validate_staging(prefix).ok
    assert len(prefix.stages) == 22
    assert max_joint_gap(dbn_joint(dbn, 3), tree_joint(prefix, 3)) <= 1e-12
    assert ci_statements_preserved(dbn, prefix, 3).ok


def test_terminal_state_stops_trajectory():
    joint = dbn_joint(radicalisation_dbn(), 2)
    assert all(seg[-1] == "n" for k in joint for seg in k[:-1])
    assert any(k[0][-1] == "t" and len(k) == 1 for k in joint)
    assert sum(joint.values()) == pytest.approx(1.0, abs=1e-12)


def test_markov_chain_stages():
    prefix = dbn_to_sdceg(coin_chain())
    # slice 0 root plus one stage per value of the previous state
    assert len(prefix.stages) == 3
    model = build_ntdceg(prefix)
    assert model.check_invariants() == []


def test_identical_tables_share_stages():
    x = Variable("X", ("0", "1"))
    row = {(): (0.3, 0.7)}
    dbn = DbnSpec((x,), 2, (Cpt("X", 0, (), row), Cpt("X", "H", (), row)))
    assert len(dbn_to_sdceg(dbn).stages) == 1
    assert len(dbn_to_sdceg(dbn, merge_across_slices=False).stages) == 2


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: dataclasses.replace(d, tables=d.tables[:-1]), "missing table"),
        (lambda d: dataclasses.replace(d, horizon=0), "order N"),
        (
            lambda d: dataclasses.replace(d, tables=d.tables[:1] + (Cpt("X", "H", (("X", 2),), d.tables[1].rows),)),
            "Markov",
        ),
        (
            lambda d: dataclasses.replace(d, tables=(Cpt("X", 0, (), {(): (0.5, 0.6)}),) + d.tables[1:]),
            "probability vector",
        ),
        (
            lambda d: dataclasses.replace(d, tables=d.tables[:1] + (Cpt("X", "H", (("X", 1),), {("0",): (1.0, 0.0)}),)),
            "missing row",
        ),
    ],
)
def test_validation_errors(mutate, message):
    report = validate_dbn(mutate(coin_chain()))
    assert not report.ok
    assert any(message in e for e in report.errors)
    with pytest.raises(ModelError):
        dbn_to_sdceg(mutate(coin_chain()))


def test_invariant_after_varying_rejected():
    x = Variable("X", ("0", "1"))
    c = Variable("C", ("a", "b"), time_invariant=True)
    report = validate_dbn(DbnSpec((x, c), 2, ()))
    assert not report.ok and any("time-invariant" in e for e in report.errors)


def test_joint_size_guard():
    with pytest.raises(SizeGuardError):
        dbn_joint(coin_chain(), 12, limit=100)


def test_context_ci():
    rows = instance_rows(coin_chain(), dbn_joint(coin_chain(), 3), dbn_to_sdceg(coin_chain()).tog)
    assert context_ci_holds(rows, [("X", 2)], [("X", 0)], [("X", 1)])[0]
    holds, witness = context_ci_holds(rows, [("X", 2)], [("X", 1)])
    assert not holds and witness is not None
    # a fair chain forgets nothing marginally at slice 1 given slice 0 only when p_same = .5
    fair = coin_chain(0.5)
    rows = instance_rows(fair, dbn_joint(fair, 2), dbn_to_sdceg(fair).tog)
    assert context_ci_holds(rows, [("X", 1)], [("X", 0)])[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_random_dbn_conversion(seed):
    dbn = random_dbn(seed)
    assert validate_dbn(dbn).ok
    prefix = dbn_to_sdceg(dbn)
    assert validate_staging(prefix).ok
    assert max_joint_gap(dbn_joint(dbn, 3), tree_joint(prefix, 3)) <= 1e-9
    assert ci_statements_preserved(dbn, prefix, 3).ok
    assert build_ntdceg(prefix).check_invariants() == []
