from __future__ import annotations

import itertools
from collections import defaultdict

import pytest

from ntdceg.dbn import Cpt, DbnSpec, Variable, dbn_joint, dbn_to_sdceg
from ntdceg.fixtures import radicalisation_dbn
from ntdceg.independence import (
    VariableView,
    contemporaneous_independence,
    granger_query,
    is_stratified,
    local_independence,
    stochastic_independence,
)
from ntdceg.model import ModelError
from ntdceg.positions import build_ntdceg
from ntdceg.random_models import random_stratified_model

NRT = VariableView(("N", "R", "T"))
B = ("0", "1")


def two_chains(cross_lag: bool = False, cross_now: bool = False) -> DbnSpec:
    """Chains A and B; B may read A one slice back or in the same slice."""
    a_rows = {("0",): (0.8, 0.2), ("1",): (0.3, 0.7)}
    b_parents = (("B", 1),) + ((("A", 1),) if cross_lag else ()) + ((("A", 0),) if cross_now else ())
    b_rows = {}
    for cfg in itertools.product(B, repeat=len(b_parents)):
        p = 0.2 + 0.15 * sum(int(x) for x in cfg) + 0.1 * int(cfg[0])
        b_rows[cfg] = (round(p, 6), round(1 - p, 6))
    tables = (
        Cpt("A", 0, (), {(): (0.5, 0.5)}),
        Cpt("B", 0, (), {(): (0.4, 0.6)}),
        Cpt("A", "H", (("A", 1),), a_rows),
        Cpt("B", "H", b_parents, b_rows),
    )
    return DbnSpec((Variable("A", B), Variable("B", B)), 2, tables)


def oracle_local(dbn: DbnSpec, X, Y, slices) -> bool:
    """X(t) given the past does not move with the Y part of the past, from the DBN joint."""
    names = [v.name for v in dbn.varying]
    dx = [names.index(x) for x in X]
    dy = {names.index(y) for y in Y}
    joint = dbn_joint(dbn, max(slices) + 1)
    for t in slices:
        laws: dict = defaultdict(lambda: defaultdict(float))
        for path, p in joint.items():
            if len(path) <= t:
                continue
            seg = path[t]
            x = tuple(seg[k] if k < len(seg) else None for k in dx)
            laws[path[:t]][x] += p
        groups: dict = defaultdict(list)
        for past, law in laws.items():
            z = sum(law.values())
            erased = tuple(tuple("*" if k in dy else v for k, v in enumerate(s)) for s in past)
            groups[erased].append({k: q / z for k, q in law.items()})
        for members in groups.values():
            for law in members[1:]:
                if any(abs(law.get(k, 0) - members[0].get(k, 0)) > 1e-9 for k in set(law) | set(members[0])):
                    return False
    return True


def test_granger_on_fixture(rad):
    assert granger_query(rad, NRT, ["R"], ["N"]).noncausal
    answer = granger_query(rad, NRT, ["N"], ["R"])
    assert not answer.noncausal and answer.label == "prima_facie"
    assert answer.verdict.witness is not None
    assert answer.as_dict()["answer"] == "prima_facie"


def test_fixture_and_its_dbn_agree(rad):
    converted = build_ntdceg(dbn_to_sdceg(radicalisation_dbn()))
    for x, y in itertools.permutations("NRT", 2):
        assert granger_query(rad, NRT, [x], [y]).noncausal == granger_query(converted, NRT, [x], [y]).noncausal


@pytest.mark.parametrize("cross_lag, cross_now", [(False, False), (True, False), (False, True)])
def test_two_chains(cross_lag, cross_now):
    dbn = two_chains(cross_lag, cross_now)
    model = build_ntdceg(dbn_to_sdceg(dbn))
    view = VariableView(("A", "B"))
    assert granger_query(model, view, ["B"], ["A"]).noncausal
    assert granger_query(model, view, ["A"], ["B"]).noncausal == (not cross_lag and not cross_now)
    assert contemporaneous_independence(model, view, ["A"], ["B"]).holds == (not cross_now)
    assert stochastic_independence(model, view, ["A"], ["B"]).holds == (not cross_lag and not cross_now)


@pytest.mark.parametrize("seed", [1, 3, 5, 7, 9, 11, 13, 15])
def test_local_independence_matches_joint_oracle(seed):
    case = random_stratified_model(seed)
    dbn_seed = case.seed
    from ntdceg.random_models import random_dbn

    dbn = random_dbn(dbn_seed, max_vars=3, p_parent=0.35, p_invariant=0.0)
    model = build_ntdceg(case.prefix)
    for x, y in itertools.permutations(case.view.levels, 2):
        verdict = local_independence(model, case.view, [x], [y], 0, 3)
        assert verdict.holds == oracle_local(dbn, [x], [y], range(0, 4)), (seed, x, y)


@pytest.mark.parametrize("seed", range(0, 30, 3))
def test_graph_and_tree_laws_agree(seed):
    case = random_stratified_model(seed)
    model = build_ntdceg(case.prefix)
    for x, y in itertools.permutations(case.view.levels, 2):
        for query in (local_independence, contemporaneous_independence, stochastic_independence):
            assert query(model, case.view, [x], [y]).holds == query(model, case.view, [x], [y], use_tree=True).holds


@pytest.mark.parametrize("seed", range(20))
def test_stochastic_is_local_both_ways_and_contemporaneous(seed):
    case = random_stratified_model(seed)
    model = build_ntdceg(case.prefix)
    for x, y in itertools.permutations(case.view.levels, 2):
        st = stochastic_independence(model, case.view, [x], [y]).holds
        both = (
            local_independence(model, case.view, [x], [y]).holds
            and local_independence(model, case.view, [y], [x]).holds
            and contemporaneous_independence(model, case.view, [x], [y]).holds
        )
        assert st == both


def test_query_errors(rad, rad_prefix):
    with pytest.raises(ModelError):
        local_independence(rad, NRT, ["N"], ["N"])
    with pytest.raises(ModelError):
        local_independence(rad, VariableView(("N", "R", "T")), ["Q"], ["N"])
    with pytest.raises(ModelError):
        local_independence(rad, VariableView(("N",)), ["N"], ["R"])
    with pytest.raises(ModelError):
        local_independence(rad, NRT, ["N"], ["R"], T=3, H=2)
    with pytest.raises(ModelError):
        granger_query(rad, NRT, [], ["R"])
    assert is_stratified(rad_prefix)


def test_verdict_reports_slices(rad):
    v = local_independence(rad, NRT, ["N"], ["R"], T=1, H=3)
    assert v.checked_slices == (1, 2, 3)
    assert v.as_dict()["kind"] == "local"
