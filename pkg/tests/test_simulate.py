from __future__ import annotations

import numpy as np
import pytest

from ntdceg.dbn import Cpt, DbnSpec, Variable, dbn_joint, dbn_to_sdceg
from ntdceg.fixtures import radicalisation_dbn
from ntdceg.model import EventTree, ModelError, SizeGuardError, TogSpec, staging_from_function, tree_joint
from ntdceg.positions import build_ntdceg
from ntdceg.random_models import random_staged_model
from ntdceg.simulate import binomial_band, exact_joint, sample


def test_same_seed_same_trajectories(rad):
    a = sample(rad, 5000, 3, 11)
    b = sample(rad, 5000, 3, 11)
    assert np.array_equal(a.steps, b.steps)
    assert not np.array_equal(a.steps, sample(rad, 5000, 3, 12).steps)


def test_workers_do_not_change_output(rad):
    a = sample(rad, 250_000, 2, 5, workers=1)
    b = sample(rad, 250_000, 2, 5, workers=4)
    assert np.array_equal(a.steps, b.steps)


def test_probability_one_chain_gives_one_trajectory():
    tree = EventTree.from_nested({"a": {"x": "recurrent", "y": "terminal"}, "b": "terminal"})
    prefix = staging_from_function(
        TogSpec(tree), 1, lambda v: "top" if v[-1] == () else "low", {"top": (1.0, 0.0), "low": (1.0, 0.0)}
    )
    ts = sample(build_ntdceg(prefix), 200, 4, 3)
    assert ts.frequencies() == {(("a", "x"),) * 4: 200}
    assert all(t.terminated_at is None for t in ts)


def test_trajectory_records(rad):
    ts = sample(rad, 2000, 3, 1)
    for tr in list(ts)[:200]:
        assert tr.positions[0] == rad.root
        for seg in tr.events[:-1]:
            assert seg[-1] == "n"
        if tr.terminated_at is not None:
            assert tr.positions[-1] in rad.sinks
            assert tr.events[-1][-1] == "t"
            assert tr.terminated_at == len(tr.events) - 1
        else:
            assert len(tr.events) == 3


def test_exact_joint_matches_tree_and_dbn(rad, rad_prefix):
    ex = exact_joint(rad, 2)
    assert len(ex) == 171
    assert sum(ex.values()) == pytest.approx(1.0, abs=1e-12)
    tree = tree_joint(rad_prefix, 2)
    assert ex.keys() == tree.keys()
    assert max(abs(ex[k] - tree[k]) for k in ex) <= 1e-12
    dbn = radicalisation_dbn()
    converted = exact_joint(build_ntdceg(dbn_to_sdceg(dbn)), 3)
    direct = dbn_joint(dbn, 3)
    assert converted.keys() == direct.keys()
    assert max(abs(converted[k] - direct[k]) for k in direct) <= 1e-12


def test_one_slice_joint_is_slice_monomials(rad):
    ex = exact_joint(rad, 1)
    assert len(ex) == 18
    assert all(len(k) == 1 for k in ex)
    assert sum(ex.values()) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_random_model_joint(seed):
    prefix = random_staged_model(seed)
    ex = exact_joint(build_ntdceg(prefix), 3)
    tree = tree_joint(prefix, 3)
    assert ex.keys() == tree.keys()
    assert max(abs(ex[k] - tree[k]) for k in ex) <= 1e-12


def test_frequencies_within_bands(rad):
    n = 200_000
    ex = exact_joint(rad, 2)
    freq = sample(rad, n, 2, 20261016).frequencies()
    assert set(freq) <= set(ex)
    # Bonferroni over the cells keeps a fixed-seed run from failing by chance
    bad = [k for k, p in ex.items() if abs(freq.get(k, 0) / n - p) > binomial_band(p, n, 4.5)]
    assert bad == []


def test_cut_law_from_visits(rad):
    from ntdceg.cuts import cut_variables

    targets = rad.stages["u13"] + rad.stages["u14"]
    ts = sample(rad, 200_000, 3, 8)
    for t in (1, 2):
        exact = cut_variables(rad, ["u13", "u14"], t).q_pmf
        v = ts.visits(targets, t)
        hit = v[v >= 0]
        share = np.isin(hit, [targets.index(w) for w in rad.stages["u13"]]).mean()
        assert abs(share - exact[0]) <= binomial_band(exact[0], len(hit), 3.0)


def test_errors(rad):
    with pytest.raises(ModelError):
        sample(rad, 10, 0, 1)
    with pytest.raises(ModelError):
        exact_joint(rad, 0)
    with pytest.raises(SizeGuardError):
        exact_joint(rad, 6, limit=1000)
    assert len(sample(rad, 0, 2, 1)) == 0


def test_binomial_band():
    assert binomial_band(0.5, 100) == pytest.approx(0.15)
    assert binomial_band(0.0, 100) == 0.0
    assert binomial_band(0.3, 0) == float("inf")
