from __future__ import annotations

import json
from pathlib import Path

import pytest

from ntdceg.composite import example_plan, merge_panels
from ntdceg.dbn import dbn_to_sdceg
from ntdceg.fixtures import radicalisation_dbn, radicalisation_model
from ntdceg.io import (
    FileFormatError,
    dbn_from_dict,
    dbn_to_dict,
    file_format,
    load_dbn,
    load_model,
    load_plan,
    loads,
    model_from_dict,
    model_levels,
    model_to_dict,
    plan_from_dict,
    plan_to_dict,
    read_json,
    save_model,
)
from ntdceg.model import tree_joint
from ntdceg.random_models import random_dbn, random_staged_model

MODELS = Path(__file__).resolve().parents[1] / "models"


def same_prefix(a, b) -> bool:
    if a.horizon != b.horizon or a.tog.t_slice.to_nested() != b.tog.t_slice.to_nested():
        return False
    ja, jb = tree_joint(a, 2), tree_joint(b, 2)
    return ja.keys() == jb.keys() and all(abs(ja[k] - jb[k]) <= 1e-15 for k in ja)


def test_model_round_trip(tmp_path):
    prefix = radicalisation_model()
    path = tmp_path / "m.json"
    save_model(prefix, path, levels=("N", "R", "T"))
    data = read_json(path)
    assert file_format(data) == "ntdceg-model"
    assert model_levels(data) == ("N", "R", "T")
    back = load_model(path)
    assert set(back.stages) == set(prefix.stages)
    assert same_prefix(prefix, back)


@pytest.mark.parametrize("seed", range(6))
def test_random_model_round_trip(seed):
    prefix = random_staged_model(seed, with_t_minus1=True)
    back = model_from_dict(json.loads(json.dumps(model_to_dict(prefix))))
    assert {s: (st.situations, st.probs, st.label_order, dict(st.label_maps)) for s, st in back.stages.items()} == {
        s: (st.situations, st.probs, st.label_order, dict(st.label_maps)) for s, st in prefix.stages.items()
    }


@pytest.mark.parametrize("seed", range(6))
def test_dbn_round_trip(seed):
    dbn = random_dbn(seed)
    back = dbn_from_dict(json.loads(json.dumps(dbn_to_dict(dbn))))
    assert back.variables == dbn.variables and back.horizon == dbn.horizon
    assert [(c.variable, c.slice, c.parents, dict(c.rows)) for c in back.tables] == [
        (c.variable, c.slice, c.parents, dict(c.rows)) for c in dbn.tables
    ]


def test_plan_round_trip():
    plan = example_plan()
    back = plan_from_dict(json.loads(json.dumps(plan_to_dict(plan))))
    assert len(merge_panels(back).stages) == 24


def test_shipped_files():
    assert same_prefix(load_model(MODELS / "radicalisation.json"), radicalisation_model())
    dbn = load_dbn(MODELS / "radicalisation_dbn.json")
    assert len(dbn_to_sdceg(dbn).stages) == len(dbn_to_sdceg(radicalisation_dbn()).stages)
    assert len(merge_panels(load_plan(MODELS / "composite_plan.json")).stages) == 24


def test_read_errors(tmp_path):
    with pytest.raises(FileFormatError) as e:
        read_json(tmp_path / "missing.json")
    assert e.value.code == "E_READ"
    with pytest.raises(FileFormatError) as e:
        loads("{not json")
    assert e.value.code == "E_READ"
    with pytest.raises(FileFormatError) as e:
        loads('{"a": 1, "a": 2}')
    assert e.value.code == "E_SCHEMA"


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("horizon"),
        lambda d: d.update(horizon="two"),
        lambda d: d.update(format="something-else"),
        lambda d: d["stages"]["u0"].update(probs=[-0.5, 1.5, 0.0]),
        lambda d: d["stages"]["u0"].update(label_order=["s.x", "f", "i"]),
        lambda d: d.update(extra=1),
    ],
)
def test_schema_errors(mutate):
    data = model_to_dict(radicalisation_model())
    mutate(data)
    with pytest.raises(FileFormatError) as e:
        model_from_dict(data)
    assert e.value.code == "E_SCHEMA"


def test_plan_model_file_is_relative(tmp_path):
    plan = plan_to_dict(example_plan())
    save_model(radicalisation_model(), tmp_path / "p1.json")
    plan["panels"][0].pop("model")
    plan["panels"][0]["model_file"] = "p1.json"
    assert len(merge_panels(plan_from_dict(plan, tmp_path)).stages) == 24
