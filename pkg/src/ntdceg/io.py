"""JSON model files: staged models, DBNs and merge plans.

Every file is a JSON object with a ``"format"`` key naming its kind.  Trees
are nested ``{label: subtree}`` objects whose leaves are ``"recurrent"``,
``"terminal"`` or ``null``.  Situations are written as vertex ids: slice
segments joined by ``/``, labels within a segment joined by ``.``, so labels
may not contain either character.  The JSON schemas below are the reference;
README.md describes them informally.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Sequence

import jsonschema

from .composite import Agreement, MergePlan, Panel
from .dbn import Cpt, DbnSpec, Variable
from .model import (
    DEFAULT_TOL,
    EventTree,
    ModelError,
    Stage,
    StagedTreePrefix,
    TogSpec,
    parse_vertex,
    vertex_id,
)

MODEL_FORMAT = "ntdceg-model"
DBN_FORMAT = "ntdceg-dbn"
PLAN_FORMAT = "ntdceg-merge-plan"


class FileFormatError(ModelError):
    """A model file could not be read; ``code`` is ``E_READ`` or ``E_SCHEMA``."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


_LABEL = {"type": "string", "pattern": r"^[^./]+$"}
_PROBS = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}

_TREE = {
    "type": "object",
    "minProperties": 1,
    "propertyNames": _LABEL,
    "additionalProperties": {
        "anyOf": [
            {"$ref": "#/$defs/tree"},
            {"enum": ["recurrent", "terminal", None]},
        ]
    },
}

_STAGE = {
    "type": "object",
    "required": ["situations", "probs", "label_order"],
    "additionalProperties": False,
    "properties": {
        "situations": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "probs": _PROBS,
        "label_order": {"type": "array", "items": _LABEL, "minItems": 1},
        "label_maps": {
            "type": "object",
            "additionalProperties": {"type": "object", "additionalProperties": _LABEL},
        },
    },
}

MODEL_SCHEMA = {
    "$defs": {"tree": _TREE},
    "type": "object",
    "required": ["format", "horizon", "slice_tree", "stages"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": MODEL_FORMAT},
        "horizon": {"type": "integer", "minimum": 1},
        "slice_tree": {"$ref": "#/$defs/tree"},
        "t_minus1": {"anyOf": [{"$ref": "#/$defs/tree"}, {"type": "null"}]},
        "stages": {"type": "object", "minProperties": 1, "additionalProperties": _STAGE},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "levels": {"type": "array", "items": {"type": "string", "minLength": 1}, "uniqueItems": True},
    },
}

DBN_SCHEMA = {
    "type": "object",
    "required": ["format", "horizon", "variables", "tables"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": DBN_FORMAT},
        "horizon": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "variables": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "states"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "states": {"type": "array", "items": _LABEL, "minItems": 1},
                    "terminal": {"type": "array", "items": _LABEL},
                    "time_invariant": {"type": "boolean"},
                },
            },
        },
        "tables": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["variable", "slice", "rows"],
                "additionalProperties": False,
                "properties": {
                    "variable": {"type": "string"},
                    "slice": {"anyOf": [{"type": "integer", "minimum": 0}, {"enum": ["H", "I"]}]},
                    "parents": {
                        "type": "array",
                        "items": {
                            "type": "array",
                            "prefixItems": [{"type": "string"}, {"type": "integer", "minimum": 0}],
                            "items": False,
                            "minItems": 2,
                        },
                    },
                    "rows": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["parents", "probs"],
                            "additionalProperties": False,
                            "properties": {
                                "parents": {"type": "array", "items": {"type": "string"}},
                                "probs": _PROBS,
                            },
                        },
                    },
                },
            },
        },
    },
}

PLAN_SCHEMA = {
    "$defs": {"tree": _TREE},
    "type": "object",
    "required": ["format", "t_minus1", "t_minus1_stages", "panels"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": PLAN_FORMAT},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "t_minus1": {"$ref": "#/$defs/tree"},
        "t_minus1_stages": {"type": "object", "additionalProperties": _STAGE},
        "panels": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "leaves"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "pattern": r"^[^:|]+$"},
                    "leaves": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "model": {"type": "object"},
                    "model_file": {"type": "string"},
                },
                "oneOf": [{"required": ["model"]}, {"required": ["model_file"]}],
            },
        },
        "agreement": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b"],
                "additionalProperties": False,
                "properties": {
                    "a": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                    "b": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                    "probs": _PROBS,
                    "label_map": {"type": "object", "additionalProperties": _LABEL},
                },
            },
        },
    },
}

_VALIDATORS: dict[int, jsonschema.Draft202012Validator] = {}


def _validator(schema: dict) -> jsonschema.Draft202012Validator:
    v = _VALIDATORS.get(id(schema))
    if v is None:
        v = _VALIDATORS[id(schema)] = jsonschema.Draft202012Validator(schema)
    return v


def check_schema(data: Any, schema: dict, what: str) -> None:
    e = jsonschema.exceptions.best_match(_validator(schema).iter_errors(data))
    if e is not None:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise FileFormatError("E_SCHEMA", f"{what}: at {where}: {e.message}")


# ---------------------------------------------------------------------------
# reading


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise FileFormatError("E_SCHEMA", f"duplicate key {k!r}")
        out[k] = v
    return out


def loads(text: str) -> Any:
    try:
        return json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as e:
        raise FileFormatError("E_READ", f"invalid JSON: {e}") from None


def read_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise FileFormatError("E_READ", f"cannot read {path}: {e.strerror}") from None
    return loads(text)


def dumps(data: Any) -> str:
    return json.dumps(data, indent=2) + "\n"


def file_format(data: Any) -> str | None:
    return data.get("format") if isinstance(data, dict) else None


# ---------------------------------------------------------------------------
# staged models


def _stage_to_dict(st: Stage) -> dict:
    out = {
        "situations": [vertex_id(v) for v in st.situations],
        "probs": list(st.probs),
        "label_order": list(st.label_order),
    }
    if st.label_maps:
        out["label_maps"] = {vertex_id(v): dict(m) for v, m in st.label_maps.items()}
    return out


def _stage_from_dict(d: dict) -> Stage:
    maps = {parse_vertex(k): dict(m) for k, m in d.get("label_maps", {}).items()}
    return Stage(
        tuple(parse_vertex(s) for s in d["situations"]),
        tuple(float(p) for p in d["probs"]),
        tuple(d["label_order"]),
        maps,
    )


def model_to_dict(prefix: StagedTreePrefix, levels: Sequence[str] | None = None) -> dict:
    """``levels`` optionally names the process variable at each slice-tree depth."""
    tog = prefix.tog
    out = {
        "format": MODEL_FORMAT,
        "horizon": prefix.horizon,
        "slice_tree": tog.t_slice.to_nested(),
        "t_minus1": tog.t_minus1.to_nested() if tog.t_minus1 is not None else None,
        "stages": {sid: _stage_to_dict(st) for sid, st in prefix.stages.items()},
    }
    if prefix.tol != DEFAULT_TOL:
        out["tol"] = prefix.tol
    if levels is not None:
        out["levels"] = list(levels)
    return out


def model_levels(data: Any) -> tuple[str, ...] | None:
    levels = data.get("levels") if isinstance(data, dict) else None
    return tuple(levels) if levels is not None else None


def model_from_dict(data: Any) -> StagedTreePrefix:
    check_schema(data, MODEL_SCHEMA, "model file")
    t_minus1 = data.get("t_minus1")
    tog = TogSpec(
        EventTree.from_nested(data["slice_tree"]),
        EventTree.from_nested(t_minus1) if t_minus1 is not None else None,
    )
    stages = {sid: _stage_from_dict(d) for sid, d in data["stages"].items()}
    return StagedTreePrefix(tog, data["horizon"], stages, data.get("tol", DEFAULT_TOL))


def load_model(path: str | Path) -> StagedTreePrefix:
    return model_from_dict(read_json(path))


def save_model(prefix: StagedTreePrefix, path: str | Path, levels: Sequence[str] | None = None) -> None:
    Path(path).write_text(dumps(model_to_dict(prefix, levels)), encoding="utf-8")


# ---------------------------------------------------------------------------
# DBNs


def dbn_to_dict(dbn: DbnSpec) -> dict:
    variables = []
    for v in dbn.variables:
        d: dict = {"name": v.name, "states": list(v.states)}
        if v.terminal:
            d["terminal"] = list(v.terminal)
        if v.time_invariant:
            d["time_invariant"] = True
        variables.append(d)
    tables = [
        {
            "variable": c.variable,
            "slice": c.slice,
            "parents": [[n, lag] for n, lag in c.parents],
            "rows": [{"parents": list(k), "probs": list(p)} for k, p in c.rows.items()],
        }
        for c in dbn.tables
    ]
    out = {"format": DBN_FORMAT, "horizon": dbn.horizon, "variables": variables, "tables": tables}
    if dbn.tol != DEFAULT_TOL:
        out["tol"] = dbn.tol
    return out


def dbn_from_dict(data: Any) -> DbnSpec:
    check_schema(data, DBN_SCHEMA, "DBN file")
    variables = tuple(
        Variable(d["name"], tuple(d["states"]), tuple(d.get("terminal", ())), d.get("time_invariant", False))
        for d in data["variables"]
    )
    tables = []
    for t in data["tables"]:
        rows = {}
        for r in t["rows"]:
            key = tuple(r["parents"])
            if key in rows:
                raise FileFormatError("E_SCHEMA", f"table {t['variable']}@{t['slice']}: duplicate row {list(key)}")
            rows[key] = tuple(float(p) for p in r["probs"])
        tables.append(Cpt(t["variable"], t["slice"], tuple((n, lag) for n, lag in t.get("parents", [])), rows))
    return DbnSpec(variables, data["horizon"], tuple(tables), data.get("tol", DEFAULT_TOL))


def load_dbn(path: str | Path) -> DbnSpec:
    return dbn_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# merge plans


def plan_to_dict(plan: MergePlan) -> dict:
    out = {
        "format": PLAN_FORMAT,
        "t_minus1": plan.t_minus1.to_nested(),
        "t_minus1_stages": {sid: _stage_to_dict(st) for sid, st in plan.t_minus1_stages.items()},
        "panels": [
            {"id": p.id, "leaves": [".".join(x) for x in p.leaves], "model": model_to_dict(p.model)}
            for p in plan.panels
        ],
        "agreement": [],
    }
    for ag in plan.agreement:
        d: dict = {"a": list(ag.a), "b": list(ag.b)}
        if ag.probs is not None:
            d["probs"] = list(ag.probs)
        if ag.label_map is not None:
            d["label_map"] = dict(ag.label_map)
        out["agreement"].append(d)
    if plan.tol != DEFAULT_TOL:
        out["tol"] = plan.tol
    return out


def plan_from_dict(data: Any, base_dir: str | Path | None = None) -> MergePlan:
    """Parse a merge plan; ``model_file`` entries resolve against ``base_dir``."""
    check_schema(data, PLAN_SCHEMA, "merge plan")
    panels = []
    for p in data["panels"]:
        if "model" in p:
            model = model_from_dict(p["model"])
        else:
            path = Path(p["model_file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            model = load_model(path)
        leaves = tuple(tuple(x.split(".")) for x in p["leaves"])
        panels.append(Panel(p["id"], leaves, model))
    agreement = tuple(
        Agreement(
            tuple(a["a"]),
            tuple(a["b"]),
            tuple(float(x) for x in a["probs"]) if "probs" in a else None,
            dict(a["label_map"]) if "label_map" in a else None,
        )
        for a in data.get("agreement", [])
    )
    return MergePlan(
        EventTree.from_nested(data["t_minus1"]),
        {sid: _stage_from_dict(d) for sid, d in data["t_minus1_stages"].items()},
        tuple(panels),
        agreement,
        data.get("tol", DEFAULT_TOL),
    )


def load_plan(path: str | Path) -> MergePlan:
    return plan_from_dict(read_json(path), Path(path).parent)
