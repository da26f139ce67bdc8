"""Command-line driver.

Reports are JSON on standard output.  Failures print a JSON diagnostic
``{"code": ..., "message": ...}`` on standard error and exit with status 1;
usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .composite import MergeError, MergeReport, conservativity, merge_panels, validate_plan
from .cuts import check_cut_independence, check_fine_cut_independence, cut_variables, fine_cut_variables
from .dbn import dbn_to_sdceg, validate_dbn
from .dot import ceg_to_dot, ntdceg_to_dot
from .independence import (
    VariableView,
    contemporaneous_independence,
    granger_query,
    local_independence,
    stochastic_independence,
)
from .model import HomogeneityError, ModelError, SizeGuardError, StagedTreePrefix, validate_staging, vertex_id
from .positions import NTDCEG, build_ntdceg, unroll_to_ceg
from .simulate import sample


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k) if not isinstance(k, str) else k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x, key=str) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in items]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def _emit(report, out=None) -> None:
    text = json.dumps(_jsonable(report), indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv(s: str) -> list[str]:
    return [x for x in (p.strip() for p in s.split(",")) if x]


# ---------------------------------------------------------------------------
# loading


def _load_model(path: str, tol: float | None) -> tuple[StagedTreePrefix, tuple[str, ...] | None]:
    data = io.read_json(path)
    prefix = io.model_from_dict(data)
    if tol is not None:
        prefix = dataclasses.replace(prefix, tol=tol)
    return prefix, io.model_levels(data)


def _require_valid(prefix: StagedTreePrefix) -> None:
    rep = validate_staging(prefix)
    if not rep.ok:
        code = "E_HOMOGENEITY" if all(e.startswith("homogeneity") for e in rep.errors) else "E_VALIDATION"
        raise CliError(code, "; ".join(rep.errors))


def _build(path: str, tol: float | None) -> tuple[NTDCEG, tuple[str, ...] | None]:
    prefix, levels = _load_model(path, tol)
    _require_valid(prefix)
    return build_ntdceg(prefix, check=False), levels


def _summary(model: NTDCEG) -> dict:
    return {
        "horizon": model.horizon,
        "positions": len(model.positions),
        "stages": len(model.stages),
        "edges": len(model.edges),
        "temporal_edges": len(model.temporal_edges),
        "cyclic_edges": len(model.cyclic_edges),
        "sinks": list(model.sinks),
        "D_I": model.subgraph("D_I"),
        "D_H": model.subgraph("D_H"),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    data = io.read_json(args.file)
    kind = io.file_format(data)
    if kind == io.MODEL_FORMAT:
        prefix = io.model_from_dict(data)
        if args.tol is not None:
            prefix = dataclasses.replace(prefix, tol=args.tol)
        rep = validate_staging(prefix)
        ok, errors, stats = rep.ok, rep.errors, rep.stats
    elif kind == io.DBN_FORMAT:
        rep = validate_dbn(io.dbn_from_dict(data))
        ok, errors, stats = rep.ok, rep.errors, {}
    elif kind == io.PLAN_FORMAT:
        errors = validate_plan(io.plan_from_dict(data, Path(args.file).parent))
        ok, stats = not errors, {}
    else:
        raise CliError("E_SCHEMA", f"unknown file format {kind!r}")
    _emit({"file": args.file, "format": kind, "ok": ok, "errors": errors, "stats": stats})
    if not ok:
        code = "E_HOMOGENEITY" if errors and all(e.startswith("homogeneity") for e in errors) else "E_VALIDATION"
        raise CliError(code, f"{len(errors)} validation error(s)")
    return 0


def cmd_build(args) -> int:
    model, _ = _build(args.model, args.tol)
    problems = model.check_invariants()
    report = _summary(model)
    report["invariant_violations"] = problems
    if args.detail:
        report["position_table"] = [
            {
                "name": n,
                "stage": p.stage,
                "region": p.region,
                "slice": p.slice_class,
                "situations": [vertex_id(v) for v in p.situations],
            }
            for n, p in model.positions.items()
        ]
        report["edge_table"] = [dataclasses.asdict(e) for e in model.edges]
    if args.export_dot:
        Path(args.export_dot).write_text(ntdceg_to_dot(model), encoding="utf-8")
        report["dot"] = args.export_dot
    _emit(report)
    if problems:
        raise CliError("E_VALIDATION", "; ".join(problems))
    return 0


def cmd_convert(args) -> int:
    dbn = io.load_dbn(args.dbn)
    rep = validate_dbn(dbn)
    if not rep.ok:
        raise CliError("E_VALIDATION", "; ".join(rep.errors))
    prefix = dbn_to_sdceg(dbn, merge_across_slices=not args.no_merge)
    levels = [v.name for v in dbn.varying]
    text = io.dumps(io.model_to_dict(prefix, levels))
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        _emit({"output": args.output, "stages": len(prefix.stages), "levels": levels})
    else:
        sys.stdout.write(text)
    return 0


def cmd_unroll(args) -> int:
    model, _ = _build(args.model, args.tol)
    ceg = unroll_to_ceg(model, args.t)
    report = {
        "t": ceg.t,
        "nodes": len(ceg.nodes),
        "edges": len(ceg.edges),
        "slices": {
            str(s): [[f"{p}@{t}" for p, t in block] for block in ceg.slice_partition(s)]
            for s in sorted({n.slice for n in ceg.nodes.values()})
        },
    }
    if args.export_dot:
        Path(args.export_dot).write_text(ceg_to_dot(ceg, model), encoding="utf-8")
        report["dot"] = args.export_dot
    _emit(report)
    return 0


def _independence_dict(rep) -> dict:
    return {
        "holds": rep.holds,
        "residual": rep.residual,
        "recovery_residual": rep.recovery_residual,
        "z_states": rep.z_states,
        "converse": rep.converse,
    }


def cmd_cut(args) -> int:
    model, _ = _build(args.model, args.tol)
    stages = _csv(args.stages)
    unknown = [s for s in stages if s not in model.stages]
    if unknown:
        raise CliError("E_VALIDATION", f"unknown stages {unknown}")
    triple = cut_variables(model, stages, args.t)
    report = triple.report()
    report["independence"] = _independence_dict(check_cut_independence(model, stages, args.t))
    _emit(report)
    return 0


def cmd_finecut(args) -> int:
    model, _ = _build(args.model, args.tol)
    positions = _csv(args.positions)
    unknown = [p for p in positions if p not in model.positions]
    if unknown:
        raise CliError("E_VALIDATION", f"unknown positions {unknown}")
    triple = fine_cut_variables(model, positions, args.t, args.s)
    report = triple.report()
    report["independence"] = _independence_dict(check_fine_cut_independence(model, positions, args.t, args.s))
    _emit(report)
    return 0


def cmd_indep(args) -> int:
    model, levels = _build(args.model, args.tol)
    if args.levels:
        levels = tuple(_csv(args.levels))
    if not levels:
        raise CliError("E_VALIDATION", "the model file names no levels; pass --levels")
    view = VariableView(levels)
    x, y = _csv(args.x), _csv(args.y)
    tol = args.tol if args.tol is not None else model.prefix.tol
    if args.kind == "granger":
        # --x is the candidate cause, --y the effect
        ans = granger_query(model, view, x, y, args.from_slice, args.horizon, tol)
        _emit(ans.as_dict())
        return 0
    fn = {
        "local": local_independence,
        "contemp": contemporaneous_independence,
        "stoch": stochastic_independence,
    }[args.kind]
    verdict = fn(model, view, x, y, args.from_slice, args.horizon, tol, use_tree=args.use_tree)
    _emit(verdict.as_dict())
    return 0


def cmd_merge(args) -> int:
    plan = io.load_plan(args.plan)
    if args.tol is not None:
        plan = dataclasses.replace(plan, tol=args.tol)
    report = MergeReport(0)
    composite = merge_panels(plan, report)
    checks = conservativity(plan, composite)
    if args.output:
        io.save_model(composite, args.output)
    model = build_ntdceg(composite)
    _emit(
        {
            "output": args.output,
            "stages": report.stages,
            "positions": len(model.positions),
            "merged": report.merged,
            "replaced": report.replaced,
            "conservativity": [dataclasses.asdict(c) for c in checks],
        }
    )
    if not all(c.ok for c in checks):
        raise CliError("E_MERGE", "conservativity check failed")
    return 0


def cmd_sample(args) -> int:
    model, _ = _build(args.model, args.tol)
    ts = sample(model, args.n, args.slices, args.seed, workers=args.workers)
    sink = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for tr in ts:
            sink.write(
                json.dumps(
                    {
                        "seed": tr.seed,
                        "events": [list(seg) for seg in tr.events],
                        "positions": list(tr.positions),
                        "terminated_at": tr.terminated_at,
                    }
                )
                + "\n"
            )
    finally:
        if args.output:
            sink.close()
    if args.output:
        term = ts.terminated_at[ts.terminated_at > -2]
        _emit(
            {
                "output": args.output,
                "trajectories": len(ts),
                "seed": args.seed,
                "terminated": int(term.size),
                "terminated_by_slice": {str(t): int((term == t).sum()) for t in sorted(set(term.tolist()))},
            }
        )
    return 0


def cmd_export_dot(args) -> int:
    model, _ = _build(args.model, args.tol)
    text = ntdceg_to_dot(model) if args.ceg is None else ceg_to_dot(unroll_to_ceg(model, args.ceg), model)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ntdceg", description="N time-slice dynamic chain event graphs")
    parser.add_argument("--tol", type=float, default=None, help="equality tolerance (default: NTDCEG_TOL or 1e-9)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("validate", help="check a model, DBN or merge-plan file")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("build", help="build the NT-DCEG of a staged model")
    p.add_argument("model")
    p.add_argument("--export-dot", metavar="PATH")
    p.add_argument("--detail", action="store_true", help="include position and edge tables")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("convert", help="convert a DBN file into a stratified staged model")
    p.add_argument("dbn")
    p.add_argument("-o", "--output")
    p.add_argument("--no-merge", action="store_true", help="keep equal tables at different slices apart")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("unroll", help="unroll to the finite CEG over slices -1..t-1")
    p.add_argument("model")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--export-dot", metavar="PATH")
    p.set_defaults(func=cmd_unroll)

    p = sub.add_parser("cut", help="random variables of a stage cut")
    p.add_argument("model")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--stages", required=True, help="comma-separated stage ids")
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("finecut", help="random variables of a position fine cut")
    p.add_argument("model")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--s", type=int, default=0)
    p.add_argument("--positions", required=True, help="comma-separated position names")
    p.set_defaults(func=cmd_finecut)

    p = sub.add_parser("indep", help="independence and Granger queries")
    p.add_argument("model")
    p.add_argument("--kind", choices=("local", "contemp", "stoch", "granger"), required=True)
    p.add_argument("--x", required=True, help="comma-separated variables (the cause for granger)")
    p.add_argument("--y", required=True, help="comma-separated variables (the effect for granger)")
    p.add_argument("--from-slice", type=int, default=0)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--levels", help="comma-separated variable per slice-tree depth")
    p.add_argument("--use-tree", action="store_true", help="read slice laws from the staged tree")
    p.set_defaults(func=cmd_indep)

    p = sub.add_parser("merge", help="build a composite model from a merge plan")
    p.add_argument("plan")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("sample", help="forward-sample trajectories as JSON lines")
    p.add_argument("model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--slices", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("export-dot", help="write the DOT graph of a model or of one of its CEGs")
    p.add_argument("model")
    p.add_argument("-o", "--output")
    p.add_argument("--ceg", type=int, metavar="T", help="export C_T instead of the cyclic graph")
    p.set_defaults(func=cmd_export_dot)
    return parser


def _code_of(exc: Exception) -> str:
    if isinstance(exc, (CliError, io.FileFormatError)):
        return exc.code
    if isinstance(exc, MergeError):
        return "E_MERGE"
    if isinstance(exc, HomogeneityError):
        return "E_HOMOGENEITY"
    if isinstance(exc, SizeGuardError):
        return "E_SIZE"
    return "E_VALIDATION"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ModelError, SizeGuardError) as exc:
        sys.stderr.write(json.dumps({"code": _code_of(exc), "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
