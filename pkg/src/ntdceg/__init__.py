"""N time-slice dynamic chain event graphs.

Build the cyclic graph of a time-homogeneous staged tree, convert discrete
dynamic Bayesian networks, extract cut random variables, decide
independence and Granger-noncausality statements, merge panel models and
sample trajectories.
"""

from __future__ import annotations

from .composite import (
    Agreement,
    MergeError,
    MergePlan,
    MergeReport,
    Panel,
    conservativity,
    merge_panels,
    restrict_to_panel,
    validate_plan,
)
from .cuts import (
    CutVarTriple,
    CutIndependenceReport,
    beth_partition,
    check_cut_independence,
    check_fine_cut_independence,
    cut_variables,
    enumerate_walks,
    fine_cut_variables,
    verify_cut,
    verify_fine_cut,
)
from .dbn import Cpt, DbnSpec, Variable, ci_statements_preserved, dbn_joint, dbn_to_sdceg, validate_dbn
from .independence import (
    GrangerAnswer,
    VariableView,
    Verdict,
    contemporaneous_independence,
    granger_query,
    local_independence,
    stochastic_independence,
)
from .model import (
    DEFAULT_TOL,
    EventTree,
    HomogeneityError,
    ModelError,
    SizeGuardError,
    Stage,
    StagedTreePrefix,
    TogSpec,
    identity_staging,
    staging_from_function,
    tree_joint,
    unroll_tog,
    validate_event_tree,
    validate_staging,
)
from .positions import CEG, NTDCEG, brute_force_positions, build_ntdceg, compute_positions, unroll_to_ceg
from .simulate import Trajectory, TrajectorySet, exact_joint, sample

__all__ = [
    "Agreement",
    "CEG",
    "Cpt",
    "CutVarTriple",
    "DEFAULT_TOL",
    "DbnSpec",
    "EventTree",
    "GrangerAnswer",
    "HomogeneityError",
    "MergeError",
    "MergePlan",
    "MergeReport",
    "ModelError",
    "NTDCEG",
    "Panel",
    "SizeGuardError",
    "Stage",
    "StagedTreePrefix",
    "CutIndependenceReport",
    "TogSpec",
    "Trajectory",
    "TrajectorySet",
    "Variable",
    "VariableView",
    "Verdict",
    "beth_partition",
    "brute_force_positions",
    "build_ntdceg",
    "check_cut_independence",
    "check_fine_cut_independence",
    "ci_statements_preserved",
    "compute_positions",
    "conservativity",
    "contemporaneous_independence",
    "cut_variables",
    "dbn_joint",
    "dbn_to_sdceg",
    "enumerate_walks",
    "exact_joint",
    "fine_cut_variables",
    "granger_query",
    "identity_staging",
    "local_independence",
    "merge_panels",
    "restrict_to_panel",
    "sample",
    "staging_from_function",
    "stochastic_independence",
    "tree_joint",
    "unroll_tog",
    "unroll_to_ceg",
    "validate_dbn",
    "validate_event_tree",
    "validate_plan",
    "validate_staging",
    "verify_cut",
    "verify_fine_cut",
]
