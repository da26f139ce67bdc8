"""Run the oracle sweeps at configurable scale and print a JSON summary.

    python scripts/run_experiments.py --models 200 --dbns 100 --samples 1000000
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
import time
from collections import Counter

import numpy as np

from ntdceg.composite import MergeReport, conservativity, example_plan, merge_panels
from ntdceg.cuts import check_cut_independence, cut_variables
from ntdceg.dbn import ci_statements_preserved, dbn_joint, dbn_to_sdceg, max_joint_gap
from ntdceg.fixtures import radicalisation_model
from ntdceg.independence import contemporaneous_independence, local_independence, stochastic_independence
from ntdceg.model import tree_joint
from ntdceg.positions import brute_force_positions, build_ntdceg, positions_partition, same_partition
from ntdceg.random_models import random_dbn, random_staged_model, random_stratified_model
from ntdceg.simulate import binomial_band, exact_joint, sample


def positions_sweep(n: int, depth: int) -> dict:
    start = time.perf_counter()
    mismatches, sizes = [], []
    for seed in range(n):
        prefix = random_staged_model(seed)
        model = build_ntdceg(prefix)
        bf = brute_force_positions(prefix, depth)
        if not same_partition(bf, positions_partition(model, [v for b in bf for v in b])):
            mismatches.append(seed)
        sizes.append(len(model.positions))
    return {
        "models": n,
        "depth": depth,
        "mismatched_seeds": mismatches,
        "positions_min": min(sizes, default=0),
        "positions_max": max(sizes, default=0),
        "seconds": round(time.perf_counter() - start, 2),
    }


def dbn_sweep(n: int, slices: int) -> dict:
    start = time.perf_counter()
    worst, omp_failures = 0.0, []
    for seed in range(n):
        dbn = random_dbn(seed)
        prefix = dbn_to_sdceg(dbn)
        worst = max(worst, max_joint_gap(dbn_joint(dbn, slices), tree_joint(prefix, slices)))
        if not ci_statements_preserved(dbn, prefix, slices).ok:
            omp_failures.append(seed)
    return {"dbns": n, "slices": slices, "max_joint_gap": worst, "omp_failed_seeds": omp_failures,
            "seconds": round(time.perf_counter() - start, 2)}


def independence_sweep(n: int) -> dict:
    start = time.perf_counter()
    disagreements, verdicts = [], Counter()
    for seed in range(n):
        case = random_stratified_model(seed)
        model = build_ntdceg(case.prefix)
        v = case.view
        for x, y in itertools.permutations(v.levels, 2):
            st = stochastic_independence(model, v, [x], [y]).holds
            both = (
                local_independence(model, v, [x], [y]).holds
                and local_independence(model, v, [y], [x]).holds
                and contemporaneous_independence(model, v, [x], [y]).holds
            )
            verdicts[f"{case.source}:{'holds' if st else 'fails'}"] += 1
            if st != both:
                disagreements.append([seed, x, y])
    return {"models": n, "verdicts": dict(sorted(verdicts.items())), "disagreements": disagreements,
            "seconds": round(time.perf_counter() - start, 2)}


def cut_and_sampling(samples: int, seed: int) -> dict:
    start = time.perf_counter()
    model = build_ntdceg(radicalisation_model())
    stages = ["u13", "u14"]
    targets = model.stages["u13"] + model.stages["u14"]
    first = [targets.index(w) for w in model.stages["u13"]]
    ts = sample(model, samples, 4, seed)
    rows = []
    for t in (1, 2, 3):
        triple = cut_variables(model, stages, t)
        hit = ts.visits(targets, t)
        hit = hit[hit >= 0]
        share = float(np.isin(hit, first).mean())
        p = float(triple.q_pmf[0])
        rows.append({
            "t": t,
            "pi_Q_exact": [float(x) for x in triple.q_pmf],
            "pi_Q_sampled": [share, 1 - share],
            "z": abs(share - p) / binomial_band(p, len(hit), 1.0),
            "residual": check_cut_independence(model, stages, t).residual,
        })
    ex = exact_joint(model, 2)
    freq = sample(model, samples, 2, seed).frequencies()
    z = [abs(freq.get(k, 0) / samples - p) / binomial_band(p, samples, 1.0) for k, p in ex.items()]
    return {"samples": samples, "seed": seed, "cut": rows, "joint_cells": len(ex),
            "cells_outside_3sigma": sum(x > 3 for x in z), "max_cell_z": max(z),
            "seconds": round(time.perf_counter() - start, 2)}


def composite() -> dict:
    plan = example_plan()
    report = MergeReport(0)
    prefix = merge_panels(plan, report)
    return {"stages": report.stages, "positions": len(build_ntdceg(prefix).positions),
            "merged": report.merged, "conservativity": [c.ok for c in conservativity(plan, prefix)]}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", type=int, default=100, help="random staged models for the position sweep")
    ap.add_argument("--depth", type=int, default=6, help="brute-force unroll depth")
    ap.add_argument("--dbns", type=int, default=50)
    ap.add_argument("--stratified", type=int, default=100)
    ap.add_argument("--samples", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=20261016)
    ap.add_argument("-o", "--output")
    args = ap.parse_args(argv)
    results = {
        "positions": positions_sweep(args.models, args.depth),
        "dbn": dbn_sweep(args.dbns, 3),
        "independence": independence_sweep(args.stratified),
        "sampling": cut_and_sampling(args.samples, args.seed),
        "composite": composite(),
    }
    text = json.dumps(results, indent=2) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(text)
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
