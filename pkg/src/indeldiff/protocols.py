"""Evaluation harnesses: property-targeting MAE, optimization improvement and
success rates, diversity, and connected-component statistics.

Reports are plain dictionaries (JSON-ready) with per-target/per-seed rows and
aggregates, so the command-line layer can serialize them directly.
"""

from __future__ import annotations

import numpy as np

from indeldiff import chem
from indeldiff.graph_core import GraphState


def component_stats(graphs, table: chem.ValenceTable | None = None) -> dict:
    """Avg/Max component counts and the number of single-component samples."""
    table = table or chem.ValenceTable()
    counts = [chem.component_count(g, table) for g in graphs]
    if not counts:
        return {"avg_nc": float("nan"), "max_nc": 0, "nsc": 0}
    return {
        "avg_nc": float(np.mean(counts)),
        "max_nc": int(np.max(counts)),
        "nsc": int(np.sum(np.asarray(counts) == 1)),
    }


def validity_rate(graphs, table: chem.ValenceTable | None = None, require_connected=True) -> float:
    table = table or chem.ValenceTable()
    if not graphs:
        return float("nan")
    ok = sum(bool(chem.check_validity(g, table, require_connected)) for g in graphs)
    return ok / len(graphs)


def mae_protocol(
    targets: list[float],
    samples_per_target: int,
    generator,
    property_fn,
    table: chem.ValenceTable | None = None,
    require_connected: bool = True,
) -> dict:
    """Mean absolute error between targets and realized properties.

    ``generator(target, target_index, sample_index) -> GraphState`` produces
    one sample; the MAE averages over the valid samples only while the
    validity rate counts all of them.
    """
    table = table or chem.ValenceTable()
    rows = []
    abs_errors = []
    n_valid = 0
    n_total = 0
    for i, y in enumerate(targets):
        for j in range(samples_per_target):
            g = generator(y, i, j)
            n_total += 1
            valid = bool(chem.check_validity(g, table, require_connected))
            row = {"target_index": i, "target": float(y), "valid": valid}
            if valid:
                n_valid += 1
                realized = float(property_fn(g))
                row["realized"] = realized
                abs_errors.append(abs(y - realized))
            rows.append(row)
    return {
        "protocol": "mae",
        "params": {"targets": len(targets), "samples_per_target": samples_per_target},
        "rows": rows,
        "aggregates": {
            "mae": float(np.mean(abs_errors)) if abs_errors else None,
            "validity": n_valid / n_total if n_total else float("nan"),
            "n_valid": n_valid,
            "n_total": n_total,
        },
    }


def optimization_protocol(
    seeds: list[GraphState],
    mode: str,
    optimizer,
    property_fn,
    similarity_threshold: float = 0.4,
    success_window: tuple[float, float] | None = None,
    table: chem.ValenceTable | None = None,
    require_connected: bool = True,
) -> dict:
    """Property optimization over seed graphs.

    ``optimizer(seed_graph, seed_index) -> list[GraphState]`` returns the
    candidate set.  ``improvement`` mode reports the best property delta among
    valid candidates at or above the similarity threshold (a seed with no
    passing candidate contributes zero).  ``success`` mode reports the
    fraction of seeds with any passing candidate whose property lands in the
    window.  Diversity is the mean pairwise fingerprint distance among each
    seed's passing candidates, zero when fewer than two.
    """
    if mode not in ("improvement", "success"):
        raise ValueError(f"unknown optimization mode {mode!r}")
    if mode == "success" and success_window is None:
        raise ValueError("success mode needs a property window")
    table = table or chem.ValenceTable()
    rows = []
    improvements = []
    successes = []
    diversities = []
    for idx, seed in enumerate(seeds):
        base_value = float(property_fn(seed))
        base_fp = chem.fingerprint(seed, table)
        candidates = optimizer(seed, idx)
        passing = []
        for cand in candidates:
            if cand.n == 0 or not chem.check_validity(cand, table, require_connected):
                continue
            sim = chem.tanimoto(base_fp, chem.fingerprint(cand, table))
            if sim >= similarity_threshold:
                passing.append((cand, sim, float(property_fn(cand))))
        row = {"seed_index": idx, "base": base_value, "n_candidates": len(candidates), "n_passing": len(passing)}
        if mode == "improvement":
            best = max((v - base_value for _, _, v in passing), default=0.0)
            improvements.append(best)
            row["improvement"] = best
        else:
            lo, hi = success_window
            hits = [c for c in passing if lo <= c[2] <= hi]
            ok = bool(hits)
            successes.append(ok)
            row["success"] = ok
        if len(passing) >= 2:
            fps = [chem.fingerprint(c, table) for c, _, _ in passing]
            dists = [
                1.0 - chem.tanimoto(fps[i], fps[j])
                for i in range(len(fps))
                for j in range(i + 1, len(fps))
            ]
            diversity = float(np.mean(dists))
        else:
            diversity = 0.0
        diversities.append(diversity)
        row["diversity"] = diversity
        rows.append(row)

    aggregates: dict = {"diversity": float(np.mean(diversities)) if diversities else None}
    if mode == "improvement":
        aggregates["improvement_mean"] = float(np.mean(improvements)) if improvements else None
        aggregates["improvement_std"] = float(np.std(improvements)) if improvements else None
    else:
        aggregates["success_rate"] = float(np.mean(successes)) if successes else None
    return {
        "protocol": f"optimization/{mode}",
        "params": {
            "similarity_threshold": similarity_threshold,
            "success_window": list(success_window) if success_window else None,
            "seeds": len(seeds),
        },
        "rows": rows,
        "aggregates": aggregates,
    }


def sample_quality_report(graphs, table: chem.ValenceTable | None = None) -> dict:
    """Validity plus component statistics of a sample batch."""
    table = table or chem.ValenceTable()
    comp = component_stats(graphs, table)
    return {
        "n_samples": len(graphs),
        "validity": validity_rate(graphs, table, require_connected=True),
        "validity_no_connectivity": validity_rate(graphs, table, require_connected=False),
        **comp,
    }
