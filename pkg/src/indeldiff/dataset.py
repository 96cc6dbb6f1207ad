"""Dataset ingestion, toy dataset generation, statistics, and splits.

The single exchange format is JSON lines; one object per graph:

    {"atoms": ["C", "O"], "bonds": [[0, 1, "single"]], "properties": {"mw": 28.01}}

Absent bonds are implicit "no-bond".  Per-sample marginals are computed on
load (and reused for insertion labels during training); dataset-level stats
provide the noising marginals and the node-count distribution.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from indeldiff import chem
from indeldiff.graph_core import (
    NO_BOND,
    CategorySpace,
    GraphState,
    SampleMarginals,
    compute_sample_marginals,
)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    graph: GraphState
    properties: dict[str, float]
    marginals: SampleMarginals


@dataclass(frozen=True)
class DatasetStats:
    m_nodes: np.ndarray
    m_edges: np.ndarray
    p_n: np.ndarray  # index k = probability of node count k (index 0 unused)
    n_max: int

    def to_dict(self) -> dict:
        return {
            "m_nodes": self.m_nodes.tolist(),
            "m_edges": self.m_edges.tolist(),
            "p_n": self.p_n.tolist(),
            "n_max": self.n_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetStats":
        return cls(
            np.asarray(d["m_nodes"], dtype=np.float64),
            np.asarray(d["m_edges"], dtype=np.float64),
            np.asarray(d["p_n"], dtype=np.float64),
            int(d["n_max"]),
        )


def record_from_graph(graph: GraphState, properties: dict[str, float]) -> DatasetRecord:
    return DatasetRecord(graph, dict(properties), compute_sample_marginals(graph))


def graph_to_obj(graph: GraphState, properties: dict[str, float] | None = None) -> dict:
    sp = graph.space
    bonds = []
    for i in range(graph.n):
        for j in range(i + 1, graph.n):
            c = graph.edge_cat[i, j]
            if c != 0:
                bonds.append([i, j, sp.edge_label(int(c))])
    return {
        "atoms": [sp.node_label(int(c)) for c in graph.node_cat],
        "bonds": bonds,
        "properties": dict(properties or {}),
    }


def graph_from_obj(obj: dict, space: CategorySpace, allow_marks: bool = False) -> tuple[GraphState, dict]:
    atoms = obj.get("atoms")
    if not isinstance(atoms, list) or not atoms:
        raise DatasetError("record needs a non-empty 'atoms' list")
    n = len(atoms)

    def node_idx(label):
        if allow_marks and label == "DEL":
            return space.node_del
        if allow_marks and label == "DEL*":
            return space.node_del_star
        return space.node_index(label)

    def edge_idx(label):
        if allow_marks and label == "DEL":
            return space.edge_del
        if allow_marks and label == "DEL*":
            return space.edge_del_star
        return space.edge_index(label)

    node_cat = np.array([node_idx(a) for a in atoms], dtype=np.int64)
    edge_cat = np.zeros((n, n), dtype=np.int64)
    seen = set()
    for bond in obj.get("bonds", []):
        if not (isinstance(bond, list) and len(bond) == 3):
            raise DatasetError(f"malformed bond entry {bond!r}")
        i, j, label = bond
        if not (isinstance(i, int) and isinstance(j, int)) or i == j:
            raise DatasetError(f"bad bond endpoints ({i}, {j})")
        if not (0 <= i < n and 0 <= j < n):
            raise DatasetError(f"bond index out of range in ({i}, {j})")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DatasetError(f"duplicate undirected bond {key}")
        seen.add(key)
        c = edge_idx(label)
        edge_cat[i, j] = c
        edge_cat[j, i] = c
    activation = np.asarray(obj.get("activation", [0] * n), dtype=np.int64)
    t = int(obj.get("t", 0))
    graph = GraphState.from_categories(space, node_cat, edge_cat, activation, t=t, check=True)
    props = obj.get("properties", {})
    if not isinstance(props, dict):
        raise DatasetError("'properties' must be an object")
    return graph, {k: float(v) for k, v in props.items()}


def load_jsonl(path, space: CategorySpace) -> list[DatasetRecord]:
    records = []
    names = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                graph, props = graph_from_obj(obj, space)
            except (json.JSONDecodeError, DatasetError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            if names is None:
                names = set(props)
            elif set(props) != names:
                raise DatasetError(f"{path}:{lineno}: inconsistent property names")
            records.append(record_from_graph(graph, props))
    return records


def save_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(graph_to_obj(rec.graph, rec.properties), sort_keys=True) + "\n")


@dataclass(frozen=True)
class ToySpec:
    """Family description for deterministic toy datasets.

    ``enumerable``: every valence-valid connected graph up to ``max_nodes``
    over the given atom/bond types.  ``chains``: all label assignments of
    single-bond paths with 2..max_nodes atoms.
    """

    family: str = "enumerable"
    atom_types: tuple[str, ...] = ("C", "O")
    bond_types: tuple[str, ...] = (NO_BOND, "single")
    max_nodes: int = 4
    budget: int = 10_000

    @property
    def space(self) -> CategorySpace:
        return CategorySpace(tuple(self.atom_types), tuple(self.bond_types))


def _attach_properties(graph: GraphState, table: chem.ValenceTable) -> DatasetRecord:
    props = {
        "mw": chem.molecular_weight(graph, table),
        "n": float(graph.n),
        "bond_order_sum": chem.bond_order_sum(graph, table),
    }
    return record_from_graph(graph, props)


def generate_toy_dataset(spec: ToySpec, rng: np.random.Generator | None = None) -> list[DatasetRecord]:
    """Deterministic enumeration of the requested family (rng reserved for
    future stochastic families; current ones ignore it)."""
    space = spec.space
    table = chem.ValenceTable()
    records: list[DatasetRecord] = []

    if spec.family == "enumerable":
        for n in range(1, spec.max_nodes + 1):
            pairs = list(itertools.combinations(range(n), 2))
            n_combos = len(spec.atom_types) ** n * len(spec.bond_types) ** len(pairs)
            if len(records) + n_combos > spec.budget:
                raise DatasetError("family exceeds the enumeration budget")
            for atom_combo in itertools.product(range(len(spec.atom_types)), repeat=n):
                node_cat = np.array(atom_combo, dtype=np.int64)
                for edge_combo in itertools.product(range(len(spec.bond_types)), repeat=len(pairs)):
                    edge_cat = np.zeros((n, n), dtype=np.int64)
                    for (i, j), c in zip(pairs, edge_combo):
                        edge_cat[i, j] = c
                        edge_cat[j, i] = c
                    g = GraphState.from_categories(space, node_cat, edge_cat, check=False)
                    if chem.check_validity(g, table, require_connected=True):
                        records.append(_attach_properties(g, table))
    elif spec.family == "chains":
        if spec.max_nodes < 2:
            raise DatasetError("chains need max_nodes >= 2")
        single = space.edge_index("single")
        for n in range(2, spec.max_nodes + 1):
            n_combos = len(spec.atom_types) ** n
            if len(records) + n_combos > spec.budget:
                raise DatasetError("family exceeds the enumeration budget")
            edge_cat = np.zeros((n, n), dtype=np.int64)
            for i in range(n - 1):
                edge_cat[i, i + 1] = single
                edge_cat[i + 1, i] = single
            for atom_combo in itertools.product(range(len(spec.atom_types)), repeat=n):
                g = GraphState.from_categories(space, np.array(atom_combo), edge_cat, check=False)
                if chem.check_validity(g, table, require_connected=True):
                    records.append(_attach_properties(g, table))
    else:
        raise DatasetError(f"unknown toy family {spec.family!r}")
    return records


def compute_dataset_stats(records) -> DatasetStats:
    if not records:
        raise DatasetError("cannot compute statistics of an empty dataset")
    space = records[0].graph.space
    node_counts = np.zeros(space.a)
    edge_counts = np.zeros(space.b)
    sizes = [rec.graph.n for rec in records]
    n_max = max(sizes)
    p_n = np.zeros(n_max + 1)
    for rec in records:
        g = rec.graph
        node_counts += np.bincount(g.node_cat, minlength=space.a)
        iu = np.triu_indices(g.n, k=1)
        if iu[0].size:
            edge_counts += np.bincount(g.edge_cat[iu], minlength=space.b)
        p_n[g.n] += 1
    if edge_counts.sum() == 0:
        edge_counts[0] = 1.0
    return DatasetStats(
        node_counts / node_counts.sum(),
        edge_counts / edge_counts.sum(),
        p_n / p_n.sum(),
        n_max,
    )


def split_dataset(records, fractions=(0.8, 0.1, 0.1)) -> tuple[list, list, list]:
    """Contiguous-prefix split: first fraction trains, then validation, then test."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise DatasetError("need three fractions summing to 1")
    n = len(records)
    n_train = int(n * fractions[0])
    n_val = int(n * fractions[1])
    return (
        list(records[:n_train]),
        list(records[n_train : n_train + n_val]),
        list(records[n_train + n_val :]),
    )


def content_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def stats_cache_path(dataset_path) -> Path:
    return Path(str(dataset_path) + ".stats.json")


def load_or_compute_stats(dataset_path, records) -> DatasetStats:
    """Stats cache keyed by the dataset file's content hash."""
    cache = stats_cache_path(dataset_path)
    digest = content_hash(dataset_path)
    if cache.exists():
        try:
            payload = json.loads(cache.read_text())
            if payload.get("content_hash") == digest:
                return DatasetStats.from_dict(payload["stats"])
        except (json.JSONDecodeError, KeyError):
            pass
    stats = compute_dataset_stats(records)
    cache.write_text(json.dumps({"content_hash": digest, "stats": stats.to_dict()}, sort_keys=True))
    return stats
