"""Minimal molecular toolkit: valence validity, weight, components, fingerprints.

Charged atoms are standalone types (``N+``, ``O-``) with their own valence
entries.  Validity means every atom's summed bond order stays within its
valence cap and, by default, that the graph is a single connected component;
the connectedness requirement can be switched off since component counts are
reported separately.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from indeldiff.graph_core import NO_BOND, GraphState

DEFAULT_VALENCES = {"C": 4, "N": 3, "O": 2, "F": 1, "N+": 4, "O-": 1}
DEFAULT_MASSES = {
    "C": 12.011,
    "N": 14.007,
    "O": 15.999,
    "F": 18.998,
    "N+": 14.007,
    "O-": 15.999,
}
DEFAULT_BOND_ORDERS = {NO_BOND: 0, "single": 1, "double": 2, "triple": 3}


class ChemError(ValueError):
    pass


@dataclass(frozen=True)
class ValenceTable:
    max_valence: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_VALENCES))
    atomic_mass: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MASSES))
    bond_order: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_BOND_ORDERS))

    def valence_of(self, label: str) -> int:
        try:
            return self.max_valence[label]
        except KeyError:
            raise ChemError(f"unknown atom label {label!r}") from None

    def mass_of(self, label: str) -> float:
        try:
            return self.atomic_mass[label]
        except KeyError:
            raise ChemError(f"unknown atom label {label!r}") from None

    def order_of(self, label: str) -> int:
        try:
            return self.bond_order[label]
        except KeyError:
            raise ChemError(f"unknown bond label {label!r}") from None


@dataclass(frozen=True)
class ValidityResult:
    valid: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.valid


def _require_clean(graph: GraphState) -> None:
    if graph.has_reserved():
        raise ChemError("metric functions expect graphs without reserved categories")


def bond_order_matrix(graph: GraphState, table: ValenceTable) -> np.ndarray:
    orders = np.array([table.order_of(lbl) for lbl in graph.space.edge_types])
    return orders[graph.edge_cat]


def connected_components(graph: GraphState, table: ValenceTable | None = None) -> np.ndarray:
    """Component label per node (bonds of any positive order connect)."""
    _require_clean(graph)
    table = table or ValenceTable()
    order = bond_order_matrix(graph, table)
    n = graph.n
    labels = -np.ones(n, dtype=np.int64)
    comp = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        queue = deque([start])
        labels[start] = comp
        while queue:
            v = queue.popleft()
            for w in range(n):
                if labels[w] < 0 and order[v, w] > 0:
                    labels[w] = comp
                    queue.append(w)
        comp += 1
    return labels


def component_count(graph: GraphState, table: ValenceTable | None = None) -> int:
    if graph.n == 0:
        return 0
    return int(connected_components(graph, table).max()) + 1


def check_validity(
    graph: GraphState, table: ValenceTable | None = None, require_connected: bool = True
) -> ValidityResult:
    table = table or ValenceTable()
    _require_clean(graph)
    if graph.n == 0:
        return ValidityResult(False, "empty")
    order = bond_order_matrix(graph, table)
    totals = order.sum(axis=1)
    for i, lbl_idx in enumerate(graph.node_cat):
        label = graph.space.node_types[lbl_idx]
        if totals[i] > table.valence_of(label):
            return ValidityResult(False, f"valence: atom {i} ({label}) exceeds {table.valence_of(label)}")
    if require_connected and component_count(graph, table) != 1:
        return ValidityResult(False, "disconnected")
    return ValidityResult(True)


def molecular_weight(graph: GraphState, table: ValenceTable | None = None) -> float:
    table = table or ValenceTable()
    _require_clean(graph)
    return float(sum(table.mass_of(graph.space.node_types[c]) for c in graph.node_cat))


def bond_order_sum(graph: GraphState, table: ValenceTable | None = None) -> float:
    table = table or ValenceTable()
    _require_clean(graph)
    if graph.n == 0:
        return 0.0
    iu = np.triu_indices(graph.n, k=1)
    return float(bond_order_matrix(graph, table)[iu].sum())


FINGERPRINT_BITS = 2048
MAX_PATH_EDGES = 7


@dataclass(frozen=True)
class Fingerprint:
    bits: frozenset[int]
    n_bits: int = FINGERPRINT_BITS


def _hash_bit(path_labels: tuple[str, ...]) -> int:
    digest = hashlib.md5("|".join(path_labels).encode()).digest()
    return int.from_bytes(digest[:8], "big") % FINGERPRINT_BITS


def fingerprint(graph: GraphState, table: ValenceTable | None = None) -> Fingerprint:
    """Hashed node-label simple paths of up to MAX_PATH_EDGES bonds into a
    fixed-width bit set.  Each path counts once in its lexicographically
    smaller direction, so the result is order-independent."""
    table = table or ValenceTable()
    _require_clean(graph)
    order = bond_order_matrix(graph, table)
    labels = [graph.space.node_types[c] for c in graph.node_cat]
    bits: set[int] = set()
    n = graph.n

    def extend(path: list[int]):
        seq = tuple(labels[i] for i in path)
        bits.add(_hash_bit(min(seq, seq[::-1])))
        if len(path) > MAX_PATH_EDGES:
            return
        last = path[-1]
        for nxt in range(n):
            if order[last, nxt] > 0 and nxt not in path:
                path.append(nxt)
                extend(path)
                path.pop()

    for start in range(n):
        extend([start])
    return Fingerprint(frozenset(bits))


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.n_bits != b.n_bits:
        raise ChemError("fingerprint length mismatch")
    union = a.bits | b.bits
    if not union:
        return 1.0
    return len(a.bits & b.bits) / len(union)
