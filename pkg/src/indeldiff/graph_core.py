"""Graph representation with deletion marks, activation times, and per-sample marginals.

Categories are stored as integer indices into a :class:`CategorySpace`.  Proper
(atom/bond) types occupy indices ``0..k-1``; two reserved indices follow: the
absorbing deletion state ``DEL`` at ``k`` and the transient one-step state
``DEL*`` at ``k+1``.  Edge index 0 is always the explicit "no-bond" type.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

NO_BOND = "no-bond"
DEL = "DEL"
DEL_STAR = "DEL*"


class GraphError(ValueError):
    """Raised on structural violations (bad marks, malformed tensors, empty input)."""


@dataclass(frozen=True)
class CategorySpace:
    """Ordered proper type labels for nodes and edges, plus reserved deletion slots."""

    node_types: tuple[str, ...]
    edge_types: tuple[str, ...]

    def __post_init__(self):
        if len(self.node_types) < 1:
            raise GraphError("need at least one node type")
        if len(self.edge_types) < 2 or self.edge_types[0] != NO_BOND:
            raise GraphError(f"edge types must start with {NO_BOND!r} and include a bond type")
        reserved = {DEL, DEL_STAR}
        if reserved & set(self.node_types) or reserved & set(self.edge_types):
            raise GraphError("proper types may not alias reserved deletion labels")

    @property
    def a(self) -> int:
        return len(self.node_types)

    @property
    def b(self) -> int:
        return len(self.edge_types)

    @property
    def node_del(self) -> int:
        return self.a

    @property
    def node_del_star(self) -> int:
        return self.a + 1

    @property
    def edge_del(self) -> int:
        return self.b

    @property
    def edge_del_star(self) -> int:
        return self.b + 1

    @property
    def node_dim(self) -> int:
        return self.a + 2

    @property
    def edge_dim(self) -> int:
        return self.b + 2

    def node_index(self, label: str) -> int:
        try:
            return self.node_types.index(label)
        except ValueError:
            raise GraphError(f"unknown node type {label!r}") from None

    def edge_index(self, label: str) -> int:
        try:
            return self.edge_types.index(label)
        except ValueError:
            raise GraphError(f"unknown edge type {label!r}") from None

    def node_label(self, idx: int) -> str:
        if idx == self.node_del:
            return DEL
        if idx == self.node_del_star:
            return DEL_STAR
        return self.node_types[idx]

    def edge_label(self, idx: int) -> str:
        if idx == self.edge_del:
            return DEL
        if idx == self.edge_del_star:
            return DEL_STAR
        return self.edge_types[idx]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GraphState:
    """Immutable graph at one diffusion timestep.

    ``node_cat[i]`` and ``edge_cat[i, j]`` are category indices;
    ``activation[i]`` is the forward timestep at which node ``i`` entered the
    graph (0 for every node of the original data graph); ``t`` is the current
    diffusion timestep.
    """

    space: CategorySpace
    node_cat: np.ndarray
    edge_cat: np.ndarray
    activation: np.ndarray
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "node_cat", _frozen(np.asarray(self.node_cat, dtype=np.int64)))
        object.__setattr__(self, "edge_cat", _frozen(np.asarray(self.edge_cat, dtype=np.int64)))
        object.__setattr__(self, "activation", _frozen(np.asarray(self.activation, dtype=np.int64)))

    @classmethod
    def from_categories(
        cls,
        space: CategorySpace,
        node_cat,
        edge_cat,
        activation=None,
        t: int = 0,
        check: bool = True,
    ) -> "GraphState":
        node_cat = np.asarray(node_cat, dtype=np.int64)
        if activation is None:
            activation = np.zeros(node_cat.shape[0], dtype=np.int64)
        g = cls(space, node_cat, np.asarray(edge_cat, dtype=np.int64), activation, t)
        if check:
            g.validate()
        return g

    @classmethod
    def empty(cls, space: CategorySpace, t: int = 0) -> "GraphState":
        return cls(
            space,
            np.zeros(0, dtype=np.int64),
            np.zeros((0, 0), dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            t,
        )

    @property
    def n(self) -> int:
        return self.node_cat.shape[0]

    @property
    def X(self) -> np.ndarray:
        """One-hot node matrix, shape (n, a+2)."""
        return np.eye(self.space.node_dim)[self.node_cat]

    @property
    def E(self) -> np.ndarray:
        """One-hot edge tensor, shape (n, n, b+2)."""
        return np.eye(self.space.edge_dim)[self.edge_cat]

    @property
    def S(self) -> np.ndarray:
        return self.activation

    def expected_edge_mark(self, i: int, j: int) -> int | None:
        """Reserved category forced on edge (i, j) by its endpoints, if any.

        DEL takes precedence over DEL*: an edge whose endpoint is already
        absorbed died at the earlier deletion.
        """
        sp = self.space
        ci, cj = self.node_cat[i], self.node_cat[j]
        if ci == sp.node_del or cj == sp.node_del:
            return sp.edge_del
        if ci == sp.node_del_star or cj == sp.node_del_star:
            return sp.edge_del_star
        return None

    def validate(self) -> None:
        sp = self.space
        n = self.n
        if self.edge_cat.shape != (n, n):
            raise GraphError("edge tensor shape does not match node count")
        if self.activation.shape != (n,):
            raise GraphError("activation vector shape does not match node count")
        if n == 0:
            return
        if self.node_cat.min() < 0 or self.node_cat.max() >= sp.node_dim:
            raise GraphError("node category index out of range")
        if self.edge_cat.min() < 0 or self.edge_cat.max() >= sp.edge_dim:
            raise GraphError("edge category index out of range")
        if not np.array_equal(self.edge_cat, self.edge_cat.T):
            raise GraphError("edge tensor is not symmetric")
        if np.any(np.diag(self.edge_cat) != 0):
            raise GraphError("diagonal must be no-bond")
        if np.any(self.activation < 0):
            raise GraphError("activation times must be non-negative")
        for i in range(n):
            for j in range(i + 1, n):
                forced = self.expected_edge_mark(i, j)
                if forced is not None and self.edge_cat[i, j] != forced:
                    raise GraphError(
                        f"edge ({i},{j}) must carry mark {sp.edge_label(forced)!r} "
                        f"to match its endpoints"
                    )

    def count_marked(self, mark: str) -> int:
        idx = self.space.node_del if mark == DEL else self.space.node_del_star
        return int(np.sum(self.node_cat == idx))

    def has_reserved(self) -> bool:
        return bool(np.any(self.node_cat >= self.space.a) or np.any(self.edge_cat >= self.space.b))


@dataclass(frozen=True)
class SampleMarginals:
    """Per-sample category frequencies used to label inserted nodes and edges."""

    m_nodes: np.ndarray
    m_edges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m_nodes", _frozen(np.asarray(self.m_nodes, dtype=np.float64)))
        object.__setattr__(self, "m_edges", _frozen(np.asarray(self.m_edges, dtype=np.float64)))
        for v in (self.m_nodes, self.m_edges):
            if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-12:
                raise GraphError("marginal vector must be a distribution")


def compute_sample_marginals(graph: GraphState) -> SampleMarginals:
    """Category frequencies of one clean graph: nodes over types, edges over
    the n(n-1)/2 unordered pairs including no-bond."""
    sp = graph.space
    if graph.n == 0:
        raise GraphError("empty graph has no marginals")
    if graph.has_reserved():
        raise GraphError("marginals are defined on clean graphs only")
    m_x = np.bincount(graph.node_cat, minlength=sp.a).astype(np.float64)
    m_x /= m_x.sum()
    iu = np.triu_indices(graph.n, k=1)
    if iu[0].size == 0:
        # single node: no pairs, fall back to a no-bond point mass
        m_e = np.zeros(sp.b)
        m_e[0] = 1.0
    else:
        m_e = np.bincount(graph.edge_cat[iu], minlength=sp.b).astype(np.float64)
        m_e /= m_e.sum()
    return SampleMarginals(m_x, m_e)


def apply_node_deletion_mark(graph: GraphState, i: int, mark: str) -> GraphState:
    """Return a copy with node ``i`` and its incident edges carrying ``mark``.

    DEL* may only be applied to a proper node; DEL may follow a proper or
    DEL* state but a DEL node can never be re-marked DEL* (the absorbing
    state has no way back through the transient one).
    """
    sp = graph.space
    if not 0 <= i < graph.n:
        raise GraphError(f"node index {i} out of range")
    cur = graph.node_cat[i]
    if mark == DEL_STAR:
        if cur == sp.node_del:
            raise GraphError("cannot mark DEL* on an absorbed (DEL) node")
        if cur == sp.node_del_star:
            raise GraphError("node is already DEL*")
        node_idx, edge_idx = sp.node_del_star, sp.edge_del_star
    elif mark == DEL:
        node_idx, edge_idx = sp.node_del, sp.edge_del
    else:
        raise GraphError(f"unknown mark {mark!r}")

    node_cat = graph.node_cat.copy()
    edge_cat = graph.edge_cat.copy()
    node_cat[i] = node_idx
    for j in range(graph.n):
        if j == i:
            continue
        # DEL stays put: the edge died with the earlier-deleted endpoint
        if edge_cat[i, j] != sp.edge_del or edge_idx == sp.edge_del:
            edge_cat[i, j] = edge_idx
            edge_cat[j, i] = edge_idx
    return GraphState(sp, node_cat, edge_cat, graph.activation, graph.t)


def strip_marked_nodes(graph: GraphState, mark: str) -> GraphState:
    """Remove every node carrying ``mark`` (and its edges), re-indexing compactly."""
    sp = graph.space
    idx = sp.node_del if mark == DEL else sp.node_del_star
    keep = graph.node_cat != idx
    if keep.all():
        return graph
    node_cat = graph.node_cat[keep]
    edge_cat = graph.edge_cat[np.ix_(keep, keep)]
    activation = graph.activation[keep]
    return GraphState(sp, node_cat, edge_cat, activation, graph.t)


def delete_node(graph: GraphState, i: int) -> GraphState:
    """Remove node ``i`` directly, preserving the order of the others."""
    keep = np.ones(graph.n, dtype=bool)
    keep[i] = False
    return GraphState(
        graph.space,
        graph.node_cat[keep],
        graph.edge_cat[np.ix_(keep, keep)],
        graph.activation[keep],
        graph.t,
    )


def insert_node(graph: GraphState, position: int, node_cat: int, edge_cats, activation: int) -> GraphState:
    """Insert a node at ``position`` with the given category and incident edge
    categories (one per existing node, in current index order)."""
    n = graph.n
    if not 0 <= position <= n:
        raise GraphError(f"insert position {position} out of range")
    edge_cats = np.asarray(edge_cats, dtype=np.int64)
    if edge_cats.shape != (n,):
        raise GraphError("need one incident edge category per existing node")
    new_nodes = np.insert(graph.node_cat, position, node_cat)
    new_act = np.insert(graph.activation, position, activation)
    new_edges = np.zeros((n + 1, n + 1), dtype=np.int64)
    old_pos = [k for k in range(n + 1) if k != position]
    new_edges[np.ix_(old_pos, old_pos)] = graph.edge_cat
    row = np.insert(edge_cats, position, 0)
    new_edges[position, :] = row
    new_edges[:, position] = row
    return GraphState(graph.space, new_nodes, new_edges, new_act, graph.t)


def canonical_key(graph: GraphState) -> tuple:
    """Isomorphism-invariant key via brute force over node permutations.

    Intended for small graphs (tests, exact oracles); cost grows as n!.
    """
    n = graph.n
    if n == 0:
        return (0,)
    if n > 8:
        raise GraphError("canonical_key is brute-force; refuse n > 8")
    nodes = graph.node_cat
    edges = graph.edge_cat
    best = None
    for perm in permutations(range(n)):
        p = np.asarray(perm)
        key = (tuple(nodes[p]), tuple(edges[np.ix_(p, p)][np.triu_indices(n, k=1)]))
        if best is None or key < best:
            best = key
    return (n,) + best
