"""Exact-Bayes denoisers for enumerable toy families.

Two oracles share the prediction contract with the trainable network:

* :class:`MatchedSizeOracle` models the size-preserving process (no edits).
  Its category posteriors are exact sums over the family; its time head is a
  point mass at 0 and its count head never inserts.  Driving the sampler with
  it tests distribution recovery of the category chain end to end.

* :class:`InsertDeleteOracle` models the full process on families where every
  (data size, target size) pair differs by at most one node, enumerating the
  joint over family member, target size, edit time, edit position and
  inserted labels.  It yields exact count and activation-time posteriors,
  exercising the reinsertion and removal mechanics.

Both cache per observed state: the reverse chain revisits few distinct
states, so chains amortize to dictionary lookups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from indeldiff.denoiser import DenoiserOutput
from indeldiff.forward_process import NoiseModel
from indeldiff.graph_core import CategorySpace, GraphState
from indeldiff.schedules import size_distribution


class OracleError(ValueError):
    pass


def _kernel(table: np.ndarray, s: int, t: int, m: np.ndarray) -> np.ndarray:
    """Closed-form cumulative kernel over proper categories for (s, t]."""
    denom = table[s]
    abar = 0.0 if denom == 0.0 else table[t] / denom
    k = m.shape[0]
    return abar * np.eye(k) + (1.0 - abar) * np.ones((k, 1)) * m


class _KernelCache:
    def __init__(self, noise: NoiseModel):
        self.noise = noise
        self._node: dict[tuple[int, int], np.ndarray] = {}
        self._edge: dict[tuple[int, int], np.ndarray] = {}

    def node(self, s: int, t: int) -> np.ndarray:
        key = (s, t)
        if key not in self._node:
            sched = self.noise.schedule
            self._node[key] = _kernel(
                sched.alpha_bar_table(sched.nu_nodes), s, t, self.noise.m_nodes
            )
        return self._node[key]

    def edge(self, s: int, t: int) -> np.ndarray:
        key = (s, t)
        if key not in self._edge:
            sched = self.noise.schedule
            self._edge[key] = _kernel(
                sched.alpha_bar_table(sched.nu_edges), s, t, self.noise.m_edges
            )
        return self._edge[key]


@dataclass(frozen=True)
class _Member:
    node0: np.ndarray
    edge0: np.ndarray
    weight: float
    m_nodes: np.ndarray
    m_edges: np.ndarray


def _members_from_records(records) -> list[_Member]:
    w = 1.0 / len(records)
    return [
        _Member(
            rec.graph.node_cat,
            rec.graph.edge_cat,
            w,
            rec.marginals.m_nodes,
            rec.marginals.m_edges,
        )
        for rec in records
    ]


@dataclass(frozen=True)
class _SizeGroup:
    node0: np.ndarray  # (G, n)
    pair0: np.ndarray  # (G, P)
    node_onehot: np.ndarray  # (G, n*a)
    pair_onehot: np.ndarray  # (G, P*b)
    weights: np.ndarray  # (G,)
    iu: np.ndarray
    ju: np.ndarray


class MatchedSizeOracle:
    """Exact posterior over the family under the pure category chain."""

    def __init__(self, records, noise: NoiseModel):
        if not records:
            raise OracleError("empty family")
        self.space: CategorySpace = records[0].graph.space
        self.noise = noise
        self.kernels = _KernelCache(noise)
        a, b = self.space.a, self.space.b
        by_size: dict[int, list[_Member]] = {}
        for member in _members_from_records(records):
            by_size.setdefault(member.node0.shape[0], []).append(member)
        self.groups: dict[int, _SizeGroup] = {}
        for n, members in by_size.items():
            iu, ju = np.triu_indices(n, k=1)
            node0 = np.stack([mem.node0 for mem in members])
            pair0 = np.stack([mem.edge0[iu, ju] for mem in members])
            self.groups[n] = _SizeGroup(
                node0,
                pair0,
                np.eye(a)[node0].reshape(len(members), -1),
                np.eye(b)[pair0].reshape(len(members), -1),
                np.array([mem.weight for mem in members]),
                iu,
                ju,
            )
        self._cache: dict[tuple, DenoiserOutput] = {}
        self.T = noise.schedule.T

    def predict(self, state: GraphState, guide, t: int) -> DenoiserOutput:
        sp = self.space
        key = (t, state.n, state.node_cat.tobytes(), state.edge_cat.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if state.has_reserved():
            raise OracleError("size-matched oracle cannot see reserved categories")
        group = self.groups.get(state.n)
        if group is None:
            raise OracleError(f"no family member of size {state.n}")
        n = state.n
        kx = self.kernels.node(0, t)
        ke = self.kernels.edge(0, t)
        lik = kx[group.node0, state.node_cat[None, :]].prod(axis=1)
        if group.iu.size:
            lik = lik * ke[group.pair0, state.edge_cat[group.iu, group.ju][None, :]].prod(axis=1)
        w = lik * group.weights
        total = w.sum()
        if total <= 0:
            raise OracleError("observation impossible under the family")
        w /= total

        node_probs = (w @ group.node_onehot).reshape(n, sp.a)
        edge_probs = np.zeros((n, n, sp.b))
        edge_probs[np.arange(n), np.arange(n), 0] = 1.0
        if group.iu.size:
            pair_probs = (w @ group.pair_onehot).reshape(-1, sp.b)
            edge_probs[group.iu, group.ju] = pair_probs
            edge_probs[group.ju, group.iu] = pair_probs
        time_probs = np.zeros((n, self.T + 1))
        time_probs[:, 0] = 1.0
        out = DenoiserOutput(node_probs, edge_probs, time_probs)
        self._cache[key] = out
        return out

    def predict_del_count(self, state: GraphState, t: int, guide=None) -> np.ndarray:
        return np.array([1.0, 0.0])


class InsertDeleteOracle:
    """Exact posterior for families whose size edits are at most one node."""

    def __init__(self, records, noise: NoiseModel, n_max: int, p_min: float, p_max: float):
        if not records:
            raise OracleError("empty family")
        self.space: CategorySpace = records[0].graph.space
        self.noise = noise
        self.kernels = _KernelCache(noise)
        self.members = _members_from_records(records)
        self.n_max = n_max
        self.p_min = p_min
        self.p_max = p_max
        for mem in self.members:
            n0 = mem.node0.shape[0]
            h = size_distribution(n0, n_max, p_min, p_max)
            support = np.nonzero(h > 0)[0] + 1
            if np.any(np.abs(support - n0) > 1):
                raise OracleError("family admits size edits larger than one node")
        self._cache: dict[tuple, tuple] = {}
        self.T = noise.schedule.T

    # -- hidden-branch enumeration -------------------------------------------------

    def _h(self, n0: int) -> np.ndarray:
        return size_distribution(n0, self.n_max, self.p_min, self.p_max)

    def _base_lik(self, mem: _Member, obs_nodes, obs_edges, align, t: int) -> float:
        """Likelihood of aligned original slots under the base chain.

        ``align`` maps observed slot -> index into the member's nodes; slots
        mapped to -1 are skipped (they are handled by the caller).
        """
        kx = self.kernels.node(0, t)
        ke = self.kernels.edge(0, t)
        lik = 1.0
        n = len(align)
        for i in range(n):
            gi = align[i]
            if gi < 0:
                continue
            lik *= kx[mem.node0[gi], obs_nodes[i]]
        for i in range(n):
            for j in range(i + 1, n):
                gi, gj = align[i], align[j]
                if gi < 0 or gj < 0:
                    continue
                lik *= ke[mem.edge0[gi, gj], obs_edges[i, j]]
        return lik

    def _enumerate(self, state: GraphState, t: int):
        """Yield (mass, contribution) pairs over every consistent hidden branch.

        ``contribution`` is a dict with optional keys describing what the
        branch implies for the outputs:

        * ``align``: observed slot -> member node (or -1)
        * ``member``: the family member
        * ``deleted_now``: 1 when a node is in DEL* at t (count head)
        * ``insert_slot``/``insert_node_post``/``insert_time_post``/
          ``insert_edge_post``: origin/time posteriors of an inserted slot
        """
        sp = self.space
        zeta = self.noise.schedule.zeta
        zeta_prime = self.noise.schedule.zeta_prime
        obs_nodes = state.node_cat
        obs_edges = state.edge_cat
        n = state.n
        star_slots = np.nonzero(obs_nodes == sp.node_del_star)[0]
        if star_slots.size > 1:
            raise OracleError("at most one DEL* slot is consistent with this family")
        star = int(star_slots[0]) if star_slots.size else -1
        n_proper = n - (1 if star >= 0 else 0)

        for mem in self.members:
            n0 = mem.node0.shape[0]
            h = self._h(n0)

            def h_of(size):
                return h[size - 1] if 1 <= size <= self.n_max else 0.0

            # no edits
            if star < 0 and n == n0 and h_of(n0) > 0:
                mass = mem.weight * h_of(n0) * self._base_lik(mem, obs_nodes, obs_edges, list(range(n)), t)
                yield mass, {"align": list(range(n)), "member": mem, "deleted_now": 0}

            # one deletion
            if h_of(n0 - 1) > 0 and n0 >= 2:
                h_del = h_of(n0 - 1)
                if star < 0 and n == n0 and zeta[t] > 0:
                    # target still alive; category conditioned on survival is base
                    mass = mem.weight * h_del * zeta[t] * self._base_lik(
                        mem, obs_nodes, obs_edges, list(range(n)), t
                    )
                    yield mass, {"align": list(range(n)), "member": mem, "deleted_now": 0}
                if star >= 0 and n == n0 and zeta_prime[t] > 0:
                    # target is the DEL* slot; its origin is its own member node
                    align = list(range(n))
                    masked = [g if i != star else -1 for i, g in enumerate(align)]
                    mass = (
                        mem.weight * h_del * (1.0 / n0) * zeta_prime[t]
                        * self._base_lik(mem, obs_nodes, obs_edges, masked, t)
                    )
                    yield mass, {"align": align, "member": mem, "deleted_now": 1}
                if star < 0 and n == n0 - 1:
                    cdf_prev = 1.0 - zeta[t - 1]
                    if cdf_prev > 0:
                        for q in range(n0):
                            align = [g for g in range(n0) if g != q]
                            mass = (
                                mem.weight * h_del * (1.0 / n0) * cdf_prev
                                * self._base_lik(mem, obs_nodes, obs_edges, align, t)
                            )
                            yield mass, {"align": align, "member": mem, "deleted_now": 0}

            # one insertion
            if h_of(n0 + 1) > 0:
                h_ins = h_of(n0 + 1)
                if star < 0 and n == n0 and zeta[t] > 0:
                    mass = mem.weight * h_ins * zeta[t] * self._base_lik(
                        mem, obs_nodes, obs_edges, list(range(n)), t
                    )
                    yield mass, {"align": list(range(n)), "member": mem, "deleted_now": 0}
                if star < 0 and n == n0 + 1:
                    for p in range(n):
                        align = [-1] * n
                        gi = 0
                        for i in range(n):
                            if i == p:
                                continue
                            align[i] = gi
                            gi += 1
                        base = self._base_lik(mem, obs_nodes, obs_edges, align, t)
                        if base == 0.0:
                            continue
                        # joint over the insertion time and the hidden labels
                        time_post = np.zeros(self.T + 1)
                        node_post = np.zeros(sp.a)
                        edge_post = np.zeros((n, sp.b))
                        for u in range(1, t + 1):
                            pu = zeta_prime[u]
                            if pu == 0.0:
                                continue
                            kxu = self.kernels.node(u, t)
                            keu = self.kernels.edge(u, t)
                            node_lik_vec = mem.m_nodes * kxu[:, obs_nodes[p]]
                            term = node_lik_vec.sum()
                            edge_terms = []
                            for j in range(n):
                                if j == p:
                                    continue
                                vec = mem.m_edges * keu[:, obs_edges[p, j]]
                                edge_terms.append((j, vec))
                                term *= vec.sum()
                            contrib = pu * term
                            if contrib == 0.0:
                                continue
                            time_post[u] += contrib
                            node_post += pu * node_lik_vec * (
                                term / max(node_lik_vec.sum(), 1e-300)
                            )
                            for j, vec in edge_terms:
                                edge_post[j] += pu * vec * (term / max(vec.sum(), 1e-300))
                        total_time = time_post.sum()
                        if total_time == 0.0:
                            continue
                        mass = mem.weight * h_ins * (1.0 / n) * total_time * base
                        yield mass, {
                            "align": align,
                            "member": mem,
                            "deleted_now": 0,
                            "insert_slot": p,
                            "insert_time_post": time_post / total_time,
                            "insert_node_post": node_post / node_post.sum(),
                            "insert_edge_post": edge_post / np.maximum(
                                edge_post.sum(axis=1, keepdims=True), 1e-300
                            ),
                        }

    def predict(self, state: GraphState, guide, t: int) -> DenoiserOutput:
        sp = self.space
        key = ("p", t, state.n, state.node_cat.tobytes(), state.edge_cat.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        n = state.n
        node_probs = np.zeros((n, sp.a))
        edge_probs = np.zeros((n, n, sp.b))
        time_probs = np.zeros((n, self.T + 1))
        total = 0.0
        for mass, info in self._enumerate(state, t):
            if mass <= 0:
                continue
            total += mass
            mem = info["member"]
            align = info["align"]
            ins = info.get("insert_slot", -1)
            for i in range(n):
                if i == ins:
                    node_probs[i] += mass * info["insert_node_post"]
                    time_probs[i] += mass * info["insert_time_post"]
                else:
                    node_probs[i, mem.node0[align[i]]] += mass
                    time_probs[i, 0] += mass
                for j in range(i + 1, n):
                    if ins in (i, j):
                        other = j if ins == i else i
                        edge_probs[i, j] += mass * info["insert_edge_post"][other]
                    else:
                        edge_probs[i, j, mem.edge0[align[i], align[j]]] += mass
        if total <= 0:
            raise OracleError("observation impossible under the family")
        node_probs /= total
        time_probs /= total
        edge_probs /= total
        edge_probs = edge_probs + np.transpose(edge_probs, (1, 0, 2))
        edge_probs[np.arange(n), np.arange(n), 0] = 1.0
        out = DenoiserOutput(node_probs, edge_probs, time_probs)
        self._cache[key] = out
        return out

    def predict_del_count(self, state: GraphState, t: int, guide=None) -> np.ndarray:
        if state.has_reserved():
            raise OracleError("count head sees the graph before DEL* insertion")
        key = ("c", t, state.n, state.node_cat.tobytes(), state.edge_cat.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        sp = self.space
        zeta_prime = self.noise.schedule.zeta_prime
        obs_nodes = state.node_cat
        obs_edges = state.edge_cat
        n = state.n
        mass_k0 = 0.0
        for mass, info in self._enumerate(state, t):
            if mass > 0:
                mass_k0 += mass
        mass_k1 = 0.0
        if zeta_prime[t] > 0:
            for mem in self.members:
                n0 = mem.node0.shape[0]
                if n0 != n + 1:
                    continue
                h = self._h(n0)
                h_del = h[n0 - 2] if n0 - 1 >= 1 else 0.0
                if h_del == 0:
                    continue
                for q in range(n0):
                    align = [g for g in range(n0) if g != q]
                    mass_k1 += (
                        mem.weight * h_del * (1.0 / n0) * zeta_prime[t]
                        * self._base_lik(mem, obs_nodes, obs_edges, align, t)
                    )
        total = mass_k0 + mass_k1
        if total <= 0:
            raise OracleError("observation impossible under the family")
        out = np.array([mass_k0 / total, mass_k1 / total])
        self._cache[key] = out
        return out
