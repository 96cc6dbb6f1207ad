"""Forward corruption of a data graph, with monotonic size edits.

A :class:`ForwardPlan` freezes everything random about one trajectory except
the per-category noise: the target size, which nodes are deletion-marked (and
when), and the labels/positions/times of inserted nodes.  ``corrupt`` is then
a pure function of (plan, t, rng) and can be evaluated at any timestep of the
same trajectory.

Deletion-marked tracks show ``DEL*`` exactly at their edit time and ``DEL``
afterwards, and their rows stay in the tensor until the caller strips them.
Inserted tracks are absent before their activation time and evolve as proper
categories from a marginal-sampled initial label afterwards.  Edges activate
at the later of their endpoint activations and die with their first-deleted
endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from indeldiff import _kernels
from indeldiff.graph_core import GraphState, SampleMarginals, compute_sample_marginals
from indeldiff.schedules import ScheduleSet, sample_edit_timesteps, sample_target_size


class ForwardError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Schedule plus the dataset-level marginals used by the noising kernels."""

    schedule: ScheduleSet
    m_nodes: np.ndarray
    m_edges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m_nodes", np.asarray(self.m_nodes, dtype=np.float64))
        object.__setattr__(self, "m_edges", np.asarray(self.m_edges, dtype=np.float64))


@dataclass(frozen=True)
class SizeParams:
    n_max: int
    p_min: float = 0.2
    p_max: float = 1.0


@dataclass(frozen=True)
class ForwardPlan:
    """One frozen corruption trajectory for a single data graph.

    Arrays cover the *full* slot set: the original nodes plus every planned
    insertion, already arranged in their final order.  ``activation`` is 0
    for originals; ``delete_time`` is 0 for tracks never deleted.
    """

    n0: int
    n_target: int
    node0: np.ndarray
    edge0: np.ndarray
    activation: np.ndarray
    delete_time: np.ndarray

    @property
    def delta(self) -> int:
        return self.n_target - self.n0

    @property
    def edit_times(self) -> tuple[int, ...]:
        times = [int(u) for u in self.delete_time if u > 0]
        times += [int(u) for u in self.activation if u > 0]
        return tuple(sorted(times))


def make_forward_plan(
    graph: GraphState,
    schedule: ScheduleSet,
    size: SizeParams,
    rng: np.random.Generator,
    marginals: SampleMarginals | None = None,
) -> ForwardPlan:
    """Sample the target size, edit times, deletion targets or insertion specs."""
    if graph.has_reserved():
        raise ForwardError("forward plans start from clean data graphs")
    n0 = graph.n
    if n0 < 1:
        raise ForwardError("cannot corrupt an empty graph")
    n_target = sample_target_size(n0, size.n_max, size.p_min, size.p_max, rng)
    delta = n_target - n0
    node0 = graph.node_cat.copy()
    edge0 = graph.edge_cat.copy()
    activation = np.zeros(n0, dtype=np.int64)
    delete_time = np.zeros(n0, dtype=np.int64)

    if delta < 0:
        targets = rng.choice(n0, size=-delta, replace=False)
        times = sample_edit_timesteps(-delta, schedule, rng)
        delete_time[targets] = times
    elif delta > 0:
        if marginals is None:
            marginals = compute_sample_marginals(graph)
        times = sample_edit_timesteps(delta, schedule, rng)
        for u in times:
            n_cur = node0.shape[0]
            pos = int(rng.integers(0, n_cur + 1))
            label = int(rng.choice(marginals.m_nodes.shape[0], p=marginals.m_nodes))
            edge_labels = rng.choice(
                marginals.m_edges.shape[0], size=n_cur, p=marginals.m_edges
            ).astype(np.int64)
            node0 = np.insert(node0, pos, label)
            activation = np.insert(activation, pos, int(u))
            delete_time = np.insert(delete_time, pos, 0)
            grown = np.zeros((n_cur + 1, n_cur + 1), dtype=np.int64)
            old = [k for k in range(n_cur + 1) if k != pos]
            grown[np.ix_(old, old)] = edge0
            row = np.insert(edge_labels, pos, 0)
            grown[pos, :] = row
            grown[:, pos] = row
            edge0 = grown

    return ForwardPlan(n0, n_target, node0, edge0, activation, delete_time)


def _window_ratios(table: np.ndarray, starts: np.ndarray, t: int) -> np.ndarray:
    denom = table[starts]
    return np.divide(table[t], denom, out=np.zeros_like(denom), where=denom > 0)


@dataclass(frozen=True)
class CorruptResult:
    """Corrupted state plus the per-slot training targets."""

    state: GraphState
    origin_node: np.ndarray
    origin_edge: np.ndarray
    delete_time: np.ndarray


def corrupt(
    graph: GraphState,
    plan: ForwardPlan,
    t: int,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> CorruptResult:
    """Evaluate the planned trajectory at timestep ``t``."""
    sched = noise.schedule
    if not 1 <= t <= sched.T:
        raise ForwardError(f"timestep {t} outside [1, {sched.T}]")
    if graph.n != plan.n0:
        raise ForwardError("plan was built for a different graph")
    sp = graph.space

    present = plan.activation <= t
    node0 = plan.node0[present]
    act = plan.activation[present]
    dtime = plan.delete_time[present]
    n = node0.shape[0]

    node_table = sched.alpha_bar_table(sched.nu_nodes)
    edge_table = sched.alpha_bar_table(sched.nu_edges)

    abar_n = _window_ratios(node_table, act, t)
    node_cat = _kernels.corrupt_categories(
        node0, abar_n, noise.m_nodes, rng.random(n), rng.random(n)
    )

    iu, ju = np.triu_indices(n, k=1)
    e0 = plan.edge0[present][:, present]
    pair_start = np.maximum(act[iu], act[ju])
    abar_e = _window_ratios(edge_table, pair_start, t)
    pair_cat = _kernels.corrupt_categories(
        e0[iu, ju], abar_e, noise.m_edges, rng.random(iu.size), rng.random(iu.size)
    )
    edge_cat = np.zeros((n, n), dtype=np.int64)
    edge_cat[iu, ju] = pair_cat
    edge_cat[ju, iu] = pair_cat

    # deletion marks override the category noise
    starred = (dtime == t)
    absorbed = (dtime > 0) & (dtime < t)
    node_cat[starred] = sp.node_del_star
    node_cat[absorbed] = sp.node_del
    if starred.any() or absorbed.any():
        star_edge = starred[iu] | starred[ju]
        dead_edge = absorbed[iu] | absorbed[ju]
        edge_cat[iu[star_edge], ju[star_edge]] = sp.edge_del_star
        edge_cat[ju[star_edge], iu[star_edge]] = sp.edge_del_star
        edge_cat[iu[dead_edge], ju[dead_edge]] = sp.edge_del
        edge_cat[ju[dead_edge], iu[dead_edge]] = sp.edge_del

    state = GraphState(sp, node_cat, edge_cat, act, t)
    return CorruptResult(state, node0, e0, dtime)
