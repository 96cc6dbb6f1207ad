"""Reverse process: from a noise latent of chosen size down to a clean graph.

Each step, from ``t = T`` to 1:

1. draw how many transient ``DEL*`` nodes to reinsert from the auxiliary
   count head and add them (uniform random positions, ``DEL*`` incident
   edges);
2. run the main denoiser (twice when guided: conditional and placeholder
   passes mixed by the guidance scale on the category heads);
3. sample an activation time per node from the restricted time head and
   remove the nodes whose sampled time equals ``t``;
4. resample every remaining node and edge category at ``t - 1`` from the
   generalized posterior (closed-form kernels).

Insertion happens before removal when the two heads conflict in the same
step; conflicts are counted and reported in the diagnostics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from indeldiff import _kernels
from indeldiff.forward_process import NoiseModel, SizeParams, corrupt, make_forward_plan
from indeldiff.graph_core import DEL, DEL_STAR, CategorySpace, GraphState, strip_marked_nodes
from indeldiff.posterior import guided_prediction


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SampleConfig:
    size: int | str = "from-data"  # explicit latent size, or draw from p(n)
    guide: np.ndarray | None = None  # normalized conditioning vector
    guidance: float = 2.0  # mixing scale; 0 ignores the guide entirely
    seed: int = 0
    sample_heads: bool = True  # False: argmax the count/time heads
    time_support: str = "future"  # "future": {0} u [t, T]; "past": {0} u [1, t]
    max_size: int | None = None  # cap on reinsert growth (checkpoint n_max)


@dataclass
class ChainDiagnostics:
    sizes: list[int] = field(default_factory=list)
    conflicts: int = 0
    inserted: int = 0
    removed: int = 0
    degenerate: bool = False
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "conflicts": self.conflicts,
            "inserted": self.inserted,
            "removed": self.removed,
            "degenerate": self.degenerate,
            "wall_time": self.wall_time,
        }


def _draw_latent(space: CategorySpace, n: int, noise: NoiseModel, t: int, rng) -> GraphState:
    node_cat = rng.choice(space.a, size=n, p=noise.m_nodes).astype(np.int64)
    edge_cat = np.zeros((n, n), dtype=np.int64)
    iu, ju = np.triu_indices(n, k=1)
    if iu.size:
        pairs = rng.choice(space.b, size=iu.size, p=noise.m_edges).astype(np.int64)
        edge_cat[iu, ju] = pairs
        edge_cat[ju, iu] = pairs
    return GraphState(space, node_cat, edge_cat, np.zeros(n, dtype=np.int64), t)


def _restricted_time_draw(
    probs: np.ndarray, t: int, T: int, rng, sample: bool, support: str
) -> np.ndarray:
    """Per-node activation draw from the time head, renormalized on the
    allowed support."""
    allowed = np.zeros(T + 1, dtype=bool)
    allowed[0] = True
    if support == "future":
        allowed[t:] = True
    elif support == "past":
        allowed[1 : t + 1] = True
    else:
        raise SamplerError(f"unknown time support {support!r}")
    masked = probs * allowed[None, :]
    totals = masked.sum(axis=1, keepdims=True)
    uniform = allowed.astype(np.float64) / allowed.sum()
    masked = np.where(totals > 0, masked / np.maximum(totals, 1e-300), uniform[None, :])
    if sample:
        return _kernels.sample_categorical(masked, rng.random(masked.shape[0]))
    return masked.argmax(axis=1)


def _insert_delstar(state: GraphState, k: int, rng) -> GraphState:
    sp = state.space
    node_cat = state.node_cat.copy()
    edge_cat = state.edge_cat.copy()
    act = state.activation.copy()
    for _ in range(k):
        n = node_cat.shape[0]
        pos = int(rng.integers(0, n + 1))
        node_cat = np.insert(node_cat, pos, sp.node_del_star)
        act = np.insert(act, pos, 0)
        grown = np.zeros((n + 1, n + 1), dtype=np.int64)
        old = [i for i in range(n + 1) if i != pos]
        grown[np.ix_(old, old)] = edge_cat
        grown[pos, :] = sp.edge_del_star
        grown[:, pos] = sp.edge_del_star
        grown[pos, pos] = 0
        edge_cat = grown
    return GraphState(sp, node_cat, edge_cat, act, state.t)


def _mix_heads(cond, uncond, lam: float):
    """Classifier-free mixing row by row on the category heads."""
    if uncond is None or lam == 1.0:
        return cond
    out = np.empty_like(cond)
    flat_c = cond.reshape(-1, cond.shape[-1])
    flat_u = uncond.reshape(-1, uncond.shape[-1])
    flat_o = out.reshape(-1, out.shape[-1])
    for i in range(flat_c.shape[0]):
        flat_o[i], _ = guided_prediction(flat_c[i], flat_u[i], lam)
    return out


def _safe_ratio(table: np.ndarray, s: np.ndarray, t: int) -> np.ndarray:
    denom = table[s]
    return np.divide(table[t], denom, out=np.zeros_like(denom), where=denom > 0)


def reverse_chain(
    denoiser,
    space: CategorySpace,
    noise: NoiseModel,
    start: GraphState,
    config: SampleConfig,
    rng: np.random.Generator,
    start_t: int | None = None,
    diagnostics: ChainDiagnostics | None = None,
) -> tuple[GraphState, ChainDiagnostics]:
    """Run the reverse loop from ``start`` (at ``start_t``, default T) to 0."""
    sched = noise.schedule
    T = sched.T
    t_top = T if start_t is None else start_t
    diag = diagnostics or ChainDiagnostics()
    state = start
    node_table = sched.alpha_bar_table(sched.nu_nodes)
    edge_table = sched.alpha_bar_table(sched.nu_edges)
    guided = config.guide is not None and config.guidance != 0.0
    guide = config.guide if guided else None
    started = time.perf_counter()

    for t in range(t_top, 0, -1):
        diag.sizes.append(state.n)
        if state.n == 0:
            diag.degenerate = True
            break

        # size edits can only have happened at supported edit times
        can_edit = sched.zeta_prime[t] > 0
        k = 0
        if can_edit:
            count_probs = denoiser.predict_del_count(state, t, guide)
            if config.sample_heads:
                k = int(_kernels.sample_categorical(count_probs[None, :], rng.random(1))[0])
            else:
                k = int(count_probs.argmax())
            if config.max_size is not None:
                k = min(k, max(0, config.max_size - state.n))
        if k > 0:
            state = _insert_delstar(state, k, rng)
            diag.inserted += k

        out = denoiser.predict(state, guide, t)
        node_probs, edge_probs, time_probs = out.node_probs, out.edge_probs, out.time_probs
        if guided and config.guidance != 1.0:
            out_un = denoiser.predict(state, None, t)
            node_probs = _mix_heads(node_probs, out_un.node_probs, config.guidance)
            edge_probs = _mix_heads(edge_probs, out_un.edge_probs, config.guidance)

        s_hat = _restricted_time_draw(
            time_probs, t, T, rng, config.sample_heads, config.time_support
        )
        remove = (s_hat == t) if can_edit else np.zeros(state.n, dtype=bool)
        if remove.any():
            diag.removed += int(remove.sum())
            if k > 0:
                diag.conflicts += 1
            keep = ~remove
            state = GraphState(
                space,
                state.node_cat[keep],
                state.edge_cat[np.ix_(keep, keep)],
                state.activation[keep],
                t,
            )
            node_probs = node_probs[keep]
            edge_probs = edge_probs[np.ix_(keep, keep)]
            s_hat = s_hat[keep]
        if state.n == 0:
            diag.degenerate = True
            break

        # windows open at the sampled activation when it is usable, else 0
        s_eff = np.where(s_hat <= t - 1, s_hat, 0).astype(np.int64)
        n = state.n
        alpha_node = float(_safe_ratio(node_table, np.array([t - 1]), t)[0])
        alpha_edge = float(_safe_ratio(edge_table, np.array([t - 1]), t)[0])

        new_nodes = _kernels.sample_categorical(
            _kernels.reverse_step_probs(
                state.node_cat,
                node_probs,
                _safe_ratio(node_table, s_eff, t),
                _safe_ratio(node_table, s_eff, t - 1),
                alpha_node,
                noise.m_nodes,
                space.node_del_star,
            ),
            rng.random(n),
        )

        iu, ju = np.triu_indices(n, k=1)
        new_edges = np.zeros((n, n), dtype=np.int64)
        if iu.size:
            pair_s = np.maximum(s_eff[iu], s_eff[ju])
            pair_probs = edge_probs[iu, ju]
            pairs = _kernels.sample_categorical(
                _kernels.reverse_step_probs(
                    state.edge_cat[iu, ju],
                    pair_probs,
                    _safe_ratio(edge_table, pair_s, t),
                    _safe_ratio(edge_table, pair_s, t - 1),
                    alpha_edge,
                    noise.m_edges,
                    space.edge_del_star,
                ),
                rng.random(iu.size),
            )
            new_edges[iu, ju] = pairs
            new_edges[ju, iu] = pairs
        state = GraphState(space, new_nodes, new_edges, np.zeros(n, dtype=np.int64), t - 1)

    diag.sizes.append(state.n)
    diag.wall_time = time.perf_counter() - started
    if not diag.degenerate and state.has_reserved():
        raise SamplerError("internal error: reserved categories in the final graph")
    return state, diag


def sample(
    denoiser,
    space: CategorySpace,
    noise: NoiseModel,
    p_n: np.ndarray,
    config: SampleConfig,
) -> tuple[GraphState, ChainDiagnostics]:
    """Draw a latent of the configured size and denoise it to t = 0."""
    rng = np.random.default_rng(config.seed)
    if config.size == "from-data":
        p = np.asarray(p_n, dtype=np.float64)
        n_t = int(rng.choice(p.shape[0], p=p / p.sum()))
    else:
        n_t = int(config.size)
    if n_t < 1:
        raise SamplerError("latent size must be at least 1")
    start = _draw_latent(space, n_t, noise, noise.schedule.T, rng)
    return reverse_chain(denoiser, space, noise, start, config, rng)


def sample_batch(
    denoiser, space, noise, p_n, configs: list[SampleConfig]
) -> tuple[list[GraphState], list[ChainDiagnostics]]:
    graphs, diags = [], []
    for cfg in configs:
        g, d = sample(denoiser, space, noise, p_n, cfg)
        graphs.append(g)
        diags.append(d)
    return graphs, diags


def optimize(
    source: GraphState,
    denoiser,
    noise: NoiseModel,
    size: SizeParams,
    config: SampleConfig,
    steps: int,
    candidates: int,
) -> list[tuple[GraphState, ChainDiagnostics]]:
    """Corrupt the source for ``steps`` timesteps, then denoise with the guide.

    Each candidate uses an independent sub-seed; ``steps == 0`` returns copies
    of the source.
    """
    sched = noise.schedule
    if not 0 <= steps <= sched.T:
        raise SamplerError(f"corruption steps must lie in [0, {sched.T}]")
    out = []
    for c in range(candidates):
        rng = np.random.default_rng((config.seed, c))
        if steps == 0:
            out.append((source, ChainDiagnostics(sizes=[source.n])))
            continue
        plan = make_forward_plan(source, sched, size, rng)
        result = corrupt(source, plan, steps, noise, rng)
        state = strip_marked_nodes(strip_marked_nodes(result.state, DEL), DEL_STAR)
        if state.n == 0:
            out.append((state, ChainDiagnostics(sizes=[0], degenerate=True)))
            continue
        state = GraphState(source.space, state.node_cat, state.edge_cat,
                           np.zeros(state.n, dtype=np.int64), steps)
        final, diag = reverse_chain(
            denoiser, source.space, noise, state, config, rng, start_t=steps
        )
        out.append((final, diag))
    return out
