"""The prediction contract and its trainable implementation.

A denoiser maps a noisy graph (possibly containing transient ``DEL*`` rows,
never absorbed ``DEL`` rows) to distributions over the *proper* categories
each node/edge had at its activation time, a distribution over each node's
activation time, and -- through a separate auxiliary network -- a distribution
over how many ``DEL*`` nodes to reinsert at the current step.

The main network is a small stack of edge-conditioned attention layers: node
messages are modulated feature-wise by edge embeddings, attention logits get
an additive edge term, and the aggregated update is modulated by a global
feature built from the timestep, the current size, and the (optional)
conditioning vector.  Everything is tanh-based so finite-difference gradient
checks stay sharp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from indeldiff import autodiff as ad
from indeldiff.autodiff import Tensor
from indeldiff.graph_core import GraphState, strip_marked_nodes


class DenoiserError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_node_types: int
    n_edge_types: int
    T: int
    n_max: int
    guide_dim: int = 0
    hidden: int = 64
    layers: int = 2
    gphi_layers: int = 1
    k_max: int | None = None
    init_seed: int = 0

    def __post_init__(self):
        if self.k_max is None:
            object.__setattr__(self, "k_max", self.n_max)

    @property
    def node_in(self) -> int:
        return self.n_node_types + 2

    @property
    def edge_in(self) -> int:
        return self.n_edge_types + 2

    @property
    def global_in(self) -> int:
        # t/T, n/n_max, sin and cos of the phase, plus the conditioning vector
        return 4 + self.guide_dim

    def to_dict(self) -> dict:
        return {
            "n_node_types": self.n_node_types,
            "n_edge_types": self.n_edge_types,
            "T": self.T,
            "n_max": self.n_max,
            "guide_dim": self.guide_dim,
            "hidden": self.hidden,
            "layers": self.layers,
            "gphi_layers": self.gphi_layers,
            "k_max": self.k_max,
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(frozen=True)
class DenoiserOutput:
    node_probs: np.ndarray  # (n, a)
    edge_probs: np.ndarray  # (n, n, b), symmetric
    time_probs: np.ndarray  # (n, T+1)


def _glorot(rng, fan_in, fan_out):
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))


def _layer_names(prefix: str, n_layers: int):
    for layer in range(n_layers):
        yield f"{prefix}L{layer}"


def init_params(config: ModelConfig) -> dict[str, Tensor]:
    """Deterministic initialization of the main network, the heads, the
    auxiliary count network and the conditioning placeholder."""
    rng = np.random.default_rng(config.init_seed)
    h = config.hidden
    params: dict[str, Tensor] = {}

    def matrix(name, fan_in, fan_out, scale=1.0):
        params[name] = ad.parameter(scale * _glorot(rng, fan_in, fan_out))

    def bias(name, size):
        params[name] = ad.parameter(np.zeros(size))

    for net, n_layers in (("main", config.layers), ("gphi", config.gphi_layers)):
        matrix(f"{net}.node_embed", config.node_in, h)
        bias(f"{net}.node_bias", h)
        matrix(f"{net}.edge_embed", config.edge_in, h)
        bias(f"{net}.edge_bias", h)
        matrix(f"{net}.global_embed", config.global_in, h)
        bias(f"{net}.global_bias", h)
        for lp in _layer_names(f"{net}.", n_layers):
            matrix(f"{lp}.q", h, h)
            matrix(f"{lp}.k", h, h)
            matrix(f"{lp}.v", h, h)
            matrix(f"{lp}.att_edge", h, 1, scale=0.1)
            matrix(f"{lp}.film_gamma", h, h, scale=0.1)
            matrix(f"{lp}.film_beta", h, h, scale=0.1)
            matrix(f"{lp}.node_out", h, h)
            bias(f"{lp}.node_out_bias", h)
            matrix(f"{lp}.u_gamma", h, h, scale=0.1)
            matrix(f"{lp}.u_beta", h, h, scale=0.1)
            matrix(f"{lp}.edge_mix", h, h)
            matrix(f"{lp}.edge_src", h, h)
            matrix(f"{lp}.edge_dst", h, h)
            matrix(f"{lp}.edge_u", h, h, scale=0.1)
            bias(f"{lp}.edge_bias", h)

    matrix("head.node", h, config.n_node_types)
    bias("head.node_bias", config.n_node_types)
    matrix("head.time", h, config.T + 1)
    bias("head.time_bias", config.T + 1)
    matrix("head.edge", h, config.n_edge_types)
    bias("head.edge_bias", config.n_edge_types)
    matrix("head.count", h, config.k_max + 1)
    bias("head.count_bias", config.k_max + 1)

    if config.guide_dim > 0:
        params["placeholder"] = ad.parameter(rng.normal(0.0, 0.1, size=config.guide_dim))
    return params


def _global_features(config: ModelConfig, params, n: int, t: int, guide) -> Tensor:
    phase = t / config.T
    base = Tensor(
        np.array([[phase, n / max(config.n_max, 1), np.sin(2 * np.pi * phase), np.cos(2 * np.pi * phase)]])
    )
    if config.guide_dim == 0:
        return base
    if guide is None:
        gvec = ad.reshape(params["placeholder"], (1, config.guide_dim))
    else:
        guide = np.asarray(guide, dtype=np.float64).reshape(1, -1)
        if guide.shape[1] != config.guide_dim:
            raise DenoiserError(
                f"guide vector has {guide.shape[1]} entries, model expects {config.guide_dim}"
            )
        gvec = Tensor(guide)
    return ad.concat([base, gvec], axis=1)


def _encode(config: ModelConfig, state: GraphState):
    sp = state.space
    if sp.a != config.n_node_types or sp.b != config.n_edge_types:
        raise DenoiserError("category space does not match the model configuration")
    if np.any(state.node_cat == sp.node_del):
        raise DenoiserError("denoiser input must not contain absorbed DEL rows")
    return Tensor(state.X), Tensor(state.E)


def _stack(
    params, prefix: str, n_layers: int, X: Tensor, E: Tensor, U: Tensor, hidden: int
):
    n = X.shape[0]
    H = ad.add(ad.matmul(X, params[f"{prefix}.node_embed"]), params[f"{prefix}.node_bias"])
    F = ad.add(ad.matmul(E, params[f"{prefix}.edge_embed"]), params[f"{prefix}.edge_bias"])
    U = ad.add(ad.matmul(U, params[f"{prefix}.global_embed"]), params[f"{prefix}.global_bias"])
    inv_sqrt = 1.0 / np.sqrt(hidden)
    for lp in _layer_names(f"{prefix}.", n_layers):
        q = ad.matmul(H, params[f"{lp}.q"])
        k = ad.matmul(H, params[f"{lp}.k"])
        v = ad.matmul(H, params[f"{lp}.v"])
        logits = ad.add(
            ad.mul(ad.matmul(q, ad.transpose(k, (1, 0))), Tensor(inv_sqrt)),
            ad.reshape(ad.matmul(F, params[f"{lp}.att_edge"]), (n, n)),
        )
        att = ad.softmax(logits, axis=-1)
        gamma = ad.add(ad.matmul(F, params[f"{lp}.film_gamma"]), Tensor(1.0))
        beta = ad.matmul(F, params[f"{lp}.film_beta"])
        msg = ad.add(ad.mul(gamma, ad.reshape(v, (1, n, hidden))), beta)
        agg = ad.tsum(ad.mul(ad.reshape(att, (n, n, 1)), msg), axis=1)
        u_gamma = ad.add(ad.matmul(U, params[f"{lp}.u_gamma"]), Tensor(1.0))
        u_beta = ad.matmul(U, params[f"{lp}.u_beta"])
        node_update = ad.tanh(
            ad.add(
                ad.mul(
                    ad.add(ad.matmul(agg, params[f"{lp}.node_out"]), params[f"{lp}.node_out_bias"]),
                    u_gamma,
                ),
                u_beta,
            )
        )
        H = ad.add(H, node_update)
        edge_update = ad.tanh(
            ad.add(
                ad.add(
                    ad.add(
                        ad.matmul(F, params[f"{lp}.edge_mix"]),
                        ad.reshape(ad.matmul(H, params[f"{lp}.edge_src"]), (n, 1, hidden)),
                    ),
                    ad.reshape(ad.matmul(H, params[f"{lp}.edge_dst"]), (1, n, hidden)),
                ),
                ad.add(ad.matmul(U, params[f"{lp}.edge_u"]), params[f"{lp}.edge_bias"]),
            )
        )
        F = ad.add(F, edge_update)
    return H, F, U


def forward_logits(
    params, config: ModelConfig, state: GraphState, guide, t: int
) -> tuple[Tensor, Tensor, Tensor]:
    """Node, time and (symmetrized) edge logits of the main network."""
    X, E = _encode(config, state)
    U = _global_features(config, params, state.n, t, guide)
    H, F, _ = _stack(params, "main", config.layers, X, E, U, config.hidden)
    node_logits = ad.add(ad.matmul(H, params["head.node"]), params["head.node_bias"])
    time_logits = ad.add(ad.matmul(H, params["head.time"]), params["head.time_bias"])
    edge_raw = ad.add(ad.matmul(F, params["head.edge"]), params["head.edge_bias"])
    edge_logits = ad.mul(
        ad.add(edge_raw, ad.transpose(edge_raw, (1, 0, 2))), Tensor(0.5)
    )
    return node_logits, time_logits, edge_logits


def count_logits(params, config: ModelConfig, state: GraphState, guide, t: int) -> Tensor:
    """Auxiliary count head; its input graph must not contain DEL* rows."""
    state = strip_marked_nodes(state, "DEL*")
    if state.n == 0:
        # nothing to attend over: fall back to the bias row
        return ad.reshape(params["head.count_bias"], (1, config.k_max + 1))
    X, E = _encode(config, state)
    U = _global_features(config, params, state.n, t, guide)
    H, _, _ = _stack(params, "gphi", config.gphi_layers, X, E, U, config.hidden)
    pooled = ad.tmean(H, axis=0, keepdims=True)
    return ad.add(ad.matmul(pooled, params["head.count"]), params["head.count_bias"])


def predict(params, config: ModelConfig, state: GraphState, guide, t: int) -> DenoiserOutput:
    """Deterministic forward pass returning normalized distributions."""
    if state.n == 0:
        return DenoiserOutput(
            np.zeros((0, config.n_node_types)),
            np.zeros((0, 0, config.n_edge_types)),
            np.zeros((0, config.T + 1)),
        )
    node_logits, time_logits, edge_logits = forward_logits(params, config, state, guide, t)
    return DenoiserOutput(
        ad.softmax(node_logits, axis=-1).data,
        ad.softmax(edge_logits, axis=-1).data,
        ad.softmax(time_logits, axis=-1).data,
    )


def predict_del_count(params, config: ModelConfig, state: GraphState, t: int, guide=None) -> np.ndarray:
    return ad.softmax(count_logits(params, config, state, guide, t), axis=-1).data[0]


@dataclass(frozen=True)
class LossWeights:
    node: float = 1.0
    edge: float = 2.0
    time: float = 1.0
    del_count: float = 1.0


@dataclass(frozen=True)
class TrainTargets:
    """Per-sample targets: categories at activation time, activation times,
    and the DEL* count (with its training gate)."""

    node: np.ndarray
    edge: np.ndarray
    time: np.ndarray
    n_delstar: int
    count_gate: bool


def loss_terms(
    params,
    config: ModelConfig,
    state: GraphState,
    guide,
    t: int,
    targets: TrainTargets,
    weights: LossWeights,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted cross-entropy loss of one corrupted sample.

    The count term only contributes at timesteps where edits can occur
    (``count_gate``); the count network sees the graph with DEL* removed.
    """
    node_logits, time_logits, edge_logits = forward_logits(params, config, state, guide, t)
    n = state.n
    total = Tensor(0.0)
    breakdown: dict[str, float] = {}

    ce_node = ad.cross_entropy_mean(node_logits, targets.node)
    total = ad.add(total, ad.mul(Tensor(weights.node), ce_node))
    breakdown["node"] = float(ce_node.data)

    iu, ju = np.triu_indices(n, k=1)
    if iu.size:
        flat = ad.reshape(edge_logits, (n * n, config.n_edge_types))
        pair_logits = ad.take_rows(flat, iu * n + ju)
        ce_edge = ad.cross_entropy_mean(pair_logits, targets.edge[iu, ju])
        total = ad.add(total, ad.mul(Tensor(weights.edge), ce_edge))
        breakdown["edge"] = float(ce_edge.data)
    else:
        breakdown["edge"] = 0.0

    ce_time = ad.cross_entropy_mean(time_logits, targets.time)
    total = ad.add(total, ad.mul(Tensor(weights.time), ce_time))
    breakdown["time"] = float(ce_time.data)

    if targets.count_gate:
        logits_c = count_logits(params, config, state, guide, t)
        ce_count = ad.cross_entropy_mean(logits_c, np.array([targets.n_delstar]))
        total = ad.add(total, ad.mul(Tensor(weights.del_count), ce_count))
        breakdown["del_count"] = float(ce_count.data)
    else:
        breakdown["del_count"] = 0.0
    return total, breakdown


def apply_conditional_dropout(y, rho: float, rng: np.random.Generator):
    """Return ``None`` (meaning: use the learned placeholder) with probability
    ``rho``, otherwise the conditioning vector itself."""
    if not 0.0 <= rho <= 1.0:
        raise DenoiserError("dropout probability must lie in [0, 1]")
    if y is None:
        return None
    return None if rng.random() < rho else y


class NeuralDenoiser:
    """Bundles parameters and configuration behind the prediction contract."""

    def __init__(self, params: dict[str, Tensor], config: ModelConfig):
        self.params = params
        self.config = config

    def predict(self, state: GraphState, guide, t: int) -> DenoiserOutput:
        return predict(self.params, self.config, state, guide, t)

    def predict_del_count(self, state: GraphState, t: int, guide=None) -> np.ndarray:
        return predict_del_count(self.params, self.config, state, t, guide)
