"""End-to-end training: draw a timestep, corrupt, predict, backpropagate.

One training step per sample: ``t ~ Uniform(1, T)``, a fresh forward plan
(target size, edit times, insertion specs), corruption, conditional dropout
of the guide, the weighted cross-entropy loss and an Adam update.  Everything
is driven by a single seeded generator so (seed, config, dataset) fully
determines the parameter trajectory.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from indeldiff import checkpoint as ckpt
from indeldiff import denoiser as dn
from indeldiff.dataset import DatasetRecord, compute_dataset_stats
from indeldiff.forward_process import (
    ForwardPlan,
    NoiseModel,
    SizeParams,
    corrupt,
    make_forward_plan,
)
from indeldiff.graph_core import CategorySpace, GraphState
from indeldiff.schedules import ScheduleSet, build_schedules


class TrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    T: int = 50
    w: float = 0.05
    D: float | None = None
    nu_nodes: float = 1.0
    nu_edges: float = 1.5
    cosine_offset: float = 0.008
    p_min: float = 0.2
    p_max: float = 1.0
    n_max: int | None = None
    lambda_node: float = 1.0
    lambda_edge: float = 2.0
    lambda_time: float = 1.0
    lambda_del: float = 1.0
    rho: float = 0.1
    learning_rate: float = 3e-4
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0
    guide_properties: tuple[str, ...] = ()
    hidden: int = 64
    layers: int = 2
    gphi_layers: int = 1
    k_max: int | None = None
    size_mode: str = "edit"  # "edit" draws target sizes; "fixed" keeps n constant
    checkpoint_every: int = 0  # epochs between periodic checkpoints; 0 = final only

    def to_dict(self) -> dict:
        d = asdict(self)
        d["guide_properties"] = list(self.guide_properties)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["guide_properties"] = tuple(d.get("guide_properties", ()))
        return cls(**d)


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(
    params: dict, grads: dict, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8
) -> None:
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = state.m[name] / (1 - beta1**t)
        v_hat = state.v[name] / (1 - beta2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass(frozen=True)
class GuideNorm:
    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def vector(self, properties: dict[str, float]) -> np.ndarray | None:
        if not self.names:
            return None
        raw = np.array([properties[n] for n in self.names], dtype=np.float64)
        return (raw - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GuideNorm":
        return cls(tuple(d["names"]), np.asarray(d["mean"]), np.asarray(d["std"]))


def build_guide_norm(records, names: tuple[str, ...]) -> GuideNorm:
    if not names:
        return GuideNorm((), np.zeros(0), np.ones(0))
    values = np.array([[rec.properties[n] for n in names] for rec in records])
    std = values.std(axis=0)
    std[std == 0] = 1.0
    return GuideNorm(tuple(names), values.mean(axis=0), std)


@dataclass
class TrainedModel:
    params: dict
    model_config: dn.ModelConfig
    train_config: TrainConfig
    schedule: ScheduleSet
    noise: NoiseModel
    stats_dict: dict
    guide_norm: GuideNorm
    space: CategorySpace

    def denoiser(self) -> dn.NeuralDenoiser:
        return dn.NeuralDenoiser(self.params, self.model_config)


def _targets_from_corruption(result, schedule: ScheduleSet, space: CategorySpace, t: int):
    """Strip absorbed rows, keep DEL* rows, and assemble the loss targets."""
    state = result.state
    keep = state.node_cat != space.node_del
    node_cat = state.node_cat[keep]
    edge_cat = state.edge_cat[np.ix_(keep, keep)]
    pred_state = GraphState(space, node_cat, edge_cat, state.activation[keep], t)
    targets = dn.TrainTargets(
        node=result.origin_node[keep],
        edge=result.origin_edge[np.ix_(keep, keep)],
        time=state.activation[keep],
        n_delstar=int(np.sum(node_cat == space.node_del_star)),
        count_gate=bool(schedule.zeta_prime[t] > 0),
    )
    return pred_state, targets


def train_step(
    batch: list[DatasetRecord],
    params: dict,
    adam: AdamState,
    model_config: dn.ModelConfig,
    config: TrainConfig,
    schedule: ScheduleSet,
    noise: NoiseModel,
    size: SizeParams,
    guide_norm: GuideNorm,
    rng: np.random.Generator,
) -> dict:
    """One optimizer step over a batch; returns the loss breakdown."""
    weights = dn.LossWeights(
        config.lambda_node, config.lambda_edge, config.lambda_time, config.lambda_del
    )
    for p in params.values():
        p.grad = None
    totals = {"node": 0.0, "edge": 0.0, "time": 0.0, "del_count": 0.0}
    total_loss = 0.0
    t_drawn = []
    for rec in batch:
        t = int(rng.integers(1, config.T + 1))
        t_drawn.append(t)
        if config.size_mode == "fixed":
            n0 = rec.graph.n
            plan = ForwardPlan(
                n0,
                n0,
                rec.graph.node_cat.copy(),
                rec.graph.edge_cat.copy(),
                np.zeros(n0, dtype=np.int64),
                np.zeros(n0, dtype=np.int64),
            )
        else:
            plan = make_forward_plan(rec.graph, schedule, size, rng, rec.marginals)
        result = corrupt(rec.graph, plan, t, noise, rng)
        pred_state, targets = _targets_from_corruption(result, schedule, rec.graph.space, t)
        guide = dn.apply_conditional_dropout(guide_norm.vector(rec.properties), config.rho, rng)
        loss, breakdown = dn.loss_terms(params, model_config, pred_state, guide, t, targets, weights)
        if not np.isfinite(float(loss.data)):
            raise TrainError(
                "non-finite loss; offending sample: "
                + json.dumps({"t": t, "n": pred_state.n, "breakdown": breakdown})
            )
        loss.backward()
        total_loss += float(loss.data)
        for k in totals:
            totals[k] += breakdown[k]
    scale = 1.0 / len(batch)
    grads = {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data)) * scale
        for name, p in params.items()
    }
    adam_update(params, grads, adam, config.learning_rate)
    metrics = {k: v * scale for k, v in totals.items()}
    metrics["total"] = total_loss * scale
    metrics["t_drawn"] = t_drawn
    return metrics


def validation_ce(
    records,
    params,
    model_config,
    config: TrainConfig,
    schedule,
    noise,
    size,
    guide_norm,
    seed: int,
) -> dict:
    """Node/edge cross-entropies on held-out records at seeded timesteps."""
    rng = np.random.default_rng(seed)
    weights = dn.LossWeights(1.0, 1.0, 1.0, 1.0)
    node_ces, edge_ces = [], []
    for rec in records:
        t = int(rng.integers(1, config.T + 1))
        plan = make_forward_plan(rec.graph, schedule, size, rng, rec.marginals)
        result = corrupt(rec.graph, plan, t, noise, rng)
        pred_state, targets = _targets_from_corruption(result, schedule, rec.graph.space, t)
        guide = guide_norm.vector(rec.properties)
        _, breakdown = dn.loss_terms(params, model_config, pred_state, guide, t, targets, weights)
        node_ces.append(breakdown["node"])
        edge_ces.append(breakdown["edge"])
    return {
        "xce": float(np.mean(node_ces)) if node_ces else float("nan"),
        "ece": float(np.mean(edge_ces)) if edge_ces else float("nan"),
    }


def fit(
    dataset: list[DatasetRecord],
    config: TrainConfig,
    val_dataset: list[DatasetRecord] | None = None,
    checkpoint_path=None,
    log_path=None,
    resume_from=None,
) -> TrainedModel:
    """Run the full training loop and return the trained bundle.

    With ``epochs == 0`` the initialized parameters are returned (and
    checkpointed) untouched.  ``resume_from`` restores parameters, optimizer
    moments and the rng state, continuing the exact trajectory.
    """
    if not dataset:
        raise TrainError("cannot fit on an empty dataset")
    space = dataset[0].graph.space
    stats = compute_dataset_stats(dataset)
    n_max = config.n_max if config.n_max is not None else stats.n_max
    if n_max < stats.n_max:
        raise TrainError(f"n_max={n_max} below the largest dataset graph ({stats.n_max})")
    schedule = build_schedules(
        config.T, config.w, config.D, config.nu_nodes, config.nu_edges, config.cosine_offset
    )
    noise = NoiseModel(schedule, stats.m_nodes, stats.m_edges)
    size = SizeParams(n_max=n_max, p_min=config.p_min, p_max=config.p_max)
    guide_norm = build_guide_norm(dataset, config.guide_properties)
    model_config = dn.ModelConfig(
        n_node_types=space.a,
        n_edge_types=space.b,
        T=config.T,
        n_max=n_max,
        guide_dim=len(config.guide_properties),
        hidden=config.hidden,
        layers=config.layers,
        gphi_layers=config.gphi_layers,
        k_max=config.k_max,
        init_seed=config.seed,
    )

    start_epoch = 0
    adam = AdamState()
    rng = np.random.default_rng(config.seed)
    if resume_from is not None:
        doc = ckpt.load_checkpoint(resume_from)
        params = doc["params"]
        model_config = doc["model_config"]
        if doc["adam"] is not None:
            adam = AdamState(doc["adam"]["step"], doc["adam"]["m"], doc["adam"]["v"])
        start_epoch = doc["epoch"]
        if doc["rng_state"] is not None:
            rng.bit_generator.state = doc["rng_state"]
    else:
        params = dn.init_params(model_config)

    stats_dict = stats.to_dict()
    space_dict = {"node_types": list(space.node_types), "edge_types": list(space.edge_types)}

    def write_checkpoint(epoch: int):
        if checkpoint_path is None:
            return
        ckpt.save_checkpoint(
            checkpoint_path,
            params,
            model_config,
            config.to_dict(),
            stats_dict,
            guide_norm.to_dict(),
            space_dict,
            epoch,
            {"step": adam.step, "m": adam.m, "v": adam.v},
            rng.bit_generator.state,
        )

    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    step = 0
    try:
        if config.epochs == 0:
            write_checkpoint(0)
        for epoch in range(start_epoch, config.epochs):
            order = rng.permutation(len(dataset))
            for lo in range(0, len(dataset), config.batch_size):
                batch = [dataset[i] for i in order[lo : lo + config.batch_size]]
                started = time.perf_counter()
                metrics = train_step(
                    batch, params, adam, model_config, config, schedule, noise, size, guide_norm, rng
                )
                step += 1
                if log_fh:
                    record = {
                        "step": step,
                        "epoch": epoch,
                        "t_drawn": metrics.pop("t_drawn"),
                        "loss": {k: metrics[k] for k in ("total", "node", "edge", "time", "del_count")},
                        "wall_time": time.perf_counter() - started,
                    }
                    log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            if val_dataset:
                val = validation_ce(
                    val_dataset, params, model_config, config, schedule, noise, size,
                    guide_norm, seed=config.seed + 7919 + epoch,
                )
                if log_fh:
                    log_fh.write(json.dumps({"epoch": epoch, "validation": val}, sort_keys=True) + "\n")
            if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                write_checkpoint(epoch + 1)
        write_checkpoint(config.epochs)
    finally:
        if log_fh:
            log_fh.close()

    return TrainedModel(params, model_config, config, schedule, noise, stats_dict, guide_norm, space)


def load_trained(path) -> TrainedModel:
    doc = ckpt.load_checkpoint(path)
    config = TrainConfig.from_dict(doc["train_config"])
    schedule = build_schedules(
        config.T, config.w, config.D, config.nu_nodes, config.nu_edges, config.cosine_offset
    )
    stats = doc["dataset_stats"]
    noise = NoiseModel(schedule, np.asarray(stats["m_nodes"]), np.asarray(stats["m_edges"]))
    space = CategorySpace(tuple(doc["space"]["node_types"]), tuple(doc["space"]["edge_types"]))
    return TrainedModel(
        doc["params"],
        doc["model_config"],
        config,
        schedule,
        noise,
        stats,
        GuideNorm.from_dict(doc["guide_norm"]),
        space,
    )
