"""Run configuration: one JSON document driving every command.

Sections: ``seed``, ``dataset``, ``schedule``, ``model``, ``train``,
``sample``, ``eval``.  Unknown keys anywhere are rejected, so typos fail
loudly instead of silently falling back to defaults.

Defaults and their provenance
-----------------------------
Method defaults (the configuration the approach was introduced with):
``w=0.05``, ``D=T/2``, ``nu_nodes=1``, ``nu_edges=1.5``, ``p_min=0.2``,
``p_max=1``, ``lambda_node=1``, ``lambda_edge=2``, guidance scale ``2``,
optimization protocol ``candidates=20``, ``steps=100``, similarity threshold
``0.4``; reference experiments also used ``T=500``.

Implementation defaults (desk-scale choices of this package): ``T=50``,
``lambda_time=1``, ``lambda_del=1``, ``rho=0.1``, ``learning_rate=3e-4``,
``cosine_offset=0.008``, network width/depth, batch size and epochs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _check_keys(section: str, data: dict, allowed: set[str]) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in section {section!r}")


@dataclass(frozen=True)
class DatasetConfig:
    path: str | None = None
    toy_family: str | None = "enumerable"
    atom_types: tuple[str, ...] = ("C", "O")
    bond_types: tuple[str, ...] = ("no-bond", "single")
    max_nodes: int = 4
    splits: tuple[float, float, float] = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class ScheduleConfig:
    T: int = 50
    w: float = 0.05
    D: float | None = None
    nu_nodes: float = 1.0
    nu_edges: float = 1.5
    cosine_offset: float = 0.008


@dataclass(frozen=True)
class ModelConfigSection:
    hidden: int = 64
    layers: int = 2
    gphi_layers: int = 1
    k_max: int | None = None


@dataclass(frozen=True)
class TrainSection:
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
    guide_properties: tuple[str, ...] = ()
    size_mode: str = "edit"
    checkpoint_every: int = 0


@dataclass(frozen=True)
class SampleSection:
    size: int | str = "from-data"
    count: int = 16
    guidance: float = 2.0
    sample_heads: bool = True
    time_support: str = "future"


@dataclass(frozen=True)
class EvalSection:
    property: str = "mw"
    similarity_threshold: float = 0.4
    candidates: int = 20
    steps: int = 100
    success_window: tuple[float, float] | None = None
    target_delta: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelConfigSection = field(default_factory=ModelConfigSection)
    train: TrainSection = field(default_factory=TrainSection)
    sample: SampleSection = field(default_factory=SampleSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dataset"]["atom_types"] = list(self.dataset.atom_types)
        d["dataset"]["bond_types"] = list(self.dataset.bond_types)
        d["dataset"]["splits"] = list(self.dataset.splits)
        d["train"]["guide_properties"] = list(self.train.guide_properties)
        if self.eval.success_window is not None:
            d["eval"]["success_window"] = list(self.eval.success_window)
        return d


_SECTIONS = {
    "dataset": (DatasetConfig, {"path", "toy_family", "atom_types", "bond_types", "max_nodes", "splits"}),
    "schedule": (ScheduleConfig, {"T", "w", "D", "nu_nodes", "nu_edges", "cosine_offset"}),
    "model": (ModelConfigSection, {"hidden", "layers", "gphi_layers", "k_max"}),
    "train": (
        TrainSection,
        {
            "p_min", "p_max", "n_max", "lambda_node", "lambda_edge", "lambda_time",
            "lambda_del", "rho", "learning_rate", "batch_size", "epochs",
            "guide_properties", "size_mode", "checkpoint_every",
        },
    ),
    "sample": (SampleSection, {"size", "count", "guidance", "sample_heads", "time_support"}),
    "eval": (
        EvalSection,
        {"property", "similarity_threshold", "candidates", "steps", "success_window", "target_delta"},
    ),
}

_TUPLE_FIELDS = {
    ("dataset", "atom_types"),
    ("dataset", "bond_types"),
    ("dataset", "splits"),
    ("train", "guide_properties"),
    ("eval", "success_window"),
}


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be an object")
    _check_keys("<root>", data, {"seed"} | set(_SECTIONS))
    kwargs: dict = {"seed": int(data.get("seed", 0))}
    for name, (cls, allowed) in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be an object")
        _check_keys(name, section, allowed)
        fixed = {}
        for key, value in section.items():
            if (name, key) in _TUPLE_FIELDS and value is not None:
                value = tuple(value)
            fixed[key] = value
        try:
            kwargs[name] = cls(**fixed)
        except TypeError as exc:
            raise ConfigError(f"section {name!r}: {exc}") from None
    cfg = RunConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    sch = cfg.schedule
    if sch.T < 2:
        raise ConfigError("schedule.T must be at least 2")
    if sch.w <= 0:
        raise ConfigError("schedule.w must be positive")
    if sch.D is not None and not 0 < sch.D < sch.T:
        raise ConfigError("schedule.D must lie strictly inside (0, T)")
    tr = cfg.train
    if not 0 < tr.p_min <= tr.p_max:
        raise ConfigError("train needs 0 < p_min <= p_max")
    if not 0 <= tr.rho <= 1:
        raise ConfigError("train.rho must lie in [0, 1]")
    if tr.size_mode not in ("edit", "fixed"):
        raise ConfigError("train.size_mode must be 'edit' or 'fixed'")
    if tr.batch_size < 1 or tr.epochs < 0:
        raise ConfigError("train.batch_size must be positive and epochs non-negative")
    sm = cfg.sample
    if isinstance(sm.size, str) and sm.size != "from-data":
        raise ConfigError("sample.size must be an integer or 'from-data'")
    if sm.time_support not in ("future", "past"):
        raise ConfigError("sample.time_support must be 'future' or 'past'")
    ev = cfg.eval
    if ev.steps < 0:
        raise ConfigError("eval.steps must be non-negative")
    if not 0 <= ev.similarity_threshold <= 1:
        raise ConfigError("eval.similarity_threshold must lie in [0, 1]")
    ds = cfg.dataset
    if ds.toy_family is not None and ds.toy_family not in ("enumerable", "chains"):
        raise ConfigError("dataset.toy_family must be 'enumerable' or 'chains'")
    if len(ds.splits) != 3 or abs(sum(ds.splits) - 1.0) > 1e-9:
        raise ConfigError("dataset.splits must be three fractions summing to 1")


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(data)


def train_config_from(cfg: RunConfig):
    from indeldiff.trainer import TrainConfig

    return TrainConfig(
        T=cfg.schedule.T,
        w=cfg.schedule.w,
        D=cfg.schedule.D,
        nu_nodes=cfg.schedule.nu_nodes,
        nu_edges=cfg.schedule.nu_edges,
        cosine_offset=cfg.schedule.cosine_offset,
        p_min=cfg.train.p_min,
        p_max=cfg.train.p_max,
        n_max=cfg.train.n_max,
        lambda_node=cfg.train.lambda_node,
        lambda_edge=cfg.train.lambda_edge,
        lambda_time=cfg.train.lambda_time,
        lambda_del=cfg.train.lambda_del,
        rho=cfg.train.rho,
        learning_rate=cfg.train.learning_rate,
        batch_size=cfg.train.batch_size,
        epochs=cfg.train.epochs,
        seed=cfg.seed,
        guide_properties=cfg.train.guide_properties,
        hidden=cfg.model.hidden,
        layers=cfg.model.layers,
        gphi_layers=cfg.model.gphi_layers,
        k_max=cfg.model.k_max,
        size_mode=cfg.train.size_mode,
        checkpoint_every=cfg.train.checkpoint_every,
    )
