"""Command-line entry points.

Subcommands: ``train``, ``sample``, ``corrupt``, ``optimize``, ``eval``.
Every command is driven by a JSON run configuration plus a seed, and is
reproducible from (config, seed, input files) alone.  Exit codes: 0 ok,
2 configuration error, 3 checkpoint/config compatibility error, 4 runtime
error; failures print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from indeldiff import chem, protocols
from indeldiff.checkpoint import CheckpointError
from indeldiff.config import ConfigError, RunConfig, load_config, train_config_from
from indeldiff.dataset import (
    DatasetError,
    ToySpec,
    graph_to_obj,
    load_jsonl,
    split_dataset,
    generate_toy_dataset,
)
from indeldiff.forward_process import SizeParams, corrupt, make_forward_plan
from indeldiff.graph_core import CategorySpace, GraphError
from indeldiff.sampler import SampleConfig, SamplerError, optimize, sample
from indeldiff.trainer import TrainError, fit, load_trained

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPAT = 3
EXIT_RUNTIME = 4


class CompatError(RuntimeError):
    pass


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": message, "kind": kind}) + "\n")
    return code


def _space_from_config(cfg: RunConfig) -> CategorySpace:
    return CategorySpace(tuple(cfg.dataset.atom_types), tuple(cfg.dataset.bond_types))


def _load_records(cfg: RunConfig):
    if cfg.dataset.path:
        return load_jsonl(cfg.dataset.path, _space_from_config(cfg))
    if cfg.dataset.toy_family is None:
        raise ConfigError("dataset needs either a path or a toy_family")
    spec = ToySpec(
        family=cfg.dataset.toy_family,
        atom_types=tuple(cfg.dataset.atom_types),
        bond_types=tuple(cfg.dataset.bond_types),
        max_nodes=cfg.dataset.max_nodes,
    )
    return generate_toy_dataset(spec)


def _check_compat(cfg: RunConfig, model) -> None:
    space = _space_from_config(cfg)
    if tuple(model.space.node_types) != tuple(space.node_types) or tuple(
        model.space.edge_types
    ) != tuple(space.edge_types):
        raise CompatError("checkpoint category space does not match the configuration")
    if model.train_config.T != cfg.schedule.T:
        raise CompatError(
            f"checkpoint was trained with T={model.train_config.T}, config says {cfg.schedule.T}"
        )


def _parse_guides(pairs, model):
    if not pairs:
        return None
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--guide expects name=value, got {pair!r}")
        name, raw = pair.split("=", 1)
        values[name] = float(raw)
    names = model.guide_norm.names
    if not names:
        raise CompatError("checkpoint holds an unconditional model; it accepts no --guide")
    missing = set(names) - set(values)
    if missing:
        raise ConfigError(f"missing guide properties: {sorted(missing)}")
    extra = set(values) - set(names)
    if extra:
        raise CompatError(f"model does not condition on: {sorted(extra)}")
    return model.guide_norm.vector(values)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    records = _load_records(cfg)
    train, val, _ = split_dataset(records, cfg.dataset.splits)
    fit(
        train or records,
        train_config_from(cfg),
        val_dataset=val,
        checkpoint_path=args.checkpoint,
        log_path=args.log,
        resume_from=args.resume,
    )
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    model = load_trained(args.checkpoint)
    _check_compat(cfg, model)
    guide = _parse_guides(args.guide, model)
    guidance = cfg.sample.guidance if args.guidance_scale is None else args.guidance_scale
    count = cfg.sample.count if args.count is None else args.count
    if args.size is not None:
        size: int | str = args.size
    elif args.size_from_data:
        size = "from-data"
    else:
        size = cfg.sample.size
    seed0 = cfg.seed if args.seed is None else args.seed
    p_n = np.asarray(model.stats_dict["p_n"], dtype=np.float64)

    graphs, diags = [], []
    for i in range(count):
        sample_cfg = SampleConfig(
            size=size,
            guide=guide,
            guidance=guidance,
            seed=seed0 + i,
            sample_heads=cfg.sample.sample_heads,
            time_support=cfg.sample.time_support,
            max_size=model.model_config.n_max,
        )
        g, d = sample(model.denoiser(), model.space, model.noise, p_n, sample_cfg)
        graphs.append(g)
        diags.append(d)

    table = chem.ValenceTable()
    with open(args.out, "w", encoding="utf-8") as fh:
        for g in graphs:
            props = {}
            if g.n and not g.has_reserved():
                props = {
                    "mw": chem.molecular_weight(g, table),
                    "n": float(g.n),
                    "bond_order_sum": chem.bond_order_sum(g, table),
                }
            fh.write(json.dumps(graph_to_obj(g, props), sort_keys=True) + "\n")
    if args.diagnostics:
        payload = {
            "config": cfg.to_dict(),
            "seed0": seed0,
            "count": count,
            "guidance": guidance,
            "chains": [d.to_dict() for d in diags],
            "quality": protocols.sample_quality_report([g for g in graphs if g.n > 0]),
        }
        Path(args.diagnostics).write_text(json.dumps(payload, sort_keys=True, indent=1))
    return EXIT_OK


def cmd_corrupt(args) -> int:
    cfg = load_config(args.config)
    space = _space_from_config(cfg)
    records = load_jsonl(args.dataset, space)
    from indeldiff.schedules import build_schedules
    from indeldiff.forward_process import NoiseModel
    from indeldiff.dataset import compute_dataset_stats

    schedule = build_schedules(
        cfg.schedule.T, cfg.schedule.w, cfg.schedule.D,
        cfg.schedule.nu_nodes, cfg.schedule.nu_edges, cfg.schedule.cosine_offset,
    )
    stats = compute_dataset_stats(records)
    noise = NoiseModel(schedule, stats.m_nodes, stats.m_edges)
    n_max = cfg.train.n_max if cfg.train.n_max is not None else stats.n_max
    size = SizeParams(n_max=n_max, p_min=cfg.train.p_min, p_max=cfg.train.p_max)
    if not 1 <= args.t <= cfg.schedule.T:
        raise ConfigError(f"--t must lie in [1, {cfg.schedule.T}]")
    rng = np.random.default_rng(cfg.seed if args.seed is None else args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for rec in records:
            plan = make_forward_plan(rec.graph, schedule, size, rng, rec.marginals)
            result = corrupt(rec.graph, plan, args.t, noise, rng)
            obj = graph_to_obj(result.state, rec.properties)
            obj["t"] = args.t
            obj["activation"] = result.state.activation.tolist()
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    model = load_trained(args.checkpoint)
    _check_compat(cfg, model)
    space = _space_from_config(cfg)
    seeds = load_jsonl(args.seeds, space)
    if not seeds:
        raise DatasetError("seeds file holds no graphs")
    steps = cfg.eval.steps if args.steps is None else args.steps
    candidates = cfg.eval.candidates if args.candidates is None else args.candidates
    delta = cfg.eval.similarity_threshold if args.delta is None else args.delta
    target_delta = cfg.eval.target_delta if args.target_delta is None else args.target_delta
    prop_name = cfg.eval.property if args.property is None else args.property
    if steps > cfg.schedule.T:
        raise ConfigError(f"corruption steps {steps} exceed T={cfg.schedule.T}")

    table = chem.ValenceTable()
    prop_fns = {
        "mw": lambda g: chem.molecular_weight(g, table),
        "n": lambda g: float(g.n),
        "bond_order_sum": lambda g: chem.bond_order_sum(g, table),
    }
    if prop_name not in prop_fns:
        raise ConfigError(f"unknown property {prop_name!r}; choose from {sorted(prop_fns)}")
    prop_fn = prop_fns[prop_name]
    n_max = model.model_config.n_max
    size = SizeParams(n_max=n_max, p_min=cfg.train.p_min, p_max=cfg.train.p_max)

    seed_graph_props = [rec.properties for rec in seeds]

    def optimizer(seed_graph, seed_index):
        target = {name: seed_graph_props[seed_index].get(name, 0.0) for name in model.guide_norm.names}
        if prop_name in target:
            target[prop_name] = prop_fn(seed_graph) + target_delta
        guide = model.guide_norm.vector(target) if model.guide_norm.names else None
        sample_cfg = SampleConfig(
            guide=guide,
            guidance=cfg.sample.guidance,
            seed=cfg.seed * 1_000_003 + seed_index,
            sample_heads=cfg.sample.sample_heads,
            time_support=cfg.sample.time_support,
            max_size=n_max,
        )
        results = optimize(seed_graph, model.denoiser(), model.noise, size, sample_cfg, steps, candidates)
        return [g for g, _ in results]
    mode = "success" if cfg.eval.success_window else "improvement"
    report = protocols.optimization_protocol(
        [rec.graph for rec in seeds],
        mode,
        optimizer,
        prop_fn,
        similarity_threshold=delta,
        success_window=cfg.eval.success_window,
        table=table,
    )
    report["config"] = cfg.to_dict()
    report["params"].update({"steps": steps, "candidates": candidates, "property": prop_name,
                             "target_delta": target_delta})
    Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=1))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    space = _space_from_config(cfg)
    out: dict = {"config": cfg.to_dict()}
    if args.samples:
        records = load_jsonl(args.samples, space)
        graphs = [r.graph for r in records]
        out["samples"] = protocols.sample_quality_report(graphs)
        # plot-ready validity-by-size curve
        by_size: dict[int, list] = {}
        for g in graphs:
            by_size.setdefault(g.n, []).append(g)
        out["validity_by_size"] = {
            str(n): {"count": len(gs), "validity": protocols.validity_rate(gs)}
            for n, gs in sorted(by_size.items())
        }
    reports = []
    for path in args.report or []:
        reports.append(json.loads(Path(path).read_text()))
    if reports:
        out["reports"] = [
            {"protocol": r.get("protocol"), "aggregates": r.get("aggregates")} for r in reports
        ]
    Path(args.out).write_text(json.dumps(out, sort_keys=True, indent=1))
    if args.csv:
        rows = []
        if "samples" in out:
            for key, value in out["samples"].items():
                rows.append(("samples", key, value))
        for n, entry in out.get("validity_by_size", {}).items():
            rows.append((f"size{n}", "validity", entry["validity"]))
            rows.append((f"size{n}", "count", entry["count"]))
        for i, r in enumerate(out.get("reports", [])):
            for key, value in (r["aggregates"] or {}).items():
                rows.append((f"report{i}:{r['protocol']}", key, value))
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source", "metric", "value"])
            writer.writerows(rows)
    text = ["metric                         value"]
    if "samples" in out:
        for key, value in out["samples"].items():
            text.append(f"samples/{key:<22} {value}")
    for i, r in enumerate(out.get("reports", [])):
        for key, value in (r["aggregates"] or {}).items():
            text.append(f"{r['protocol']}/{key:<20} {value}")
    sys.stdout.write("\n".join(text) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="indeldiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a run configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log")
    p.add_argument("--resume")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="draw graphs from a trained model")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--size", type=int)
    group.add_argument("--size-from-data", action="store_true")
    p.add_argument("--guide", action="append", metavar="NAME=VALUE")
    p.add_argument("--guidance-scale", type=float)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("corrupt", help="apply the forward process to a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("optimize", help="corrupt-then-denoise property optimization")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--candidates", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--target-delta", type=float)
    p.add_argument("--property")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("eval", help="aggregate metrics from samples and reports")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples")
    p.add_argument("--report", action="append")
    p.add_argument("--csv")
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DatasetError, GraphError) as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (CompatError, CheckpointError) as exc:
        return _fail("compat", str(exc), EXIT_COMPAT)
    except (TrainError, SamplerError, ValueError, OSError) as exc:
        return _fail("runtime", str(exc), EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
