"""Command-line entry point.

Subcommands: ``generate``, ``train``, ``diagnose``, ``verify-theorems``,
``bench-scaling``.  Every command resolves defaults, an optional JSON
config file (flat dotted keys), and flags, in that order of precedence;
writes a manifest before computing; and can be replayed bit-for-bit with
``--from-manifest``.

Environment: ``TARIF_DATA_DIR`` is the default root for dataset paths,
``TARIF_THREADS`` caps sweep worker threads.  Exit codes: 0 success,
1 verification or numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, plots, rng
from .bench import DEFAULT_SIZES, run_scaling
from .diagnostics import SNAPSHOT_NODE_CAP, report as diagnostics_report
from .errors import ConfigError, TarifError
from .graphs import SbmSpec, edge_homophily, generate_sbm, induced_subgraph, load_graph, save_graph, split
from .manifest import finalize_manifest, load_manifest, new_manifest, write_manifest
from .model import Model, TarifConfig, VARIANTS, load_checkpoint, save_checkpoint
from .theorems import run_all
from .train import TrainConfig, ablation_sweep, train

GENERATE_DEFAULTS = {
    "data.n": 400, "data.k": 4, "data.p_in": 0.1, "data.p_out": 0.01,
    "data.d": 16, "data.sigma": 0.5, "data.mean_scale": 1.0,
    "data.train_frac": 0.5, "data.val_frac": 0.25,
    "seed": 0,
}

TRAIN_DEFAULTS = {
    "data.path": "",
    "model.d_model": 32, "model.n_gnn_layers": 1, "model.n_attn_layers": 1,
    "model.lambda": 0.1, "model.alpha": 2.0, "model.beta": 1.0,
    "model.kernel": "sigmoid", "model.gat_heads": 1, "model.variant": "full",
    "train.epochs": 200, "train.learning_rate": 0.01, "train.weight_decay": 0.0,
    "train.patience": 50, "train.eval_every": 1, "train.metric": "accuracy",
    "ablation.enabled": False, "ablation.seeds": 5,
    "plots.enabled": True,
    "seed": 0,
}

DIAGNOSE_DEFAULTS = {
    "data.path": "", "diagnose.checkpoint": "", "diagnose.baseline_checkpoint": "",
    "diagnose.subsample": 0, "diagnose.rank_tol": 0.0, "diagnose.dump_maps": False,
    "plots.enabled": True,
    "seed": 0,
}

VERIFY_DEFAULTS = {
    "verify.theorem": "all", "verify.self_test_violation": False,
    "verify.trials_t1": 200, "verify.redraws_t1": 32,
    "verify.trials_t2": 100, "verify.redraws_t2": 200,
    "verify.trials_t4": 200,
    "plots.enabled": True,
    "seed": 0,
}

BENCH_DEFAULTS = {
    "bench.sizes": ",".join(str(s) for s in DEFAULT_SIZES),
    "bench.d_model": 64, "bench.avg_degree": 8, "bench.repeats": 3,
    "plots.enabled": True,
    "seed": 0,
}


def resolve_config(defaults: dict, config_path: str | None, flag_values: dict) -> dict:
    """defaults < config file < flags; unknown keys are usage errors."""
    resolved = dict(defaults)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must be a JSON object of dotted keys")
        for key, value in loaded.items():
            if key not in resolved:
                raise ConfigError(f"unknown config key {key!r}")
            resolved[key] = value
    for key, value in flag_values.items():
        if value is None:
            continue
        if key not in resolved:
            raise ConfigError(f"unknown config key {key!r}")
        resolved[key] = value
    return resolved


def data_root() -> Path | None:
    root = os.environ.get("TARIF_DATA_DIR")
    return Path(root) if root else None


def resolve_data_path(path: str) -> Path:
    if not path:
        raise ConfigError("a dataset path is required")
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    root = data_root()
    if root is not None and (root / p).exists():
        return root / p
    return p


def prepare_out_dir(out: str, force: bool) -> Path:
    if not out:
        raise ConfigError("--out is required")
    out_dir = Path(out)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise ConfigError(f"output directory {out_dir} is not empty; pass --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _maybe_from_manifest(args, command: str, resolved: dict) -> dict:
    if not getattr(args, "from_manifest", None):
        return resolved
    stored = load_manifest(args.from_manifest)
    if stored["command"] != command:
        raise ConfigError(
            f"manifest is for command {stored['command']!r}, not {command!r}")
    config = dict(stored["config"])
    for key in config:
        if key not in resolved:
            raise ConfigError(f"manifest carries unknown config key {key!r}")
    return {**resolved, **config}


# ---------------------------------------------------------------------------
# generate

def cmd_generate(args) -> int:
    flags = {
        "data.n": args.n, "data.k": args.k, "data.p_in": args.p_in,
        "data.p_out": args.p_out, "data.d": args.d, "data.sigma": args.sigma,
        "data.mean_scale": args.mean_scale, "data.train_frac": args.train_frac,
        "data.val_frac": args.val_frac, "seed": args.seed,
    }
    cfg = resolve_config(GENERATE_DEFAULTS, args.config, flags)
    cfg = _maybe_from_manifest(args, "generate", cfg)
    out_dir = prepare_out_dir(args.out, args.force)

    manifest = new_manifest("generate", cfg)
    write_manifest(out_dir, manifest)

    seed = int(cfg["seed"])
    spec = SbmSpec(n=int(cfg["data.n"]), k=int(cfg["data.k"]),
                   p_in=float(cfg["data.p_in"]), p_out=float(cfg["data.p_out"]),
                   feature_dim=int(cfg["data.d"]), mean_scale=float(cfg["data.mean_scale"]),
                   sigma=float(cfg["data.sigma"]), seed=seed)
    graph = generate_sbm(spec)
    graph = split(graph, float(cfg["data.train_frac"]), float(cfg["data.val_frac"]),
                  seed=rng.derive_seed(seed, rng.STREAM_SPLIT))
    save_graph(graph, out_dir)

    homophily = edge_homophily(graph)
    manifest["artifacts"] = {
        "graph_dir": ".",
        "nodes": graph.n,
        "edges": graph.num_edges,
        "classes": graph.num_classes,
        "edge_homophily": None if np.isnan(homophily) else homophily,
        "heterophilic": None if np.isnan(homophily) else bool(homophily < 1.0 / spec.k),
    }
    finalize_manifest(out_dir, manifest)
    print(f"wrote dataset with {graph.n} nodes / {graph.num_edges} edges to {out_dir}"
          f" (edge homophily {homophily:.3f})")
    return 0


# ---------------------------------------------------------------------------
# train

def _tarif_config(cfg: dict, seed: int) -> TarifConfig:
    base = TarifConfig(
        d_model=int(cfg["model.d_model"]),
        n_gnn_layers=int(cfg["model.n_gnn_layers"]),
        n_attn_layers=int(cfg["model.n_attn_layers"]),
        lam=float(cfg["model.lambda"]),
        alpha=float(cfg["model.alpha"]),
        beta=float(cfg["model.beta"]),
        kernel=str(cfg["model.kernel"]),
        gat_heads=int(cfg["model.gat_heads"]),
        seed=seed,
    )
    return base.with_variant(str(cfg["model.variant"]))


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=int(cfg["train.epochs"]),
        learning_rate=float(cfg["train.learning_rate"]),
        weight_decay=float(cfg["train.weight_decay"]),
        patience=int(cfg["train.patience"]),
        eval_every=int(cfg["train.eval_every"]),
        metric=str(cfg["train.metric"]),
        seed=seed,
    )


def write_train_log(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_metric", "test_metric", "seconds"])
        for row in rows:
            writer.writerow([row["epoch"], repr(row["train_loss"]),
                             repr(row["val_metric"]), repr(row["test_metric"]),
                             repr(row["seconds"])])


def cmd_train(args) -> int:
    flags = {
        "data.path": args.dataset,
        "model.d_model": args.d_model, "model.n_gnn_layers": args.gnn_layers,
        "model.n_attn_layers": args.attn_layers, "model.lambda": args.lam,
        "model.alpha": args.alpha, "model.beta": args.beta,
        "model.kernel": args.kernel, "model.gat_heads": args.gat_heads,
        "model.variant": args.variant,
        "train.epochs": args.epochs, "train.learning_rate": args.lr,
        "train.weight_decay": args.weight_decay, "train.patience": args.patience,
        "train.eval_every": args.eval_every, "train.metric": args.metric,
        "ablation.enabled": True if args.ablation else None,
        "ablation.seeds": args.seeds,
        "plots.enabled": False if args.no_plots else None,
        "seed": args.seed,
    }
    cfg = resolve_config(TRAIN_DEFAULTS, args.config, flags)
    cfg = _maybe_from_manifest(args, "train", cfg)
    if str(cfg["model.variant"]) not in VARIANTS:
        raise ConfigError(f"unknown variant {cfg['model.variant']!r}; "
                          f"choose from {sorted(VARIANTS)}")
    dataset = resolve_data_path(str(cfg["data.path"]))
    if not dataset.exists():
        raise ConfigError(f"dataset not found: {dataset}")
    cfg["data.path"] = str(dataset.resolve())
    out_dir = prepare_out_dir(args.out, args.force)

    manifest = new_manifest("train", cfg)
    write_manifest(out_dir, manifest)
    graph = load_graph(dataset)
    seed = int(cfg["seed"])

    artifacts: dict = {}
    if cfg["ablation.enabled"]:
        seeds = [seed + i for i in range(int(cfg["ablation.seeds"]))]
        summary = ablation_sweep(graph, _tarif_config(cfg, seed), _train_config(cfg, seed),
                                 seeds=seeds)
        sweep_path = out_dir / "sweep.json"
        sweep_path.write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True),
                              encoding="utf-8")
        artifacts["sweep"] = sweep_path.name
        if cfg["plots.enabled"]:
            fig = plots.render_safely(plots.sweep_bars, summary.by_variant,
                                      str(cfg["train.metric"]),
                                      out_dir / "figures" / "ablation.png")
            if fig:
                artifacts["ablation_figure"] = str(Path(fig).relative_to(out_dir))
        for variant, stats in summary.by_variant.items():
            print(f"{variant}: {stats['mean']:.4f} +/- {stats['std']:.4f} "
                  f"({stats['runs']} runs)")
    else:
        result, model = train(graph, _tarif_config(cfg, seed), _train_config(cfg, seed),
                              out_dir=out_dir)
        log_path = out_dir / "trainlog.csv"
        write_train_log(result.log_rows(), log_path)
        ckpt_dir = save_checkpoint(model, out_dir / "checkpoint")
        summary_path = out_dir / "summary.json"
        summary_path.write_text(json.dumps({
            "best_val": result.best_val, "best_epoch": result.best_epoch,
            "test_at_best": result.test_at_best, "epochs_run": len(result.epochs),
            "metric": cfg["train.metric"],
        }, indent=2, sort_keys=True), encoding="utf-8")
        artifacts.update({"trainlog": log_path.name, "checkpoint": ckpt_dir.name,
                          "summary": summary_path.name})
        if cfg["plots.enabled"]:
            fig = plots.render_safely(plots.training_curves, result.log_rows(),
                                      out_dir / "figures" / "training.png")
            if fig:
                artifacts["training_figure"] = str(Path(fig).relative_to(out_dir))
        print(f"best val {result.best_val:.4f} at epoch {result.best_epoch}; "
              f"test {result.test_at_best:.4f}")
    manifest["artifacts"] = artifacts
    finalize_manifest(out_dir, manifest)
    return 0


# ---------------------------------------------------------------------------
# diagnose

def cmd_diagnose(args) -> int:
    flags = {
        "data.path": args.dataset, "diagnose.checkpoint": args.checkpoint,
        "diagnose.baseline_checkpoint": args.baseline_checkpoint,
        "diagnose.subsample": args.subsample, "diagnose.rank_tol": args.rank_tol,
        "diagnose.dump_maps": True if args.dump_maps else None,
        "plots.enabled": False if args.no_plots else None,
        "seed": args.seed,
    }
    cfg = resolve_config(DIAGNOSE_DEFAULTS, args.config, flags)
    cfg = _maybe_from_manifest(args, "diagnose", cfg)
    dataset = resolve_data_path(str(cfg["data.path"]))
    if not dataset.exists():
        raise ConfigError(f"dataset not found: {dataset}")
    cfg["data.path"] = str(dataset.resolve())
    if not cfg["diagnose.checkpoint"]:
        raise ConfigError("--checkpoint is required")
    cfg["diagnose.checkpoint"] = str(Path(cfg["diagnose.checkpoint"]).resolve())
    if cfg["diagnose.baseline_checkpoint"]:
        cfg["diagnose.baseline_checkpoint"] = str(
            Path(cfg["diagnose.baseline_checkpoint"]).resolve())
    graph = load_graph(dataset)
    subsample = int(cfg["diagnose.subsample"])
    if graph.n > SNAPSHOT_NODE_CAP and not subsample:
        raise ConfigError(
            f"graph has {graph.n} nodes, above the explicit-map cap of "
            f"{SNAPSHOT_NODE_CAP}; pass --subsample K to diagnose a uniform sample")
    out_dir = prepare_out_dir(args.out, args.force)

    manifest = new_manifest("diagnose", cfg)
    write_manifest(out_dir, manifest)
    if subsample:
        if subsample > graph.n:
            raise ConfigError(f"--subsample {subsample} exceeds node count {graph.n}")
        picks = rng.stream(int(cfg["seed"]), rng.STREAM_SPLIT).choice(
            graph.n, size=subsample, replace=False)
        graph = induced_subgraph(graph, np.sort(picks))

    model = load_checkpoint(cfg["diagnose.checkpoint"])
    rel_tol = float(cfg["diagnose.rank_tol"]) or None
    dump_dir = out_dir / "maps" if cfg["diagnose.dump_maps"] else None
    rep = diagnostics_report(model, graph, rel_tol, dump_dir)
    report_path = out_dir / "report.jsonl"
    rep.write_jsonl(report_path)
    artifacts = {"report": report_path.name, "nodes_analyzed": graph.n}

    entries = [asdict(e) for e in rep.entries]
    summary = {"entries": entries}
    if cfg["diagnose.baseline_checkpoint"]:
        baseline = load_checkpoint(cfg["diagnose.baseline_checkpoint"])
        base_rep = diagnostics_report(baseline, graph, rel_tol)
        base_entries = [asdict(e) for e in base_rep.entries]
        summary["baseline_entries"] = base_entries
        pairs = list(zip(entries, base_entries))
        summary["comparison"] = [{
            "layer": e["layer"],
            "rank_delta": e["attention_rank"] - b["attention_rank"],
            "entropy_delta": e["mean_row_entropy"] - b["mean_row_entropy"],
        } for e, b in pairs]
        for row in summary["comparison"]:
            print(f"layer {row['layer']}: rank {'+' if row['rank_delta'] >= 0 else ''}"
                  f"{row['rank_delta']}, entropy delta {row['entropy_delta']:+.4f} "
                  "vs baseline")
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    artifacts["summary"] = summary_path.name
    if cfg["plots.enabled"]:
        fig = plots.render_safely(plots.diagnostics_bars, entries,
                                  out_dir / "figures" / "diagnostics.png")
        if fig:
            artifacts["figure"] = str(Path(fig).relative_to(out_dir))
    for e in entries:
        print(f"layer {e['layer']}: rank={e['attention_rank']} "
              f"(linear part {e['linear_rank']}), mean row entropy "
              f"{e['mean_row_entropy']:.4f}, scatter {e['scatter']:.4f}")
    manifest["artifacts"] = artifacts
    finalize_manifest(out_dir, manifest)
    return 0


# ---------------------------------------------------------------------------
# verify-theorems

def cmd_verify_theorems(args) -> int:
    flags = {
        "verify.theorem": args.theorem,
        "verify.self_test_violation": True if args.self_test_violation else None,
        "verify.trials_t1": args.trials_t1, "verify.redraws_t1": args.redraws_t1,
        "verify.trials_t2": args.trials_t2, "verify.redraws_t2": args.redraws_t2,
        "verify.trials_t4": args.trials_t4,
        "plots.enabled": False if args.no_plots else None,
        "seed": args.seed,
    }
    cfg = resolve_config(VERIFY_DEFAULTS, args.config, flags)
    cfg = _maybe_from_manifest(args, "verify-theorems", cfg)
    out_dir = prepare_out_dir(args.out, args.force)

    manifest = new_manifest("verify-theorems", cfg)
    write_manifest(out_dir, manifest)
    selector = str(cfg["verify.theorem"])
    results = run_all(
        seed=int(cfg["seed"]),
        repro_dir=out_dir,
        force_violation=bool(cfg["verify.self_test_violation"]),
        only=None if selector == "all" else selector,
        overrides={
            "theorem1": {"trials": int(cfg["verify.trials_t1"]),
                         "redraws": int(cfg["verify.redraws_t1"])},
            "theorem2": {"trials": int(cfg["verify.trials_t2"]),
                         "redraws": int(cfg["verify.redraws_t2"])},
            "theorem4": {"trials": int(cfg["verify.trials_t4"])},
        },
    )
    payload = {name: res.to_dict() for name, res in results.items()}
    results_path = out_dir / "theorems.json"
    results_path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    artifacts = {"results": results_path.name}
    if cfg["plots.enabled"]:
        fig = plots.render_safely(plots.theorem_margins, payload,
                                  out_dir / "figures" / "theorems.png")
        if fig:
            artifacts["figure"] = str(Path(fig).relative_to(out_dir))
    manifest["artifacts"] = artifacts
    finalize_manifest(out_dir, manifest)

    all_passed = all(res.passed for res in results.values())
    for name in sorted(results):
        res = results[name]
        status = "pass" if res.passed else "FAIL"
        extra = f" (repro: {res.repro_path})" if res.repro_path else ""
        print(f"{name}: {status} ({res.violations}/{res.trials} violations, "
              f"min slack {res.margin_min:.4g}){extra}")
    return 0 if all_passed else 1


# ---------------------------------------------------------------------------
# bench-scaling

def cmd_bench_scaling(args) -> int:
    flags = {
        "bench.sizes": args.sizes, "bench.d_model": args.d_model,
        "bench.avg_degree": args.avg_degree, "bench.repeats": args.repeats,
        "plots.enabled": False if args.no_plots else None,
        "seed": args.seed,
    }
    cfg = resolve_config(BENCH_DEFAULTS, args.config, flags)
    cfg = _maybe_from_manifest(args, "bench-scaling", cfg)
    try:
        sizes = [int(s) for s in str(cfg["bench.sizes"]).split(",") if s]
    except ValueError as exc:
        raise ConfigError(f"bench.sizes must be comma-separated integers: {exc}") from exc
    if len(sizes) < 2:
        raise ConfigError("bench.sizes needs at least two sizes to fit an exponent")
    out_dir = prepare_out_dir(args.out, args.force)

    manifest = new_manifest("bench-scaling", cfg)
    write_manifest(out_dir, manifest)
    report = run_scaling(sizes=sizes, d_model=int(cfg["bench.d_model"]),
                         avg_degree=int(cfg["bench.avg_degree"]),
                         seed=int(cfg["seed"]), repeats=int(cfg["bench.repeats"]))

    csv_path = out_dir / "scaling.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "seconds", "peak_bytes", "softmax_seconds"])
        for row in report.rows:
            writer.writerow([row.n, repr(row.seconds), row.peak_bytes,
                             repr(row.softmax_seconds)])
    exponents = {
        "linear_time_exponent": report.linear_time_exponent,
        "softmax_time_exponent": report.softmax_time_exponent,
        "memory_exponent": report.memory_exponent,
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(exponents, indent=2, sort_keys=True),
                            encoding="utf-8")
    artifacts = {"csv": csv_path.name, "summary": summary_path.name}
    if cfg["plots.enabled"]:
        fig = plots.render_safely(plots.scaling_curves, [asdict(r) for r in report.rows],
                                  exponents, out_dir / "figures" / "scaling.png")
        if fig:
            artifacts["figure"] = str(Path(fig).relative_to(out_dir))
    manifest["artifacts"] = artifacts
    finalize_manifest(out_dir, manifest)
    print(f"hybrid layer time exponent {report.linear_time_exponent:.3f}; "
          f"softmax baseline exponent {report.softmax_time_exponent:.3f}; "
          f"memory exponent {report.memory_exponent:.3f}")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file with flat dotted keys")
    p.add_argument("--from-manifest", help="replay the resolved config of a previous run")
    p.add_argument("--out", help="output directory", default=None)
    p.add_argument("--force", action="store_true",
                   help="allow writing into a non-empty output directory")
    p.add_argument("--seed", type=int, default=None, help="root random seed")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tarif",
        description="Hybrid linear graph attention: experiments, diagnostics, "
                    "and verification oracles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a synthetic block-model dataset")
    _add_common(g)
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--p-in", dest="p_in", type=float)
    g.add_argument("--p-out", dest="p_out", type=float)
    g.add_argument("--d", type=int, help="feature dimension")
    g.add_argument("--sigma", type=float)
    g.add_argument("--mean-scale", dest="mean_scale", type=float)
    g.add_argument("--train-frac", dest="train_frac", type=float)
    g.add_argument("--val-frac", dest="val_frac", type=float)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model or run the ablation sweep")
    _add_common(t)
    t.add_argument("dataset", nargs="?", default=None, help="dataset directory")
    t.add_argument("--d-model", dest="d_model", type=int)
    t.add_argument("--gnn-layers", dest="gnn_layers", type=int)
    t.add_argument("--attn-layers", dest="attn_layers", type=int)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--alpha", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--kernel", choices=["sigmoid", "relu"])
    t.add_argument("--gat-heads", dest="gat_heads", type=int)
    t.add_argument("--variant", choices=sorted(VARIANTS))
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--weight-decay", dest="weight_decay", type=float)
    t.add_argument("--patience", type=int)
    t.add_argument("--eval-every", dest="eval_every", type=int)
    t.add_argument("--metric", choices=["accuracy", "roc_auc"])
    t.add_argument("--ablation", action="store_true", help="run the 5-variant sweep")
    t.add_argument("--seeds", type=int, help="number of seeds for the sweep")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("diagnose", help="rank/entropy/scatter report for a checkpoint")
    _add_common(d)
    d.add_argument("dataset", nargs="?", default=None)
    d.add_argument("--checkpoint")
    d.add_argument("--baseline-checkpoint", dest="baseline_checkpoint")
    d.add_argument("--subsample", type=int, help="diagnose a uniform node sample")
    d.add_argument("--rank-tol", dest="rank_tol", type=float,
                   help="relative tolerance for numerical rank (default machine epsilon)")
    d.add_argument("--dump-maps", dest="dump_maps", action="store_true",
                   help="write explicit attention maps as JSON matrices")
    d.set_defaults(func=cmd_diagnose)

    v = sub.add_parser("verify-theorems", help="run the Monte-Carlo verification oracles")
    _add_common(v)
    v.add_argument("--theorem", help="1|2|3|4 or 'all'")
    v.add_argument("--trials-t1", dest="trials_t1", type=int)
    v.add_argument("--redraws-t1", dest="redraws_t1", type=int)
    v.add_argument("--trials-t2", dest="trials_t2", type=int)
    v.add_argument("--redraws-t2", dest="redraws_t2", type=int)
    v.add_argument("--trials-t4", dest="trials_t4", type=int)
    v.add_argument("--self-test-violation", dest="self_test_violation",
                   action="store_true",
                   help="negative-path self test with a known-violating construction")
    v.set_defaults(func=cmd_verify_theorems)

    b = sub.add_parser("bench-scaling", help="time one layer across graph sizes")
    _add_common(b)
    b.add_argument("--sizes", help="comma-separated node counts")
    b.add_argument("--d-model", dest="d_model", type=int)
    b.add_argument("--avg-degree", dest="avg_degree", type=int)
    b.add_argument("--repeats", type=int)
    b.set_defaults(func=cmd_bench_scaling)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TarifError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
