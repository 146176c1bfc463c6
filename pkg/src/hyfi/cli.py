"""Command-line interface: gen / train / eval / check / stats.

Every command writes its artifacts under --out plus a manifest.json recording
the effective configuration (defaults, overridden by the --config JSON file,
overridden by explicit flags), the seeds, the artifact paths, and wall-clock
duration.  Manifests and data files are written atomically.

Exit codes: 0 success, 1 usage error, 2 data error, 3 property failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__, checks, figures, model as model_mod, synth, trainer
from .ioutil import atomic_write_text
from .model import ModelConfig
from .synth import SynthConfig
from .trainer import TrainConfig


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class PropertyFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config_file(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as err:
        raise DataError(f"cannot read config file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise DataError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise DataError(f"config file {path} must hold a flat JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _effective(defaults, args, flag_names):
    """defaults <- config file <- explicit flags; returns the merged dict."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        for key, value in _load_config_file(args.config).items():
            if key not in cfg:
                raise DataError(f"unknown config key {key!r}; valid keys: {sorted(cfg)}")
            cfg[key] = value
    for name in flag_names:
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    return cfg


def _write_manifest(out_dir, command, config, seeds, artifacts, started):
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config": config,
        "seeds": seeds,
        "artifacts": [os.path.abspath(p) for p in artifacts],
        "started_unix": started,
        "duration_s": round(time.time() - started, 3),
    }
    path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")
    return path


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _parse_dims(text):
    try:
        d, d_b = (int(x) for x in str(text).split(","))
    except ValueError as err:
        raise UsageError(f"--dims expects 'd,d_b', got {text!r}") from err
    return d, d_b


# ---------------------------------------------------------------------------

def cmd_gen(args):
    started = time.time()
    defaults = asdict(SynthConfig())
    defaults["dims"] = f"{defaults.pop('d')},{defaults.pop('d_b')}"
    cfg = _effective(defaults, args, ("seed", "concepts", "dims"))
    concepts = cfg.pop("concepts", None)
    if concepts is not None:
        cfg["n_concepts"] = int(concepts)
    d, d_b = _parse_dims(cfg.pop("dims"))
    try:
        synth_cfg = SynthConfig(d=d, d_b=d_b, **cfg)
    except (TypeError, ValueError) as err:
        raise DataError(f"invalid generation config: {err}") from err
    train_set, test_set = synth.generate(synth_cfg)
    os.makedirs(args.out, exist_ok=True)
    train_path = os.path.join(args.out, "train.hyfi")
    test_path = os.path.join(args.out, "test.hyfi")
    synth.write_embeddings(train_path, train_set, synth_cfg)
    synth.write_embeddings(test_path, test_set, synth_cfg)
    artifacts = [train_path, train_path + ".json", test_path, test_path + ".json"]
    manifest = _write_manifest(args.out, "gen", asdict(synth_cfg),
                               {"seed": synth_cfg.seed}, artifacts, started)
    print(f"wrote {len(train_set)} train items and {len(test_set)} test items "
          f"(d={d}, d_b={d_b}) under {args.out}")
    print(f"manifest: {manifest}")
    return 0


def _read_split(data_path, split):
    path = data_path
    if os.path.isdir(data_path):
        path = os.path.join(data_path, f"{split}.hyfi")
    if not os.path.exists(path):
        raise DataError(f"no {split} data at {path}")
    try:
        return synth.read_embeddings(path), path
    except synth.EmbeddingFormatError as err:
        raise DataError(f"{path}: {err}") from err


def cmd_train(args):
    started = time.time()
    train_set, data_path = _read_split(args.data, "train")
    d = train_set.semantic.shape[1]
    d_b = train_set.brain.shape[1]
    defaults = {
        "seed": 0, "shuffle_seed": None, "epochs": TrainConfig.epochs,
        "batch": TrainConfig.batch_size, "lr": TrainConfig.lr,
        "wd": TrainConfig.weight_decay, "ablation": "full",
        "loss_mode": "standard", "t_input": "semantic", "fix_alpha_v": False,
    }
    cfg = _effective(defaults, args,
                     ("seed", "shuffle_seed", "epochs", "batch", "lr", "wd",
                      "ablation", "loss_mode"))
    shuffle_seed = cfg["shuffle_seed"] if cfg["shuffle_seed"] is not None else cfg["seed"]
    try:
        model_cfg = ModelConfig(d=d, d_b=d_b, fix_alpha_v=bool(cfg["fix_alpha_v"]),
                                t_input=cfg["t_input"], loss_mode=cfg["loss_mode"])
        train_cfg = TrainConfig(lr=cfg["lr"], weight_decay=cfg["wd"],
                                batch_size=int(cfg["batch"]), epochs=int(cfg["epochs"]),
                                seed=int(shuffle_seed), loss_mode=cfg["loss_mode"],
                                ablation=cfg["ablation"])
    except ValueError as err:
        raise DataError(str(err)) from err
    params = model_mod.init_params(model_cfg, np.random.default_rng(int(cfg["seed"])))
    trained, history = trainer.train(train_set, params, model_cfg, train_cfg)

    os.makedirs(args.out, exist_ok=True)
    ckpt_base = os.path.join(args.out, "checkpoint")
    extra = {"ablation": train_cfg.ablation, "data": os.path.abspath(data_path),
             "epochs": train_cfg.epochs, "final_loss": history[-1] if history else None}
    manifest_path, blob_path = model_mod.save_checkpoint(ckpt_base, trained, model_cfg, extra)
    history_csv = _write_csv(os.path.join(args.out, "history.csv"),
                             ["epoch", "loss"],
                             [(i + 1, loss) for i, loss in enumerate(history)])
    artifacts = [manifest_path, blob_path, history_csv]
    if history:
        artifacts.append(figures.save_history(os.path.join(args.out, "history.png"), history))
    manifest = _write_manifest(args.out, "train",
                               {**cfg, "shuffle_seed": shuffle_seed, "d": d, "d_b": d_b},
                               {"init_seed": int(cfg["seed"]), "shuffle_seed": int(shuffle_seed)},
                               artifacts, started)
    final = f"{history[-1]:.4f}" if history else "n/a"
    print(f"trained {train_cfg.epochs} epochs (ablation={train_cfg.ablation}); "
          f"final loss {final}")
    print(f"checkpoint: {manifest_path}")
    print(f"manifest: {manifest}")
    return 0


def _load_checkpoint(path):
    try:
        return model_mod.load_checkpoint(path)
    except FileNotFoundError as err:
        raise DataError(f"checkpoint not found: {err}") from err
    except ValueError as err:
        raise DataError(str(err)) from err


def cmd_eval(args):
    started = time.time()
    params, model_cfg, extra = _load_checkpoint(args.checkpoint)
    test_set, _ = _read_split(args.data, "test")
    d = test_set.semantic.shape[1]
    d_b = test_set.brain.shape[1]
    if (d, d_b) != (model_cfg.d, model_cfg.d_b):
        raise DataError(f"dimension mismatch: checkpoint expects d={model_cfg.d}, "
                        f"d_b={model_cfg.d_b} but data has d={d}, d_b={d_b}")
    ablation = args.ablation or extra.get("ablation", "full")
    try:
        report = trainer.evaluate_retrieval(test_set.brain, test_set.semantic,
                                            test_set.perceptual, params, model_cfg,
                                            ablation=ablation)
    except ValueError as err:
        raise DataError(str(err)) from err
    os.makedirs(args.out, exist_ok=True)
    report_json = os.path.join(args.out, "report.json")
    atomic_write_text(report_json, json.dumps(
        {"top1": report.top1, "top5": report.top5, "n_ways": report.n_ways,
         "ablation": ablation, "per_item_ranks": report.per_item_ranks},
        indent=2) + "\n")
    report_csv = _write_csv(os.path.join(args.out, "report.csv"),
                            ["item", "rank"],
                            list(enumerate(report.per_item_ranks)))
    ranks_png = figures.save_rank_histogram(os.path.join(args.out, "ranks.png"),
                                            report.per_item_ranks, report.n_ways)
    manifest = _write_manifest(args.out, "eval",
                               {"checkpoint": args.checkpoint, "data": args.data,
                                "ablation": ablation},
                               {}, [report_json, report_csv, ranks_png], started)
    print(f"{report.n_ways}-way retrieval: top-1 {report.top1:.4f}, top-5 {report.top5:.4f}")
    print(f"report: {report_json}")
    print(f"manifest: {manifest}")
    return 0


def cmd_check(args):
    started = time.time()
    try:
        results = checks.run_suites([args.suite], trials=args.trials)
    except KeyError as err:
        raise UsageError(str(err.args[0])) from err
    for res in results:
        print("\n".join(res.lines()))
    summary = {
        res.name: {"passed": res.passed, "seconds": round(res.seconds, 3),
                   "checks": [{"label": it.label, "trials": it.trials,
                               "failures": it.failures, "worst": it.worst}
                              for it in res.items]}
        for res in results
    }
    os.makedirs(args.out, exist_ok=True)
    manifest = _write_manifest(args.out, "check",
                               {"suite": args.suite, "trials": args.trials,
                                "results": summary}, {}, [], started)
    print(f"manifest: {manifest}")
    failed = [res.name for res in results if not res.passed]
    if failed:
        raise PropertyFailure(f"property suites failed: {', '.join(failed)}")
    return 0


def cmd_stats(args):
    started = time.time()
    params, model_cfg, _ = _load_checkpoint(args.checkpoint)
    test_set, _ = _read_split(args.data, "test")
    d = test_set.semantic.shape[1]
    d_b = test_set.brain.shape[1]
    if (d, d_b) != (model_cfg.d, model_cfg.d_b):
        raise DataError(f"dimension mismatch: checkpoint expects d={model_cfg.d}, "
                        f"d_b={model_cfg.d_b} but data has d={d}, d_b={d_b}")
    os.makedirs(args.out, exist_ok=True)
    artifacts = []
    if args.which == "root-distance":
        stats = trainer.root_distance_report(test_set, params, model_cfg)
        rows = []
        for name, s in stats.items():
            for lo, hi, count in zip(s.bin_edges[:-1], s.bin_edges[1:], s.counts):
                rows.append((name, lo, hi, count))
        artifacts.append(_write_csv(os.path.join(args.out, "root_distance.csv"),
                                    ["population", "bin_lo", "bin_hi", "count"], rows))
        payload = {name: {"mean": s.mean, "std": s.std, "count": s.count}
                   for name, s in stats.items()}
        json_path = os.path.join(args.out, "root_distance.json")
        atomic_write_text(json_path, json.dumps(payload, indent=2) + "\n")
        artifacts.append(json_path)
        artifacts.append(figures.save_population_histograms(
            os.path.join(args.out, "root_distance.png"), stats, "distance from origin"))
        for name, s in stats.items():
            print(f"{name}: mean {s.mean:.4f}, std {s.std:.4f} over {s.count} items")
    else:  # coefficient
        s = trainer.coefficient_stats(test_set, params, model_cfg)
        rows = list(zip(s.bin_edges[:-1], s.bin_edges[1:], s.counts))
        artifacts.append(_write_csv(os.path.join(args.out, "coefficient.csv"),
                                    ["bin_lo", "bin_hi", "count"], rows))
        payload = {"mean": s.mean, "std": s.std, "count": s.count,
                   "min_item": s.min_index, "max_item": s.max_index}
        json_path = os.path.join(args.out, "coefficient.json")
        atomic_write_text(json_path, json.dumps(payload, indent=2) + "\n")
        artifacts.append(json_path)
        artifacts.append(figures.save_histogram(
            os.path.join(args.out, "coefficient.png"), s.counts, s.bin_edges,
            "interpolation coefficient", "t", mean=s.mean))
        print(f"t: mean {s.mean:.4f}, std {s.std:.4f} over {s.count} items; "
              f"min at item {s.min_index}, max at item {s.max_index}")
    manifest = _write_manifest(args.out, "stats",
                               {"checkpoint": args.checkpoint, "data": args.data,
                                "which": args.which}, {}, artifacts, started)
    print(f"manifest: {manifest}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="hyfi",
                     description="hyperbolic feature interpolation: synthetic data, "
                                 "training, retrieval evaluation, and property checks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "gen", help="generate a synthetic paired dataset",
        description="Write train.hyfi/test.hyfi plus JSON manifests under --out.")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="data")
    p.add_argument("--config", default=None, help="JSON file with flat config keys")
    p.add_argument("--concepts", type=int, default=None, help="training concepts")
    p.add_argument("--dims", default=None, help="feature,brain dimensions, e.g. 32,12")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser(
        "train", help="train the alignment model on generated data",
        description="Read train.hyfi, optimize, write checkpoint + history CSV/PNG.")
    p.add_argument("data", help="data directory (or train.hyfi path)")
    p.add_argument("--out", default="runs/train")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None, help="parameter init seed")
    p.add_argument("--shuffle-seed", dest="shuffle_seed", type=int, default=None,
                   help="batch shuffle seed (defaults to --seed)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--wd", type=float, default=None)
    p.add_argument("--ablation", choices=model_mod.ABLATIONS, default=None)
    p.add_argument("--loss-mode", dest="loss_mode", choices=model_mod.LOSS_MODES,
                   default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "eval", help="zero-shot retrieval evaluation of a checkpoint",
        description="Rank held-out visual candidates per brain query; write "
                    "report JSON/CSV and a rank histogram.")
    p.add_argument("checkpoint", help="checkpoint base path or its .json manifest")
    p.add_argument("data", help="data directory (or test.hyfi path)")
    p.add_argument("--out", default="runs/eval")
    p.add_argument("--ablation", choices=model_mod.ABLATIONS, default=None,
                   help="override the ablation recorded in the checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "check", help="run property suites",
        description="Run invariant suites; exit 3 if any property fails. "
                    f"Suites: {', '.join(checks.SUITES)} or 'all'.")
    p.add_argument("suite", nargs="?", default="all")
    p.add_argument("--trials", type=int, default=None,
                   help="sample count for the randomized geometry suites")
    p.add_argument("--out", default="runs/check")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser(
        "stats", help="distribution summaries of a trained model",
        description="Histogram CSV/JSON/PNG of origin distances or coefficients.")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--which", choices=("root-distance", "coefficient"), required=True)
    p.add_argument("--out", default="runs/stats")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except PropertyFailure as err:
        print(f"{err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
