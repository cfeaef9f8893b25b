"""Command-line entry point: train / eval / gradcheck / synth."""

import argparse
import json
import os
import sys
from pathlib import Path

from . import kernels
from .checks import run_checks
from .config import ConfigError, TrainConfig, load_config
from .data import IngestError, parse_events, write_csv, write_split_manifest
from .diffcore import load_checkpoint, save_checkpoint
from .errors import ContractViolation, NumericError
from .model import CtgnModel
from .synthetic import generate_contact_stream, generate_synthetic
from .training import (
    DataBundle,
    build_checkpoint,
    evaluate_runs,
    restore_model,
    train_link_model,
    train_node_classifier,
)

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_NUMERIC = 2


def _out_dir(config: TrainConfig) -> Path:
    out = Path(os.environ.get("CTGN_OUT_DIR", config.out_dir))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_bundle(config: TrainConfig):
    if not config.dataset:
        raise ConfigError("dataset: no path configured")
    store = parse_events(config.dataset, has_duration=config.has_duration)
    resolved = config.resolved(store.has_duration)
    bundle = DataBundle.prepare(store, resolved.split_spec(), resolved.seed)
    return store, resolved, bundle


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    store, config, bundle = _load_bundle(config)
    out = _out_dir(config)
    (out / "config_resolved.json").write_text(config.to_json())
    write_split_manifest(out / "split_manifest.txt", bundle.train_size,
                         bundle.val_size, len(store), bundle.unseen_nodes)

    kernels.warmup()
    model = CtgnModel(config.model_config(store.edge_dim, store.has_duration),
                      store.num_nodes, config.seed)
    log_path = out / "log.jsonl"
    with open(log_path, "w") as log:
        def log_fn(rec):
            log.write(json.dumps(rec.to_dict()) + "\n")
            log.flush()
            print(f"epoch {rec.epoch:3d}  loss {rec.train_loss:.5f}  "
                  f"val_ap {rec.val_ap:.4f}  val_auc {rec.val_auc:.4f}  "
                  f"{rec.wall_time:.1f}s")

        result = train_link_model(
            model, bundle, lr=config.lr, alpha=config.alpha,
            batch_size=config.batch_size, max_epochs=config.max_epochs,
            patience=config.patience, seed=config.seed,
            co_train_classifier=config.co_train_classifier, log_fn=log_fn)

        if config.task == "node_classification" and not config.co_train_classifier:
            model.params.load_state_dict(result.params_state)
            model.memory = result.memory.clone()
            clf = train_node_classifier(model, bundle, lr=config.lr,
                                        batch_size=config.batch_size,
                                        max_epochs=config.max_epochs,
                                        patience=config.patience,
                                        seed=config.seed, log_fn=log_fn)
            result.params_state = model.params.state_dict()
            print(f"node classifier: best val AUC {clf.best_val_auc:.4f} "
                  f"(epoch {clf.best_epoch}), test AUC {clf.test_auc:.4f}")

    ckpt_path = out / "checkpoint.npz"
    save_checkpoint(ckpt_path, build_checkpoint(result, model, bundle))
    print(f"best epoch {result.best_epoch} (val AP {result.best_val_ap:.4f})")
    print(f"checkpoint: {ckpt_path}")
    print(f"log: {log_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = load_config(args.config)
    store, config, bundle = _load_bundle(config)
    ckpt = load_checkpoint(args.checkpoint)
    model = CtgnModel(config.model_config(store.edge_dim, store.has_duration),
                      store.num_nodes, config.seed)
    kernels.warmup()
    memory = restore_model(model, ckpt)
    model.inductive = args.mode == "inductive"
    seed = config.seed if args.seed is None else args.seed
    seeds = [seed + i for i in range(args.runs)]
    report = evaluate_runs(model, bundle, args.split, args.mode, seeds,
                           config.batch_size, memory)
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    print(payload)
    out = _out_dir(config) / f"eval_{args.split}_{args.mode}.json"
    out.write_text(payload)
    print(f"report: {out}", file=sys.stderr)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    kernels.warmup()
    reports = run_checks(args.module, tolerance=args.tolerance)
    all_pass = True
    for name, report in reports.items():
        print(f"== {name}")
        print(report.format_table())
        all_pass = all_pass and report.passed
    return EXIT_OK if all_pass else EXIT_NUMERIC


def cmd_synth(args) -> int:
    if args.kind == "duration":
        store = generate_synthetic(args.seed, args.users, args.items,
                                   args.events, args.noise)
    else:
        store = generate_contact_stream(args.seed, args.users, args.items,
                                        args.events)
    write_csv(store, args.out)
    print(f"wrote {len(store)} events to {args.out} "
          f"(has_duration={store.has_duration})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctgn",
        description="Continuous temporal graph networks: train and evaluate "
                    "link prediction / node classification on event streams.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a JSON config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--split", choices=("train", "val", "test"), default="test")
    p_eval.add_argument("--mode", choices=("transductive", "inductive", "all"),
                        default="transductive")
    p_eval.add_argument("--runs", type=int, default=1)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.set_defaults(fn=cmd_eval)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p_gc.add_argument("--module", default="all")
    p_gc.add_argument("--tolerance", type=float, default=1e-4)
    p_gc.set_defaults(fn=cmd_gradcheck)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p_synth.add_argument("--kind", choices=("duration", "contact"),
                         default="duration")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--users", type=int, default=2000)
    p_synth.add_argument("--items", type=int, default=200)
    p_synth.add_argument("--events", type=int, default=50000)
    p_synth.add_argument("--noise", type=float, default=0.0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(fn=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, IngestError, ContractViolation, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
