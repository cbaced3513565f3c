"""Command-line entry point: gen / train / eval / sweep / print-config.

All outputs land under ``--out`` in a deterministic run-id subfolder, so a
rerun with the same config and seed overwrites its own artifacts instead of
scattering new ones. PROTOSTREAM_LOG_LEVEL controls verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from protostream import checkpoint, dataio, encoder, evaluation, trainer
from protostream.config import ConfigError, RunConfig, build_stream_config, config_hash, parse_config, render_config
from protostream.datagen import generate_stream
from protostream.trainer import AblationFlags, metrics_to_csv_rows

log = logging.getLogger("protostream.cli")

_METRIC_FIELDS = [
    "record", "stage", "epoch", "domain", "split", "n_pseudo", "pseudo_precision",
    "pseudo_recall", "conflicts", "skipped_batches", "loss_proto", "loss_triplet",
    "loss_structure", "mAP", "rank1", "n_queries",
]


def _setup_logging() -> None:
    level = os.environ.get("PROTOSTREAM_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(args: argparse.Namespace) -> RunConfig:
    overrides: dict[str, dict[str, str]] = {}
    if getattr(args, "seed", None) is not None:
        overrides["run"] = {"seed": str(args.seed)}
    cfg = parse_config(getattr(args, "config", None), overrides)
    if getattr(args, "dump_features", False):
        cfg.eval.dump_features = True
    return cfg


def _run_dir(base: str | Path, cfg: RunConfig, command: str, suffix: str = "") -> Path:
    run_id = f"{command}-seed{cfg.seed}-{config_hash(cfg)[:8]}{suffix}"
    path = Path(base) / run_id
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = _run_dir(args.out or cfg.out_dir, cfg, "gen")
    seen, unseen = generate_stream(build_stream_config(cfg))
    manifest = dataio.write_stream(out, seen, unseen)
    (out / "config.ini").write_text(render_config(cfg))
    print(f"wrote {len(seen)} seen + {len(unseen)} unseen datasets under {out}")
    print(f"manifest: {manifest}")
    return 0


def _write_metrics(path: Path, metrics: trainer.RunMetrics) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_METRIC_FIELDS)
        writer.writeheader()
        for row in metrics_to_csv_rows(metrics):
            writer.writerow(row)


def _train_once(cfg: RunConfig, data_dir: str | None, out: Path, ablate: AblationFlags) -> dict:
    if data_dir is not None:
        seen, unseen = dataio.read_stream(data_dir)
    else:
        seen, unseen = generate_stream(build_stream_config(cfg))
    state, metrics, summary = trainer.run_lifelong(cfg, seen, unseen, ablate=ablate, checkpoint_dir=out)
    _write_metrics(out / "metrics.csv", metrics)
    summary_payload = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "stages": len(seen),
        "n_unlabeled": int(sum(len(ds.unlabeled_indices) for ds in seen)),
        **{k: round(v, 6) for k, v in summary.items()},
    }
    (out / "summary.json").write_text(json.dumps(summary_payload, indent=2, sort_keys=True) + "\n")
    (out / "config.ini").write_text(render_config(cfg))
    if cfg.eval.dump_features:
        _dump_all_features(state.params, seen, unseen, out)
    return summary_payload


def _dump_all_features(params, seen, unseen, out: Path) -> None:
    feat_dir = out / "features"
    feat_dir.mkdir(exist_ok=True)
    for ds in seen:
        feats = encoder.forward(params, ds.grids)
        evaluation.dump_features(feat_dir / f"seen_stage{ds.stage:02d}.feat", feats, ds.identities, ds.cameras)
    for ds in unseen:
        feats = encoder.forward(params, ds.query.grids)
        evaluation.dump_features(
            feat_dir / f"unseen_domain{ds.domain_id:02d}_query.feat", feats, ds.query.identities, ds.query.cameras
        )


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    ablate = AblationFlags.from_names(args.ablate or [])
    suffix = "".join(f"-{name}" for name in (args.ablate or []))
    out = _run_dir(args.out or cfg.out_dir, cfg, "train", suffix)
    summary = _train_once(cfg, args.data, out, ablate)
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"artifacts under {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    ckpt = checkpoint.load_checkpoint(args.checkpoint)
    params = ckpt["encoder"]
    seen, unseen = dataio.read_stream(args.data)
    grid_dim = seen[0].grids.shape[1] * seen[0].grids.shape[2] if seen else unseen[0].query.grids.shape[1] * unseen[0].query.grids.shape[2]
    if params.in_dim != grid_dim:
        print(f"error: checkpoint input dim {params.in_dim} does not match dataset grid dim {grid_dim}", file=sys.stderr)
        return 2
    out = _run_dir(args.out or cfg.out_dir, cfg, "eval")
    evals, summary = trainer.evaluate_model(params, seen, unseen, after_stage=len(seen))
    rows = [
        {
            "stage": e.after_stage,
            "domain": e.domain,
            "split": e.split,
            "mAP": f"{e.map:.10g}",
            "rank1": f"{e.rank1:.10g}",
            "n_queries": e.n_queries,
        }
        for e in evals
    ]
    evaluation.write_results_csv(out / "results.csv", rows)
    if cfg.eval.dump_features or args.dump_features:
        _dump_all_features(params, seen, unseen, out)
    print(f"{'domain':>8} {'split':>8} {'mAP':>8} {'R@1':>8}")
    for e in evals:
        print(f"{e.domain:>8} {e.split:>8} {e.map:>8.4f} {e.rank1:>8.4f}")
    print(json.dumps({k: round(v, 6) for k, v in summary.items()}, indent=2, sort_keys=True))
    print(f"results under {out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    values = [float(v) for v in args.values.split(",")]
    param = args.param
    if param not in ("alpha", "t_p", "t_c", "t_o"):
        print(f"error: sweep parameter must be one of alpha, t_p, t_c, t_o (got {param})", file=sys.stderr)
        return 2
    results = []
    for value in values:
        sweep_cfg = parse_config(getattr(args, "config", None), {"hyperparams": {param: str(value)}, "run": {"seed": str(cfg.seed)}})
        out = _run_dir(args.out or cfg.out_dir, sweep_cfg, "sweep", f"-{param}{value:g}")
        summary = _train_once(sweep_cfg, args.data, out, AblationFlags())
        results.append({param: value, **summary})
        print(f"{param}={value:g}: seen-avg mAP {summary['seen_avg_map']:.4f}")
    sweep_dir = Path(args.out or cfg.out_dir)
    (sweep_dir / f"sweep_{param}.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_print_config(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    sys.stdout.write(render_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="protostream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, data: bool = False) -> None:
        p.add_argument("--config", default=None, help="config file (defaults embedded)")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--out", default=None, help="output root (default: [run] out_dir)")
        if data:
            p.add_argument("--data", default=None, help="directory with generated datasets")

    p_gen = sub.add_parser("gen", help="generate the synthetic dataset stream")
    common(p_gen)
    p_gen.set_defaults(func=cmd_gen)

    p_train = sub.add_parser("train", help="run the full lifelong training pipeline")
    common(p_train, data=True)
    p_train.add_argument("--ablate", action="append", default=None,
                         help="disable a component: no-dkcp, no-npl, no-ls, no-danet, labeled-only")
    p_train.add_argument("--dump-features", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset stream")
    common(p_eval, data=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dump-features", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="train repeatedly over a hyperparameter grid")
    common(p_sweep, data=True)
    p_sweep.add_argument("--param", required=True, help="alpha | t_p | t_c | t_o")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_pc = sub.add_parser("print-config", help="print the resolved configuration")
    common(p_pc)
    p_pc.set_defaults(func=cmd_print_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    except trainer.DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
