"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import RunConfig, load_config
from .ctc import ctc_decode_batch
from .errors import ConfigError, DataError, DivergenceError
from .metrics import error_report, error_table
from .model import generate_beam, generate_greedy
from .pose_data import MAGIC as POSE_MAGIC, GlossSequence, load_pose_file, pad_and_mask, prepare_pose, read_pose_header
from .synth import synth_dataset
from .training import CKPT_BEST, evaluate_checkpoint, run_training

log = logging.getLogger("autosign")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _resolve(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None), getattr(args, "seed", None))
    if getattr(args, "data", None):
        cfg = replace(cfg, data=replace(cfg.data, root=str(args.data)))
    log.info("resolved config:\n%s", cfg.to_text().rstrip())
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = _resolve(args)
    splits = synth_dataset(cfg.synth, cfg.split, cfg.seed, args.out)
    print("\t".join(f"{k}={len(v)}" for k, v in splits.items()))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve(args)
    result = run_training(cfg.train_config(), cfg.data.root, args.out, cfg.model)
    last = result.history[-1]
    print(f"best_epoch\t{result.state.best_epoch}")
    print(f"best_dev_wer\t{result.state.best_dev_wer!r}")
    print(f"epochs_run\t{last.epoch + 1}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    res = evaluate_checkpoint(args.ckpt, cfg.data.root, args.split, cfg.train.eval_batch_size,
                              cfg.train.max_decode_len)
    print(f"WER\t{res.wer!r}")
    if args.report:
        Path(args.report).write_text(error_report(res.decodes), encoding="utf-8")
    if args.decodes:
        Path(args.decodes).write_text(error_table(res.decodes), encoding="utf-8")
    return EXIT_OK


def decode_file(ckpt, pose_path, beam: int = 1, max_len: int = 32) -> list[str]:
    params, vocab, meta = load_checkpoint(ckpt)
    max_frames = int(meta.get("max_frames", 0)) or None
    seq = prepare_pose(load_pose_file(pose_path), meta.get("modality", "body_hands"), max_frames)
    if params.cfg.kind == "ctc":
        batch = pad_and_mask([(seq, GlossSequence(()))])
        ids = ctc_decode_batch(batch.poses, batch.pose_mask, params)[0]
    elif beam > 1:
        ids = list(generate_beam(seq, params, beam, max_len).ids)
    else:
        ids = list(generate_greedy(seq, params, max_len).ids)
    return vocab.decode(ids)


def cmd_decode(args) -> int:
    print(" ".join(decode_file(args.ckpt, args.pose, args.beam, args.max_len)))
    return EXIT_OK


def cmd_inspect(args) -> int:
    version, T, J = read_pose_header(args.pose)
    seq = load_pose_file(args.pose)
    det = seq.detected()
    print(f"magic\t{POSE_MAGIC.decode()}")
    print(f"version\t{version}")
    print(f"frames\t{T}")
    print(f"joints\t{J}")
    print(f"detected_fraction\t{det.mean():.6f}")
    if det.any():
        pts = seq.frames[det]
        for axis, name in enumerate("xy"):
            v = pts[:, axis]
            print(f"{name}_min\t{v.min():.4f}\n{name}_max\t{v.max():.4f}\n{name}_mean\t{v.mean():.4f}")
    return EXIT_OK


# ablation grid -------------------------------------------------------------

COMPRESSOR_LABELS = {0: "linear", 1: "cnn1", 2: "cnn2", 3: "cnn3"}
ABLATE_HEADER = "input_type\tmodality\tinput_dim\tparams\tbest_epoch\tdev_wer\ttest_wer"


def ablation_arms(cfg: RunConfig) -> list[tuple[str, int]]:
    return [(m, d) for m in cfg.ablate.modalities for d in cfg.ablate.compressor_layers]


def run_arm(cfg: RunConfig, modality: str, depth: int, out_root) -> str:
    """Train and score one (modality, compressor depth) arm; returns its TSV row."""
    arm_cfg = replace(cfg, data=replace(cfg.data, modality=modality),
                      model=replace(cfg.model, compressor_layers=depth, kind=cfg.ablate.kind))
    train_cfg = arm_cfg.train_config()
    if cfg.ablate.epochs is not None:
        train_cfg = replace(train_cfg, epochs=cfg.ablate.epochs)
    out = Path(out_root) / f"{modality}_{COMPRESSOR_LABELS[depth]}"
    result = run_training(train_cfg, cfg.data.root, out, arm_cfg.model)
    bs, ml = train_cfg.eval_batch_size, train_cfg.max_decode_len
    dev = evaluate_checkpoint(out / CKPT_BEST, cfg.data.root, "dev", bs, ml)
    test = evaluate_checkpoint(out / CKPT_BEST, cfg.data.root, "test", bs, ml)
    params = result.params
    return (f"{COMPRESSOR_LABELS[depth]}\t{modality}\t{params.cfg.input_dim}\t{params.num_parameters()}\t"
            f"{result.state.best_epoch}\t{dev.wer!r}\t{test.wer!r}")


def _run_arm_star(job):
    return run_arm(*job)


def run_ablation(cfg: RunConfig, out_root, jobs: int = 1) -> str:
    arms = ablation_arms(cfg)
    work = [(cfg, m, d, out_root) for m, d in arms]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_arm_star, work))
    else:
        rows = [_run_arm_star(w) for w in work]
    return "\n".join([ABLATE_HEADER, *rows]) + "\n"


def cmd_ablate(args) -> int:
    cfg = _resolve(args)
    table = run_ablation(cfg, args.out, args.jobs)
    if args.table:
        Path(args.table).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="autosign", description="Pose-to-gloss training and evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, data=True):
        sp.add_argument("--config", help="run configuration file")
        sp.add_argument("--seed", type=int, help="overrides run.seed and $AUTOSIGN_SEED")
        if data:
            sp.add_argument("--data", help="dataset root (overrides data.root)")

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    common(sp, data=False)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a model")
    common(sp)
    sp.add_argument("--out", required=True, help="run directory for history and checkpoints")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="WER of a checkpoint on a split")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", default="dev", choices=("train", "dev", "test"))
    sp.add_argument("--report", help="write an aligned error report here")
    sp.add_argument("--decodes", help="write per-sample decodes (TSV) here")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("decode", help="decode one pose file")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--pose", required=True)
    sp.add_argument("--beam", type=int, default=1)
    sp.add_argument("--max-len", type=int, default=32)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("ablate", help="compressor depth x modality sweep")
    common(sp)
    sp.add_argument("--out", default="ablate_runs")
    sp.add_argument("--table", help="also write the TSV here")
    sp.add_argument("--jobs", type=int, default=1, help="parallel arms (same output as sequential)")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("inspect", help="pose file header and statistics")
    sp.add_argument("pose")
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
