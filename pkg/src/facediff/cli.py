"""Command-line entry points for data generation, training, and analysis.

Exit codes: 0 success, 1 usage, 2 configuration problem, 3 runtime failure.
Every subcommand's output is a pure function of its inputs and --seed; no
timestamps or machine identifiers ever reach an output file, so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from facediff.ablation import AXES, run_ablation
from facediff.config import ConfigError, RunConfig, parse_config, save_config, \
    with_overrides
from facediff.data import corpus_stats, generate_dataset, load_dataset, save_dataset
from facediff.gradcheck import run_all
from facediff.metrics import evaluate_model, write_report
from facediff.model import build_model
from facediff.text import build_vocab, load_vocab, save_vocab
from facediff.training import (load_into, run_strategy, save_checkpoint,
                               write_training_log)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # route argparse's default exit(2) through the documented usage code
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="facediff",
                     description="Two-face comparison explainer toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic pair dataset")
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--pairs", type=int, default=256)
    p.add_argument("--identities", type=int, default=16)
    p.add_argument("--match-fraction", type=float, default=0.5)
    p.add_argument("--attr-dim", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model per the run config")
    p.add_argument("--data", required=True, help="training dataset path")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--seed", type=int, default=None, help="seed override")

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", default=None,
                   help="vocab file (default: vocab.txt beside the checkpoint)")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="directory for report.csv")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("ablate", help="run config sweeps and report each variant")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data", default=None,
                   help="held-out dataset (default: evaluate on --data)")
    p.add_argument("--config", default=None)
    p.add_argument("--axes", default=",".join(AXES[:5]),
                   help=f"comma-separated subset of {','.join(AXES)}")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--quick", action="store_true", help="per-op checks only")
    p.add_argument("--full", action="store_true",
                   help="exhaustive coordinates in the model suite")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("stats", help="print corpus statistics for a dataset")
    p.add_argument("--data", required=True)
    return parser


def _resolved_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig().validate()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "data", None):
        overrides["dataset"] = args.data
    return with_overrides(cfg, **overrides) if overrides else cfg


def _cmd_gen_data(args) -> int:
    records = generate_dataset(args.identities, args.pairs, args.match_fraction,
                               args.seed, args.attr_dim)
    save_dataset(records, args.out, args.seed)
    print(f"wrote {len(records)} pairs to {args.out}")
    return EXIT_OK


def _load_training_corpus(cfg: RunConfig):
    records, _ = load_dataset(cfg.dataset)
    texts = [r.prompt for r in records]
    texts.extend(r.description(cfg.tier) for r in records)
    return records, build_vocab(texts)


def _cmd_train(args) -> int:
    cfg = _resolved_config(args)
    records, vocab = _load_training_corpus(cfg)
    model = build_model(vocab, cfg.model_dims(), cfg.arch(), cfg.enc_spec(),
                        seed=cfg.seed)
    unimodal, mapper, finetune = cfg.stage_configs()
    report, log = run_strategy(cfg.strategy, model, records, records, unimodal,
                               mapper, finetune, cfg.loss(), cfg.tier)
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_checkpoint(model.params, os.path.join(cfg.out_dir, "model.ckpt"))
    save_vocab(vocab, os.path.join(cfg.out_dir, "vocab.txt"))
    write_training_log(log, os.path.join(cfg.out_dir, "train.log"))
    write_report([(cfg.strategy, report)], os.path.join(cfg.out_dir, "report.csv"))
    save_config(cfg, os.path.join(cfg.out_dir, "config.txt"))
    print(f"{cfg.strategy}: ce={report.ce_loss!r} bleu={report.bleu!r} "
          f"meteor_lite={report.meteor_lite!r} semscore={report.semscore!r}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _resolved_config(args)
    records, _ = load_dataset(args.data)
    vocab_path = args.vocab or os.path.join(os.path.dirname(args.checkpoint),
                                            "vocab.txt")
    vocab = load_vocab(vocab_path)
    model = build_model(vocab, cfg.model_dims(), cfg.arch(), cfg.enc_spec(),
                        seed=cfg.seed)
    load_into(model.params, args.checkpoint)
    report = evaluate_model(model, records, cfg.tier)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_report([("eval", report)], os.path.join(args.out, "report.csv"))
    print(f"eval: ce={report.ce_loss!r} bleu={report.bleu!r} "
          f"meteor_lite={report.meteor_lite!r} semscore={report.semscore!r} "
          f"n={report.n_examples}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    cfg = _resolved_config(args)
    records, _ = load_dataset(args.data)
    eval_records = load_dataset(args.eval_data)[0] if args.eval_data else records
    axes = [a.strip() for a in args.axes.split(",") if a.strip()]
    out_path = None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        out_path = os.path.join(args.out, "report.csv")
    rows = run_ablation(cfg, axes, records, eval_records, out_path)
    for name, report in rows:
        print(f"{name}: ce={report.ce_loss!r} bleu={report.bleu!r} "
              f"meteor_lite={report.meteor_lite!r} semscore={report.semscore!r}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    reports = run_all(quick=args.quick, full=args.full, seed=args.seed)
    for rep in reports:
        print(rep)
    if all(rep.passed for rep in reports):
        print(f"gradcheck: {len(reports)} checks passed")
        return EXIT_OK
    print("gradcheck: FAILED", file=sys.stderr)
    return EXIT_RUNTIME


def _cmd_stats(args) -> int:
    records, header = load_dataset(args.data)
    out = {"n_pairs": len(records),
           "n_match": sum(1 for r in records if r.label == "match"),
           "seed": header["seed"]}
    for tier in ("concise", "comprehensive"):
        st = corpus_stats([r.description(tier) for r in records])
        out[tier] = {"average": st.average, "median": st.median,
                     "max": st.max, "vocab": st.vocab}
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "gradcheck": _cmd_gradcheck,
    "stats": _cmd_stats,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:  # --help lands here
        return EXIT_OK if err.code in (0, None) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # noqa: BLE001 - boundary maps failures to exit codes
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


def console_main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    console_main()
