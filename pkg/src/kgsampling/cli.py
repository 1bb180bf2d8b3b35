"""Command-line entry point.

Every config key is also a flag of the same name; precedence is
defaults < --config file < flags. Exit codes: 0 ok, 1 usage/config,
2 data, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError, KGSamplingError
from .experiment import (
    CONFIG_KEYS,
    OutputDir,
    RunConfig,
    attr,
    dumps,
    load_inputs,
    partition_summary,
    require_path,
    run_baseline_compare,
    run_experiment,
    run_extract,
    split_of,
    train_index,
)
from .groups import build_group_index, save_index, write_corpus
from .lexicon import load_lexicon
from .model import load_model
from .retrieval import evaluate_bidirectional
from .sampler import make_rng, sample_batch, validate_batch
from .synth import describe_corpus, generate_corpus

log = logging.getLogger("kgsampling")

COMMANDS = {
    "synth": "generate a synthetic long-tail corpus into --corpus",
    "extract": "print extracted key concepts for every report (JSONL)",
    "index": "build the group index over the training split into --index",
    "sample-check": "draw --num-batches selective batches and validate them",
    "train": "full-data training + evaluation into --output-dir",
    "eval": "evaluate --model on the eval split, one JSON line per direction",
    "fewshot": "K-shot support-set training + evaluation into --output-dir",
    "compare": "selective vs random batches over --seeds",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgsampling", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key=value config file with [section] headers")
        for section, key, kind, default in CONFIG_KEYS:
            kwargs = dict(dest=attr(key), default=argparse.SUPPRESS,
                          help=f"[{section}] default: {default!r}")
            if kind is bool:
                kwargs.update(nargs="?", const="true", metavar="BOOL")
            p.add_argument(f"--{key}", **kwargs)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {attr(key): getattr(args, attr(key)) for _, key, _, _ in CONFIG_KEYS
                 if hasattr(args, attr(key))}
    return cfg.replace(**overrides)


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: RunConfig) -> int:
    if not cfg.corpus:
        raise ConfigError("--corpus (output path) is required")
    lexicon = load_lexicon(require_path(cfg, "lexicon") if cfg.lexicon else None)
    corpus = generate_corpus(cfg.synth_config(), lexicon)
    Path(cfg.corpus).parent.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, cfg.corpus, cfg.dim)
    stats = describe_corpus(corpus)
    _emit(json.dumps({"corpus": cfg.corpus, "stats": stats.to_dict()}, sort_keys=True))
    return 0


def cmd_extract(cfg: RunConfig) -> int:
    lines = "".join(json.dumps(row, sort_keys=True) + "\n" for row in run_extract(cfg))
    if cfg.output_dir:
        with OutputDir(cfg.output_dir) as out:
            out.write("concepts.jsonl", lines)
    else:
        sys.stdout.write(lines)
    return 0


def cmd_index(cfg: RunConfig) -> int:
    if not cfg.index:
        raise ConfigError("--index (output path) is required")
    corpus, lexicon = load_inputs(cfg)
    index = build_group_index(split_of(corpus, cfg.train_split), lexicon, cfg.policy())
    save_index(index, cfg.index)
    _emit(json.dumps({"index": cfg.index, **partition_summary(index)}, sort_keys=True))
    return 0


def cmd_sample_check(cfg: RunConfig) -> int:
    corpus, lexicon = load_inputs(cfg)
    index = train_index(cfg, corpus, lexicon)
    scfg = cfg.sampler_config()
    rng = make_rng(scfg.seed)
    hits: Counter = Counter()
    violations = []
    for i in range(cfg.num_batches):
        batch = sample_batch(index, scfg, rng)
        hits.update(batch.group_ids)
        report = validate_batch(batch, index, scfg)
        violations += [f"batch {i}: {v}" for v in report.violations]
    summary = {
        "ok": not violations,
        "num_batches": cfg.num_batches,
        "sampler": scfg.to_dict(),
        "partition": partition_summary(index),
        "n_violations": len(violations),
        "violations": violations[:100],
        "group_hits": dict(sorted(hits.items())),
        "rare_groups_seen": sum(1 for g in index.rare if hits[g]),
        "rare_groups_total": len(index.rare),
    }
    _emit(json.dumps(summary, sort_keys=True))
    return 0 if not violations else 2


def cmd_train(cfg: RunConfig) -> int:
    _emit(dumps(run_experiment(cfg, "full")))
    return 0


def cmd_fewshot(cfg: RunConfig) -> int:
    _emit(dumps(run_experiment(cfg, "fewshot")))
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    corpus, lexicon = load_inputs(cfg)
    params = load_model(require_path(cfg, "model"))
    reports = evaluate_bidirectional(params, split_of(corpus, cfg.eval_split), lexicon)
    lines = "".join(rep.to_json() + "\n" for rep in reports)
    if cfg.output_dir:
        with OutputDir(cfg.output_dir) as out:
            out.write("eval_metrics.jsonl", lines)
    sys.stdout.write(lines)
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    text = dumps(run_baseline_compare(cfg))
    if cfg.output_dir:
        with OutputDir(cfg.output_dir) as out:
            out.write("compare.json", text)
    _emit(text)
    return 0


HANDLERS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "index": cmd_index,
    "sample-check": cmd_sample_check,
    "train": cmd_train,
    "eval": cmd_eval,
    "fewshot": cmd_fewshot,
    "compare": cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return HANDLERS[args.command](cfg)
    except KGSamplingError as exc:
        print(f"kgsampling {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"kgsampling {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
