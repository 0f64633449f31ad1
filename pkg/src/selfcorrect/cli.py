"""Command-line entry points.

Subcommands: corrupt, encode-cache, train, eval, reward-score,
theory-check.  Every run is deterministic given --seed and writes its
fully-resolved config next to its outputs.  Exit codes: 0 success,
1 usage/config error, 2 I/O error, 3 failed theory check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, RunConfig
from .corruptor import (
    GenerationStats,
    TableFormatError,
    generate_pairs,
    load_tables,
    read_pairs_jsonl,
    write_pairs_jsonl,
)
from .embedder import CacheError, EmbeddingCache, NgramEncoder, cache_write
from .hashing import splitmix64
from .policy import LatticePolicy, load_checkpoint
from .reward import score_candidates
from .theory import run_all_checks
from .toylang import toy_tables
from .trainer import evaluate, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_THEORY = 3


def _read_sentences(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def _load_config(args: argparse.Namespace, flag_keys: dict[str, str]) -> RunConfig:
    overrides = {}
    for flag, key in flag_keys.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return RunConfig.load(getattr(args, "config", None), overrides)


def _prepare_out(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg.write_echo(os.path.join(cfg.out_dir, "config.json"))
    return cfg.out_dir


def cmd_corrupt(args: argparse.Namespace) -> int:
    cfg = _load_config(
        args,
        {
            "seed": "seed",
            "out": "out_dir",
            "corpus": "corpus",
            "tables": "tables",
            "copies": "copies",
            "filters": "filters",
        },
    )
    if not cfg.corpus or not cfg.tables:
        raise ConfigError("corrupt needs --corpus and --tables (or config keys)")
    tables = load_tables(cfg.tables)
    corpus = _read_sentences(cfg.corpus)
    out_dir = _prepare_out(cfg)
    stats = GenerationStats()
    pairs = generate_pairs(
        corpus,
        tables,
        cfg.operator_prior(),
        m=cfg.copies,
        master_seed=cfg.seed,
        apply_filters=cfg.filters,
        encoder=NgramEncoder(cfg.encoder_dim),
        stats=stats,
        max_edit=cfg.accept_max_edit,
        min_cosine=cfg.accept_min_cosine,
    )
    out_path = os.path.join(out_dir, "pairs.jsonl")
    write_pairs_jsonl(out_path, pairs)
    summary = {
        "generated": stats.generated,
        "accepted": stats.accepted,
        "identity": stats.identity,
        "rejected_empty": stats.rejected_empty,
        "rejected_edit_distance": stats.rejected_edit_distance,
        "rejected_cosine": stats.rejected_cosine,
        "corruption_rates": stats.corruption_rates(),
        "output": out_path,
    }
    print(json.dumps(summary, ensure_ascii=False))
    return EXIT_OK


def heldout_split(n: int) -> tuple[list[int], list[int]]:
    """Deterministic 90/10 train/held-out split by record-index hash."""
    train_idx, held_idx = [], []
    for i in range(n):
        (held_idx if splitmix64(i) % 10 == 0 else train_idx).append(i)
    return train_idx, held_idx


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(
        args,
        {
            "seed": "seed",
            "out": "out_dir",
            "dataset": "dataset",
            "tables": "tables",
            "total_updates": "total_updates",
            "batch_size": "batch_size",
            "candidates": "candidates",
            "eta0": "eta0",
            "alpha": "alpha",
        },
    )
    if not cfg.dataset or not cfg.tables:
        raise ConfigError("train needs --dataset and --tables (or config keys)")
    tables = load_tables(cfg.tables)
    pairs = read_pairs_jsonl(cfg.dataset)
    if not pairs:
        raise ValueError("empty dataset")
    train_idx, held_idx = heldout_split(len(pairs))
    train_set = [pairs[i] for i in train_idx]
    held_set = [pairs[i] for i in held_idx]
    out_dir = _prepare_out(cfg)
    checkpoint_path = os.path.join(out_dir, "checkpoint.bin")
    log_path = os.path.join(out_dir, "train_log.jsonl")
    result = train(
        cfg.trainer_config(),
        train_set or pairs,
        tables,
        cfg.reward_config(),
        master_seed=cfg.seed,
        encoder=NgramEncoder(cfg.encoder_dim),
        checkpoint_path=checkpoint_path,
        log_path=log_path,
    )
    policy = LatticePolicy(tables, buckets=cfg.feature_buckets)
    metrics = evaluate(result.params, policy, held_set) if held_set else None
    eval_path = os.path.join(out_dir, "eval.json")
    with open(eval_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "heldout_size": len(held_set),
                "train_size": len(train_set or pairs),
                "metrics": metrics,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    if result.telemetry is not None:
        with open(os.path.join(out_dir, "telemetry.json"), "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "min_grad_norm_sq": result.telemetry.min_grad_norm_sq,
                    "bound": result.telemetry.bound,
                    "within_bound": result.telemetry.within_bound,
                    "grad_norm_bound": result.telemetry.grad_norm_bound,
                    "advantage_bias_bound": result.telemetry.advantage_bias_bound,
                    "initial_mean_reward": result.telemetry.initial_mean_reward,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
    print(
        json.dumps(
            {
                "checkpoint": checkpoint_path,
                "log": log_path,
                "updates": len(result.stats),
                "final_mean_reward": result.stats[-1].mean_reward
                if result.stats
                else None,
                "heldout_metrics": metrics,
            }
        )
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"seed": "seed", "tables": "tables"})
    if not cfg.tables:
        raise ConfigError("eval needs --tables (or config key)")
    pairs = read_pairs_jsonl(args.test)
    if not pairs:
        raise ValueError("empty test set")
    params = load_checkpoint(args.checkpoint)
    policy = LatticePolicy(load_tables(cfg.tables), buckets=params.theta.shape[0])
    print(json.dumps(evaluate(params, policy, pairs)))
    return EXIT_OK


def cmd_reward_score(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"seed": "seed", "alpha": "alpha"})
    encoder = NgramEncoder(cfg.encoder_dim)
    reward_cfg = cfg.reward_config()
    out_fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        with open(args.input, encoding="utf-8") as fh:
            for group, line in enumerate(fh):
                if not line.strip():
                    continue
                rec = json.loads(line)
                candidates = rec["candidates"]
                scores = score_candidates(candidates, rec["ref"], reward_cfg, encoder)
                for k, score in enumerate(scores):
                    out_fh.write(
                        json.dumps(
                            {
                                "group": group,
                                "k": k,
                                "candidate": candidates[k],
                                "r_pair": score.r_pair,
                                "r_cons": score.r_cons,
                                "reward": score.reward,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
    finally:
        if out_fh is not sys.stdout:
            out_fh.close()
    return EXIT_OK


def cmd_theory(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"seed": "seed"})
    tables = load_tables(cfg.tables) if cfg.tables else toy_tables()
    policy = LatticePolicy(tables, buckets=cfg.feature_buckets)
    reports = run_all_checks(policy, cfg.reward_config(), seed=cfg.seed)
    lines = [r.to_json() for r in reports]
    for line in lines:
        print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_THEORY


def cmd_encode_cache(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"seed": "seed"})
    sentences = _read_sentences(args.sentences)
    encoder = NgramEncoder(cfg.encoder_dim)
    cache = EmbeddingCache(dim=cfg.encoder_dim)
    for s in sentences:
        cache.add(s, encoder.encode(s))
    cache_write(args.out, cache)
    print(json.dumps({"sentences": len(sentences), "entries": len(cache), "output": args.out}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selfcorrect",
        description="Self-play RL text correction: corruption, training, "
        "evaluation, reward scoring, and theory checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--seed", type=int, help="master seed")

    p = sub.add_parser("corrupt", help="generate pseudo-labelled pairs")
    common(p)
    p.add_argument("--corpus", help="clean corpus, one sentence per line")
    p.add_argument("--tables", help="confusion tables file")
    p.add_argument("--copies", type=int, help="corruption attempts per sentence")
    p.add_argument("--out", help="output directory")
    p.add_argument(
        "--no-filters",
        dest="filters",
        action="store_const",
        const=False,
        default=None,
        help="disable the acceptance filters",
    )
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="run PPO training on a pair dataset")
    common(p)
    p.add_argument("--dataset", help="pairs JSONL file")
    p.add_argument("--tables", help="confusion tables file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--total-updates", dest="total_updates", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--candidates", type=int)
    p.add_argument("--eta0", type=float)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on test pairs")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True, help="pairs JSONL file")
    p.add_argument("--tables", help="confusion tables file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reward-score", help="score candidate groups")
    common(p)
    p.add_argument("--input", required=True, help="JSONL of {ref, candidates}")
    p.add_argument("--out", help="output JSONL (default stdout)")
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_reward_score)

    p = sub.add_parser("theory-check", help="run the verification suite")
    common(p)
    p.add_argument("--out", help="output JSONL file")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("encode-cache", help="build a binary embedding cache")
    common(p)
    p.add_argument("--sentences", required=True, help="one sentence per line")
    p.add_argument("--out", required=True, help="cache file path")
    p.set_defaults(func=cmd_encode_cache)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TableFormatError, CacheError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FileNotFoundError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
