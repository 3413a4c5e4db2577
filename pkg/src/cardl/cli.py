"""Command-line pipeline: synth | train | pairhead-train | embed | index | query | eval.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Diagnostics go to stderr; results go to stdout or the --out files.  All
randomness flows from --seed (falling back to the CARDL_SEED environment
variable, then 0), so identical invocations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .alignment import TrainConfig, fit
from .errors import CardlError, DataError, UsageError
from .evaluation import evaluate_retrieval
from .pairhead import PairExample, fit_pair_head
from .records import IMAGE, TEXT
from .retrieval import DIRECTIONS, IMG2TXT, TXT2IMG, cross_media_search, query_topk

_SOURCE_MODALITY = {TXT2IMG: TEXT, IMG2TXT: IMAGE}
_TARGET_MODALITY = {TXT2IMG: IMAGE, IMG2TXT: TEXT}


class _Parser(argparse.ArgumentParser):
    """argparse that reports problems as UsageError (exit 1) instead of exiting."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def _resolve_seed(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get("CARDL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"CARDL_SEED must be an integer, got {env!r}") from exc
    return 0


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}") from exc
    if not values:
        raise UsageError(f"{flag} must name at least one value")
    return values


def _log(message: str) -> None:
    print(message, file=sys.stderr)


# ------------------------------------------------------------- subcommands --

def _cmd_synth(args) -> int:
    config = dataio.SyntheticConfig(
        clusters=args.clusters,
        pairs_per_cluster=args.pairs_per_cluster,
        text_dim=args.text_dim,
        image_dim=args.image_dim,
        latent_dim=args.latent_dim,
        noise_sigma=args.noise_sigma,
        seed=_resolve_seed(args.seed),
        same_cluster_relevant=args.same_cluster_relevant,
    )
    dataset = dataio.generate_synthetic(config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataio.save_features(dataset.text_records, out / "text_features.jsonl")
    dataio.save_features(dataset.image_records, out / "image_features.jsonl")
    dataio.save_pairs(dataset.pairs, out / "pairs.tsv")
    dataio.save_qrels(dataset.qrels, out / "qrels.tsv")
    dataio.save_model(dataio.oracle_model(dataset), out / "oracle_model.json", seed=config.seed)
    _log(
        f"wrote {len(dataset.pairs)} pairs ({config.clusters} clusters) to {out}: "
        "text_features.jsonl image_features.jsonl pairs.tsv qrels.tsv oracle_model.json"
    )
    return 0


def _cmd_train(args) -> int:
    text_records = dataio.load_features(args.text_features)
    image_records = dataio.load_features(args.image_features)
    known = {r.id for r in text_records} | {r.id for r in image_records}
    pairs, _ = dataio.load_pairs_and_qrels(args.pairs, known_ids=known)
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        temperature=args.temperature,
        hidden_dims=tuple(_parse_int_list(args.hidden_dims, "--hidden-dims"))
        if args.hidden_dims
        else (),
        unified_dim=args.unified_dim,
        seed=_resolve_seed(args.seed),
    )
    model, history = fit(text_records, image_records, pairs, config)
    for epoch, loss in enumerate(history, start=1):
        _log(f"epoch {epoch}/{config.epochs} mean loss {loss:.6f}")
    dataio.save_model(model, args.out, train_config=config)
    _log(f"wrote model to {args.out}")
    return 0


def _cmd_pairhead_train(args) -> int:
    records = dataio.load_features(args.features)
    by_id = {r.id: r for r in records}
    pairs, _ = dataio.load_pairs_and_qrels(args.pairs, known_ids=set(by_id))
    seed = _resolve_seed(args.seed)
    rng = np.random.default_rng(seed & ((1 << 64) - 1))
    examples = [
        PairExample(by_id[p.text_id].vector, by_id[p.image_id].vector, relevant=True)
        for p in pairs
    ]
    if len(pairs) < 2:
        raise DataError("need at least 2 pairs to sample mismatched negatives")
    partners = [p.image_id for p in pairs]
    for k, pair in enumerate(pairs):
        for _ in range(args.negatives_per_positive):
            j = int(rng.integers(len(pairs) - 1))
            if j >= k:
                j += 1  # never draw the true partner
            examples.append(
                PairExample(by_id[pair.text_id].vector, by_id[partners[j]].vector, relevant=False)
            )
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=seed,
    )
    head = fit_pair_head(examples, config)
    dataio.save_pair_head(head, args.out, seed=seed)
    _log(
        f"trained pair head on {len(pairs)} positives / "
        f"{len(examples) - len(pairs)} sampled negatives; wrote {args.out}"
    )
    return 0


def _cmd_embed(args) -> int:
    model = dataio.load_model(args.model)
    records = dataio.load_features(args.features)
    unified = dataio.unified_records(model, records)
    dataio.save_features(unified, args.out)
    _log(f"projected {len(unified)} records into {model.unified_dim}-d space; wrote {args.out}")
    return 0


def _cmd_index(args) -> int:
    records = dataio.load_features(args.vectors)
    index = dataio.build_index_from_records(records)
    dataio.save_index(index, args.out)
    _log(f"indexed {len(index)} vectors (dim {index.dimension}); wrote {args.out}")
    return 0


def _cmd_query(args) -> int:
    index = dataio.load_index(args.index)
    model = dataio.load_model(args.model)
    direction = args.direction
    source = _SOURCE_MODALITY[direction]
    if args.features:
        records = {r.id: r for r in dataio.load_features(args.features)}
        record = records.get(args.id)
        if record is None:
            raise DataError(f"id {args.id!r} not found in {args.features}")
        results = cross_media_search(model, index, record, args.k, direction)
    else:
        # no raw features given: fall back to the query's stored unified vector
        try:
            row = index.ids.index(args.id)
        except ValueError:
            raise DataError(
                f"id {args.id!r} not in the index; pass --features with its raw vector"
            ) from None
        if index.modalities[row] != source:
            raise UsageError(
                f"direction {direction} takes a {source} query, but indexed id "
                f"{args.id!r} is {index.modalities[row]}"
            )
        results = query_topk(index, index.vectors[row], args.k, _TARGET_MODALITY[direction])
    for result in results:
        print(f"{result.rank}\t{result.id}\t{result.score:.6f}")
    return 0


def _cmd_eval(args) -> int:
    index = dataio.load_index(args.index)
    model = dataio.load_model(args.model)
    text_records = dataio.load_features(args.text_features)
    image_records = dataio.load_features(args.image_features)
    known = {r.id for r in text_records} | {r.id for r in image_records}
    _, qrels = dataio.load_pairs_and_qrels(args.pairs, args.qrels, known_ids=known)
    k_list = _parse_int_list(args.k_list, "--k-list")
    directions = list(DIRECTIONS) if args.direction == "both" else [args.direction]
    reports = {}
    for direction in directions:
        queries = text_records if direction == TXT2IMG else image_records
        reports[direction] = evaluate_retrieval(
            model, index, queries, qrels, k_list=k_list, direction=direction
        )
    sys.stdout.write(dataio.format_report_table(reports))
    if args.out:
        dataio.save_report(reports, args.out)
        _log(f"wrote report to {args.out}")
    return 0


# ------------------------------------------------------------------ parser --

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cardl",
        description=(
            "Cross-media vector alignment and retrieval: train projection "
            "heads over precomputed text/image features, index the unified "
            "space, and search or evaluate it."
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="generate a synthetic clustered dataset with oracle maps")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--clusters", type=int, default=8)
    p.add_argument("--pairs-per-cluster", type=int, default=50)
    p.add_argument("--text-dim", type=int, default=128)
    p.add_argument("--image-dim", type=int, default=192)
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--same-cluster-relevant", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train the two projection heads on paired features")
    p.add_argument("--text-features", required=True)
    p.add_argument("--image-features", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--temperature", type=float, default=0.07)
    p.add_argument("--hidden-dims", default="256", help="comma-separated widths; empty for linear heads")
    p.add_argument("--unified-dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser(
        "pairhead-train",
        help="train a relevance head on (embedding, embedding) pairs from one feature file",
    )
    p.add_argument("--features", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--negatives-per-positive", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_pairhead_train)

    p = sub.add_parser("embed", help="project raw features into the unified space")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("index", help="build the exact-search index from unified vectors")
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("query", help="top-k cross-media search for one query id")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--direction", required=True, choices=DIRECTIONS)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--features", default=None, help="raw features holding the query id")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("eval", help="MAP@k evaluation per direction")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--text-features", required=True)
    p.add_argument("--image-features", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--qrels", default=None, help="overrides the pair-derived judgments")
    p.add_argument("--k-list", default="1,5,10")
    p.add_argument("--direction", choices=[*DIRECTIONS, "both"], default="both")
    p.add_argument("--out", default=None, help="also write the report as JSON")
    p.set_defaults(func=_cmd_eval)

    return parser


def cli_main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_help(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            raise UsageError(f"missing subcommand\n{parser.format_usage().rstrip()}")
        return args.func(args)
    except CardlError as exc:
        print(f"cardl: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # argparse -h/--help
        return int(exc.code or 0)


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
