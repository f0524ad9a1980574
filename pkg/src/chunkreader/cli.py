"""Command-line entry points.

Subcommands: train, evaluate, predict, chunk-stats, gradcheck. Exit
codes: 0 success, 1 usage or configuration error, 2 data error (missing
or malformed files, empty trainable set, checkpoint mismatch), 3
gradient verification failure.

Seed precedence: --seed flag, then the CHUNKREADER_SEED environment
variable, then the config file, then the TrainConfig default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from collections import Counter

import numpy as np

from . import numerics as nm
from .checkpoint import CheckpointError, load_checkpoint
from .chunker import build_pos_trie, candidate_recall, enumerate_candidates, generate_candidates
from .corpus import DataError, Featurizer, build_tag_inventories, load_dataset, load_embeddings
from .evaluator import breakdown_by_answer_length, breakdown_by_head_word, evaluate
from .model import ChunkReaderModel, ModelConfig, nll_loss
from .trainer import load_train_config, train

SEED_ENV_VAR = "CHUNKREADER_SEED"


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map usage to 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="chunkreader", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and save the best checkpoint")
    p.add_argument("--config", help="flat key-value training config file")
    p.add_argument("--train", required=True, dest="train_path", help="training JSONL")
    p.add_argument("--dev", required=True, dest="dev_path", help="held-out JSONL for early stopping")
    p.add_argument("--embeddings", required=True, help="word vector text file")
    p.add_argument("--out-checkpoint", required=True, help="where the best model goes")
    p.add_argument("--log", help="per-epoch training log path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field, repeatable")

    p = sub.add_parser("predict", help="write one answer per example as JSONL")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score predictions against gold answers")
    p.add_argument("--data", required=True)
    p.add_argument("--predictions", help="JSONL from `predict`; otherwise give a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--embeddings")
    p.add_argument("--json-out", help="write the full JSON report here")

    p = sub.add_parser("chunk-stats", help="candidate recall and count statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", default="window", help="window or trie")
    p.add_argument("--max-len", type=int, default=10)
    p.add_argument("--trie-data", help="examples whose answers build the trie (default: --data)")

    p = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden-size", type=int, default=3)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def _require_file(path, what: str):
    if not os.path.isfile(path):
        raise DataError(f"{what} not found: {path}")


def _infer_embedding_dim(path) -> int:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.strip():
        raise DataError(f"embedding file is empty: {path}")
    return len(first.rstrip("\n").split(" ")) - 1


def _resolve_seed(flag_seed, config_seed: int) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return config_seed


def _load_featurized_world(data_path, embeddings_path, model: ChunkReaderModel):
    _require_file(data_path, "dataset")
    _require_file(embeddings_path, "embedding file")
    loaded = load_dataset(data_path)
    table = load_embeddings(embeddings_path, _infer_embedding_dim(embeddings_path))
    if table.dim != model.config.embedding_dim:
        raise DataError(
            f"embedding width {table.dim} does not match the checkpoint's "
            f"{model.config.embedding_dim}"
        )
    fz = Featurizer(table, model.config.pos_tags, model.config.ne_tags)
    return loaded, fz


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key] = value
    try:
        if args.config:
            _require_file(args.config, "config file")
            config = load_train_config(args.config, overrides)
        else:
            config = load_train_config(os.devnull, overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seed = _resolve_seed(args.seed, config.seed)
    if seed != config.seed:
        config = dataclasses.replace(config, seed=seed)

    for path, what in [(args.train_path, "training dataset"), (args.dev_path, "dev dataset"),
                       (args.embeddings, "embedding file")]:
        _require_file(path, what)
    train_loaded = load_dataset(args.train_path)
    dev_loaded = load_dataset(args.dev_path)
    for name, loaded in [("train", train_loaded), ("dev", dev_loaded)]:
        if loaded.dropped:
            print(f"{name}: dropped {len(loaded.dropped)} invalid records", file=sys.stderr)
    if not train_loaded.examples:
        raise DataError(f"no usable examples in {args.train_path}")
    if not dev_loaded.examples:
        raise DataError(f"no usable examples in {args.dev_path}")

    table = load_embeddings(args.embeddings, _infer_embedding_dim(args.embeddings))
    pos_tags, ne_tags = build_tag_inventories(train_loaded.examples)
    trie = None
    if config.candidate_mode == "trie":
        trie = build_pos_trie(train_loaded.examples, config.max_chunk_len)
    model_config = ModelConfig(
        hidden_size=config.hidden_size,
        embedding_dim=table.dim,
        pos_tags=pos_tags,
        ne_tags=ne_tags,
        candidate_mode=config.candidate_mode,
        max_chunk_len=config.max_chunk_len,
    )
    model = ChunkReaderModel(model_config, trie)
    featurizer = Featurizer(table, pos_tags, ne_tags)
    try:
        result = train(
            model,
            featurizer,
            train_loaded.examples,
            dev_loaded.examples,
            config,
            log_path=args.log,
            checkpoint_path=args.out_checkpoint,
        )
    except ValueError as exc:  # e.g. every example filtered out
        raise DataError(str(exc)) from None
    print(
        f"finished: {result.epochs_run} epochs, best dev EM {result.best_em:.4f} "
        f"(F1 {result.best_f1:.4f}) at epoch {result.best_epoch}"
    )
    return 0


def cmd_predict(args) -> int:
    _require_file(args.checkpoint, "checkpoint")
    model = load_checkpoint(args.checkpoint)
    loaded, fz = _load_featurized_world(args.data, args.embeddings, model)
    with open(args.out, "w", encoding="utf-8") as fh:
        for ex in loaded.examples:
            candidates = model.candidates_for(ex.passage)
            if not candidates:
                raise DataError(f"no candidates generated for example {ex.id!r}")
            scored = model.forward(fz.passage_matrix(ex), fz.question_matrix(ex), candidates)
            best = scored.best_index()
            span = scored.candidates[best]
            answer = " ".join(t.surface for t in ex.passage[span.start - 1 : span.end])
            fh.write(json.dumps({
                "id": ex.id,
                "answer": answer,
                "start": span.start,
                "end": span.end,
                "probability": float(scored.probabilities.data[best]),
            }) + "\n")
    print(f"wrote {len(loaded.examples)} predictions to {args.out}")
    return 0


def _read_predictions_file(path) -> dict[str, str]:
    _require_file(path, "predictions file")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise DataError(f"line {line_no}: invalid JSON in predictions file") from None
            if "id" not in obj or "answer" not in obj:
                raise DataError(f"line {line_no}: prediction needs id and answer")
            out[str(obj["id"])] = str(obj["answer"])
    return out


def _row_dict(row) -> dict:
    return {"count": row.count, "fraction": row.fraction, "em": row.em, "f1": row.f1}


def cmd_evaluate(args) -> int:
    _require_file(args.data, "dataset")
    loaded = load_dataset(args.data)
    if not loaded.examples:
        raise DataError(f"no usable examples in {args.data}")
    if args.predictions:
        predictions = _read_predictions_file(args.predictions)
    elif args.checkpoint and args.embeddings:
        _require_file(args.checkpoint, "checkpoint")
        model = load_checkpoint(args.checkpoint)
        _, fz = _load_featurized_world(args.data, args.embeddings, model)
        try:
            predictions = {
                ex.id: model.predict_example(ex, fz).text for ex in loaded.examples
            }
        except ValueError as exc:  # zero candidates for some passage
            raise DataError(str(exc)) from None
    else:
        raise UsageError("evaluate needs --predictions, or --checkpoint with --embeddings")
    try:
        report = evaluate(predictions, loaded.examples)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    by_length = breakdown_by_answer_length(report)
    heads, bigrams = breakdown_by_head_word(report)
    payload = {
        "count": len(report.records),
        "em": report.em,
        "f1": report.f1,
        "by_answer_length": {str(k): _row_dict(v) for k, v in by_length.items()},
        "by_head_word": {k: _row_dict(v) for k, v in heads.items()},
        "what_bigrams": {k: _row_dict(v) for k, v in bigrams.items()},
    }
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"examples\t{len(report.records)}")
    print(f"exact_match\t{report.em:.6f}")
    print(f"f1\t{report.f1:.6f}")
    for key, row in by_length.items():
        print(f"length\t{key}\t{row.count}\t{row.em:.6f}\t{row.f1:.6f}")
    for key, row in heads.items():
        print(f"head\t{key}\t{row.count}\t{row.em:.6f}\t{row.f1:.6f}")
    return 0


def cmd_chunk_stats(args) -> int:
    if args.mode not in ("window", "trie"):
        raise UsageError(f"unknown candidate mode: {args.mode!r}")
    _require_file(args.data, "dataset")
    loaded = load_dataset(args.data)
    if not loaded.examples:
        raise DataError(f"no usable examples in {args.data}")
    trie = None
    if args.mode == "trie":
        source = loaded.examples
        if args.trie_data:
            _require_file(args.trie_data, "trie dataset")
            source = load_dataset(args.trie_data).examples
        trie = build_pos_trie(source, args.max_len)
    lists = [
        generate_candidates(ex.passage, args.mode, trie, args.max_len)
        for ex in loaded.examples
    ]
    recall = candidate_recall(loaded.examples, lists)
    counts = [len(c) for c in lists]
    hist = Counter(c.length for cands in lists for c in cands)
    print(f"examples\t{len(loaded.examples)}")
    print(f"mode\t{args.mode}")
    print(f"recall\t{recall:.6f}")
    print(f"mean_candidates\t{np.mean(counts):.4f}")
    for length in sorted(hist):
        print(f"length_hist\t{length}\t{hist[length]}")
    return 0


def cmd_gradcheck(args) -> int:
    """Finite-difference audit of the full loss at toy dimensions.

    Drives the network with dense random inputs and parameters at
    +-1.2/sqrt(fan_in) rather than the training setup: near-zero weights
    or sparse one-hot features leave some gradient coordinates at the
    difference-quotient noise floor, where the relative error ratio
    measures roundoff instead of correctness.
    """
    pos_tags = ("ADJ", "NOUN", "VERB")
    ne_tags = ("LOC", "O", "PER")
    config = ModelConfig(
        hidden_size=args.hidden_size,
        embedding_dim=4,
        pos_tags=pos_tags,
        ne_tags=ne_tags,
        max_chunk_len=3,
    )
    model = ChunkReaderModel(config)
    rng = np.random.default_rng(args.seed)
    for p in model.parameters().values():
        bound = 1.2 / np.sqrt(p.data.shape[0])
        p.data[...] = rng.uniform(-bound, bound, size=p.data.shape)
    passage_len, question_len = 8, 4
    P = rng.normal(scale=1.0, size=(passage_len, config.input_width))
    Q = rng.normal(scale=1.0, size=(question_len, config.input_width))
    candidates = enumerate_candidates(passage_len, config.max_chunk_len)
    gold = candidates[2]

    def build():
        scored = model.forward(P, Q, candidates)
        return nll_loss(scored, gold)

    names = list(model.parameters())
    params = list(model.parameters().values())
    errors = nm.finite_difference_errors(build, params, args.step)
    worst = 0.0
    for name, err in zip(names, errors):
        status = "ok" if err < args.tolerance else "BAD"
        print(f"{name}\t{err:.3e}\t{status}")
        worst = max(worst, err)
    if worst < args.tolerance:
        print(f"PASS\tmax relative error {worst:.3e} < {args.tolerance:.0e}")
        return 0
    print(f"FAIL\tmax relative error {worst:.3e} >= {args.tolerance:.0e}")
    return 3


_COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "chunk-stats": cmd_chunk_stats,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
