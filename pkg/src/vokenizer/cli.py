"""Command-line pipeline driver.

Subcommands: stats, train-matcher, build-index, vokenize, revokenize,
baseline, eval-loss, dump. Standard output carries machine-readable
results (JSON lines, TSV); progress notes go to standard error. Every
stochastic subcommand takes an explicit --seed, making reruns bitwise
reproducible.
"""

from __future__ import annotations

import argparse
import html
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import baselines, stats, supervision
from .corpus import Corpus, CorpusError, default_registry, load_corpus
from .features import ROLE_IMAGE_EMBEDDING, ROLE_PROBABILITY, FeatureMatrix
from .index import Index, VokenAssignment, VokenVocabulary, build_index, vokenize_corpus
from .matcher import TrainConfig, new_model, project_images, project_tokens, train
from .revoken import revokenize_corpus
from .storage import (
    StorageError,
    VokenCorpusRecord,
    read_caption_pairs,
    read_checkpoint,
    read_features,
    read_manifest,
    read_vokens,
    write_checkpoint,
    write_features,
    write_vokens,
)


def note(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# Shared loading helpers


def _resolve_tokenizer(tokenizer_id: str):
    """Accept a registered id or an inline spec like subword:<vocab path>,
    registering the latter on first use."""
    registry = default_registry()
    if tokenizer_id not in registry.ids() and ":" in tokenizer_id:
        registry.register(tokenizer_id, tokenizer_id)
    return registry


def _load_corpus(path: str, tokenizer_id: str) -> Corpus:
    registry = _resolve_tokenizer(tokenizer_id)
    corpus = load_corpus(path, tokenizer_id, registry=registry)
    note(f"loaded {len(corpus.sentences)} sentences ({corpus.token_count()} tokens) from {path}")
    return corpus


def _token_feature_map(corpus: Corpus, path: str) -> dict[int, np.ndarray]:
    """Split a token feature file (rows in corpus token order) per sentence."""
    matrix = read_features(path)
    if matrix.rows != corpus.token_count():
        raise StorageError(
            f"{path}: {matrix.rows} feature rows but corpus has "
            f"{corpus.token_count()} tokens"
        )
    out: dict[int, np.ndarray] = {}
    offset = 0
    for sentence in corpus.sentences:
        n = len(sentence.tokens)
        out[sentence.sentence_id] = matrix.values[offset : offset + n]
        offset += n
    return out


def _sentence_feature_map(corpus: Corpus, path: str) -> dict[int, np.ndarray]:
    """One feature row per sentence (sentence-embedding files)."""
    matrix = read_features(path)
    if matrix.rows != len(corpus.sentences):
        raise StorageError(
            f"{path}: {matrix.rows} feature rows but corpus has "
            f"{len(corpus.sentences)} sentences"
        )
    return {
        s.sentence_id: matrix.values[i : i + 1] for i, s in enumerate(corpus.sentences)
    }


def _image_features(manifest_path: str, feats_path: str):
    entries = read_manifest(manifest_path)
    matrix = read_features(feats_path)
    if matrix.rows != len(entries):
        raise StorageError(
            f"{feats_path}: {matrix.rows} feature rows but manifest lists "
            f"{len(entries)} images"
        )
    image_ids = [image_id for image_id, _uri in entries]
    feats = {image_id: matrix.values[i] for i, image_id in enumerate(image_ids)}
    return entries, image_ids, matrix, feats


def _load_index(vocab_path: str, manifest_path: str) -> tuple[Index, list[tuple[str, str]]]:
    entries = read_manifest(manifest_path)
    matrix = read_features(vocab_path)
    vocab = VokenVocabulary(
        embeddings=matrix, image_ids=tuple(image_id for image_id, _ in entries)
    )
    return build_index(vocab), entries


def _assignments_to_records(assignments: list[VokenAssignment]) -> list[VokenCorpusRecord]:
    return [
        VokenCorpusRecord(sentence_id=a.sentence_id, voken_ids=a.voken_ids)
        for a in assignments
    ]


def _records_to_assignments(records) -> list[VokenAssignment]:
    # Scores are not serialized; reloaded assignments carry zeros.
    return [
        VokenAssignment(
            sentence_id=r.sentence_id,
            voken_ids=r.voken_ids,
            scores=(0.0,) * len(r.voken_ids),
        )
        for r in records
    ]


# ---------------------------------------------------------------------------
# Subcommands


def cmd_stats(args) -> int:
    corpus = _load_corpus(args.corpus, args.tokenizer)
    reference = _load_corpus(args.reference, args.tokenizer)
    stopwords = (
        stats.load_stopwords(args.stopwords) if args.stopwords else stats.default_stopwords()
    )
    if args.grounded:
        token_types = frozenset(
            Path(args.grounded).read_text(encoding="utf-8").split()
        )
        grounded = stats.GroundedTokenSet(
            token_types=token_types,
            source_corpus=args.grounded,
            occurrence_threshold=args.threshold,
        )
    else:
        captions = _load_corpus(args.captions, args.tokenizer)
        grounded = stats.build_grounded_set(captions, stopwords, args.threshold)
        note(f"grounded set: {len(grounded.token_types)} token types")
    report = stats.report(corpus, reference, grounded, stopwords)
    print(report.to_json())
    return 0


def cmd_train_matcher(args) -> int:
    corpus = _load_corpus(args.captions, args.tokenizer)
    pairs = read_caption_pairs(args.pairs)
    if args.mode == "sentence_level":
        token_feats = _sentence_feature_map(corpus, args.token_feats)
    else:
        token_feats = _token_feature_map(corpus, args.token_feats)
    _entries, _ids, _matrix, image_feats = _image_features(args.manifest, args.image_feats)
    token_dim = next(iter(token_feats.values())).shape[1]
    image_dim = next(iter(image_feats.values())).shape[0]
    model = new_model(
        token_dim=token_dim,
        image_dim=image_dim,
        margin=args.margin,
        mode=args.mode,
        seed=args.seed,
    )
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        margin=args.margin,
    )
    model, history = train(
        model, pairs, token_feats, image_feats, config, return_history=True
    )
    for epoch, loss in enumerate(history):
        note(f"epoch {epoch}: mean hinge loss {loss:.6f}")
    write_checkpoint(args.out, model)
    note(f"wrote checkpoint to {args.out}")
    print(json.dumps({"first_epoch_loss": history[0], "final_epoch_loss": history[-1]}))
    return 0


def cmd_build_index(args) -> int:
    model = read_checkpoint(args.checkpoint)
    _entries, image_ids, matrix, _feats = _image_features(args.manifest, args.image_feats)
    projected = project_images(model, matrix.as_float64())
    write_features(
        args.out,
        FeatureMatrix(values=projected.astype(np.float32), role=ROLE_IMAGE_EMBEDDING),
    )
    note(f"projected {len(image_ids)} images to {args.out}")
    print(json.dumps({"vocab_size": len(image_ids), "dim": projected.shape[1]}))
    return 0


def cmd_vokenize(args) -> int:
    corpus = _load_corpus(args.corpus, args.tokenizer)
    model = read_checkpoint(args.checkpoint)
    token_feats = _token_feature_map(corpus, args.token_feats)
    index, _entries = _load_index(args.vocab, args.manifest)
    assignments = vokenize_corpus(corpus, token_feats, model, index, threads=args.threads)
    write_vokens(
        args.out,
        _assignments_to_records(assignments),
        vocab_size=index.size,
        strategy="vokenize",
    )
    note(f"wrote {len(assignments)} sentence records to {args.out}")
    return 0


def cmd_revokenize(args) -> int:
    source = _load_corpus(args.corpus, args.from_tokenizer)
    target = _load_corpus(args.corpus, args.to_tokenizer)
    records, vocab_size, strategy = read_vokens(args.vokens)
    assignments = _records_to_assignments(records)
    transferred = revokenize_corpus(source, target, assignments)
    write_vokens(
        args.out,
        _assignments_to_records(transferred),
        vocab_size=vocab_size,
        strategy=strategy,
    )
    note(f"transferred vokens for {len(transferred)} sentences to {args.out}")
    return 0


def _require_seed(args) -> int:
    if args.seed is None:
        raise CorpusError(f"--seed is required for baseline kind {args.kind!r}")
    return args.seed


def cmd_baseline(args) -> int:
    corpus = _load_corpus(args.corpus, args.tokenizer)
    if args.kind == "tf":
        seed = _require_seed(args)
        captions = _load_corpus(args.captions, args.tokenizer)
        pairs = read_caption_pairs(args.pairs)
        entries = read_manifest(args.manifest)
        tfm = baselines.build_tf(
            pairs, captions, [image_id for image_id, _ in entries], gamma=args.gamma
        )
        assignments = baselines.tf_label_corpus(tfm, corpus, seed)
        vocab_size = tfm.n_images
    elif args.kind == "sentence":
        model = read_checkpoint(args.checkpoint)
        cls_feats = _sentence_feature_map(corpus, args.cls_feats)
        index, _entries = _load_index(args.vocab, args.manifest)
        labels = baselines.sentence_label(corpus, cls_feats, model, index)
        assignments = baselines.propagate(labels, corpus)
        vocab_size = index.size
    elif args.kind == "random":
        seed = _require_seed(args)
        if not args.vocab_size:
            raise CorpusError("--vocab-size is required for the random baseline")
        assignments = baselines.ablation_labels(
            "random", corpus, args.vocab_size, seed=seed
        )
        vocab_size = args.vocab_size
    elif args.kind == "shuffle":
        seed = _require_seed(args)
        if not args.vokens:
            raise CorpusError("--vokens is required for the shuffle baseline")
        records, vocab_size, _strategy = read_vokens(args.vokens)
        assignments = baselines.ablation_labels(
            "shuffle",
            corpus,
            vocab_size,
            assignments=_records_to_assignments(records),
            seed=seed,
        )
    else:  # tokens
        assignments = baselines.ablation_labels("tokens", corpus, 0)
        vocab_size = 1 + max(
            (t.type_id for s in corpus.sentences for t in s.tokens), default=0
        )
    write_vokens(
        args.out,
        _assignments_to_records(assignments),
        vocab_size=vocab_size,
        strategy=args.kind,
    )
    note(f"wrote {args.kind} baseline labels to {args.out}")
    return 0


def cmd_eval_loss(args) -> int:
    records, vocab_size, _strategy = read_vokens(args.vokens)
    voken_dists = read_features(args.voken_distributions)
    if voken_dists.role != ROLE_PROBABILITY:
        raise StorageError(
            f"{args.voken_distributions}: expected a probability file, "
            f"got role {voken_dists.role!r}"
        )
    total_tokens = sum(len(r.voken_ids) for r in records)
    if voken_dists.rows != total_tokens:
        raise StorageError(
            f"{args.voken_distributions}: {voken_dists.rows} rows for "
            f"{total_tokens} tokens"
        )
    if voken_dists.dim != vocab_size:
        raise StorageError(
            f"{args.voken_distributions}: distribution width {voken_dists.dim} "
            f"does not match vocabulary size {vocab_size}"
        )
    l_voken = 0.0
    scored_tokens = 0
    offset = 0
    dists64 = voken_dists.as_float64()
    for record in records:
        n = len(record.voken_ids)
        assignment = VokenAssignment(
            sentence_id=record.sentence_id,
            voken_ids=record.voken_ids,
            scores=(0.0,) * n,
        )
        l_voken += supervision.voken_cls_loss(dists64[offset : offset + n], assignment)
        scored_tokens += sum(1 for v in record.voken_ids if v != -1)
        offset += n

    l_mlm = 0.0
    masked_count = 0
    if args.mlm_distributions:
        if args.seed is None:
            raise CorpusError("--seed is required when scoring masked-token loss")
        corpus = _load_corpus(args.corpus, args.tokenizer)
        mlm_dists = read_features(args.mlm_distributions)
        if mlm_dists.role != ROLE_PROBABILITY:
            raise StorageError(
                f"{args.mlm_distributions}: expected a probability file, "
                f"got role {mlm_dists.role!r}"
            )
        if mlm_dists.rows != corpus.token_count():
            raise StorageError(
                f"{args.mlm_distributions}: {mlm_dists.rows} rows for "
                f"{corpus.token_count()} tokens"
            )
        mlm64 = mlm_dists.as_float64()
        offset = 0
        for sentence in corpus.sentences:
            n = len(sentence.tokens)
            mask = supervision.mask_tokens(sentence, args.mask_ratio, args.seed)
            l_mlm += supervision.mlm_loss(
                mlm64[offset : offset + n],
                [t.type_id for t in sentence.tokens],
                mask,
            )
            masked_count += len(mask.masked_positions)
            offset += n

    report = supervision.vlm_loss(l_voken, l_mlm, args.loss_ratio)
    if scored_tokens:
        note(f"mean voken loss per token: {l_voken / scored_tokens:.6f}")
    if masked_count:
        note(f"mean masked-token loss: {l_mlm / masked_count:.6f}")
    print(report.to_json())
    return 0


def _rescore(args, corpus: Corpus, assignments: list[VokenAssignment]):
    """Relevance of each token against its assigned voken; vokenize
    output gets back exactly the winning scores, baseline output gets a
    comparable diagnostic."""
    model = read_checkpoint(args.checkpoint)
    token_feats = _token_feature_map(corpus, args.token_feats)
    vocab_matrix = read_features(args.vocab).as_float64()
    rescored = []
    for assignment in assignments:
        if not assignment.voken_ids:
            rescored.append(assignment)
            continue
        f = project_tokens(model, token_feats[assignment.sentence_id])
        scores = tuple(
            float(f[i] @ vocab_matrix[v]) if v != -1 else math.nan
            for i, v in enumerate(assignment.voken_ids)
        )
        rescored.append(
            VokenAssignment(
                sentence_id=assignment.sentence_id,
                voken_ids=assignment.voken_ids,
                scores=scores,
            )
        )
    return rescored


def cmd_dump(args) -> int:
    corpus = _load_corpus(args.corpus, args.tokenizer)
    records, _vocab_size, strategy = read_vokens(args.vokens)
    entries = read_manifest(args.manifest)
    by_id = {s.sentence_id: s for s in corpus.sentences}
    missing = [r.sentence_id for r in records if r.sentence_id not in by_id]
    if missing:
        raise CorpusError(f"voken file references unknown sentence {missing[0]}")
    assignments = [
        VokenAssignment(
            sentence_id=r.sentence_id,
            voken_ids=r.voken_ids,
            scores=(math.nan,) * len(r.voken_ids),
        )
        for r in records
    ]
    ordered_sentences = [by_id[a.sentence_id] for a in assignments]
    if args.checkpoint and args.token_feats and args.vocab:
        assignments = _rescore(args, corpus, assignments)

    if args.limit is not None:
        assignments = assignments[: args.limit]
        ordered_sentences = ordered_sentences[: args.limit]

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        if args.format == "tsv":
            for sentence, assignment in zip(ordered_sentences, assignments):
                for token, voken, score in zip(
                    sentence.tokens, assignment.voken_ids, assignment.scores
                ):
                    out.write(f"{token.text}\t{voken}\t{score}\n")
        else:
            out.write(_render_html(strategy, entries, ordered_sentences, assignments))
    finally:
        if args.out:
            out.close()
            note(f"wrote {args.format} dump to {args.out}")
    return 0


def _render_html(strategy, entries, sentences, assignments) -> str:
    rows = [
        "<!DOCTYPE html>",
        "<html><head><meta charset='utf-8'><title>voken dump</title>",
        "<style>body{font-family:sans-serif}table{border-collapse:collapse;"
        "margin-bottom:1em}td,th{border:1px solid #999;padding:2px 8px}</style>",
        "</head><body>",
        f"<h1>voken dump (strategy: {html.escape(strategy)})</h1>",
    ]
    for sentence, assignment in zip(sentences, assignments):
        rows.append(f"<h3>sentence {sentence.sentence_id}</h3>")
        rows.append(f"<p>{html.escape(sentence.raw)}</p>")
        rows.append("<table><tr><th>token</th><th>voken</th><th>image uri</th><th>score</th></tr>")
        for token, voken, score in zip(
            sentence.tokens, assignment.voken_ids, assignment.scores
        ):
            uri = entries[voken][1] if 0 <= voken < len(entries) else ""
            rows.append(
                "<tr>"
                f"<td>{html.escape(token.text)}</td>"
                f"<td>{voken}</td>"
                f"<td>{html.escape(uri)}</td>"
                f"<td>{'' if math.isnan(score) else f'{score:.4f}'}</td>"
                "</tr>"
            )
        rows.append("</table>")
    rows.append("</body></html>")
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# Parser plumbing


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--config",
        help="flat key=value file supplying defaults; explicit flags win",
    )


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="vokenizer",
        description="Corpus vokenization pipeline: train a token-image matcher, "
        "retrieve a voken per token, transfer annotations across tokenizers, "
        "and compute corpus diagnostics.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    sub = commands.add_parser("stats", help="corpus diagnostics report")
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--reference", required=True)
    sub.add_argument("--tokenizer", default="whitespace")
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--grounded", help="file of grounded token types, one per line")
    group.add_argument("--captions", help="caption corpus to build the grounded set from")
    sub.add_argument("--threshold", type=int, default=100)
    sub.add_argument("--stopwords", help="override the packaged stop-word list")
    sub.set_defaults(func=cmd_stats)
    subs["stats"] = sub

    sub = commands.add_parser("train-matcher", help="train the token-image matcher")
    sub.add_argument("--captions", required=True)
    sub.add_argument("--tokenizer", default="whitespace")
    sub.add_argument("--pairs", required=True)
    sub.add_argument("--token-feats", required=True)
    sub.add_argument("--image-feats", required=True)
    sub.add_argument("--manifest", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--epochs", type=int, default=20)
    sub.add_argument("--batch-size", type=int, default=64)
    sub.add_argument("--learning-rate", type=float, default=0.05)
    sub.add_argument("--margin", type=float, default=0.5)
    sub.add_argument("--mode", choices=["token_level", "sentence_level"], default="token_level")
    sub.set_defaults(func=cmd_train_matcher)
    subs["train-matcher"] = sub

    sub = commands.add_parser("build-index", help="project image features into the voken vocabulary")
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--image-feats", required=True)
    sub.add_argument("--manifest", required=True)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=cmd_build_index)
    subs["build-index"] = sub

    sub = commands.add_parser("vokenize", help="assign one voken per corpus token")
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--tokenizer", default="whitespace")
    sub.add_argument("--token-feats", required=True)
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--vocab", required=True, help="projected vocabulary feature file")
    sub.add_argument("--manifest", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--threads", type=int, default=1)
    sub.set_defaults(func=cmd_vokenize)
    subs["vokenize"] = sub

    sub = commands.add_parser("revokenize", help="transfer vokens to another tokenizer")
    sub.add_argument("--vokens", required=True)
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--from-tokenizer", required=True)
    sub.add_argument("--to-tokenizer", required=True)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=cmd_revokenize)
    subs["revokenize"] = sub

    sub = commands.add_parser("baseline", help="non-contextual labeling strategies")
    sub.add_argument("--kind", required=True, choices=["tf", "sentence", "random", "shuffle", "tokens"])
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--tokenizer", default="whitespace")
    sub.add_argument("--out", required=True)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--captions")
    sub.add_argument("--pairs")
    sub.add_argument("--manifest")
    sub.add_argument("--gamma", type=float, default=baselines.DEFAULT_GAMMA)
    sub.add_argument("--checkpoint")
    sub.add_argument("--cls-feats")
    sub.add_argument("--vocab")
    sub.add_argument("--vocab-size", type=int)
    sub.add_argument("--vokens")
    sub.set_defaults(func=cmd_baseline)
    subs["baseline"] = sub

    sub = commands.add_parser("eval-loss", help="score model output distributions")
    sub.add_argument("--vokens", required=True)
    sub.add_argument("--voken-distributions", required=True)
    sub.add_argument("--mlm-distributions")
    sub.add_argument("--corpus")
    sub.add_argument("--tokenizer", default="whitespace")
    sub.add_argument("--mask-ratio", type=float, default=supervision.DEFAULT_MASK_RATIO)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--loss-ratio", type=float, default=supervision.DEFAULT_LOSS_RATIO)
    sub.set_defaults(func=cmd_eval_loss)
    subs["eval-loss"] = sub

    sub = commands.add_parser("dump", help="human-readable voken listing")
    sub.add_argument("--vokens", required=True)
    sub.add_argument("--corpus", required=True)
    sub.add_argument("--tokenizer", default="whitespace")
    sub.add_argument("--manifest", required=True)
    sub.add_argument("--format", choices=["tsv", "html"], default="tsv")
    sub.add_argument("--out")
    sub.add_argument("--limit", type=int)
    sub.add_argument("--checkpoint", help="recompute scores with this model")
    sub.add_argument("--token-feats")
    sub.add_argument("--vocab")
    sub.set_defaults(func=cmd_dump)
    subs["dump"] = sub

    for sub in subs.values():
        _add_common(sub)
    return parser, subs


def _coerce(sub: argparse.ArgumentParser, key: str, value: str):
    dest = key.replace("-", "_")
    for action in sub._actions:
        if action.dest == dest:
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                return dest, value.strip().lower() in ("1", "true", "yes")
            if action.type is not None:
                return dest, action.type(value)
            return dest, value
    raise CorpusError(f"config file sets unknown option {key!r}")


def _apply_config(path: str, sub: argparse.ArgumentParser) -> None:
    overrides = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CorpusError(f"{path}:{lineno + 1}: expected key=value")
        key, _, value = line.partition("=")
        dest, coerced = _coerce(sub, key.strip(), value.strip())
        overrides[dest] = coerced
    sub.set_defaults(**overrides)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None):
            # Config supplies defaults only; flags given on the command
            # line survive the re-parse untouched.
            _apply_config(args.config, subs[args.command])
            args = parser.parse_args(argv)
        return args.func(args)
    except (ValueError, StorageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
