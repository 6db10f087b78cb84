"""Command-line feature exporter.

Subcommands: derive-encoder, export-tokens, export-images. Standard
output carries one JSON summary per run; progress notes go to standard
error. Derived encoders are pure functions of their flags, so every
export is bitwise reproducible from the command line alone.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import backbones
from .encoders import (
    derive_image_encoder,
    derive_text_encoder,
    load_image_encoder,
    load_text_encoder,
    save_image_encoder,
    save_text_encoder,
)
from .export import ExportError, export_image_features, export_token_features
from .wordpiece import load_vocab


def note(message: str) -> None:
    print(message, file=sys.stderr)


def cmd_derive_encoder(args) -> int:
    if args.kind == "text":
        if not args.vocab:
            raise ExportError("--vocab is required for text encoders")
        encoder = derive_text_encoder(
            load_vocab(args.vocab),
            hidden_size=args.hidden,
            max_tokens=args.max_tokens,
            seed=args.seed,
        )
        save_text_encoder(args.out, encoder)
        note(f"wrote text encoder ({len(encoder.vocab)} pieces) to {args.out}")
        summary = {
            "kind": "text",
            "pieces": len(encoder.vocab),
            "hidden_size": encoder.hidden_size,
            "feature_dim": encoder.feature_dim,
        }
    else:
        encoder = derive_image_encoder(
            width=args.width, input_size=args.input_size, seed=args.seed
        )
        save_image_encoder(args.out, encoder)
        note(f"wrote image encoder to {args.out}")
        summary = {"kind": "image", "width": encoder.width, "input_size": encoder.input_size}
    print(json.dumps(summary))
    return 0


def cmd_export_tokens(args) -> int:
    if args.backbone:
        encoder = backbones.bert_text_encoder(args.backbone)
    else:
        encoder = load_text_encoder(args.encoder)
    report = export_token_features(args.corpus, args.out, encoder, cls_path=args.cls_out)
    note(f"wrote {report.tokens} token rows ({report.sentences} sentences) to {args.out}")
    print(
        json.dumps(
            {"sentences": report.sentences, "tokens": report.tokens, "dim": report.dim}
        )
    )
    return 0


def cmd_export_images(args) -> int:
    if args.backbone:
        encoder = backbones.resnext_image_encoder(args.backbone)
    else:
        encoder = load_image_encoder(args.encoder)
    report = export_image_features(
        args.manifest, args.out, encoder, batch_size=args.batch_size
    )
    note(f"wrote {report.images} image rows to {args.out}")
    print(json.dumps({"images": report.images, "dim": report.dim}))
    return 0


def _add_encoder_source(sub: argparse.ArgumentParser, backbone_help: str) -> None:
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--encoder", help="derived encoder checkpoint (.npz)")
    group.add_argument("--backbone", help=backbone_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feature-export",
        description="Run frozen text/image encoders over corpora and image "
        "manifests, writing the alignment pipeline's feature-file inputs.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("derive-encoder", help="build a seeded frozen encoder checkpoint")
    sub.add_argument("--kind", required=True, choices=["text", "image"])
    sub.add_argument("--vocab", help="wordpiece inventory file (text encoders)")
    sub.add_argument("--hidden", type=int, default=32)
    sub.add_argument("--max-tokens", type=int, default=512)
    sub.add_argument("--width", type=int, default=64)
    sub.add_argument("--input-size", type=int, default=32)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=cmd_derive_encoder)

    sub = commands.add_parser("export-tokens", help="token and sentence features for a corpus")
    sub.add_argument("--corpus", required=True)
    _add_encoder_source(sub, "pretrained transformer name or path (needs torch + transformers)")
    sub.add_argument("--out", required=True)
    sub.add_argument("--cls-out", help="sentence feature file (default: <out stem>_cls)")
    sub.set_defaults(func=cmd_export_tokens)

    sub = commands.add_parser("export-images", help="pooled embeddings for a manifest")
    sub.add_argument("--manifest", required=True)
    _add_encoder_source(sub, "pretrained backbone state-dict path (needs torch + torchvision)")
    sub.add_argument("--out", required=True)
    sub.add_argument("--batch-size", type=int, default=32)
    sub.set_defaults(func=cmd_export_images)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
