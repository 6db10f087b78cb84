#!/usr/bin/env python3
"""Materialize the synthetic caption/image fixture as pipeline input files.

The fixture has known cluster structure, so the written corpus, caption
pairs, features, and manifest drive the full CLI pipeline end to end
with an exact precision oracle (heldout_labels.tsv).
"""

import argparse
import json
import sys

from vokenizer.synthetic import SyntheticConfig, generate, write_fixture


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    defaults = SyntheticConfig()
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--clusters", type=int, default=defaults.n_clusters)
    parser.add_argument("--images", type=int, default=defaults.n_images)
    parser.add_argument("--train-sentences", type=int, default=defaults.n_train_sentences)
    parser.add_argument("--heldout-sentences", type=int, default=defaults.n_heldout_sentences)
    parser.add_argument("--tokens-per-sentence", type=int, default=defaults.tokens_per_sentence)
    parser.add_argument("--token-dim", type=int, default=defaults.token_dim)
    parser.add_argument("--image-dim", type=int, default=defaults.image_dim)
    parser.add_argument("--noise", type=float, default=defaults.noise)
    parser.add_argument("--seed", type=int, default=defaults.seed)
    args = parser.parse_args(argv)

    config = SyntheticConfig(
        n_clusters=args.clusters,
        n_images=args.images,
        n_train_sentences=args.train_sentences,
        n_heldout_sentences=args.heldout_sentences,
        tokens_per_sentence=args.tokens_per_sentence,
        token_dim=args.token_dim,
        image_dim=args.image_dim,
        noise=args.noise,
        seed=args.seed,
    )
    paths = write_fixture(args.out, generate(config))
    print(json.dumps({name: str(path) for name, path in sorted(paths.items())}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
