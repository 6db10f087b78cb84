#!/usr/bin/env python3
"""Grounding-ratio comparison between a caption corpus and text corpora.

Builds the visually grounded token set from the captions (types with
more than --threshold occurrences after stop-word and punctuation
removal), then reports what fraction of each corpus's token occurrences
it covers. Useful for quantifying how much of ordinary text a
caption-trained retriever can hope to ground.
"""

import argparse
import json
import sys

from vokenizer.corpus import load_corpus
from vokenizer.stats import build_grounded_set, default_stopwords, grounding_ratio


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--captions", required=True, help="caption corpus (one sentence per line)")
    parser.add_argument("--corpus", required=True, nargs="+", help="corpora to score")
    parser.add_argument("--threshold", type=int, default=100)
    parser.add_argument("--sample-tokens", type=int, default=10,
                        help="grounded types to print as a sanity sample")
    args = parser.parse_args(argv)

    stopwords = default_stopwords()
    captions = load_corpus(args.captions, "whitespace")
    grounded = build_grounded_set(captions, stopwords, args.threshold)
    sample = sorted(grounded.token_types)[: args.sample_tokens]
    print(f"grounded set: {len(grounded.token_types)} types, e.g. {sample}", file=sys.stderr)

    ratios = {}
    for path in args.corpus:
        corpus = load_corpus(path, "whitespace")
        ratios[path] = round(grounding_ratio(corpus, grounded, stopwords), 4)
    print(json.dumps({"threshold": args.threshold, "grounding_ratio": ratios}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
