#!/usr/bin/env python3
"""Convert the multi-domain product-review corpus (processed_acl layout)
into the extended LIBSVM format the loaders read.

Expected input directory:

    <input>/books/positive.review
    <input>/books/negative.review
    <input>/dvd/...
    <input>/electronics/...
    <input>/kitchen/...

Each line is `token:count ... #label#:positive|negative` with bigrams
joined by underscores.  The feature space is the N most frequent tokens
(unigrams + bigrams) over all labeled reviews, counted by total occurrence;
ties break lexicographically so the vocabulary is deterministic.

Output lines: `<label> <task> <idx>:<count> ...` with 1-based ascending
indices; task ids follow the domain order above.
"""
import argparse
import os
import sys
from collections import Counter

DOMAINS = ["books", "dvd", "electronics", "kitchen"]
FILES = [("positive.review", 1), ("negative.review", 0)]


def parse_line(line):
    tokens = {}
    label = None
    for tok in line.split():
        key, _, val = tok.rpartition(":")
        if key == "#label#":
            label = 1 if val.strip() == "positive" else 0
        else:
            try:
                tokens[key] = tokens.get(key, 0) + int(float(val))
            except ValueError:
                continue
    return tokens, label


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--input", required=True, help="processed_acl directory")
    ap.add_argument("--out", required=True, help="output .libsvm path")
    ap.add_argument("--n-terms", type=int, default=5000)
    args = ap.parse_args()

    reviews = []  # (task_id, label, token counts)
    counts = Counter()
    for task_id, domain in enumerate(DOMAINS):
        for fname, file_label in FILES:
            path = os.path.join(args.input, domain, fname)
            if not os.path.exists(path):
                sys.exit(f"missing {path}; point --input at the processed_acl directory")
            with open(path, encoding="utf-8", errors="replace") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    tokens, label = parse_line(line)
                    if label is None:
                        label = file_label
                    reviews.append((task_id, label, tokens))
                    counts.update(tokens)

    vocab = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: args.n_terms]
    index = {term: i + 1 for i, (term, _) in enumerate(vocab)}  # 1-based

    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    n_written = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for task_id, label, tokens in reviews:
            feats = sorted((index[t], c) for t, c in tokens.items() if t in index)
            parts = [str(label), str(task_id)]
            parts += [f"{i}:{c}" for i, c in feats]
            out.write(" ".join(parts) + "\n")
            n_written += 1

    print(f"wrote {n_written} reviews, {len(index)} terms -> {args.out}")


if __name__ == "__main__":
    main()
