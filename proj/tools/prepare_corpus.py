#!/usr/bin/env python3
# Copyright 2026 The egru-lm Authors
# SPDX-License-Identifier: Apache-2.0
"""Builds the bundled desk-scale corpus under data/desk/ from Moby-Dick.

The text comes from the npm package @stdlib/datasets-moby-dick (contents
CC0, data PDDL-1.0), which ships the novel as one file per chapter:

    npm pack @stdlib/datasets-moby-dick && tar xzf stdlib-datasets-moby-dick-*.tgz
    tools/prepare_corpus.py --package package --out data/desk

Preprocessing follows the usual Penn Treebank language-modelling layout:
lowercase, one sentence per line, punctuation split off as its own token,
numbers replaced by N, and every word outside the top --vocab training words
replaced by <unk>. Chapters are taken in reading order until --tokens is
reached; every tenth chapter (offset 4) goes to valid, every tenth (offset 9)
to test, the rest to train.
"""

import argparse
import collections
import json
import os
import re

TOKEN = re.compile(r"[a-z]+(?:'[a-z]+)*|[0-9][0-9,.]*|[.,;:!?]")
SENTENCE_END = {".", "!", "?"}


def sentences(text):
    text = text.lower().replace("’", "'").replace("‘", "'")
    current = []
    for tok in TOKEN.findall(text):
        current.append("N" if tok[0].isdigit() else tok)
        if tok in SENTENCE_END:
            if len(current) > 1:
                yield current
            current = []
    if len(current) > 1:
        yield current


def load_chapters(package):
    data = os.path.join(package, "data")
    with open(os.path.join(data, "file_list.json"), encoding="utf-8") as f:
        names = json.load(f)
    keep = [n for n in names if n.startswith("chapter_") or n in ("etymology.txt", "extracts.txt", "epilogue.txt")]
    chapters = []
    for name in keep:
        with open(os.path.join(data, name), encoding="utf-8") as f:
            body = f.read()
        if name.startswith("chapter_"):
            body = body.split("\n", 1)[1]  # drop the "CHAPTER n. Title." heading
        chapters.append(list(sentences(body)))
    return chapters


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--package", required=True, help="unpacked @stdlib/datasets-moby-dick directory")
    ap.add_argument("--out", default="data/desk")
    ap.add_argument("--tokens", type=int, default=200000, help="approximate corpus size, <eos> included")
    ap.add_argument("--vocab", type=int, default=3000, help="training words kept before <unk>")
    args = ap.parse_args()

    chapters, total = [], 0
    for ch in load_chapters(args.package):
        if total >= args.tokens:
            break
        chapters.append(ch)
        total += sum(len(s) + 1 for s in ch)

    splits = {"train": [], "valid": [], "test": []}
    for i, ch in enumerate(chapters):
        part = "valid" if i % 10 == 4 else "test" if i % 10 == 9 else "train"
        splits[part].extend(ch)

    counts = collections.Counter(t for s in splits["train"] for t in s)
    # Sort by (-count, word) so the kept set does not depend on Counter order.
    kept = {w for w, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: args.vocab]}

    os.makedirs(args.out, exist_ok=True)
    for name, sents in splits.items():
        lines = [" ".join(t if t in kept else "<unk>" for t in s) for s in sents]
        with open(os.path.join(args.out, name + ".txt"), "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        print(f"{name}: {len(lines)} sentences, {sum(len(l.split()) + 1 for l in lines)} tokens")


if __name__ == "__main__":
    main()
