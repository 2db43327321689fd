#!/usr/bin/env python3
"""Reference feature-hash embedder, written from the definition alone.

Reads a JSON list of strings and writes, for each string, either null (no
tokens) or the sparse list of [index, value] pairs of the normalized vector.

    python3 feature_hash.py corpus.json oracle.json [dim]
"""
import json
import math
import sys

OFFSET = 0xCBF29CE484222325
PRIME = 0x100000001B3
MASK = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = OFFSET
    for b in data:
        h ^= b
        h = (h * PRIME) & MASK
    return h


def tokens(text: str):
    current = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            yield "".join(current)
            current = []
    if current:
        yield "".join(current)


def embed(text: str, dim: int):
    acc = [0] * dim
    for tok in tokens(text):
        h = fnv1a64(tok.encode("utf-8"))
        acc[h % dim] += -1 if h >> 63 else 1
    norm = math.sqrt(sum(x * x for x in acc))
    if norm == 0:
        return None
    return [[i, x / norm] for i, x in enumerate(acc) if x != 0]


def main():
    corpus_path, out_path = sys.argv[1], sys.argv[2]
    dim = int(sys.argv[3]) if len(sys.argv) > 3 else 384
    corpus = json.load(open(corpus_path, encoding="utf-8"))
    result = {"dim": dim, "vectors": [embed(t, dim) for t in corpus]}
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(result, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
