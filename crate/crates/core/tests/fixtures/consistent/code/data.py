import re
from collections import Counter

import numpy as np

VOCAB_SIZE = 5000
SPLIT = (0.8, 0.1, 0.1)


# Data preprocessing steps: lowercase, strip punctuation, split on whitespace.
def tokenize(text):
    text = re.sub(r"[^\w\s]", "", text.lower())
    return text.split()


def build_vocab(texts):
    counts = Counter(tok for t in texts for tok in tokenize(t))
    return {tok: i for i, (tok, _) in enumerate(counts.most_common(VOCAB_SIZE))}


def vectorize(texts, vocab):
    x = np.zeros((len(texts), len(vocab)), dtype=np.float32)
    for row, text in enumerate(texts):
        for tok in tokenize(text):
            if tok in vocab:
                x[row, vocab[tok]] = 1.0
    return x


def load_splits(rng, path="topics.tsv"):
    texts, labels = [], []
    with open(path) as f:
        for line in f:
            label, text = line.rstrip("\n").split("\t", 1)
            texts.append(text)
            labels.append(int(label))
    order = rng.permutation(len(texts))
    n_train = int(SPLIT[0] * len(order))
    n_val = int(SPLIT[1] * len(order))
    vocab = build_vocab([texts[i] for i in order[:n_train]])
    x = vectorize(texts, vocab)
    y = np.array(labels)
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return tuple((x[p], y[p]) for p in parts)
