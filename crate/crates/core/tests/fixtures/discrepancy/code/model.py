import numpy as np

VOCAB_SIZE = 5000
HIDDEN_UNITS = 256
NUM_CLASSES = 8
DROPOUT = 0.1


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class GateMLP:
    """Model architecture: bag-of-words input, sigmoid-gated hidden layer,
    dropout, and a linear output layer over the topic labels."""

    def __init__(self, rng):
        scale = 1.0 / np.sqrt(VOCAB_SIZE)
        self.w_value = rng.normal(0, scale, (VOCAB_SIZE, HIDDEN_UNITS))
        self.w_gate = rng.normal(0, scale, (VOCAB_SIZE, HIDDEN_UNITS))
        self.w_out = rng.normal(0, 1.0 / np.sqrt(HIDDEN_UNITS), (HIDDEN_UNITS, NUM_CLASSES))

    def forward(self, x, train=False, rng=None):
        # Gated procedure, step by step: value and gate projections, sigmoid
        # gate, elementwise product, dropout, output projection.
        value = x @ self.w_value
        gate = sigmoid(x @ self.w_gate)
        hidden = value * gate
        if train:
            keep = rng.random(hidden.shape) >= DROPOUT
            hidden = hidden * keep / (1.0 - DROPOUT)
        return hidden @ self.w_out
