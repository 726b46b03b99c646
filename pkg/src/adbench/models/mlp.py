"""Multilayer perceptron regressor trained with Adam."""

import numpy as np

from ..errors import DivergedTraining
from . import nn
from .base import Regressor


def init_layers(sizes, rng):
    """Glorot-uniform weights and zero biases for a layer-size list."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


class MLP(Regressor):
    """Fully connected network with squared-error loss and L2 weight decay.

    The loss recorded per epoch is the full-training-set objective; the
    parameters with the lowest recorded loss are kept at the end.
    """

    kind = "mlp"

    def __init__(self, hidden=(64,), activation="relu", lr=1e-2, epochs=200,
                 batch_size=64, l2=1e-4, seed=0):
        if activation not in nn.ACTIVATIONS:
            raise ValueError(f"activation must be one of {nn.ACTIVATIONS}")
        super().__init__(hidden=tuple(hidden), activation=activation, lr=lr, epochs=epochs,
                         batch_size=batch_size, l2=l2, seed=seed)

    @property
    def params(self):
        return self.weights_ + self.biases_

    def loss_and_grads(self, X, y, weights=None, biases=None):
        """Objective ``0.5 * mean((f - y)^2) + 0.5 * l2 * sum(W^2) / n`` and its gradients."""
        weights = self.weights_ if weights is None else weights
        biases = self.biases_ if biases is None else biases
        l2 = self.hyperparameters["l2"]
        n = X.shape[0]
        out, tape = nn.forward(X, weights, biases, self.hyperparameters["activation"])
        resid = out - y
        loss = 0.5 * float(resid @ resid) / n + 0.5 * l2 * sum(float((W * W).sum()) for W in weights) / n
        gW, gb = nn.backward(resid / n, weights, tape)
        gW = [g + l2 * W / n for g, W in zip(gW, weights)]
        return loss, gW, gb

    def _fit(self, X, y):
        hp = self.hyperparameters
        rng = np.random.default_rng(hp["seed"])
        sizes = [X.shape[1], *hp["hidden"], 1]
        self.weights_, self.biases_ = init_layers(sizes, rng)
        opt = nn.Adam(self.params, lr=hp["lr"])
        n = X.shape[0]
        bs = min(int(hp["batch_size"]), n)
        best, best_loss = None, np.inf
        for epoch in range(int(hp["epochs"])):
            order = rng.permutation(n)
            for s in range(0, n, bs):
                b = order[s:s + bs]
                _, gW, gb = self.loss_and_grads(X[b], y[b])
                opt.step(self.params, gW + gb)
            loss = self.loss_and_grads(X, y)[0]
            if not np.isfinite(loss):
                raise DivergedTraining(epoch)
            if loss < best_loss:
                best_loss = loss
                best = [p.copy() for p in self.params]
            self.loss_trace.append(loss)
        k = len(self.weights_)
        self.weights_, self.biases_ = best[:k], best[k:]

    def _predict(self, X):
        return nn.forward(X, self.weights_, self.biases_, self.hyperparameters["activation"])[0]

    def get_state(self):
        state = {}
        for i, (W, b) in enumerate(zip(self.weights_, self.biases_)):
            state[f"W{i}"], state[f"b{i}"] = W, b
        return state

    def set_state(self, state):
        k = sum(1 for key in state if key.startswith("W"))
        self.weights_ = [np.asarray(state[f"W{i}"]) for i in range(k)]
        self.biases_ = [np.asarray(state[f"b{i}"]) for i in range(k)]
        self.n_features_ = self.weights_[0].shape[0]
