"""Dense layers with hand-written reverse-mode gradients.

Used by both the MLP and the Bayesian network. A forward pass records the
layer inputs and pre-activations; ``backward`` walks the layers in reverse
and accumulates parameter gradients from the output gradient.
"""

import numpy as np

ACTIVATIONS = ("tanh", "relu", "identity")


def activate(a, name):
    if name == "tanh":
        return np.tanh(a)
    if name == "relu":
        return np.maximum(a, 0.0)
    return a


def activate_grad(a, h, name):
    """Derivative of the activation, given pre-activation ``a`` and output ``h``."""
    if name == "tanh":
        return 1.0 - h * h
    if name == "relu":
        return (a > 0).astype(a.dtype)
    return np.ones_like(a)


def forward(X, weights, biases, activation):
    """Run the stack; the last layer is linear. Returns output and a tape."""
    tape = []
    h = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        a = h @ W + b
        act = "identity" if i == last else activation
        out = activate(a, act)
        tape.append((h, a, out, act))
        h = out
    return h[:, 0], tape


def backward(grad_out, weights, tape):
    """Gradients of a scalar loss w.r.t. every weight and bias.

    ``grad_out`` is dLoss/dOutput with shape ``(n,)``.
    """
    g = grad_out[:, None]
    gW, gb = [None] * len(weights), [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        h_in, a, out, act = tape[i]
        g = g * activate_grad(a, out, act)
        gW[i] = h_in.T @ g
        gb[i] = g.sum(axis=0)
        if i:
            g = g @ weights[i].T
    return gW, gb


class Adam:
    """Adam update over a flat list of parameter arrays (in place)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
