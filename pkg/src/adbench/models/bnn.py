"""Bayesian neural network trained by variational inference.

Every weight and bias has a factorized Gaussian posterior ``N(mu, sigma^2)``
with ``sigma = softplus(rho)`` and a ``N(prior_mu, prior_sigma^2)`` prior.
Training maximizes the ELBO

    E_q[log p(y | X, w)] - KL(q(w) || p(w))

with single-sample reparameterized gradients ``w = mu + sigma * eps`` and a
Gaussian likelihood of fixed noise ``noise_sigma``.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DivergedTraining
from . import nn
from .base import Regressor
from .mlp import init_layers


def softplus(rho):
    return np.logaddexp(0.0, rho)


def softplus_inv(sigma):
    return np.log(np.expm1(sigma))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def kl_gaussian(mu, sigma, prior_mu=0.0, prior_sigma=1.0):
    """Closed-form ``KL(N(mu, sigma^2) || N(prior_mu, prior_sigma^2))``, elementwise."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return (
        np.log(prior_sigma / sigma)
        + (sigma**2 + (mu - prior_mu) ** 2) / (2.0 * prior_sigma**2)
        - 0.5
    )


class BayesianNN(Regressor):
    """Mean-field variational BNN regressor.

    ``hidden`` lists the hidden widths; with the default ``(32, 16, 8)`` the
    network has four weight layers. Point predictions are the mean of
    ``mc_samples`` stochastic forward passes.
    """

    kind = "bnn"

    def __init__(self, hidden=(32, 16, 8), activation="relu", prior_mu=0.0, prior_sigma=1.0,
                 noise_sigma=0.1, lr=1e-2, epochs=200, batch_size=64, mc_samples=1000,
                 init_sigma=0.01, eval_samples=8, seed=0):
        if noise_sigma <= 0 or prior_sigma <= 0 or init_sigma <= 0:
            raise ValueError("noise_sigma, prior_sigma and init_sigma must be positive")
        if activation not in nn.ACTIVATIONS:
            raise ValueError(f"activation must be one of {nn.ACTIVATIONS}")
        super().__init__(hidden=tuple(hidden), activation=activation, prior_mu=prior_mu,
                         prior_sigma=prior_sigma, noise_sigma=noise_sigma, lr=lr, epochs=epochs,
                         batch_size=batch_size, mc_samples=mc_samples, init_sigma=init_sigma,
                         eval_samples=eval_samples, seed=seed)

    # -- parameters ---------------------------------------------------------
    @property
    def params(self):
        """Flat list ``[mu_W..., mu_b..., rho_W..., rho_b...]``."""
        return self.mu_W + self.mu_b + self.rho_W + self.rho_b

    def _unflatten(self, flat):
        k = len(self.mu_W)
        return flat[:k], flat[k:2 * k], flat[2 * k:3 * k], flat[3 * k:]

    def init_params(self, n_features, rng):
        hp = self.hyperparameters
        sizes = [n_features, *hp["hidden"], 1]
        self.mu_W, self.mu_b = init_layers(sizes, rng)
        r0 = float(softplus_inv(hp["init_sigma"]))
        self.rho_W = [np.full_like(W, r0) for W in self.mu_W]
        self.rho_b = [np.full_like(b, r0) for b in self.mu_b]
        self.n_features_ = n_features

    def kl(self) -> float:
        """Total KL divergence of the posterior from the prior."""
        hp = self.hyperparameters
        total = 0.0
        for mu, rho in zip(self.mu_W + self.mu_b, self.rho_W + self.rho_b):
            total += float(kl_gaussian(mu, softplus(rho), hp["prior_mu"], hp["prior_sigma"]).sum())
        return total

    def sample_noise(self, rng):
        return [rng.standard_normal(p.shape) for p in self.mu_W + self.mu_b]

    # -- objective ----------------------------------------------------------
    def loss_and_grads(self, X, y, eps, n_total=None):
        """Per-datapoint negative ELBO for one noise draw, and its gradients.

        The minibatch ``(X, y)`` stands in for a dataset of ``n_total`` rows
        (default ``len(X)``), so the returned value is
        ``mean_batch NLL + KL / n_total``. Gradients are with respect to
        ``self.params`` in the same order.
        """
        hp = self.hyperparameters
        n_total = X.shape[0] if n_total is None else n_total
        k = len(self.mu_W)
        eps_W, eps_b = eps[:k], eps[k:]
        sig_W = [softplus(r) for r in self.rho_W]
        sig_b = [softplus(r) for r in self.rho_b]
        W = [m + s * e for m, s, e in zip(self.mu_W, sig_W, eps_W)]
        b = [m + s * e for m, s, e in zip(self.mu_b, sig_b, eps_b)]
        out, tape = nn.forward(X, W, b, hp["activation"])

        s2 = hp["noise_sigma"] ** 2
        resid = out - y
        B = X.shape[0]
        nll = 0.5 * float(resid @ resid) / (s2 * B) + 0.5 * math.log(2 * math.pi * s2)
        kl = 0.0
        for mu, sig in zip(self.mu_W + self.mu_b, sig_W + sig_b):
            kl += float(kl_gaussian(mu, sig, hp["prior_mu"], hp["prior_sigma"]).sum())
        loss = nll + kl / n_total

        gW, gb = nn.backward(resid / (s2 * B), W, tape)
        ps2 = hp["prior_sigma"] ** 2
        g_mu, g_rho = [], []
        for g, mu, rho, sig, e in zip(gW + gb, self.mu_W + self.mu_b, self.rho_W + self.rho_b,
                                      sig_W + sig_b, eps_W + eps_b):
            dkl_dmu = (mu - hp["prior_mu"]) / ps2
            dkl_dsig = -1.0 / sig + sig / ps2
            g_mu.append(g + dkl_dmu / n_total)
            g_rho.append((g * e + dkl_dsig / n_total) * sigmoid(rho))
        return loss, g_mu[:k] + g_mu[k:] + g_rho[:k] + g_rho[k:]

    def negative_elbo(self, X, y, rng, n_samples):
        """Monte-Carlo estimate of the per-datapoint negative ELBO on ``(X, y)``."""
        return float(np.mean([self.loss_and_grads(X, y, self.sample_noise(rng))[0]
                              for _ in range(n_samples)]))

    def _fit(self, X, y):
        hp = self.hyperparameters
        rng = np.random.default_rng(hp["seed"])
        self.init_params(X.shape[1], rng)
        opt = nn.Adam(self.params, lr=hp["lr"])
        n = X.shape[0]
        bs = min(int(hp["batch_size"]), n)
        best, best_loss = None, np.inf
        for epoch in range(int(hp["epochs"])):
            order = rng.permutation(n)
            for s in range(0, n, bs):
                idx = order[s:s + bs]
                _, grads = self.loss_and_grads(X[idx], y[idx], self.sample_noise(rng), n_total=n)
                opt.step(self.params, grads)
            # common random numbers across epochs keep the checkpoint comparison fair
            loss = self.negative_elbo(X, y, np.random.default_rng(hp["seed"] + 7919),
                                      int(hp["eval_samples"]))
            if not np.isfinite(loss):
                raise DivergedTraining(epoch)
            if loss < best_loss:
                best_loss = loss
                best = [p.copy() for p in self.params]
            self.loss_trace.append(loss)
        self.mu_W, self.mu_b, self.rho_W, self.rho_b = self._unflatten(best)

    # -- prediction ---------------------------------------------------------
    def mc_predict(self, X, n_samples=None, seed=None, point_ids=None):
        """Mean and sample SD (``n - 1`` denominator) of stochastic forward passes.

        Row ``i`` is sampled with its own generator seeded by
        ``seed ^ point_ids[i]``, so results do not depend on batching or row
        order. Pre-activations are drawn from their exact Gaussian
        distribution given the previous layer (local reparameterization),
        which for a single input row has the same law as sampling the weights.
        """
        X = self._check_X(X)
        hp = self.hyperparameters
        n_samples = int(hp["mc_samples"] if n_samples is None else n_samples)
        if n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        seed = int(hp["seed"] if seed is None else seed)
        ids = np.arange(X.shape[0]) if point_ids is None else np.asarray(point_ids, dtype=np.int64)
        if ids.shape[0] != X.shape[0]:
            raise ValueError("point_ids must align with the rows of X")
        widths = [W.shape[1] for W in self.mu_W]
        var_W = [softplus(r) ** 2 for r in self.rho_W]
        var_b = [softplus(r) ** 2 for r in self.rho_b]
        last = len(widths) - 1
        mean = np.empty(X.shape[0])
        sd = np.empty(X.shape[0])
        chunk = 64
        for start in range(0, X.shape[0], chunk):
            rows = range(start, min(start + chunk, X.shape[0]))
            z = np.stack([
                np.random.default_rng(seed ^ int(ids[r])).standard_normal((n_samples, sum(widths)))
                for r in rows
            ])
            h = np.repeat(X[rows.start:rows.stop, None, :], n_samples, axis=1)
            col = 0
            for i, w in enumerate(widths):
                m = h @ self.mu_W[i] + self.mu_b[i]
                v = (h * h) @ var_W[i] + var_b[i]
                a = m + np.sqrt(v) * z[:, :, col:col + w]
                col += w
                h = nn.activate(a, "identity" if i == last else hp["activation"])
            out = h[:, :, 0]
            mean[rows.start:rows.stop] = out.mean(axis=1)
            sd[rows.start:rows.stop] = out.std(axis=1, ddof=1)
        return mean, sd

    def _predict(self, X):
        return self.mc_predict(X)[0]

    def collapse_posterior(self):
        """Test hook: set every posterior SD to zero."""
        self.rho_W = [np.full_like(r, -np.inf) for r in self.rho_W]
        self.rho_b = [np.full_like(r, -np.inf) for r in self.rho_b]

    def deterministic_forward(self, X):
        """Forward pass with every weight at its posterior mean."""
        X = self._check_X(X)
        return nn.forward(X, self.mu_W, self.mu_b, self.hyperparameters["activation"])[0]

    def get_state(self):
        state = {}
        for i in range(len(self.mu_W)):
            state[f"mu_W{i}"], state[f"rho_W{i}"] = self.mu_W[i], self.rho_W[i]
            state[f"mu_b{i}"], state[f"rho_b{i}"] = self.mu_b[i], self.rho_b[i]
        return state

    def set_state(self, state):
        k = sum(1 for key in state if key.startswith("mu_W"))
        self.mu_W = [np.asarray(state[f"mu_W{i}"]) for i in range(k)]
        self.rho_W = [np.asarray(state[f"rho_W{i}"]) for i in range(k)]
        self.mu_b = [np.asarray(state[f"mu_b{i}"]) for i in range(k)]
        self.rho_b = [np.asarray(state[f"rho_b{i}"]) for i in range(k)]
        self.n_features_ = self.mu_W[0].shape[0]


def bnn_fit_elbo(X, y, **hyperparameters) -> BayesianNN:
    return BayesianNN(**hyperparameters).fit(X, y)


def bnn_mc_predict(model: BayesianNN, X, n_samples=1000, seed=None, point_ids=None):
    return model.mc_predict(X, n_samples=n_samples, seed=seed, point_ids=point_ids)
