"""Small feed-forward networks in numpy with explicit reverse-mode gradients."""

from __future__ import annotations

import numpy as np


def silu(x):
    return x / (1.0 + np.exp(-x))


def silu_grad(x):
    sig = 1.0 / (1.0 + np.exp(-x))
    return sig * (1.0 + x * (1.0 - sig))


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def log_softmax(z):
    z = np.asarray(z, dtype=float)
    m = z.max()
    return z - (m + np.log(np.exp(z - m).sum()))


def softmax(z):
    return np.exp(log_softmax(z))


class MLP:
    """``in -> hidden... -> out`` with SiLU between layers and a linear output."""

    def __init__(self, sizes, rng=None, out_scale=0.1):
        self.sizes = tuple(int(s) for s in sizes)
        self.weights = []
        self.biases = []
        if rng is None:
            for a, b in zip(self.sizes[:-1], self.sizes[1:]):
                self.weights.append(np.zeros((a, b)))
                self.biases.append(np.zeros(b))
            return
        n_layers = len(self.sizes) - 1
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(2.0 / a) * (out_scale if i == n_layers - 1 else 1.0)
            self.weights.append(rng.standard_normal((a, b)) * scale)
            self.biases.append(np.zeros(b))

    @property
    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def zeros_like(self):
        return [np.zeros_like(a) for a in self.arrays]

    def copy(self):
        new = MLP.__new__(MLP)
        new.sizes = self.sizes
        new.weights = [w.copy() for w in self.weights]
        new.biases = [b.copy() for b in self.biases]
        return new

    def forward(self, x):
        """Returns ``(output, cache)``; ``x`` may be (n, in) or (in,)."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        inputs, pre = [], []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            if i < last:
                pre.append(z)
                h = silu(z)
            else:
                h = z
        return (h[0] if squeeze else h), (inputs, pre, squeeze)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out, grads=None):
        """Accumulate parameter gradients into ``grads`` (list aligned with
        ``arrays``) and return the gradient w.r.t. the input."""
        inputs, pre, squeeze = cache
        g = np.asarray(grad_out, dtype=float)
        if squeeze:
            g = g[None, :]
        if grads is None:
            grads = self.zeros_like()
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] += inputs[i].T @ g
            grads[2 * i + 1] += g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * silu_grad(pre[i - 1])
        return (g[0] if squeeze else g), grads


class AdamW:
    """Adam with decoupled weight decay (decay applied as ``p -= lr * wd * p``)."""

    def __init__(self, params, lr=5e-4, weight_decay=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            if self.weight_decay:
                p -= self.lr * self.weight_decay * p
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
