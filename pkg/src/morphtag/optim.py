"""Adaptive-moment optimizer with global gradient-norm clipping."""

import math

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=5.0):
        self.params = dict(params)  # name -> Node
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {name: np.zeros_like(node.value) for name, node in self.params.items()}
        self.v = {name: np.zeros_like(node.value) for name, node in self.params.items()}

    def step(self, grad_table):
        """One update from a gradient table keyed by parameter node."""
        self.t += 1
        sq = 0.0
        for node in self.params.values():
            g = grad_table[node]
            sq += float((g * g).sum())
        norm = math.sqrt(sq)
        scale = self.clip_norm / norm if self.clip_norm and norm > self.clip_norm else 1.0
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, node in self.params.items():
            g = grad_table[node] * scale
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            node.value -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
