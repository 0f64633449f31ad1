"""Reward baseline V(x) used for advantage estimation.

Features are input-only: one hashed bucket per (character, left context)
position plus a reserved intercept bucket, mirroring the policy's hashing
scheme but over the observation alone.  Two architectures are available:

* ``linear`` -- ridge regression in dual form, refit in closed form each
  update; exact on the batch up to the tiny ridge term.
* ``mlp`` -- one tanh hidden layer of width 32, refit by full-batch
  gradient steps.

Predictions are clamped to [0, 1] to match the reward range.
"""

from __future__ import annotations

import numpy as np

from .hashing import fnv1a64, mix_seed

HIDDEN_WIDTH = 32
_RIDGE = 1e-8
_MLP_STEPS = 200
_MLP_LR = 0.05

VALUE_KINDS = ("linear", "mlp")


class ValueBaseline:
    def __init__(self, kind: str = "linear", buckets: int = 4096, seed: int = 0):
        if kind not in VALUE_KINDS:
            raise ValueError(f"value kind must be one of {VALUE_KINDS}, got {kind!r}")
        self.kind = kind
        self.buckets = buckets
        if kind == "linear":
            self.w = np.zeros(buckets, dtype=np.float64)
        else:
            rng = np.random.default_rng(mix_seed(seed, 0x7A1))
            self.w1 = rng.normal(0.0, 0.05, size=(HIDDEN_WIDTH, buckets))
            self.b1 = np.zeros(HIDDEN_WIDTH, dtype=np.float64)
            self.w2 = rng.normal(0.0, 0.05, size=HIDDEN_WIDTH)
            self.b2 = 0.0

    def features(self, x: str) -> np.ndarray:
        """Bucket-count vector of (char, left-context) pairs; bucket 0 is 1."""
        psi = np.zeros(self.buckets, dtype=np.float64)
        psi[0] = 1.0
        left = "\x02"
        for ch in x:
            psi[1 + fnv1a64(f"obs\x1f{ch}\x1f{left}") % (self.buckets - 1)] += 1.0
            left = ch
        return psi

    def _raw(self, psi: np.ndarray) -> float:
        if self.kind == "linear":
            return float(self.w @ psi)
        h = np.tanh(self.w1 @ psi + self.b1)
        return float(self.w2 @ h + self.b2)

    def predict(self, x: str) -> float:
        return float(np.clip(self._raw(self.features(x)), 0.0, 1.0))

    def refit(self, inputs: list[str], targets: np.ndarray) -> None:
        """Fit V to (input, mean reward) pairs from one rollout batch."""
        targets = np.asarray(targets, dtype=np.float64)
        phi = np.stack([self.features(x) for x in inputs])
        if self.kind == "linear":
            # Dual ridge: w = Phiᵀ (Phi Phiᵀ + λI)⁻¹ y, exact on the batch
            # for λ → 0 and much cheaper than solving in feature space.
            gram = phi @ phi.T
            gram[np.diag_indices_from(gram)] += _RIDGE
            self.w = phi.T @ np.linalg.solve(gram, targets)
            return
        n = len(inputs)
        for _ in range(_MLP_STEPS):
            z = phi @ self.w1.T + self.b1
            h = np.tanh(z)
            pred = h @ self.w2 + self.b2
            err = pred - targets
            d_out = 2.0 * err / n
            g_w2 = h.T @ d_out
            g_b2 = float(np.sum(d_out))
            d_h = np.outer(d_out, self.w2) * (1.0 - h**2)
            g_w1 = d_h.T @ phi
            g_b1 = d_h.sum(axis=0)
            self.w2 -= _MLP_LR * g_w2
            self.b2 -= _MLP_LR * g_b2
            self.w1 -= _MLP_LR * g_w1
            self.b1 -= _MLP_LR * g_b1

    def param_arrays(self) -> list[np.ndarray]:
        """Flat parameter arrays in serialization order."""
        if self.kind == "linear":
            return [self.w]
        return [self.w1, self.b1, self.w2, np.array([self.b2])]

    def load_param_arrays(self, arrays: list[np.ndarray]) -> None:
        if self.kind == "linear":
            (self.w,) = (arrays[0].astype(np.float64),)
            self.buckets = self.w.shape[0]
        else:
            self.w1 = arrays[0].astype(np.float64)
            self.b1 = arrays[1].astype(np.float64)
            self.w2 = arrays[2].astype(np.float64)
            self.b2 = float(arrays[3][0])
            self.buckets = self.w1.shape[1]
