"""Local learners: L2-regularized softmax regression, plus a small MLP.

The softmax learner is convex, Lipschitz and smooth on the bounded iterate
region, so the convergence diagnostics apply to it. Parameters travel as flat
vectors; each learner knows how to reshape them. Batched variants step every
device at once on stacked arrays, which is where the simulation spends its
time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, TrainingError


@dataclass(frozen=True)
class LearnerState:
    weights: np.ndarray        # (d+1, C), bias row last
    eta: float
    l2: float


def augment(features: np.ndarray) -> np.ndarray:
    """Append the constant bias feature."""
    ones = np.ones(features.shape[:-1] + (1,))
    return np.concatenate([features, ones], axis=-1)


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _l2_mask(weights: np.ndarray) -> np.ndarray:
    """Regularize everything except the bias row."""
    mask = np.ones_like(weights)
    mask[..., -1, :] = 0.0
    return mask * weights


def softmax_loss(weights: np.ndarray, features_aug: np.ndarray,
                 labels: np.ndarray, l2: float) -> float:
    """Mean cross-entropy plus (l2/2)*||W||^2 over the non-bias rows."""
    logits = features_aug @ weights
    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    nll = -log_probs[np.arange(labels.shape[0]), labels].mean()
    reg = 0.5 * l2 * float(np.sum(weights[:-1] ** 2))
    return float(nll) + reg


def softmax_grad(weights: np.ndarray, features_aug: np.ndarray,
                 labels: np.ndarray, l2: float) -> np.ndarray:
    probs = _softmax(features_aug @ weights)
    probs[np.arange(labels.shape[0]), labels] -= 1.0
    grad = features_aug.T @ probs / labels.shape[0]
    return grad + l2 * _l2_mask(weights)


def local_step(state: LearnerState, features: np.ndarray,
               labels: np.ndarray, eta: float | None = None) -> LearnerState:
    """One full-batch gradient step on the device's data."""
    eta = state.eta if eta is None else eta
    grad = softmax_grad(state.weights, augment(features), labels, state.l2)
    weights = state.weights - eta * grad
    if not np.all(np.isfinite(weights)):
        raise TrainingError("weights overflowed during local step")
    return LearnerState(weights=weights, eta=state.eta, l2=state.l2)


def softmax_accuracy(weights: np.ndarray, features: np.ndarray,
                     labels: np.ndarray) -> float:
    pred = np.argmax(augment(features) @ weights, axis=-1)
    return float(np.mean(pred == labels))


def batched_softmax_grad(weights: np.ndarray, features_aug: np.ndarray,
                         onehots: np.ndarray, l2: float) -> np.ndarray:
    """Gradients for a stack of devices: (D, d+1, C) from (D, n, d+1) data."""
    probs = _softmax(np.einsum("dnf,dfc->dnc", features_aug, weights))
    diff = probs - onehots
    grads = np.einsum("dnf,dnc->dfc", features_aug, diff) / features_aug.shape[1]
    return grads + l2 * _l2_mask(weights)


def batched_softmax_loss(weights: np.ndarray, features_aug: np.ndarray,
                         onehots: np.ndarray, l2: float) -> np.ndarray:
    """Per-device losses for a stack of devices."""
    logits = np.einsum("dnf,dfc->dnc", features_aug, weights)
    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    nll = -(onehots * log_probs).sum(axis=-1).mean(axis=-1)
    reg = 0.5 * l2 * np.sum(weights[:, :-1, :] ** 2, axis=(1, 2))
    return nll + reg


class SoftmaxLearner:
    """Flat-vector adapter around the softmax regression functions."""

    name = "softmax"
    convex = True

    def __init__(self, d: int, n_classes: int, l2: float,
                 init_scale: float = 1.0):
        self.d = d
        self.n_classes = n_classes
        self.l2 = l2
        self.init_scale = init_scale
        self.n_params = (d + 1) * n_classes

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        if self.init_scale == 0.0:
            return np.zeros(self.n_params)
        return rng.standard_normal(self.n_params) * self.init_scale

    def _shape(self, flat: np.ndarray) -> np.ndarray:
        return flat.reshape(flat.shape[:-1] + (self.d + 1, self.n_classes))

    def grad(self, flat: np.ndarray, features_aug: np.ndarray,
             onehots: np.ndarray) -> np.ndarray:
        g = batched_softmax_grad(self._shape(flat), features_aug, onehots,
                                 self.l2)
        return g.reshape(flat.shape)

    def loss(self, flat: np.ndarray, features_aug: np.ndarray,
             onehots: np.ndarray) -> np.ndarray:
        return batched_softmax_loss(self._shape(flat), features_aug, onehots,
                                    self.l2)

    def accuracy(self, flat: np.ndarray, features: np.ndarray,
                 labels: np.ndarray) -> float:
        return softmax_accuracy(self._shape(flat), features, labels)


class MlpLearner:
    """One-hidden-layer tanh network; nonconvex, diagnostics are skipped."""

    name = "mlp"
    convex = False

    def __init__(self, d: int, n_classes: int, l2: float, hidden: int = 16):
        self.d = d
        self.n_classes = n_classes
        self.l2 = l2
        self.hidden = hidden
        self.n_w1 = (d + 1) * hidden
        self.n_params = self.n_w1 + (hidden + 1) * n_classes

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        w1 = rng.standard_normal((self.d + 1, self.hidden)) / np.sqrt(self.d + 1)
        w2 = rng.standard_normal((self.hidden + 1, self.n_classes)) / np.sqrt(self.hidden + 1)
        return np.concatenate([w1.ravel(), w2.ravel()])

    def _split(self, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lead = flat.shape[:-1]
        w1 = flat[..., :self.n_w1].reshape(lead + (self.d + 1, self.hidden))
        w2 = flat[..., self.n_w1:].reshape(lead + (self.hidden + 1, self.n_classes))
        return w1, w2

    def _forward(self, flat, features_aug):
        w1, w2 = self._split(flat)
        h = np.tanh(np.einsum("dnf,dfh->dnh", features_aug, w1))
        h_aug = np.concatenate([h, np.ones(h.shape[:-1] + (1,))], axis=-1)
        logits = np.einsum("dnh,dhc->dnc", h_aug, w2)
        return w1, w2, h, h_aug, logits

    def grad(self, flat: np.ndarray, features_aug: np.ndarray,
             onehots: np.ndarray) -> np.ndarray:
        w1, w2, h, h_aug, logits = self._forward(flat, features_aug)
        n = features_aug.shape[1]
        diff = _softmax(logits) - onehots
        g2 = np.einsum("dnh,dnc->dhc", h_aug, diff) / n
        back = np.einsum("dnc,dhc->dnh", diff, w2[..., :-1, :]) * (1 - h ** 2)
        g1 = np.einsum("dnf,dnh->dfh", features_aug, back) / n
        g1 = g1 + self.l2 * _l2_mask(w1)
        g2 = g2 + self.l2 * _l2_mask(w2)
        lead = flat.shape[:-1]
        return np.concatenate([g1.reshape(lead + (-1,)),
                               g2.reshape(lead + (-1,))], axis=-1)

    def loss(self, flat: np.ndarray, features_aug: np.ndarray,
             onehots: np.ndarray) -> np.ndarray:
        w1, w2, _, _, logits = self._forward(flat, features_aug)
        z = logits - logits.max(axis=-1, keepdims=True)
        log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        nll = -(onehots * log_probs).sum(axis=-1).mean(axis=-1)
        reg = 0.5 * self.l2 * (np.sum(w1[..., :-1, :] ** 2, axis=(-2, -1))
                               + np.sum(w2[..., :-1, :] ** 2, axis=(-2, -1)))
        return nll + reg

    def accuracy(self, flat: np.ndarray, features: np.ndarray,
                 labels: np.ndarray) -> float:
        aug = augment(features)[None, :, :]
        _, _, _, _, logits = self._forward(flat[None, :], aug)
        pred = np.argmax(logits[0], axis=-1)
        return float(np.mean(pred == labels))


def make_learner(name: str, d: int, n_classes: int, l2: float,
                 hidden: int = 16, init_scale: float = 1.0):
    if name == "softmax":
        return SoftmaxLearner(d, n_classes, l2, init_scale)
    if name == "mlp":
        return MlpLearner(d, n_classes, l2, hidden)
    raise ConfigurationError(f"unknown learner {name!r}")
