"""Small trainable regression denoiser: tanh MLP on (x, half-log-SNR).

The network predicts ε from a noisy sample and its retention level ᾱ, which
enters as one extra input feature λ/4 with λ = ½·log(ᾱ/(1−ᾱ)) (well spread
over the usual schedule range, unlike ᾱ itself which pins to 0/1).  Training
is plain stochastic minimization of the squared noise-prediction error with
Adam; everything is numpy and bit-deterministic given the seed.

Intended for desk-scale data (d ≤ 16); there is deliberately no convolution,
conditioning network, or GPU path.
"""

from dataclasses import dataclass, field

import numpy as np

from .artifacts import read_array_container, write_array_container
from .forward import NoiseSchedule
from .seeding import child_rng
from .trajectory import half_log_snr
from .denoisers import Denoiser

__all__ = ["MlpDenoiser", "train_mlp_denoiser"]

_LAMBDA_SCALE = 4.0
_MAX_D = 16


class MlpDenoiser(Denoiser):
    """Fully-connected tanh network; weights fixed after construction."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray],
                 label: str = "mlp"):
        if len(weights) != len(biases) or not weights:
            raise ValueError("weights and biases must align")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.d = self.weights[-1].shape[1]
        if self.weights[0].shape[0] != self.d + 1:
            raise ValueError("first layer must take d + 1 inputs (x and λ feature)")
        self.label = label

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights[:-1])

    def _features(self, x2d, alpha_bar):
        lam = half_log_snr(alpha_bar) / _LAMBDA_SCALE
        col = np.full((x2d.shape[0], 1), lam)
        return np.concatenate([x2d, col], axis=1)

    def _forward(self, feats):
        h = feats
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
        return h @ self.weights[-1] + self.biases[-1]

    def _predict(self, x2d, alpha_bar, seed):
        if not (0.0 < alpha_bar < 1.0):
            raise ValueError(f"alpha_bar {alpha_bar} outside (0, 1)")
        if x2d.shape[1] != self.d:
            raise ValueError(f"expected {self.d}-dimensional samples, got {x2d.shape[1]}")
        return self._forward(self._features(x2d, alpha_bar))

    def save(self, path) -> None:
        header = {
            "format": "mlp-denoiser",
            "version": 1,
            "d": self.d,
            "hidden": list(self.hidden),
            "lambda_scale": _LAMBDA_SCALE,
            "label": self.label,
        }
        arrays = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        write_array_container(path, header, arrays)

    @staticmethod
    def load(path) -> "MlpDenoiser":
        header, arrays = read_array_container(path)
        if header.get("format") != "mlp-denoiser":
            raise ValueError(f"{path}: not an MLP denoiser container")
        n_layers = len(header["hidden"]) + 1
        weights = [arrays[f"W{i}"] for i in range(n_layers)]
        biases = [arrays[f"b{i}"] for i in range(n_layers)]
        return MlpDenoiser(weights, biases, label=header.get("label", "mlp"))


@dataclass
class _Adam:
    """Adam state for one parameter list."""

    params: list[np.ndarray]
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def train_mlp_denoiser(dataset: np.ndarray, schedule: NoiseSchedule,
                       hidden: tuple[int, ...] = (64, 64), steps: int = 4000,
                       batch_size: int = 256, learning_rate: float = 1e-3,
                       seed: int = 0, label: str = "mlp") -> MlpDenoiser:
    """Fit the ε-prediction objective on a dataset by minibatch Adam.

    Each step draws (sample, timestep, noise) triples with t uniform on
    [1, T], forms the noisy input, and minimizes the mean squared prediction
    error.  steps = 0 returns the network at initialization.  Raises
    RuntimeError if the loss goes non-finite.
    """
    dataset = np.atleast_2d(np.asarray(dataset, dtype=float))
    n, d = dataset.shape
    if n < 1:
        raise ValueError("dataset must be nonempty")
    if d > _MAX_D:
        raise ValueError(f"d = {d} too large for the desk-scale regressor (max {_MAX_D})")
    if steps < 0 or batch_size < 1:
        raise ValueError("steps must be >= 0 and batch_size >= 1")

    init_rng = child_rng(seed, "init")
    sizes = [d + 1, *hidden, d]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(scale * init_rng.standard_normal((fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    net = MlpDenoiser(weights, biases, label=label)

    params = [*net.weights, *net.biases]
    opt = _Adam(params, lr=learning_rate)
    rng = child_rng(seed, "train")
    lam_t = half_log_snr(schedule.alpha_bar_t) / _LAMBDA_SCALE

    for it in range(steps):
        idx = rng.integers(0, n, size=batch_size)
        t = rng.integers(1, schedule.T + 1, size=batch_size)
        ab = schedule.alpha_bar_t[t - 1]
        eps = rng.standard_normal((batch_size, d))
        x0 = dataset[idx]
        x_t = np.sqrt(ab)[:, None] * x0 + np.sqrt(1.0 - ab)[:, None] * eps
        feats = np.concatenate([x_t, lam_t[t - 1][:, None]], axis=1)

        # forward, caching activations
        acts = [feats]
        h = feats
        for w, b in zip(net.weights[:-1], net.biases[:-1]):
            h = np.tanh(h @ w + b)
            acts.append(h)
        out = h @ net.weights[-1] + net.biases[-1]

        resid = out - eps
        loss = float(np.mean(resid**2))
        if not np.isfinite(loss):
            raise RuntimeError(
                f"training diverged at step {it}: loss is not finite "
                f"(lr={learning_rate}, batch={batch_size})")

        # backward
        grad = 2.0 * resid / resid.size
        w_grads = [None] * len(net.weights)
        b_grads = [None] * len(net.biases)
        for layer in range(len(net.weights) - 1, -1, -1):
            w_grads[layer] = acts[layer].T @ grad
            b_grads[layer] = grad.sum(axis=0)
            if layer > 0:
                grad = (grad @ net.weights[layer].T) * (1.0 - acts[layer] ** 2)
        opt.step([*w_grads, *b_grads])

    return net
