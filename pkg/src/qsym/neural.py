"""Small numpy learning kernels: dense layers, LSTM cell, Adam, variety loss.

Every layer keeps its parameters in plain float64 arrays and exposes a
forward function returning ``(output, cache)`` plus a backward function that
maps an upstream gradient to parameter and input gradients. Caches are
ordinary tuples, so one parameter snapshot can serve several forward passes
concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .core import ContractError

IDENTITY = "identity"
RELU = "relu"
ACTIVATIONS = (IDENTITY, RELU)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form stays finite for any finite input
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = IDENTITY

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ContractError(
                f"dense shapes disagree: weights {self.weights.shape}, bias {self.bias.shape}"
            )

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator, activation: str = IDENTITY):
        return cls(
            uniform_init(rng, (n_out, n_in), n_in),
            uniform_init(rng, (n_out,), n_in),
            activation,
        )

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}


def dense_forward(layer: DenseLayer, x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise ContractError(f"dense input must be (batch, {layer.n_in}), got {x.shape}")
    pre = x @ layer.weights.T + layer.bias
    out = np.maximum(pre, 0.0) if layer.activation == RELU else pre
    return out, (x, pre)


def dense_backward(layer: DenseLayer, cache, upstream: np.ndarray):
    """Return ``({"weights": dW, "bias": db}, dx)``."""
    x, pre = cache
    if upstream.shape != pre.shape:
        raise ContractError(f"upstream gradient shape {upstream.shape} != {pre.shape}")
    d = upstream * (pre > 0.0) if layer.activation == RELU else upstream
    grads = {"weights": d.T @ x, "bias": d.sum(axis=0)}
    return grads, d @ layer.weights


@dataclass
class LstmCell:
    """Gates stacked in the order input, forget, output, candidate."""

    w_x: np.ndarray  # (4H, in)
    w_h: np.ndarray  # (4H, H)
    bias: np.ndarray  # (4H,)

    def __post_init__(self) -> None:
        h4 = self.w_h.shape[0]
        if h4 % 4 or self.w_h.shape != (h4, h4 // 4) or self.w_x.shape[0] != h4 or self.bias.shape != (h4,):
            raise ContractError(
                f"LSTM shapes disagree: w_x {self.w_x.shape}, w_h {self.w_h.shape}, bias {self.bias.shape}"
            )

    @classmethod
    def init(cls, n_in: int, hidden: int, rng: np.random.Generator):
        return cls(
            uniform_init(rng, (4 * hidden, n_in), n_in),
            uniform_init(rng, (4 * hidden, hidden), hidden),
            uniform_init(rng, (4 * hidden,), hidden),
        )

    @property
    def hidden(self) -> int:
        return self.w_h.shape[1]

    @property
    def n_in(self) -> int:
        return self.w_x.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"w_x": self.w_x, "w_h": self.w_h, "bias": self.bias}


def lstm_step(cell: LstmCell, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """One recurrence step; returns ``(h_next, c_next, cache)``."""
    H = cell.hidden
    if x.ndim != 2 or x.shape[1] != cell.n_in:
        raise ContractError(f"LSTM input must be (batch, {cell.n_in}), got {x.shape}")
    if h.shape != (x.shape[0], H) or c.shape != h.shape:
        raise ContractError(f"LSTM state must be ({x.shape[0]}, {H}), got {h.shape}, {c.shape}")
    z = x @ cell.w_x.T + h @ cell.w_h.T + cell.bias
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H : 2 * H])
    o = sigmoid(z[:, 2 * H : 3 * H])
    g = np.tanh(z[:, 3 * H :])
    c_next = f * c + i * g
    tc = np.tanh(c_next)
    h_next = o * tc
    return h_next, c_next, (x, h, c, i, f, o, g, tc)


def lstm_step_backward(cell: LstmCell, cache, dh_next: np.ndarray, dc_next: np.ndarray):
    """Return ``(grads, dx, dh, dc)`` for one step."""
    x, h, c, i, f, o, g, tc = cache
    do = dh_next * tc
    dc_total = dc_next + dh_next * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [
            dc_total * g * i * (1.0 - i),
            dc_total * c * f * (1.0 - f),
            do * o * (1.0 - o),
            dc_total * i * (1.0 - g * g),
        ],
        axis=1,
    )
    grads = {"w_x": dz.T @ x, "w_h": dz.T @ h, "bias": dz.sum(axis=0)}
    return grads, dz @ cell.w_x, dz @ cell.w_h, dc_total * f


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    moments: tuple[Mapping[str, np.ndarray], Mapping[str, np.ndarray]],
    step_index: int,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Bias-corrected Adam update. Returns ``(params, (m, v))`` as new dicts."""
    if step_index < 1:
        raise ContractError("Adam step_index starts at 1")
    m_prev, v_prev = moments
    new_p, new_m, new_v = {}, {}, {}
    c1 = 1.0 - beta1**step_index
    c2 = 1.0 - beta2**step_index
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = beta1 * m_prev[name] + (1.0 - beta1) * g
        v = beta2 * v_prev[name] + (1.0 - beta2) * g * g
        new_p[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[name], new_v[name] = m, v
    return new_p, (new_m, new_v)


def zero_moments(params: Mapping[str, np.ndarray]):
    return (
        {k: np.zeros_like(v) for k, v in params.items()},
        {k: np.zeros_like(v) for k, v in params.items()},
    )


def variety_loss(pred_samples, gt) -> float:
    """Minimum over samples of the mean squared displacement to ``gt``.

    ``pred_samples`` is ``(k, T, D)``; ``gt`` is ``(T, D)``.
    """
    p = np.asarray(pred_samples, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.ndim != 3 or p.shape[0] < 1 or p.shape[1:] != g.shape:
        raise ContractError(f"variety loss shapes: samples {p.shape}, gt {g.shape}")
    return float(np.min(np.mean(np.sum((p - g) ** 2, axis=-1), axis=-1)))


def variety_loss_batch(pred: np.ndarray, gt: np.ndarray):
    """Batched variety loss and its gradient.

    pred: (k, N, T, D), gt: (N, T, D). The loss is the mean over the N
    trajectories of the per-trajectory minimum over k.
    """
    if pred.ndim != 4 or pred.shape[1:] != gt.shape:
        raise ContractError(f"variety loss shapes: pred {pred.shape}, gt {gt.shape}")
    k, n, T, _ = pred.shape
    diff = pred - gt[None]
    per = np.mean(np.sum(diff * diff, axis=-1), axis=-1)  # (k, N)
    best = np.argmin(per, axis=0)
    cols = np.arange(n)
    loss = float(np.mean(per[best, cols]))
    grad = np.zeros_like(pred)
    grad[best, cols] = diff[best, cols] * (2.0 / (T * n))
    return loss, grad


def numerical_gradient(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of ``f`` with respect to ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> float:
    """Norm-wise relative error between two gradient arrays."""
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(num / den)
