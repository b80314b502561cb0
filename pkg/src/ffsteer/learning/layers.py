"""Flat parameter storage, dense and LSTM layers with manual backprop, Adam."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ParamSet:
    """All trainable tensors of a model in one contiguous float64 vector.

    ``view(name)`` returns a reshaped view into ``theta``, so optimizers can
    work on the flat vector while layers read named tensors. The same
    layout is used for gradients (:meth:`grad_views`).
    """

    def __init__(self, shapes: dict[str, tuple]):
        self.shapes = {k: tuple(int(d) for d in v) for k, v in shapes.items()}
        self.offsets = {}
        n = 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape)) if shape else 1
            self.offsets[name] = (n, size)
            n += size
        self.size = n
        self.theta = np.zeros(n)

    def __contains__(self, name: str) -> bool:
        return name in self.shapes

    def _slice(self, vec: np.ndarray, name: str) -> np.ndarray:
        o, size = self.offsets[name]
        return vec[o : o + size].reshape(self.shapes[name])

    def view(self, name: str) -> np.ndarray:
        return self._slice(self.theta, name)

    def grad_views(self, grad: np.ndarray) -> dict[str, np.ndarray]:
        return {name: self._slice(grad, name) for name in self.shapes}

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def copy(self) -> "ParamSet":
        other = ParamSet(self.shapes)
        other.theta[:] = self.theta
        return other

    def to_dict(self) -> dict:
        return {name: self.view(name).tolist() for name in self.shapes}

    def load_dict(self, d: dict) -> None:
        missing = set(self.shapes) - set(d)
        if missing:
            raise ValueError(f"missing parameter tensors: {sorted(missing)}")
        for name, shape in self.shapes.items():
            arr = np.asarray(d[name], dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            self.view(name)[...] = arr


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def dense_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dw, db)."""
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: kept units are scaled by 1 / (1 - rate)."""
    if rate <= 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


@dataclass
class LstmCache:
    xs: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray


def lstm_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, hidden: int) -> tuple[np.ndarray, LstmCache]:
    """Run an LSTM over ``x`` of shape (B, T, D) from zero state.

    ``w`` has shape (D + H, 4H) acting on ``[x_t, h_{t-1}]``; gate order is
    input, forget, candidate, output. Returns the final hidden state.
    """
    B, T, D = x.shape
    H = hidden
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    for t in range(T):
        z = np.concatenate([x[:, t, :], hs[t]], axis=1) @ w + b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = sigmoid(z[:, 3 * H :])
        cs[t + 1] = f * cs[t] + i * g
        hs[t + 1] = o * np.tanh(cs[t + 1])
        gates[t] = np.concatenate([i, f, g, o], axis=1)
    return hs[T], LstmCache(x, hs, cs, gates)


def lstm_backward(dh_last: np.ndarray, cache: LstmCache, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagation through time from a gradient on the final hidden state.

    Returns (dx, dw, db) with dx shaped like the input sequence.
    """
    x, hs, cs, gates = cache.xs, cache.hs, cache.cs, cache.gates
    B, T, D = x.shape
    H = hs.shape[2]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros(w.shape[1])
    dh = dh_last.copy()
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i = gates[t, :, :H]
        f = gates[t, :, H : 2 * H]
        g = gates[t, :, 2 * H : 3 * H]
        o = gates[t, :, 3 * H :]
        tc = np.tanh(cs[t + 1])
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * cs[t]
        dz = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        xh = np.concatenate([x[:, t, :], hs[t]], axis=1)
        dw += xh.T @ dz
        db += dz.sum(axis=0)
        dxh = dz @ w.T
        dx[:, t, :] = dxh[:, :D]
        dh = dxh[:, D:]
        dc = dc * f
    return dx, dw, db


@dataclass
class Adam:
    """Adam on a flat parameter vector."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    t: int = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
