"""Differentiable layers: linear, embedding, conv1d, LSTM/BiLSTM, activations."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .core import DTYPE, Module, Param


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_2d(x: np.ndarray, width: int, name: str) -> None:
    if x.ndim != 2 or x.shape[1] != width:
        raise ValueError(f"{name}: expected (T, {width}) input, got {x.shape}")


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: Optional[np.random.Generator] = None,
                 scale: Optional[float] = None):
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / np.sqrt(n_in) if scale is None else scale
        self.weight = Param(_uniform(rng, (n_in, n_out), bound))
        self.bias = Param(np.zeros(n_out, dtype=DTYPE))
        self._x = None

    def forward(self, x):
        _check_2d(x, self.weight.shape[0], "Linear")
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, dy):
        self.weight.grad += self._x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.data.T


class Embedding(Module):
    """Lookup table; ``backward`` returns ``None`` since ids are not differentiable."""

    def __init__(self, n_items: int, dim: int, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.weight = Param(rng.normal(0.0, 0.1, size=(n_items, dim)).astype(DTYPE))
        self._ids = None

    def forward(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.weight.shape[0]):
            raise IndexError("embedding id out of range")
        self._ids = ids
        return self.weight.data[ids]

    def backward(self, dy):
        np.add.at(self.weight.grad, self._ids, dy)
        return None


class Conv1d(Module):
    """Same-padded 1-D cross-correlation over time.

    Kernels are stored ``(C_out, C_in, K)``; K must be odd.
    """

    def __init__(self, n_in: int, n_out: int, kernel_size: int,
                 rng: Optional[np.random.Generator] = None):
        if kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd for same padding")
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / np.sqrt(n_in * kernel_size)
        self.weight = Param(_uniform(rng, (n_out, n_in, kernel_size), bound))
        self.bias = Param(np.zeros(n_out, dtype=DTYPE))
        self._cols = None
        self._T = 0

    def _matrix(self) -> np.ndarray:
        n_out, n_in, k = self.weight.shape
        return self.weight.data.transpose(2, 1, 0).reshape(k * n_in, n_out)

    def forward(self, x):
        n_out, n_in, k = self.weight.shape
        _check_2d(x, n_in, "Conv1d")
        pad = k // 2
        T = x.shape[0]
        xp = np.zeros((T + 2 * pad, n_in), dtype=x.dtype)
        xp[pad:pad + T] = x
        # (T, n_in, k) -> (T, k, n_in) so columns are k-major
        win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)
        cols = win.transpose(0, 2, 1).reshape(T, k * n_in)
        self._cols = cols
        self._T = T
        return cols @ self._matrix() + self.bias.data

    def backward(self, dy):
        n_out, n_in, k = self.weight.shape
        pad = k // 2
        T = self._T
        dmat = self._cols.T @ dy
        self.weight.grad += dmat.reshape(k, n_in, n_out).transpose(2, 1, 0)
        self.bias.grad += dy.sum(axis=0)
        dcols = (dy @ self._matrix().T).reshape(T, k, n_in)
        dxp = np.zeros((T + 2 * pad, n_in), dtype=dy.dtype)
        for j in range(k):
            dxp[j:j + T] += dcols[:, j]
        return dxp[pad:pad + T]


class LSTM(Module):
    """Single-direction LSTM with gate order (input, forget, cell, output)."""

    def __init__(self, n_in: int, hidden: int, reverse: bool = False,
                 rng: Optional[np.random.Generator] = None, forget_bias: float = 1.0):
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / np.sqrt(hidden)
        self.w_x = Param(_uniform(rng, (n_in, 4 * hidden), bound))
        self.w_h = Param(_uniform(rng, (hidden, 4 * hidden), bound))
        b = np.zeros(4 * hidden, dtype=DTYPE)
        b[hidden:2 * hidden] = forget_bias
        self.bias = Param(b)
        self.hidden = hidden
        self.reverse = reverse
        self._cache = None

    def forward(self, x):
        _check_2d(x, self.w_x.shape[0], "LSTM")
        H = self.hidden
        xs = x[::-1] if self.reverse else x
        T = xs.shape[0]
        dt = np.result_type(x.dtype, self.w_x.data.dtype)
        pre = xs @ self.w_x.data + self.bias.data
        gates = np.empty((T, 4 * H), dtype=dt)
        cells = np.empty((T, H), dtype=dt)
        hs = np.empty((T, H), dtype=dt)
        h = np.zeros(H, dtype=dt)
        c = np.zeros(H, dtype=dt)
        w_h = self.w_h.data
        for t in range(T):
            z = pre[t] + h @ w_h
            g = gates[t]
            g[:2 * H] = _sigmoid(z[:2 * H])
            g[2 * H:3 * H] = np.tanh(z[2 * H:3 * H])
            g[3 * H:] = _sigmoid(z[3 * H:])
            c = g[H:2 * H] * c + g[:H] * g[2 * H:3 * H]
            h = g[3 * H:] * np.tanh(c)
            cells[t] = c
            hs[t] = h
        self._cache = (xs, gates, cells, hs)
        return hs[::-1] if self.reverse else hs

    def backward(self, dy):
        xs, gates, cells, hs = self._cache
        H = self.hidden
        T = xs.shape[0]
        dys = dy[::-1] if self.reverse else dy
        dz = np.empty_like(gates)
        dh_next = np.zeros(H, dtype=gates.dtype)
        dc_next = np.zeros(H, dtype=gates.dtype)
        w_hT = self.w_h.data.T
        tanh_c = np.tanh(cells)
        for t in range(T - 1, -1, -1):
            g = gates[t]
            i, f, gg, o = g[:H], g[H:2 * H], g[2 * H:3 * H], g[3 * H:]
            dh = dys[t] + dh_next
            tc = tanh_c[t]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            c_prev = cells[t - 1] if t > 0 else 0.0
            d = dz[t]
            d[:H] = dc * gg * i * (1.0 - i)
            d[H:2 * H] = dc * c_prev * f * (1.0 - f)
            d[2 * H:3 * H] = dc * i * (1.0 - gg * gg)
            d[3 * H:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = d @ w_hT
        h_prev = np.zeros_like(hs)
        h_prev[1:] = hs[:-1]
        self.w_h.grad += h_prev.T @ dz
        self.w_x.grad += xs.T @ dz
        self.bias.grad += dz.sum(axis=0)
        dxs = dz @ self.w_x.data.T
        return dxs[::-1] if self.reverse else dxs


class BiLSTM(Module):
    """Forward and backward LSTMs over the same input, outputs concatenated per step."""

    def __init__(self, n_in: int, hidden: int, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.fwd = LSTM(n_in, hidden, reverse=False, rng=rng)
        self.bwd = LSTM(n_in, hidden, reverse=True, rng=rng)
        self.hidden = hidden

    def forward(self, x):
        return np.concatenate([self.fwd.forward(x), self.bwd.forward(x)], axis=1)

    def backward(self, dy):
        H = self.hidden
        return self.fwd.backward(dy[:, :H]) + self.bwd.backward(dy[:, H:])


class Tanh(Module):
    def __init__(self):
        self._y = None

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y * self._y)


class ReLU(Module):
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class Sequential(Module):
    def __init__(self, layers: Sequence[Module]):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


def conv_stack(n_in: int, channels: int, kernel_size: int, n_layers: int,
               rng: np.random.Generator) -> Sequential:
    """``n_layers`` same-padded convolutions with tanh between them."""
    layers = []
    width = n_in
    for _ in range(n_layers):
        layers += [Conv1d(width, channels, kernel_size, rng=rng), Tanh()]
        width = channels
    return Sequential(layers)
