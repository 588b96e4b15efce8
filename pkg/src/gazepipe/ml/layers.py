"""Layers with hand-written backward passes.

Every layer keeps what its backward pass needs from the most recent
``forward`` call, so a layer instance is not safe to share between threads.
Sequences are laid out as ``(batch, time, channels)``.
"""

from __future__ import annotations

import math

import numpy as np


class Layer:
    def __init__(self, name):
        self.name = name
        self.params = {}
        self.grads = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, name, n_in, n_out, rng=None):
        super().__init__(name)
        limit = 1.0 / math.sqrt(n_in)
        if rng is None:
            self.params["W"] = np.zeros((n_in, n_out))
        else:
            self.params["W"] = rng.uniform(-limit, limit, (n_in, n_out))
        self.params["b"] = np.zeros(n_out)

    def forward(self, x):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dout):
        return dout * self._mask


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Conv1D(Layer):
    """Stride-1 convolution with 'same' zero padding (odd kernel sizes)."""

    def __init__(self, name, c_in, c_out, kernel, rng=None):
        super().__init__(name)
        if kernel % 2 != 1:
            raise ValueError("Conv1D needs an odd kernel size")
        self.kernel = kernel
        limit = 1.0 / math.sqrt(kernel * c_in)
        if rng is None:
            self.params["W"] = np.zeros((kernel, c_in, c_out))
        else:
            self.params["W"] = rng.uniform(-limit, limit, (kernel, c_in, c_out))
        self.params["b"] = np.zeros(c_out)

    def forward(self, x):
        B, T, C = x.shape
        k = self.kernel
        pad = k // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        # column block j holds the input shifted by j, matching W's (k, C) flattening
        cols = np.concatenate([xp[:, j : j + T, :] for j in range(k)], axis=2)
        cols = cols.reshape(B * T, k * C)
        self._cols = cols
        self._shape = x.shape
        W = self.params["W"].reshape(k * C, -1)
        return (cols @ W + self.params["b"]).reshape(B, T, -1)

    def backward(self, dout):
        B, T, C = self._shape
        k = self.kernel
        pad = k // 2
        d2 = dout.reshape(B * T, -1)
        W = self.params["W"].reshape(k * C, -1)
        self.grads["W"] = (self._cols.T @ d2).reshape(self.params["W"].shape)
        self.grads["b"] = d2.sum(axis=0)
        dcols = (d2 @ W.T).reshape(B, T, k, C)
        dxp = np.zeros((B, T + 2 * pad, C))
        for j in range(k):
            dxp[:, j : j + T, :] += dcols[:, :, j, :]
        return dxp[:, pad : pad + T, :]


class MaxPool1D(Layer):
    """Max pooling over non-overlapping pairs of time steps.

    A trailing odd sample is dropped. Ties send the gradient to the earlier
    step.
    """

    def __init__(self, name, size=2):
        super().__init__(name)
        if size != 2:
            raise ValueError("only pool size 2 is supported")
        self.size = size

    def forward(self, x):
        t_out = x.shape[1] // 2
        a = x[:, 0 : 2 * t_out : 2, :]
        b = x[:, 1 : 2 * t_out : 2, :]
        self._mask = a >= b
        self._shape = x.shape
        return np.where(self._mask, a, b)

    def backward(self, dout):
        t_out = self._shape[1] // 2
        dx = np.zeros(self._shape)
        dx[:, 0 : 2 * t_out : 2, :] = dout * self._mask
        dx[:, 1 : 2 * t_out : 2, :] = dout * ~self._mask
        return dx


class GlobalAvgPool1D(Layer):
    def forward(self, x):
        self._T = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dout):
        return np.repeat(dout[:, None, :] / self._T, self._T, axis=1)


class LSTM(Layer):
    """Single LSTM layer returning the last hidden state.

    ``step`` consecutive samples are stacked into one time step, so a
    ``(B, T, C)`` input runs ``T / step`` recurrent steps of width
    ``C * step``. Gate order in the packed weights is input, forget, output,
    candidate.
    """

    def __init__(self, name, c_in, units, step=1, rng=None, forget_bias=1.0):
        super().__init__(name)
        self.units = units
        self.step = step
        d = c_in * step
        H = units
        if rng is None:
            self.params["Wx"] = np.zeros((d, 4 * H))
            self.params["Wh"] = np.zeros((H, 4 * H))
            self.params["b"] = np.zeros(4 * H)
        else:
            self.params["Wx"] = rng.uniform(-1 / math.sqrt(d), 1 / math.sqrt(d), (d, 4 * H))
            self.params["Wh"] = rng.uniform(-1 / math.sqrt(H), 1 / math.sqrt(H), (H, 4 * H))
            b = np.zeros(4 * H)
            b[H : 2 * H] = forget_bias
            self.params["b"] = b

    def forward(self, x):
        B, T, C = x.shape
        s = self.step
        if T % s:
            raise ValueError(f"sequence length {T} is not a multiple of step {s}")
        xs = x.reshape(B, T // s, C * s)
        self._in_shape = x.shape
        H = self.units
        Wx, Wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        n_steps = xs.shape[1]
        # sigmoid(z) = (1 + tanh(z / 2)) / 2, so one tanh covers all gates once
        # the gate columns are pre-scaled by 1/2
        half = np.ones(4 * H)
        half[: 3 * H] = 0.5
        zx = (xs.reshape(-1, C * s) @ (Wx * half)).reshape(B, n_steps, 4 * H) + b * half
        zx = np.ascontiguousarray(zx.transpose(1, 0, 2))
        Whs = Wh * half
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        cache = []
        for t in range(n_steps):
            a = h @ Whs
            a += zx[t]
            np.tanh(a, out=a)
            ifo = a[:, : 3 * H]
            ifo += 1.0
            ifo *= 0.5
            i, f, o = ifo[:, :H], ifo[:, H : 2 * H], ifo[:, 2 * H :]
            g = a[:, 3 * H :]
            c_prev, h_prev = c, h
            c = f * c_prev
            c += i * g
            tc = np.tanh(c)
            h = o * tc
            cache.append((h_prev, c_prev, i, f, o, g, tc))
        self._xs = xs
        self._cache = cache
        return h

    def backward(self, dout):
        B, T, C = self._in_shape
        H = self.units
        Wh = self.params["Wh"]
        n_steps = len(self._cache)
        dz_all = np.empty((B, n_steps, 4 * H))
        dh = dout
        dc = np.zeros((B, H))
        dWh = np.zeros_like(Wh)
        for t in range(n_steps - 1, -1, -1):
            h_prev, c_prev, i, f, o, g, tc = self._cache[t]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = dz_all[:, t, :]
            dz[:, :H] = di * i * (1.0 - i)
            dz[:, H : 2 * H] = df * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = do * o * (1.0 - o)
            dz[:, 3 * H :] = dg * (1.0 - g * g)
            dWh += h_prev.T @ dz
            dh = dz @ Wh.T
            dc = dc * f
        dz_flat = dz_all.reshape(-1, 4 * H)
        self.grads["Wx"] = self._xs.reshape(-1, self._xs.shape[2]).T @ dz_flat
        self.grads["Wh"] = dWh
        self.grads["b"] = dz_flat.sum(axis=0)
        dxs = dz_flat @ self.params["Wx"].T
        return dxs.reshape(B, T, C)
