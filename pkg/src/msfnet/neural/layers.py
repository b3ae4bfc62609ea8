"""Numpy layers with explicit forward/backward passes (NHWC for images)."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    params: dict
    # names of params that receive the L2 penalty
    decay = ()

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"type": type(self).__name__}


class Dense(Layer):
    decay = ("W",)

    def __init__(self, n_in, n_out, rng=None, gain=3.0):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        lim = np.sqrt(gain / n_in)
        w = rng.uniform(-lim, lim, size=(n_in, n_out)) if rng is not None else np.zeros((n_in, n_out))
        self.params = {"W": np.asarray(w, dtype=float), "b": np.zeros(n_out)}

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads = {"W": self._x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T

    def describe(self):
        return {"type": "Dense", "n_in": self.n_in, "n_out": self.n_out}


class Tanh(Layer):
    def forward(self, x, train=False, rng=None):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dout):
        return dout * (1.0 - self._y ** 2)


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return dout * self._mask


class Conv2D(Layer):
    """Valid (unpadded) convolution, stride 1. Kernel layout (k, k, c_in, c_out)."""

    decay = ("W",)

    def __init__(self, c_in, c_out, k=3, rng=None, gain=6.0):
        super().__init__()
        self.c_in, self.c_out, self.k = c_in, c_out, k
        fan_in = k * k * c_in
        lim = np.sqrt(gain / fan_in)
        shape = (k, k, c_in, c_out)
        w = rng.uniform(-lim, lim, size=shape) if rng is not None else np.zeros(shape)
        self.params = {"W": np.asarray(w, dtype=float), "b": np.zeros(c_out)}

    def forward(self, x, train=False, rng=None):
        k = self.k
        b, h, w, c = x.shape
        ho, wo = h - k + 1, w - k + 1
        win = sliding_window_view(x, (k, k), axis=(1, 2))          # (B, Ho, Wo, C, k, k)
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, k * k * c)
        self._cols = cols
        self._shape = x.shape
        out = cols @ self.params["W"].reshape(k * k * c, self.c_out) + self.params["b"]
        return out.reshape(b, ho, wo, self.c_out)

    def backward(self, dout):
        k = self.k
        b, h, w, c = self._shape
        ho, wo = h - k + 1, w - k + 1
        d2 = dout.reshape(-1, self.c_out)
        wmat = self.params["W"].reshape(k * k * c, self.c_out)
        self.grads = {"W": (self._cols.T @ d2).reshape(self.params["W"].shape), "b": d2.sum(axis=0)}
        dcols = (d2 @ wmat.T).reshape(b, ho, wo, k, k, c)
        dx = np.zeros(self._shape)
        for di in range(k):
            for dj in range(k):
                dx[:, di:di + ho, dj:dj + wo, :] += dcols[:, :, :, di, dj, :]
        return dx

    def describe(self):
        return {"type": "Conv2D", "c_in": self.c_in, "c_out": self.c_out, "k": self.k}


class MaxPool2D(Layer):
    """2 x 2 max pooling with stride 1 (shrinks each spatial dim by one)."""

    def forward(self, x, train=False, rng=None):
        views = np.stack([x[:, :-1, :-1], x[:, :-1, 1:], x[:, 1:, :-1], x[:, 1:, 1:]])
        self._arg = views.argmax(axis=0)
        self._shape = x.shape
        return np.take_along_axis(views, self._arg[None], axis=0)[0]

    def backward(self, dout):
        dx = np.zeros(self._shape)
        for n, (a, b) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            h, w = self._shape[1] - 1, self._shape[2] - 1
            dx[:, a:a + h, b:b + w] += np.where(self._arg == n, dout, 0.0)
        return dx


class Dropout(Layer):
    """Inverted dropout: active only when ``train`` is true."""

    def __init__(self, rate):
        super().__init__()
        self.rate = float(rate)

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask

    def describe(self):
        return {"type": "Dropout", "rate": self.rate}


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)
