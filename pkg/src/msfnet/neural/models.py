"""MLP and CNN regressors built from :mod:`msfnet.neural.layers`."""
from __future__ import annotations

import numpy as np

from ..core import SeededRng
from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU, Tanh

_ACT = {"tanh": Tanh, "relu": ReLU}


class ShapeError(ValueError):
    pass


class Network:
    """Sequential stack with flat-vector parameter access.

    The training loss is ``mean((pred - y)**2) + l2 * sum(w**2)`` where
    the penalty covers weight matrices and kernels but not biases.
    """

    kind = "network"

    def __init__(self, layers, arch: dict, normalization=None):
        self.layers = layers
        self.arch = arch
        self.normalization = normalization
        self.train_meta: dict = {}

    # parameters ------------------------------------------------------------
    def param_refs(self):
        return [(layer, name) for layer in self.layers for name in sorted(layer.params)]

    @property
    def n_params(self) -> int:
        return sum(layer.params[name].size for layer, name in self.param_refs())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([layer.params[n].reshape(-1) for layer, n in self.param_refs()])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        pos = 0
        for layer, n in self.param_refs():
            p = layer.params[n]
            layer.params[n] = flat[pos:pos + p.size].reshape(p.shape).copy()
            pos += p.size
        if pos != flat.size:
            raise ShapeError(f"expected {pos} parameters, got {flat.size}")

    def decay_mask(self) -> np.ndarray:
        return np.concatenate([np.full(layer.params[n].size, n in layer.decay) for layer, n in self.param_refs()])

    def weight_norm_sq(self) -> float:
        w = self.get_flat()
        return float(np.sum(w[self.decay_mask()] ** 2))

    # passes ----------------------------------------------------------------
    def prepare(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)

    def forward(self, x, train=False, rng=None):
        h = self.prepare(x)
        for layer in self.layers:
            h = layer.forward(h, train=train, rng=rng)
        return h

    __call__ = forward

    def predict(self, x, batch_size=4096) -> np.ndarray:
        x = self.prepare(x)
        if x.shape[0] <= batch_size:
            return self.forward(x)
        return np.concatenate([self.forward(x[i:i + batch_size]) for i in range(0, x.shape[0], batch_size)])

    def backward(self, dout) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return np.concatenate([layer.grads[n].reshape(-1) for layer, n in self.param_refs()])

    def loss_and_grad(self, x, y, l2=0.0, train=False, rng=None):
        y = np.asarray(y, dtype=float)
        pred = self.forward(x, train=train, rng=rng)
        if pred.shape != y.shape:
            raise ShapeError(f"prediction shape {pred.shape} != target shape {y.shape}")
        err = pred - y
        mse = float(np.mean(err ** 2))
        grad = self.backward(2.0 * err / err.size)
        if l2:
            w = self.get_flat()
            mask = self.decay_mask()
            mse_pen = mse + l2 * float(np.sum(w[mask] ** 2))
            grad = grad + np.where(mask, 2.0 * l2 * w, 0.0)
            return mse_pen, grad
        return mse, grad

    def loss(self, x, y, l2=0.0, train=False, rng=None) -> float:
        err = self.forward(x, train=train, rng=rng) - np.asarray(y, dtype=float)
        out = float(np.mean(err ** 2))
        if l2:
            out += l2 * self.weight_norm_sq()
        return out

    def flat_objective(self, x, y, l2=0.0):
        """Closures (f, grad) over flat parameter vectors for full-batch optimizers."""
        def f(w):
            self.set_flat(w)
            return self.loss(x, y, l2)

        def g(w):
            self.set_flat(w)
            return self.loss_and_grad(x, y, l2)[1]

        return f, g


class MlpModel(Network):
    """Fully connected regressor; default sizes [144, 100, 100, 5] with tanh hidden units."""

    kind = "mlp"

    def __init__(self, sizes=(144, 100, 100, 5), activation="tanh", seed=0, normalization=None):
        sizes = [int(s) for s in sizes]
        rng = SeededRng(seed, (0x1A7,)).generator
        gain = 3.0 if activation == "tanh" else 6.0
        layers = []
        for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            layers.append(Dense(a, b, rng, gain=gain if k < len(sizes) - 2 else 3.0))
            if k < len(sizes) - 2:
                layers.append(_ACT[activation]())
        super().__init__(layers, {"kind": "mlp", "sizes": sizes, "activation": activation, "seed": seed},
                         normalization)

    def prepare(self, x):
        x = np.asarray(x, dtype=float)
        x = x.reshape(x.shape[0], -1)
        if x.shape[1] != self.arch["sizes"][0]:
            raise ShapeError(f"MLP expects {self.arch['sizes'][0]} inputs, got {x.shape[1]}")
        return x


class CnnModel(Network):
    """Three valid 3x3 convolutions (64, 32, 32 filters), each followed by ReLU and a
    2x2 stride-1 max pool, then a 100-unit dense layer and a linear output.
    Dropout follows the third conv block (0.2) and the dense layer (0.25)."""

    kind = "cnn"

    def __init__(self, input_shape=(12, 12), filters=(64, 32, 32), fc=100, n_out=5,
                 dropout=(0.2, 0.25), activation="relu", seed=0, normalization=None):
        h, w = input_shape
        rng = SeededRng(seed, (0xC22,)).generator
        act = _ACT[activation]
        layers, c = [], 1
        for k, nf in enumerate(filters):
            layers += [Conv2D(c, nf, 3, rng), act(), MaxPool2D()]
            if k == len(filters) - 1 and dropout[0]:
                layers.append(Dropout(dropout[0]))
            c = nf
            h, w = h - 3, w - 3
        if h < 1 or w < 1:
            raise ShapeError(f"input {input_shape} too small for {len(filters)} conv blocks")
        layers += [Flatten(), Dense(h * w * c, fc, rng, gain=6.0), act()]
        if dropout[1]:
            layers.append(Dropout(dropout[1]))
        layers.append(Dense(fc, n_out, rng))
        super().__init__(layers, {"kind": "cnn", "input_shape": list(input_shape), "filters": list(filters),
                                  "fc": fc, "n_out": n_out, "dropout": list(dropout),
                                  "activation": activation, "seed": seed}, normalization)

    def prepare(self, x):
        x = np.asarray(x, dtype=float)
        h, w = self.arch["input_shape"]
        if x.ndim == 2 and x.shape[1] == h * w:
            x = x.reshape(-1, h, w)
        if x.ndim == 3:
            x = x[..., None]
        if x.shape[1:] != (h, w, 1):
            raise ShapeError(f"CNN expects (batch, {h}, {w}[, 1]) input, got {x.shape}")
        return x

    def activation_shapes(self, x) -> list:
        """Output shape (excluding batch) of every layer, for shape probes."""
        h = self.prepare(x)
        shapes = []
        for layer in self.layers:
            h = layer.forward(h)
            shapes.append((type(layer).__name__, h.shape[1:]))
        return shapes


def build_model(arch: dict, normalization=None) -> Network:
    arch = dict(arch)
    kind = arch.pop("kind")
    if kind == "mlp":
        return MlpModel(normalization=normalization, **arch)
    if kind == "cnn":
        arch["input_shape"] = tuple(arch["input_shape"])
        arch["filters"] = tuple(arch["filters"])
        arch["dropout"] = tuple(arch["dropout"])
        return CnnModel(normalization=normalization, **arch)
    if kind == "per_measure":
        return PerMeasureModel([build_model(a) for a in arch["members"]], normalization)
    raise ValueError(f"unknown architecture kind {kind!r}")


class PerMeasureModel:
    """One single-output network per measure, queried side by side."""

    kind = "per_measure"

    def __init__(self, members, normalization=None):
        self.members = list(members)
        self.normalization = normalization
        self.train_meta: dict = {}

    @property
    def arch(self):
        return {"kind": "per_measure", "members": [m.arch for m in self.members]}

    @property
    def n_params(self) -> int:
        return sum(m.n_params for m in self.members)

    def prepare(self, x):
        return self.members[0].prepare(x)

    def predict(self, x, batch_size=4096) -> np.ndarray:
        return np.hstack([m.predict(x, batch_size) for m in self.members])

    forward = predict
    __call__ = predict


def train_per_measure(make_member, train_fn, x_train, y_train, x_val=None, y_val=None, normalization=None):
    """Fit ``make_member(k)`` on output column ``k`` with ``train_fn(model, xt, yt, xv, yv)``."""
    members, histories = [], []
    y_train = np.asarray(y_train, dtype=float)
    for k in range(y_train.shape[1]):
        yv = None if y_val is None else np.asarray(y_val, dtype=float)[:, k:k + 1]
        model, hist = train_fn(make_member(k), x_train, y_train[:, k:k + 1], x_val, yv)
        members.append(model)
        histories.append(hist)
    out = PerMeasureModel(members, normalization)
    out.train_meta = {"per_measure": [m.train_meta for m in members]}
    history = [dict(h, measure=k) for k, hist in enumerate(histories) for h in hist]
    return out, history
