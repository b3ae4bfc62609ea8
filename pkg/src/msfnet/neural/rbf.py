"""Gaussian radial basis function network grown one center at a time."""
from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .optim import TrainConfig

log = logging.getLogger(__name__)


class RbfModel:
    """y = sum_k w_k exp(-||x' - c_k||^2 / (2 sigma^2)) + b, with x' = (x - input_mean) / input_scale."""

    kind = "rbf"

    def __init__(self, centers, spread, weights, bias, input_mean=None, input_scale=None, normalization=None):
        # C-contiguous copies keep predictions bit-identical after a save/load round trip
        self.centers = np.ascontiguousarray(np.atleast_2d(np.asarray(centers, dtype=float)))
        self.spread = float(spread)
        self.bias = np.ascontiguousarray(np.asarray(bias, dtype=float).reshape(-1))
        self.weights = np.ascontiguousarray(np.asarray(weights, dtype=float).reshape(self.centers.shape[0],
                                                                                    self.bias.size))
        d = self.centers.shape[1]
        self.input_mean = np.zeros(d) if input_mean is None else np.asarray(input_mean, dtype=float)
        self.input_scale = np.ones(d) if input_scale is None else np.asarray(input_scale, dtype=float)
        self.normalization = normalization
        self.train_meta: dict = {}

    @property
    def arch(self):
        return {"kind": "rbf", "n_in": int(self.input_mean.size), "n_out": int(self.bias.size),
                "n_centers": int(self.centers.shape[0]), "spread": self.spread}

    def scale_inputs(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - self.input_mean) / self.input_scale

    def basis(self, x, scaled=False):
        z = x if scaled else self.scale_inputs(x)
        if self.centers.shape[0] == 0:
            return np.zeros((z.shape[0], 0))
        d2 = cdist(z, self.centers, "sqeuclidean")
        return np.exp(-d2 / (2.0 * self.spread ** 2))

    def predict(self, x):
        return self.basis(x) @ self.weights + self.bias

    forward = predict
    __call__ = predict

    # output-layer parameters as one flat vector (weights row-major, then bias)
    def get_flat(self):
        return np.concatenate([self.weights.reshape(-1), self.bias])

    def set_flat(self, flat):
        k = self.weights.size
        self.weights = np.asarray(flat[:k], dtype=float).reshape(self.weights.shape).copy()
        self.bias = np.asarray(flat[k:], dtype=float).copy()

    def loss_and_grad(self, x, y, l2=0.0):
        """MSE + l2 * sum(w^2) and its gradient w.r.t. the output layer."""
        phi = self.basis(x)
        err = phi @ self.weights + self.bias - np.asarray(y, dtype=float)
        dout = 2.0 * err / err.size
        gw = phi.T @ dout + 2.0 * l2 * self.weights
        gb = dout.sum(axis=0)
        loss = float(np.mean(err ** 2) + l2 * np.sum(self.weights ** 2))
        return loss, np.concatenate([gw.reshape(-1), gb])

    def loss(self, x, y, l2=0.0):
        return self.loss_and_grad(x, y, l2)[0]


def train_rbf(x, y, cfg: TrainConfig = TrainConfig(), standardize_inputs=True, dependence_tol=1e-10,
              max_dependent_run=100) -> RbfModel:
    """Greedy center selection.

    Starting from a bias-only fit, repeatedly make the training input with the
    largest residual norm a new center and re-solve the linear output layer by
    least squares, until the training MSE reaches ``cfg.mse_goal`` or
    ``cfg.max_centers`` centers exist, or ``max_dependent_run`` candidates in a
    row add nothing numerically independent. The least-squares problem is updated
    incrementally with a Gram-Schmidt QR factorization.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, d = x.shape
    if standardize_inputs:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        mean, scale = np.zeros(d), np.ones(d)
    z = (x - mean) / scale
    two_s2 = 2.0 * cfg.spread ** 2
    sq = np.sum(z ** 2, axis=1)

    max_centers = min(int(cfg.max_centers), n)
    # column 0 of Q / R is the bias
    qmat = np.empty((n, max_centers + 1))
    rmat = np.zeros((max_centers + 1, max_centers + 1))
    qty = np.empty((max_centers + 1, y.shape[1]))
    qmat[:, 0] = 1.0 / np.sqrt(n)
    rmat[0, 0] = np.sqrt(n)
    qty[0] = qmat[:, 0] @ y
    resid = y - np.outer(qmat[:, 0], qty[0])
    k = 1
    centers = []
    used = np.zeros(n, dtype=bool)
    mse = float(np.mean(resid ** 2))
    skipped = 0
    run = 0
    while mse > cfg.mse_goal and len(centers) < max_centers and not used.all():
        score = np.where(used, -1.0, np.sum(resid ** 2, axis=1))
        idx = int(np.argmax(score))
        used[idx] = True
        col = np.exp(-np.maximum(sq - 2.0 * z @ z[idx] + sq[idx], 0.0) / two_s2)
        v = col.copy()
        coeffs = np.zeros(k)
        qk = qmat[:, :k]
        for _ in range(2):          # re-orthogonalise once for stability
            c = v @ qk
            v -= qk @ c
            coeffs += c
        norm = float(np.linalg.norm(v))
        if norm < dependence_tol * max(1.0, float(np.linalg.norm(col))):
            skipped += 1
            run += 1
            if skipped == 1:
                warnings.warn("rbf: numerically dependent center skipped", RuntimeWarning, stacklevel=2)
            if run >= max_dependent_run:
                break
            continue
        run = 0
        qmat[:, k] = v / norm
        rmat[:k, k] = coeffs
        rmat[k, k] = norm
        qty[k] = qmat[:, k] @ y
        resid -= np.outer(qmat[:, k], qty[k])
        k += 1
        centers.append(idx)
        mse = float(np.mean(resid ** 2))
    coef = solve_triangular(rmat[:k, :k], qty[:k], lower=False)
    model = RbfModel(z[centers] if centers else np.zeros((0, d)), cfg.spread, coef[1:].reshape(len(centers), y.shape[1]),
                     coef[0], mean, scale)
    model.train_meta = {"optimizer": "rbf-greedy", "n_centers": len(centers), "train_mse": mse,
                        "skipped_dependent": skipped, "mse_goal": cfg.mse_goal}
    log.info("rbf: %d centers, train mse %.3g", len(centers), mse)
    return model
