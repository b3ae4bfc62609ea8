"""Scaled conjugate gradient (full batch) and momentum SGD (mini batch)."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import SeededRng

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Loss or gradient became non-finite during training."""


@dataclass
class TrainConfig:
    optimizer: str = "scg"            # "scg" | "sgd"
    l2_lambda: float = 0.8
    l2_mode: str = "sum"              # "sum": l2 * sum(w^2); "mean": l2 * mean(w^2)
    learning_rate: float = 1e-3
    momentum: float = 0.9
    decay: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 500
    max_iterations: int = 1000
    patience: int = 20
    grad_tol: float = 1e-8
    mse_goal: float = 1e-11
    max_centers: int = 1000
    spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "max_epochs", "max_iterations"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")
        if self.l2_mode not in ("sum", "mean"):
            raise ValueError(f"unknown l2_mode {self.l2_mode!r}")

    def penalty(self, model) -> float:
        """Coefficient multiplying sum(w^2) for ``model``."""
        if self.l2_mode == "mean" and self.l2_lambda:
            return self.l2_lambda / max(int(model.decay_mask().sum()), 1)
        return self.l2_lambda

    def to_dict(self):
        return asdict(self)


@dataclass
class ScgResult:
    x: np.ndarray
    f: float
    grad_norm: float
    iterations: int
    n_grad_evals: int
    reason: str
    history: list = field(default_factory=list)


def scg(f, grad, x0, max_iter=1000, grad_tol=1e-8, x_tol=0.0, f_tol=0.0, sigma0=1e-4,
        callback=None) -> ScgResult:
    """Moller's scaled conjugate gradient.

    A Hessian-vector product along the search direction is approximated by a
    forward difference of gradients; the scalar ``lam`` regularises it like a
    trust region and is adapted from the ratio ``comparison`` of actual to
    predicted decrease. ``callback(k, x, f)`` runs after every accepted step
    and may return True to stop.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    f_old = f(x)
    g_new = grad(x)
    n_grad = 1
    if not (math.isfinite(f_old) and np.all(np.isfinite(g_new))):
        raise NumericalError("non-finite loss or gradient at the initial point")
    g_old = g_new
    d = -g_new
    success = True
    n_success = 0
    lam, lam_min, lam_max = 1.0, 1e-15, 1e100
    mu = kappa = gamma = 0.0
    history = []
    reason = "max_iter"
    k = 0
    while k < max_iter:
        gnorm = float(np.linalg.norm(g_new))
        if gnorm < grad_tol:
            reason = "grad_tol"
            break
        k += 1
        if success:
            mu = float(d @ g_new)
            if mu >= 0:
                d = -g_new
                mu = float(d @ g_new)
            kappa = float(d @ d)
            if kappa < np.finfo(float).tiny:
                reason = "small_direction"
                break
            sigma = sigma0 / math.sqrt(kappa)
            g_plus = grad(x + sigma * d)
            n_grad += 1
            gamma = float(d @ (g_plus - g_new)) / sigma
        delta = gamma + lam * kappa
        if delta <= 0:
            delta = lam * kappa
            lam = lam - gamma / kappa
        alpha = -mu / delta
        x_new = x + alpha * d
        f_new = f(x_new)
        if not math.isfinite(f_new):
            raise NumericalError(f"non-finite loss at iteration {k}")
        df = f_new - f_old
        g_trial = None
        if abs(df) <= 64.0 * np.finfo(float).eps * max(abs(f_old), abs(f_new)):
            # the decrease is lost in rounding of f; integrate the directional
            # derivative along the step instead (trapezoid rule)
            g_trial = grad(x_new)
            n_grad += 1
            df = 0.5 * alpha * (mu + float(d @ g_trial))
        comparison = 2.0 * df / (alpha * mu)
        if comparison >= 0:
            success = True
            n_success += 1
            x = x_new
            step_small = np.max(np.abs(alpha * d)) < x_tol and abs(df) < f_tol
            f_old = f_new
            g_old = g_new
            if g_trial is None:
                g_new = grad(x)
                n_grad += 1
            else:
                g_new = g_trial
            if not np.all(np.isfinite(g_new)):
                raise NumericalError(f"non-finite gradient at iteration {k}")
            history.append({"iteration": k, "loss": f_old})
            if callback is not None and callback(k, x, f_old):
                reason = "callback"
                break
            if step_small:
                reason = "x_tol"
                break
        else:
            success = False
        if comparison < 0.25:
            lam = min(4.0 * lam, lam_max)
        if comparison > 0.75:
            lam = max(0.5 * lam, lam_min)
        if n_success == n:
            d = -g_new
            n_success = 0
        elif success:
            beta = float((g_old - g_new) @ g_new) / mu
            d = beta * d - g_new
    return ScgResult(x, float(f_old), float(np.linalg.norm(g_new)), k, n_grad, reason, history)


class EarlyStopper:
    """Tracks the best validation loss; signals a stop after ``patience`` non-improving checks
    (a patience of 0 stops at the first non-improving check)."""

    def __init__(self, patience):
        self.limit = max(int(patience), 1)
        self.best = math.inf
        self.best_params = None
        self.bad = 0

    def update(self, val_loss, params) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_params = np.array(params, copy=True)
            self.bad = 0
            return False
        self.bad += 1
        return self.bad >= self.limit


def train_scg(model, x_train, y_train, x_val=None, y_val=None, cfg: TrainConfig = TrainConfig()):
    """Full-batch SCG on MSE + l2 * sum(w^2); returns (model, history) with best-validation weights."""
    x_train = model.prepare(x_train)
    y_train = np.asarray(y_train, dtype=float)
    has_val = x_val is not None and len(x_val) > 0
    if has_val:
        x_val = model.prepare(x_val)
        y_val = np.asarray(y_val, dtype=float)
    l2 = cfg.penalty(model)

    def fun(w):
        model.set_flat(w)
        return model.loss(x_train, y_train, l2)

    def grad(w):
        model.set_flat(w)
        return model.loss_and_grad(x_train, y_train, l2)[1]

    stopper = EarlyStopper(cfg.patience)
    history = []

    def callback(k, w, floss):
        model.set_flat(w)
        rec = {"iteration": k, "train_loss": floss}
        if has_val:
            rec["val_mse"] = model.loss(x_val, y_val)
            stop = stopper.update(rec["val_mse"], w)
        else:
            stop = False
        history.append(rec)
        if k % 50 == 0:
            log.info("scg iter %d loss %.6g val %s", k, floss, rec.get("val_mse"))
        return stop

    res = scg(fun, grad, model.get_flat(), max_iter=cfg.max_iterations, grad_tol=cfg.grad_tol,
              callback=callback)
    final = stopper.best_params if (has_val and stopper.best_params is not None) else res.x
    model.set_flat(final)
    model.train_meta = {"optimizer": "scg", "seed": cfg.seed, "l2_lambda": cfg.l2_lambda,
                        "l2_mode": cfg.l2_mode, "iterations": res.iterations, "stop_reason": res.reason,
                        "final_train_loss": model.loss(x_train, y_train, l2),
                        "best_val_mse": stopper.best if has_val else None}
    return model, history


class MomentumSGD:
    """Classical momentum: v <- momentum * v + g; w <- w - lr_t * v, lr_t = lr / (1 + decay * t)."""

    def __init__(self, lr, momentum=0.9, decay=0.0):
        self.lr, self.momentum, self.decay = lr, momentum, decay
        self.t = 0
        self.velocity = None

    def step(self, w, g):
        if self.velocity is None:
            self.velocity = np.zeros_like(w)
        self.velocity = self.momentum * self.velocity + g
        lr_t = self.lr / (1.0 + self.decay * self.t)
        self.t += 1
        return w - lr_t * self.velocity


def train_sgd(model, x_train, y_train, x_val=None, y_val=None, cfg: TrainConfig = TrainConfig(optimizer="sgd", l2_lambda=0.0),
              max_epochs=None):
    """Mini-batch momentum SGD with seeded shuffling; returns best-validation weights."""
    x_train = model.prepare(x_train)
    y_train = np.asarray(y_train, dtype=float)
    has_val = x_val is not None and len(x_val) > 0
    if has_val:
        x_val = model.prepare(x_val)
        y_val = np.asarray(y_val, dtype=float)
    l2 = cfg.penalty(model)
    epochs = cfg.max_epochs if max_epochs is None else max_epochs
    shuffle = SeededRng(cfg.seed, (0x5D,))
    drop = SeededRng(cfg.seed, (0xD0,)).generator
    opt = MomentumSGD(cfg.learning_rate, cfg.momentum, cfg.decay)
    stopper = EarlyStopper(cfg.patience)
    w = model.get_flat()
    n = x_train.shape[0]
    bs = max(int(cfg.batch_size), 1)
    history = []
    for epoch in range(1, epochs + 1):
        perm = shuffle.permutation(n)
        total = 0.0
        for a in range(0, n, bs):
            idx = perm[a:a + bs]
            model.set_flat(w)
            loss, g = model.loss_and_grad(x_train[idx], y_train[idx], l2, train=True, rng=drop)
            if not (math.isfinite(loss) and np.all(np.isfinite(g))):
                raise NumericalError(f"non-finite loss in epoch {epoch}")
            total += loss * idx.size
            w = opt.step(w, g)
        model.set_flat(w)
        rec = {"epoch": epoch, "train_loss": total / n}
        stop = False
        if has_val:
            rec["val_mse"] = float(np.mean((model.predict(x_val) - y_val) ** 2))
            stop = stopper.update(rec["val_mse"], w)
        history.append(rec)
        log.info("sgd epoch %d loss %.6g val %s", epoch, rec["train_loss"], rec.get("val_mse"))
        if stop:
            break
    if has_val and stopper.best_params is not None:
        model.set_flat(stopper.best_params)
    model.train_meta = {"optimizer": "sgd", "seed": cfg.seed, "epochs": len(history),
                        "final_train_loss": history[-1]["train_loss"] if history else None,
                        "best_val_mse": stopper.best if has_val else None}
    return model, history
