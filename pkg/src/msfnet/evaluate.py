"""Tolerance accuracy, R^2, lambda cross-validation and the gated predictor."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import AngularGrid, MsfConfig, PhysicalParams, SeededRng, ValidationError
from .datagen import FilterCriteria, interpretability_filter
from .measures import PatternMeasures, extract_measures
from .neural.models import MlpModel, ShapeError
from .neural.optim import TrainConfig, train_scg

# column of each measure in the 5-vector target
COL = {"directivity": 0, "pslr": 1, "theta": 2, "phi": 3, "hpbw": 4}
UNITS = {"directivity": "dB", "pslr": "dB", "theta": "deg", "phi": "deg", "angle": "deg", "hpbw": "deg"}
REPORTED = ("directivity", "pslr", "angle", "hpbw")
PHI_MIN_THETA_DEG = 2.0

# Reference tolerance accuracies (MLP, CNN) for comparison columns.
REFERENCE_ACCURACY = {
    "directivity": {0.5: (0.999, 0.998), 0.25: (0.950, 0.906), 0.1: (0.563, 0.488)},
    "pslr": {0.5: (0.999, 0.994), 0.25: (0.983, 0.943), 0.1: (0.861, 0.801)},
    "angle": {5.0: (0.998, 0.989), 2.0: (0.727, 0.607), 1.0: (0.406, 0.319)},
    "hpbw": {1.0: (0.995, 0.988), 0.5: (0.973, 0.926), 0.25: (0.792, 0.618)},
}


@dataclass(frozen=True)
class ToleranceSpec:
    directivity: tuple = (0.1, 0.25, 0.5)
    pslr: tuple = (0.1, 0.25, 0.5)
    angle: tuple = (1.0, 2.0, 5.0)
    hpbw: tuple = (0.25, 0.5, 1.0)

    def __post_init__(self):
        for name in REPORTED:
            tols = tuple(float(t) for t in getattr(self, name))
            if not tols or any(t <= 0 for t in tols) or list(tols) != sorted(tols):
                raise ValidationError(f"{name} tolerances must be positive and ascending")
            object.__setattr__(self, name, tols)

    @classmethod
    def fine_sweep(cls) -> "ToleranceSpec":
        db = tuple(round(0.01 * k, 2) for k in range(1, 101))
        deg = tuple(round(0.1 * k, 1) for k in range(1, 101))
        return cls(db, db, deg, deg)


@dataclass
class AccuracyReport:
    model: str
    accuracy: dict                  # measure -> {tolerance: fraction}
    n_samples: int
    n_phi_excluded: int
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "model": self.model,
            "n_samples": self.n_samples,
            "n_phi_excluded": self.n_phi_excluded,
            "accuracy": {m: {repr(t): a for t, a in d.items()} for m, d in self.accuracy.items()},
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self, reference_column: int | None = 0) -> str:
        """Plain-text table; ``reference_column`` 0 = MLP, 1 = CNN reference values, None = omit."""
        lines = [f"model: {self.model}   test samples: {self.n_samples}   "
                 f"phi excluded (theta_max < {PHI_MIN_THETA_DEG:g} deg): {self.n_phi_excluded}"]
        head = f"{'measure':<12} {'tolerance':>10} {'accuracy':>9}"
        if reference_column is not None:
            head += f" {'reference':>10}"
        lines.append(head)
        for m in REPORTED:
            for t in sorted(self.accuracy[m], reverse=True):
                row = f"{m:<12} {t:>7g} {UNITS[m]:<3}{self.accuracy[m][t]:>8.3f}"
                if reference_column is not None:
                    ref = REFERENCE_ACCURACY.get(m, {}).get(t)
                    row += f" {ref[reference_column]:>10.3f}" if ref else f" {'-':>10}"
                lines.append(row)
        return "\n".join(lines)


def circular_error_deg(a, b):
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    return np.minimum(d, 360.0 - d)


def absolute_errors(predictions, targets) -> tuple[dict, int]:
    """Per-measure absolute errors in physical units; phi restricted to off-broadside targets."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValidationError(f"predictions {p.shape} and targets {t.shape} differ in shape")
    if p.ndim != 2 or p.shape[1] != 5:
        raise ValidationError("expected (n, 5) measure arrays")
    keep_phi = t[:, COL["theta"]] >= PHI_MIN_THETA_DEG
    errs = {
        "directivity": np.abs(p[:, 0] - t[:, 0]),
        "pslr": np.abs(p[:, 1] - t[:, 1]),
        "theta": np.abs(p[:, 2] - t[:, 2]),
        "phi": circular_error_deg(p[keep_phi, 3], t[keep_phi, 3]),
        "hpbw": np.abs(p[:, 4] - t[:, 4]),
    }
    return errs, int((~keep_phi).sum())


def _fraction(err, tol):
    return float(np.mean(err <= tol)) if err.size else float("nan")


def tolerance_accuracy(predictions, targets, spec: ToleranceSpec = ToleranceSpec(), model: str = "model") -> AccuracyReport:
    """Fraction of samples with |error| <= tolerance, per measure and tolerance.

    The angle entry averages the theta and phi accuracies at equal tolerance.
    """
    errs, excluded = absolute_errors(predictions, targets)
    acc = {}
    for m in ("directivity", "pslr", "hpbw"):
        acc[m] = {t: _fraction(errs[m], t) for t in getattr(spec, m)}
    acc["theta"] = {t: _fraction(errs["theta"], t) for t in spec.angle}
    acc["phi"] = {t: _fraction(errs["phi"], t) for t in spec.angle}
    acc["angle"] = {t: (acc["theta"][t] + (acc["phi"][t] if errs["phi"].size else acc["theta"][t])) / 2.0
                    for t in spec.angle}
    return AccuracyReport(model, acc, int(np.asarray(targets).shape[0]), excluded)


def r_squared(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if p.shape != t.shape:
        raise ValidationError("length mismatch")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        raise ValidationError("targets are constant")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


def kfold_indices(n: int, k: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Seeded shuffle split into k nearly equal validation folds."""
    perm = SeededRng(seed, (0xCF,)).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class CvResult:
    best_lambda: float
    table: dict          # lambda -> mean validation MSE
    fold_mse: dict       # lambda -> list of per-fold MSE
    folds: list

    def format(self) -> str:
        lines = [f"{'lambda':>10} {'cv_mse':>12}"]
        for lam, mse in self.table.items():
            mark = "  <- selected" if lam == self.best_lambda else ""
            lines.append(f"{lam:>10g} {mse:>12.6g}{mark}")
        return "\n".join(lines)


def cross_validate_lambda(x, y, lambdas, cfg: TrainConfig = TrainConfig(), n_folds: int = 10,
                          sizes=None, model_factory=None, progress=None) -> CvResult:
    """k-fold selection of the L2 weight: per candidate, train on k-1 folds, validate on
    the held-out fold, average the k validation MSEs, return the argmin."""
    lambdas = [float(v) for v in lambdas]
    if not lambdas:
        raise ValidationError("no lambda candidates")
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] < n_folds:
        raise ValidationError(f"need at least {n_folds} samples for {n_folds}-fold CV")
    sizes = sizes or (x.shape[1], 100, 100, y.shape[1])
    folds = kfold_indices(x.shape[0], n_folds, cfg.seed)
    table, per_fold = {}, {}
    for lam in lambdas:
        scores = []
        for f, val_idx in enumerate(folds):
            mask = np.ones(x.shape[0], dtype=bool)
            mask[val_idx] = False
            model = model_factory() if model_factory else MlpModel(sizes, seed=cfg.seed)
            fold_cfg = TrainConfig(**{**cfg.to_dict(), "l2_lambda": lam})
            train_scg(model, x[mask], y[mask], None, None, fold_cfg)
            scores.append(float(np.mean((model.predict(x[val_idx]) - y[val_idx]) ** 2)))
            if progress:
                progress(lam, f, scores[-1])
        per_fold[lam] = scores
        table[lam] = float(np.mean(scores))
    best = min(table, key=lambda lam: (table[lam], lambdas.index(lam)))
    return CvResult(best, table, per_fold, folds)


def predict_measures(model, states) -> np.ndarray:
    """Physical-unit predictions for a batch of state matrices."""
    norm = model.normalization
    if norm is None:
        raise ValidationError("model carries no normalization statistics")
    x = norm.normalize_inputs(np.asarray(states, dtype=float))
    return norm.destandardize(model.predict(x))


@dataclass
class GatedPrediction:
    status: str                         # "predicted" | "rejected"
    analytical: PatternMeasures
    prediction: PatternMeasures | None = None

    def to_dict(self):
        d = {"status": self.status, "analytical": self.analytical.to_dict()}
        if self.prediction is not None:
            d["prediction"] = self.prediction.to_dict()
        return d


def predict_gated(config: MsfConfig, model, criteria: FilterCriteria = FilterCriteria(),
                  params: PhysicalParams | None = None, grid: AngularGrid | None = None,
                  gate: bool = True) -> GatedPrediction:
    """Analytical interpretability check first; only passing configs reach the network."""
    expected = _input_size(model)
    if expected is not None and config.states.size != expected:
        raise ShapeError(f"model expects {expected} cells, config has {config.states.size}")
    analytical = extract_measures(config, params, grid)
    if gate and not interpretability_filter(analytical, criteria):
        return GatedPrediction("rejected", analytical)
    pred = predict_measures(model, config.states[None])[0]
    return GatedPrediction("predicted", analytical, PatternMeasures.from_vector(pred))


def _input_size(model):
    arch = getattr(model, "arch", {})
    if arch.get("kind") == "per_measure":
        arch = arch["members"][0]
    if arch.get("kind") == "mlp":
        return arch["sizes"][0]
    if arch.get("kind") == "cnn":
        return int(np.prod(arch["input_shape"]))
    return None


CURVE_MEASURES = ("directivity", "pslr", "angle", "hpbw")


def accuracy_curves(predictions, targets, model: str, spec: ToleranceSpec | None = None) -> list[tuple]:
    spec = spec or ToleranceSpec.fine_sweep()
    rep = tolerance_accuracy(predictions, targets, spec, model)
    return [(m, model, t, rep.accuracy[m][t]) for m in CURVE_MEASURES for t in sorted(rep.accuracy[m])]


def emit_curves(runs: dict, path, spec: ToleranceSpec | None = None) -> list[tuple]:
    """Write ``measure,model,tolerance,accuracy`` rows; ``runs`` maps model -> (pred, target)."""
    spec = spec or ToleranceSpec.fine_sweep()
    for m in CURVE_MEASURES:
        if len(getattr(spec, m)) < 2:
            raise ValidationError(f"curve for {m} needs at least two tolerances")
    rows = []
    for name, (p, t) in runs.items():
        rows.extend(accuracy_curves(p, t, name, spec))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["measure", "model", "tolerance", "accuracy"])
        for m, name, t, a in rows:
            w.writerow([m, name, f"{t:g}", f"{a:.6f}"])
    return rows


def side_by_side(reports: dict) -> str:
    """Reproduced vs reference accuracies at the reference tolerances."""
    names = list(reports)
    head = f"{'measure':<12} {'tol':>6}" + "".join(f" {n:>8} {'ref.':>6}" for n in names)
    lines = [head]
    for m in REPORTED:
        for t in sorted(REFERENCE_ACCURACY[m], reverse=True):
            row = f"{m:<12} {t:>6g}"
            for n in names:
                col = 1 if "cnn" in n.lower() else 0
                acc = reports[n].accuracy[m].get(t, math.nan)
                row += f" {acc:>8.3f} {REFERENCE_ACCURACY[m][t][col]:>6.3f}"
            lines.append(row)
    return "\n".join(lines)
