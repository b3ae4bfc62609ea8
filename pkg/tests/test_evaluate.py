import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msfnet.core import MsfConfig, SeededRng, ValidationError
from msfnet.datagen import VACUOUS, Normalization, generate_steering_config, inject_entropy
from msfnet.evaluate import (REFERENCE_ACCURACY, ToleranceSpec, circular_error_deg, cross_validate_lambda,
                             emit_curves, kfold_indices, predict_gated, r_squared, side_by_side,
                             tolerance_accuracy)
from msfnet.measures import extract_measures
from msfnet.neural import MlpModel, ShapeError, TrainConfig


def targets(n=200, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(10, 30, n), rng.uniform(0, 15, n), rng.uniform(0, 60, n),
                            rng.uniform(0, 360, n), rng.uniform(5, 40, n)])


def test_perfect_predictions_score_one():
    t = targets()
    rep = tolerance_accuracy(t, t)
    assert all(v == 1.0 for m in rep.accuracy.values() for v in m.values())


def test_constant_bias_on_directivity():
    t = targets()
    p = t.copy()
    p[:, 0] += 0.3
    rep = tolerance_accuracy(p, t)
    assert rep.accuracy["directivity"][0.25] == 0.0
    assert rep.accuracy["directivity"][0.5] == 1.0
    assert rep.accuracy["pslr"][0.1] == 1.0


def test_tolerance_interval_is_closed():
    t = np.zeros((1, 5)) + [20, 5, 10, 30, 9]
    p = t + [0.5, 0.0, 0.0, 0.0, 0.0]
    assert tolerance_accuracy(p, t).accuracy["directivity"][0.5] == 1.0


def test_phi_error_on_circle_and_broadside_exclusion():
    assert circular_error_deg(359.0, 1.0) == pytest.approx(2.0)
    t = np.array([[20, 5, 1.0, 90, 9], [20, 5, 30.0, 359.5, 9]], dtype=float)
    p = np.array([[20, 5, 1.0, 270, 9], [20, 5, 30.0, 0.5, 9]], dtype=float)
    rep = tolerance_accuracy(p, t)
    assert rep.n_phi_excluded == 1
    assert rep.accuracy["phi"][1.0] == 1.0
    assert rep.accuracy["angle"][1.0] == 1.0


def test_length_mismatch():
    with pytest.raises(ValidationError):
        tolerance_accuracy(targets(10), targets(11))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_accuracy_monotone_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    t = targets(50, seed)
    p = t + rng.normal(scale=[0.3, 0.3, 2, 5, 0.5], size=t.shape)
    spec = ToleranceSpec.fine_sweep()
    rep = tolerance_accuracy(p, t, spec)
    for m in ("directivity", "pslr", "angle", "hpbw", "theta", "phi"):
        vals = [rep.accuracy[m][k] for k in sorted(rep.accuracy[m])]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert all(0 <= v <= 1 for v in vals)
    perm = rng.permutation(50)
    assert tolerance_accuracy(p[perm], t[perm], spec).accuracy == rep.accuracy


def test_tolerance_spec_validation():
    assert ToleranceSpec().directivity == (0.1, 0.25, 0.5)
    with pytest.raises(ValidationError):
        ToleranceSpec(directivity=(0.5, 0.25))
    with pytest.raises(ValidationError):
        ToleranceSpec(hpbw=(0.0, 1.0))


def test_reference_columns_present():
    assert REFERENCE_ACCURACY["directivity"][0.5] == (0.999, 0.998)
    text = tolerance_accuracy(targets(), targets()).table(reference_column=0)
    assert "0.999" in text and "0.950" in text and "0.563" in text


def test_r_squared_definition():
    t = np.random.default_rng(0).normal(size=(100, 3))
    assert r_squared(t, t) == 1.0
    assert r_squared(np.full_like(t, t.mean()), t) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        r_squared(np.ones(5), np.ones(5))
    with pytest.raises(ValidationError):
        r_squared(np.ones(5), np.ones(6))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 100), st.floats(-100, 100), st.integers(0, 1000))
def test_r_squared_affine_invariance(a, b, seed):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=40)
    p = t + rng.normal(scale=0.5, size=40)
    assert r_squared(a * p + b, a * t + b) == pytest.approx(r_squared(p, t), abs=1e-9)


@pytest.mark.parametrize("n,k", [(10, 10), (103, 10), (1000, 7)])
def test_kfold_partition_covers_each_index_once(n, k):
    folds = kfold_indices(n, k, seed=3)
    assert len(folds) == k
    allidx = np.concatenate(folds)
    assert np.array_equal(np.sort(allidx), np.arange(n))
    assert max(map(len, folds)) - min(map(len, folds)) <= 1


def _linear_noise_data(seed=0, n=40, d=30):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    y = 1.5 * x[:, :1] + rng.normal(scale=1.0, size=(n, 1))
    return x, y


def test_cv_singleton_candidate():
    x, y = _linear_noise_data()
    res = cross_validate_lambda(x, y, [0.8], TrainConfig(max_iterations=50), sizes=(30, 1))
    assert res.best_lambda == 0.8 and set(res.table) == {0.8}
    with pytest.raises(ValidationError):
        cross_validate_lambda(x, y, [], TrainConfig())


def test_cv_prefers_shrinkage_with_noise_features():
    x, y = _linear_noise_data()
    res = cross_validate_lambda(x, y, [0.0, 0.01, 0.1, 1.0], TrainConfig(max_iterations=200), sizes=(30, 1))
    print(res.format())
    assert res.best_lambda > 0


def test_cv_is_deterministic():
    x, y = _linear_noise_data(1)
    a = cross_validate_lambda(x, y, [0.0, 0.1], TrainConfig(max_iterations=30), sizes=(30, 1))
    b = cross_validate_lambda(x, y, [0.0, 0.1], TrainConfig(max_iterations=30), sizes=(30, 1))
    assert a.table == b.table
    assert all(np.array_equal(f, g) for f, g in zip(a.folds, b.folds))


def _toy_model():
    norm = Normalization(np.array([20.0, 8, 30, 180, 12]), np.array([4.0, 4, 20, 100, 4]), 7.0)
    return MlpModel(seed=0, normalization=norm)


def test_gate_passes_steering_config():
    res = predict_gated(generate_steering_config(25.0, 40.0), _toy_model())
    assert res.status == "predicted" and res.prediction is not None


def test_gate_rejects_failing_random_config():
    parent = SeededRng(8)
    for k in range(50):
        c = inject_entropy(MsfConfig.uniform(), 1.0, parent.child(k))
        m = extract_measures(c)
        if m.directivity_db < 15.0 or m.pslr_db < 3.0:
            break
    res = predict_gated(c, _toy_model())
    assert res.status == "rejected" and res.prediction is None
    assert res.analytical == m
    assert predict_gated(c, _toy_model(), VACUOUS).status == "predicted"
    assert predict_gated(c, _toy_model(), gate=False).status == "predicted"


def test_gate_shape_mismatch():
    with pytest.raises(ShapeError):
        predict_gated(MsfConfig.uniform(8, 8), _toy_model())


def test_curves_csv(tmp_path):
    t = targets(100)
    rng = np.random.default_rng(1)
    p = t + rng.normal(scale=[0.2, 0.2, 1, 2, 0.3], size=t.shape)
    rows = emit_curves({"mlp": (p, t), "perfect": (t, t)}, tmp_path / "c.csv")
    with open(tmp_path / "c.csv") as fh:
        r = list(csv.reader(fh))
    assert r[0] == ["measure", "model", "tolerance", "accuracy"]
    assert len(r) == 1 + 2 * 4 * 100
    assert all(float(row[3]) == 1.0 for row in r[1:] if row[1] == "perfect")
    for m in ("directivity", "pslr", "angle", "hpbw"):
        acc = [a for mm, name, _, a in rows if mm == m and name == "mlp"]
        assert all(b >= a for a, b in zip(acc, acc[1:]))


def test_curves_need_two_tolerances(tmp_path):
    with pytest.raises(ValidationError):
        emit_curves({"m": (targets(5), targets(5))}, tmp_path / "c.csv", ToleranceSpec(directivity=(0.5,)))


def test_side_by_side_table():
    t = targets()
    text = side_by_side({"mlp": tolerance_accuracy(t, t), "cnn": tolerance_accuracy(t, t)})
    assert text.count("\n") == 12
    assert "0.998" in text and "0.999" in text


def test_report_json():
    rep = tolerance_accuracy(targets(), targets(), model="mlp")
    d = json.loads(rep.to_json())
    assert d["model"] == "mlp" and d["accuracy"]["directivity"]["0.5"] == 1.0
