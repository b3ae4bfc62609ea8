"""Training corpus generation: steering configs plus controlled entropy.

Each sample starts from a quantized beam-steering profile toward a random
target direction, then a random fraction of its cells is redrawn. The
analytical measures of the resulting pattern are the regression targets.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import __version__
from .core import (DEFAULT_COLS, DEFAULT_ROWS, DEFAULT_STATES, AngularGrid, MsfConfig,
                   PhysicalParams, SeededRng, ValidationError)
from .measures import MEASURE_NAMES, PatternMeasures, extract_measures

log = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")
# per block of 100 consecutive indices: 85 train+validation (68 / 17), 15 test
SPLIT_BLOCK = (68, 17, 15)
MAX_STEER_DEG = 60.0


@dataclass(frozen=True)
class FilterCriteria:
    min_directivity_db: float = 15.0
    min_pslr_db: float = 3.0

    def to_dict(self):
        return {"min_directivity_db": _enc(self.min_directivity_db), "min_pslr_db": _enc(self.min_pslr_db)}

    @classmethod
    def from_dict(cls, d):
        return cls(_dec(d["min_directivity_db"]), _dec(d["min_pslr_db"]))


VACUOUS = FilterCriteria(-math.inf, -math.inf)


def _enc(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def _dec(x) -> float:
    return float(x)  # float() accepts "inf" / "-inf"


@dataclass
class SampleRecord:
    config: MsfConfig
    measures: PatternMeasures
    base_target: tuple[float, float]
    entropy_ratio: float
    seed_index: int
    split: str
    interpretable: bool = True

    def to_json(self) -> str:
        d = {
            "config": [int(s) for s in self.config.states.reshape(-1)],
            "measures": self.measures.to_dict(),
            "meta": {
                "base_target": [float(self.base_target[0]), float(self.base_target[1])],
                "entropy_ratio": float(self.entropy_ratio),
                "seed_index": int(self.seed_index),
                "interpretable": bool(self.interpretable),
            },
            "split": self.split,
        }
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str, n_rows: int, n_cols: int, n_states: int) -> "SampleRecord":
        d = json.loads(line)
        meta = d["meta"]
        states = np.array(d["config"], dtype=np.int64).reshape(n_rows, n_cols)
        return cls(MsfConfig(states, n_states), PatternMeasures.from_dict(d["measures"]),
                   tuple(meta["base_target"]), meta["entropy_ratio"], meta["seed_index"], d["split"],
                   meta.get("interpretable", True))


@dataclass
class Normalization:
    target_mean: np.ndarray
    target_scale: np.ndarray
    input_scale: float

    def to_dict(self):
        return {"target_mean": [float(x) for x in self.target_mean],
                "target_scale": [float(x) for x in self.target_scale],
                "input_scale": float(self.input_scale)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["target_mean"], dtype=float), np.array(d["target_scale"], dtype=float),
                   float(d["input_scale"]))

    def standardize(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_scale

    def destandardize(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.target_scale + self.target_mean

    def normalize_inputs(self, states) -> np.ndarray:
        return np.asarray(states, dtype=float) / self.input_scale


@dataclass
class Dataset:
    records: list
    params: PhysicalParams
    grid: AngularGrid
    n_rows: int = DEFAULT_ROWS
    n_cols: int = DEFAULT_COLS
    n_states: int = DEFAULT_STATES
    normalization: Normalization | None = None
    provenance: dict = field(default_factory=dict)

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]

    def counts(self) -> dict:
        return {s: sum(1 for r in self.records if r.split == s) for s in SPLITS}

    def arrays(self, split: str | None = None, only_finite: bool = True):
        """(states[n, rows, cols], targets[n, 5]) for a split (all records if None)."""
        recs = self.records if split is None else self.split(split)
        x = np.array([r.config.states for r in recs], dtype=float).reshape(len(recs), self.n_rows, self.n_cols)
        y = np.array([r.measures.as_vector() for r in recs], dtype=float).reshape(len(recs), len(MEASURE_NAMES))
        if only_finite:
            keep = np.all(np.isfinite(y), axis=1)
            x, y = x[keep], y[keep]
        return x, y

    def header(self) -> dict:
        return {
            "format": "msfnet-dataset",
            "format_version": 1,
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "n_states": self.n_states,
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "normalization": self.normalization.to_dict() if self.normalization else None,
            "provenance": self.provenance,
        }


def steering_phases(theta_t: float, phi_t: float, n_rows: int, n_cols: int,
                    params: PhysicalParams | None = None) -> np.ndarray:
    """Continuous phase profile (radians) that steers the main lobe to (theta_t, phi_t) degrees."""
    params = params or PhysicalParams()
    st = math.sin(math.radians(theta_t))
    cp, sp = math.cos(math.radians(phi_t)), math.sin(math.radians(phi_t))
    i = np.arange(1, n_cols + 1)[None, :] - 0.5
    j = np.arange(1, n_rows + 1)[:, None] - 0.5
    return -params.wave_number * params.cell_pitch * st * (i * cp + j * sp)


def generate_steering_config(theta_t: float, phi_t: float, n_rows: int = DEFAULT_ROWS,
                             n_cols: int = DEFAULT_COLS, n_states: int = DEFAULT_STATES,
                             params: PhysicalParams | None = None) -> MsfConfig:
    if not 0.0 <= theta_t <= 90.0:
        raise ValidationError(f"steering elevation {theta_t} outside [0, 90]")
    phases = steering_phases(theta_t, phi_t, n_rows, n_cols, params)
    states = np.round(phases * n_states / (2.0 * math.pi)).astype(np.int64) % n_states
    return MsfConfig(states, n_states)


def entropy_cell_count(ratio: float, n_cells: int) -> int:
    # round away float noise such as 0.07 * 100 = 7.000000000000001 before the ceiling
    return min(n_cells, math.ceil(round(ratio * n_cells, 9)))


def inject_entropy(config: MsfConfig, ratio: float, rng: SeededRng) -> MsfConfig:
    """Redraw ceil(ratio * N * M) distinct cells with uniformly random states."""
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError(f"entropy ratio {ratio} outside [0, 1]")
    n_cells = config.n_rows * config.n_cols
    k = entropy_cell_count(ratio, n_cells)
    states = config.states.reshape(-1).copy()
    if k:
        pos = rng.choice(n_cells, size=k, replace=False)
        states[pos] = rng.integers(0, config.n_states, size=k)
    return MsfConfig(states.reshape(config.n_rows, config.n_cols), config.n_states)


def interpretability_filter(measures: PatternMeasures, criteria: FilterCriteria = FilterCriteria()) -> bool:
    return bool(measures.directivity_db >= criteria.min_directivity_db
                and measures.pslr_db >= criteria.min_pslr_db)


def split_of(seed: int, seed_index: int) -> str:
    """Split label from (seed, index) alone: a seeded permutation of each block of 100 slots."""
    block, slot = divmod(int(seed_index), 100)
    perm = SeededRng(seed, (0x5B17, block)).permutation(100)
    pos = int(perm[slot])
    if pos < SPLIT_BLOCK[0]:
        return "train"
    if pos < SPLIT_BLOCK[0] + SPLIT_BLOCK[1]:
        return "validation"
    return "test"


def generate_sample(seed: int, seed_index: int, params: PhysicalParams, grid: AngularGrid,
                    criteria: FilterCriteria = FilterCriteria(), filter_mode: str = "tag_only",
                    n_rows: int = DEFAULT_ROWS, n_cols: int = DEFAULT_COLS, n_states: int = DEFAULT_STATES,
                    max_steer_deg: float = MAX_STEER_DEG, max_attempts: int = 1000) -> SampleRecord:
    if filter_mode not in ("tag_only", "reject"):
        raise ValueError(f"unknown filter_mode {filter_mode!r}")
    rng = SeededRng(seed, (seed_index,))
    for _ in range(max_attempts):
        theta_t = float(rng.uniform(0.0, max_steer_deg))
        phi_t = float(rng.uniform(0.0, 360.0))
        ratio = float(rng.uniform(0.0, 1.0))
        base = generate_steering_config(theta_t, phi_t, n_rows, n_cols, n_states, params)
        config = inject_entropy(base, ratio, rng)
        measures = extract_measures(config, params, grid)
        ok = interpretability_filter(measures, criteria)
        if ok or filter_mode == "tag_only":
            return SampleRecord(config, measures, (theta_t, phi_t), ratio, seed_index,
                                split_of(seed, seed_index), ok)
    raise RuntimeError(f"sample {seed_index}: no interpretable configuration in {max_attempts} attempts")


def compute_normalization(records: Iterable[SampleRecord], n_states: int) -> Normalization:
    y = np.array([r.measures.as_vector() for r in records if r.split == "train"], dtype=float)
    y = y[np.all(np.isfinite(y), axis=1)] if y.size else y
    if y.shape[0] == 0:
        mean = np.zeros(len(MEASURE_NAMES))
        scale = np.ones(len(MEASURE_NAMES))
    else:
        mean = y.mean(axis=0)
        scale = y.std(axis=0)
    return Normalization(mean, scale, float(max(n_states - 1, 1)))


def _generate_chunk(args):
    seed, indices, params, grid, criteria, filter_mode, shape = args
    n_rows, n_cols, n_states = shape
    return [generate_sample(seed, i, params, grid, criteria, filter_mode, n_rows, n_cols, n_states)
            for i in indices]


def generate_records(count: int, seed: int, params: PhysicalParams, grid: AngularGrid,
                     criteria: FilterCriteria = FilterCriteria(), filter_mode: str = "tag_only",
                     n_rows: int = DEFAULT_ROWS, n_cols: int = DEFAULT_COLS, n_states: int = DEFAULT_STATES,
                     start: int = 0, threads: int = 1, chunk: int = 250, progress=None):
    """Yield records for indices [start, count) in index order."""
    shape = (n_rows, n_cols, n_states)
    chunks = [list(range(a, min(a + chunk, count))) for a in range(start, count, chunk)]
    jobs = [(seed, c, params, grid, criteria, filter_mode, shape) for c in chunks]
    if threads <= 1 or len(jobs) <= 1:
        results = map(_generate_chunk, jobs)
        pool = None
    else:
        import multiprocessing as mp
        pool = mp.get_context("spawn").Pool(threads)
        results = pool.imap(_generate_chunk, jobs)   # imap keeps submission order
    try:
        done = start
        for recs in results:
            yield from recs
            done += len(recs)
            if progress:
                progress(done, count)
    finally:
        if pool is not None:
            pool.close()
            pool.join()


def generate_dataset(count: int, seed: int, params: PhysicalParams | None = None,
                     grid: AngularGrid | None = None, criteria: FilterCriteria = FilterCriteria(),
                     filter_mode: str = "tag_only", n_rows: int = DEFAULT_ROWS, n_cols: int = DEFAULT_COLS,
                     n_states: int = DEFAULT_STATES, threads: int = 1, progress=None) -> Dataset:
    if count <= 0:
        raise ValidationError("count must be positive")
    params = params or PhysicalParams()
    grid = grid or AngularGrid()
    records = list(generate_records(count, seed, params, grid, criteria, filter_mode,
                                    n_rows, n_cols, n_states, threads=threads, progress=progress))
    return finalize_dataset(records, seed, params, grid, criteria, filter_mode, n_rows, n_cols, n_states)


def finalize_dataset(records, seed, params, grid, criteria, filter_mode, n_rows, n_cols, n_states) -> Dataset:
    ds = Dataset(records, params, grid, n_rows, n_cols, n_states)
    ds.normalization = compute_normalization(records, n_states)
    ds.provenance = {
        "seed": int(seed),
        "rng": SeededRng.algorithm,
        "generator_version": __version__,
        "count": len(records),
        "counts": ds.counts(),
        "filter_mode": filter_mode,
        "criteria": criteria.to_dict(),
        "max_steer_deg": MAX_STEER_DEG,
        "interpretable": sum(1 for r in records if r.interpretable),
    }
    return ds


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(ds.header(), separators=(",", ":")) + "\n")
        for r in ds.records:
            fh.write(r.to_json() + "\n")


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise ValidationError(f"{path}: empty dataset file")
        head = json.loads(first)
        if head.get("format") != "msfnet-dataset":
            raise ValidationError(f"{path}: not a dataset file")
        n_rows, n_cols, n_states = head["n_rows"], head["n_cols"], head["n_states"]
        records = [SampleRecord.from_json(line, n_rows, n_cols, n_states) for line in fh if line.strip()]
    norm = Normalization.from_dict(head["normalization"]) if head.get("normalization") else None
    return Dataset(records, PhysicalParams.from_dict(head["params"]), AngularGrid.from_dict(head["grid"]),
                   n_rows, n_cols, n_states, norm, head.get("provenance", {}))


def audit_dataset(ds: Dataset, tol: float = 1e-9) -> list[int]:
    """seed_index of every record whose stored measures are not re-derivable."""
    bad = []
    for r in ds.records:
        m = extract_measures(r.config, ds.params, ds.grid).as_vector()
        s = r.measures.as_vector()
        same_inf = np.isinf(m) & np.isinf(s)
        diff = np.where(same_inf, 0.0, np.abs(m - s))
        if np.any(~np.isfinite(diff)) or np.any(diff > tol * np.maximum(1.0, np.abs(s))):
            bad.append(r.seed_index)
    return bad


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def standardize_targets(ds: Dataset, y) -> np.ndarray:
    norm = _require_norm(ds)
    return norm.standardize(y)


def destandardize_targets(ds: Dataset, z) -> np.ndarray:
    return _require_norm(ds).destandardize(z)


def normalize_inputs(config_or_states, n_states: int | None = None) -> np.ndarray:
    """Max-min scaling of states to [0, 1]: state / (Q - 1)."""
    if isinstance(config_or_states, MsfConfig):
        n_states = config_or_states.n_states
        config_or_states = config_or_states.states
    if n_states is None:
        raise ValueError("n_states required for raw state arrays")
    return np.asarray(config_or_states, dtype=float) / max(n_states - 1, 1)


def _require_norm(ds: Dataset) -> Normalization:
    if ds.normalization is None:
        raise ValidationError("dataset has no normalization statistics")
    zero = np.flatnonzero(ds.normalization.target_scale == 0)
    if zero.size:
        names = ", ".join(MEASURE_NAMES[k] for k in zero)
        raise ValidationError(f"constant training target(s) {names}: scale is zero")
    return ds.normalization


# --- tabulated pattern data (externally simulated scenarios) ---------------

@dataclass
class TabulatedData:
    features: np.ndarray
    targets: np.ndarray
    feature_names: list
    target_names: list
    split: np.ndarray     # "train" / "test" per row

    def part(self, name):
        m = self.split == name
        return self.features[m], self.targets[m]


def ingest_tabulated_patterns(path, test_fraction: float = 0.15, seed: int = 0) -> TabulatedData:
    """Read a ``f1..fk,p1..pm`` CSV into feature/target matrices with an 85/15 split."""
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    feat = [h for h in header if h.startswith("f")]
    targ = [h for h in header if h.startswith("p")]
    if not feat or not targ or header != feat + targ:
        raise ValidationError(f"{path}: header must be f1..fk followed by p1..pm")
    body = rows[1:]
    if not body:
        raise ValidationError(f"{path}: no data rows")
    data = np.empty((len(body), len(header)))
    for n, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValidationError(f"{path}:{n}: expected {len(header)} fields, got {len(row)}")
        try:
            data[n - 2] = [float(v) for v in row]
        except ValueError:
            raise ValidationError(f"{path}:{n}: non-numeric field") from None
    n = data.shape[0]
    n_test = int(round(test_fraction * n))
    perm = SeededRng(seed, (0x7AB,)).permutation(n)
    split = np.full(n, "train", dtype=object)
    split[perm[:n_test]] = "test"
    return TabulatedData(data[:, :len(feat)], data[:, len(feat):], feat, targ, split)


def write_tabulated_patterns(path, features, targets) -> None:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    k, m = features.shape[1], targets.shape[1]
    header = [f"f{i + 1}" for i in range(k)] + [f"p{i + 1}" for i in range(m)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for f, t in zip(features, targets):
            fh.write(",".join(repr(float(v)) for v in np.concatenate((f, t))) + "\n")


def incidence_stand_in(n_rows: int = 4, n_cols: int = 4, theta_inc=None, phi_inc=None,
                       cut_theta=None, params: PhysicalParams | None = None):
    """Synthetic stand-in for solver data: uniform surface under oblique incidence.

    Features are (theta_inc, phi_inc) in degrees; targets are the reflected
    power (normalized to the coherent broadside maximum) along the phi = 0
    elevation cut. Defaults tabulate 90 x 90 = 8100 incidence angles.
    """
    params = params or PhysicalParams()
    theta_inc = np.arange(90.0) if theta_inc is None else np.asarray(theta_inc, dtype=float)
    phi_inc = np.arange(90.0) if phi_inc is None else np.asarray(phi_inc, dtype=float)
    cut_theta = np.arange(-89.0, 90.0, 2.0) if cut_theta is None else np.asarray(cut_theta, dtype=float)
    ti, pi_ = np.meshgrid(theta_inc, phi_inc, indexing="ij")
    ti, pi_ = ti.reshape(-1), pi_.reshape(-1)
    k = params.wave_number * params.cell_pitch
    # incident plane wave imposes the same linear phase as a steering profile
    ui = k * np.sin(np.radians(ti)) * np.cos(np.radians(pi_))
    vi = k * np.sin(np.radians(ti)) * np.sin(np.radians(pi_))
    uo = k * np.sin(np.radians(cut_theta))      # phi = 0 cut, signed theta
    col = np.arange(n_cols) + 0.5
    row = np.arange(n_rows) + 0.5
    ex = np.exp(1j * (uo[None, :, None] + ui[:, None, None]) * col[None, None, :]).sum(-1)
    ey = np.exp(1j * vi[:, None] * row[None, :]).sum(-1)
    field_ = params.reflection_amplitude * ex * ey[:, None]
    power = np.abs(field_) ** 2 / (params.reflection_amplitude * n_rows * n_cols) ** 2
    return np.stack([ti, pi_], axis=1), power
