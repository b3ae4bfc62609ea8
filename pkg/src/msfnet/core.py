"""Domain types, physical constants, config file I/O and seeded randomness."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_ROWS = 12
DEFAULT_COLS = 12
DEFAULT_STATES = 8

RNG_ALGORITHM = "philox4x64-10/seedsequence"


class ValidationError(ValueError):
    """Raised when a value violates a domain invariant."""


class ConfigParseError(ValueError):
    """Raised when a config file cannot be parsed."""


@dataclass(frozen=True)
class MsfConfig:
    """N x M matrix of unit-cell states in ``[0, n_states)``.

    Rows are indexed by ``j`` (y axis, phi = 90 deg), columns by ``i``
    (x axis, phi = 0 deg).
    """

    states: np.ndarray
    n_states: int = DEFAULT_STATES

    def __post_init__(self):
        arr = np.array(self.states, dtype=np.int64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"states must be a non-empty 2-D matrix, got shape {arr.shape}")
        if int(self.n_states) < 1:
            raise ValidationError(f"n_states must be positive, got {self.n_states}")
        bad = np.argwhere((arr < 0) | (arr >= self.n_states))
        if bad.size:
            r, c = (int(v) for v in bad[0])
            raise ValidationError(
                f"cell (row {r}, col {c}) has state {arr[r, c]}, outside [0, {self.n_states - 1}]"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)
        object.__setattr__(self, "n_states", int(self.n_states))

    @property
    def n_rows(self) -> int:
        return self.states.shape[0]

    @property
    def n_cols(self) -> int:
        return self.states.shape[1]

    @classmethod
    def uniform(cls, n_rows=DEFAULT_ROWS, n_cols=DEFAULT_COLS, n_states=DEFAULT_STATES, state=0):
        return cls(np.full((n_rows, n_cols), state, dtype=np.int64), n_states)

    @classmethod
    def random(cls, rng: "SeededRng", n_rows=DEFAULT_ROWS, n_cols=DEFAULT_COLS, n_states=DEFAULT_STATES):
        return cls(rng.integers(0, n_states, size=(n_rows, n_cols)), n_states)

    def shifted(self, k: int = 1) -> "MsfConfig":
        """Global state shift ``s -> (s + k) mod Q``."""
        return MsfConfig((self.states + k) % self.n_states, self.n_states)

    def conjugated(self) -> "MsfConfig":
        """Phase negation ``s -> (Q - s) mod Q``."""
        return MsfConfig((self.n_states - self.states) % self.n_states, self.n_states)

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "n_states": self.n_states,
            "states": self.states.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MsfConfig":
        try:
            n_rows, n_cols, n_states = d["n_rows"], d["n_cols"], d["n_states"]
            states = d["states"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"missing config field: {exc}") from None
        for name, v in (("n_rows", n_rows), ("n_cols", n_cols), ("n_states", n_states)):
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(states, list) or len(states) != n_rows:
            raise ValidationError(f"expected {n_rows} rows of states")
        for r, row in enumerate(states):
            if not isinstance(row, list) or len(row) != n_cols:
                raise ValidationError(f"row {r}: expected {n_cols} columns")
            for c, s in enumerate(row):
                if not isinstance(s, int) or isinstance(s, bool):
                    raise ValidationError(f"cell (row {r}, col {c}): state must be an integer, got {s!r}")
        return cls(np.array(states, dtype=np.int64).reshape(n_rows, n_cols), n_states)

    def __eq__(self, other):
        if not isinstance(other, MsfConfig):
            return NotImplemented
        return self.n_states == other.n_states and np.array_equal(self.states, other.states)

    def __hash__(self):
        return hash((self.n_states, self.states.shape, self.states.tobytes()))


@dataclass(frozen=True)
class PhysicalParams:
    """Wavelength, cell pitch and reflection amplitude.

    The defaults (unit wavelength, half-wavelength pitch, unit amplitude) are
    toolkit choices; none of the beam measures depends on the amplitude, but
    absolute field values do.
    """

    wavelength: float = 1.0
    cell_pitch: float = 0.5
    reflection_amplitude: float = 1.0

    def __post_init__(self):
        for name in ("wavelength", "cell_pitch", "reflection_amplitude"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def wave_number(self) -> float:
        return 2.0 * math.pi / self.wavelength

    def to_dict(self) -> dict:
        return {
            "wavelength": float(self.wavelength),
            "cell_pitch": float(self.cell_pitch),
            "reflection_amplitude": float(self.reflection_amplitude),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalParams":
        return cls(float(d["wavelength"]), float(d["cell_pitch"]), float(d["reflection_amplitude"]))


@dataclass(frozen=True)
class AngularGrid:
    """Upper-hemisphere sampling grid, angles in degrees.

    theta runs from 0 to ``theta_max`` inclusive, phi from 0 up to but
    excluding 360.
    """

    theta_step: float = 1.0
    phi_step: float = 1.0
    theta_max: float = 90.0
    theta_deg: np.ndarray = field(init=False, repr=False, compare=False)
    phi_deg: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.theta_step > 0 and self.phi_step > 0):
            raise ValidationError("grid steps must be positive")
        if not (0 < self.theta_max <= 90):
            raise ValidationError("theta_max must lie in (0, 90]")
        n_t = int(round(self.theta_max / self.theta_step))
        if not math.isclose(n_t * self.theta_step, self.theta_max, rel_tol=0, abs_tol=1e-9):
            raise ValidationError("theta_max must be a multiple of theta_step")
        n_p = int(round(360.0 / self.phi_step))
        if not math.isclose(n_p * self.phi_step, 360.0, rel_tol=0, abs_tol=1e-9):
            raise ValidationError("phi_step must divide 360")
        theta = np.arange(n_t + 1, dtype=float) * self.theta_step
        phi = np.arange(n_p, dtype=float) * self.phi_step
        theta.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "theta_deg", theta)
        object.__setattr__(self, "phi_deg", phi)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.theta_deg.size, self.phi_deg.size)

    @property
    def theta_rad(self) -> np.ndarray:
        return np.deg2rad(self.theta_deg)

    @property
    def phi_rad(self) -> np.ndarray:
        return np.deg2rad(self.phi_deg)

    def to_dict(self) -> dict:
        return {"theta_step": float(self.theta_step), "phi_step": float(self.phi_step),
                "theta_max": float(self.theta_max)}

    @classmethod
    def from_dict(cls, d: dict) -> "AngularGrid":
        return cls(float(d["theta_step"]), float(d["phi_step"]), float(d.get("theta_max", 90.0)))


class SeededRng:
    """Reproducible random stream: numpy Philox4x64-10 keyed by a SeedSequence.

    ``SeededRng(seed, stream)`` streams are identical across platforms for
    equal ``(seed, stream)``; child streams for parallel work are derived
    with :meth:`child`.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int, stream: tuple[int, ...] | int = ()):
        if not (0 <= int(seed) < 2**64):
            raise ValidationError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.stream = (stream,) if isinstance(stream, int) else tuple(int(s) for s in stream)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "SeededRng":
        return SeededRng(self.seed, self.stream + (int(index),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size=size)

    def choice(self, n, size, replace=False):
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n):
        return self._gen.permutation(n)

    def random(self, size=None):
        return self._gen.random(size)


def dumps_config(config: MsfConfig) -> str:
    """Canonical text form: fixed key order, one row per line, no floats."""
    rows = ",\n    ".join("[" + ",".join(str(int(s)) for s in row) + "]" for row in config.states)
    return (
        "{\n"
        f'  "n_rows": {config.n_rows},\n'
        f'  "n_cols": {config.n_cols},\n'
        f'  "n_states": {config.n_states},\n'
        f'  "states": [\n    {rows}\n  ]\n'
        "}\n"
    )


def save_config(config: MsfConfig, path) -> None:
    Path(path).write_bytes(dumps_config(config).encode("utf-8"))


def load_config(path) -> MsfConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigParseError(f"{path}: top level must be a JSON object")
    return MsfConfig.from_dict(data)
