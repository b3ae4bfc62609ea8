"""Analytical far field of a coding metasurface.

The scattered field is the coherent sum of per-cell phasors

    field(theta, phi) = amplitude * sum_ij exp(1j * (phase_ij + wavenumber * path_ij(theta, phi)))
    path_ij = pitch * sin(theta) * ((i - 1/2) cos(phi) + (j - 1/2) sin(phi))

with ``i`` the (1-based) column index along x and ``j`` the row index
along y. Cells are isotropic, mutual coupling is ignored, and every state
reflects with the same amplitude.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import AngularGrid, MsfConfig, PhysicalParams, ValidationError

_POWER_FLOOR = 1e-300


def phase_of_state(state: int, n_states: int) -> float:
    """Uniform Q-level phase map ``state * 2 pi / Q`` in radians."""
    if not 0 <= state < n_states:
        raise ValidationError(f"state {state} outside [0, {n_states - 1}]")
    return state * 2.0 * math.pi / n_states


def config_phases(config: MsfConfig) -> np.ndarray:
    return config.states.astype(float) * (2.0 * np.pi / config.n_states)


def relative_phase_shift(i: int, j: int, theta, phi, params: PhysicalParams):
    """Geometric path difference of cell (i, j), in length units (theta/phi in radians)."""
    return params.cell_pitch * np.sin(theta) * ((i - 0.5) * np.cos(phi) + (j - 0.5) * np.sin(phi))


@dataclass(frozen=True)
class RadiationPattern:
    grid: AngularGrid
    field: np.ndarray
    power: np.ndarray = field(init=False, repr=False)
    power_db: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        f = np.asarray(self.field)
        if f.shape != self.grid.shape:
            raise ValidationError(f"field shape {f.shape} does not match grid {self.grid.shape}")
        p = f.real ** 2 + f.imag ** 2 if np.iscomplexobj(f) else f.astype(float) ** 2
        pmax = p.max()
        pdb = 10.0 * np.log10(np.maximum(p, _POWER_FLOOR) / max(pmax, _POWER_FLOOR))
        pdb[p == pmax] = 0.0
        for a in (f, p, pdb):
            a.setflags(write=False)
        object.__setattr__(self, "field", f)
        object.__setattr__(self, "power", p)
        object.__setattr__(self, "power_db", pdb)

    @classmethod
    def from_power(cls, grid: AngularGrid, power) -> "RadiationPattern":
        """Wrap a synthetic non-negative power pattern (field = sqrt(power))."""
        power = np.asarray(power, dtype=float)
        if np.any(power < 0):
            raise ValidationError("power must be non-negative")
        return cls(grid, np.sqrt(power).astype(complex))


def _direction_terms(params: PhysicalParams, grid: AngularGrid):
    st = np.sin(grid.theta_rad)[:, None]
    scale = params.wave_number * params.cell_pitch
    u = scale * st * np.cos(grid.phi_rad)[None, :]
    v = scale * st * np.sin(grid.phi_rad)[None, :]
    # sin(0) is exactly 0, so the theta = 0 row is identical for every phi
    return u, v


@functools.lru_cache(maxsize=2)
def _steering_matrix(n_rows: int, n_cols: int, params: PhysicalParams, grid: AngularGrid) -> np.ndarray:
    """exp(1j wavenumber path_ij) for every grid point (rows) and cell (columns, row-major)."""
    theta = grid.theta_rad[:, None]
    phi = grid.phi_rad[None, :]
    wavenumber = params.wave_number
    out = np.empty(grid.shape + (n_rows * n_cols,), dtype=complex)
    for j in range(1, n_rows + 1):
        for i in range(1, n_cols + 1):
            out[..., (j - 1) * n_cols + (i - 1)] = np.exp(1j * wavenumber * relative_phase_shift(i, j, theta, phi, params))
    out = out.reshape(-1, n_rows * n_cols)
    out.setflags(write=False)
    return out


def field_naive(phases: np.ndarray, params: PhysicalParams, grid: AngularGrid) -> np.ndarray:
    """Direct summation over every cell (reference path).

    Each term is factored as exp(1j phase_ij) * exp(1j wavenumber path_ij); the geometric
    factor is cached per (array size, params, grid).
    """
    phases = np.asarray(phases, dtype=float)
    n_rows, n_cols = phases.shape
    a = _steering_matrix(n_rows, n_cols, params, grid)
    s = np.exp(1j * phases).reshape(-1)
    return params.reflection_amplitude * (a @ s).reshape(grid.shape)


@functools.lru_cache(maxsize=4)
def _separable_factors(n_rows: int, n_cols: int, params: PhysicalParams, grid: AngularGrid):
    u, v = _direction_terms(params, grid)
    a = np.exp(1j * u[..., None] * (np.arange(n_cols) + 0.5))   # (T, P, M)
    b = np.exp(1j * v[..., None] * (np.arange(n_rows) + 0.5))   # (T, P, N)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def field_fast(phases: np.ndarray, params: PhysicalParams, grid: AngularGrid) -> np.ndarray:
    """Separable evaluation: sum over rows j of exp(1j v (j-1/2)) times the column sum of exp(1j (phase_ji + u (i-1/2))).

    u = wavenumber pitch sin(theta) cos(phi), v = wavenumber pitch sin(theta) sin(phi).
    """
    phases = np.asarray(phases, dtype=float)
    n_rows, n_cols = phases.shape
    a, b = _separable_factors(n_rows, n_cols, params, grid)
    inner = a @ np.exp(1j * phases).T          # (T, P, N)
    out = np.einsum("tpn,tpn->tp", inner, b)
    return params.reflection_amplitude * out


def compute_pattern(config: MsfConfig, params: PhysicalParams | None = None,
                    grid: AngularGrid | None = None) -> RadiationPattern:
    params = params or PhysicalParams()
    grid = grid or AngularGrid()
    return RadiationPattern(grid, field_naive(config_phases(config), params, grid))


def compute_pattern_fast(config: MsfConfig, params: PhysicalParams | None = None,
                         grid: AngularGrid | None = None) -> RadiationPattern:
    params = params or PhysicalParams()
    grid = grid or AngularGrid()
    return RadiationPattern(grid, field_fast(config_phases(config), params, grid))


def pattern_from_phases(phases, params: PhysicalParams | None = None,
                        grid: AngularGrid | None = None) -> RadiationPattern:
    """Pattern of an unquantized phase profile (radians, rows x cols)."""
    params = params or PhysicalParams()
    grid = grid or AngularGrid()
    return RadiationPattern(grid, field_fast(phases, params, grid))


def export_pattern_csv(pattern: RadiationPattern, path) -> None:
    """Write ``theta_deg,phi_deg,power,power_db,field_re,field_im`` rows, theta outer."""
    fmt = "{:.9g}".format
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta_deg", "phi_deg", "power", "power_db", "field_re", "field_im"])
        f = np.asarray(pattern.field, dtype=complex)
        for t, th in enumerate(pattern.grid.theta_deg):
            for p, ph in enumerate(pattern.grid.phi_deg):
                w.writerow([fmt(th), fmt(ph), fmt(pattern.power[t, p]), fmt(pattern.power_db[t, p]),
                            fmt(f[t, p].real), fmt(f[t, p].imag)])
