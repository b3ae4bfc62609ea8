"""Directivity, PSLR, direction of maximum and half-power beam width."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import AngularGrid, MsfConfig, PhysicalParams, ValidationError
from .farfield import RadiationPattern, compute_pattern_fast

HALF_POWER_DB = 10.0 * math.log10(0.5)
MEASURE_NAMES = ("directivity_db", "pslr_db", "theta_max_deg", "phi_max_deg", "hpbw_deg")


@dataclass(frozen=True)
class PatternMeasures:
    directivity_db: float
    pslr_db: float
    theta_max_deg: float
    phi_max_deg: float
    hpbw_deg: float

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in MEASURE_NAMES], dtype=float)

    @classmethod
    def from_vector(cls, v) -> "PatternMeasures":
        return cls(*(float(x) for x in v))

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: ("inf" if math.isinf(v) and v > 0 else float(v)) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PatternMeasures":
        return cls(*(math.inf if d[n] == "inf" else float(d[n]) for n in MEASURE_NAMES))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class LobeMap:
    labels: np.ndarray
    peaks: list          # (theta_deg, phi_deg, power) per basin, ordered by basin id
    main_basin_id: int
    degenerate: bool = False
    peak_index: list = field(default_factory=list, repr=False)   # (t, p) per basin


def _node_layout(shape):
    """Node 0 is the pole (all theta = 0 samples); node 1 + (t-1)*P + p is cell (t, p)."""
    n_t, n_p = shape
    return 1 + (n_t - 1) * n_p


def _neighbour_table(shape):
    """(n_nodes, 8) neighbour node ids, -1 where absent. Pole handled separately."""
    n_t, n_p = shape
    t = np.arange(1, n_t)[:, None].repeat(n_p, 1)
    p = np.arange(n_p)[None, :].repeat(n_t - 1, 0)
    nbrs = []
    for dt in (-1, 0, 1):
        for dp in (-1, 0, 1):
            if dt == 0 and dp == 0:
                continue
            tt = t + dt
            pp = (p + dp) % n_p
            ids = 1 + (tt - 1) * n_p + pp
            ids = np.where(tt == 0, 0, ids)
            ids = np.where(tt >= n_t, -1, ids)
            nbrs.append(ids.reshape(-1))
    return np.stack(nbrs, axis=1)


def detect_lobes(pattern: RadiationPattern) -> LobeMap:
    """Steepest-ascent basin labelling on the (theta, phi) grid.

    Every node moves to its highest 8-neighbour (phi wraps; the theta = 0
    row is one pole node) when that neighbour is strictly higher, ties going
    to the lowest (theta_idx, phi_idx). Nodes reaching the same local
    maximum share a basin.
    """
    grid = pattern.grid
    n_t, n_p = grid.shape
    if n_t < 3 or n_p < 3:
        raise ValidationError("lobe detection needs at least 3 theta and 3 phi samples")
    power = pattern.power
    if np.ptp(power) <= 1e-12 * max(power.max(), 1e-300):
        labels = np.zeros(grid.shape, dtype=np.int64)
        return LobeMap(labels, [(0.0, 0.0, float(power[0, 0]))], 0, degenerate=True, peak_index=[(0, 0)])

    node_power = np.concatenate(([power[0, 0]], power[1:].reshape(-1)))
    n_nodes = node_power.size
    nb = _neighbour_table(grid.shape)
    nb_power = np.where(nb >= 0, node_power[np.maximum(nb, 0)], -np.inf)
    best_p = nb_power.max(axis=1)
    # node ids are ordered lexicographically in (theta_idx, phi_idx)
    best = np.where(nb_power == best_p[:, None], nb, n_nodes).min(axis=1)
    parent = np.empty(n_nodes, dtype=np.int64)
    parent[1:] = np.where(best_p > node_power[1:], best, np.arange(1, n_nodes))
    ring = np.arange(1, n_p + 1)
    ring_power = node_power[ring]
    if ring_power.max() > node_power[0]:
        parent[0] = ring[np.argmax(ring_power)]   # argmax returns the first (lowest phi) on ties
    else:
        parent[0] = 0

    while True:
        nxt = parent[parent]
        if np.array_equal(nxt, parent):
            break
        parent = nxt

    roots, node_label = np.unique(parent, return_inverse=True)
    labels = np.empty(grid.shape, dtype=np.int64)
    labels[0, :] = node_label[0]
    labels[1:] = node_label[1:].reshape(n_t - 1, n_p)

    peaks, peak_index = [], []
    for r in roots:
        if r == 0:
            t, p = 0, 0
        else:
            t, p = 1 + (r - 1) // n_p, (r - 1) % n_p
        peak_index.append((int(t), int(p)))
        peaks.append((float(grid.theta_deg[t]), float(grid.phi_deg[p]), float(node_power[r])))
    main = int(np.argmax([pk[2] for pk in peaks]))
    return LobeMap(labels, peaks, main, degenerate=False, peak_index=peak_index)


def local_maxima_bruteforce(pattern: RadiationPattern) -> set[tuple[int, int]]:
    """Grid nodes with no strictly higher 8-neighbour, by explicit enumeration."""
    power = pattern.power
    n_t, n_p = power.shape
    out = set()
    pole = power[0, 0]
    if all(power[1, p] <= pole for p in range(n_p)):
        out.add((0, 0))
    for t in range(1, n_t):
        for p in range(n_p):
            v = power[t, p]
            ok = True
            for dt in (-1, 0, 1):
                for dp in (-1, 0, 1):
                    if dt == dp == 0:
                        continue
                    tt = t + dt
                    if tt >= n_t:
                        continue
                    w = pole if tt == 0 else power[tt, (p + dp) % n_p]
                    if w > v:
                        ok = False
            if ok:
                out.add((t, p))
    return out


def _hemisphere_integral(pattern: RadiationPattern) -> float:
    grid = pattern.grid
    theta = grid.theta_rad
    # phi is periodic: the trapezoid rule reduces to a plain sum times the step
    ring = pattern.power.sum(axis=1) * math.radians(grid.phi_step)
    return float(np.trapezoid(ring * np.sin(theta), theta))


def directivity(pattern: RadiationPattern) -> float:
    """Peak-to-average radiation intensity over the upper hemisphere, in dB."""
    total = _hemisphere_integral(pattern)
    if not total > 0:
        raise ValidationError("pattern carries zero total power")
    return 10.0 * math.log10(4.0 * math.pi * float(pattern.power.max()) / total)


def pslr(pattern: RadiationPattern, lobes: LobeMap | None = None) -> float:
    """Main-lobe peak over strongest other basin peak, in dB; +inf with a single basin."""
    lobes = lobes if lobes is not None else detect_lobes(pattern)
    if len(lobes.peaks) < 2:
        return math.inf
    main = lobes.peaks[lobes.main_basin_id][2]
    second = max(pk[2] for k, pk in enumerate(lobes.peaks) if k != lobes.main_basin_id)
    if second <= 0:
        return math.inf
    return 10.0 * math.log10(main / second)


def _parabolic_offset(ym, y0, yp) -> float:
    denom = ym - 2.0 * y0 + yp
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (ym - yp) / denom, -0.5, 0.5))


def max_direction(pattern: RadiationPattern) -> tuple[float, float]:
    """Grid argmax refined by independent 3-point parabolas (on dB) in theta and phi."""
    grid = pattern.grid
    n_t, n_p = grid.shape
    db = pattern.power_db
    t, p = np.unravel_index(int(np.argmax(pattern.power)), grid.shape)
    if t == 0:
        return 0.0, 0.0
    theta = float(grid.theta_deg[t])
    if t < n_t - 1:
        theta += _parabolic_offset(db[t - 1, p], db[t, p], db[t + 1, p]) * grid.theta_step
    phi = float(grid.phi_deg[p]) + _parabolic_offset(
        db[t, (p - 1) % n_p], db[t, p], db[t, (p + 1) % n_p]) * grid.phi_step
    theta = min(max(theta, 0.0), float(grid.theta_deg[-1]))
    if theta < grid.theta_step:
        return theta, 0.0
    return theta, phi % 360.0


def _phi_column(pattern: RadiationPattern, phi_deg: float) -> np.ndarray:
    """Power along theta at an arbitrary azimuth (linear interpolation in phi)."""
    grid = pattern.grid
    n_p = grid.shape[1]
    x = (phi_deg % 360.0) / grid.phi_step
    k = int(math.floor(x))
    w = x - k
    a = pattern.power[:, k % n_p]
    b = pattern.power[:, (k + 1) % n_p]
    return (1.0 - w) * a + w * b


def elevation_cut(pattern: RadiationPattern, phi_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Great-circle cut through ``phi_deg`` and ``phi_deg + 180``.

    Returns signed angles s (s >= 0 on the phi side, s < 0 across the pole)
    and linear power along the cut.
    """
    theta = pattern.grid.theta_deg
    front = _phi_column(pattern, phi_deg)
    back = _phi_column(pattern, phi_deg + 180.0)
    s = np.concatenate((-theta[:0:-1], theta))
    pw = np.concatenate((back[:0:-1], front))
    return s, pw


@dataclass(frozen=True)
class BeamWidth:
    width_deg: float
    clamped: bool


def hpbw_detail(pattern: RadiationPattern, direction: tuple[float, float] | None = None) -> BeamWidth:
    theta_max, phi_max = direction if direction is not None else max_direction(pattern)
    s, pw = elevation_cut(pattern, phi_max)
    db = 10.0 * np.log10(np.maximum(pw, 1e-300))
    k = int(np.argmin(np.abs(s - theta_max)))
    # walk uphill to the local peak of the cut
    while True:
        left = db[k - 1] if k > 0 else -np.inf
        right = db[k + 1] if k < s.size - 1 else -np.inf
        if right > db[k] and right >= left:
            k += 1
        elif left > db[k]:
            k -= 1
        else:
            break
    ref = db[k]
    if 0 < k < s.size - 1:
        d = db[k - 1] - 2 * db[k] + db[k + 1]
        if d < 0:
            ref = db[k] - 0.125 * (db[k - 1] - db[k + 1]) ** 2 / d
    level = ref + HALF_POWER_DB
    clamped = False

    def crossing(step):
        nonlocal clamped
        i = k
        while 0 <= i + step < s.size:
            j = i + step
            if db[j] < level:
                frac = (db[i] - level) / (db[i] - db[j])
                return s[i] + frac * (s[j] - s[i])
            i = j
        clamped = True
        return s[i]

    lo = crossing(-1)
    hi = crossing(+1)
    return BeamWidth(float(min(hi - lo, 180.0)), clamped)


def hpbw(pattern: RadiationPattern, direction: tuple[float, float] | None = None) -> float:
    """-3 dB width of the main lobe along the elevation cut through its azimuth."""
    return hpbw_detail(pattern, direction).width_deg


def measures_from_pattern(pattern: RadiationPattern) -> PatternMeasures:
    lobes = detect_lobes(pattern)
    theta, phi = max_direction(pattern)
    return PatternMeasures(
        directivity_db=directivity(pattern),
        pslr_db=pslr(pattern, lobes),
        theta_max_deg=theta,
        phi_max_deg=phi,
        hpbw_deg=hpbw(pattern, (theta, phi)),
    )


def extract_measures(config: MsfConfig, params: PhysicalParams | None = None,
                     grid: AngularGrid | None = None) -> PatternMeasures:
    return measures_from_pattern(compute_pattern_fast(config, params, grid))
