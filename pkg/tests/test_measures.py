import json
import math

import numpy as np
import pytest

from msfnet.core import AngularGrid, MsfConfig
from msfnet.datagen import generate_steering_config, steering_phases
from msfnet.farfield import RadiationPattern, compute_pattern_fast, pattern_from_phases
from msfnet.measures import (PatternMeasures, detect_lobes, directivity, extract_measures, hpbw, hpbw_detail,
                             local_maxima_bruteforce, max_direction, pslr)

from conftest import random_configs

# classical uniform-array oracles for a 12 x 12 array at half-wavelength pitch
UNIFORM_DIRECTIVITY_DB = 10 * math.log10(math.pi * 144)          # 26.56
UNIFORM_SIDELOBE_DB = 13.26
UNIFORM_HPBW_DEG = math.degrees(0.886 / (12 * 0.5))                # 8.46


@pytest.fixture(scope="module")
def uniform_pattern(params, grid):
    return compute_pattern_fast(MsfConfig.uniform(), params, grid)


def test_uniform_main_basin_at_broadside(uniform_pattern):
    lobes = detect_lobes(uniform_pattern)
    assert lobes.peaks[lobes.main_basin_id][0] == 0.0
    assert len(lobes.peaks) > 1


def test_uniform_against_classical_oracles(uniform_pattern):
    assert directivity(uniform_pattern) == pytest.approx(UNIFORM_DIRECTIVITY_DB, abs=0.5)
    assert pslr(uniform_pattern) == pytest.approx(UNIFORM_SIDELOBE_DB, abs=0.5)
    assert max_direction(uniform_pattern) == (0.0, 0.0)
    assert hpbw(uniform_pattern) == pytest.approx(UNIFORM_HPBW_DEG, abs=0.5)


def test_uniform_hpbw_against_fine_cut(params):
    # 0.1 deg brute-force elevation cut of the same array
    th = np.radians(np.arange(0, 30, 0.1))
    u = params.wave_number * params.cell_pitch * np.sin(th)
    af = np.abs(np.sum(np.exp(1j * np.outer(u, np.arange(12))), axis=1) * 12) ** 2
    edge = np.degrees(th[np.argmax(af < af[0] / 2)])
    assert hpbw(compute_pattern_fast(MsfConfig.uniform(), params, AngularGrid())) == pytest.approx(2 * edge, abs=0.2)


def test_two_beam_stripes_give_mirrored_peaks(params, grid):
    # two-cell stripes of 0 / pi phase along x split the beam into phi = 0 and 180
    states = np.tile(np.array([0, 0, 4, 4]), (12, 3))
    pat = compute_pattern_fast(MsfConfig(states, 8), params, grid)
    lobes = detect_lobes(pat)
    assert len(lobes.peaks) >= 2
    top = sorted(lobes.peaks, key=lambda pk: -pk[2])[:2]
    assert top[0][2] == pytest.approx(top[1][2], rel=1e-9)
    assert top[0][0] == top[1][0]
    assert top[0][0] == pytest.approx(30.0, abs=1.5)
    assert {top[0][1], top[1][1]} == {0.0, 180.0}
    assert set(lobes.peak_index) == local_maxima_bruteforce(pat)
    assert pslr(pat, lobes) == pytest.approx(0.0, abs=1e-9)


def test_basin_peaks_equal_bruteforce_local_maxima(params, grid):
    for c in random_configs(100, seed=5):
        pat = compute_pattern_fast(c, params, grid)
        lobes = detect_lobes(pat)
        assert set(lobes.peak_index) == local_maxima_bruteforce(pat)
        assert lobes.labels.shape == grid.shape
        assert lobes.labels.min() == 0 and lobes.labels.max() == len(lobes.peaks) - 1


def test_basin_peaks_are_local_maxima_of_their_basin(params, grid):
    pat = compute_pattern_fast(random_configs(1, seed=77)[0], params, grid)
    lobes = detect_lobes(pat)
    for b, (t, p) in enumerate(lobes.peak_index):
        assert lobes.labels[t, p] == b
        assert pat.power[t, p] == pat.power[lobes.labels == b].max()
    t, p = np.unravel_index(np.argmax(pat.power), pat.power.shape)
    assert lobes.labels[t, p] == lobes.main_basin_id


def test_degenerate_pattern_is_one_flagged_basin():
    grid = AngularGrid(5.0, 5.0)
    lobes = detect_lobes(RadiationPattern.from_power(grid, np.ones(grid.shape)))
    assert lobes.degenerate and len(lobes.peaks) == 1


def test_single_cell_directivity_is_two(params, grid):
    pat = compute_pattern_fast(MsfConfig(np.array([[3]]), 8), params, grid)
    assert directivity(pat) == pytest.approx(10 * math.log10(2), abs=0.01)


def test_steered_directivity_follows_projected_aperture(params, grid, uniform_pattern):
    steered = compute_pattern_fast(generate_steering_config(30.0, 0.0), params, grid)
    expected = directivity(uniform_pattern) + 10 * math.log10(math.cos(math.radians(30)))
    assert directivity(steered) == pytest.approx(expected, abs=1.0)


def test_single_gaussian_has_infinite_pslr():
    grid = AngularGrid()
    th = grid.theta_deg[:, None] + 0 * grid.phi_deg[None, :]
    pat = RadiationPattern.from_power(grid, np.exp(-(th / 20.0) ** 2))
    assert pslr(pat) == math.inf
    assert PatternMeasures(20.0, math.inf, 0.0, 0.0, 10.0).to_dict()["pslr_db"] == "inf"
    back = PatternMeasures.from_dict(json.loads(PatternMeasures(20.0, math.inf, 0.0, 0.0, 10.0).to_json()))
    assert back.pslr_db == math.inf


def test_pslr_matches_two_largest_local_maxima(params, grid):
    for c in random_configs(10, seed=9):
        pat = compute_pattern_fast(c, params, grid)
        vals = sorted((pat.power[t, p] for t, p in local_maxima_bruteforce(pat)), reverse=True)
        assert pslr(pat) == pytest.approx(10 * math.log10(vals[0] / vals[1]), abs=1e-9)
        assert pslr(pat) >= 0


@pytest.mark.parametrize("target", [(30.0, 0.0), (30.0, 90.0), (45.0, 120.0)])
def test_max_direction_continuous_steering(params, grid, target):
    phases = steering_phases(*target, 12, 12, params)
    theta, phi = max_direction(pattern_from_phases(phases, params, grid))
    # oracle: 0.1 deg brute-force scan of the same field near the target
    th = np.radians(np.arange(target[0] - 3, target[0] + 3, 0.1))
    ph = np.radians(np.arange(target[1] - 3, target[1] + 3, 0.1))
    tt, pp = np.meshgrid(th, ph, indexing="ij")
    k = params.wave_number * params.cell_pitch
    i = np.arange(12) + 0.5
    field = sum(np.exp(1j * (phases[j, ii] + k * np.sin(tt) * (i[ii] * np.cos(pp) + i[j] * np.sin(pp))))
                for j in range(12) for ii in range(12))
    a, b = np.unravel_index(np.argmax(np.abs(field)), field.shape)
    assert theta == pytest.approx(math.degrees(th[a]), abs=0.5)
    assert (phi - math.degrees(ph[b]) + 180) % 360 - 180 == pytest.approx(0.0, abs=1.0)


def test_hpbw_of_injected_cosine_lobe():
    grid = AngularGrid()
    for rate in (3.0, 2.7):
        th = np.radians(grid.theta_deg)[:, None] + 0 * grid.phi_deg[None, :]
        power = np.cos(np.minimum(th * rate, math.pi / 2)) ** 2 + 1e-12
        pat = RadiationPattern.from_power(grid, power)
        expected = 2 * math.degrees(math.acos(math.sqrt(0.5)) / rate)
        bw = hpbw_detail(pat, (0.0, 0.0))
        assert bw.width_deg == pytest.approx(expected, abs=0.05)
        assert not bw.clamped


def test_hpbw_flags_clamped_cut():
    grid = AngularGrid()
    th = grid.theta_deg[:, None] + 0 * grid.phi_deg[None, :]
    pat = RadiationPattern.from_power(grid, np.exp(-(th / 200.0) ** 2))
    bw = hpbw_detail(pat)
    assert bw.clamped and bw.width_deg <= 180.0


def test_hpbw_broadens_when_steered(params, grid, uniform_pattern):
    steered = extract_measures(generate_steering_config(30.0, 0.0), params, grid)
    ratio = steered.hpbw_deg / hpbw(uniform_pattern)
    assert ratio == pytest.approx(1 / math.cos(math.radians(30)), rel=0.15)


def test_hpbw_shrinks_with_array_size(params, grid):
    widths = [extract_measures(MsfConfig.uniform(n, n), params, grid).hpbw_deg for n in (4, 8, 12, 16)]
    assert all(a >= b for a, b in zip(widths, widths[1:]))


def test_extract_measures_uniform_and_deterministic(params, grid):
    m = extract_measures(MsfConfig.uniform(), params, grid)
    assert m.directivity_db == pytest.approx(UNIFORM_DIRECTIVITY_DB, abs=0.5)
    assert m.pslr_db == pytest.approx(13.3, abs=0.5)
    assert (m.theta_max_deg, m.phi_max_deg) == (0.0, 0.0)
    assert m.hpbw_deg == pytest.approx(8.5, abs=0.5)
    c = random_configs(1, seed=4)[0]
    assert extract_measures(c, params, grid) == extract_measures(c, params, grid)


def test_global_shift_and_conjugation_preserve_measures(params, grid):
    for c in random_configs(10, seed=31):
        m = extract_measures(c, params, grid).as_vector()
        s = extract_measures(c.shifted(3), params, grid).as_vector()
        assert np.allclose(m, s, rtol=1e-9, atol=1e-9)
        conj = extract_measures(c.conjugated(), params, grid).as_vector()
        # conjugation rotates the pattern by 180 degrees in azimuth
        assert np.allclose(m[[0, 1, 2, 4]], conj[[0, 1, 2, 4]], rtol=1e-9, atol=1e-9)
        if m[2] >= 1.0:
            assert (conj[3] - m[3] - 180.0) % 360.0 == pytest.approx(0.0, abs=1e-6) or \
                (conj[3] - m[3] - 180.0) % 360.0 == pytest.approx(360.0, abs=1e-6)


def test_directivity_grid_convergence(params):
    coarse, fine = AngularGrid(1.0, 1.0), AngularGrid(0.5, 0.5)
    for c in random_configs(50, seed=13):
        d1 = directivity(compute_pattern_fast(c, params, coarse))
        d2 = directivity(compute_pattern_fast(c, params, fine))
        assert abs(d1 - d2) < 0.05


def test_measure_ranges(params, grid):
    for c in random_configs(20, seed=2):
        m = extract_measures(c, params, grid)
        assert m.pslr_db >= 0 and math.isfinite(m.directivity_db)
        assert 0 <= m.theta_max_deg <= 90 and 0 <= m.phi_max_deg < 360
        assert 0 < m.hpbw_deg <= 180
