import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msfnet.core import (AngularGrid, ConfigParseError, MsfConfig, PhysicalParams, SeededRng,
                         ValidationError, dumps_config, load_config, save_config)
from msfnet.datagen import generate_steering_config


@st.composite
def configs(draw):
    n_rows = draw(st.integers(1, 6))
    n_cols = draw(st.integers(1, 6))
    q = draw(st.integers(1, 9))
    flat = draw(st.lists(st.integers(0, q - 1), min_size=n_rows * n_cols, max_size=n_rows * n_cols))
    return MsfConfig(np.array(flat).reshape(n_rows, n_cols), q)


def test_default_config_is_12x12_with_8_states():
    c = MsfConfig.uniform()
    assert (c.n_rows, c.n_cols, c.n_states) == (12, 12, 8)
    assert not c.states.any()


def test_state_out_of_range_names_the_cell():
    s = np.zeros((3, 4), dtype=int)
    s[1, 2] = 8
    with pytest.raises(ValidationError, match=r"row 1, col 2"):
        MsfConfig(s, 8)


@pytest.mark.parametrize("bad", [-1, 8])
def test_state_bounds(bad):
    s = np.zeros((2, 2), dtype=int)
    s[0, 0] = bad
    with pytest.raises(ValidationError):
        MsfConfig(s, 8)


def test_load_all_zero_file(tmp_path):
    p = tmp_path / "zeros.json"
    p.write_text(json.dumps({"n_rows": 12, "n_cols": 12, "n_states": 8, "states": [[0] * 12] * 12}))
    c = load_config(p)
    assert c.states.size == 144 and not c.states.any()


def test_load_rejects_state_equal_to_q(tmp_path):
    rows = [[0] * 12 for _ in range(12)]
    rows[5][7] = 8
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"n_rows": 12, "n_cols": 12, "n_states": 8, "states": rows}))
    with pytest.raises(ValidationError):
        load_config(p)


@pytest.mark.parametrize("doc", [
    "{not json",
    json.dumps({"n_rows": 2, "n_cols": 2, "n_states": 8, "states": [[0, 0]]}),
    json.dumps({"n_rows": 2, "n_cols": 2, "n_states": 8, "states": [[0, 0], [0, 1.5]]}),
])
def test_load_rejects_malformed(tmp_path, doc):
    p = tmp_path / "c.json"
    p.write_text(doc)
    with pytest.raises((ConfigParseError, ValidationError)):
        load_config(p)


def test_steering_config_round_trip(tmp_path):
    c = generate_steering_config(30.0, 0.0)
    save_config(c, tmp_path / "s.json")
    assert load_config(tmp_path / "s.json") == c


def test_saves_are_byte_identical(tmp_path):
    c = MsfConfig.random(SeededRng(5))
    save_config(c, tmp_path / "a.json")
    save_config(c, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_key_order_is_canonical():
    text = dumps_config(MsfConfig.uniform(2, 3))
    assert list(json.loads(text)) == ["n_rows", "n_cols", "n_states", "states"]
    assert "." not in text


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores file permissions")
def test_save_to_read_only_dir(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    with pytest.raises(OSError):
        save_config(MsfConfig.uniform(), ro / "c.json")


def test_save_to_missing_dir_is_io_error(tmp_path):
    with pytest.raises(OSError):
        save_config(MsfConfig.uniform(), tmp_path / "missing" / "c.json")


@settings(max_examples=200, deadline=None)
@given(configs())
def test_serialization_is_a_bijection(c):
    text = dumps_config(c)
    back = MsfConfig.from_dict(json.loads(text))
    assert back == c
    assert dumps_config(back) == text


@pytest.mark.parametrize("kw", [{"wavelength": 0}, {"cell_pitch": -1}, {"reflection_amplitude": 0}])
def test_physical_params_validation(kw):
    with pytest.raises(ValidationError):
        PhysicalParams(**kw)


def test_wave_number():
    p = PhysicalParams(wavelength=0.03)
    assert p.wave_number == 2 * math.pi / 0.03


def test_grid_samples():
    g = AngularGrid()
    assert g.shape == (91, 360)
    assert g.theta_deg[0] == 0 and g.theta_deg[-1] == 90
    assert np.all(np.diff(g.theta_deg) > 0) and np.all(np.diff(g.phi_deg) > 0)
    assert 360.0 not in g.phi_deg
    assert AngularGrid(0.5, 0.5).shape == (181, 720)


def test_rng_streams_reproducible_for_a_million_draws():
    a = SeededRng(2024).random(10 ** 6)
    b = SeededRng(2024).random(10 ** 6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a[:100], SeededRng(2025).random(100))


def test_rng_children_are_independent_and_stable():
    r = SeededRng(7)
    assert np.array_equal(r.child(3).integers(0, 1000, 20), SeededRng(7).child(3).integers(0, 1000, 20))
    assert not np.array_equal(r.child(3).integers(0, 1000, 20), r.child(4).integers(0, 1000, 20))


def test_rng_known_values():
    # frozen first draws guard against silent algorithm changes
    assert SeededRng(0).integers(0, 2 ** 31, 3).tolist() == [291248084, 30208729, 2013765090]
