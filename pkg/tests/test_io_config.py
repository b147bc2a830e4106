import struct

import numpy as np
import pytest

from stochwri import config as cfgmod
from stochwri.config import ExperimentConfig
from stochwri.grid_model import Grid2D
from stochwri.io import (
    FormatError,
    read_model,
    read_shot_data,
    read_wavefield,
    write_model,
    write_model_csv,
    write_shot_data,
    write_wavefield,
)

from conftest import crandn


def test_model_round_trip(tmp_path, rng):
    g = Grid2D(5, 7, 2.5, 4.0, (10.0, -3.0))
    v = rng.standard_normal(g.shape)
    write_model(tmp_path / "m.bin", g, v)
    g2, v2 = read_model(tmp_path / "m.bin")
    assert g2 == g
    assert np.array_equal(v2, v)


def test_model_layout_z_fastest(tmp_path):
    g = Grid2D(3, 4, 1.0, 1.0)
    v = np.arange(12.0).reshape(3, 4)
    write_model(tmp_path / "m.bin", g, v)
    buf = (tmp_path / "m.bin").read_bytes()
    head = struct.unpack_from("<4sIIdddd", buf)
    assert head == (b"WARI", 3, 4, 1.0, 1.0, 0.0, 0.0)
    body = np.frombuffer(buf[struct.calcsize("<4sIIdddd"):], "<f8")
    # value at (ix, iz) sits at ix * nz + iz
    assert body[1 * 4 + 2] == v[1, 2]
    assert len(buf) == struct.calcsize("<4sIIdddd") + 8 * 12


def test_model_bad_inputs(tmp_path):
    g = Grid2D(3, 3, 1.0, 1.0)
    write_model(tmp_path / "m.bin", g, np.ones(g.shape))
    buf = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        read_model(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(buf[:-8])
    with pytest.raises(FormatError):
        read_model(tmp_path / "short.bin")
    (tmp_path / "long.bin").write_bytes(buf + b"\0")
    with pytest.raises(FormatError):
        read_model(tmp_path / "long.bin")


def test_model_csv(tmp_path):
    g = Grid2D(3, 3, 10.0, 5.0)
    write_model_csv(tmp_path / "m.csv", g, np.arange(9.0).reshape(3, 3))
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "x,z,value"
    assert lines[1] == "0.0,0.0,0.0"
    assert lines[2] == "0.0,5.0,1.0"
    assert lines[-1] == "20.0,10.0,8.0"


def test_wavefield_round_trip(tmp_path, rng):
    g = Grid2D(4, 5, 1.0, 1.0)
    u = crandn(rng, g.size, 3)
    write_wavefield(tmp_path / "u.bin", g, u)
    g2, u2 = read_wavefield(tmp_path / "u.bin")
    assert g2 == g and np.array_equal(u2, u)
    (tmp_path / "e.bin").write_bytes(b"")
    with pytest.raises(FormatError):
        read_wavefield(tmp_path / "e.bin")


def test_shot_data_round_trip_and_layout(tmp_path):
    d = np.array([[1 + 2j, 3 + 4j], [5 + 6j, 7 + 8j], [9 + 10j, 11 + 12j]])
    write_shot_data(tmp_path / "d.bin", d, 6.0)
    buf = (tmp_path / "d.bin").read_bytes()
    assert struct.unpack_from("<4sIId", buf) == (b"WARI", 3, 2, 6.0)
    body = np.frombuffer(buf[struct.calcsize("<4sIId"):], "<f8")
    # receiver fastest: shot 0 receivers 0..2, then shot 1
    np.testing.assert_array_equal(body, [1, 2, 5, 6, 9, 10, 3, 4, 7, 8, 11, 12])
    d2, f = read_shot_data(tmp_path / "d.bin")
    assert f == 6.0 and np.array_equal(d2, d)
    (tmp_path / "bad.bin").write_bytes(buf[:-1])
    with pytest.raises(FormatError):
        read_shot_data(tmp_path / "bad.bin")
    (tmp_path / "magic.bin").write_bytes(b"ABCD" + buf[4:])
    with pytest.raises(FormatError):
        read_shot_data(tmp_path / "magic.bin")


def test_config_text_round_trip(tmp_path):
    cfg = cfgmod.materialize(ExperimentConfig())
    cfgmod.save(cfg, tmp_path / "c.txt")
    back = cfgmod.load(tmp_path / "c.txt")
    assert back == cfg
    assert cfgmod.to_text(back) == (tmp_path / "c.txt").read_text()


def test_materialize_fills_defaults():
    cfg = cfgmod.materialize(ExperimentConfig())
    assert (cfg.lens.center_x, cfg.lens.center_z) == (500.0, 500.0)
    assert cfg.covariance.delta == 10.0
    assert cfg.modeling.v_start == cfg.lens.v_background
    assert "null" not in cfgmod.to_text(cfg)


def test_overrides_and_coercion():
    cfg = cfgmod.with_overrides(ExperimentConfig(), {
        "grid.nx": "61", "grid.dx": 5, "method": "fwi", "sketch.seeds": "[7]",
        "modeling.frequencies": "6", "covariance.sigma_d_sq": "0.5", "output.dir": "/tmp/x"})
    assert cfg.grid.nx == 61 and cfg.grid.dx == 5.0 and isinstance(cfg.grid.dx, float)
    assert cfg.method == "fwi" and cfg.sketch.seeds == (7,)
    assert cfg.modeling.frequencies == (6.0,)
    assert cfg.covariance.sigma_d_sq == 0.5 and cfg.output.dir == "/tmp/x"


def test_unknown_and_invalid_keys():
    for key in ("grid.nope", "nope.nx", "grid", "a.b.c"):
        with pytest.raises(KeyError):
            cfgmod.with_overrides(ExperimentConfig(), {key: "1"})
    with pytest.raises(ValueError):
        cfgmod.with_overrides(ExperimentConfig(), {"method": "lbfgs"})
    with pytest.raises(ValueError):
        cfgmod.with_overrides(ExperimentConfig(), {"sketch.seeds": "[]"})
    with pytest.raises(ValueError):
        cfgmod.parse_text("grid.nx 5")


def test_comments_and_blank_lines():
    cfg = cfgmod.from_text("# experiment\n\ngrid.nx = 31\n  sketch.k = 4  \n")
    assert cfg.grid.nx == 31 and cfg.sketch.k == 4


def test_downscaled_keeps_extent():
    cfg = cfgmod.downscaled(ExperimentConfig(), 61, 12)
    assert cfg.grid.nx == 61 and cfg.grid.dx * 60 == pytest.approx(1000.0)
    assert cfg.boundary.width == 12
    assert cfgmod.materialize(cfg).covariance.delta == pytest.approx(1000.0 / 60)
