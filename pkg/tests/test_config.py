import json

import numpy as np
import pytest

from fhbem.config import canonical, config_hash, load_config, parse_config
from fhbem.errors import ConfigurationError
from fhbem.geometry import ComponentKind
from fhbem.kernels import PointSource

BASE = {
    "name": "t",
    "obstacle": {"ambient_dim": 2, "components": [{"preset": "cantor"}]},
    "wave": {"k": 2.0},
    "incident": {"type": "plane", "direction": [1.0, 0.0]},
    "mesh": {"h": 0.2},
    "probes": [[0.5, 1.0]],
}


def with_changes(**kw):
    raw = json.loads(json.dumps(BASE))
    raw.update(kw)
    return raw


def test_minimal():
    cfg = parse_config(BASE)
    assert cfg.wave.n == 2 and cfg.h == (0.2,) and cfg.quad.depth == 4
    assert cfg.probes.shape == (1, 2)


def test_canonical_roundtrip():
    cfg = parse_config(BASE)
    again = parse_config(canonical(cfg))
    assert canonical(again) == canonical(cfg)
    assert config_hash(again) == config_hash(cfg)


def test_hash_changes_with_content():
    assert config_hash(parse_config(BASE)) != config_hash(parse_config(with_changes(wave={"k": 3.0})))


def test_explicit_maps():
    obstacle = {"ambient_dim": 2, "components": [{"maps": [{"scale": 0.5, "translation": [0.0, 0.0]},
                                         {"scale": 0.5, "angle": 0.0, "translation": [0.5, 0.0]}],
                                "d": "moran", "weight": 2.0}]}
    cfg = parse_config(with_changes(obstacle=obstacle, mesh={"h": 0.25}))
    comp = cfg.obstacle.components[0]
    assert comp.d == pytest.approx(1.0) and comp.weight == 2.0 and len(cfg.obstacle.components) == 1


def test_relative_h_and_preset_obstacle():
    raw = with_changes(obstacle={"preset": "koch_snowflake_obstacle"}, mesh={"h": 0.3, "relative": True})
    cfg = parse_config(raw)
    assert len(cfg.obstacle) == 4 and len(cfg.h) == 4
    assert cfg.obstacle.components[0].kind is ComponentKind.OPEN_INTERIOR_N_SET


def test_point_source():
    cfg = parse_config(with_changes(incident={"type": "point", "location": [0.5, -3.0]}))
    assert isinstance(cfg.incident, PointSource)


@pytest.mark.parametrize("change,path", [
    ({"wave": {"k": -1.0}}, "wave.k"),
    ({"wave": {"k": 1.0, "speed": 2}}, "wave.speed"),
    ({"mesh": {"h": 5.0}}, "mesh.h"),
    ({"probes": [[0.5]]}, "probes[0]"),
    ({"quadrature": {"depth": 40}}, "quadrature"),
    ({"obstacle": {"ambient_dim": 2, "components": [{"maps": [{"scale": 1.5, "translation": [0, 0]},
                                            {"scale": 0.5, "translation": [1, 0]}]}]}},
     "obstacle.components[0].maps[0].scale"),
    ({"ladder": {"h": [0.3, 0.1, 0.2]}}, "ladder.h[2]"),
    ({"colour": "red"}, "colour"),
])
def test_errors_name_the_field(change, path):
    with pytest.raises(ConfigurationError) as info:
        parse_config(with_changes(**change))
    assert path in str(info.value)


def test_missing_required():
    raw = dict(BASE)
    del raw["wave"]
    with pytest.raises(ConfigurationError, match="wave"):
        parse_config(raw)


def test_load_reports_json_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"name": "x",\n "wave": }')
    with pytest.raises(ConfigurationError, match="line 2"):
        load_config(p)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.json")


def test_reference_values_count():
    raw = with_changes(ladder={"h": [0.3, 0.1, 0.05], "reference_values": [[1.0, 0.0], [0.0, 1.0]]})
    with pytest.raises(ConfigurationError, match="reference_values"):
        parse_config(raw)
    raw["ladder"]["reference_values"] = [[1.0, 2.0]]
    assert np.allclose(parse_config(raw).ladder.reference_values, [1 + 2j])
