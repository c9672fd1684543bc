import json

import pytest

from pmu_gsa.config import ConfigError, check_config, load_config, parse_config

GOOD = {"feeder": "ieee34", "placement": {"pmus": [800, 816, 820, 836, 854, 858]}, "psi": [0, 0, 0.5, 0, 0, 0]}


def test_defaults():
    cfg = parse_config(GOOD)
    assert cfg.delta_theta == 0.2 and cfg.pso.swarm_size == 50 and cfg.meter_buses is None
    assert cfg.profile()[3] == pytest.approx(0.5 * 3.141592653589793)


@pytest.mark.parametrize("change, field", [
    ({"psi": [0, 0, 0.5]}, "psi"),
    ({"psi": [0.1, 0, 0.5, 0, 0, 0]}, "psi[0]"),
    ({"delta_theta": 0.02}, "delta_theta"),
    ({"delta_theta": "big"}, "delta_theta"),
    ({"trials": 0}, "trials"),
    ({"seed": 1.5}, "seed"),
    ({"pso": {"swarm_size": 1}}, "pso"),
    ({"pso": {"swarmsize": 10}}, "pso"),
    ({"noise": {"pmu_mag_max": -1}}, "noise"),
    ({"placement": {"pmus": []}}, "placement.pmus"),
    ({"placement": {"pmus": [800, "x"]}}, "placement.pmus[1]"),
    ({"placement": {"pmus": [800], "meters": "some"}}, "placement.meters"),
    ({"extra": 1}, "unknown field"),
    ({"linearization": "other"}, "linearization"),
])
def test_field_level_errors(change, field):
    with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
        parse_config({**GOOD, **change})


def test_missing_required():
    for key in ("feeder", "placement", "psi"):
        doc = dict(GOOD)
        del doc[key]
        with pytest.raises(ConfigError, match=key):
            parse_config(doc)


def test_round_trip_and_relative_feeder(tmp_path):
    from pmu_gsa.feeder import dumps_feeder, load_feeder
    (tmp_path / "f.json").write_text(dumps_feeder(load_feeder("ieee34")))
    doc = {**GOOD, "feeder": "f.json", "placement": {"pmus": [800, {"bus": 816, "branches": [9]}]}, "psi": [0, 0.2]}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    cfg = load_config(path)
    model, pl = check_config(cfg)
    assert pl.pmu(2).branches == (9,)
    again = parse_config(cfg.to_document())
    assert again == cfg


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
