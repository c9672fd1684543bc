import json

import numpy as np
import pytest

from pmu_gsa.feeder import (FeederError, build_feeder, dumps_feeder, load_feeder, parse_feeder,
                            path_to_bus, phase_mask, to_document)


def test_toy_structure(toy_model):
    assert toy_model.slack_bus == 1
    assert [b.id for b in toy_model.buses] == [1, 2, 3, 4, 5]
    assert [(br.from_bus, br.to_bus) for br in toy_model.branches] == [(1, 2), (2, 3), (2, 4), (3, 5)]
    assert [br.id for br in toy_model.branches] == [1, 2, 3, 4]
    assert toy_model.bus(4).phases == (True, False, False)


def test_per_unit_conversion(toy_model):
    br = toy_model.branch(1)
    zbase = 4.16 ** 2 * 1000 / 3000
    ohm = (0.4 + 1.0j) * 2000 / 5280
    assert br.z[0, 0] == pytest.approx(ohm / zbase)
    assert br.z_ohm[0, 0] == pytest.approx(ohm)
    # absent phases carry zero impedance
    assert np.all(toy_model.branch(3).z[1:, :] == 0)


def test_path_to_bus(toy_model):
    assert path_to_bus(toy_model, 1) == []
    assert path_to_bus(toy_model, 5) == [1, 2, 4]
    assert path_to_bus(toy_model, 4) == [1, 3]


def test_branch_orientation_follows_slack(toy_doc):
    toy_doc["branches"][1] = {"from": 3, "to": 2, "length_ft": 1500, "config": "abc", "phases": "abc"}
    model = build_feeder(toy_doc)
    assert (model.branch(2).from_bus, model.branch(2).to_bus) == (2, 3)


def test_cycle_rejected(toy_doc):
    toy_doc["branches"].append({"from": 4, "to": 5, "length_ft": 100, "config": "a", "phases": "a"})
    with pytest.raises(FeederError, match="cycle"):
        build_feeder(toy_doc)


def test_disconnected_bus_rejected(toy_doc):
    toy_doc["branches"].append({"from": 8, "to": 9, "length_ft": 100, "config": "abc", "phases": "abc"})
    with pytest.raises(FeederError, match="disconnected"):
        build_feeder(toy_doc)


def test_phase_mask_violation(toy_doc):
    toy_doc["branches"].append({"from": 4, "to": 6, "length_ft": 100, "config": "abc", "phases": "abc"})
    with pytest.raises(FeederError, match="not present"):
        build_feeder(toy_doc)


def test_unknown_config_and_missing_key(toy_doc):
    toy_doc["branches"][0]["config"] = "zzz"
    with pytest.raises(FeederError, match="unknown line configuration"):
        build_feeder(toy_doc)
    with pytest.raises(FeederError, match="missing key"):
        build_feeder({"base_kv": 1})


def test_load_on_absent_phase(toy_doc):
    toy_doc["loads"].append({"bus": 4, "phase": "c", "kw": 1, "kvar": 0, "kind": "load"})
    with pytest.raises(FeederError, match="phase c not present"):
        build_feeder(toy_doc)


def test_invalid_phase_string():
    assert phase_mask("ca") == (True, False, True)
    for bad in ("", "ad", "aa"):
        with pytest.raises(FeederError):
            phase_mask(bad)


def test_dg_power_factor_checked(toy_doc):
    toy_doc["loads"].append({"bus": 5, "phase": "a", "kw": 200, "kvar": 10, "kind": "dg"})
    with pytest.raises(FeederError, match="pf"):
        build_feeder(toy_doc)


def test_round_trip(toy_model, ieee34):
    for model in (toy_model, ieee34):
        again = parse_feeder(dumps_feeder(model))
        assert json.dumps(to_document(again), sort_keys=True) == json.dumps(to_document(model), sort_keys=True)
        for a, b in zip(model.branches, again.branches):
            np.testing.assert_array_equal(a.z, b.z)


def test_invalid_json():
    with pytest.raises(FeederError, match="JSON"):
        parse_feeder("{not json")


@pytest.mark.parametrize("name, n_bus, n_branch", [("ieee34", 34, 33), ("ieee34_dg", 34, 33), ("ieee123", 122, 121)])
def test_shipped_feeders(name, n_bus, n_branch):
    model = load_feeder(name)
    assert len(model.buses) == n_bus
    assert len(model.branches) == n_branch
    # radial: one incoming branch per non-slack bus
    assert sorted(model.branch_into) == sorted(b.id for b in model.buses if b.id != model.slack_bus)


def test_dg_variant_differs_only_by_generation():
    base, dg = load_feeder("ieee34"), load_feeder("ieee34_dg")
    changed = np.argwhere(base.load_pu() != dg.load_pu())
    assert [(base.buses[i].id, f) for i, f in changed] == [(802, 0), (822, 0)]
    gen = [(b.id, i) for b in dg.buses for i in range(3) if b.dg[i] != 0]
    assert gen == [(802, 0), (822, 0)]
    s = dg.bus(802).dg[0]
    assert s.real == 200
    assert s.real / abs(s) == pytest.approx(0.95, abs=1e-6)
