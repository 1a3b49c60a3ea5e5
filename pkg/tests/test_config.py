import json

import numpy as np
import pytest

from bulkvac import ConfigError
from bulkvac.config import (
    load_config,
    load_sweep_config,
    model_to_config,
    parse_model,
    sweep_case_model,
)
from conftest import CONFIG_DIR


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def base_doc():
    return {
        "arrivals": {"C": [[-3.0, 1.0], [0.5, -2.5]], "D": [[1.5, 0.5], [0.8, 1.2]]},
        "thresholds": {"h": 2, "H": 3},
        "services": {"2": {"erlang": {"phases": 2, "rate": 2.2}},
                     "3": {"erlang": {"phases": 2, "rate": 3.0}}},
        "vacations": {"0": {"erlang": {"phases": 2, "rate": 1.4}},
                      "1": {"erlang": {"phases": 2, "rate": 2.0}}},
        "policy": "sv",
    }


class TestParsing:
    def test_shipped_table_config(self):
        cfg = load_config(CONFIG_DIR / "sv.json")
        assert cfg.model.h == 5 and cfg.model.H == 9
        assert cfg.model.policy == "sv"
        assert cfg.model.arrivals.rate == pytest.approx(56.50)
        assert cfg.model.services[9].mean == pytest.approx(1 / 23.4)
        assert cfg.simulation["events"] == 10_000_000

    def test_list_form_services(self, tmp_path):
        doc = base_doc()
        doc["services"] = [{"r": 2, "erlang": {"phases": 2, "rate": 2.2}},
                           {"r": 3, "erlang": {"phases": 2, "rate": 3.0}}]
        doc["vacations"] = [{"k": 0, "erlang": {"phases": 2, "rate": 1.4}},
                            {"k": 1, "erlang": {"phases": 2, "rate": 2.0}}]
        cfg = load_config(write(tmp_path, doc))
        assert sorted(cfg.model.services) == [2, 3]

    def test_explicit_alpha_T(self, tmp_path):
        doc = base_doc()
        doc["services"]["2"] = {"alpha": [1.0], "T": [[-2.0]]}
        cfg = load_config(write(tmp_path, doc))
        assert cfg.model.services[2].mean == pytest.approx(0.5)

    def test_bad_thresholds_name_field(self, tmp_path):
        doc = base_doc()
        doc["thresholds"] = {"h": 3, "H": 2}
        with pytest.raises(ConfigError, match="thresholds"):
            load_config(write(tmp_path, doc))

    def test_missing_service_index(self, tmp_path):
        doc = base_doc()
        del doc["services"]["3"]
        with pytest.raises(ConfigError, match="services.*missing"):
            load_config(write(tmp_path, doc))

    def test_duplicate_index(self, tmp_path):
        doc = base_doc()
        doc["services"] = [{"r": 2, "erlang": {"phases": 2, "rate": 2.2}},
                           {"r": 2, "erlang": {"phases": 2, "rate": 2.2}},
                           {"r": 3, "erlang": {"phases": 2, "rate": 3.0}}]
        with pytest.raises(ConfigError, match="duplicate"):
            load_config(write(tmp_path, doc))

    def test_bad_policy(self, tmp_path):
        doc = base_doc()
        doc["policy"] = "maybe"
        with pytest.raises(ConfigError, match="policy"):
            load_config(write(tmp_path, doc))

    def test_bad_erlang(self, tmp_path):
        doc = base_doc()
        doc["vacations"]["0"] = {"erlang": {"phases": 0, "rate": 1.0}}
        with pytest.raises(ConfigError, match="vacations.0"):
            load_config(write(tmp_path, doc))

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.json")


class TestRoundTrip:
    def test_emit_and_reparse(self, tmp_path):
        cfg = load_config(write(tmp_path, base_doc()))
        doc2 = model_to_config(cfg.model)
        model2 = parse_model(doc2)
        np.testing.assert_allclose(model2.arrivals.C, cfg.model.arrivals.C, atol=1e-12)
        np.testing.assert_allclose(model2.arrivals.D, cfg.model.arrivals.D, atol=1e-12)
        assert model2.h == cfg.model.h and model2.H == cfg.model.H
        for r in cfg.model.services:
            np.testing.assert_allclose(model2.services[r].T, cfg.model.services[r].T,
                                       atol=1e-12)
            np.testing.assert_allclose(model2.services[r].alpha, cfg.model.services[r].alpha,
                                       atol=1e-12)
        for k in cfg.model.vacations:
            np.testing.assert_allclose(model2.vacations[k].T, cfg.model.vacations[k].T,
                                       atol=1e-12)
        assert model2.policy == cfg.model.policy


class TestSweepConfig:
    def test_shipped_sweep(self):
        spec = load_sweep_config(CONFIG_DIR / "sweep.json")
        assert spec["scales"] == pytest.approx([1.0 + 0.1 * i for i in range(11)])
        assert spec["vacation_rate"] == pytest.approx(1.1)
        model = spec["model"]
        assert model.h == 3 and model.H == 5
        np.testing.assert_allclose(model.arrivals.stationary, [0.4, 0.6], atol=1e-10)

    def test_case_models(self):
        spec = load_sweep_config(CONFIG_DIR / "sweep.json")
        qsdv = sweep_case_model(spec["model"], 1.0, "qsdv", spec["vacation_rate"],
                                spec["vacation_phases"])
        qsiv = sweep_case_model(spec["model"], 1.0, "qsiv", spec["vacation_rate"],
                                spec["vacation_phases"])
        # size-dependent rates grow quadratically; independent ones stay flat
        assert qsdv.vacations[2].mean == pytest.approx(1 / (9 * 1.1))
        assert qsiv.vacations[2].mean == pytest.approx(1 / 1.1)
        scaled = sweep_case_model(spec["model"], 1.5, "qsiv", 1.1, 2)
        assert scaled.arrivals.rate == pytest.approx(1.5 * spec["model"].arrivals.rate)

    def test_bad_scales(self, tmp_path):
        doc = {"base": base_doc(), "scales": [], "vacation_rate": 1.0}
        with pytest.raises(ConfigError, match="scales"):
            load_sweep_config(write(tmp_path, doc))
