"""Config file loading and flag/field validation."""

import json

import pytest

from crosstune.config import CliConfig, load_cli_config
from crosstune.model import ValidationError


def write(tmp_path, data) -> str:
    p = tmp_path / "config.json"
    p.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(p)


class TestDefaults:
    def test_no_file_gives_defaults(self):
        cfg = load_cli_config(None)
        assert cfg.bind == "127.0.0.1:8666"
        assert cfg.loop.cycle_time == 5.0
        assert cfg.tuner.c_re == 0.3
        assert cfg.schedule is None

    def test_host_port_split(self):
        assert CliConfig(bind="0.0.0.0:80").port == 80
        assert CliConfig(bind="::1:8080").host == "::1"
        with pytest.raises(ValidationError):
            CliConfig(bind="nocolon").port


class TestSections:
    def test_all_sections_applied(self, tmp_path):
        cfg = load_cli_config(write(tmp_path, {
            "bind": "0.0.0.0:9999",
            "loop": {"cycle_time": 0.5, "snapshot_window": 2},
            "tuner": {"batch": 8},
            "entropy": {"horizon": 0.5, "plateaus": [1.0, 0.5, 0.1], "transitions": [0.4, 1.0]},
        }))
        assert cfg.port == 9999
        assert cfg.loop.cycle_time == 0.5
        assert cfg.loop.snapshot_window == 2
        assert cfg.tuner.batch == 8
        assert cfg.schedule.horizon == 0.5
        assert cfg.schedule.plateaus == (1.0, 0.5, 0.1)

    def test_unknown_section_named(self, tmp_path):
        with pytest.raises(ValidationError, match="tunner"):
            load_cli_config(write(tmp_path, {"tunner": {}}))

    def test_unknown_field_named(self, tmp_path):
        with pytest.raises(ValidationError, match="cr_e"):
            load_cli_config(write(tmp_path, {"tuner": {"cr_e": 0.1}}))

    def test_invalid_value_reported_with_section(self, tmp_path):
        with pytest.raises(ValidationError, match="loop"):
            load_cli_config(write(tmp_path, {"loop": {"snapshot_window": 0}}))

    def test_malformed_json(self, tmp_path):
        with pytest.raises(ValidationError, match="JSON"):
            load_cli_config(write(tmp_path, "{broken"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="cannot read"):
            load_cli_config(tmp_path / "absent.json")

    def test_non_object_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="object"):
            load_cli_config(write(tmp_path, [1, 2]))
