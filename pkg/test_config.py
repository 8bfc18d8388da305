"""
Tests for YAML run configuration loading and validation.
"""

import sys
from pathlib import Path

import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from network.architecture import default_architecture
from utils.errors import ConfigError, MissingFileError
from utils.run_config import AnalysisConfig, DatasetConfig, RunConfig, load_run_config, parse_run_config

CONFIG_DIR = Path(__file__).parent / "config"


def write_config(tmp_path, text: str) -> str:
    path = tmp_path / "run.yaml"
    path.write_text(text)
    return str(path)


def test_defaults_without_file():
    run = load_run_config(None)
    assert run.training.learning_rate == 0.001
    assert run.training.max_epochs == 5000
    assert run.regression.window == 30
    assert run.dataset.steps_per_cycle == 17
    assert run.architecture.to_dict() == default_architecture().to_dict()
    assert run.source is None


def test_default_yaml_matches_builtin_defaults():
    from_file = load_run_config(str(CONFIG_DIR / "default.yaml"))
    assert from_file.to_dict() == RunConfig().to_dict()


@pytest.mark.parametrize("name", ["micro.yaml", "smoke.yaml"])
def test_shipped_configs_parse(name):
    run = load_run_config(str(CONFIG_DIR / name))
    assert run.architecture.num_layers == 2
    assert run.source.endswith(name)


def test_spatial_config_trains_every_primitive():
    run = load_run_config(str(CONFIG_DIR / "spatial.yaml"))
    assert run.dataset.primitives == ["P1", "P2", "P3", "P4", "P5", "P6"]
    assert run.architecture.to_dict() == default_architecture().to_dict()


def test_micro_config_kernels():
    arch = load_run_config(str(CONFIG_DIR / "micro.yaml")).architecture
    assert arch.input_size == (6, 6)
    assert tuple(arch.layers[0].kernels["cf"]) == (2, 2)
    assert tuple(arch.layers[1].kernels["ff"]) == (2, 2)


def test_partial_sections_keep_defaults(tmp_path):
    run = load_run_config(write_config(tmp_path, "training:\n  learning_rate: 0.05\n"))
    assert run.training.learning_rate == 0.05
    assert run.training.momentum == 0.0
    assert run.dataset == DatasetConfig()


def test_empty_file_gives_defaults(tmp_path):
    assert load_run_config(write_config(tmp_path, "")).to_dict() == RunConfig().to_dict()


def test_unknown_key_reports_full_path(tmp_path):
    with pytest.raises(ConfigError, match=r"training\.learnin_rate"):
        load_run_config(write_config(tmp_path, "training:\n  learnin_rate: 0.1\n"))


def test_unknown_section(tmp_path):
    with pytest.raises(ConfigError, match="Unknown config section"):
        load_run_config(write_config(tmp_path, "optimizer:\n  lr: 0.1\n"))


def test_unknown_layer_key():
    raw = {"architecture": {"layers": [{"tau": 2, "num_fm": 1, "num_cm": 1, "fm_size": [2, 2],
                                        "cm_size": [2, 2], "stride": 2}]}}
    with pytest.raises(ConfigError, match=r"layers\[1\]\.stride"):
        parse_run_config(raw)


def test_layer_missing_keys():
    with pytest.raises(ConfigError, match="missing"):
        parse_run_config({"architecture": {"layers": [{"tau": 2.0, "num_fm": 1}]}})


def test_architecture_needs_layers():
    with pytest.raises(ConfigError, match="layers"):
        parse_run_config({"architecture": {"input_size": [36, 36]}})


def test_section_must_be_mapping():
    with pytest.raises(ConfigError, match="mapping"):
        parse_run_config({"training": [1, 2]})


def test_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        load_run_config(str(tmp_path / "absent.yaml"))


def test_malformed_yaml(tmp_path):
    with pytest.raises(ConfigError, match="Malformed"):
        load_run_config(write_config(tmp_path, "training: [unclosed\n"))


def test_invalid_values_surface_as_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, "training:\n  momentum: 1.5\n"))
    with pytest.raises(ConfigError):
        load_run_config(write_config(tmp_path, "regression:\n  window: 0\n"))
    with pytest.raises(ConfigError):
        DatasetConfig(steps_per_cycle=1)
    with pytest.raises(ConfigError):
        DatasetConfig(subject_variation=1.0)
    with pytest.raises(ConfigError):
        AnalysisConfig(seeds=[])
    with pytest.raises(ConfigError):
        AnalysisConfig(components=0)


def main():
    """Run all tests."""
    print("=" * 80)
    print("Configuration Tests")
    print("=" * 80)
    sys.exit(pytest.main([__file__, "-q"]))


if __name__ == "__main__":
    main()
