"""
Run configuration loaded from YAML.

A run config has up to five sections: architecture, training, regression,
dataset and analysis. Missing sections and keys take their documented
defaults; unknown sections or keys are rejected with their full key path.
"""

import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

import yaml

from network.architecture import PATHWAYS, ArchitectureSpec, LayerSpec, default_architecture
from recognition.error_regression import RegressionConfig
from training.trainer import TrainingConfig
from utils.errors import ConfigError, MissingFileError


@dataclass
class DatasetConfig:
    """Synthetic data recipes."""

    steps_per_cycle: int = 17
    primitives: List[str] = field(default_factory=lambda: ["P1", "P4", "P5"])
    cycles: int = 6
    concat_plan: str = "P1-P5-P1-P5-P1-P5"
    concat_cycles: int = 3
    num_subjects: int = 1
    heldout_subjects: int = 1
    test_plan: str = "P1-P4-P5-P1-P5-P4-P1"
    test_cycles: int = 2
    subject_variation: float = 0.15
    subject_seed: int = 0

    def __post_init__(self):
        if self.steps_per_cycle < 2:
            raise ConfigError("dataset.steps_per_cycle must be >= 2")
        if self.cycles < 1 or self.concat_cycles < 1 or self.test_cycles < 1:
            raise ConfigError("dataset cycle counts must be >= 1")
        if self.num_subjects < 1 or self.heldout_subjects < 0:
            raise ConfigError("dataset.num_subjects >= 1 and dataset.heldout_subjects >= 0 are required")
        if not 0.0 <= self.subject_variation < 1.0:
            raise ConfigError("dataset.subject_variation must be in [0, 1)")


@dataclass
class AnalysisConfig:
    """Thresholds and settings of the trained-model analyses."""

    cyclicity_threshold: float = 0.8
    convergence_threshold: float = 0.5
    moving_threshold: float = 0.8
    components: int = 2
    burn_in: int = 0
    generate_steps: int = 100
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])

    def __post_init__(self):
        if self.components < 1:
            raise ConfigError("analysis.components must be >= 1")
        if self.burn_in < 0 or self.generate_steps < 2:
            raise ConfigError("analysis.burn_in >= 0 and analysis.generate_steps >= 2 are required")
        if not self.seeds:
            raise ConfigError("analysis.seeds must list at least one seed")


@dataclass
class RunConfig:
    architecture: ArchitectureSpec = field(default_factory=default_architecture)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    regression: RegressionConfig = field(default_factory=RegressionConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    source: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "architecture": self.architecture.to_dict(),
            "training": asdict(self.training),
            "regression": asdict(self.regression),
            "dataset": asdict(self.dataset),
            "analysis": asdict(self.analysis),
        }


SECTIONS = ("architecture", "training", "regression", "dataset", "analysis")
_ARCH_KEYS = {"input_size", "base_kernel", "output_kernel", "layers"}
_LAYER_KEYS = {"tau", "num_fm", "num_cm", "fm_size", "cm_size", "kernels"}


def _mapping(data: Any, path: str) -> Dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"'{path}' must be a mapping")
    return data


def _reject_unknown(data: Dict, known, path: str):
    for key in data:
        if key not in known:
            raise ConfigError(f"Unknown config key '{path}.{key}'")


def _build_section(cls, data: Any, path: str):
    data = _mapping(data, path)
    _reject_unknown(data, {f.name for f in fields(cls)}, path)
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"{path}: {e}") from e


def _build_architecture(data: Any) -> ArchitectureSpec:
    data = _mapping(data, "architecture")
    if not data:
        return default_architecture()
    _reject_unknown(data, _ARCH_KEYS, "architecture")
    if "layers" not in data:
        raise ConfigError("architecture.layers is required when an architecture section is given")
    layers = []
    for index, entry in enumerate(data["layers"], start=1):
        path = f"architecture.layers[{index}]"
        entry = _mapping(entry, path)
        _reject_unknown(entry, _LAYER_KEYS, path)
        kernels = _mapping(entry.get("kernels"), f"{path}.kernels")
        _reject_unknown(kernels, set(PATHWAYS), f"{path}.kernels")
        missing = sorted({"tau", "num_fm", "num_cm", "fm_size", "cm_size"} - set(entry))
        if missing:
            raise ConfigError(f"{path} is missing {', '.join(missing)}")
        layers.append(LayerSpec(level=index, tau=float(entry["tau"]), num_fm=int(entry["num_fm"]),
                                num_cm=int(entry["num_cm"]), fm_size=entry["fm_size"],
                                cm_size=entry["cm_size"], kernels=kernels))
    return ArchitectureSpec(
        layers=layers,
        input_size=tuple(data.get("input_size", (36, 36))),
        base_kernel=int(data.get("base_kernel", 5)),
        output_kernel=data.get("output_kernel"),
    )


def parse_run_config(raw: Any, source: Optional[str] = None) -> RunConfig:
    """Build a RunConfig from an already parsed YAML document."""
    raw = _mapping(raw, "<root>")
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(f"Unknown config section '{key}'")
    return RunConfig(
        architecture=_build_architecture(raw.get("architecture")),
        training=_build_section(TrainingConfig, raw.get("training"), "training"),
        regression=_build_section(RegressionConfig, raw.get("regression"), "regression"),
        dataset=_build_section(DatasetConfig, raw.get("dataset"), "dataset"),
        analysis=_build_section(AnalysisConfig, raw.get("analysis"), "analysis"),
        source=source,
    )


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """
    Load a run configuration.

    Args:
        path: YAML file; None gives the built-in defaults

    Returns:
        RunConfig
    """
    if path is None:
        return RunConfig()
    if not os.path.exists(path):
        raise MissingFileError(f"Config file not found: {path}")
    with open(path, "r") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Malformed config {path}: {e}") from e
    return parse_run_config(raw, source=path)
