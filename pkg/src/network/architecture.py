"""
Architecture description for the multiple spatio-temporal scales network.

A network is one input/output layer plus L >= 2 context layers. Each context
layer holds feature maps (FMs, convolutional pathways) and context maps
(CMs, element-wise recurrent pathways) sharing one time constant tau.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from utils.errors import ShapeError

Size = Tuple[int, int]

PATHWAYS = ("if", "ff", "cf", "fc")


@dataclass
class LayerSpec:
    """One context layer: time constant, map counts/sizes and kernel sizes."""

    level: int
    tau: float
    num_fm: int
    num_cm: int
    fm_size: Size
    cm_size: Size
    kernels: Dict[str, Optional[Size]] = field(default_factory=dict)

    def __post_init__(self):
        self.fm_size = tuple(int(v) for v in self.fm_size)
        self.cm_size = tuple(int(v) for v in self.cm_size)
        self.kernels = {
            name: (tuple(int(v) for v in size) if size is not None else None)
            for name, size in (self.kernels or {}).items()
        }
        unknown = set(self.kernels) - set(PATHWAYS)
        if unknown:
            raise ShapeError(f"Layer {self.level}: unknown kernel pathways {sorted(unknown)}")

    def to_dict(self) -> Dict:
        return {
            "level": self.level,
            "tau": self.tau,
            "num_fm": self.num_fm,
            "num_cm": self.num_cm,
            "fm_size": list(self.fm_size),
            "cm_size": list(self.cm_size),
            "kernels": {k: (list(v) if v is not None else None) for k, v in sorted(self.kernels.items())},
        }


@dataclass
class ArchitectureSpec:
    """Full network layout, bottom (level 1) to top (level L)."""

    layers: List[LayerSpec]
    input_size: Size = (36, 36)
    base_kernel: int = 5
    output_kernel: Optional[Size] = None

    def __post_init__(self):
        self.input_size = tuple(int(v) for v in self.input_size)
        if self.output_kernel is not None:
            self.output_kernel = tuple(int(v) for v in self.output_kernel)
        self.validate()

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def layer(self, level: int) -> LayerSpec:
        return self.layers[level - 1]

    def validate(self):
        """Check structural invariants; raises ShapeError on violation."""
        if len(self.layers) < 2:
            raise ShapeError("Architecture needs at least 2 context layers")
        if self.base_kernel < 1:
            raise ShapeError("base_kernel must be >= 1")
        for index, spec in enumerate(self.layers, start=1):
            if spec.level != index:
                raise ShapeError(f"Layer levels must be consecutive from 1; got {spec.level} at position {index}")
            if spec.tau < 1:
                raise ShapeError(f"Layer {index}: tau must be >= 1, got {spec.tau}")
            if spec.num_fm < 1 or spec.num_cm < 0:
                raise ShapeError(f"Layer {index}: need num_fm >= 1 and num_cm >= 0")
            if min(spec.fm_size) < 1 or min(spec.cm_size) < 1:
                raise ShapeError(f"Layer {index}: map sizes must be positive")
            if index > 1 and spec.tau < self.layers[index - 2].tau:
                raise ShapeError(f"Layer {index}: tau must be non-decreasing with level")
            if index < len(self.layers):
                upper = self.layers[index]
                if spec.cm_size[0] % upper.fm_size[0] or spec.cm_size[1] % upper.fm_size[1]:
                    raise ShapeError(
                        f"Layer {index}: CM size {spec.cm_size} must be an integer multiple of "
                        f"layer {index + 1} FM size {upper.fm_size} for W_fc"
                    )
        if min(self.input_size) < 1:
            raise ShapeError("input_size must be positive")

    def _auto_kernel(self, src: Size, dst: Size) -> Size:
        return tuple(max(self.base_kernel, abs(d - s) + 1) for s, d in zip(src, dst))

    def kernel_size(self, level: int, pathway: str) -> Size:
        """Resolved kernel size of an incoming pathway of a layer ('fo' = output head)."""
        if pathway == "fo":
            if self.output_kernel is not None:
                return self.output_kernel
            return self._auto_kernel(self.layer(1).fm_size, self.input_size)
        spec = self.layer(level)
        requested = spec.kernels.get(pathway)
        if requested is not None:
            return requested
        if pathway == "if":
            return self._auto_kernel(self.input_size, spec.fm_size)
        if pathway == "ff":
            return self._auto_kernel(self.layer(level + 1).fm_size, spec.fm_size)
        if pathway == "cf":
            return self._auto_kernel(spec.cm_size, spec.fm_size)
        if pathway == "fc":
            lower = self.input_size if level == 1 else self.layer(level - 1).fm_size
            return self._auto_kernel(lower, spec.cm_size)
        raise ShapeError(f"Unknown pathway '{pathway}'")

    def to_dict(self) -> Dict:
        return {
            "input_size": list(self.input_size),
            "base_kernel": self.base_kernel,
            "output_kernel": list(self.output_kernel) if self.output_kernel else None,
            "layers": [spec.to_dict() for spec in self.layers],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ArchitectureSpec":
        layers = []
        for index, entry in enumerate(data["layers"], start=1):
            entry = dict(entry)
            entry.setdefault("level", index)
            layers.append(LayerSpec(**entry))
        return cls(
            layers=layers,
            input_size=tuple(data.get("input_size", (36, 36))),
            base_kernel=int(data.get("base_kernel", 5)),
            output_kernel=data.get("output_kernel"),
        )


def default_architecture() -> ArchitectureSpec:
    """Four context layers with monotone time constants and shrinking maps."""
    return ArchitectureSpec(
        layers=[
            LayerSpec(level=1, tau=2.0, num_fm=8, num_cm=2, fm_size=(16, 16), cm_size=(8, 8)),
            LayerSpec(level=2, tau=4.0, num_fm=8, num_cm=2, fm_size=(8, 8), cm_size=(8, 8)),
            LayerSpec(level=3, tau=8.0, num_fm=6, num_cm=2, fm_size=(4, 4), cm_size=(4, 4)),
            LayerSpec(level=4, tau=16.0, num_fm=4, num_cm=2, fm_size=(2, 2), cm_size=(2, 2)),
        ],
        input_size=(36, 36),
        base_kernel=5,
    )
