"""Loss, evaluation and BEV configuration with JSON round-tripping."""

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .exceptions import ScaleviewError
from .geometry import BevSpec


@dataclass(frozen=True)
class DepthPoseLossConfig:
    alpha: float = 0.85
    beta: float = 0.1
    ssim_c1: float = 0.01 ** 2
    ssim_c2: float = 0.03 ** 2
    # unit weight on smoothness; monodepth-style training commonly uses 1e-3
    smooth_weight: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ScaleviewError("alpha must lie in [0, 1]")
        if self.beta < 0:
            raise ScaleviewError("beta must be non-negative")
        if not (self.ssim_c1 > 0 and self.ssim_c2 > 0):
            raise ScaleviewError("SSIM stabilizers must be positive")


@dataclass(frozen=True)
class LayoutLossConfig:
    w_road: float = 5.0
    w_vehicle: float = 15.0
    lam: float = 20.0
    union_mode: str = "standard"
    positive_only_weight: bool = False

    def __post_init__(self):
        if not (self.w_road > 0 and self.w_vehicle > 0):
            raise ScaleviewError("class weights must be positive")
        if self.lam < 0:
            raise ScaleviewError("lambda must be non-negative")
        if self.union_mode not in ("standard", "additive"):
            raise ScaleviewError(f"unknown union_mode {self.union_mode!r}")

    def weight(self, category):
        try:
            return {"road": self.w_road, "vehicle": self.w_vehicle}[category]
        except KeyError:
            raise ScaleviewError(f"unknown layout category {category!r}") from None


@dataclass(frozen=True)
class DepthEvalConfig:
    min_depth: float = 1e-3
    max_depth: float = 80.0
    apply_median_scaling: bool = True

    def __post_init__(self):
        if not 0 < self.min_depth < self.max_depth:
            raise ScaleviewError("need 0 < min_depth < max_depth")


@dataclass(frozen=True)
class ToolkitConfig:
    depth_pose: DepthPoseLossConfig = field(default_factory=DepthPoseLossConfig)
    layout: LayoutLossConfig = field(default_factory=LayoutLossConfig)
    depth_eval: DepthEvalConfig = field(default_factory=DepthEvalConfig)
    bev: BevSpec = field(default_factory=BevSpec)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        sections = {f.name: f.default_factory for f in fields(cls)}
        unknown = set(data) - set(sections)
        if unknown:
            raise ScaleviewError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, factory in sections.items():
            base = factory()
            overrides = data.get(name, {})
            allowed = {f.name for f in fields(base)}
            bad = set(overrides) - allowed
            if bad:
                raise ScaleviewError(f"unknown keys in [{name}]: {sorted(bad)}")
            kwargs[name] = replace(base, **overrides)
        return cls(**kwargs)


def load_config(path=None):
    """Read a JSON config file; missing keys keep their defaults."""
    if path is None:
        return ToolkitConfig()
    with open(path) as fh:
        data = json.load(fh)
    return ToolkitConfig.from_dict(data)


def default_config_json():
    return ToolkitConfig().to_json()
