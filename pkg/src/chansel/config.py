"""Pipeline configuration, JSON config files and the desk-scale preset."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace

from .chanfeat import FeatureKind
from .errors import FormatError, ValidationError
from .phogfeat import SelectionMode, WindowSpec

OUTPUT_ENV = "CHANSEL_OUTPUT_DIR"

NOISE_LEVELS = (0, 5, 10, 15, 20, 25, 30)
RESOLUTION_SCALES = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2)


@dataclass(frozen=True)
class PipelineConfig:
    corpus: str = "corpus"
    models: str = "models"
    reports: str = "reports"
    feature_kind: str = "wavelet"
    selection_mode: str = "per-window"
    window_height: int = 40
    window_width: int = 8
    window_stride: int = 4
    states: int = 6
    gaussians: int = 32
    iters: int = 4
    svm_C: float = 1.0
    folds: int = 4
    seed: int = 0
    charset: str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    lexicon_size: int = 10000
    corpus_count: int = 240
    mixed_fraction: float = 0.25
    selector_window_stride: int = 2
    jobs: int = 1

    def validate(self) -> "PipelineConfig":
        FeatureKind.parse(self.feature_kind)
        SelectionMode.parse(self.selection_mode)
        checks = [
            (self.window_height >= 8, "window_height must be >= 8"),
            (self.window_width >= 1, "window_width must be >= 1"),
            (1 <= self.window_stride <= self.window_width, "window_stride must be in [1, window_width]"),
            (1 <= self.states <= 64, "states must be in [1, 64]"),
            (1 <= self.gaussians <= 256, "gaussians must be in [1, 256]"),
            (0 <= self.iters <= 100, "iters must be in [0, 100]"),
            (self.svm_C > 0, "svm_C must be > 0"),
            (2 <= self.folds <= 20, "folds must be in [2, 20]"),
            (len(self.charset) >= 1 and len(set(self.charset)) == len(self.charset), "charset must be non-empty and unique"),
            (self.lexicon_size >= 1, "lexicon_size must be >= 1"),
            (self.corpus_count >= 1, "corpus_count must be >= 1"),
            (0.0 <= self.mixed_fraction <= 1.0, "mixed_fraction must be in [0, 1]"),
            (self.selector_window_stride >= 1, "selector_window_stride must be >= 1"),
            (self.jobs >= 1, "jobs must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(msg)
        return self

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(self.window_height, self.window_width, self.window_stride)

    @property
    def kind(self) -> FeatureKind:
        return FeatureKind.parse(self.feature_kind)

    def with_overrides(self, **kw) -> "PipelineConfig":
        known = {f.name for f in fields(self)}
        unknown = set(kw) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        clean = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **clean).validate()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)


PRESETS = {
    "paper": {},
    "desk": {"states": 3, "gaussians": 2, "charset": "ABCDEFGHIJ", "lexicon_size": 50},
}


def preset(name: str) -> PipelineConfig:
    try:
        return PipelineConfig(**PRESETS[name]).validate()
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; valid: {', '.join(PRESETS)}") from None


def load_config(path: str | os.PathLike, base: PipelineConfig | None = None) -> PipelineConfig:
    """Overlay a JSON config file on ``base`` (defaults if None)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON config ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    return (base or PipelineConfig()).with_overrides(**doc)


def output_root(default: str = ".") -> str:
    """Output directory, overridable through the environment."""
    return os.environ.get(OUTPUT_ENV) or default
