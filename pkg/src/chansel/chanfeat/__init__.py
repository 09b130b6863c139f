"""Channel-selection descriptors built from five texture feature families."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..imagecore import SELECTABLE_CHANNELS, ChannelSet, Rect
from .gabor import gabor_feature
from .lbp import lbp_feature
from .lpq import lpq_feature
from .stats import stats_hist_feature
from .wavelet import wavelet_feature, wavelet_strip_features

__all__ = [
    "FeatureKind", "SelectionDescriptor", "selection_descriptor", "descriptor_matrix",
    "context_region", "wavelet_feature", "gabor_feature", "lbp_feature", "lpq_feature",
    "stats_hist_feature", "CONTEXT_WIDTH",
]

# Per-window descriptors look at the window widened to this many columns.
CONTEXT_WIDTH = 32


class FeatureKind(str, enum.Enum):
    WAVELET = "wavelet"
    GABOR = "gabor"
    LBP = "lbp"
    LPQ = "lpq"
    STATS = "stats"

    @classmethod
    def parse(cls, value) -> "FeatureKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(
                f"unknown feature kind {value!r}; valid: {', '.join(k.value for k in cls)}") from None

    @property
    def per_channel_len(self) -> int:
        return _PER_CHANNEL[self]

    @property
    def descriptor_len(self) -> int:
        if self is FeatureKind.STATS:
            return _PER_CHANNEL[self]
        return _PER_CHANNEL[self] * len(SELECTABLE_CHANNELS)


_PER_CHANNEL = {
    FeatureKind.WAVELET: 24,
    FeatureKind.GABOR: 60,
    FeatureKind.LBP: 59,
    FeatureKind.LPQ: 256,
    FeatureKind.STATS: 265,
}

_PLANE_FEATURES = {
    FeatureKind.GABOR: gabor_feature,
    FeatureKind.LBP: lbp_feature,
    FeatureKind.LPQ: lpq_feature,
}


@dataclass(frozen=True)
class SelectionDescriptor:
    kind: FeatureKind
    values: np.ndarray
    per_channel_len: int

    def __len__(self):
        return len(self.values)


def _l2(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.where(norm > 0, v / np.where(norm > 0, norm, 1.0), 0.0)


def _raw_descriptor(channels: ChannelSet, region: Rect, kind: FeatureKind) -> np.ndarray:
    if kind is FeatureKind.STATS:
        return stats_hist_feature(region.crop(np.moveaxis(channels.rgb(), -1, 0)).transpose(1, 2, 0))
    stack = region.crop(channels.stack(SELECTABLE_CHANNELS))
    if kind is FeatureKind.WAVELET:
        return wavelet_feature(stack).ravel()
    fn = _PLANE_FEATURES[kind]
    return np.concatenate([fn(p) for p in stack])


def selection_descriptor(channels: ChannelSet, region: Rect | None, kind) -> SelectionDescriptor:
    """Concatenated per-channel features over ``region`` (whole image if None), L2-normalized.

    Channel blocks follow (R, G, B, Y, Cr, Cb, S, V). The stats kind is computed
    once on the RGB patch. An all-zero raw vector is returned as is.
    """
    kind = FeatureKind.parse(kind)
    if region is None:
        region = Rect(0, 0, channels.width, channels.height)
    region = region.clamp(channels.width, channels.height)
    vals = _l2(_raw_descriptor(channels, region, kind))
    return SelectionDescriptor(kind, vals, kind.per_channel_len)


def context_region(window: Rect, img_w: int, img_h: int, width: int = CONTEXT_WIDTH) -> Rect:
    """Widen a window symmetrically to ``width`` columns at full image height, clamped."""
    width = min(width, img_w)
    cx2 = 2 * window.x + window.w
    x0 = (cx2 - width) // 2
    x0 = min(max(x0, 0), img_w - width)
    return Rect(x0, 0, width, img_h)


def descriptor_matrix(channels: ChannelSet, regions, kind) -> np.ndarray:
    """Stack of normalized descriptors, one row per region (None means the whole image).

    Wavelet descriptors over equally sized regions are computed in one batch.
    """
    kind = FeatureKind.parse(kind)
    full = Rect(0, 0, channels.width, channels.height)
    rects = [(full if r is None else r).clamp(channels.width, channels.height) for r in regions]
    if not rects:
        return np.zeros((0, kind.descriptor_len))
    if kind is FeatureKind.WAVELET and len({(r.y, r.w, r.h) for r in rects}) == 1 \
            and rects[0].w % 8 == 0 and rects[0].h % 8 == 0:
        # sliding context patches overlap heavily; transform the strip once
        r0 = rects[0]
        strip = channels.stack(SELECTABLE_CHANNELS)[:, r0.y:r0.y + r0.h]
        raw = wavelet_strip_features(strip, [r.x for r in rects], r0.w).reshape(len(rects), -1)
        return _l2(raw)
    if kind is FeatureKind.WAVELET and len({(r.w, r.h) for r in rects}) == 1:
        planes = channels.stack(SELECTABLE_CHANNELS)
        crops = np.stack([r.crop(planes) for r in rects])
        raw = wavelet_feature(crops).reshape(len(rects), -1)
        return _l2(raw)
    return np.vstack([selection_descriptor(channels, r, kind).values for r in rects])
