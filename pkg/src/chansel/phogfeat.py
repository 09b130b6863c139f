"""Sliding windows along a fitted baseline and PHOG window descriptors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .chanfeat import FeatureKind, context_region, descriptor_matrix
from .errors import DimensionMismatch, RankDeficient, ValidationError
from .imagecore import ALL_CHANNELS, TARGET_HEIGHT, ChannelSet, Rect

N_BINS = 8
PYRAMID_LEVELS = 3
PHOG_LEN = N_BINS * sum(4 ** lvl for lvl in range(PYRAMID_LEVELS))  # 168
MIN_MAGNITUDE = 1e-8


# -- baseline ---------------------------------------------------------------


class BaselinePoly(NamedTuple):
    """y = a0 + a1 x + a2 x^2 (coefficients in increasing power)."""

    coefficients: tuple

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=np.float64), self.coefficients)


def fit_baseline(points, degree: int = 2) -> BaselinePoly:
    """Least-squares polynomial through (x, y) points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    if len(np.unique(x)) < degree + 1:
        raise RankDeficient(f"need at least {degree + 1} distinct x values, got {len(np.unique(x))}")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("baseline points must be finite")
    A = np.vander(x, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return BaselinePoly(tuple(float(c) for c in coef))


def baseline_points(plane: np.ndarray, top_fraction: float = 0.2) -> list:
    """Per-column vertical centroid of the strongest-gradient pixels."""
    gx, gy = sobel(np.asarray(plane, dtype=np.float64))
    mag = np.hypot(gx, gy)
    if not np.any(mag > 0):
        return []
    thresh = np.quantile(mag[mag > 0], 1.0 - top_fraction)
    strong = mag >= thresh
    rows = np.arange(plane.shape[0], dtype=np.float64)[:, None]
    pts = []
    for col in np.flatnonzero(strong.any(axis=0)):
        w = mag[:, col] * strong[:, col]
        pts.append((float(col), float((rows[:, 0] * w).sum() / w.sum())))
    return pts


def estimate_baseline(plane: np.ndarray, degree: int = 2) -> BaselinePoly | None:
    pts = baseline_points(plane)
    try:
        return fit_baseline(pts, degree) if pts else None
    except RankDeficient:
        return None


# -- windows ----------------------------------------------------------------


@dataclass(frozen=True)
class WindowSpec:
    height: int = TARGET_HEIGHT
    width: int = 8
    stride: int = 4

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.stride < 1:
            raise ValidationError(f"invalid window spec {self}")

    def count(self, img_w: int) -> int:
        if img_w < self.width:
            return 1
        return (img_w - self.width) // self.stride + 1


def window_offsets(img_w: int, spec: WindowSpec = WindowSpec()) -> np.ndarray:
    """Left edge of every window."""
    return np.arange(spec.count(img_w)) * spec.stride


def sliding_windows(img_w: int, img_h: int, spec: WindowSpec = WindowSpec(),
                    baseline: BaselinePoly | None = None) -> list:
    """Window rectangles left to right; vertically centred on the baseline when one is given.

    A window may extend past the right edge of a narrow image; its pixels are
    completed by edge replication in :func:`window_patch`.
    """
    rects = []
    for x in window_offsets(img_w, spec).tolist():
        y = 0
        if baseline is not None and img_h > spec.height:
            yc = float(baseline(x + spec.width / 2.0))
            y = int(np.floor(yc - spec.height / 2.0 + 0.5))
            y = min(max(y, 0), img_h - spec.height)
        rects.append(Rect(x, y, spec.width, spec.height))
    return rects


def window_patch(plane: np.ndarray, rect: Rect) -> np.ndarray:
    """Crop ``rect`` from a plane, edge-replicating any part outside it."""
    h, w = plane.shape
    rows = np.clip(np.arange(rect.y, rect.y + rect.h), 0, h - 1)
    cols = np.clip(np.arange(rect.x, rect.x + rect.w), 0, w - 1)
    return plane[np.ix_(rows, cols)]


# -- PHOG -------------------------------------------------------------------


def sobel(patches: np.ndarray) -> tuple:
    """Sobel (gx, gy) with edge-replicated borders over the last two axes."""
    p = np.asarray(patches, dtype=np.float64)
    pad = [(0, 0)] * (p.ndim - 2) + [(1, 1), (1, 1)]
    q = np.pad(p, pad, mode="edge")
    tl, tc, tr = q[..., :-2, :-2], q[..., :-2, 1:-1], q[..., :-2, 2:]
    ml, mr = q[..., 1:-1, :-2], q[..., 1:-1, 2:]
    bl, bc, br = q[..., 2:, :-2], q[..., 2:, 1:-1], q[..., 2:, 2:]
    gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl)
    gy = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr)
    return gx, gy


def orientation_bins(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Signed orientation in [0, 360) quantized to 45-degree bins (0..7)."""
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 360.0)
    return np.floor(ang / (360.0 / N_BINS)).astype(np.intp) % N_BINS


def _cell_index(h: int, w: int) -> np.ndarray:
    """(levels-summed cells, h, w) one-hot layout flattened to an index per level and pixel."""
    idx = []
    offset = 0
    for lvl in range(PYRAMID_LEVELS):
        n = 2 ** lvl
        r = (np.arange(h) * n) // h
        c = (np.arange(w) * n) // w
        idx.append(offset + r[:, None] * n + c[None, :])
        offset += n * n
    return np.stack(idx)


def phog_descriptors(patches: np.ndarray) -> np.ndarray:
    """PHOG for a stack of equally sized patches (n, h, w) -> (n, 168)."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 3:
        raise DimensionMismatch(f"expected (n, h, w) patches, got {patches.shape}")
    n, h, w = patches.shape
    gx, gy = sobel(patches)
    mag = np.hypot(gx, gy)
    bins = orientation_bins(gx, gy)
    cells = _cell_index(h, w)  # (L, h, w)
    n_cells = cells.max() + 1
    flat = (cells[None] * N_BINS + bins[:, None]) + (np.arange(n) * n_cells * N_BINS)[:, None, None, None]
    weights = np.broadcast_to(mag[:, None], flat.shape)
    hist = np.bincount(flat.ravel(), weights=weights.ravel(), minlength=n * n_cells * N_BINS)
    hist = hist.reshape(n, n_cells * N_BINS)
    total = mag.reshape(n, -1).sum(axis=1)
    norm = np.linalg.norm(hist, axis=1)
    ok = (total >= MIN_MAGNITUDE) & (norm > 0)
    out = np.zeros_like(hist)
    out[ok] = hist[ok] / norm[ok, None]
    return out


def phog_descriptor(patch: np.ndarray, spec: WindowSpec | None = None) -> np.ndarray:
    """168-dim PHOG of one window: 8 signed orientation bins over 1 + 4 + 16 cells."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2:
        raise DimensionMismatch(f"window must be 2-D, got {patch.shape}")
    if spec is not None and patch.shape != (spec.height, spec.width):
        raise DimensionMismatch(f"window {patch.shape} does not match spec {(spec.height, spec.width)}")
    return phog_descriptors(patch[None])[0]


# -- sequences --------------------------------------------------------------


class SelectionMode(NamedTuple):
    """How the channel of each window is chosen: per-window, per-image or fixed:<channel>."""

    name: str
    channel: str | None = None

    @classmethod
    def per_window(cls) -> "SelectionMode":
        return cls("per-window")

    @classmethod
    def per_image(cls) -> "SelectionMode":
        return cls("per-image")

    @classmethod
    def fixed(cls, channel: str) -> "SelectionMode":
        if channel not in ALL_CHANNELS:
            raise ValidationError(f"unknown channel {channel!r}; valid: {', '.join(ALL_CHANNELS)}")
        return cls("fixed", channel)

    @classmethod
    def parse(cls, value) -> "SelectionMode":
        if isinstance(value, SelectionMode):
            return value
        text = str(value).strip()
        low = text.lower().replace("_", "-")
        if low in ("per-window", "perwindow", "window"):
            return cls.per_window()
        if low in ("per-image", "perimage", "image"):
            return cls.per_image()
        if low.startswith("fixed:"):
            return cls.fixed(text.split(":", 1)[1])
        raise ValidationError(f"unknown selection mode {value!r}; use per-window, per-image or fixed:<channel>")

    def __str__(self):
        return f"fixed:{self.channel}" if self.name == "fixed" else self.name


@dataclass(frozen=True)
class ObservationSequence:
    vectors: np.ndarray
    chosen_channels: tuple
    window_rects: tuple

    def __len__(self):
        return len(self.vectors)


def window_context_regions(rects: Sequence[Rect], img_w: int, img_h: int) -> list:
    return [context_region(r, img_w, img_h) for r in rects]


def select_window_channels(channels: ChannelSet, selector, kind, rects) -> tuple:
    """Selector's channel for every window, from its widened context patch."""
    regions = window_context_regions(rects, channels.width, channels.height)
    X = descriptor_matrix(channels, regions, kind)
    idx = np.atleast_1d(selector.select_index(X))
    return tuple(selector.channel_order[int(i)] for i in idx)


def extract_sequence(channels: ChannelSet, selector=None, kind=FeatureKind.WAVELET, mode="per-window",
                     spec: WindowSpec = WindowSpec(), baseline: BaselinePoly | None = None) -> ObservationSequence:
    """PHOG observation sequence with the channel of each window chosen per ``mode``."""
    mode = SelectionMode.parse(mode)
    rects = sliding_windows(channels.width, channels.height, spec, baseline)
    if mode.name == "fixed":
        chosen = (mode.channel,) * len(rects)
    else:
        if selector is None:
            raise ValidationError(f"mode {mode} needs a trained selector")
        kind = FeatureKind.parse(kind)
        if mode.name == "per-image":
            whole = descriptor_matrix(channels, [None], kind)
            ch = selector.channel_order[int(selector.select_index(whole)[0])]
            chosen = (ch,) * len(rects)
        else:
            chosen = select_window_channels(channels, selector, kind, rects)
    patches = np.stack([window_patch(channels[c], r) for c, r in zip(chosen, rects)])
    return ObservationSequence(phog_descriptors(patches), chosen, tuple(rects))
