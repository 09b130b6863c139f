"""Three-level orthonormal Haar decomposition statistics."""
import numpy as np

from ..errors import PatchTooSmall

LEVELS = 3
SUBBANDS = ("LL", "LH", "HL", "HH")
FEATURE_LEN = LEVELS * len(SUBBANDS) * 2


def _pad_even(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[-2:]
    ph, pw = h % 2, w % 2
    if not (ph or pw):
        return x
    pad = [(0, 0)] * (x.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(x, pad, mode="edge")


def haar_step(x: np.ndarray) -> dict:
    """One 2-D orthonormal Haar step over the last two axes.

    Odd sizes are completed by edge replication. ``HL`` is the row-difference
    (vertical high-pass) band and ``LH`` the column-difference band.
    """
    x = _pad_even(np.asarray(x, dtype=np.float64))
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return {
        "LL": (a + b + c + d) / 2.0,
        "LH": (a - b + c - d) / 2.0,
        "HL": (a + b - c - d) / 2.0,
        "HH": (a - b - c + d) / 2.0,
    }


def haar_decompose(x: np.ndarray, levels: int = LEVELS) -> list:
    """List of per-level sub-band dicts; each level decomposes the previous LL."""
    out = []
    ll = np.asarray(x, dtype=np.float64)
    for _ in range(levels):
        bands = haar_step(ll)
        out.append(bands)
        ll = bands["LL"]
    return out


def _box_mean(colsum: np.ndarray, cols: np.ndarray, width: int, count: int) -> np.ndarray:
    c = np.concatenate([np.zeros(colsum.shape[:-1] + (1,)), np.cumsum(colsum, axis=-1)], axis=-1)
    return (c[..., cols + width] - c[..., cols]) / count


def wavelet_strip_features(strip: np.ndarray, x0s, width: int) -> np.ndarray:
    """:func:`wavelet_feature` of the crops ``strip[..., x0:x0 + width]`` for every x0, without re-transforming overlaps.

    Needs crop height and width divisible by 8. A crop's level-k coefficients
    are then a column slice of the strip transformed from column phase
    x0 mod 2^k, so each phase is transformed once. Band statistics come from
    running column sums; the variance is taken around the band's strip mean
    to limit cancellation. Returns (n_crops, ..., 24).
    """
    strip = np.asarray(strip, dtype=np.float64)
    x0s = np.asarray(x0s, dtype=np.intp)
    h = strip.shape[-2]
    if h % 8 or width % 8:
        raise ValueError(f"strip crops must be multiples of 8, got {h}x{width}")
    out = np.empty((len(x0s),) + strip.shape[:-2] + (FEATURE_LEN,))
    ll_cache = {(0, 0): strip}
    for k in range(1, LEVELS + 1):
        step = 2 ** k
        for p in np.unique(x0s % step):
            parent = ll_cache[(k - 1, p % (step // 2))]
            bands = haar_step(parent[..., (p >> (k - 1)) & 1:])
            ll_cache[(k, p)] = bands["LL"]
            stack = np.stack([bands[name] for name in SUBBANDS])  # (4, ..., hk, Wk)
            idx = np.flatnonzero(x0s % step == p)
            cols = (x0s[idx] - p) // step
            wk = width // step
            count = stack.shape[-2] * wk
            centre = stack.mean(axis=(-2, -1), keepdims=True)
            dev = stack - centre
            m = _box_mean(dev.sum(axis=-2), cols, wk, count)  # (4, ..., n)
            m2 = _box_mean((dev * dev).sum(axis=-2), cols, wk, count)
            sd = np.sqrt(np.maximum(m2 - m * m, 0.0))
            m = m + centre[..., 0]
            base = (k - 1) * 8
            out[idx, ..., base:base + 8:2] = np.moveaxis(m, (0, -1), (-1, 0))
            out[idx, ..., base + 1:base + 8:2] = np.moveaxis(sd, (0, -1), (-1, 0))
    return out


def wavelet_feature(patch: np.ndarray) -> np.ndarray:
    """Mean and standard deviation of every sub-band of a 3-level Haar DWT.

    Accepts a single plane ``(H, W)`` or a stack ``(..., H, W)``; returns
    24 values per plane ordered level, sub-band (LL, LH, HL, HH), (mean, std).
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape[-2] < 8 or patch.shape[-1] < 8:
        raise PatchTooSmall(f"wavelet feature needs >= 8x8, got {patch.shape[-2:]}")
    feats = []
    for bands in haar_decompose(patch):
        for name in SUBBANDS:
            band = bands[name]
            m = band.mean(axis=(-2, -1))
            sd = np.sqrt(((band - m[..., None, None]) ** 2).mean(axis=(-2, -1)))
            feats.extend([m, sd])
    return np.stack(feats, axis=-1)
