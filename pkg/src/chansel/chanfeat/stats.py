"""Per-plane moment statistics plus an HSV color histogram on an RGB patch."""
import numpy as np

from ..errors import PatchTooSmall
from ..imagecore import rgb_to_hsv

HSV_BINS = (16, 4, 4)
FEATURE_LEN = 3 * 3 + HSV_BINS[0] * HSV_BINS[1] * HSV_BINS[2]


def plane_moments(values: np.ndarray) -> tuple:
    """Mean, root mean squared deviation and signed cube root of the mean cubed deviation."""
    v = np.asarray(values, dtype=np.float64).ravel()
    mean = v.mean()
    dev = v - mean
    return mean, np.sqrt(np.mean(dev ** 2)), float(np.cbrt(np.mean(dev ** 3)))


def hsv_histogram(rgb: np.ndarray) -> np.ndarray:
    h, s, v = rgb_to_hsv(np.asarray(rgb, dtype=np.float64))
    hq = np.minimum((h * HSV_BINS[0] / 256.0).astype(np.intp), HSV_BINS[0] - 1)
    sq = np.minimum((s * HSV_BINS[1] / 256.0).astype(np.intp), HSV_BINS[1] - 1)
    vq = np.minimum((v * HSV_BINS[2] / 256.0).astype(np.intp), HSV_BINS[2] - 1)
    idx = (hq * HSV_BINS[1] + sq) * HSV_BINS[2] + vq
    hist = np.bincount(idx.ravel(), minlength=HSV_BINS[0] * HSV_BINS[1] * HSV_BINS[2]).astype(np.float64)
    return hist / hist.sum()


def stats_hist_feature(rgb_patch: np.ndarray) -> np.ndarray:
    """265 values: (mean, sigma, skew) for R, G, B then the 256-bin HSV histogram."""
    rgb_patch = np.asarray(rgb_patch, dtype=np.float64)
    if rgb_patch.ndim != 3 or rgb_patch.shape[2] != 3 or rgb_patch.shape[0] * rgb_patch.shape[1] == 0:
        raise PatchTooSmall(f"stats feature needs a nonempty RGB patch, got {rgb_patch.shape}")
    moments = [m for c in range(3) for m in plane_moments(rgb_patch[..., c])]
    return np.concatenate([np.array(moments), hsv_histogram(rgb_patch)])
