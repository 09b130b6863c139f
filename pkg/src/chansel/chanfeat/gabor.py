"""Gabor filter bank mean/energy features."""
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from ..errors import PatchTooSmall

WAVELENGTHS = (4.0, 4.0 * np.sqrt(2.0), 8.0, 8.0 * np.sqrt(2.0), 16.0)
ORIENTATIONS_DEG = (0.0, 30.0, 60.0, 90.0, 120.0, 150.0)
SIGMA_RATIO = 0.56
ASPECT = 0.5
FEATURE_LEN = len(WAVELENGTHS) * len(ORIENTATIONS_DEG) * 2


def gabor_kernel(wavelength: float, theta_deg: float) -> np.ndarray:
    """Complex zero-DC Gabor kernel; rows are y (down), columns x (right).

    At 0 degrees the carrier runs along x, so vertical stripes respond.
    """
    sigma = SIGMA_RATIO * wavelength
    half = int(np.ceil(3.0 * sigma / ASPECT))
    coords = np.arange(-half, half + 1, dtype=np.float64)
    y, x = np.meshgrid(coords, coords, indexing="ij")
    th = np.deg2rad(theta_deg)
    xr = x * np.cos(th) + y * np.sin(th)
    yr = -x * np.sin(th) + y * np.cos(th)
    env = np.exp(-(xr ** 2 + (ASPECT * yr) ** 2) / (2.0 * sigma ** 2))
    env /= env.sum()
    carrier = np.exp(2j * np.pi * xr / wavelength)
    dc = (env * carrier).sum() / env.sum()
    return env * (carrier - dc)


@lru_cache(maxsize=1)
def filter_bank() -> tuple:
    """The 30 kernels, scale-major then orientation, each embedded in one common size."""
    kernels = [gabor_kernel(lam, th) for lam in WAVELENGTHS for th in ORIENTATIONS_DEG]
    size = max(k.shape[0] for k in kernels)
    bank = np.zeros((len(kernels), size, size), dtype=np.complex128)
    for i, k in enumerate(kernels):
        off = (size - k.shape[0]) // 2
        bank[i, off:off + k.shape[0], off:off + k.shape[1]] = k
    bank.setflags(write=False)
    return bank, kernels


@lru_cache(maxsize=16)
def _bank_spectrum(h: int, w: int) -> tuple:
    # Taps further than the patch extent never reach a 'same' output pixel, so the
    # bank is cropped to (2h-1, 2w-1); the circular length only has to keep the
    # wrapped tail out of the retained block.
    bank, _ = filter_bank()
    k = bank.shape[1]
    kh, kw = min(k, 2 * h - 1), min(k, 2 * w - 1)
    c = (k - 1) // 2
    crop = bank[:, c - (kh - 1) // 2:c + (kh - 1) // 2 + 1, c - (kw - 1) // 2:c + (kw - 1) // 2 + 1]
    oh, ow = (kh - 1) // 2, (kw - 1) // 2
    fh = sfft.next_fast_len(h + kh - 1 - oh)
    fw = sfft.next_fast_len(w + kw - 1 - ow)
    spec = sfft.fft2(crop, s=(fh, fw))
    return spec, oh, ow


def gabor_responses(patch: np.ndarray) -> np.ndarray:
    """Zero-padded 'same'-size convolution with every filter: (..., 30, H, W) complex.

    Leading axes of ``patch`` are treated as a stack of equally sized planes.
    """
    patch = np.asarray(patch, dtype=np.float64)
    h, w = patch.shape[-2:]
    spec, oh, ow = _bank_spectrum(h, w)
    full = sfft.ifft2(sfft.fft2(patch, s=spec.shape[-2:])[..., None, :, :] * spec)
    return full[..., oh:oh + h, ow:ow + w]


def gabor_feature(patch: np.ndarray) -> np.ndarray:
    """Per filter: mean response magnitude and energy (mean squared magnitude)."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] < 8 or patch.shape[1] < 8:
        raise PatchTooSmall(f"Gabor feature needs a >= 8x8 plane, got {patch.shape}")
    mag = np.abs(gabor_responses(patch))
    out = np.empty(FEATURE_LEN)
    out[0::2] = mag.mean(axis=(1, 2))
    out[1::2] = (mag ** 2).mean(axis=(1, 2))
    return out
