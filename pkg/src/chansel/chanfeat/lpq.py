"""Local phase quantization over a 7x7 window, without decorrelation."""
import numpy as np

from ..errors import PatchTooSmall

WINDOW = 7
FEATURE_LEN = 256
# Coefficients at or below this are quantized as non-positive; keeps flat
# regions (all coefficients ~0) on one code despite round-off.
SIGN_EPS = 1e-8


def frequencies() -> list:
    """The four (fx, fy) low frequencies, fx along columns and fy along rows."""
    a = 1.0 / WINDOW
    return [(a, 0.0), (0.0, a), (a, a), (a, -a)]


def _kernels() -> np.ndarray:
    r = WINDOW // 2
    offs = np.arange(-r, r + 1, dtype=np.float64)
    dy, dx = np.meshgrid(offs, offs, indexing="ij")
    return np.stack([np.exp(-2j * np.pi * (fx * dx + fy * dy)) for fx, fy in frequencies()])


KERNELS = _kernels()


def stft_coefficients(plane: np.ndarray) -> np.ndarray:
    """Windowed Fourier coefficients at the 4 frequencies: (4, H-6, W-6)."""
    win = np.lib.stride_tricks.sliding_window_view(np.asarray(plane, dtype=np.float64), (WINDOW, WINDOW))
    return np.einsum("hwij,fij->fhw", win, KERNELS, optimize=True)


def lpq_codes(plane: np.ndarray) -> np.ndarray:
    coef = stft_coefficients(plane)
    parts = np.concatenate([coef.real, coef.imag])
    codes = np.zeros(parts.shape[1:], dtype=np.intp)
    for i in range(8):
        codes |= (parts[i] > SIGN_EPS).astype(np.intp) << i
    return codes


def lpq_feature(patch: np.ndarray) -> np.ndarray:
    """256-bin L1-normalized LPQ code histogram over valid window positions."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] < WINDOW or patch.shape[1] < WINDOW:
        raise PatchTooSmall(f"LPQ needs a >= 7x7 plane, got {patch.shape}")
    hist = np.bincount(lpq_codes(patch).ravel(), minlength=FEATURE_LEN).astype(np.float64)
    return hist / hist.sum()
