"""Uniform local binary patterns, 8 neighbours at radius 1."""
import numpy as np

from ..errors import PatchTooSmall

P = 8
RADIUS = 1.0
FEATURE_LEN = P * (P - 1) + 3
# Neighbour >= centre is decided with this slack so that bilinear round-off on
# flat regions does not flip bits.
TIE_EPS = 1e-9


def _transitions(code: int) -> int:
    bits = [(code >> i) & 1 for i in range(P)]
    return sum(bits[i] != bits[(i + 1) % P] for i in range(P))


def _uniform_table() -> np.ndarray:
    table = np.full(2 ** P, FEATURE_LEN - 1, dtype=np.intp)
    nxt = 0
    for code in range(2 ** P):
        if _transitions(code) <= 2:
            table[code] = nxt
            nxt += 1
    assert nxt == FEATURE_LEN - 1
    return table


UNIFORM_BIN = _uniform_table()


def neighbour_offsets() -> list:
    """(dy, dx) of each sampling point, counter-clockwise from the right."""
    out = []
    for p in range(P):
        ang = 2.0 * np.pi * p / P
        out.append((round(-RADIUS * np.sin(ang), 12), round(RADIUS * np.cos(ang), 12)))
    return out


def _sample(plane: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Bilinear samples at (y+dy, x+dx) for every interior pixel (y, x)."""
    h, w = plane.shape
    ys = np.arange(1, h - 1)[:, None] + dy
    xs = np.arange(1, w - 1)[None, :] + dx
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    fy = ys - y0
    fx = xs - x0
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    return ((1 - fy) * (1 - fx) * plane[y0, x0] + (1 - fy) * fx * plane[y0, x1]
            + fy * (1 - fx) * plane[y1, x0] + fy * fx * plane[y1, x1])


def lbp_codes(plane: np.ndarray) -> np.ndarray:
    """8-bit LBP code of every interior pixel (border of 1 excluded)."""
    plane = np.asarray(plane, dtype=np.float64)
    centre = plane[1:-1, 1:-1]
    codes = np.zeros(centre.shape, dtype=np.intp)
    for p, (dy, dx) in enumerate(neighbour_offsets()):
        codes |= ((_sample(plane, dy, dx) - centre) >= -TIE_EPS).astype(np.intp) << p
    return codes


def lbp_feature(patch: np.ndarray) -> np.ndarray:
    """59-bin L1-normalized uniform LBP histogram."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] < 3 or patch.shape[1] < 3:
        raise PatchTooSmall(f"LBP needs a >= 3x3 plane, got {patch.shape}")
    bins = UNIFORM_BIN[lbp_codes(patch)]
    hist = np.bincount(bins.ravel(), minlength=FEATURE_LEN).astype(np.float64)
    return hist / hist.sum()
