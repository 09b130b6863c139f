import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chansel.chanfeat import FeatureKind, context_region, descriptor_matrix, selection_descriptor
from chansel.chanfeat.gabor import (ORIENTATIONS_DEG, WAVELENGTHS, filter_bank, gabor_feature, gabor_kernel,
                                    gabor_responses)
from chansel.chanfeat.lbp import lbp_feature
from chansel.chanfeat.lpq import lpq_feature
from chansel.chanfeat.stats import stats_hist_feature
from chansel.chanfeat.wavelet import haar_step, wavelet_feature, wavelet_strip_features
from chansel.errors import PatchTooSmall, ValidationError
from chansel.imagecore import ALL_CHANNELS, ChannelSet, Rect, to_channel_set

from feature_oracles import direct_convolve_same, haar_oracle, lbp_oracle, lpq_oracle, stats_oracle

planes = arrays(np.float64, st.tuples(st.integers(8, 20), st.integers(8, 20)),
                elements=st.floats(0, 255, allow_nan=False))


# -- Haar wavelet -------------------------------------------------------------


def test_haar_step_matches_oracle(rng):
    x = rng.random((8, 12)) * 255
    got, ref = haar_step(x), haar_oracle(x)
    for k in ref:
        assert np.allclose(got[k], ref[k], atol=1e-12)


def test_wavelet_feature_matches_oracle(rng):
    x = rng.random((16, 24)) * 255
    ll = x
    expect = []
    for _ in range(3):
        bands = haar_oracle(ll)
        for k in ("LL", "LH", "HL", "HH"):
            v = bands[k].ravel()
            m = sum(v) / len(v)
            expect += [m, math.sqrt(sum((t - m) ** 2 for t in v) / len(v))]
        ll = bands["LL"]
    assert np.allclose(wavelet_feature(x), expect, atol=1e-9)


def test_wavelet_constant_plane():
    f = wavelet_feature(np.full((16, 16), 100.0)).reshape(3, 4, 2)
    for k in range(3):
        assert f[k, 0, 0] == pytest.approx(100 * 2 ** (k + 1))
        assert np.allclose(f[k, 1:], 0) and f[k, 0, 1] == 0


def test_wavelet_row_tile():
    # [[a, a], [b, b]] tile: rows differ, columns equal; one step gives HL = a - b, LH = 0
    a, b = 10.0, 4.0
    x = np.tile(np.array([[a, a], [b, b]]), (4, 4))
    bands = haar_step(x)
    assert np.allclose(bands["HL"], a - b)
    assert np.allclose(bands["LH"], 0) and np.allclose(bands["HH"], 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 10).map(lambda n: 2 * n), st.integers(1, 10).map(lambda n: 2 * n)),
              elements=st.floats(-300, 300, allow_nan=False)))
def test_haar_parseval(x):
    bands = haar_step(x)
    total = sum(float((b ** 2).sum()) for b in bands.values())
    ref = float((x ** 2).sum())
    assert total == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_wavelet_batch_equals_single(rng):
    stack = rng.random((3, 2, 10, 9))
    batch = wavelet_feature(stack)
    for i in range(3):
        for j in range(2):
            assert np.array_equal(batch[i, j], wavelet_feature(stack[i, j]))


@pytest.mark.parametrize("w", [32, 33, 77, 150])
def test_wavelet_strip_matches_crops(rng, w):
    strip = rng.random((3, 40, w)) * 255
    x0s = list(range(0, w - 32 + 1, 3))
    got = wavelet_strip_features(strip, x0s, 32)
    want = np.stack([wavelet_feature(strip[..., x:x + 32]) for x in x0s])
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_wavelet_too_small():
    with pytest.raises(PatchTooSmall):
        wavelet_feature(np.zeros((7, 20)))


# -- Gabor --------------------------------------------------------------------


def test_gabor_matches_direct_convolution(rng):
    patch = rng.random((16, 16)) * 255
    _, kernels = filter_bank()
    resp = gabor_responses(patch)
    expect = []
    for i, k in enumerate(kernels):
        ref = direct_convolve_same(patch, k)
        assert np.allclose(resp[i], ref, rtol=1e-6, atol=1e-9 * np.abs(ref).max())
        mag = np.abs(ref)
        expect += [mag.mean(), (mag ** 2).mean()]
    assert np.allclose(gabor_feature(patch), expect, rtol=1e-6)


def test_gabor_kernels_zero_dc():
    for lam in WAVELENGTHS:
        for th in ORIENTATIONS_DEG:
            assert abs(gabor_kernel(lam, th).sum()) < 1e-12


def test_gabor_stripes_prefer_matched_orientation():
    x = np.arange(40)
    patch = np.tile(128 + 100 * np.cos(2 * np.pi * x / 8.0), (40, 1))  # vertical stripes, period 8
    f = gabor_feature(patch).reshape(len(WAVELENGTHS), len(ORIENTATIONS_DEG), 2)
    s = WAVELENGTHS.index(8.0)
    assert f[s, ORIENTATIONS_DEG.index(0.0), 1] > 10 * f[s, ORIENTATIONS_DEG.index(90.0), 1]


def test_gabor_constant_plane_fades():
    energies = []
    for n in (16, 32, 64, 128):
        resp = gabor_responses(np.full((n, n), 90.0))
        energies.append(float((np.abs(resp[0]) ** 2).mean()))  # 4 px wavelength, 0 degrees
        if n == 128:
            inner = resp[0, 40:-40, 40:-40]
            assert np.abs(inner).max() < 1e-9
    assert all(a > b for a, b in zip(energies, energies[1:]))


@settings(max_examples=25, deadline=None)
@given(planes)
def test_gabor_finite_nonnegative(p):
    f = gabor_feature(p)
    assert f.shape == (60,) and np.all(np.isfinite(f)) and np.all(f >= 0)


# -- LBP ----------------------------------------------------------------------


def test_lbp_bright_centre():
    p = np.zeros((5, 5))
    p[2, 2] = 200.0
    h = lbp_feature(p)
    # the centre codes 0 (bin 0); its eight neighbours see all bits set (bin 57)
    expect = np.zeros(59)
    expect[0], expect[57] = 1 / 9, 8 / 9
    assert np.allclose(h, expect, atol=1e-12)
    assert np.allclose(h, lbp_oracle(p), atol=1e-9)


def test_lbp_random_matches_oracle(rng):
    p = rng.random((9, 11)) * 255
    assert np.allclose(lbp_feature(p), lbp_oracle(p), atol=1e-9)


def test_lbp_constant_plane():
    h = lbp_feature(np.full((6, 6), 7.0))
    assert h[57] == 1.0


@settings(max_examples=40, deadline=None)
@given(planes)
def test_lbp_normalized(p):
    assert abs(lbp_feature(p).sum() - 1.0) < 1e-12


# -- LPQ ----------------------------------------------------------------------


def test_lpq_random_matches_oracle(rng):
    p = rng.random((9, 9)) * 255
    assert np.allclose(lpq_feature(p), lpq_oracle(p), atol=1e-9)
    q = rng.random((12, 10)) * 255
    assert np.allclose(lpq_feature(q), lpq_oracle(q), atol=1e-9)


def test_lpq_constant_single_code():
    h = lpq_feature(np.full((10, 10), 33.0))
    assert np.count_nonzero(h) == 1 and h.max() == 1.0


@settings(max_examples=40, deadline=None)
@given(planes)
def test_lpq_normalized(p):
    assert abs(lpq_feature(p).sum() - 1.0) < 1e-12


def test_lpq_too_small():
    with pytest.raises(PatchTooSmall):
        lpq_feature(np.zeros((6, 9)))


# -- stats + HSV histogram ---------------------------------------------------


def test_stats_matches_oracle(rng):
    rgb = rng.integers(0, 256, (4, 4, 3)).astype(float)
    assert np.allclose(stats_hist_feature(rgb), stats_oracle(rgb), atol=1e-9)


def test_stats_constant_gray():
    f = stats_hist_feature(np.full((3, 3, 3), 64.0))
    assert np.allclose(f[:9], [64, 0, 0] * 3)
    assert np.count_nonzero(f[9:]) == 1


def test_stats_two_point_plane():
    rgb = np.zeros((1, 2, 3))
    rgb[0, 1] = 200.0
    f = stats_hist_feature(rgb)
    assert np.allclose(f[:3], [100, 100, 0])


# -- descriptors --------------------------------------------------------------


def _channels(rng, h=40, w=64):
    return to_channel_set(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


@pytest.mark.parametrize("kind,length", [("wavelet", 192), ("gabor", 480), ("lbp", 472), ("lpq", 2048),
                                         ("stats", 265)])
def test_descriptor_lengths(rng, kind, length):
    d = selection_descriptor(_channels(rng), Rect(4, 0, 32, 40), kind)
    assert len(d) == length == FeatureKind.parse(kind).descriptor_len
    assert np.linalg.norm(d.values) == pytest.approx(1.0)


def test_zero_patch_gabor_unnormalized():
    cs = ChannelSet({c: np.zeros((40, 40)) for c in ALL_CHANNELS})
    d = selection_descriptor(cs, None, "gabor")
    assert len(d) == 480 and np.all(d.values == 0)


def test_descriptor_matrix_batch_matches_single(rng):
    cs = _channels(rng, w=90)
    regions = [context_region(Rect(x, 0, 8, 40), cs.width, cs.height) for x in range(0, 83, 4)] + [None]
    for kind in ("wavelet", "lbp"):
        M = descriptor_matrix(cs, regions, kind)
        for row, r in zip(M, regions):
            assert np.array_equal(row, selection_descriptor(cs, r, kind).values)


def test_context_region_clamped():
    assert context_region(Rect(0, 0, 8, 40), 100, 40) == Rect(0, 0, 32, 40)
    assert context_region(Rect(92, 0, 8, 40), 100, 40) == Rect(68, 0, 32, 40)
    assert context_region(Rect(40, 0, 8, 40), 100, 40) == Rect(28, 0, 32, 40)
    assert context_region(Rect(0, 0, 8, 40), 20, 40) == Rect(0, 0, 20, 40)


def test_feature_kind_parse():
    assert FeatureKind.parse("LBP") is FeatureKind.LBP
    with pytest.raises(ValidationError, match="wavelet"):
        FeatureKind.parse("sift")
