"""Per-pixel reference implementations of the selection features, used only as test oracles."""
import colorsys
import math

import numpy as np


def haar_oracle(x):
    h, w = x.shape
    out = {k: np.zeros((h // 2, w // 2)) for k in ("LL", "LH", "HL", "HH")}
    s = 1 / math.sqrt(2)
    for i in range(h // 2):
        for j in range(w // 2):
            a, b = x[2 * i, 2 * j], x[2 * i, 2 * j + 1]
            c, d = x[2 * i + 1, 2 * j], x[2 * i + 1, 2 * j + 1]
            # rows first (low/high along x), then columns
            lo_top, hi_top = (a + b) * s, (a - b) * s
            lo_bot, hi_bot = (c + d) * s, (c - d) * s
            out["LL"][i, j] = (lo_top + lo_bot) * s
            out["LH"][i, j] = (hi_top + hi_bot) * s
            out["HL"][i, j] = (lo_top - lo_bot) * s
            out["HH"][i, j] = (hi_top - hi_bot) * s
    return out


def direct_convolve_same(patch, kernel):
    h, w = patch.shape
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    out = np.zeros((h, w), dtype=complex)
    for y in range(h):
        for x in range(w):
            acc = 0j
            for u in range(max(0, y - ch), min(h, y + ch + 1)):
                for v in range(max(0, x - cw), min(w, x + cw + 1)):
                    acc += patch[u, v] * kernel[y - u + ch, x - v + cw]
            out[y, x] = acc
    return out


def _bilinear(img, y, x):
    y0, x0 = math.floor(y), math.floor(x)
    fy, fx = y - y0, x - x0
    v = 0.0
    for yy, wy in ((y0, 1 - fy), (y0 + 1, fy)):
        for xx, wx in ((x0, 1 - fx), (x0 + 1, fx)):
            if wy * wx > 0:
                v += wy * wx * img[yy, xx]
    return v


def _uniform_bins():
    table, n = {}, 0
    for c in range(256):
        bits = [(c >> i) & 1 for i in range(8)]
        if sum(bits[i] != bits[(i + 1) % 8] for i in range(8)) <= 2:
            table[c] = n
            n += 1
    return table


def lbp_oracle(img):
    table = _uniform_bins()
    hist = np.zeros(59)
    h, w = img.shape
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            code = 0
            for k in range(8):
                a = 2 * math.pi * k / 8
                ny, nx = round(y - math.sin(a), 12), round(x + math.cos(a), 12)
                if _bilinear(img, ny, nx) - img[y, x] >= -1e-9:
                    code |= 1 << k
            hist[table.get(code, 58)] += 1
    return hist / hist.sum()


def lpq_oracle(img):
    a = 1 / 7
    freqs = [(a, 0.0), (0.0, a), (a, a), (a, -a)]
    h, w = img.shape
    hist = np.zeros(256)
    for y in range(3, h - 3):
        for x in range(3, w - 3):
            coefs = []
            for fx, fy in freqs:
                s = 0j
                for dy in range(-3, 4):
                    for dx in range(-3, 4):
                        s += img[y + dy, x + dx] * complex(math.cos(-2 * math.pi * (fx * dx + fy * dy)),
                                                           math.sin(-2 * math.pi * (fx * dx + fy * dy)))
                coefs.append(s)
            parts = [c.real for c in coefs] + [c.imag for c in coefs]
            code = sum(1 << i for i, v in enumerate(parts) if v > 1e-8)
            hist[code] += 1
    return hist / hist.sum()


def stats_oracle(rgb):
    h, w, _ = rgb.shape
    n = h * w
    out = []
    for c in range(3):
        vals = [float(rgb[y, x, c]) for y in range(h) for x in range(w)]
        m = sum(vals) / n
        var = sum((v - m) ** 2 for v in vals) / n
        m3 = sum((v - m) ** 3 for v in vals) / n
        out += [m, math.sqrt(var), math.copysign(abs(m3) ** (1 / 3), m3)]
    hist = [0.0] * 256
    for y in range(h):
        for x in range(w):
            hh, ss, vv = colorsys.rgb_to_hsv(*(float(rgb[y, x, c]) / 255 for c in range(3)))
            hq = min(int(hh * 255 * 16 / 256), 15)
            sq = min(int(ss * 255 * 4 / 256), 3)
            vq = min(int(vv * 255 * 4 / 256), 3)
            hist[(hq * 4 + sq) * 4 + vq] += 1 / n
    return np.array(out + hist)
