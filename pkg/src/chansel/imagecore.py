"""Image loading, color-space conversion and height normalization.

Images are ``uint8`` arrays of shape ``(height, width, 3)``; channel planes
are ``float64`` arrays of shape ``(height, width)`` with values in [0, 255].
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DegenerateImage, FormatError, ImageIOError, ValidationError

ALL_CHANNELS = ("R", "G", "B", "Y", "Cb", "Cr", "H", "S", "V")
# Order used by selection descriptors, label vectors and selector models.
SELECTABLE_CHANNELS = ("R", "G", "B", "Y", "Cr", "Cb", "S", "V")

TARGET_HEIGHT = 40


def as_image(pixels) -> np.ndarray:
    """Validate and return an RGB image array (H, W, 3) of uint8."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DegenerateImage(f"image has no pixels: {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValidationError("pixel components must lie in [0, 255]")
        arr = np.rint(arr).astype(np.uint8)
    return arr


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Decode a PNG or binary PPM (P6) file into an RGB image.

    Grayscale sources are replicated into three equal components.
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    if data[:2] == b"P6":
        return _decode_ppm(data, path)
    if not data.startswith(b"\x89PNG\r\n\x1a\n"):
        raise FormatError(f"{path}: not a PNG or P6 PPM file")
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I", "F"):
                arr = np.asarray(im, dtype=np.float64)
                scale = 255.0 / 65535.0 if arr.max(initial=0) > 255 else 1.0
                gray = np.clip(np.rint(arr * scale), 0, 255).astype(np.uint8)
                return np.repeat(gray[:, :, None], 3, axis=2)
            rgb = im.convert("RGB")
            return np.array(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise FormatError(f"{path}: undecodable PNG ({exc})") from exc


def _decode_ppm(data: bytes, path: str) -> np.ndarray:
    # Header: magic, width, height, maxval separated by whitespace; '#' comments allowed.
    fields = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError as exc:
            raise FormatError(f"{path}: bad PPM header field") from exc
    if pos >= n or not data[pos:pos + 1].isspace():
        raise FormatError(f"{path}: truncated PPM header")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid PPM dimensions or maxval")
    bpc = 1 if maxval < 256 else 2
    need = width * height * 3 * bpc
    body = data[pos:pos + need]
    if len(body) < need:
        raise FormatError(f"{path}: truncated PPM raster ({len(body)} of {need} bytes)")
    if bpc == 1:
        raw = np.frombuffer(body, dtype=np.uint8).astype(np.float64)
    else:
        raw = np.frombuffer(body, dtype=">u2").astype(np.float64)
    if maxval != 255:
        raw = np.rint(raw * 255.0 / maxval)
    return raw.reshape(height, width, 3).astype(np.uint8)


def save_png(img: np.ndarray, path: str | os.PathLike) -> None:
    Image.fromarray(as_image(img), mode="RGB").save(os.fspath(path), format="PNG", optimize=False)


def save_ppm(img: np.ndarray, path: str | os.PathLike) -> None:
    img = as_image(img)
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


@dataclass(frozen=True)
class ChannelSet:
    """The nine channel planes of one word image."""

    planes: dict

    def __post_init__(self):
        missing = [c for c in ALL_CHANNELS if c not in self.planes]
        if missing:
            raise ValidationError(f"channel set missing planes {missing}")
        shapes = {self.planes[c].shape for c in ALL_CHANNELS}
        if len(shapes) != 1:
            raise ValidationError(f"channel planes differ in shape: {shapes}")

    def __getitem__(self, channel: str) -> np.ndarray:
        try:
            return self.planes[channel]
        except KeyError:
            raise ValidationError(f"unknown channel {channel!r}; valid: {', '.join(ALL_CHANNELS)}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(ALL_CHANNELS)

    @property
    def shape(self) -> tuple:
        return self.planes["R"].shape

    @property
    def height(self) -> int:
        return self.shape[0]

    @property
    def width(self) -> int:
        return self.shape[1]

    def stack(self, order=SELECTABLE_CHANNELS) -> np.ndarray:
        """Planes stacked along a leading axis in the given channel order."""
        return np.stack([self.planes[c] for c in order])

    def rgb(self) -> np.ndarray:
        return np.stack([self.planes[c] for c in ("R", "G", "B")], axis=-1)


def rgb_to_ycbcr(rgb: np.ndarray) -> tuple:
    """Full-range BT.601 conversion of float RGB arrays."""
    r, g, b = (rgb[..., i].astype(np.float64) for i in range(3))
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return y, cb, cr


def ycbcr_to_rgb(y, cb, cr) -> np.ndarray:
    r = y + 1.402 * (cr - 128.0)
    g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0)
    b = y + 1.772 * (cb - 128.0)
    return np.stack([r, g, b], axis=-1)


def rgb_to_hsv(rgb: np.ndarray) -> tuple:
    """Hexcone HSV with all three components scaled to [0, 255].

    Hue is 0 wherever max == min.
    """
    rgb = rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    hr = ((g - b) / safe) % 6.0
    hg = (b - r) / safe + 2.0
    hb = (r - g) / safe + 4.0
    hue = np.where(mx == r, hr, np.where(mx == g, hg, hb))
    hue = np.where(delta > 0, hue * 60.0, 0.0)
    h = hue / 360.0 * 255.0
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0) * 255.0, 0.0)
    return h, s, mx


def to_channel_set(img: np.ndarray) -> ChannelSet:
    """Split an RGB image into the nine R,G,B,Y,Cb,Cr,H,S,V planes."""
    img = as_image(img)
    rgb = img.astype(np.float64)
    y, cb, cr = rgb_to_ycbcr(rgb)
    h, s, v = rgb_to_hsv(rgb)
    raw = {"R": rgb[..., 0], "G": rgb[..., 1], "B": rgb[..., 2],
           "Y": y, "Cb": cb, "Cr": cr, "H": h, "S": s, "V": v}
    planes = {}
    for name, plane in raw.items():
        p = np.clip(plane, 0.0, 255.0)
        p.setflags(write=False)
        planes[name] = p
    return ChannelSet(planes)


def _resample_axis(arr: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    old_len = arr.shape[axis]
    if new_len == old_len:
        return arr
    # Half-pixel centre alignment, edge clamped.
    pos = (np.arange(new_len) + 0.5) * (old_len / new_len) - 0.5
    pos = np.clip(pos, 0.0, old_len - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, old_len - 1)
    frac = pos - lo
    shape = [1] * arr.ndim
    shape[axis] = new_len
    frac = frac.reshape(shape)
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, hi, axis=axis)
    return a * (1.0 - frac) + b * frac


def resize_bilinear(arr: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Separable bilinear resampling of a plane or an RGB image.

    ``uint8`` input is rounded back to ``uint8``; float input stays float.
    """
    if new_h < 1 or new_w < 1:
        raise DegenerateImage(f"target size {new_h}x{new_w} is empty")
    src = np.asarray(arr)
    out = _resample_axis(src.astype(np.float64), new_h, 0)
    out = _resample_axis(out, new_w, 1)
    if src.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


def normalize_height(arr: np.ndarray, target_h: int = TARGET_HEIGHT) -> np.ndarray:
    """Resample to ``target_h`` rows, preserving aspect ratio (width rounded, min 1)."""
    if target_h < 8:
        raise ValidationError(f"target height must be >= 8, got {target_h}")
    arr = np.asarray(arr)
    h, w = arr.shape[:2]
    if h == 0 or w == 0:
        raise DegenerateImage("source image has zero height or width")
    if h == target_h:
        return arr
    new_w = max(1, int(np.floor(w * target_h / h + 0.5)))
    return resize_bilinear(arr, target_h, new_w)


def normalize_channel_set(cs: ChannelSet, target_h: int = TARGET_HEIGHT) -> ChannelSet:
    if cs.height == target_h:
        return cs
    return ChannelSet({c: np.clip(normalize_height(cs[c], target_h), 0.0, 255.0) for c in ALL_CHANNELS})


class Rect(NamedTuple):
    x: int
    y: int
    w: int
    h: int

    def clamp(self, width: int, height: int) -> "Rect":
        x0 = min(max(self.x, 0), width - 1)
        y0 = min(max(self.y, 0), height - 1)
        x1 = min(max(self.x + self.w, x0 + 1), width)
        y1 = min(max(self.y + self.h, y0 + 1), height)
        return Rect(x0, y0, x1 - x0, y1 - y0)

    def crop(self, arr: np.ndarray) -> np.ndarray:
        return arr[..., self.y:self.y + self.h, self.x:self.x + self.w]
