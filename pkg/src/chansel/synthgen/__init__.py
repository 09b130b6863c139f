"""Seeded synthetic word images whose text is clean in exactly one target channel.

Each contrast regime pairs a foreground and background colour that differ
along the target channel and (nearly) nowhere else among several other
channels. Rectangular clutter is painted along the two RGB directions that
leave the target channel's linear functional unchanged, so the target plane
shows clean text while the remaining planes show clutter edges.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import (DegenerateImage, FormatError, ImageIOError, LevelOutOfRange, UnknownGlyph,
                      ValidationError)
from ..imagecore import ALL_CHANNELS, TARGET_HEIGHT, as_image, normalize_height, resize_bilinear, \
    save_png, to_channel_set
from .font import CHARSET, GLYPH_COLS, GLYPH_ROWS, glyph_bitmap, has_glyph

PRNG_NAME = "numpy.random.Philox(4x64)"
MANIFEST_FORMAT = "chansel-corpus/1"
MANIFEST_COLUMNS = ("id", "path", "text", "target_channel", "noise", "scale", "seed", "meta")

GLYPH_SCALE = 4
ADVANCE = GLYPH_COLS * GLYPH_SCALE + 4
MARGIN_X = 6
IMAGE_HEIGHT = TARGET_HEIGHT

# RGB weights of the channels that are linear in RGB (offsets do not matter here).
LINEAR_FUNCTIONALS = {
    "R": (1.0, 0.0, 0.0),
    "G": (0.0, 1.0, 0.0),
    "B": (0.0, 0.0, 1.0),
    "Y": (0.299, 0.587, 0.114),
    "Cb": (-0.168736, -0.331264, 0.5),
    "Cr": (0.5, -0.418688, -0.081312),
}


def clutter_basis(target: str) -> np.ndarray:
    """Orthonormal (2, 3) basis of RGB offsets invisible to the target channel."""
    try:
        f = np.array(LINEAR_FUNCTIONALS[target])
    except KeyError:
        raise ValidationError(f"clutter needs a channel linear in RGB, got {target!r}") from None
    n = f / np.linalg.norm(f)
    for e in np.eye(3):
        v = e - (e @ n) * n
        if np.linalg.norm(v) > 0.3:
            u1 = v / np.linalg.norm(v)
            break
    u2 = np.cross(n, u1)
    return np.stack([u1, u2 / np.linalg.norm(u2)])


@dataclass(frozen=True)
class Regime:
    """Foreground/background colours targeting one channel."""

    target: str
    bg: tuple
    fg: tuple

    def __post_init__(self):
        if self.target not in LINEAR_FUNCTIONALS:
            raise ValidationError(f"regime target must be one of {', '.join(LINEAR_FUNCTIONALS)}, got {self.target!r}")
        for c in (*self.bg, *self.fg):
            if not 0 <= c <= 255:
                raise ValidationError("regime colours must lie in [0, 255]")

    @property
    def basis(self) -> np.ndarray:
        return clutter_basis(self.target)


# Pairs solved from the BT.601 and hexcone formulas, then rounded to integers.
#  Cr: fg - bg along (1.402, -0.714136, 0): zero change in Y, Cb, B; max and min unchanged -> V, S flat.
#  Cb: fg - bg along (0, -0.344136, 1.772): zero change in Y, Cr, R; V, S flat.
#  Y:  two greys: Cb, Cr, H and S are all flat.
#  G:  only G moves while staying between min and max: R, B, V, S flat.
REGIMES = {
    "Cr": Regime("Cr", (67, 110, 160), (151, 67, 160)),
    "Cb": Regime("Cb", (200, 120, 103), (200, 103, 192)),
    "Y": Regime("Y", (100, 100, 100), (160, 160, 160)),
    "G": Regime("G", (170, 100, 60), (170, 160, 60)),
}
DEFAULT_REGIMES = ("G", "Y", "Cr", "Cb")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    level: float

    KINDS = ("gaussian", "saltpepper", "speckle")

    def __post_init__(self):
        kind = self.kind.lower().replace("_", "").replace("-", "").replace("&", "")
        if kind == "saltandpepper":
            kind = "saltpepper"
        if kind not in self.KINDS:
            raise ValidationError(f"unknown noise kind {self.kind!r}; valid: {', '.join(self.KINDS)}")
        object.__setattr__(self, "kind", kind)
        if not 0 <= self.level <= 30:
            raise LevelOutOfRange(f"noise level {self.level}% outside [0, 30]")

    def __str__(self):
        return f"{self.kind}:{self.level:g}"

    @classmethod
    def parse(cls, text: str | None) -> "NoiseSpec | None":
        if text in (None, "", "none"):
            return None
        kind, _, level = str(text).partition(":")
        try:
            return cls(kind, float(level))
        except ValueError:
            raise ValidationError(f"bad noise spec {text!r}; expected kind:level") from None


@dataclass(frozen=True)
class Layout:
    """Glyph placement; enough to re-render the text mask."""

    text: str
    width: int
    height: int = IMAGE_HEIGHT
    x0: int = MARGIN_X
    y0: int = (IMAGE_HEIGHT - GLYPH_ROWS * GLYPH_SCALE) // 2
    scale: int = GLYPH_SCALE
    advance: int = ADVANCE
    wave_amp: float = 0.0
    wave_period: float = 64.0
    wave_phase: float = 0.0

    @classmethod
    def for_text(cls, text: str, **kw) -> "Layout":
        n = len(text)
        width = 2 * MARGIN_X + n * ADVANCE - (ADVANCE - GLYPH_COLS * GLYPH_SCALE)
        return cls(text, width, **kw)

    def column_offset(self, cols: np.ndarray) -> np.ndarray:
        if self.wave_amp == 0:
            return np.zeros(len(cols), dtype=np.intp)
        dy = np.floor(self.wave_amp * np.sin(2 * np.pi * cols / self.wave_period + self.wave_phase) + 0.5)
        lo, hi = -self.y0, self.height - GLYPH_ROWS * self.scale - self.y0
        return np.clip(dy, lo, hi).astype(np.intp)

    def glyph_span(self, k: int) -> tuple:
        x = self.x0 + k * self.advance
        return x, x + GLYPH_COLS * self.scale


def render_mask(layout: Layout) -> np.ndarray:
    """Boolean text mask (height, width) of a layout."""
    mask = np.zeros((layout.height, layout.width), dtype=bool)
    gh = GLYPH_ROWS * layout.scale
    for k, ch in enumerate(layout.text):
        bm = glyph_bitmap(ch, layout.scale)
        x, x1 = layout.glyph_span(k)
        cols = np.arange(x, x1)
        dy = layout.column_offset(cols)
        for j, (c, d) in enumerate(zip(cols, dy)):
            y = layout.y0 + d
            mask[y:y + gh, c] |= bm[:, j]
    return mask


def check_text(text: str) -> None:
    if not text:
        raise ValidationError("text must be non-empty")
    bad = [c for c in text if not has_glyph(c)]
    if bad:
        raise UnknownGlyph(f"no glyph for {''.join(bad)!r}; font covers {CHARSET}")


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def _paint_segment(base, coef, mask, x0, x1, regime, rng, clutter, jitter, density, cell):
    """Fill columns [x0, x1): text colours plus a blocky clutter texture in the regime's kernel plane."""
    j = rng.uniform(-jitter, jitter, 2) @ regime.basis
    seg = slice(x0, x1)
    base[:, seg] = np.where(mask[:, seg, None], np.array(regime.fg) + j, np.array(regime.bg) + j)
    h = base.shape[0]
    oy, ox = (int(v) for v in rng.integers(0, cell, 2))
    ny = (h + oy) // cell + 1
    nx = (x1 - x0 + ox) // cell + 1
    on = rng.random((ny, nx)) < density
    c = rng.uniform(-clutter, clutter, (ny, nx, 2)) * on[..., None]
    rows = (np.arange(h) + oy) // cell
    cols = (np.arange(x1 - x0) + ox) // cell
    coef[:, seg] = c[rows][:, cols] @ regime.basis


def _safe_add(base: np.ndarray, off: np.ndarray) -> np.ndarray:
    """base + s * off with the largest per-pixel s <= 1 that stays inside [0, 255]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(off > 0, (255.0 - base) / off, np.inf)
        dn = np.where(off < 0, -base / off, np.inf)
    s = np.minimum(np.minimum(up, dn).min(axis=-1), 1.0)
    s = np.maximum(s, 0.0)
    return base + s[..., None] * off


def channel_contrasts(img: np.ndarray, mask: np.ndarray) -> dict:
    """|mean(text) - mean(background)| per channel plane."""
    cs = to_channel_set(img)
    out = {}
    for c in ALL_CHANNELS:
        p = cs[c]
        out[c] = float(abs(p[mask].mean() - p[~mask].mean())) if mask.any() and (~mask).any() else 0.0
    return out


@dataclass
class RenderedWord:
    image: np.ndarray
    mask: np.ndarray
    meta: dict


def render_word(text: str, regime, seed: int, *, clutter: float = 140.0, jitter: float = 15.0,
                density: float = 0.6, cell: int = 4, illumination: float = 0.0, wave_amp: float = 0.0,
                second: Regime | str | None = None) -> RenderedWord:
    """Render ``text`` in a contrast regime; ``second`` colours the right half with another regime."""
    check_text(text)
    regime = REGIMES[regime] if isinstance(regime, str) else regime
    if isinstance(second, str):
        second = REGIMES[second]
    rng = _rng(seed, 0)
    phase = float(rng.uniform(0, 2 * np.pi)) if wave_amp else 0.0
    layout = Layout.for_text(text, wave_amp=float(wave_amp), wave_phase=phase)
    mask = render_mask(layout)
    H, W = mask.shape
    base = np.zeros((H, W, 3))
    coef = np.zeros((H, W, 3))
    if second is not None and len(text) >= 2:
        k = len(text) // 2
        split = layout.glyph_span(k)[0] - (ADVANCE - GLYPH_COLS * GLYPH_SCALE) // 2
        segments = [(0, split, regime), (split, W, second)]
    else:
        second = None
        segments = [(0, W, regime)]
    for x0, x1, reg in segments:
        _paint_segment(base, coef, mask, x0, x1, reg, rng, clutter, jitter, density, cell)
    img = _safe_add(base, coef)
    if illumination:
        ramp = 1.0 + illumination * (np.arange(W) / max(W - 1, 1) - 0.5)
        img = img * ramp[None, :, None]
    img = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    meta = {
        "layout": asdict(layout),
        "segments": [{"x0": x0, "x1": x1, "target": reg.target} for x0, x1, reg in segments],
        "contrast": channel_contrasts(img, mask),
    }
    if second is not None:
        for seg in meta["segments"]:
            sl = slice(seg["x0"], seg["x1"])
            seg["contrast"] = channel_contrasts(img[:, sl], mask[:, sl])
    return RenderedWord(img, mask, meta)


def layout_mask(meta: dict, shape: tuple | None = None) -> np.ndarray:
    """Text mask for an image from its manifest metadata, resampled to ``shape`` if needed."""
    mask = render_mask(Layout(**meta["layout"]))
    if shape is not None and mask.shape != tuple(shape[:2]):
        mask = resize_bilinear(mask.astype(np.float64), shape[0], shape[1]) >= 0.5
    return mask


# -- degradations -----------------------------------------------------------


def apply_noise(img: np.ndarray, spec: NoiseSpec | None, seed: int) -> np.ndarray:
    """Seeded noise; the underlying random draws do not depend on the level."""
    img = as_image(img)
    if spec is None or spec.level == 0:
        return img.copy()
    p = spec.level / 100.0
    rng = _rng(seed, 1)
    x = img.astype(np.float64)
    if spec.kind == "gaussian":
        out = x + rng.standard_normal(x.shape) * (p * 255.0)
    elif spec.kind == "saltpepper":
        hit = rng.random(x.shape[:2]) < p
        white = rng.random(x.shape[:2]) < 0.5
        out = x.copy()
        out[hit] = np.where(white[hit], 255.0, 0.0)[:, None]
    else:
        u = rng.uniform(-1.0, 1.0, x.shape) * (p * np.sqrt(3.0))
        out = x * (1.0 + u)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def degrade_resolution(img: np.ndarray, scale: float, target_h: int = TARGET_HEIGHT) -> np.ndarray:
    """Downsample to ``scale`` of the height, then bring back to the pipeline height."""
    if not 0 < scale <= 1:
        raise ValidationError(f"resolution scale must be in (0, 1], got {scale}")
    img = as_image(img)
    h, w = img.shape[:2]
    small_h = int(np.floor(h * scale + 0.5))
    if small_h < 4:
        raise DegenerateImage(f"downsampled height {small_h} < 4")
    if small_h != h:
        small_w = max(1, int(np.floor(w * small_h / h + 0.5)))
        img = resize_bilinear(img, small_h, small_w)
    return normalize_height(img, target_h)


# -- corpus -----------------------------------------------------------------


def make_lexicon(charset: str, size: int, seed: int, min_len: int = 3, max_len: int = 6) -> list:
    """Distinct random words over ``charset``."""
    check_text(charset)
    rng = _rng(seed, 2)
    words, seen = [], set()
    limit = sum(len(charset) ** n for n in range(min_len, max_len + 1))
    if size > limit:
        raise ValidationError(f"cannot draw {size} distinct words of length {min_len}-{max_len}")
    while len(words) < size:
        n = int(rng.integers(min_len, max_len + 1))
        w = "".join(charset[i] for i in rng.integers(0, len(charset), n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


@dataclass(frozen=True)
class CorpusSpec:
    seed: int
    lexicon: tuple
    count: int
    charset: str = "ABCDEFGHIJ"
    regimes: tuple = DEFAULT_REGIMES
    mixed_fraction: float = 0.0
    clutter: float = 140.0
    jitter: float = 15.0
    illumination: float = 0.0
    wave_amp: float = 0.0
    noise: str | None = None
    resolution_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lexicon", tuple(self.lexicon))
        object.__setattr__(self, "regimes", tuple(self.regimes))

    def validate(self) -> None:
        if self.count < 1:
            raise ValidationError("corpus count must be >= 1")
        if not self.regimes:
            raise ValidationError("at least one contrast regime is required")
        for r in self.regimes:
            if r not in REGIMES:
                raise ValidationError(f"unknown regime {r!r}; valid: {', '.join(REGIMES)}")
        if not self.lexicon:
            raise ValidationError("lexicon is empty")
        check_text(self.charset)
        for w in self.lexicon:
            check_text(w)
            extra = set(w) - set(self.charset)
            if extra:
                raise UnknownGlyph(f"lexicon word {w!r} uses {''.join(sorted(extra))!r} outside the charset")
        if not 0 < self.resolution_scale <= 1:
            raise ValidationError("resolution_scale must be in (0, 1]")
        if not 0 <= self.mixed_fraction <= 1:
            raise ValidationError("mixed_fraction must be in [0, 1]")
        if self.mixed_fraction > 0 and len(self.regimes) < 2:
            raise ValidationError("mixed images need at least two regimes")
        NoiseSpec.parse(self.noise)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        return cls(**d)


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    path: str
    text: str
    target_channel: str
    noise: str
    scale: float
    seed: int
    meta: dict = field(compare=False, default_factory=dict)

    @property
    def targets(self) -> tuple:
        return tuple(self.target_channel.split("|"))

    @property
    def mixed(self) -> bool:
        return "|" in self.target_channel


@dataclass
class Manifest:
    records: list
    spec_hash: str
    prng: str = PRNG_NAME
    root: str = "."

    def image_path(self, rec: ManifestRecord) -> str:
        return os.path.join(self.root, rec.path)

    def __len__(self):
        return len(self.records)


def plan_corpus(spec: CorpusSpec) -> list:
    """(id, text, regime names, seed) for every image, without rendering."""
    spec.validate()
    rng = _rng(spec.seed, 3)
    R = len(spec.regimes)
    order = np.resize(np.arange(R), spec.count)
    order = order[rng.permutation(spec.count)]
    words = rng.integers(0, len(spec.lexicon), spec.count)
    mixed = rng.random(spec.count) < spec.mixed_fraction
    partner = rng.integers(1, max(R, 2), spec.count)
    plan = []
    width = max(4, len(str(spec.count - 1)))
    for i in range(spec.count):
        regs = (spec.regimes[order[i]],)
        if mixed[i]:
            regs += (spec.regimes[(order[i] + partner[i]) % R],)
        seed = int(np.random.SeedSequence([spec.seed, i]).generate_state(1, np.uint64)[0] >> np.uint64(1))
        plan.append((f"w{i:0{width}d}", spec.lexicon[words[i]], regs, seed))
    return plan


def render_record(spec: CorpusSpec, text: str, regimes: tuple, seed: int) -> RenderedWord:
    rw = render_word(text, regimes[0], seed, clutter=spec.clutter, jitter=spec.jitter,
                     illumination=spec.illumination, wave_amp=spec.wave_amp,
                     second=regimes[1] if len(regimes) > 1 else None)
    img = rw.image
    if spec.resolution_scale < 1:
        img = degrade_resolution(img, spec.resolution_scale)
    img = apply_noise(img, NoiseSpec.parse(spec.noise), seed)
    if img is not rw.image:
        mask = layout_mask(rw.meta, img.shape)
        rw.meta["contrast"] = channel_contrasts(img, mask)
    return RenderedWord(img, rw.mask, rw.meta)


def _fmt_meta(meta: dict) -> str:
    return json.dumps(meta, sort_keys=True, separators=(",", ":"))


def gen_corpus(spec: CorpusSpec, out_dir: str | os.PathLike) -> Manifest:
    """Render every image to ``out_dir/images`` and write ``manifest.tsv`` and ``lexicon.txt``."""
    plan = plan_corpus(spec)
    out_dir = os.fspath(out_dir)
    try:
        os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    except OSError as exc:
        raise ImageIOError(f"cannot create {out_dir}: {exc}") from exc
    records = []
    noise = str(NoiseSpec.parse(spec.noise) or "none")
    for rid, text, regs, seed in plan:
        rw = render_record(spec, text, regs, seed)
        rel = f"images/{rid}.png"
        save_png(rw.image, os.path.join(out_dir, rel))
        records.append(ManifestRecord(rid, rel, text, "|".join(regs), noise, spec.resolution_scale, seed, rw.meta))
    manifest = Manifest(records, spec.digest(), PRNG_NAME, out_dir)
    write_manifest(manifest, os.path.join(out_dir, "manifest.tsv"))
    with open(os.path.join(out_dir, "lexicon.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(spec.lexicon) + "\n")
    with open(os.path.join(out_dir, "corpus_spec.json"), "w", encoding="utf-8") as fh:
        fh.write(spec.to_json() + "\n")
    return manifest


def write_manifest(manifest: Manifest, path: str) -> None:
    lines = [f"# {MANIFEST_FORMAT}\tspec_sha256={manifest.spec_hash}\tprng={manifest.prng}",
             "\t".join(MANIFEST_COLUMNS)]
    for r in manifest.records:
        lines.append("\t".join([r.id, r.path, r.text, r.target_channel, r.noise, repr(float(r.scale)),
                                str(r.seed), _fmt_meta(r.meta)]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifest(path: str | os.PathLike) -> Manifest:
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.tsv")
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ImageIOError(f"cannot read manifest {path}: {exc}") from exc
    if len(lines) < 2 or not lines[0].startswith(f"# {MANIFEST_FORMAT}"):
        raise FormatError(f"{path}: missing corpus manifest header")
    head = dict(f.split("=", 1) for f in lines[0].split("\t")[1:] if "=" in f)
    if tuple(lines[1].split("\t")) != MANIFEST_COLUMNS:
        raise FormatError(f"{path}: unexpected manifest columns")
    records = []
    for n, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        f = line.split("\t")
        if len(f) != len(MANIFEST_COLUMNS):
            raise FormatError(f"{path}:{n}: expected {len(MANIFEST_COLUMNS)} fields, got {len(f)}")
        try:
            records.append(ManifestRecord(f[0], f[1], f[2], f[3], f[4], float(f[5]), int(f[6]), json.loads(f[7])))
        except (ValueError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}:{n}: bad record ({exc})") from exc
    return Manifest(records, head.get("spec_sha256", ""), head.get("prng", ""), os.path.dirname(path))


def regime_of_column(rec: ManifestRecord, x: float) -> str:
    """Generation-time target channel at image column ``x``."""
    for seg in rec.meta.get("segments", []):
        if seg["x0"] <= x < seg["x1"]:
            return seg["target"]
    return rec.targets[0]
