"""Glue between the feature, selection and recognition stages."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .chanfeat import FeatureKind, descriptor_matrix
from .hmmrec import CharacterModelSet, Lexicon, LexiconDecoder, train_embedded
from .imagecore import ALL_CHANNELS, TARGET_HEIGHT, ChannelSet, load_image, normalize_height, to_channel_set
from .phogfeat import (ObservationSequence, SelectionMode, WindowSpec, phog_descriptors, sliding_windows,
                       window_context_regions, window_patch)

CHANNEL_INDEX = {c: i for i, c in enumerate(ALL_CHANNELS)}


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map, optionally over worker processes; the result never depends on ``jobs``."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def prepare_channels(img: np.ndarray, height: int = TARGET_HEIGHT) -> ChannelSet:
    """Height-normalize an RGB image and split it into channel planes."""
    return to_channel_set(normalize_height(img, height))


def load_channels(path: str | os.PathLike, height: int = TARGET_HEIGHT) -> ChannelSet:
    return prepare_channels(load_image(path), height)


@dataclass
class WindowFeatures:
    """PHOG of every window in every channel of one image."""

    rects: tuple
    phog: np.ndarray  # (9, n_windows, 168), channels in ALL_CHANNELS order

    def __len__(self):
        return len(self.rects)

    def channel(self, ch: str) -> np.ndarray:
        return self.phog[CHANNEL_INDEX[ch]]

    def sequence(self, chosen: Sequence[str]) -> np.ndarray:
        idx = np.array([CHANNEL_INDEX[c] for c in chosen])
        return self.phog[idx, np.arange(len(self.rects))]


def window_features(cs: ChannelSet, spec: WindowSpec = WindowSpec()) -> WindowFeatures:
    rects = sliding_windows(cs.width, cs.height, spec)
    patches = np.stack([window_patch(cs[c], r) for c in ALL_CHANNELS for r in rects])
    phog = phog_descriptors(patches).reshape(len(ALL_CHANNELS), len(rects), -1)
    return WindowFeatures(tuple(rects), phog)


def window_descriptors(cs: ChannelSet, rects, kind) -> np.ndarray:
    """Selection descriptors of the widened context patch of every window."""
    return descriptor_matrix(cs, window_context_regions(rects, cs.width, cs.height), kind)


def image_descriptor(cs: ChannelSet, kind) -> np.ndarray:
    return descriptor_matrix(cs, [None], kind)[0]


def choose_channels(selector, cs: ChannelSet, rects, mode, kind=None,
                    window_desc: np.ndarray | None = None, image_desc: np.ndarray | None = None) -> tuple:
    """Channel per window under a selection mode (same rules as :func:`phogfeat.extract_sequence`)."""
    mode = SelectionMode.parse(mode)
    if mode.name == "fixed":
        return (mode.channel,) * len(rects)
    kind = FeatureKind.parse(kind if kind is not None else selector.kind)
    if mode.name == "per-image":
        d = image_descriptor(cs, kind) if image_desc is None else image_desc
        ch = selector.channel_order[int(selector.select_index(d[None])[0])]
        return (ch,) * len(rects)
    X = window_descriptors(cs, rects, kind) if window_desc is None else window_desc
    return tuple(selector.channel_order[int(i)] for i in np.atleast_1d(selector.select_index(X)))


def observation_sequence(cs: ChannelSet, selector, mode, spec: WindowSpec = WindowSpec(),
                         feats: WindowFeatures | None = None) -> ObservationSequence:
    feats = feats or window_features(cs, spec)
    kind = getattr(selector, "kind", None)
    chosen = choose_channels(selector, cs, feats.rects, mode, kind)
    return ObservationSequence(feats.sequence(chosen), chosen, feats.rects)


def selector_rows(cs: ChannelSet, rects, kind, window_stride: int = 1) -> np.ndarray:
    """Training descriptors for one image: the whole image, then every ``window_stride``-th window."""
    win = window_descriptors(cs, list(rects)[::window_stride], kind)
    return np.vstack([image_descriptor(cs, kind)[None], win])


def train_hmm(sequences, transcripts, charset: str, cfg) -> CharacterModelSet:
    return train_embedded(sequences, transcripts, charset, states=cfg.states,
                          gaussians=cfg.gaussians, iters=cfg.iters)


class Recognizer:
    """Selector plus character models plus lexicon, for one selection mode."""

    def __init__(self, models: CharacterModelSet, lexicon, selector=None, mode="per-window",
                 spec: WindowSpec = WindowSpec()):
        self.mode = SelectionMode.parse(mode)
        if self.mode.name != "fixed" and selector is None:
            raise ValueError(f"mode {self.mode} needs a selector")
        self.selector = selector
        self.spec = spec
        self.decoder = LexiconDecoder(models, lexicon if isinstance(lexicon, Lexicon) else Lexicon(lexicon))

    def sequence(self, cs: ChannelSet) -> ObservationSequence:
        if self.mode.name == "fixed":
            rects = sliding_windows(cs.width, cs.height, self.spec)
            patches = np.stack([window_patch(cs[self.mode.channel], r) for r in rects])
            return ObservationSequence(phog_descriptors(patches), (self.mode.channel,) * len(rects), tuple(rects))
        return observation_sequence(cs, self.selector, self.mode, self.spec)

    def recognize(self, cs: ChannelSet) -> tuple:
        seq = self.sequence(cs)
        return self.decoder.recognize(seq.vectors), seq

    def top_word(self, cs: ChannelSet) -> str:
        return self.decoder.top_word(self.sequence(cs).vectors)
