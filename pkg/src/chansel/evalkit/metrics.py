"""Multi-label selection metrics and word/character recognition accuracy."""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from ..errors import LengthMismatch, ValidationError
from ..imagecore import ALL_CHANNELS, SELECTABLE_CHANNELS


class MultiLabelReport(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    n: int


def positive_set(labels, channels: Sequence[str] = SELECTABLE_CHANNELS) -> frozenset:
    """Channels with a +1 entry; sets and iterables of names pass through."""
    if isinstance(labels, (set, frozenset)):
        return frozenset(labels)
    arr = np.asarray(labels)
    if arr.dtype.kind in "iuf" and arr.shape == (len(channels),):
        return frozenset(c for c, v in zip(channels, arr) if v > 0)
    return frozenset(labels)


def _ratio(num: int, den: int, other: frozenset) -> float:
    # 0/0 is a perfect score when the other side is empty too, otherwise a miss.
    if den == 0:
        return 0.0 if other else 1.0
    return num / den


def set_scores(y: frozenset, z: frozenset) -> tuple:
    """(accuracy, precision, recall) of one sample."""
    inter = len(y & z)
    acc = _ratio(inter, len(y | z), frozenset())
    return acc, _ratio(inter, len(z), y), _ratio(inter, len(y), z)


def multilabel_metrics(truth: Sequence, pred: Sequence) -> MultiLabelReport:
    """Mean per-sample accuracy |Y∩Z|/|Y∪Z|, precision |Y∩Z|/|Z| and recall |Y∩Z|/|Y| over positive labels."""
    if len(truth) != len(pred):
        raise LengthMismatch(f"{len(truth)} truth vs {len(pred)} predicted label vectors")
    if not truth:
        raise ValidationError("need at least one sample")
    scores = np.array([set_scores(positive_set(y), positive_set(z)) for y, z in zip(truth, pred)])
    acc, prec, rec = scores.mean(axis=0)
    return MultiLabelReport(float(acc), float(prec), float(rec), len(truth))


def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def word_char_accuracy(truth: Sequence[str], hyp: Sequence[str]) -> tuple:
    """(exact-match fraction, 1 - total edit distance / total truth length floored at 0)."""
    if len(truth) != len(hyp):
        raise LengthMismatch(f"{len(truth)} truths vs {len(hyp)} hypotheses")
    if not truth:
        raise ValidationError("need at least one word")
    word = sum(t == h for t, h in zip(truth, hyp)) / len(truth)
    total = sum(len(t) for t in truth)
    dist = sum(levenshtein(t, h) for t, h in zip(truth, hyp))
    char = max(0.0, 1.0 - dist / total) if total else float(dist == 0)
    return float(word), float(char)


def _check_hyps(per_channel_hyps: dict, truth: Sequence[str], channels) -> None:
    missing = [c for c in channels if c not in per_channel_hyps]
    if missing:
        raise ValidationError(f"missing hypotheses for channels {missing}")
    for c in channels:
        if len(per_channel_hyps[c]) != len(truth):
            raise LengthMismatch(f"channel {c}: {len(per_channel_hyps[c])} hypotheses for {len(truth)} words")


def oracle_correct(per_channel_hyps: dict, truth: Sequence[str], channels=ALL_CHANNELS) -> list:
    _check_hyps(per_channel_hyps, truth, channels)
    return [any(per_channel_hyps[c][i] == t for c in channels) for i, t in enumerate(truth)]


def oracle_eval(per_channel_hyps: dict, truth: Sequence[str], channels=ALL_CHANNELS) -> float:
    """Fraction of words read correctly by at least one channel."""
    ok = oracle_correct(per_channel_hyps, truth, channels)
    return sum(ok) / len(ok)


def oracle_hypotheses(per_channel_hyps: dict, truth: Sequence[str], channels=ALL_CHANNELS) -> list:
    """Per word, the channel hypothesis closest to the truth (first channel wins ties)."""
    _check_hyps(per_channel_hyps, truth, channels)
    out = []
    for i, t in enumerate(truth):
        out.append(min((per_channel_hyps[c][i] for c in channels), key=lambda h: levenshtein(t, h)))
    return out
