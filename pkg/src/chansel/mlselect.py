"""Multi-label color channel selection with one-vs-all linear SVMs.

Labels are 8-entry +1/-1 vectors over ``SELECTABLE_CHANNELS``. Each binary
classifier solves the soft-margin problem with an unregularized bias through
SMO on the dual.
"""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .chanfeat import FeatureKind
from .errors import (DegenerateClassWarning, DimensionMismatch, FormatError, InsufficientData,
                     LengthMismatch, NonFiniteFeature, ValidationError)
from .imagecore import SELECTABLE_CHANNELS

MODEL_FORMAT = "chansel-selector"
MODEL_VERSION = 1
N_CLASSES = len(SELECTABLE_CHANNELS)


def as_label_vector(bits) -> np.ndarray:
    v = np.asarray(bits, dtype=np.int8)
    if v.shape != (N_CLASSES,) or not np.all(np.abs(v) == 1):
        raise ValidationError(f"label vector must be {N_CLASSES} entries of +1/-1, got {bits!r}")
    return v


@dataclass(frozen=True)
class LabeledCorpusEntry:
    sample_id: str
    descriptor: np.ndarray
    labels: np.ndarray
    kind: FeatureKind = FeatureKind.WAVELET


# -- binary soft-margin SVM -------------------------------------------------


class BinarySVM(NamedTuple):
    w: np.ndarray
    b: float
    alpha: np.ndarray
    iterations: int
    converged: bool


def svm_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, C: float) -> float:
    """Primal objective 0.5 |w|^2 + C * sum of hinge slacks."""
    slack = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return 0.5 * float(w @ w) + C * float(slack.sum())


def train_binary_svm(X: np.ndarray, y: np.ndarray, C: float = 1.0, tol: float = 1e-4,
                     max_iter: int | None = None, gram_limit: int = 3000) -> BinarySVM:
    """Soft-margin linear SVM by SMO with second-order working set selection.

    ``y`` must contain both classes. ``tol`` bounds the maximal KKT violation
    m(alpha) - M(alpha) at termination.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if max_iter is None:
        max_iter = max(10_000_000 // max(n, 1), 100 * n, 1000)
    gram = X @ X.T if n <= gram_limit else None
    diag = np.einsum("ij,ij->i", X, X)

    def kcol(i):
        return gram[i] if gram is not None else X @ X[i]

    alpha = np.zeros(n)
    grad = -np.ones(n)
    tau = 1e-12
    it = 0
    converged = False
    while it < max_iter:
        yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(yg[up])])
        gmax = yg[i]
        gmin = yg[low].min()
        if gmax - gmin < tol:
            converged = True
            break
        ki = kcol(i)
        cand = low & (yg < gmax)
        bdiff = gmax - yg[cand]
        a = diag[i] + diag[cand] - 2.0 * ki[cand]
        a = np.where(a > 0, a, tau)
        j = int(np.flatnonzero(cand)[np.argmin(-(bdiff * bdiff) / a)])
        kj = kcol(j)
        yi, yj = y[i], y[j]
        qij = yi * yj * ki[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if yi != yj:
            quad = max(diag[i] + diag[j] + 2.0 * qij, tau)
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            else:
                if aj > C:
                    aj, ai = C, C + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * qij, tau)
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            else:
                if aj < 0:
                    aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            else:
                if ai < 0:
                    ai, aj = 0.0, total
        dai, daj = ai - ai_old, aj - aj_old
        alpha[i], alpha[j] = ai, aj
        grad += y * (yi * dai * ki + yj * daj * kj)
        it += 1

    w = X.T @ (alpha * y)
    yg = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(yg[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        hi = yg[up].max() if up.any() else yg.max()
        lo = yg[low].min() if low.any() else yg.min()
        b = float((hi + lo) / 2.0)
    return BinarySVM(w, b, alpha, it, converged)


# -- one-vs-all selector ----------------------------------------------------


@dataclass(frozen=True)
class SelectorModel:
    """Eight linear classifiers f_k(x) = W_k . x + b_k over a fixed channel order."""

    weights: np.ndarray
    biases: np.ndarray
    kind: FeatureKind
    C: float = 1.0
    channel_order: tuple = SELECTABLE_CHANNELS
    degenerate: tuple = (False,) * N_CLASSES
    training_mode: str = "per-window"
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def dims(self) -> int:
        return self.weights.shape[1]

    def decision(self, x) -> np.ndarray:
        """f_k for a descriptor (returns 8 values) or a matrix of descriptors (n x 8)."""
        x = getattr(x, "values", x)
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dims:
            raise DimensionMismatch(f"descriptor length {x.shape[-1]} != model dims {self.dims}")
        return x @ self.weights.T + self.biases

    def predict(self, x) -> tuple:
        """(label bits, confidences); sign(0) is -1."""
        f = self.decision(x)
        bits = np.where(f > 0, 1, -1).astype(np.int8)
        return bits, np.abs(f)

    def select_index(self, x) -> np.ndarray | int:
        return select_from_scores(self.decision(x))

    def select_channel(self, x) -> str:
        idx = self.select_index(x)
        if np.ndim(idx):
            raise ValidationError("select_channel takes one descriptor; use select_index for batches")
        return self.channel_order[int(idx)]


def select_from_scores(f: np.ndarray):
    """Channel index per the highest positive score; argmax of all scores if none is positive.

    Ties resolve to the lowest index. Works on one score vector or a matrix of rows.
    """
    f = np.asarray(f, dtype=np.float64)
    pos = np.where(f > 0, f, -np.inf)
    any_pos = (f > 0).any(axis=-1)
    return np.where(any_pos, np.argmax(pos, axis=-1), np.argmax(f, axis=-1))


def predict(model: SelectorModel, x) -> tuple:
    return model.predict(x)


def select_channel(model: SelectorModel, x) -> str:
    return model.select_channel(x)


def train_ova_svm(X, Y, C: float = 1.0, kind=FeatureKind.WAVELET, tol: float = 1e-4,
                  training_mode: str = "per-window") -> SelectorModel:
    """Train the eight one-vs-all classifiers.

    ``X`` is (n, d) descriptors, ``Y`` is (n, 8) +1/-1 labels; a list of
    :class:`LabeledCorpusEntry` is accepted in place of ``X`` (``Y`` then None).
    A class whose labels are all equal gets the constant classifier f = +/-1
    and a :class:`DegenerateClassWarning`.
    """
    if Y is None:
        entries = list(X)
        if not entries:
            raise InsufficientData("no training entries")
        kinds = {FeatureKind.parse(e.kind) for e in entries}
        if len(kinds) != 1:
            raise ValidationError(f"entries mix feature kinds {sorted(k.value for k in kinds)}")
        kind = kinds.pop()
        X = np.vstack([getattr(e.descriptor, "values", e.descriptor) for e in entries])
        Y = np.vstack([as_label_vector(e.labels) for e in entries])
    kind = FeatureKind.parse(kind)
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    if C <= 0:
        raise ValidationError(f"C must be positive, got {C}")
    if X.ndim != 2 or Y.shape != (X.shape[0], N_CLASSES):
        raise DimensionMismatch(f"X {X.shape} and Y {Y.shape} are inconsistent")
    if X.shape[0] == 0:
        raise InsufficientData("no training rows")
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("training descriptors contain NaN or inf")
    if not np.all(np.abs(Y) == 1):
        raise ValidationError("labels must be +1/-1")
    d = X.shape[1]
    W = np.zeros((N_CLASSES, d))
    b = np.zeros(N_CLASSES)
    degenerate = []
    for k in range(N_CLASSES):
        yk = Y[:, k].astype(np.float64)
        if np.all(yk == yk[0]):
            warnings.warn(f"class {SELECTABLE_CHANNELS[k]} has only {int(yk[0]):+d} labels; "
                          "using a constant classifier", DegenerateClassWarning, stacklevel=2)
            b[k] = yk[0]
            degenerate.append(True)
            continue
        res = train_binary_svm(X, yk, C=C, tol=tol)
        W[k], b[k] = res.w, res.b
        degenerate.append(False)
    return SelectorModel(W, b, kind, float(C), SELECTABLE_CHANNELS, tuple(degenerate), training_mode)


# -- automatic labeling -----------------------------------------------------


class AutoLabels(NamedTuple):
    labels: np.ndarray
    hypotheses: dict


def fold_indices(n: int, folds: int) -> list:
    """Sample i goes to fold i mod folds; returns [(train_idx, test_idx), ...]."""
    if folds < 2:
        raise ValidationError(f"need at least 2 folds, got {folds}")
    ids = np.arange(n)
    return [(ids[ids % folds != f], ids[ids % folds == f]) for f in range(folds)]


def labels_from_hypotheses(truth: Sequence[str], hypotheses: dict,
                           channels: Sequence[str] = SELECTABLE_CHANNELS) -> np.ndarray:
    """+1 where a channel's hypothesis equals the ground truth exactly (case-sensitive)."""
    out = np.full((len(truth), len(channels)), -1, dtype=np.int8)
    for k, ch in enumerate(channels):
        hyp = hypotheses[ch]
        if len(hyp) != len(truth):
            raise LengthMismatch(f"channel {ch}: {len(hyp)} hypotheses for {len(truth)} words")
        for i, (t, h) in enumerate(zip(truth, hyp)):
            if t == h:
                out[i, k] = 1
    return out


def check_fold_coverage(truth: Sequence[str], folds: int) -> None:
    chars = set("".join(truth))
    for f, (train, _) in enumerate(fold_indices(len(truth), folds)):
        seen = set("".join(truth[i] for i in train))
        missing = chars - seen
        if missing:
            raise InsufficientData(f"fold {f} has no training samples for {''.join(sorted(missing))!r}")


def auto_label(truth: Sequence[str], recognize_fold: Callable, folds: int = 4,
               channels: Sequence[str] = SELECTABLE_CHANNELS) -> AutoLabels:
    """Label each word by which fixed-channel recognizers read it correctly under k-fold CV.

    ``recognize_fold(channel, train_idx, test_idx)`` trains on ``train_idx``
    and returns one hypothesis string per entry of ``test_idx``.
    """
    truth = list(truth)
    check_fold_coverage(truth, folds)
    hyps = {}
    for ch in channels:
        out = [None] * len(truth)
        for train, test in fold_indices(len(truth), folds):
            words = recognize_fold(ch, train, test)
            if len(words) != len(test):
                raise LengthMismatch(f"recognizer returned {len(words)} words for {len(test)} samples")
            for i, w in zip(test, words):
                out[i] = w
        hyps[ch] = out
    return AutoLabels(labels_from_hypotheses(truth, hyps, channels), hyps)


# -- persistence ------------------------------------------------------------


def save_selector(model: SelectorModel, path: str | os.PathLike) -> None:
    """Versioned JSON text; floats are written with round-trip (17 significant digit) precision."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_kind": model.kind.value,
        "dims": int(model.dims),
        "channel_order": list(model.channel_order),
        "C": float(model.C),
        "training_mode": model.training_mode,
        "classifiers": [
            {"channel": ch, "bias": float(model.biases[k]), "degenerate": bool(model.degenerate[k]),
             "weights": [float(v) for v in model.weights[k]]}
            for k, ch in enumerate(model.channel_order)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_selector(path: str | os.PathLike) -> SelectorModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a selector model ({exc})") from exc
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported selector format/version")
    order = tuple(doc["channel_order"])
    if order != SELECTABLE_CHANNELS:
        raise FormatError(f"{path}: channel order {order} differs from {SELECTABLE_CHANNELS}")
    kind = FeatureKind.parse(doc["feature_kind"])
    recs = doc["classifiers"]
    W = np.array([r["weights"] for r in recs], dtype=np.float64)
    if W.shape != (N_CLASSES, doc["dims"]) or doc["dims"] != kind.descriptor_len:
        raise FormatError(f"{path}: weight shape {W.shape} inconsistent with header")
    b = np.array([r["bias"] for r in recs], dtype=np.float64)
    return SelectorModel(W, b, kind, float(doc["C"]), order,
                         tuple(bool(r.get("degenerate", False)) for r in recs),
                         doc.get("training_mode", "per-window"))


LABELS_FORMAT = "chansel-labels/1"


class LabelFile(NamedTuple):
    ids: tuple
    texts: tuple
    labels: np.ndarray
    corpus: str


def save_labels(path: str | os.PathLike, ids: Sequence[str], texts: Sequence[str], labels: np.ndarray,
                corpus: str = "") -> None:
    """TSV: header line, column row, then one +1/-1 entry per selectable channel."""
    labels = np.asarray(labels)
    if labels.shape != (len(ids), N_CLASSES) or len(texts) != len(ids):
        raise LengthMismatch(f"{len(ids)} ids, {len(texts)} texts, labels {labels.shape}")
    lines = [f"# {LABELS_FORMAT}\tcorpus={corpus}", "\t".join(("id", "text") + SELECTABLE_CHANNELS)]
    for rid, text, row in zip(ids, texts, labels):
        lines.append("\t".join([rid, text] + [f"{int(v):+d}" for v in row]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_labels(path: str | os.PathLike) -> LabelFile:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read labels {path}: {exc}") from exc
    if len(lines) < 2 or not lines[0].startswith(f"# {LABELS_FORMAT}"):
        raise FormatError(f"{path}: missing channel label header")
    head = dict(f.split("=", 1) for f in lines[0].split("\t")[1:] if "=" in f)
    if tuple(lines[1].split("\t")) != ("id", "text") + SELECTABLE_CHANNELS:
        raise FormatError(f"{path}: unexpected label columns")
    ids, texts, rows = [], [], []
    for n, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        f = line.split("\t")
        try:
            rows.append(as_label_vector([int(v) for v in f[2:]]))
        except (ValueError, ValidationError) as exc:
            raise FormatError(f"{path}:{n}: bad label row ({exc})") from exc
        ids.append(f[0])
        texts.append(f[1])
    return LabelFile(tuple(ids), tuple(texts), np.array(rows, dtype=np.int8).reshape(-1, N_CLASSES),
                     head.get("corpus", ""))
