"""Cross-validated studies: channel table, feature table, degradation curves, runtime ratio.

All studies share one protocol. Sample i belongs to fold i mod k. Fixed-channel
recognizers are trained and tested per fold for all nine channels; their
hypotheses yield the channel labels. Per fold, a selector is trained on the
training images' labels, then one HMM set per selection mode on sequences
built with that selector. Curves reuse these models on degraded test images.
"""
from __future__ import annotations

import logging
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..chanfeat import FeatureKind
from ..config import NOISE_LEVELS, RESOLUTION_SCALES, PipelineConfig
from ..errors import ChanselError, DegenerateClassWarning, ValidationError, VarianceFloorHit
from ..hmmrec import Lexicon, LexiconDecoder
from ..imagecore import ALL_CHANNELS, SELECTABLE_CHANNELS, load_image
from ..mlselect import check_fold_coverage, fold_indices, labels_from_hypotheses, train_ova_svm
from ..phogfeat import phog_descriptors, sliding_windows, window_patch
from ..pipeline import (choose_channels, image_descriptor, parallel_map, prepare_channels,
                        train_hmm, window_descriptors, window_features)
from ..synthgen import Manifest, NoiseSpec, apply_noise, degrade_resolution, load_manifest, regime_of_column
from .metrics import multilabel_metrics, oracle_eval, oracle_hypotheses, positive_set, word_char_accuracy
from .report import write_csv, write_line_chart

log = logging.getLogger(__name__)

STUDIES = ("channel-table", "feature-table", "noise-curve", "resolution-curve", "runtime-ratio")
MODES = ("per-window", "per-image")


def parse_study(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    aliases = {"channeltable": "channel-table", "featuretable": "feature-table", "noisecurve": "noise-curve",
               "resolutioncurve": "resolution-curve", "runtimeratio": "runtime-ratio"}
    key = aliases.get(key.replace("-", ""), key)
    if key not in STUDIES and key != "all":
        raise ValidationError(f"unknown study {name!r}; valid: {', '.join(STUDIES)}, all")
    return key


# -- data -------------------------------------------------------------------


@dataclass
class StudyData:
    manifest: Manifest
    images: list
    channels: list
    feats: list
    lexicon: Lexicon
    charset: str
    kind: FeatureKind
    window_desc: list = field(default_factory=list)
    image_desc: np.ndarray | None = None

    @property
    def records(self):
        return self.manifest.records

    @property
    def truth(self) -> list:
        return [r.text for r in self.manifest.records]

    def __len__(self):
        return len(self.images)


def _prepare(args):
    path, spec, kind = args
    img = load_image(path)
    cs = prepare_channels(img, spec.height)
    feats = window_features(cs, spec)
    return img, cs, feats, window_descriptors(cs, feats.rects, kind), image_descriptor(cs, kind)


def load_study_data(corpus, cfg: PipelineConfig, lexicon=None) -> StudyData:
    manifest = corpus if isinstance(corpus, Manifest) else load_manifest(corpus)
    if lexicon is None:
        lex_path = os.path.join(manifest.root, "lexicon.txt")
        lexicon = Lexicon.load(lex_path) if os.path.exists(lex_path) else Lexicon(sorted({r.text for r in manifest.records}))
    elif not isinstance(lexicon, Lexicon):
        lexicon = Lexicon(lexicon)
    kind = cfg.kind
    jobs = [(manifest.image_path(r), cfg.window, kind) for r in manifest.records]
    out = parallel_map(_prepare, jobs, cfg.jobs)
    charset = "".join(c for c in cfg.charset if c in set("".join(lexicon.entries) + "".join(r.text for r in manifest.records)))
    return StudyData(manifest, [o[0] for o in out], [o[1] for o in out], [o[2] for o in out], lexicon,
                     charset, kind, [o[3] for o in out], np.vstack([o[4] for o in out]))


# -- models -----------------------------------------------------------------


@dataclass
class StudyModels:
    folds: list
    fixed_hyps: dict
    labels: np.ndarray
    selectors: list
    mode_models: dict
    mode_hyps: dict
    chosen: dict

    def fold_of(self, i: int) -> int:
        return i % len(self.folds)


def _quiet_train(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", VarianceFloorHit)
        warnings.simplefilter("ignore", DegenerateClassWarning)
        return fn(*args, **kw)


def _fold_hmm(data: StudyData, cfg, train, test, seqs) -> list:
    models = _quiet_train(train_hmm, [seqs[i] for i in train], [data.truth[i] for i in train], data.charset, cfg)
    dec = LexiconDecoder(models, data.lexicon)
    return models, [dec.top_word(seqs[i]) for i in test]


def selector_training_set(data: StudyData, labels: np.ndarray, idx, stride: int) -> tuple:
    X, Y = [], []
    for i in idx:
        rows = np.vstack([data.image_desc[i][None], data.window_desc[i][::stride]])
        X.append(rows)
        Y.append(np.repeat(labels[i][None], len(rows), axis=0))
    return np.vstack(X), np.vstack(Y)


def fixed_channel_hypotheses(data: StudyData, cfg: PipelineConfig, channels=ALL_CHANNELS) -> dict:
    """Cross-validated top-1 words of a recognizer trained on each single channel."""
    n = len(data)
    check_fold_coverage(data.truth, cfg.folds)
    folds = fold_indices(n, cfg.folds)
    fixed = {}
    for ch in channels:
        seqs = [f.channel(ch) for f in data.feats]
        hyp = [None] * n
        for train, test in folds:
            _, words = _fold_hmm(data, cfg, train, test, seqs)
            for i, w in zip(test, words):
                hyp[i] = w
        fixed[ch] = hyp
        log.info("fixed channel %s: word accuracy %.4f", ch, word_char_accuracy(data.truth, hyp)[0])
    return fixed


def train_study_models(data: StudyData, cfg: PipelineConfig) -> StudyModels:
    n = len(data)
    truth = data.truth
    fixed = fixed_channel_hypotheses(data, cfg)
    folds = fold_indices(n, cfg.folds)
    labels = labels_from_hypotheses(truth, fixed, SELECTABLE_CHANNELS)
    selectors = []
    for train, _ in folds:
        X, Y = selector_training_set(data, labels, train, cfg.selector_window_stride)
        selectors.append(_quiet_train(train_ova_svm, X, Y, C=cfg.svm_C, kind=data.kind, training_mode="per-window"))
    mode_models, mode_hyps, chosen = {}, {}, {}
    for mode in MODES:
        picks = [None] * n
        for f, (train, test) in enumerate(folds):
            fold_picks = {i: _choose(data, selectors[f], i, mode) for i in range(n)}
            for i in test:
                picks[i] = fold_picks[i]
            seqs = {i: data.feats[i].sequence(fold_picks[i]) for i in range(n)}
            models, words = _fold_hmm(data, cfg, train, test, seqs)
            mode_models.setdefault(mode, []).append(models)
            hyp = mode_hyps.setdefault(mode, [None] * n)
            for i, w in zip(test, words):
                hyp[i] = w
        chosen[mode] = picks
        log.info("%s selection: word accuracy %.4f", mode, word_char_accuracy(truth, mode_hyps[mode])[0])
    return StudyModels(folds, fixed, labels, selectors, mode_models, mode_hyps, chosen)


def _choose(data: StudyData, selector, i: int, mode: str) -> tuple:
    return choose_channels(selector, data.channels[i], data.feats[i].rects, mode, data.kind,
                           window_desc=data.window_desc[i], image_desc=data.image_desc[i])


# -- audits -----------------------------------------------------------------


def window_targets(data: StudyData, i: int) -> list:
    rec = data.records[i]
    return [regime_of_column(rec, r.x + r.w / 2.0) for r in data.feats[i].rects]


def window_match(data: StudyData, models: StudyModels, mode: str = "per-window", audited_only: bool = True) -> float:
    """Fraction of windows whose selected channel is the generation-time target channel."""
    hit = tot = 0
    for i, rec in enumerate(data.records):
        if audited_only and rec.mixed:
            continue
        for ch, tg in zip(models.chosen[mode][i], window_targets(data, i)):
            hit += ch == tg
            tot += 1
    return hit / tot if tot else float("nan")


def selector_label_metrics(data: StudyData, models: StudyModels):
    """Multi-label metrics of the selector's whole-image predictions on held-out folds."""
    truth, pred = [], []
    for f, (_, test) in enumerate(models.folds):
        bits, _ = models.selectors[f].predict(data.image_desc[test])
        for i, b in zip(test, bits):
            truth.append(models.labels[i])
            pred.append(b)
    return multilabel_metrics(truth, pred)


# -- studies ----------------------------------------------------------------


def channel_table(data: StudyData, models: StudyModels, out_dir: str) -> list:
    truth = data.truth
    rows = []
    for ch in ALL_CHANNELS:
        rows.append([ch, *word_char_accuracy(truth, models.fixed_hyps[ch]), len(truth)])
    oracle_char = word_char_accuracy(truth, oracle_hypotheses(models.fixed_hyps, truth))[1]
    rows.append(["Oracle", oracle_eval(models.fixed_hyps, truth), oracle_char, len(truth)])
    rows.append(["Proposed", *word_char_accuracy(truth, models.mode_hyps["per-window"]), len(truth)])
    paths = [write_csv(os.path.join(out_dir, "channel_table.csv"), ["method", "word_acc", "char_acc", "n"], rows)]

    ml = selector_label_metrics(data, models)
    mode_rows = []
    for mode in MODES:
        w, c = word_char_accuracy(truth, models.mode_hyps[mode])
        mode_rows.append([mode, w, c, window_match(data, models, mode, True), window_match(data, models, mode, False)])
    paths.append(write_csv(os.path.join(out_dir, "selection_modes.csv"),
                           ["mode", "word_acc", "char_acc", "window_target_match", "window_target_match_all"],
                           mode_rows))
    paths.append(write_csv(os.path.join(out_dir, "selector_metrics.csv"),
                           ["feature_kind", "accuracy", "precision", "recall", "n"],
                           [[data.kind.value, ml.accuracy, ml.precision, ml.recall, ml.n]]))
    audit = []
    for i, rec in enumerate(data.records):
        tg = window_targets(data, i)
        pw = models.chosen["per-window"][i]
        audit.append([rec.id, rec.text, rec.target_channel,
                      "+".join(c for c in SELECTABLE_CHANNELS if c in positive_set(models.labels[i])) or "-",
                      models.chosen["per-image"][i][0],
                      sum(a == b for a, b in zip(pw, tg)) / len(tg),
                      models.mode_hyps["per-window"][i], models.mode_hyps["per-image"][i]])
    paths.append(write_csv(os.path.join(out_dir, "selection_audit.csv"),
                           ["id", "text", "target_channel", "labels", "per_image_choice",
                            "per_window_target_match", "per_window_hyp", "per_image_hyp"], audit))
    return paths


def feature_table(data: StudyData, models: StudyModels, cfg: PipelineConfig, out_dir: str) -> list:
    """Selector quality per feature family, on the same labels and folds."""
    rows = []
    # Gabor/LBP/LPQ are costly per window; every family sees the same thinned windows.
    stride = 2 * cfg.selector_window_stride
    rects = [f.rects[::stride] for f in data.feats]
    for kind in FeatureKind:
        if kind is data.kind:
            wdesc = [d[::stride] for d in data.window_desc]
            idesc = data.image_desc
        else:
            wdesc = [window_descriptors(cs, r, kind) for cs, r in zip(data.channels, rects)]
            idesc = np.vstack([image_descriptor(cs, kind) for cs in data.channels])
        truth, pred = [], []
        hit = tot = 0
        for train, test in models.folds:
            X = np.vstack([np.vstack([idesc[i][None], wdesc[i]]) for i in train])
            Y = np.vstack([np.repeat(models.labels[i][None], 1 + len(wdesc[i]), axis=0) for i in train])
            sel = _quiet_train(train_ova_svm, X, Y, C=cfg.svm_C, kind=kind)
            bits, _ = sel.predict(idesc[test])
            truth.extend(models.labels[test])
            pred.extend(bits)
            for i in test:
                if data.records[i].mixed:
                    continue
                for k, r in zip(np.atleast_1d(sel.select_index(wdesc[i])), rects[i]):
                    hit += sel.channel_order[int(k)] == regime_of_column(data.records[i], r.x + r.w / 2.0)
                    tot += 1
        ml = multilabel_metrics(truth, pred)
        rows.append([kind.value, ml.accuracy, ml.precision, ml.recall, hit / tot if tot else float("nan"), ml.n])
    return [write_csv(os.path.join(out_dir, "feature_table.csv"),
                      ["feature_kind", "accuracy", "precision", "recall", "window_target_match", "n"], rows)]


def _recognize_degraded(data: StudyData, models: StudyModels, cfg, transform) -> tuple:
    """Per-window recognition of every held-out image after ``transform(img, record)``."""
    hyps = [""] * len(data)
    errors = 0
    decoders = [LexiconDecoder(m, data.lexicon) for m in models.mode_models["per-window"]]
    for f, (_, test) in enumerate(models.folds):
        sel = models.selectors[f]
        for i in test:
            try:
                img = transform(data.images[i], data.records[i])
                cs = prepare_channels(img, cfg.window.height)
                rects = sliding_windows(cs.width, cs.height, cfg.window)
                chosen = choose_channels(sel, cs, rects, "per-window", data.kind)
                seq = phog_descriptors(np.stack([window_patch(cs[c], r) for c, r in zip(chosen, rects)]))
                hyps[i] = decoders[f].top_word(seq)
            except ChanselError as exc:
                log.warning("image %s failed: %s", data.records[i].id, exc)
                errors += 1
    w, c = word_char_accuracy(data.truth, hyps)
    return w, c, errors


def noise_curve(data, models, cfg, out_dir, kind: str = "gaussian", levels=NOISE_LEVELS) -> list:
    rows = []
    for lvl in levels:
        spec = NoiseSpec(kind, lvl)
        w, c, err = _recognize_degraded(data, models, cfg, lambda img, rec: apply_noise(img, spec, rec.seed))
        rows.append([lvl, w, c, err])
    paths = [write_csv(os.path.join(out_dir, "noise_curve.csv"), ["noise_level", "word_acc", "char_acc", "errors"], rows)]
    paths.append(write_line_chart(os.path.join(out_dir, "noise_curve.svg"), [r[0] for r in rows],
                                  {"word_acc": [r[1] for r in rows], "char_acc": [r[2] for r in rows]},
                                  xlabel="noise_level", ylabel="accuracy", title=f"{kind} noise"))
    return paths


def resolution_curve(data, models, cfg, out_dir, scales=RESOLUTION_SCALES) -> list:
    rows = []
    for s in scales:
        w, c, err = _recognize_degraded(data, models, cfg, lambda img, rec: degrade_resolution(img, s, cfg.window.height))
        rows.append([s, w, c, err])
    paths = [write_csv(os.path.join(out_dir, "resolution_curve.csv"), ["scale", "word_acc", "char_acc", "errors"], rows)]
    paths.append(write_line_chart(os.path.join(out_dir, "resolution_curve.svg"), [r[0] for r in rows],
                                  {"word_acc": [r[1] for r in rows], "char_acc": [r[2] for r in rows]},
                                  xlabel="scale", ylabel="accuracy", title="resolution", invert_x=True))
    return paths


def measure_runtime(data: StudyData, models: StudyModels, cfg, fixed_channel: str = "Y", repeats: int = 3) -> dict:
    """Mean per-word seconds from raw image to top-1 word, with and without per-window selection."""
    decoders = [LexiconDecoder(m, data.lexicon) for m in models.mode_models["per-window"]]
    spec = cfg.window
    order = [(f, i) for f, (_, test) in enumerate(models.folds) for i in test]

    def run(mode):
        words = []
        t0 = time.perf_counter()
        for f, i in order:
            cs = prepare_channels(data.images[i], spec.height)
            rects = sliding_windows(cs.width, cs.height, spec)
            if mode == "fixed":
                chosen = (fixed_channel,) * len(rects)
            else:
                chosen = choose_channels(models.selectors[f], cs, rects, "per-window", data.kind)
            seq = phog_descriptors(np.stack([window_patch(cs[c], r) for c, r in zip(chosen, rects)]))
            words.append(decoders[f].top_word(seq))
        return time.perf_counter() - t0, words

    best = {"fixed": np.inf, "per-window": np.inf}
    words = {}
    for _ in range(repeats):
        for mode in ("fixed", "per-window"):
            dt, words[mode] = run(mode)
            best[mode] = min(best[mode], dt)
    n = len(order)
    truth = [data.truth[i] for _, i in order]
    return {"n": n, "fixed_seconds": best["fixed"] / n, "selection_seconds": best["per-window"] / n,
            "ratio": best["per-window"] / best["fixed"],
            "fixed_word_acc": word_char_accuracy(truth, words["fixed"])[0],
            "selection_word_acc": word_char_accuracy(truth, words["per-window"])[0]}


def runtime_ratio(data, models, cfg, out_dir, fixed_channel: str = "Y") -> list:
    r = measure_runtime(data, models, cfg, fixed_channel)
    det = write_csv(os.path.join(out_dir, "runtime_ratio.csv"), ["mode", "channel", "words", "word_acc"],
                    [["fixed", fixed_channel, r["n"], r["fixed_word_acc"]],
                     ["per-window", "selected", r["n"], r["selection_word_acc"]]])
    # Wall-clock figures vary run to run, so they live in their own file.
    timing = write_csv(os.path.join(out_dir, "runtime_timing.csv"),
                       ["fixed_s_per_word", "selection_s_per_word", "ratio"],
                       [[f"{r['fixed_seconds']:.6f}", f"{r['selection_seconds']:.6f}", r["ratio"]]])
    return [det, timing]


def run_study(corpus, models: StudyModels | None, study: str, out_dir: str,
              cfg: PipelineConfig | None = None, data: StudyData | None = None) -> list:
    """Run one study (or ``all``) and return the written report paths.

    ``models`` may be None, in which case the cross-validated models are trained first.
    """
    cfg = cfg or PipelineConfig()
    study = parse_study(study)
    os.makedirs(out_dir, exist_ok=True)
    data = data or load_study_data(corpus, cfg)
    models = models or train_study_models(data, cfg)
    todo = STUDIES if study == "all" else (study,)
    paths = []
    for s in todo:
        if s == "channel-table":
            paths += channel_table(data, models, out_dir)
        elif s == "feature-table":
            paths += feature_table(data, models, cfg, out_dir)
        elif s == "noise-curve":
            paths += noise_curve(data, models, cfg, out_dir)
        elif s == "resolution-curve":
            paths += resolution_curve(data, models, cfg, out_dir)
        elif s == "runtime-ratio":
            paths += runtime_ratio(data, models, cfg, out_dir)
    return paths
