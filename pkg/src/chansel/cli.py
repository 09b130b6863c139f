"""Command line: corpus generation, channel labeling, training, recognition and studies.

Exit status is 0 on success, 1 when flags or inputs fail validation (nothing is
written in that case) and 2 when a run fails part way.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings

import numpy as np

from .config import OUTPUT_ENV, PRESETS, PipelineConfig, load_config, output_root, preset
from .errors import (ChanselError, EmptyLexicon, FormatError, LevelOutOfRange, UnknownCharacter, UnknownGlyph,
                     ValidationError)
from .imagecore import SELECTABLE_CHANNELS

log = logging.getLogger("chansel")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
INVALID_INPUT = (ValidationError, FormatError, LevelOutOfRange, UnknownCharacter, UnknownGlyph, EmptyLexicon)


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("pipeline")
    g.add_argument("--preset", choices=sorted(PRESETS), default="paper",
                   help="parameter preset (desk: 3 states, 2 gaussians, charset A-J, lexicon 50)")
    g.add_argument("--config", help="JSON config file overlaid on the preset")
    g.add_argument("--seed", type=int, help="seed for every random draw")
    g.add_argument("--jobs", type=int, help="worker processes for per-image work")
    g.add_argument("--states", type=int, help="HMM states per character")
    g.add_argument("--gaussians", type=int, help="mixture components per state")
    g.add_argument("--iters", type=int, help="EM iterations per mixture stage")
    g.add_argument("--folds", type=int, help="cross-validation folds")
    g.add_argument("--dry-run", action="store_true", help="validate flags and inputs, write nothing")
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="chansel", description="Scene text word recognition with color channel selection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-corpus", parents=[common], help="render a seeded synthetic word corpus")
    p.add_argument("--out", default="corpus", help="corpus directory")
    p.add_argument("--count", type=int, help="number of word images")
    p.add_argument("--lexicon", help="word list to draw from (default: random words over the charset)")
    p.add_argument("--lexicon-size", type=int, help="size of the generated word list")
    p.add_argument("--charset", help="characters of the generated word list")
    p.add_argument("--regimes", help="comma-separated contrast regimes, e.g. G,Y,Cr,Cb")
    p.add_argument("--mixed-fraction", type=float, help="share of images split between two regimes")
    p.add_argument("--noise", help="degradation KIND:LEVEL (gaussian, saltpepper, speckle) or none")
    p.add_argument("--resolution-scale", type=float, default=1.0, help="downsampling factor in (0, 1]")

    p = sub.add_parser("label-channels", parents=[common], help="label each word by the channels that read it")
    p.add_argument("--corpus", help="corpus directory or manifest")
    p.add_argument("--lexicon", help="decoding lexicon (default: the corpus lexicon)")
    p.add_argument("--out", default="labels.tsv", help="label file")

    p = sub.add_parser("train-selector", parents=[common], help="train the one-vs-all channel selector")
    p.add_argument("--labels", required=True, help="label file from label-channels")
    p.add_argument("--corpus", help="corpus directory (default: the one recorded in the label file)")
    p.add_argument("--features", help="feature family: wavelet, gabor, lbp, lpq, stats")
    p.add_argument("--C", dest="svm_C", type=float, help="SVM soft-margin constant")
    p.add_argument("--training-mode", choices=("per-window", "per-image"), default="per-window",
                   help="per-window adds every window's context patch as a training row")
    p.add_argument("--out", default="selector.json", help="selector model file")

    p = sub.add_parser("train-hmm", parents=[common], help="train character HMMs on a corpus")
    p.add_argument("--corpus", help="corpus directory or manifest")
    p.add_argument("--mode", help="fixed:<channel>, per-window or per-image")
    p.add_argument("--selector", help="selector model (needed unless the mode is fixed)")
    p.add_argument("--out", default="models.hmm", help="HMM model file")

    p = sub.add_parser("recognize", parents=[common], help="recognize one word image")
    p.add_argument("--image", required=True, help="PNG or PPM word image")
    p.add_argument("--hmm", required=True, help="HMM model file")
    p.add_argument("--lexicon", required=True, help="word list, one per line")
    p.add_argument("--mode", help="fixed:<channel>, per-window or per-image")
    p.add_argument("--selector", help="selector model (needed unless the mode is fixed)")
    p.add_argument("--top", type=int, default=1, help="number of ranked words to print")

    p = sub.add_parser("study", parents=[common], help="cross-validated studies with CSV and SVG reports")
    p.add_argument("--corpus", help="corpus directory or manifest")
    p.add_argument("--study", default="all", help="channel-table, feature-table, noise-curve, "
                                                  "resolution-curve, runtime-ratio or all")
    p.add_argument("--lexicon", help="decoding lexicon (default: the corpus lexicon)")
    p.add_argument("--features", help="selector feature family")
    p.add_argument("--out", default="reports", help="report directory")
    return parser


# -- helpers ----------------------------------------------------------------


def make_config(args) -> PipelineConfig:
    cfg = preset(args.preset)
    if args.config:
        cfg = load_config(args.config, cfg)
    over = {k: getattr(args, k, None) for k in ("seed", "jobs", "states", "gaussians", "iters", "folds", "svm_C")}
    over["feature_kind"] = getattr(args, "features", None)
    over["selection_mode"] = getattr(args, "mode", None)
    over["corpus"] = getattr(args, "corpus", None)
    over["lexicon_size"] = getattr(args, "lexicon_size", None)
    over["corpus_count"] = getattr(args, "count", None)
    over["charset"] = getattr(args, "charset", None)
    over["mixed_fraction"] = getattr(args, "mixed_fraction", None)
    return cfg.with_overrides(**over)


def out_path(path: str) -> str:
    """Relative output paths land under the output-directory override when it is set."""
    if os.path.isabs(path) or not os.environ.get(OUTPUT_ENV):
        return path
    return os.path.join(output_root(), path)


def _need_file(path: str, what: str) -> None:
    if not os.path.isfile(path):
        raise ValidationError(f"{what} not found: {path}")


def _lexicon(path):
    from .hmmrec import Lexicon
    if path is None:
        return None
    _need_file(path, "lexicon")
    return Lexicon.load(path)


def _selector_for(mode, path):
    from .mlselect import load_selector
    if mode.name == "fixed":
        return None
    if not path:
        raise ValidationError(f"--selector is required for mode {mode}")
    _need_file(path, "selector model")
    return load_selector(path)


def _mkparent(path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


# -- subcommands ------------------------------------------------------------


def cmd_gen_corpus(args, cfg) -> int:
    from .synthgen import DEFAULT_REGIMES, CorpusSpec, gen_corpus, make_lexicon
    if args.lexicon:
        words = list(_lexicon(args.lexicon))
    else:
        words = make_lexicon(cfg.charset, cfg.lexicon_size, cfg.seed)
    regimes = tuple(r.strip() for r in args.regimes.split(",")) if args.regimes else DEFAULT_REGIMES
    charset = "".join(sorted(set(cfg.charset) | set("".join(words))))
    spec = CorpusSpec(seed=cfg.seed, lexicon=tuple(words), count=cfg.corpus_count, charset=charset,
                      regimes=regimes, mixed_fraction=cfg.mixed_fraction, noise=args.noise,
                      resolution_scale=args.resolution_scale)
    spec.validate()
    out = out_path(args.out)
    if args.dry_run:
        print(f"would write {spec.count} images to {out}")
        return EXIT_OK
    m = gen_corpus(spec, out)
    print(f"wrote {len(m)} images to {out} (spec_sha256={m.spec_hash})")
    return EXIT_OK


def _study_data(args, cfg, corpus=None):
    from .evalkit.studies import load_study_data
    from .mlselect import check_fold_coverage
    from .synthgen import load_manifest
    corpus = corpus or cfg.corpus
    manifest = load_manifest(corpus)
    check_fold_coverage([r.text for r in manifest.records], cfg.folds)
    lexicon = _lexicon(getattr(args, "lexicon", None))
    if args.dry_run:
        return manifest, None
    return manifest, load_study_data(manifest, cfg, lexicon)


def cmd_label_channels(args, cfg) -> int:
    from .evalkit.studies import fixed_channel_hypotheses
    from .mlselect import labels_from_hypotheses, save_labels
    manifest, data = _study_data(args, cfg)
    out = out_path(args.out)
    if data is None:
        print(f"would label {len(manifest)} images into {out}")
        return EXIT_OK
    hyps = fixed_channel_hypotheses(data, cfg, SELECTABLE_CHANNELS)
    labels = labels_from_hypotheses(data.truth, hyps, SELECTABLE_CHANNELS)
    _mkparent(out)
    save_labels(out, [r.id for r in data.records], data.truth, labels, os.path.abspath(manifest.root))
    counts = (labels > 0).sum(axis=0)
    print("channel\tpositives")
    for ch, c in zip(SELECTABLE_CHANNELS, counts):
        print(f"{ch}\t{int(c)}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_train_selector(args, cfg) -> int:
    from .evalkit.studies import _quiet_train, selector_training_set
    from .mlselect import load_labels, save_selector, train_ova_svm
    _need_file(args.labels, "label file")
    lab = load_labels(args.labels)
    corpus = args.corpus or lab.corpus or cfg.corpus
    manifest, data = _study_data(args, cfg, corpus)
    ids = [r.id for r in manifest.records]
    if list(lab.ids) != ids:
        raise ValidationError(f"label file ids do not match the corpus at {corpus}")
    out = out_path(args.out)
    if data is None:
        print(f"would train a {cfg.feature_kind} selector on {len(ids)} images into {out}")
        return EXIT_OK
    stride = cfg.selector_window_stride
    if args.training_mode == "per-window":
        X, Y = selector_training_set(data, lab.labels, range(len(data)), stride)
    else:
        X, Y = data.image_desc, lab.labels
    model = _quiet_train(train_ova_svm, X, Y, C=cfg.svm_C, kind=cfg.kind, training_mode=args.training_mode)
    _mkparent(out)
    save_selector(model, out)
    print(f"wrote {out} (feature_kind={model.kind.value}, rows={len(X)}, C={model.C})")
    return EXIT_OK


def cmd_train_hmm(args, cfg) -> int:
    from .hmmrec import save_models
    from .phogfeat import SelectionMode
    from .pipeline import choose_channels, train_hmm
    mode = SelectionMode.parse(cfg.selection_mode)
    selector = _selector_for(mode, args.selector)
    if selector is not None:
        cfg = cfg.with_overrides(feature_kind=selector.kind.value)
    manifest, data = _study_data(args, cfg)
    missing = sorted(set("".join(r.text for r in manifest.records)) - set(cfg.charset))
    if missing:
        raise ValidationError(f"corpus uses characters outside the charset: {''.join(missing)}")
    out = out_path(args.out)
    if data is None:
        print(f"would train {mode} HMMs on {len(manifest)} images into {out}")
        return EXIT_OK
    seqs = []
    for i, f in enumerate(data.feats):
        chosen = choose_channels(selector, data.channels[i], f.rects, mode, data.kind,
                                 window_desc=data.window_desc[i], image_desc=data.image_desc[i])
        seqs.append(f.sequence(chosen))
    models = train_hmm(seqs, data.truth, data.charset, cfg)
    _mkparent(out)
    save_models(models, out)
    print(f"wrote {out} (charset={models.charset}, states={models.n_states}, gaussians={models.n_gaussians})")
    return EXIT_OK


def cmd_recognize(args, cfg) -> int:
    from .hmmrec import load_models
    from .phogfeat import SelectionMode
    from .pipeline import Recognizer, load_channels
    mode = SelectionMode.parse(cfg.selection_mode)
    if args.top < 1:
        raise ValidationError("--top must be >= 1")
    selector = _selector_for(mode, args.selector)
    _need_file(args.image, "image")
    _need_file(args.hmm, "HMM model")
    lexicon = _lexicon(args.lexicon)
    models = load_models(args.hmm)
    lexicon.check(models.charset)
    if args.dry_run:
        print(f"would recognize {args.image} with {mode}")
        return EXIT_OK
    rec = Recognizer(models, lexicon, selector, mode, cfg.window)
    result, _ = rec.recognize(load_channels(args.image, cfg.window_height))
    for word, score in result.hypotheses[:args.top]:
        print(f"{word}\t{score:.4f}")
    return EXIT_OK


def cmd_study(args, cfg) -> int:
    from .evalkit.studies import parse_study, run_study
    study = parse_study(args.study)
    manifest, data = _study_data(args, cfg)
    out = out_path(args.out)
    if data is None:
        print(f"would run {study} on {len(manifest)} images into {out}")
        return EXIT_OK
    paths = run_study(manifest, None, study, out, cfg, data=data)
    for p in paths:
        if p.endswith(".csv"):
            print(f"# {os.path.basename(p)}")
            with open(p, encoding="utf-8") as fh:
                sys.stdout.write(fh.read())
        else:
            print(f"# wrote {p}")
    return EXIT_OK


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "label-channels": cmd_label_channels,
    "train-selector": cmd_train_selector,
    "train-hmm": cmd_train_hmm,
    "recognize": cmd_recognize,
    "study": cmd_study,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    warnings.formatwarning = lambda msg, cat, *_a, **_k: f"{cat.__name__}: {msg}"
    try:
        cfg = make_config(args)
        return COMMANDS[args.command](args, cfg)
    except INVALID_INPUT as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ChanselError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
