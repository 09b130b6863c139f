"""Acceptance criteria 1-10; each test records one PASS/FAIL line shown in the terminal summary."""
import filecmp
import itertools
import math
import os
import time

import numpy as np
import pytest

from chansel.chanfeat.gabor import filter_bank, gabor_responses
from chansel.chanfeat.lbp import lbp_feature
from chansel.chanfeat.lpq import lpq_feature
from chansel.chanfeat.stats import stats_hist_feature
from chansel.chanfeat.wavelet import haar_step, wavelet_feature
from chansel.config import preset
from chansel.evalkit import load_study_data, multilabel_metrics, run_study, train_study_models
from chansel.evalkit.report import read_csv
from chansel.hmmrec import GMM, CharacterModel, forward_log_likelihood, train_embedded, viterbi
from chansel.imagecore import ALL_CHANNELS, SELECTABLE_CHANNELS, to_channel_set
from chansel.mlselect import svm_objective, train_binary_svm
from chansel.phogfeat import PHOG_LEN, extract_sequence, phog_descriptor, window_offsets
from chansel.synthgen import CorpusSpec, gen_corpus, make_lexicon

from feature_oracles import direct_convolve_same, haar_oracle, lbp_oracle, lpq_oracle, stats_oracle
from svm_oracles import enumerated_dual_optimum, fixtures, qp_primal_objective

RESULTS = {}

CORPUS_SPEC = CorpusSpec(seed=11, lexicon=tuple(make_lexicon("ABCDEFGHIJ", 50, 11)), count=240,
                         mixed_fraction=0.25)
STUDIES = ("channel-table", "noise-curve", "resolution-curve", "runtime-ratio")
TIMING_FILE = "runtime_timing.csv"


def record(n, ok, detail):
    RESULTS[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[n])
    assert ok, detail


# -- end-to-end run shared by criteria 3 and 7-10 ------------------------------------


def end_to_end(root):
    """Generate the corpus, train the cross-validated models and write every report; returns timings."""
    cfg = preset("desk")
    t0 = time.perf_counter()
    gen_corpus(CORPUS_SPEC, os.path.join(root, "corpus"))
    data = load_study_data(os.path.join(root, "corpus"), cfg)
    models = train_study_models(data, cfg)
    reports = os.path.join(root, "reports")
    run_study(None, models, "channel-table", reports, cfg, data)
    t_table = time.perf_counter() - t0
    t1 = time.perf_counter()
    run_study(None, models, "noise-curve", reports, cfg, data)
    run_study(None, models, "resolution-curve", reports, cfg, data)
    t_curves = time.perf_counter() - t1
    run_study(None, models, "runtime-ratio", reports, cfg, data)
    return {"cfg": cfg, "data": data, "reports": reports, "t_table": t_table, "t_curves": t_curves}


@pytest.fixture(scope="module")
def run_a(tmp_path_factory):
    return end_to_end(os.fspath(tmp_path_factory.mktemp("run_a")))


# -- 1 ----------------------------------------------------------------------------------


def test_criterion_01_phog_and_window_count():
    t0 = time.perf_counter()
    bad = [w for w in range(8, 4001) if len(window_offsets(w)) != (w - 8) // 4 + 1]
    dt = time.perf_counter() - t0
    rng = np.random.default_rng(1)
    dims = {phog_descriptor(rng.random((40, 8)) * 255).shape[0]}
    for w in (8, 9, 57, 300):
        seq = extract_sequence(to_channel_set(rng.integers(0, 256, (40, w, 3), dtype=np.uint8)), mode="fixed:Y")
        dims.add(seq.vectors.shape[1])
        if len(seq) != (w - 8) // 4 + 1:
            bad.append(w)
    ok = PHOG_LEN == 168 and dims == {168} and not bad and dt < 1.0
    record(1, ok, f"dims={sorted(dims)} count mismatches={len(bad)} over W in [8,4000], {dt:.3f}s")


# -- 2 ----------------------------------------------------------------------------------


def _log_emission(g, x):
    terms = []
    for k in range(g.n_components):
        ll = math.log(g.weights[k])
        for a, m, v in zip(x, g.means[k], g.variances[k]):
            ll += -0.5 * math.log(2 * math.pi * v) - (a - m) ** 2 / (2 * v)
        terms.append(ll)
    top = max(terms)
    return top + math.log(sum(math.exp(t - top) for t in terms))


def _enumerate(cm, X):
    """Log scores of every left-right path from state 0 to the last state."""
    n, T = cm.n_states, len(X)
    out = []
    for steps in itertools.product((0, 1), repeat=T - 1):
        if sum(steps) != n - 1:
            continue
        path = [0] + list(np.cumsum(steps))
        s = sum(_log_emission(cm.states[p], X[t]) for t, p in enumerate(path))
        for a, b in zip(path, path[1:]):
            s += math.log(cm.self_prob[a] if a == b else cm.next_prob[a])
        out.append((s, path))
    return out


def test_criterion_02_forward_viterbi_enumeration():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_f = worst_v = 0.0
    path_fail = 0
    for _ in range(200):
        n, d, m = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 3))
        states = tuple(GMM(rng.dirichlet(np.ones(m)), rng.normal(size=(m, d)) * 2,
                           rng.uniform(0.3, 3.0, (m, d))) for _ in range(n))
        sp = rng.uniform(0.05, 0.95, n)
        cm = CharacterModel("A", states, sp, 1 - sp)
        X = rng.normal(size=(int(rng.integers(n, 7)), d)) * 2
        paths = _enumerate(cm, X)
        scores = [s for s, _ in paths]
        top = max(scores)
        ref_f = top + math.log(sum(math.exp(s - top) for s in scores))
        f = forward_log_likelihood(cm, X)
        v, vpath = viterbi(cm, X)
        worst_f = max(worst_f, abs(f - ref_f) / abs(ref_f))
        worst_v = max(worst_v, abs(v - top) / abs(top))
        best_path = paths[int(np.argmax(scores))][1]
        path_fail += list(vpath) != best_path
    dt = time.perf_counter() - t0
    ok = worst_f <= 1e-9 and worst_v <= 1e-12 and path_fail == 0 and dt < 30
    record(2, ok, f"200 models: forward rel err {worst_f:.1e}, viterbi rel err {worst_v:.1e}, "
                  f"path mismatches {path_fail}, {dt:.1f}s")


# -- 3 ----------------------------------------------------------------------------------


def test_criterion_03_em_monotone(run_a):
    data, cfg = run_a["data"], run_a["cfg"]
    t0 = time.perf_counter()
    worst = np.inf
    steps = 0
    for ch in ("Y", "Cr"):
        models = train_embedded([f.channel(ch) for f in data.feats], data.truth, data.charset,
                                states=cfg.states, gaussians=cfg.gaussians, iters=8)
        h = models.history
        for a, b in zip(h, h[1:]):
            if a[0] == b[0]:
                worst = min(worst, b[2] - a[2])
                steps += 1
    dt = time.perf_counter() - t0
    ok = worst >= -1e-6 and dt < 120
    record(3, ok, f"{steps} EM steps on {len(data)} words, smallest change {worst:+.3e}, {dt:.1f}s")


# -- 4 ----------------------------------------------------------------------------------


def test_criterion_04_svm_oracles():
    t0 = time.perf_counter()
    worst = 0.0
    for X, y in fixtures():
        res = train_binary_svm(X, y, C=1.0)
        ours = svm_objective(res.w, res.b, X, y, 1.0)
        enum = enumerated_dual_optimum(X, y, 1.0)
        qp, _, _ = qp_primal_objective(X, y, 1.0)
        worst = max(worst, abs(ours - enum) / abs(enum), abs(ours - qp) / abs(qp))
    Xa = np.array([[2.0, 0.0]] * 3 + [[-2.0, 0.0]] * 3)
    ya = np.array([1.0] * 3 + [-1.0] * 3)
    res = train_binary_svm(Xa, ya, C=1.0)
    direction = abs(res.w[1]) / np.linalg.norm(res.w)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-3 and direction <= 1e-3 and abs(res.b) <= 1e-3 and res.w[0] > 0 and dt < 30
    record(4, ok, f"20 fixtures worst rel objective error {worst:.1e}; analytic w={np.round(res.w, 4)}, "
                  f"b={res.b:.1e}, {dt:.1f}s")


# -- 5 ----------------------------------------------------------------------------------


def _v(*names):
    return np.array([1 if c in names else -1 for c in SELECTABLE_CHANNELS])


METRIC_FIXTURES = [
    # (truth, pred, accuracy, precision, recall), hand computed
    ([_v("G", "Y")], [_v("G", "B")], 1 / 3, 1 / 2, 1 / 2),
    ([_v("R", "Cr"), _v("S")], [_v("R", "Cr"), _v("S")], 1.0, 1.0, 1.0),
    ([_v()], [_v()], 1.0, 1.0, 1.0),  # both empty: 0/0 counts as perfect
    ([_v("G")], [_v()], 0.0, 0.0, 0.0),  # empty prediction, non-empty truth
    ([_v()], [_v("R")], 0.0, 0.0, 0.0),  # empty truth, non-empty prediction
    ([_v("R", "G", "B"), _v("Cr")], [_v("R"), _v("Cr", "S")], 5 / 12, 3 / 4, 2 / 3),
]


def test_criterion_05_metric_fixtures():
    misses = 0
    for truth, pred, acc, prec, rec in METRIC_FIXTURES:
        r = multilabel_metrics(truth, pred)
        misses += any(abs(a - b) > 1e-15 for a, b in ((r.accuracy, acc), (r.precision, prec), (r.recall, rec)))
    record(5, misses == 0, f"{len(METRIC_FIXTURES)} fixtures, {misses} mismatches (both empty-set conventions)")


# -- 6 ----------------------------------------------------------------------------------


def test_criterion_06_feature_oracles():
    rng = np.random.default_rng(6)
    errs = {}
    x = rng.random((16, 24)) * 255
    bands = haar_step(x)
    errs["parseval"] = abs(sum(float((b ** 2).sum()) for b in bands.values()) - float((x ** 2).sum())) / float(
        (x ** 2).sum())
    ref = haar_oracle(x)
    errs["haar"] = max(float(np.abs(bands[k] - ref[k]).max()) for k in ref)
    expect, ll = [], x
    for _ in range(3):
        b = haar_oracle(ll)
        for k in ("LL", "LH", "HL", "HH"):
            expect += [b[k].mean(), b[k].std()]
        ll = b["LL"]
    errs["wavelet"] = float(np.abs(wavelet_feature(x) - expect).max())
    p = rng.random((10, 12)) * 255
    errs["lbp"] = float(np.abs(lbp_feature(p) - lbp_oracle(p)).max())
    errs["lpq"] = float(np.abs(lpq_feature(p) - lpq_oracle(p)).max())
    rgb = rng.integers(0, 256, (5, 6, 3)).astype(float)
    errs["stats"] = float(np.abs(stats_hist_feature(rgb) - stats_oracle(rgb)).max())
    patch = rng.random((16, 16)) * 255
    resp = gabor_responses(patch)
    g = 0.0
    for i, k in enumerate(filter_bank()[1]):
        r = direct_convolve_same(patch, k)
        g = max(g, float(np.abs(resp[i] - r).max() / np.abs(r).max()))
    errs["gabor_rel"] = g
    ok = (errs["parseval"] <= 1e-9 and max(errs["haar"], errs["wavelet"], errs["lbp"], errs["lpq"],
                                             errs["stats"]) <= 1e-9 and errs["gabor_rel"] <= 1e-6)
    record(6, ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


# -- 7 ----------------------------------------------------------------------------------


def test_criterion_07_end_to_end_ordering(run_a):
    rows = {r["method"]: r for r in read_csv(os.path.join(run_a["reports"], "channel_table.csv"))}
    modes = {r["mode"]: r for r in read_csv(os.path.join(run_a["reports"], "selection_modes.csv"))}
    fixed = {c: float(rows[c]["word_acc"]) for c in ALL_CHANNELS}
    oracle = float(rows["Oracle"]["word_acc"])
    pw = float(modes["per-window"]["word_acc"])
    pi = float(modes["per-image"]["word_acc"])
    match = float(modes["per-window"]["window_target_match"])
    best = max(fixed, key=fixed.get)
    a = all(oracle >= v for v in fixed.values())
    b = pw >= fixed[best] - 0.02 and pw >= pi - 0.02
    c = match >= 0.70
    n = int(rows["Oracle"]["n"])
    ok = a and b and c and n >= 200 and run_a["t_table"] < 15 * 60
    record(7, ok, f"n={n}: (a) oracle {oracle:.4f} >= fixed max; (b) per-window {pw:.4f} vs best fixed "
                  f"{best} {fixed[best]:.4f}, per-image {pi:.4f}; (c) window target match {match:.4f}; "
                  f"{run_a['t_table']:.0f}s")


# -- 8 ----------------------------------------------------------------------------------


def _trend(values):
    ups = [b - a for a, b in zip(values, values[1:]) if b > a]
    return len(ups) <= 1 and all(u <= 0.02 for u in ups), ups


def test_criterion_08_degradation_curves(run_a):
    noise = read_csv(os.path.join(run_a["reports"], "noise_curve.csv"))
    res = read_csv(os.path.join(run_a["reports"], "resolution_curve.csv"))
    levels = [int(r["noise_level"]) for r in noise]
    scales = [float(r["scale"]) for r in res]
    nv = [float(r["word_acc"]) for r in noise]
    rv = [float(r["word_acc"]) for r in res]
    ok_n, up_n = _trend(nv)
    ok_r, up_r = _trend(rv)
    ok = (ok_n and ok_r and levels == [0, 5, 10, 15, 20, 25, 30]
          and scales == [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2] and run_a["t_curves"] < 20 * 60)
    record(8, ok, f"noise {[round(v, 3) for v in nv]} (rises {len(up_n)}); resolution "
                  f"{[round(v, 3) for v in rv]} (rises {len(up_r)}); {run_a['t_curves']:.0f}s")


# -- 9 ----------------------------------------------------------------------------------


def test_criterion_09_runtime_ratio(run_a):
    t = read_csv(os.path.join(run_a["reports"], TIMING_FILE))[0]
    ratio = float(t["ratio"])
    record(9, ratio <= 3.0, f"per-word {float(t['fixed_s_per_word']) * 1e3:.1f} ms fixed, "
                            f"{float(t['selection_s_per_word']) * 1e3:.1f} ms with selection, ratio {ratio:.2f}")


# -- 10 ---------------------------------------------------------------------------------


EXPECTED_REPORTS = {
    "channel_table.csv", "selection_modes.csv", "selector_metrics.csv", "selection_audit.csv",
    "noise_curve.csv", "noise_curve.svg", "resolution_curve.csv", "resolution_curve.svg", "runtime_ratio.csv",
}


def test_criterion_10_determinism(run_a, tmp_path_factory):
    run_b = end_to_end(os.fspath(tmp_path_factory.mktemp("run_b")))
    names = sorted(set(os.listdir(run_a["reports"])) | set(os.listdir(run_b["reports"])))
    compared = [n for n in names if n != TIMING_FILE]
    _, mismatch, errors = filecmp.cmpfiles(run_a["reports"], run_b["reports"], compared, shallow=False)
    manifest_same = filecmp.cmp(os.path.join(os.path.dirname(run_a["reports"]), "corpus", "manifest.tsv"),
                                os.path.join(os.path.dirname(run_b["reports"]), "corpus", "manifest.tsv"),
                                shallow=False)
    missing = sorted(EXPECTED_REPORTS - set(compared))
    ok = not mismatch and not errors and manifest_same and not missing
    record(10, ok, f"{len(compared)} report files byte-identical across reruns "
                   f"(differing: {mismatch + errors or 'none'}; missing: {missing or 'none'}; {TIMING_FILE} holds wall-clock only)")
