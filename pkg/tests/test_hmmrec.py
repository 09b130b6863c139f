import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chansel.errors import (DimensionMismatch, EmptyLexicon, FormatError, InsufficientData, UnknownCharacter,
                            ValidationError)
from chansel.hmmrec import (GMM, CharacterModel, CharacterModelSet, Lexicon, LexiconDecoder, concat_word_model,
                            corpus_log_likelihood, forward_log_likelihood, gmm_log_density, load_models,
                            mixture_schedule, recognize_word, save_models, train_embedded, viterbi)


def normal_pdf(x, mu, var):
    return math.prod(math.exp(-(a - m) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v) for a, m, v in zip(x, mu, var))


def random_char(rng, symbol="A", n=3, d=2, m=2):
    states = tuple(GMM(rng.dirichlet(np.ones(m)), rng.normal(size=(m, d)), rng.uniform(0.5, 2.0, size=(m, d)))
                   for _ in range(n))
    sp = rng.uniform(0.1, 0.9, size=n)
    return CharacterModel(symbol, states, sp, 1 - sp)


def brute_paths(n, T):
    """Every left-right path starting at 0 and ending at n - 1."""
    for steps in itertools.product((0, 1), repeat=T - 1):
        if sum(steps) == n - 1:
            yield np.concatenate([[0], np.cumsum(steps)]).astype(int)


def path_prob(wm, X, path):
    p = 1.0
    for t, s in enumerate(path):
        g = wm.states[s]
        p *= sum(g.weights[k] * normal_pdf(X[t], g.means[k], g.variances[k]) for k in range(g.n_components))
        if t + 1 < len(path):
            p *= math.exp(wm.log_self[s] if path[t + 1] == s else wm.log_next[s])
    return p


# -- GMM ------------------------------------------------------------------------


def test_gmm_single_at_mean():
    g = GMM.single([1.0, -2.0], [1.0, 4.0])
    assert gmm_log_density(g, [1.0, -2.0]) == pytest.approx(-math.log(2 * math.pi) - 0.5 * math.log(4.0), rel=1e-12)


def test_gmm_identical_components_collapse(rng):
    mu, var, x = rng.normal(size=3), rng.uniform(0.5, 2, 3), rng.normal(size=3)
    g = GMM(np.array([0.3, 0.7]), np.stack([mu, mu]), np.stack([var, var]))
    assert gmm_log_density(g, x) == pytest.approx(gmm_log_density(GMM.single(mu, var), x), rel=1e-12)


def test_gmm_direct_sum(rng):
    g = GMM(np.array([0.2, 0.5, 0.3]), rng.normal(size=(3, 4)), rng.uniform(0.3, 3, (3, 4)))
    X = rng.normal(size=(5, 4))
    ref = [math.log(sum(g.weights[k] * normal_pdf(x, g.means[k], g.variances[k]) for k in range(3))) for x in X]
    assert np.allclose(gmm_log_density(g, X), ref, rtol=1e-10)


def test_gmm_far_point_finite():
    g = GMM.single([0.0] * 8, [1.0] * 8)
    assert np.isfinite(gmm_log_density(g, [200.0] * 8))


def test_gmm_shape_errors():
    with pytest.raises(DimensionMismatch):
        GMM(np.ones(2), np.zeros((1, 3)), np.ones((1, 3)))
    with pytest.raises(DimensionMismatch):
        gmm_log_density(GMM.single([0, 0], [1, 1]), [0.0, 0.0, 0.0])


# -- forward / viterbi ----------------------------------------------------------


def test_one_state_forward(rng):
    g = GMM.single([0.5], [2.0])
    cm = CharacterModel("A", (g,), np.array([0.8]), np.array([0.2]))
    X = rng.normal(size=(4, 1))
    ref = 3 * math.log(0.8) + sum(gmm_log_density(g, x) for x in X)
    assert forward_log_likelihood(cm, X) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("T", [3, 5, 7])
def test_forward_and_viterbi_brute_force(rng, T):
    cm = random_char(rng, n=3)
    X = rng.normal(size=(T, 2))
    wm = concat_word_model({"A": cm}, "A")
    probs = [path_prob(wm, X, p) for p in brute_paths(3, T)]
    assert forward_log_likelihood(cm, X) == pytest.approx(math.log(sum(probs)), rel=1e-9)
    score, path = viterbi(cm, X)
    assert score == pytest.approx(math.log(max(probs)), rel=1e-9)
    assert path_prob(wm, X, path) == pytest.approx(max(probs), rel=1e-9)


def test_too_short_is_impossible(rng):
    cm = random_char(rng, n=4)
    X = rng.normal(size=(3, 2))
    assert forward_log_likelihood(cm, X) == -np.inf
    score, path = viterbi(cm, X)
    assert score == -np.inf and len(path) == 0


def test_single_path_forward_equals_viterbi(rng):
    cm = random_char(rng, n=4)
    X = rng.normal(size=(4, 2))
    assert forward_log_likelihood(cm, X) == pytest.approx(viterbi(cm, X)[0], rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 9))
def test_viterbi_never_exceeds_forward(seed, T):
    rng = np.random.default_rng(seed)
    cm = random_char(rng, n=2)
    X = rng.normal(size=(T, 2))
    v, f = viterbi(cm, X)[0], forward_log_likelihood(cm, X)
    assert v <= f + 1e-9
    assert f <= v + math.log(T) + 1e-9  # at most T - 1 left-right paths for 2 states


# -- concatenation ----------------------------------------------------------------


def test_concat_single_char_identity(rng):
    cm = random_char(rng)
    wm = concat_word_model({"A": cm}, "A")
    assert wm.states == cm.states
    assert np.allclose(np.exp(wm.log_self), cm.self_prob) and np.allclose(np.exp(wm.log_next), cm.next_prob)


def test_concat_hand_assembled(rng):
    a, b = random_char(rng, "A", n=2), random_char(rng, "B", n=3)
    wm = concat_word_model({"A": a, "B": b}, "ABA")
    assert wm.n_states == 7 and wm.char_of_state == (0, 0, 1, 1, 1, 2, 2)
    P = wm.transition_matrix()
    ref = np.zeros((7, 8))
    for cm, off in ((a, 0), (b, 2), (a, 5)):
        ref[off:off + cm.n_states, off:off + cm.n_states + 1] = cm.transition_matrix()
    assert np.allclose(P, ref)
    assert P[1, 2] == pytest.approx(a.next_prob[1])  # exit of A feeds the first state of B
    with pytest.raises(UnknownCharacter):
        concat_word_model({"A": a}, "AZ")
    with pytest.raises(ValidationError):
        concat_word_model({"A": a}, "")


def test_character_model_validation():
    g = GMM.single([0.0], [1.0])
    with pytest.raises(ValidationError):
        CharacterModel("A", (g,), np.array([0.5]), np.array([0.4]))


# -- training -----------------------------------------------------------------------


def two_stream_data(rng, n=30):
    """Words of 'A' frames near -3 followed by 'B' frames near +3 (or reversed)."""
    seqs, words = [], []
    for i in range(n):
        w = ("AB", "BA", "AAB")[i % 3]
        frames = []
        for ch in w:
            mu = -3.0 if ch == "A" else 3.0
            frames.append(rng.normal(mu, 1.0, size=(int(rng.integers(4, 8)), 2)))
        seqs.append(np.vstack(frames))
        words.append(w)
    return seqs, words


def test_train_recovers_two_gaussians(rng):
    seqs, words = two_stream_data(rng, 120)
    models = train_embedded(seqs, words, states=1, gaussians=1, iters=5)
    for ch, mu in (("A", -3.0), ("B", 3.0)):
        g = models[ch].states[0]
        assert np.all(np.abs(g.means[0] - mu) < 0.1)
        assert np.all(np.abs(np.sqrt(g.variances[0]) - 1.0) < 0.1)


def test_train_history_monotone_per_stage(rng):
    seqs, words = two_stream_data(rng)
    models = train_embedded(seqs, words, states=2, gaussians=2, iters=4)
    for m in mixture_schedule(2):
        lls = [ll for mm, _, ll in models.history if mm == m]
        assert len(lls) == 5
        assert all(b >= a - 1e-6 * abs(a) for a, b in zip(lls, lls[1:]))
    last = models.history[-1][2]
    assert corpus_log_likelihood(models, seqs, words) == pytest.approx(last, rel=1e-8)


def test_train_zero_iters_keeps_flat_start(rng):
    seqs, words = two_stream_data(rng)
    a = train_embedded(seqs, words, states=2, gaussians=1, iters=0)
    b = train_embedded(seqs, words, states=2, gaussians=1, iters=0)
    assert a.history == []
    assert np.array_equal(a["A"].states[0].means, b["A"].states[0].means)


def test_train_input_errors(rng):
    seqs, words = two_stream_data(rng, 6)
    with pytest.raises(ValidationError):
        train_embedded(seqs, words[:-1])
    with pytest.raises(InsufficientData):
        train_embedded(seqs, words, charset="ABC")
    with pytest.raises(UnknownCharacter):
        train_embedded(seqs, words, charset="A")
    with pytest.raises(InsufficientData):
        train_embedded([], [])


def test_mixture_schedule():
    assert mixture_schedule(1) == [1]
    assert mixture_schedule(32) == [1, 2, 4, 8, 16, 32]
    assert mixture_schedule(6) == [1, 2, 4, 6]


# -- recognition ----------------------------------------------------------------------


def model_set(rng, chars="AB", n=2):
    ms = {c: random_char(rng, c, n=n) for c in chars}
    return CharacterModelSet(ms, n, 2, 2)


def test_singleton_lexicon(rng):
    res = recognize_word(model_set(rng), ["AB"], rng.normal(size=(6, 2)))
    assert res.word == "AB" and len(res.hypotheses) == 1


def test_decoder_matches_per_word_viterbi(rng):
    ms = model_set(rng)
    lex = ["A", "B", "AB", "BA", "ABA", "BBBB"]
    X = rng.normal(size=(7, 2))
    dec = LexiconDecoder(ms, lex)
    ref = [viterbi(concat_word_model(ms, w), X)[0] for w in lex]
    assert np.allclose(dec.scores(X), ref, rtol=1e-10)
    assert dec.top_word(X) == lex[int(np.argmax(ref))]


def test_sampled_word_recognized():
    ms = CharacterModelSet({
        "A": CharacterModel("A", (GMM.single([-4, 0], [1, 1]),) * 2, np.full(2, 0.6), np.full(2, 0.4)),
        "B": CharacterModel("B", (GMM.single([4, 0], [1, 1]),) * 2, np.full(2, 0.6), np.full(2, 0.4)),
    }, 2, 1, 2)
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal([-4, 0], 1, (5, 2)), rng.normal([4, 0], 1, (5, 2))])
    res = recognize_word(ms, ["BA", "AB", "ABABABAB"], X)
    assert res.word == "AB"
    assert res.hypotheses[-1] == ("ABABABAB", -np.inf)  # needs 16 frames, only 10 given
    assert len(res.path) == 10


def test_lexicon_rules(tmp_path):
    assert Lexicon(["A", " A ", "", "B"]).entries == ("A", "B")
    with pytest.raises(EmptyLexicon):
        Lexicon(["", "  "])
    with pytest.raises(UnknownCharacter):
        Lexicon(["AZ"]).check("AB")
    (tmp_path / "lex.txt").write_text("AB\nBA\n")
    assert Lexicon.load(tmp_path / "lex.txt").entries == ("AB", "BA")


def test_models_roundtrip(tmp_path, rng):
    ms = model_set(rng)
    save_models(ms, tmp_path / "m.json")
    back = load_models(tmp_path / "m.json")
    X = rng.normal(size=(6, 2))
    for w in ("AB", "BA", "A"):
        assert forward_log_likelihood(concat_word_model(back, w), X) == \
            forward_log_likelihood(concat_word_model(ms, w), X)
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(FormatError):
        load_models(tmp_path / "bad.json")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_top_hypothesis_is_best_score(seed):
    rng = np.random.default_rng(seed)
    ms = model_set(rng)
    res = recognize_word(ms, ["A", "AB", "BA", "BB", "ABB"], rng.normal(size=(int(rng.integers(2, 9)), 2)))
    scores = [s for _, s in res.hypotheses]
    assert scores == sorted(scores, reverse=True)
