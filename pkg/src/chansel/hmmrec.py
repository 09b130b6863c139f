"""Left-to-right character HMMs with diagonal-covariance GMM emissions.

Character models are concatenated into word models; recognition scores every
lexicon entry by Viterbi and ranks them. Training is embedded Baum-Welch from
a flat start, growing mixtures by splitting the heaviest component.

A word model's likelihood sums over paths that start in its first state and
end in its last state at the final frame; no exit probability is applied.
"""
from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (DimensionMismatch, EmptyLexicon, EmptySequence, FormatError, InsufficientData,
                     UnknownCharacter, ValidationError, VarianceFloorHit)

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-4
WEIGHT_FLOOR = 1e-5
TRANS_FLOOR = 1e-4
SPLIT_OFFSET = 0.2
MODEL_FORMAT = "chansel-hmm"
MODEL_VERSION = 1
LOG_2PI = np.log(2.0 * np.pi)


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """log(sum(exp(x))) along one axis; all -inf slices give -inf."""
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _as_frames(seq) -> np.ndarray:
    x = np.asarray(getattr(seq, "vectors", seq), dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptySequence(f"observation sequence must be a non-empty (T, D) array, got {x.shape}")
    return x


# -- emissions --------------------------------------------------------------


@dataclass(frozen=True)
class GMM:
    """Diagonal-covariance Gaussian mixture of one HMM state."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        M, D = self.means.shape
        if self.weights.shape != (M,) or self.variances.shape != (M, D):
            raise DimensionMismatch("GMM weight/mean/variance shapes disagree")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @classmethod
    def single(cls, mean, var) -> "GMM":
        return cls(np.ones(1), np.atleast_2d(np.asarray(mean, float)), np.atleast_2d(np.asarray(var, float)))


def component_logpdf(X: np.ndarray, logw: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """log(c_k N(x; mu_k, diag var_k)) for stacked mixtures.

    X (T, D); logw (S, M); means/variances (S, M, D) -> (T, S, M).
    """
    S, M, D = means.shape
    inv = 1.0 / variances.reshape(S * M, D)
    mu = means.reshape(S * M, D)
    const = -0.5 * (D * LOG_2PI + np.log(variances).sum(axis=-1).reshape(S * M)
                    + (mu * mu * inv).sum(axis=1))
    quad = -0.5 * ((X * X) @ inv.T) + X @ (mu * inv).T
    return (quad + const).reshape(len(X), S, M) + logw[None]


def gmm_log_density(gmm: GMM, x) -> np.ndarray | float:
    """log sum_k c_k N(x; mu_k, Sigma_k), stabilized by log-sum-exp.

    ``x`` may be one vector (returns a float) or a (T, D) array.
    """
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != gmm.dim:
        raise DimensionMismatch(f"observation dim {X.shape[1]} != GMM dim {gmm.dim}")
    diff = X[:, None, :] - gmm.means[None]
    comp = (-0.5 * (gmm.dim * LOG_2PI + np.log(gmm.variances).sum(axis=1))[None]
            - 0.5 * (diff * diff / gmm.variances[None]).sum(axis=2) + _log(gmm.weights)[None])
    out = logsumexp(comp, axis=1)
    return float(out[0]) if single else out


# -- models -----------------------------------------------------------------


@dataclass(frozen=True)
class CharacterModel:
    """Strict left-right HMM: each state either stays or advances.

    ``next_prob`` of the last state is its exit probability, which feeds the
    first state of the following character inside a word model.
    """

    symbol: str
    states: tuple
    self_prob: np.ndarray
    next_prob: np.ndarray

    def __post_init__(self):
        n = len(self.states)
        if n == 0 or self.self_prob.shape != (n,) or self.next_prob.shape != (n,):
            raise ValidationError(f"model {self.symbol!r}: transition arrays do not match {n} states")
        if not np.allclose(self.self_prob + self.next_prob, 1.0, atol=1e-9):
            raise ValidationError(f"model {self.symbol!r}: transition rows must sum to 1")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def transition_matrix(self) -> np.ndarray:
        """(N, N+1) row-stochastic matrix; the last column is the exit."""
        n = self.n_states
        P = np.zeros((n, n + 1))
        P[np.arange(n), np.arange(n)] = self.self_prob
        P[np.arange(n), np.arange(n) + 1] = self.next_prob
        return P

    @property
    def initial(self) -> np.ndarray:
        pi = np.zeros(self.n_states)
        pi[0] = 1.0
        return pi


@dataclass(frozen=True)
class WordModel:
    """A concatenation of character models viewed as one flat left-right chain."""

    states: tuple
    log_self: np.ndarray
    log_next: np.ndarray
    symbols: tuple = ()
    char_of_state: tuple = ()

    @property
    def n_states(self) -> int:
        return len(self.states)

    def emission_logprob(self, X: np.ndarray) -> np.ndarray:
        """(T, N) per-state log densities."""
        return np.stack([gmm_log_density(g, X) for g in self.states], axis=1)

    def transition_matrix(self) -> np.ndarray:
        n = self.n_states
        P = np.zeros((n, n + 1))
        P[np.arange(n), np.arange(n)] = np.exp(self.log_self)
        P[np.arange(n), np.arange(n) + 1] = np.exp(self.log_next)
        return P


def char_as_word_model(cm: CharacterModel) -> WordModel:
    return WordModel(cm.states, _log(cm.self_prob), _log(cm.next_prob), (cm.symbol,),
                     tuple([0] * cm.n_states))


@dataclass
class CharacterModelSet:
    """Trained character models plus the training log-likelihood trace."""

    models: dict
    n_states: int
    n_gaussians: int
    dim: int
    history: list = field(default_factory=list)

    @property
    def charset(self) -> str:
        return "".join(self.models)

    def __getitem__(self, symbol: str) -> CharacterModel:
        try:
            return self.models[symbol]
        except KeyError:
            raise UnknownCharacter(f"no model for character {symbol!r}") from None

    def word_model(self, word: str) -> WordModel:
        return concat_word_model(self, word)


def concat_word_model(models, word: str) -> WordModel:
    """Chain the character models of ``word``; each last state's exit feeds the next character."""
    if not word:
        raise ValidationError("cannot build a model for an empty word")
    states, ls, ln, owner = [], [], [], []
    for ci, ch in enumerate(word):
        try:
            cm = models[ch]
        except KeyError:
            raise UnknownCharacter(f"no model for character {ch!r} in {word!r}") from None
        states.extend(cm.states)
        ls.extend(cm.self_prob)
        ln.extend(cm.next_prob)
        owner.extend([ci] * cm.n_states)
    return WordModel(tuple(states), _log(np.array(ls)), _log(np.array(ln)), tuple(word), tuple(owner))


# -- inference --------------------------------------------------------------


def _forward(logb: np.ndarray, ls: np.ndarray, ln: np.ndarray) -> np.ndarray:
    T, N = logb.shape
    alpha = np.empty((T, N))
    alpha[0] = -np.inf
    alpha[0, 0] = logb[0, 0]
    move = np.empty(N)
    move[0] = -np.inf
    for t in range(1, T):
        prev = alpha[t - 1]
        np.add(prev[:-1], ln[:-1], out=move[1:])
        np.logaddexp(prev + ls, move, out=alpha[t])
        alpha[t] += logb[t]
    return alpha


def _backward(logb: np.ndarray, ls: np.ndarray, ln: np.ndarray) -> np.ndarray:
    T, N = logb.shape
    beta = np.empty((T, N))
    beta[T - 1] = -np.inf
    beta[T - 1, N - 1] = 0.0
    move = np.empty(N)
    move[-1] = -np.inf
    for t in range(T - 2, -1, -1):
        nb = logb[t + 1] + beta[t + 1]
        np.add(ln[:-1], nb[1:], out=move[:-1])
        np.logaddexp(ls + nb, move, out=beta[t])
    return beta


def _viterbi(logb: np.ndarray, ls: np.ndarray, ln: np.ndarray) -> tuple:
    T, N = logb.shape
    delta = np.full(N, -np.inf)
    delta[0] = logb[0, 0]
    back = np.zeros((T, N), dtype=np.int8)
    for t in range(1, T):
        stay = delta + ls
        move = np.full(N, -np.inf)
        move[1:] = delta[:-1] + ln[:-1]
        took = move > stay
        back[t] = took
        delta = np.where(took, move, stay) + logb[t]
    score = float(delta[N - 1])
    if not np.isfinite(score):
        return -np.inf, np.zeros(0, dtype=np.intp)
    path = np.empty(T, dtype=np.intp)
    s = N - 1
    for t in range(T - 1, -1, -1):
        path[t] = s
        s -= int(back[t, s])
    return score, path


def forward_log_likelihood(model, seq) -> float:
    """log P(O | model) summed over all legal state paths; -inf when T is too short."""
    X = _as_frames(seq)
    wm = char_as_word_model(model) if isinstance(model, CharacterModel) else model
    logb = wm.emission_logprob(X)
    return float(_forward(logb, wm.log_self, wm.log_next)[-1, -1])


def viterbi(model, seq) -> tuple:
    """(best-path log score, state path); (-inf, empty path) if no legal path exists."""
    X = _as_frames(seq)
    wm = char_as_word_model(model) if isinstance(model, CharacterModel) else model
    return _viterbi(wm.emission_logprob(X), wm.log_self, wm.log_next)


# -- lexicon decoding -------------------------------------------------------


class Lexicon:
    """Ordered, de-duplicated list of decodable words."""

    def __init__(self, entries: Sequence[str]):
        seen, words = set(), []
        for w in entries:
            w = w.strip()
            if w and w not in seen:
                seen.add(w)
                words.append(w)
        if not words:
            raise EmptyLexicon("lexicon has no entries")
        self.entries = tuple(words)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def check(self, charset: str) -> None:
        missing = sorted(set("".join(self.entries)) - set(charset))
        if missing:
            raise UnknownCharacter(f"lexicon uses characters without models: {''.join(missing)!r}")

    @classmethod
    def load(cls, path) -> "Lexicon":
        with open(path, encoding="utf-8") as fh:
            return cls(fh.read().splitlines())


class RecognitionResult(NamedTuple):
    hypotheses: list
    path: np.ndarray

    @property
    def word(self) -> str:
        return self.hypotheses[0][0]

    @property
    def score(self) -> float:
        return self.hypotheses[0][1]


class LexiconDecoder:
    """Scores all lexicon entries in one vectorized Viterbi pass over a flat state array."""

    def __init__(self, models: CharacterModelSet, lexicon):
        lexicon = lexicon if isinstance(lexicon, Lexicon) else Lexicon(lexicon)
        lexicon.check(models.charset)
        self.models = models
        self.lexicon = lexicon
        self._symbols = list(models.models)
        S = models.n_states
        sym_index = {s: i for i, s in enumerate(self._symbols)}
        gidx, ls, ln, starts, ends = [], [], [], [], []
        for w in lexicon:
            starts.append(len(gidx))
            for ch in w:
                cm = models[ch]
                base = sym_index[ch] * S
                gidx.extend(base + np.arange(cm.n_states))
                ls.extend(_log(cm.self_prob))
                ln.extend(_log(cm.next_prob))
            ends.append(len(gidx) - 1)
            ln[-1] = -np.inf
        self._gidx = np.array(gidx, dtype=np.intp)
        self._ls = np.array(ls)
        self._ln = np.array(ln)
        self._starts = np.array(starts, dtype=np.intp)
        self._ends = np.array(ends, dtype=np.intp)
        self._not_start = np.ones(len(gidx), dtype=bool)
        self._not_start[self._starts] = False
        params = _stack_params(models)
        self._logw, self._means, self._vars = params

    def emissions(self, X: np.ndarray) -> np.ndarray:
        """(T, n_symbols * n_states) state log densities."""
        if X.shape[1] != self.models.dim:
            raise DimensionMismatch(f"observation dim {X.shape[1]} != model dim {self.models.dim}")
        return logsumexp(component_logpdf(X, self._logw, self._means, self._vars), axis=2)

    def scores(self, seq) -> np.ndarray:
        X = _as_frames(seq)
        E = self.emissions(X)[:, self._gidx]
        delta = np.full(len(self._gidx), -np.inf)
        delta[self._starts] = E[0, self._starts]
        for t in range(1, len(X)):
            stay = delta + self._ls
            move = np.empty_like(delta)
            move[0] = -np.inf
            move[1:] = delta[:-1] + self._ln[:-1]
            move[~self._not_start] = -np.inf
            delta = np.maximum(stay, move) + E[t]
        return delta[self._ends]

    def recognize(self, seq) -> RecognitionResult:
        X = _as_frames(seq)
        sc = self.scores(X)
        order = sorted(range(len(sc)), key=lambda i: (-sc[i], i))
        hyps = [(self.lexicon.entries[i], float(sc[i])) for i in order]
        _, path = viterbi(concat_word_model(self.models, hyps[0][0]), X)
        return RecognitionResult(hyps, path)

    def top_word(self, seq) -> str:
        sc = self.scores(seq)
        return self.lexicon.entries[int(np.argmax(sc))]


def recognize_word(models: CharacterModelSet, lexicon, seq) -> RecognitionResult:
    """Rank every lexicon entry by Viterbi score; entries too long for the sequence rank last."""
    return LexiconDecoder(models, lexicon).recognize(seq)


# -- training ---------------------------------------------------------------


def _stack_params(models: CharacterModelSet) -> tuple:
    gmms = [g for cm in models.models.values() for g in cm.states]
    logw = np.stack([_log(g.weights) for g in gmms])
    means = np.stack([g.means for g in gmms])
    var = np.stack([g.variances for g in gmms])
    return logw, means, var


def _floor_weights(counts: np.ndarray, floor: float) -> np.ndarray:
    """Maximize sum n_k log w_k subject to w_k >= floor and sum w_k = 1."""
    M = len(counts)
    fixed = np.zeros(M, dtype=bool)
    w = counts / counts.sum()
    while True:
        low = (w < floor) & ~fixed
        if not low.any():
            break
        fixed |= low
        free_mass = 1.0 - floor * fixed.sum()
        rest = counts[~fixed]
        w = np.full(M, floor)
        if rest.sum() > 0:
            w[~fixed] = rest / rest.sum() * free_mass
        else:
            w[~fixed] = free_mass / max((~fixed).sum(), 1)
    return w


class _Params:
    """Mutable training state for all (character, state) pairs, flattened to G = C * S."""

    def __init__(self, charset, n_states, weights, means, variances, self_p):
        self.charset = charset
        self.S = n_states
        self.weights = weights
        self.means = means
        self.variances = variances
        self.self_p = self_p

    def to_models(self, history) -> CharacterModelSet:
        models = {}
        S = self.S
        for c, ch in enumerate(self.charset):
            states = []
            for s in range(S):
                g = c * S + s
                states.append(GMM(self.weights[g].copy(), self.means[g].copy(), self.variances[g].copy()))
            sp = self.self_p[c * S:(c + 1) * S].copy()
            models[ch] = CharacterModel(ch, tuple(states), sp, 1.0 - sp)
        return CharacterModelSet(models, S, self.means.shape[1], self.means.shape[2], list(history))


def _state_indices(word: str, sym_index: dict, S: int) -> np.ndarray:
    return np.concatenate([sym_index[ch] * S + np.arange(S) for ch in word])


def _flat_start(seqs, words, charset, S, var_floor) -> _Params:
    sym_index = {ch: i for i, ch in enumerate(charset)}
    G = len(charset) * S
    D = seqs[0].shape[1]
    sums = np.zeros((G, D))
    counts = np.zeros(G)
    visits = np.zeros(G)
    for X, w in zip(seqs, words):
        gidx = _state_indices(w, sym_index, S)
        N, T = len(gidx), len(X)
        seg = (np.arange(T) * N) // T
        np.add.at(sums, gidx[seg], X)
        np.add.at(counts, gidx[seg], 1.0)
        np.add.at(visits, gidx, 1.0)
    if np.any(counts == 0):
        empty = sorted({charset[g // S] for g in np.flatnonzero(counts == 0)})
        raise InsufficientData(f"no frames for characters {''.join(empty)!r} at flat start")
    allX = np.concatenate(seqs)
    gvar = np.maximum(allX.var(axis=0), var_floor)
    means = (sums / counts[:, None])[:, None, :]
    variances = np.broadcast_to(gvar, (G, 1, D)).copy()
    dur = counts / visits
    self_p = np.clip(1.0 - 1.0 / np.maximum(dur, 1.0), TRANS_FLOOR, 1.0 - TRANS_FLOOR)
    return _Params(charset, S, np.ones((G, 1)), means, variances, self_p)


def _split(p: _Params, target: int) -> None:
    G, M, D = p.means.shape
    if target <= M:
        return
    w = np.zeros((G, target))
    mu = np.zeros((G, target, D))
    var = np.zeros((G, target, D))
    w[:, :M], mu[:, :M], var[:, :M] = p.weights, p.means, p.variances
    for m in range(M, target):
        k = np.argmax(w[:, :m], axis=1)
        rows = np.arange(G)
        sd = np.sqrt(var[rows, k])
        base = mu[rows, k].copy()
        mu[rows, k] = base - SPLIT_OFFSET * sd
        mu[:, m] = base + SPLIT_OFFSET * sd
        var[:, m] = var[rows, k]
        w[rows, k] *= 0.5
        w[:, m] = w[rows, k]
    p.weights, p.means, p.variances = w, mu, var


class _Batch:
    """All training sequences laid out as one flat chain of word-model states.

    Column s of the (T_max, S) lattices belongs to sequence ``seq_of[s]``;
    transitions never cross from one sequence's block into the next.
    """

    def __init__(self, seqs, gidxs):
        self.X = np.concatenate(seqs)
        self.seqs = seqs
        self.T = np.array([len(x) for x in seqs])
        self.frame_off = np.concatenate([[0], np.cumsum(self.T)[:-1]])
        self.gidx = np.concatenate(gidxs)
        sizes = np.array([len(g) for g in gidxs])
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.ends = self.starts + sizes - 1
        self.seq_of = np.repeat(np.arange(len(seqs)), sizes)
        S = len(self.gidx)
        Tm = int(self.T.max())
        t = np.arange(Tm)[:, None]
        Ts = self.T[self.seq_of][None, :]
        self.valid = t < Ts
        self.frame_idx = self.frame_off[self.seq_of][None, :] + np.minimum(t, Ts - 1)
        self.not_start = np.ones(S, dtype=bool)
        self.not_start[self.starts] = False
        self.crossing = np.zeros(S, dtype=bool)
        self.crossing[self.ends] = True
        # Sequences whose last frame is t, for resetting the backward pass.
        self.ending = {}
        for i, T in enumerate(self.T):
            self.ending.setdefault(int(T) - 1, []).append(i)
        self.blocks = [np.arange(a, e + 1) for a, e in zip(self.starts, self.ends)]
        self.order = np.argsort(self.gidx, kind="stable")
        sg = self.gidx[self.order]
        self.bounds = np.flatnonzero(np.r_[True, sg[1:] != sg[:-1]])
        self.groups = sg[self.bounds]

    def reduce(self, values: np.ndarray, n_global: int) -> np.ndarray:
        """Sum per-flat-state rows into per-global-state rows."""
        out = np.zeros((n_global,) + values.shape[1:])
        out[self.groups] = np.add.reduceat(values[self.order], self.bounds, axis=0)
        return out


def _em_pass(p: _Params, batch: _Batch, accumulate: bool):
    """One E-step over the corpus; returns total log-likelihood and sufficient statistics."""
    G, M, D = p.means.shape
    comp_all = component_logpdf(batch.X, _log(p.weights), p.means, p.variances)
    comp = comp_all[batch.frame_idx, batch.gidx[None, :]]
    logb = logsumexp(comp, axis=2)
    logb[~batch.valid] = 0.0
    ls = _log(p.self_p)[batch.gidx]
    ln = _log(1.0 - p.self_p)[batch.gidx]
    ln[batch.crossing] = -np.inf
    Tm, S = logb.shape

    alpha = np.empty((Tm, S))
    alpha[0] = -np.inf
    alpha[0, batch.starts] = logb[0, batch.starts]
    move = np.empty(S)
    move[0] = -np.inf
    for t in range(1, Tm):
        prev = alpha[t - 1]
        np.add(prev[:-1], ln[:-1], out=move[1:])
        np.logaddexp(prev + ls, move, out=alpha[t])
        alpha[t] += logb[t]
    ll_seq = alpha[batch.T - 1, batch.ends]
    ok = np.isfinite(ll_seq)
    total = float(ll_seq[ok].sum())
    used = int(ok.sum())
    stats = None
    if not accumulate:
        return total, used, stats

    beta = np.empty((Tm, S))
    beta[Tm - 1] = -np.inf
    move = np.empty(S)
    move[-1] = -np.inf
    for t in range(Tm - 1, -1, -1):
        if t < Tm - 1:
            nb = logb[t + 1] + beta[t + 1]
            np.add(ln[:-1], nb[1:], out=move[:-1])
            np.logaddexp(ls + nb, move, out=beta[t])
        for i in batch.ending.get(t, ()):
            beta[t, batch.blocks[i]] = -np.inf
            beta[t, batch.ends[i]] = 0.0

    ll_state = np.where(ok, ll_seq, np.inf)[batch.seq_of]
    live = batch.valid & ok[batch.seq_of][None, :]
    gamma = np.where(live, alpha + beta - ll_state, -np.inf)
    post = np.exp(gamma[:, :, None] + comp - logb[:, :, None])
    nb = logb[1:] + beta[1:]
    step_live = live[1:]
    xi_stay = np.where(step_live, np.exp(alpha[:-1] + ls + nb - ll_state), 0.0).sum(axis=0)
    xi_move = np.zeros(S)
    xi_move[:-1] = np.where(step_live[:, :-1] & step_live[:, 1:],
                            np.exp(alpha[:-1, :-1] + ln[:-1] + nb[:, 1:] - ll_state[:-1]), 0.0).sum(axis=0)

    occ_s = post.sum(axis=0)
    first_s = np.zeros((S, M, D))
    second_s = np.zeros((S, M, D))
    for i, blk in enumerate(batch.blocks):
        if not ok[i]:
            continue
        T = batch.T[i]
        X = batch.seqs[i]
        P = post[:T, blk, :].reshape(T, -1)
        first_s[blk] = (P.T @ X).reshape(len(blk), M, D)
        second_s[blk] = (P.T @ (X * X)).reshape(len(blk), M, D)

    occ = batch.reduce(occ_s, G)
    first = batch.reduce(first_s, G)
    second = batch.reduce(second_s, G)
    stay_cnt = batch.reduce(xi_stay, G)
    next_cnt = batch.reduce(xi_move, G)
    return total, used, (occ, first, second, stay_cnt, next_cnt)


def _m_step(p: _Params, stats, var_floor: float) -> bool:
    occ, first, second, stay_cnt, next_cnt = stats
    G, M, D = p.means.shape
    floored = False
    for g in range(G):
        tot = occ[g].sum()
        if tot > 0:
            p.weights[g] = _floor_weights(occ[g], WEIGHT_FLOOR)
        for m in range(M):
            if occ[g, m] <= 1e-10:
                continue
            mu = first[g, m] / occ[g, m]
            var = second[g, m] / occ[g, m] - mu * mu
            if np.any(var < var_floor):
                floored = True
            p.means[g, m] = mu
            p.variances[g, m] = np.maximum(var, var_floor)
    tc = stay_cnt + next_cnt
    upd = tc > 0
    p.self_p[upd] = np.clip(stay_cnt[upd] / tc[upd], TRANS_FLOOR, 1.0 - TRANS_FLOOR)
    return floored


def mixture_schedule(target: int) -> list:
    """Component counts visited while growing to ``target``: 1, 2, 4, ... capped at target."""
    out = [1]
    while out[-1] < target:
        out.append(min(out[-1] * 2, target))
    return out


def train_embedded(sequences, transcripts: Sequence[str], charset: str | None = None,
                   states: int = 6, gaussians: int = 32, iters: int = 4,
                   var_floor: float = VAR_FLOOR) -> CharacterModelSet:
    """Embedded Baum-Welch training of one left-right GMM-HMM per character.

    ``iters`` EM iterations are run at every mixture size of
    :func:`mixture_schedule`. The returned set's ``history`` holds one record
    per evaluated parameter set: ``(n_gaussians, iteration, log_likelihood)``,
    where iteration 0 is the state entering that stage.
    """
    seqs = [_as_frames(s) for s in sequences]
    words = list(transcripts)
    if len(seqs) != len(words):
        raise ValidationError(f"{len(seqs)} sequences but {len(words)} transcripts")
    if not seqs:
        raise InsufficientData("empty training corpus")
    if charset is None:
        charset = "".join(sorted(set("".join(words))))
    missing = set(charset) - set("".join(words))
    if missing:
        raise InsufficientData(f"charset symbols never seen in transcripts: {''.join(sorted(missing))!r}")
    unknown = set("".join(words)) - set(charset)
    if unknown:
        raise UnknownCharacter(f"transcripts use symbols outside the charset: {''.join(sorted(unknown))!r}")
    dims = {s.shape[1] for s in seqs}
    if len(dims) != 1:
        raise DimensionMismatch(f"sequences have mixed dimensions {sorted(dims)}")
    keep = [i for i, (X, w) in enumerate(zip(seqs, words)) if len(X) >= len(w) * states]
    if len(keep) < len(seqs):
        log.warning("skipping %d sequences shorter than their model", len(seqs) - len(keep))
    seqs = [seqs[i] for i in keep]
    words = [words[i] for i in keep]
    if not seqs:
        raise InsufficientData("no sequence is long enough for its transcript model")

    p = _flat_start(seqs, words, charset, states, var_floor)
    sym_index = {ch: i for i, ch in enumerate(charset)}
    batch = _Batch(seqs, [_state_indices(w, sym_index, states) for w in words])
    history = []
    floored = False
    if iters > 0:
        for m in mixture_schedule(gaussians):
            _split(p, m)
            for it in range(iters):
                ll, used, stats = _em_pass(p, batch, accumulate=True)
                history.append((m, it, ll))
                floored |= _m_step(p, stats, var_floor)
            ll, _, _ = _em_pass(p, batch, accumulate=False)
            history.append((m, iters, ll))
            log.debug("stage %d gaussians: log-likelihood %.3f", m, ll)
    if floored:
        warnings.warn("variance floor applied during re-estimation", VarianceFloorHit, stacklevel=2)
    return p.to_models(history)


def corpus_log_likelihood(models: CharacterModelSet, sequences, transcripts) -> float:
    total = 0.0
    for X, w in zip(sequences, transcripts):
        total += forward_log_likelihood(concat_word_model(models, w), X)
    return total


# -- persistence ------------------------------------------------------------


def save_models(models: CharacterModelSet, path: str | os.PathLike) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "charset": models.charset,
        "states": models.n_states,
        "gaussians": models.n_gaussians,
        "dim": models.dim,
        "models": [
            {"symbol": cm.symbol,
             "states": [
                 {"transition": [float(cm.self_prob[s]), float(cm.next_prob[s])],
                  "mixtures": [{"weight": float(g.weights[k]),
                                "mean": [float(v) for v in g.means[k]],
                                "var": [float(v) for v in g.variances[k]]}
                               for k in range(g.n_components)]}
                 for s, g in enumerate(cm.states)]}
            for cm in models.models.values()
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_models(path: str | os.PathLike) -> CharacterModelSet:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not an HMM model file ({exc})") from exc
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported HMM format/version")
    models = {}
    for rec in doc["models"]:
        states, sp, np_ = [], [], []
        for st in rec["states"]:
            mix = st["mixtures"]
            states.append(GMM(np.array([m["weight"] for m in mix]),
                              np.array([m["mean"] for m in mix], dtype=np.float64),
                              np.array([m["var"] for m in mix], dtype=np.float64)))
            sp.append(st["transition"][0])
            np_.append(st["transition"][1])
        models[rec["symbol"]] = CharacterModel(rec["symbol"], tuple(states), np.array(sp), np.array(np_))
    if "".join(models) != doc["charset"]:
        raise FormatError(f"{path}: charset header disagrees with model records")
    return CharacterModelSet(models, int(doc["states"]), int(doc["gaussians"]), int(doc["dim"]))
