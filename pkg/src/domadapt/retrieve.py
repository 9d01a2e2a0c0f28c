"""Lexical retrieval of in-context example candidates.

BM25 is the Okapi form with ``idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)``,
which is never negative. Query tokens are scored once per occurrence.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import Corpus, SentencePair
from .metrics import bleu, tokenize

__all__ = [
    "RetrievalError",
    "Bm25Index",
    "CoverageState",
    "build_index",
    "topk",
    "rbm25_rerank",
    "random_select",
    "task_level_select",
    "dev_bleu_oracle",
]


class RetrievalError(ValueError):
    pass


@dataclass(eq=False)
class Bm25Index:
    doc_ids: np.ndarray
    doc_tokens: list[list[str]]
    doc_lens: np.ndarray
    doc_freq: dict[str, int]
    postings: dict[str, tuple[np.ndarray, np.ndarray]]
    k1: float = 1.5
    b: float = 0.75

    @property
    def doc_count(self) -> int:
        return len(self.doc_tokens)

    @property
    def avg_doc_len(self) -> float:
        return float(self.doc_lens.mean()) if self.doc_count else 0.0

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        n = self.doc_count
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def term_freqs(self, pos: int) -> Counter:
        return Counter(self.doc_tokens[pos])

    def scores(self, query: str) -> np.ndarray:
        """BM25 score of every document, by position."""
        out = np.zeros(self.doc_count, dtype=np.float64)
        avgdl = self.avg_doc_len
        k1, b = self.k1, self.b
        for t in tokenize(query):
            post = self.postings.get(t)
            if post is None:
                continue
            pos, tf = post
            dl = self.doc_lens[pos]
            idf = self.idf(t)
            out[pos] += idf * (tf * (k1 + 1)) / (tf + k1 * (1 - b + b * dl / avgdl))
        return out


@dataclass
class CoverageState:
    weights: dict[tuple[str, ...], float]
    selected: list[int]

    def gain(self, grams: set) -> float:
        return sum(self.weights[g] for g in grams if g in self.weights)

    def cover(self, grams: set, discount: float) -> None:
        for g in grams:
            if g in self.weights:
                self.weights[g] *= discount


def build_index(docs: Sequence[str], k1: float = 1.5, b: float = 0.75, ids: Sequence[int] | None = None) -> Bm25Index:
    if len(docs) == 0:
        raise RetrievalError("cannot index an empty document list")
    ids = np.arange(len(docs)) if ids is None else np.asarray(ids, dtype=np.int64)
    if len(ids) != len(docs):
        raise RetrievalError("ids and docs differ in length")
    toks = [tokenize(d) for d in docs]
    lens = np.array([len(t) for t in toks], dtype=np.float64)
    if lens.sum() == 0:
        raise RetrievalError("all documents are empty after tokenization")
    post_pos: dict[str, list[int]] = {}
    post_tf: dict[str, list[int]] = {}
    for i, t in enumerate(toks):
        for term, c in Counter(t).items():
            post_pos.setdefault(term, []).append(i)
            post_tf.setdefault(term, []).append(c)
    postings = {
        term: (np.array(post_pos[term], dtype=np.int64), np.array(post_tf[term], dtype=np.float64))
        for term in post_pos
    }
    df = {term: len(p) for term, p in post_pos.items()}
    return Bm25Index(ids, toks, lens, df, postings, k1, b)


def topk(index: Bm25Index, query: str, K: int = 16) -> list[tuple[int, float]]:
    """Top-``K`` ``(doc_id, score)`` by descending score, ties to the smaller id; zero scores dropped."""
    if K < 1:
        raise RetrievalError("K must be >= 1")
    s = index.scores(query)
    hit = np.flatnonzero(s > 0)
    if hit.size == 0:
        return []
    order = hit[np.lexsort((index.doc_ids[hit], -s[hit]))][:K]
    return [(int(index.doc_ids[i]), float(s[i])) for i in order]


def _grams(tokens: Sequence[str], max_order: int) -> set[tuple[str, ...]]:
    return {
        tuple(tokens[i:i + n])
        for n in range(1, max_order + 1)
        for i in range(len(tokens) - n + 1)
    }


def rbm25_rerank(
    index: Bm25Index,
    query: str,
    candidates: Sequence[int],
    max_order: int = 4,
    K: int = 16,
    discount: float = 0.0,
) -> list[int]:
    """Greedy coverage re-ranking of BM25 candidates.

    Every query n-gram (orders 1..``max_order``) starts with weight 1. Each
    step picks the candidate whose n-grams carry the most remaining weight
    (earlier candidates win ties) and multiplies the weights it covered by
    ``discount``. Stops after ``K`` picks or when no candidate adds weight.
    """
    if max_order < 1:
        raise RetrievalError("max_order must be >= 1")
    if not 0.0 <= discount < 1.0:
        raise RetrievalError("discount must be in [0, 1)")
    pos_of = {int(d): i for i, d in enumerate(index.doc_ids)}
    target = _grams(tokenize(query), max_order)
    state = CoverageState({g: 1.0 for g in target}, [])
    pool = []
    for doc_id in dict.fromkeys(int(c) for c in candidates):
        if doc_id not in pos_of:
            raise RetrievalError(f"candidate {doc_id} is not in the index")
        pool.append((doc_id, _grams(index.doc_tokens[pos_of[doc_id]], max_order) & target))

    while pool and len(state.selected) < K:
        best_i, best_gain = -1, 0.0
        for i, (_, grams) in enumerate(pool):
            g = state.gain(grams)
            if g > best_gain:
                best_i, best_gain = i, g
        if best_i < 0:
            break
        doc_id, grams = pool.pop(best_i)
        state.selected.append(doc_id)
        state.cover(grams, discount)
    return state.selected


Oracle = Callable[[list[SentencePair], Sequence[str]], float]


def random_select(
    pool: Corpus,
    p: int,
    trials: int,
    dev_sources: Sequence[str],
    oracle: Oracle,
    seed: int = 0,
) -> list[SentencePair]:
    """Best of ``trials`` random ICE sets of size ``p``, as judged by ``oracle`` on the dev sources.

    Trial ``t`` draws ``p`` distinct pool positions from
    ``numpy.random.default_rng([seed, t])``; the earliest trial wins ties.
    """
    if trials < 1:
        raise RetrievalError("trials must be >= 1")
    if not 0 <= p <= len(pool):
        raise RetrievalError(f"p={p} must be in 0..{len(pool)}")
    best, best_score = None, -math.inf
    for t in range(trials):
        idx = np.random.default_rng([seed, t]).choice(len(pool), size=p, replace=False)
        ices = [pool[int(i)] for i in idx]
        try:
            score = float(oracle(ices, dev_sources))
        except Exception as e:
            raise RetrievalError(f"oracle failed on trial {t}: {e}") from e
        if best is None or score > best_score:
            best, best_score = ices, score
    return best


def task_level_select(pool: Corpus, p: int, dev_sources, oracle: Oracle, seed: int = 0, trials: int = 100):
    """The random baseline with many more trials (100 by default)."""
    return random_select(pool, p, trials, dev_sources, oracle, seed)


def dev_bleu_oracle(translator, dev_refs: Sequence[str]) -> Oracle:
    """Oracle scoring an ICE set by corpus BLEU of the dev-set translations it prompts."""
    from .icesearch import IceCandidate, build_prompt

    def oracle(ices, dev_sources):
        cands = [IceCandidate(p.src, p.tgt, i + 1, 0.0) for i, p in enumerate(ices)]
        hyps = [translator.translate(build_prompt(cands, s)) for s in dev_sources]
        return bleu(hyps, list(dev_refs)).value

    return oracle
