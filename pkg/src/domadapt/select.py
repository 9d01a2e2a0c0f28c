"""Semantic search of out-of-domain entries against in-domain queries, and sub-corpus building.

The search is exhaustive. Entries are processed in fixed tiles of global
indices, so the per-pair scores do not depend on how tiles are spread over
workers; results are merged in tile order and are bit-identical for any
worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._io import atomic_open
from .corpus import Corpus, SentencePair
from .embed import as_matrix

__all__ = [
    "SelectError",
    "RankedMatch",
    "Ranking",
    "SubCorpus",
    "cosine",
    "rank_topn",
    "raw_layers",
    "build_subcorpora",
    "centroid",
    "centroid_similarity",
    "write_selection_csv",
]

TILE = 4096


class SelectError(ValueError):
    pass


@dataclass(frozen=True)
class RankedMatch:
    query_id: int
    entry_id: int
    score: float
    rank: int


@dataclass(frozen=True, eq=False)
class Ranking:
    """Top-n result. Row ``q`` of ``entry_ids``/``scores`` is query ``q``; ``-1`` pads missing slots."""

    entry_ids: np.ndarray
    scores: np.ndarray
    skipped_queries: tuple[int, ...] = ()
    skipped_entries: tuple[int, ...] = ()
    matches: list[RankedMatch] = field(default_factory=list)

    def __iter__(self):
        return iter(self.matches)

    def __len__(self):
        return len(self.matches)

    def __getitem__(self, i):
        return self.matches[i]


@dataclass(frozen=True)
class SubCorpus:
    level: int
    pairs: tuple[SentencePair, ...]
    stacked: bool = True

    def __len__(self):
        return len(self.pairs)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise SelectError(f"dimension mismatch: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise SelectError("cosine similarity is undefined for a zero vector")
    return float(min(1.0, max(-1.0, (a @ b) / (na * nb))))


def _unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = x.astype(np.float64)
    norms = np.linalg.norm(x, axis=1)
    valid = norms > 0
    x[valid] /= norms[valid, None]
    return x, valid


def _tile_topn(qn, en, valid, start, n):
    s = (qn @ en.T).astype(np.float32)
    np.clip(s, -1.0, 1.0, out=s)
    s[:, ~valid] = -np.inf
    # stable sort keeps ascending entry ids among equal scores
    top = np.argsort(-s, axis=1, kind="stable")[:, :n]
    return top + start, np.take_along_axis(s, top, axis=1)


def rank_topn(queries, entries, n: int = 6, workers: int = 1, strict: bool = False, tile: int = TILE) -> Ranking:
    """For every query, the ``n`` entries with the highest cosine score.

    Scores are dot products of unit vectors accumulated in float64 and stored
    as float32; ties go to the smaller entry id. Zero-vector rows cannot be
    scored: they are listed in ``skipped_queries``/``skipped_entries``, or
    raise :class:`SelectError` when ``strict``.
    """
    q = as_matrix(queries)
    e = as_matrix(entries)
    if n < 1:
        raise SelectError("n must be >= 1")
    if q.rows and e.rows and q.dims != e.dims:
        raise SelectError(f"query dims {q.dims} != entry dims {e.dims}")
    if n > e.rows:
        raise SelectError(f"n={n} exceeds the number of entries ({e.rows})")
    qn, q_valid = _unit_rows(q.data)
    en, e_valid = _unit_rows(e.data)
    skipped_q = tuple(int(i) for i in np.flatnonzero(~q_valid))
    skipped_e = tuple(int(i) for i in np.flatnonzero(~e_valid))
    if strict and (skipped_q or skipped_e):
        raise SelectError(f"zero vectors: queries {list(skipped_q)[:10]}, entries {list(skipped_e)[:10]}")

    q_idx = np.flatnonzero(q_valid)
    qv = qn[q_idx]
    starts = list(range(0, e.rows, tile))

    def job(start):
        stop = min(start + tile, e.rows)
        return _tile_topn(qv, en[start:stop], e_valid[start:stop], start, n)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(s) for s in starts]

    ids = np.full((q.rows, n), -1, dtype=np.int64)
    scores = np.full((q.rows, n), np.nan, dtype=np.float32)
    if len(q_idx) and parts:
        cand_ids = np.concatenate([p[0] for p in parts], axis=1)
        cand_s = np.concatenate([p[1] for p in parts], axis=1)
        order = np.argsort(-cand_s, axis=1, kind="stable")[:, :n]
        top_ids = np.take_along_axis(cand_ids, order, axis=1)
        top_s = np.take_along_axis(cand_s, order, axis=1)
        missing = ~np.isfinite(top_s)
        top_ids[missing] = -1
        top_s[missing] = np.nan
        ids[q_idx] = top_ids
        scores[q_idx] = top_s

    matches = []
    for qi in q_idx:
        for r in range(n):
            eid = int(ids[qi, r])
            if eid < 0:
                break
            matches.append(RankedMatch(int(qi), eid, float(scores[qi, r]), r + 1))
    return Ranking(ids, scores, skipped_q, skipped_e, matches)


def _layers(matches: Sequence[RankedMatch], ood: Corpus, n: int) -> list[list[SentencePair]]:
    lookup = ood.by_id()
    layers: list[list[tuple[int, SentencePair]]] = [[] for _ in range(n)]
    for m in matches:
        if not 1 <= m.rank <= n:
            raise SelectError(f"match rank {m.rank} outside 1..{n}")
        pair = lookup.get(m.entry_id)
        if pair is None:
            raise SelectError(f"entry id {m.entry_id} not in corpus {ood.name!r}")
        layers[m.rank - 1].append((m.query_id, pair))
    return [[p for _, p in sorted(layer, key=lambda t: t[0])] for layer in layers]


def _dedup_pairs(pairs, seen=None) -> list[SentencePair]:
    seen = set() if seen is None else seen
    out = []
    for p in pairs:
        key = (p.src, p.tgt)
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


def raw_layers(matches: Sequence[RankedMatch], ood: Corpus, n: int = 6) -> list[SubCorpus]:
    """Layer ``k`` holds the out-of-domain pair of every rank-``k`` match (deduplicated)."""
    return [SubCorpus(k + 1, tuple(_dedup_pairs(layer)), stacked=False)
            for k, layer in enumerate(_layers(matches, ood, n))]


def build_subcorpora(matches: Sequence[RankedMatch], ood: Corpus, n: int = 6) -> list[SubCorpus]:
    """Stacked sub-corpora: level ``k`` is the deduplicated union of layers 1..k.

    Duplicates keep their first occurrence in layer order, then query order.
    """
    out = []
    seen: set = set()
    acc: list[SentencePair] = []
    for k, layer in enumerate(_layers(matches, ood, n)):
        acc.extend(_dedup_pairs(layer, seen))
        out.append(SubCorpus(k + 1, tuple(acc), stacked=True))
    return out


def centroid(m) -> np.ndarray:
    m = as_matrix(m)
    if m.rows == 0:
        raise SelectError("centroid of an empty matrix")
    return m.data.astype(np.float64).mean(axis=0)


def centroid_similarity(a, b) -> float:
    return cosine(centroid(a), centroid(b))


def write_selection_csv(path, queries: Sequence[str], ranking: Ranking, ood: Corpus, n: int | None = None) -> None:
    """One row per query: ``Query, top1_src, top1_trg, top1_score, ..., topN_score``."""
    n = ranking.entry_ids.shape[1] if n is None else n
    lookup = ood.by_id()
    header = ["Query"]
    for k in range(1, n + 1):
        header += [f"top{k}_src", f"top{k}_trg", f"top{k}_score"]
    with atomic_open(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for qi, text in enumerate(queries):
            row = [text]
            for r in range(n):
                eid = int(ranking.entry_ids[qi, r])
                if eid < 0:
                    row += ["", "", ""]
                else:
                    p = lookup[eid]
                    row += [p.src, p.tgt, f"{float(ranking.scores[qi, r]):.6f}"]
            w.writerow(row)
