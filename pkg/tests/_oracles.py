"""Slow, independent reference implementations used to check the package.

Nothing here imports from domadapt. Counting is done by explicit scans
rather than hashing, and edit distances by the textbook DP table.
"""

from __future__ import annotations

import math
import unicodedata
from collections import deque


def words(text, case_sensitive=False):
    """Whitespace split with leading/trailing punctuation peeled off one char at a time."""
    if not case_sensitive:
        text = text.lower()
    out = []
    for w in text.split():
        head, tail = [], []
        chars = list(w)
        while chars and unicodedata.category(chars[0])[0] == "P":
            head.append(chars.pop(0))
        while chars and unicodedata.category(chars[-1])[0] == "P":
            tail.insert(0, chars.pop())
        out += head + (["".join(chars)] if chars else []) + tail
    return out


def _grams(seq, n):
    return [tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)]


def _count(items, x):
    c = 0
    for y in items:
        if y == x:
            c += 1
    return c


def clipped_matches(hyp_grams, ref_grams):
    total = 0
    seen = []
    for g in hyp_grams:
        if g in seen:
            continue
        seen.append(g)
        total += min(_count(hyp_grams, g), _count(ref_grams, g))
    return total


def bleu(hyps, refs, case_sensitive=False):
    m = [0] * 4
    t = [0] * 4
    c = r = 0
    for h, ref in zip(hyps, refs):
        hw, rw = words(h, case_sensitive), words(ref, case_sensitive)
        c += len(hw)
        r += len(rw)
        for n in range(1, 5):
            hg, rg = _grams(hw, n), _grams(rw, n)
            m[n - 1] += clipped_matches(hg, rg)
            t[n - 1] += len(hg)
    if c == 0:
        return 0.0
    logs = []
    for mi, ti in zip(m, t):
        if ti == 0:
            continue
        if mi == 0:
            return 0.0
        logs.append(math.log(mi / ti))
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return 100 * bp * math.exp(sum(logs) / len(logs))


def chrf2(hyps, refs, case_sensitive=False):
    per = []
    for n in range(1, 7):
        m = hn = rn = 0
        for h, ref in zip(hyps, refs):
            if not case_sensitive:
                h, ref = h.lower(), ref.lower()
            hs = "".join(ch for ch in h if not ch.isspace())
            rs = "".join(ch for ch in ref if not ch.isspace())
            hg = [hs[i:i + n] for i in range(len(hs) - n + 1)]
            rg = [rs[i:i + n] for i in range(len(rs) - n + 1)]
            m += clipped_matches(hg, rg)
            hn += len(hg)
            rn += len(rg)
        if hn == 0 and rn == 0:
            continue
        if m == 0:
            per.append(0.0)
            continue
        p, rc = m / hn, m / rn
        per.append(5 * p * rc / (4 * p + rc))
    return 100 * sum(per) / len(per) if per else 0.0


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        for j in range(1, len(b) + 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1]))
        prev = cur
    return prev[-1]


def _moves(seq, max_len):
    n = len(seq)
    for i in range(n):
        for L in range(1, min(max_len, n - i) + 1):
            block = seq[i:i + L]
            rest = seq[:i] + seq[i + L:]
            for p in range(len(rest) + 1):
                if p == i:
                    continue
                yield i, L, p, rest[:p] + block + rest[p:]


def exact_ter_edits(hyp, ref, max_len=10):
    """Minimum over all shift sequences of (#shifts + edit distance); breadth-first, small inputs only."""
    hyp, ref = tuple(hyp), tuple(ref)
    best = levenshtein(hyp, ref)
    seen = {hyp}
    frontier = deque([(hyp, 0)])
    while frontier:
        seq, k = frontier.popleft()
        best = min(best, k + levenshtein(seq, ref))
        if k + 1 >= best:
            continue
        for *_, nxt in _moves(seq, max_len):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, k + 1))
    return best


def greedy_ter_edits(hyp, ref, max_len=10):
    """Greedy shifting: best improvement, block must occur in ref, first in (start, len, target) order."""
    hyp, ref = list(hyp), list(ref)
    ref_blocks = [ref[j:j + L] for L in range(1, max_len + 1) for j in range(len(ref) - L + 1)]
    shifts = 0
    d = levenshtein(hyp, ref)
    while True:
        best_gain, best_seq = 1, None
        for i, L, p, cand in _moves(hyp, max_len):
            if hyp[i:i + L] not in ref_blocks:
                continue
            gain = d - levenshtein(cand, ref)
            if gain > best_gain:
                best_gain, best_seq = gain, cand
        if best_seq is None:
            return shifts + d
        hyp, d, shifts = best_seq, d - best_gain, shifts + 1


def ter(hyps, refs, edits=exact_ter_edits, case_sensitive=False):
    e = n = 0
    for h, r in zip(hyps, refs):
        hw, rw = words(h, case_sensitive), words(r, case_sensitive)
        e += edits(hw, rw)
        n += len(rw)
    return 100 * e / n


def bm25_scores(docs_tokens, query_tokens, k1=1.5, b=0.75):
    """Per-document formula, summed over query tokens in order."""
    N = len(docs_tokens)
    avgdl = sum(len(d) for d in docs_tokens) / N
    out = []
    for d in docs_tokens:
        s = 0.0
        for t in query_tokens:
            tf = float(_count(d, t))
            if tf == 0:
                continue
            df = sum(1 for other in docs_tokens if t in other)
            idf = math.log((N - df + 0.5) / (df + 0.5) + 1.0)
            s += idf * (tf * (k1 + 1)) / (tf + k1 * (1 - b + b * len(d) / avgdl))
        out.append(s)
    return out


def replay_search(scores, patience, terminate=100.0, overflow_at=None):
    """Independent trace of the patience loop over scripted per-prefix scores.

    ``scores[k-1]`` is the score of the k-candidate prefix; ``overflow_at`` is
    the first prefix length that does not fit. Returns
    (iterations, best_prefix_len, best_score, stop_reason).
    """
    best_len, best = 0, None
    ref = 0.0
    bad = 0
    k = 0
    while True:
        if bad >= patience:
            return k, best_len, (best if best is not None else 0.0), "patience"
        if k == len(scores):
            return k, best_len, (best if best is not None else 0.0), "exhausted"
        if overflow_at is not None and k + 1 >= overflow_at:
            return k, best_len, (best if best is not None else 0.0), "prompt_too_long"
        k += 1
        s = scores[k - 1]
        if best is None or s > best:
            best, best_len = s, k
        if s >= terminate:
            return k, best_len, best, "terminate_score"
        bad = bad + 1 if s <= ref else 0
        ref = max(ref, s)


def brute_topn(q, e, n):
    """Full sort per query (one matrix-vector product each), float32 scores, ties by id."""
    import numpy as np

    q = np.asarray(q, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    qn = q / np.linalg.norm(q, axis=1, keepdims=True)
    en = e / np.linalg.norm(e, axis=1, keepdims=True)
    ids = np.empty((len(q), n), dtype=np.int64)
    sc = np.empty((len(q), n), dtype=np.float32)
    ent = np.arange(len(e))
    for i in range(len(q)):
        s = np.clip((en @ qn[i]).astype(np.float32), -1, 1)
        order = np.lexsort((ent, -s))[:n]
        ids[i] = order
        sc[i] = s[order]
    return ids, sc


# ---------------------------------------------------------------- BPE


def _merge_all(syms, a, b):
    out, i = [], 0
    while i < len(syms):
        if i + 1 < len(syms) and syms[i] == a and syms[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return tuple(out)


def bpe_learn(lines, num_merges):
    """Recount every pair each round; most frequent first, then the smallest pair."""
    words = {}
    for line in lines:
        for w in line.split():
            words[tuple(w)] = words.get(tuple(w), 0) + 1
    merges = []
    for _ in range(num_merges):
        stats = {}
        for syms, c in words.items():
            for p in zip(syms, syms[1:]):
                stats[p] = stats.get(p, 0) + c
        if not stats:
            break
        best = min(stats, key=lambda p: (-stats[p], p))
        if stats[best] < 2:
            break
        merges.append(best)
        merged = {}
        for syms, c in words.items():
            k = _merge_all(syms, *best)
            merged[k] = merged.get(k, 0) + c
        words = merged
    return merges


def bpe_apply(merges, text, marker="</w>"):
    out = []
    for w in text.split():
        syms = tuple(w)
        for a, b in merges:
            syms = _merge_all(syms, a, b)
        out.extend(syms[:-1] + (syms[-1] + marker,))
    return out
