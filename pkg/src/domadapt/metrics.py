"""Reference-based MT metrics (BLEU, chrF2, TER) and the significance tests built on them.

Every corpus metric is computed from per-segment sufficient statistics that
are summed before the final formula. The bootstrap test reuses those
statistics, so resampling never re-tokenizes.

Word tokenization (BLEU, TER, BM25): optional lowercasing, split on Unicode
whitespace, then every leading and trailing punctuation character becomes
its own token. ``"Hello, world!"`` gives ``["hello", ",", "world", "!"]``.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import kolmogorov

__all__ = [
    "MetricError",
    "MetricScore",
    "BootstrapResult",
    "KsResult",
    "tokenize",
    "bleu",
    "sentence_bleu",
    "chrf2",
    "ter",
    "edit_distance",
    "ter_edits",
    "pearson",
    "paired_bootstrap",
    "ks_two_sample",
    "METRICS",
]

MAX_ORDER = 4
CHRF_ORDER = 6
CHRF_BETA = 2.0
TER_MAX_SHIFT = 10

METRICS = ("bleu", "chrf2", "ter")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricScore:
    value: float
    metric: str

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class BootstrapResult:
    iterations: int
    sample_size: int
    wins_a: int
    wins_b: int
    ties: int
    significant: bool
    metric: str = "bleu"

    @property
    def winner(self) -> str | None:
        if self.wins_a > self.wins_b:
            return "a"
        if self.wins_b > self.wins_a:
            return "b"
        return None


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str, case_sensitive: bool = False) -> list[str]:
    if not case_sensitive:
        text = text.lower()
    out = []
    for word in text.split():
        lo, hi = 0, len(word)
        while lo < hi and _is_punct(word[lo]):
            lo += 1
        while hi > lo and _is_punct(word[hi - 1]):
            hi -= 1
        out.extend(word[:lo])
        if lo < hi:
            out.append(word[lo:hi])
        out.extend(word[hi:])
    return out


def _check_pair(hyps: Sequence[str], refs: Sequence[str]) -> None:
    if isinstance(hyps, str) or isinstance(refs, str):
        raise MetricError("hyps and refs must be sequences of segments, not strings")
    if len(hyps) != len(refs):
        raise MetricError(f"{len(hyps)} hypotheses but {len(refs)} references")
    if len(hyps) == 0:
        raise MetricError("need at least one segment")
    for i, r in enumerate(refs):
        if not r.strip():
            raise MetricError(f"empty reference segment at index {i}")


# ---------------------------------------------------------------- BLEU


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _bleu_stats(hyp: str, ref: str, case_sensitive: bool) -> list[int]:
    h = tokenize(hyp, case_sensitive)
    r = tokenize(ref, case_sensitive)
    matches, totals = [], []
    for n in range(1, MAX_ORDER + 1):
        hc = _ngram_counts(h, n)
        rc = _ngram_counts(r, n)
        matches.append(sum(min(c, rc[g]) for g, c in hc.items()))
        totals.append(max(len(h) - n + 1, 0))
    return matches + totals + [len(h), len(r)]


def _bleu_from_stats(stats, smooth: bool = False) -> float:
    matches = stats[:MAX_ORDER]
    totals = stats[MAX_ORDER:2 * MAX_ORDER]
    hyp_len, ref_len = stats[2 * MAX_ORDER], stats[2 * MAX_ORDER + 1]
    if hyp_len == 0:
        return 0.0
    log_p = []
    for m, t in zip(matches, totals):
        if t == 0:
            continue  # no hypothesis n-grams of this order: precision undefined, order dropped
        if m == 0:
            if not smooth:
                return 0.0
            log_p.append(math.log(1.0 / (2.0 * t)))
        else:
            log_p.append(math.log(m / t))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(sum(log_p) / len(log_p))


def bleu(hyps: Sequence[str], refs: Sequence[str], case_sensitive: bool = False) -> MetricScore:
    """Corpus BLEU with orders 1..4, clipped counts, brevity penalty, no smoothing.

    An order for which the whole hypothesis side has no n-grams is left out
    of the geometric mean, so identical corpora of short segments score 100.
    """
    _check_pair(hyps, refs)
    total = np.zeros(2 * MAX_ORDER + 2, dtype=np.int64)
    for h, r in zip(hyps, refs):
        total += _bleu_stats(h, r, case_sensitive)
    return MetricScore(_bleu_from_stats(total.tolist()), "bleu")


def sentence_bleu(hyp: str, ref: str, case_sensitive: bool = False) -> float:
    """Smoothed segment BLEU used for QE labels and reference-guided search.

    A zero match count at order n is floored to precision ``1 / (2 * total_n)``;
    orders longer than the hypothesis are dropped from the geometric mean, as
    in corpus BLEU.
    """
    if not ref.strip():
        raise MetricError("empty reference segment")
    return _bleu_from_stats(_bleu_stats(hyp, ref, case_sensitive), smooth=True)


# ---------------------------------------------------------------- chrF2


def _chars(text: str, case_sensitive: bool) -> str:
    if not case_sensitive:
        text = text.lower()
    return "".join(text.split())


def _chrf_stats(hyp: str, ref: str, case_sensitive: bool) -> list[int]:
    h = _chars(hyp, case_sensitive)
    r = _chars(ref, case_sensitive)
    out = []
    for n in range(1, CHRF_ORDER + 1):
        hc = Counter(h[i:i + n] for i in range(len(h) - n + 1))
        rc = Counter(r[i:i + n] for i in range(len(r) - n + 1))
        out += [sum(min(c, rc[g]) for g, c in hc.items()), sum(hc.values()), sum(rc.values())]
    return out


def _chrf_from_stats(stats) -> float:
    b2 = CHRF_BETA ** 2
    scores = []
    for n in range(CHRF_ORDER):
        m, h, r = stats[3 * n:3 * n + 3]
        if h == 0 and r == 0:
            continue  # neither side has n-grams this long
        if m == 0:
            scores.append(0.0)
            continue
        p, rec = m / h, m / r
        scores.append((1 + b2) * p * rec / (b2 * p + rec))
    if not scores:
        return 0.0
    return 100.0 * sum(scores) / len(scores)


def chrf2(hyps: Sequence[str], refs: Sequence[str], case_sensitive: bool = False) -> MetricScore:
    """Character 1..6-gram F-score with beta=2, whitespace removed.

    Matches and n-gram totals are pooled over the corpus per order, F2 is taken
    per order and averaged over the orders that occur on either side.
    """
    _check_pair(hyps, refs)
    total = np.zeros(3 * CHRF_ORDER, dtype=np.int64)
    for h, r in zip(hyps, refs):
        total += _chrf_stats(h, r, case_sensitive)
    return MetricScore(_chrf_from_stats(total.tolist()), "chrf2")


# ---------------------------------------------------------------- TER


def _peq(pattern: Sequence[int]) -> dict[int, int]:
    peq: dict[int, int] = {}
    for i, sym in enumerate(pattern):
        peq[sym] = peq.get(sym, 0) | (1 << i)
    return peq


def _myers(peq: dict[int, int], m: int, text: Sequence[int]) -> int:
    # bit-parallel Levenshtein distance (Myers 1999, Hyyro's formulation)
    if m == 0:
        return len(text)
    mask = (1 << m) - 1
    high = 1 << (m - 1)
    pv, mv, score = mask, 0, m
    for sym in text:
        eq = peq.get(sym, 0)
        xv = eq | mv
        xh = ((((eq & pv) + pv) & mask) ^ pv) | eq
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & high:
            score += 1
        elif mh & high:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
    return score


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance between two token sequences (unit costs)."""
    ids: dict = {}
    ai = [ids.setdefault(t, len(ids)) for t in a]
    bi = [ids.setdefault(t, len(ids)) for t in b]
    return _myers(_peq(bi), len(bi), ai)


def ter_edits(hyp_tokens: Sequence[str], ref_tokens: Sequence[str], max_shift: int = TER_MAX_SHIFT) -> int:
    """Number of TER edits (insertions, deletions, substitutions and shifts).

    Shifts are found greedily: every hypothesis block of up to ``max_shift``
    tokens that also occurs in the reference is tried at every other
    position; the move with the largest edit-distance reduction is applied
    (first one in (start, length, target) order on ties) as long as it lowers
    the total edit count, i.e. saves at least two edits since it costs one.
    """
    ids: dict = {}
    hyp = [ids.setdefault(t, len(ids)) for t in hyp_tokens]
    ref = [ids.setdefault(t, len(ids)) for t in ref_tokens]
    peq = _peq(ref)
    m = len(ref)
    ref_grams = set()
    for n in range(1, max_shift + 1):
        for j in range(m - n + 1):
            ref_grams.add(tuple(ref[j:j + n]))

    shifts = 0
    dist = _myers(peq, m, hyp)
    while dist > 1:
        best_gain, best = 1, None
        for i in range(len(hyp)):
            for length in range(1, min(max_shift, len(hyp) - i) + 1):
                block = hyp[i:i + length]
                if tuple(block) not in ref_grams:
                    break
                rest = hyp[:i] + hyp[i + length:]
                for p in range(len(rest) + 1):
                    if p == i:
                        continue
                    cand = rest[:p] + block + rest[p:]
                    gain = dist - _myers(peq, m, cand)
                    if gain > best_gain:
                        best_gain, best = gain, cand
        if best is None:
            break
        shifts += 1
        hyp = best
        dist -= best_gain
    return shifts + dist


def _ter_stats(hyp: str, ref: str, case_sensitive: bool) -> list[int]:
    h = tokenize(hyp, case_sensitive)
    r = tokenize(ref, case_sensitive)
    return [ter_edits(h, r), len(r)]


def _ter_from_stats(stats) -> float:
    edits, ref_len = stats
    return 100.0 * edits / ref_len


def ter(hyps: Sequence[str], refs: Sequence[str], case_sensitive: bool = False) -> MetricScore:
    """Corpus TER: total edits over total reference tokens, times 100. Lower is better."""
    _check_pair(hyps, refs)
    total = np.zeros(2, dtype=np.int64)
    for h, r in zip(hyps, refs):
        total += _ter_stats(h, r, case_sensitive)
    return MetricScore(_ter_from_stats(total.tolist()), "ter")


_STATS = {
    "bleu": (_bleu_stats, _bleu_from_stats, True),
    "chrf2": (_chrf_stats, _chrf_from_stats, True),
    "ter": (_ter_stats, _ter_from_stats, False),
}


def segment_stats(metric: str, hyps, refs, case_sensitive: bool = False) -> np.ndarray:
    """Per-segment sufficient statistics, one row per segment."""
    if metric not in _STATS:
        raise MetricError(f"unknown metric {metric!r}; expected one of {METRICS}")
    _check_pair(hyps, refs)
    fn = _STATS[metric][0]
    return np.array([fn(h, r, case_sensitive) for h, r in zip(hyps, refs)], dtype=np.int64)


def score_stats(metric: str, stats: np.ndarray) -> float:
    """Corpus score from summed statistics (``stats`` may be 1-D or per-segment 2-D)."""
    stats = np.asarray(stats)
    if stats.ndim == 2:
        stats = stats.sum(axis=0)
    return _STATS[metric][1](stats.tolist())


# ---------------------------------------------------------------- statistics


def pearson(x: Sequence[float], y: Sequence[float]) -> MetricScore:
    """Sample Pearson correlation on the -1..1 scale."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("pearson needs two 1-D sequences of equal length")
    if len(x) < 2:
        raise MetricError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise MetricError("pearson is undefined for a constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return MetricScore(min(1.0, max(-1.0, r)), "pearson")


def paired_bootstrap(
    hyps_a: Sequence[str],
    hyps_b: Sequence[str],
    refs: Sequence[str],
    metric: str = "bleu",
    iterations: int = 1000,
    sample_size: int | None = None,
    seed: int = 0,
    case_sensitive: bool = False,
) -> BootstrapResult:
    """Paired bootstrap resampling over segments.

    Iteration ``i`` draws ``sample_size`` indices with replacement from
    ``numpy.random.default_rng([seed, i])`` and scores both systems on the
    same sample. Ties are counted separately. The difference is significant
    when one system wins at least 95% of the iterations.
    """
    _check_pair(hyps_a, refs)
    _check_pair(hyps_b, refs)
    n = len(refs)
    if sample_size is None:
        sample_size = n
    if iterations < 1:
        raise MetricError("iterations must be >= 1")
    if not 1 <= sample_size <= n:
        raise MetricError(f"sample_size must be in 1..{n}, got {sample_size}")
    higher_better = _STATS[metric][2] if metric in _STATS else None
    if higher_better is None:
        raise MetricError(f"unknown metric {metric!r}; expected one of {METRICS}")
    sa = segment_stats(metric, hyps_a, refs, case_sensitive)
    sb = segment_stats(metric, hyps_b, refs, case_sensitive)

    wins_a = wins_b = ties = 0
    for it in range(iterations):
        idx = np.random.default_rng([seed, it]).integers(0, n, size=sample_size)
        a = score_stats(metric, sa[idx])
        b = score_stats(metric, sb[idx])
        if a == b:
            ties += 1
        elif (a > b) == higher_better:
            wins_a += 1
        else:
            wins_b += 1
    significant = max(wins_a, wins_b) / iterations >= 0.95
    return BootstrapResult(iterations, sample_size, wins_a, wins_b, ties, significant, metric)


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> KsResult:
    """Two-sample Kolmogorov-Smirnov test.

    The statistic is the largest absolute ECDF gap over the pooled values; the
    p-value is the asymptotic Kolmogorov survival function at ``sqrt(en) * D``
    with ``en = na * nb / (na + nb)``.
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise MetricError("ks_two_sample needs two non-empty samples")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    en = a.size * b.size / (a.size + b.size)
    p = float(kolmogorov(math.sqrt(en) * d))
    return KsResult(d, min(1.0, max(0.0, p)))
