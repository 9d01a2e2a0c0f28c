"""Byte-pair encoding, vocabularies and the fine-tuning configuration analysis.

Merges are learned and applied over the characters of each word; the
end-of-word marker is not a merge symbol. It is appended to the last
subword on output, so ``"lower"`` may come out as ``["low", "er</w>"]``.
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ._io import atomic_open, read_lines

__all__ = [
    "VocabError",
    "BpeModel",
    "Vocabulary",
    "FtConfig",
    "OverlapReport",
    "SOURCES",
    "learn_bpe",
    "apply_bpe",
    "apply_bpe_lines",
    "detokenize",
    "merge_ops_for_size",
    "build_vocab",
    "enumerate_configs",
    "overlap_report",
    "combine_for_bpe",
]

MARKER = "</w>"
SOURCES = ("D", "E", "D+E")


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class BpeModel:
    merges: tuple[tuple[str, str], ...]
    end_of_word_marker: str = MARKER

    def __post_init__(self):
        object.__setattr__(self, "merges", tuple(tuple(m) for m in self.merges))
        if len(set(self.merges)) != len(self.merges):
            raise VocabError("duplicate merge pair")

    def save(self, path) -> None:
        with atomic_open(path) as f:
            f.write(f"#bpe-v1 marker={self.end_of_word_marker}\n")
            for a, b in self.merges:
                f.write(f"{a} {b}\n")

    @classmethod
    def load(cls, path) -> "BpeModel":
        lines = read_lines(path)
        if not lines or not lines[0].startswith("#bpe-v1 marker="):
            raise VocabError(f"{path}: missing '#bpe-v1 marker=' header")
        marker = lines[0][len("#bpe-v1 marker="):]
        merges = []
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split(" ")
            if len(parts) != 2 or not all(parts):
                raise VocabError(f"{path}: line {lineno}: expected 'left right'")
            merges.append((parts[0], parts[1]))
        return cls(tuple(merges), marker)


class Vocabulary(Counter):
    """Token -> frequency."""

    def save(self, path) -> None:
        with atomic_open(path) as f:
            for tok, c in sorted(self.items(), key=lambda kv: (-kv[1], kv[0])):
                f.write(f"{tok} {c}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        v = cls()
        for lineno, line in enumerate(read_lines(path), start=1):
            tok, _, count = line.rpartition(" ")
            if not tok or not count.isdigit() or int(count) < 1:
                raise VocabError(f"{path}: line {lineno}: expected 'token count'")
            v[tok] = int(count)
        return v


@dataclass(frozen=True)
class FtConfig:
    id: str
    bpe_source: str
    vocab_source: str


@dataclass(frozen=True)
class OverlapReport:
    src_overlap_pct: float
    tgt_overlap_pct: float
    new_src_tokens: int
    new_tgt_tokens: int
    new_token_filter: str = field(default="none: raw set difference")


def _split_word(word: str) -> tuple[str, ...]:
    return tuple(word)


def _merge_word(syms: tuple[str, ...], a: str, b: str) -> tuple[str, ...]:
    out = []
    i, n = 0, len(syms)
    while i < n:
        if i + 1 < n and syms[i] == a and syms[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return tuple(out)


def _pairs(syms: Sequence[str]) -> Counter:
    return Counter(zip(syms, syms[1:]))


def learn_bpe(corpus_side: Sequence[str], num_merges: int, marker: str = MARKER) -> BpeModel:
    """Learn up to ``num_merges`` merges from whitespace-tokenized lines.

    Each step merges the most frequent adjacent pair (weighted by word
    counts); equal frequencies go to the lexicographically smallest
    ``(left, right)``. Learning stops early once no pair occurs twice.
    """
    if num_merges < 0:
        raise VocabError("num_merges must be >= 0")
    if len(corpus_side) == 0:
        raise VocabError("cannot learn BPE from an empty corpus")
    counts = Counter(w for line in corpus_side for w in line.split())
    if not counts:
        raise VocabError("corpus has no words")
    words = [_split_word(w) for w in counts]
    freqs = list(counts.values())

    stats: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = {}
    for i, syms in enumerate(words):
        for pair, c in _pairs(syms).items():
            stats[pair] += c * freqs[i]
            where.setdefault(pair, set()).add(i)
    heap = [(-c, pair) for pair, c in stats.items()]
    heapq.heapify(heap)

    merges: list[tuple[str, str]] = []
    while len(merges) < num_merges and heap:
        neg, pair = heapq.heappop(heap)
        if stats.get(pair, 0) != -neg:
            continue  # stale entry
        if -neg < 2:
            break
        merges.append(pair)
        a, b = pair
        touched: set[tuple[str, str]] = set()
        for i in where.pop(pair, ()):
            old = words[i]
            new = _merge_word(old, a, b)
            if new == old:
                continue
            f = freqs[i]
            for p, c in _pairs(old).items():
                stats[p] -= c * f
                touched.add(p)
            for p, c in _pairs(new).items():
                stats[p] += c * f
                touched.add(p)
                where.setdefault(p, set()).add(i)
            words[i] = new
        stats.pop(pair, None)
        touched.discard(pair)
        for p in touched:
            c = stats.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, p))
            else:
                stats.pop(p, None)
    return BpeModel(tuple(merges), marker)


class _Encoder:
    def __init__(self, model: BpeModel):
        self.marker = model.end_of_word_marker
        self.merges = model.merges
        self.ranks = {pair: r for r, pair in enumerate(model.merges)}
        self.cache: dict[str, tuple[str, ...]] = {}

    def word(self, w: str) -> tuple[str, ...]:
        hit = self.cache.get(w)
        if hit is not None:
            return hit
        syms = _split_word(w)
        last = -1
        while len(syms) > 1:
            # lowest-ranked merge not yet passed; same result as applying all merges in order
            best = None
            for pair in zip(syms, syms[1:]):
                r = self.ranks.get(pair)
                if r is not None and r > last and (best is None or r < best):
                    best = r
            if best is None:
                break
            syms = _merge_word(syms, *self.merges[best])
            last = best
        syms = syms[:-1] + (syms[-1] + self.marker,)
        self.cache[w] = syms
        return syms


def apply_bpe(model: BpeModel, text: str, _encoder: _Encoder | None = None) -> list[str]:
    """Segment ``text`` into subword tokens; word ends carry the marker."""
    enc = _encoder or _Encoder(model)
    out: list[str] = []
    for w in text.split():
        out.extend(enc.word(w))
    return out


def apply_bpe_lines(model: BpeModel, lines: Iterable[str]) -> list[list[str]]:
    enc = _Encoder(model)
    return [apply_bpe(model, ln, enc) for ln in lines]


def detokenize(tokens: Sequence[str], marker: str = MARKER) -> str:
    """Undo :func:`apply_bpe`: join subwords and put a space at each word end."""
    words, cur = [], []
    for t in tokens:
        if t.endswith(marker):
            cur.append(t[: -len(marker)])
            words.append("".join(cur))
            cur = []
        else:
            cur.append(t)
    if cur:
        words.append("".join(cur))
    return " ".join(words)


def merge_ops_for_size(line_count: int) -> int:
    """Merge budget by corpus size: 8K below 100K lines, 30K up to 1M, 50K above."""
    if line_count < 0:
        raise VocabError("line_count must be >= 0")
    if line_count < 100_000:
        return 8_000
    if line_count <= 1_000_000:
        return 30_000
    return 50_000


def build_vocab(tokens: Iterable[str]) -> Vocabulary:
    v = Vocabulary()
    for t in tokens:
        if t:
            v[t] += 1
    return v


def enumerate_configs() -> list[FtConfig]:
    """The seven consistent (BPE model, vocabulary source) pairings, C1..C7.

    A BPE model learned on D+E is only paired with a D+E vocabulary.
    """
    out = []
    for bpe in ("D", "E", "D+E"):
        for voc in ("D", "D+E", "E"):
            if bpe == "D+E" and voc != "D+E":
                continue
            out.append(FtConfig(f"C{len(out) + 1}", bpe, voc))
    return out


def _overlap(config: Counter, base: Counter) -> tuple[float, int]:
    total = sum(base.values())
    if total <= 0:
        raise VocabError("base vocabulary is empty")
    kept = sum(c for tok, c in base.items() if tok in config)
    new = sum(1 for tok in config if tok not in base)
    return 100.0 * kept / total, new


def overlap_report(config_vocab_src, config_vocab_tgt, base_vocab_src, base_vocab_tgt) -> OverlapReport:
    """Frequency-weighted share of each base vocabulary kept by the configuration's vocabulary.

    New-token counts are the raw set difference; no frequency filter is applied.
    """
    src_pct, src_new = _overlap(config_vocab_src, base_vocab_src)
    tgt_pct, tgt_new = _overlap(config_vocab_tgt, base_vocab_tgt)
    return OverlapReport(src_pct, tgt_pct, src_new, tgt_new)


def combine_for_bpe(d_lines: Sequence[str], e_lines: Sequence[str], seed: int = 0) -> list[str]:
    """D+E training text: E replicated to the size of D, concatenated and shuffled."""
    from .qedata import mix_oversample

    return mix_oversample(d_lines, e_lines, seed=seed, mode="replicate_id")
