"""Parallel corpus data model, TSV/JSONL I/O, deduplication and splitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable

import numpy as np

from ._io import LineDecodeError, atomic_open, read_lines

__all__ = [
    "CorpusError",
    "SentencePair",
    "Corpus",
    "SplitSpec",
    "load_corpus",
    "write_corpus",
    "dedup",
    "split",
]


class CorpusError(ValueError):
    """Malformed corpus input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class SentencePair:
    id: int
    src: str
    tgt: str = ""
    tag: str | None = None

    def __post_init__(self):
        if self.id < 0:
            raise CorpusError(f"negative id {self.id}")
        if not self.src.strip():
            raise CorpusError("empty source sentence")


@dataclass(frozen=True)
class Corpus:
    name: str
    pairs: tuple[SentencePair, ...] = ()
    domain_tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        prev = -1
        for p in self.pairs:
            if p.id <= prev:
                raise CorpusError(f"ids must be strictly increasing (got {p.id} after {prev})")
            prev = p.id

    @classmethod
    def from_texts(cls, name, srcs: Iterable[str], tgts: Iterable[str] | None = None, domain_tag=None):
        srcs = list(srcs)
        tgts = [""] * len(srcs) if tgts is None else list(tgts)
        if len(tgts) != len(srcs):
            raise CorpusError(f"{len(srcs)} source lines but {len(tgts)} target lines")
        return cls(name, [SentencePair(i, s, t) for i, (s, t) in enumerate(zip(srcs, tgts))], domain_tag)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def srcs(self) -> list[str]:
        return [p.src for p in self.pairs]

    @property
    def tgts(self) -> list[str]:
        return [p.tgt for p in self.pairs]

    def by_id(self) -> dict[int, SentencePair]:
        return {p.id: p for p in self.pairs}


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.98
    dev_frac: float = 0.01
    test_frac: float = 0.01
    seed: int = 8

    def __post_init__(self):
        fracs = (self.train_frac, self.dev_frac, self.test_frac)
        if any(f < 0 or f > 1 for f in fracs):
            raise ValueError(f"split fractions must lie in [0, 1], got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)!r}")


def _renumber(pairs: Iterable[SentencePair]) -> list[SentencePair]:
    return [replace(p, id=i) for i, p in enumerate(pairs)]


def load_corpus(path, format: str = "tsv", name: str | None = None, domain_tag: str | None = None) -> Corpus:
    """Load a parallel corpus.

    TSV rows are ``src<TAB>tgt`` with no header; JSONL rows are objects with
    string fields ``src`` and ``tgt`` (optional ``id`` and ``tag``). Ids are
    assigned 0..n-1 in file order. Any malformed row raises
    :class:`CorpusError` carrying its 1-based line number.
    """
    if format not in ("tsv", "jsonl"):
        raise ValueError(f"unknown corpus format {format!r}")
    try:
        lines = read_lines(path)
    except LineDecodeError as e:
        raise CorpusError("invalid UTF-8", line=e.line, path=path) from None

    pairs = []
    for lineno, line in enumerate(lines, start=1):
        if format == "tsv":
            cols = line.split("\t")
            if len(cols) != 2:
                raise CorpusError(f"expected 2 tab-separated fields, got {len(cols)}", lineno, path)
            src, tgt = cols
            tag = None
        else:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"invalid JSON ({e.msg})", lineno, path) from None
            if not isinstance(obj, dict):
                raise CorpusError("row is not a JSON object", lineno, path)
            for key in ("src", "tgt"):
                if not isinstance(obj.get(key), str):
                    raise CorpusError(f"missing or non-string field {key!r}", lineno, path)
            if "id" in obj and not (isinstance(obj["id"], int) and obj["id"] >= 0):
                raise CorpusError("field 'id' must be a non-negative integer", lineno, path)
            tag = obj.get("tag")
            if tag is not None and not isinstance(tag, str):
                raise CorpusError("field 'tag' must be a string", lineno, path)
            src, tgt = obj["src"], obj["tgt"]
        if not src.strip():
            raise CorpusError("empty source sentence", lineno, path)
        pairs.append(SentencePair(len(pairs), src, tgt, tag))
    if name is None:
        name = str(path)
    return Corpus(name, pairs, domain_tag)


def write_corpus(c: Corpus, path, format: str = "tsv") -> None:
    """Write ``c`` so that :func:`load_corpus` reads back the same pairs."""
    with atomic_open(path) as f:
        for p in c.pairs:
            if format == "tsv":
                if "\t" in p.src or "\t" in p.tgt or "\n" in p.src or "\n" in p.tgt:
                    raise CorpusError("TAB or newline inside a TSV field", p.id)
                f.write(f"{p.src}\t{p.tgt}\n")
            elif format == "jsonl":
                obj = {"id": p.id, "src": p.src, "tgt": p.tgt}
                if p.tag is not None:
                    obj["tag"] = p.tag
                f.write(json.dumps(obj, ensure_ascii=False) + "\n")
            else:
                raise ValueError(f"unknown corpus format {format!r}")


def dedup(c: Corpus) -> Corpus:
    """Keep the first occurrence of every exact (src, tgt) pair; ids are renumbered."""
    seen = set()
    kept = []
    for p in c.pairs:
        key = (p.src, p.tgt)
        if key in seen:
            continue
        seen.add(key)
        kept.append(p)
    return Corpus(c.name, _renumber(kept), c.domain_tag)


def _part_size(frac: float, n: int) -> int:
    # exact rational floor: 0.29 * 100 must give 29, not 28
    return math.floor(Fraction(frac).limit_denominator(10**9) * n)


def split(c: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Shuffle with ``numpy.random.default_rng(spec.seed)`` (PCG64) and partition.

    Dev and test get ``floor(frac * n)`` pairs each, train takes the rest.
    Each part keeps its shuffled order with ids renumbered densely.
    """
    n = len(c)
    if n == 0:
        raise ValueError("cannot split an empty corpus")
    order = np.random.default_rng(spec.seed).permutation(n)
    n_dev = _part_size(spec.dev_frac, n)
    n_test = _part_size(spec.test_frac, n)
    n_train = n - n_dev - n_test
    shuffled = [c.pairs[i] for i in order]
    parts = (
        shuffled[:n_train],
        shuffled[n_train:n_train + n_dev],
        shuffled[n_train + n_dev:],
    )
    names = ("train", "dev", "test")
    return tuple(
        Corpus(f"{c.name}.{nm}", _renumber(part), c.domain_tag) for nm, part in zip(names, parts)
    )
