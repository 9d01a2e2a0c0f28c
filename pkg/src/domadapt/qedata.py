"""Quality-estimation training data: synthetic triplets, domain tags and balanced mixes."""

from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._io import atomic_open
from .corpus import Corpus
from .metrics import sentence_bleu, ter

__all__ = [
    "QeDataError",
    "QeTriplet",
    "TaggedExample",
    "TAGS",
    "label",
    "make_triplets",
    "write_triplets",
    "read_triplets",
    "format_tagged",
    "parse_tagged",
    "mix_oversample",
    "concat_multilingual",
]

TAGS = ("ID", "OOD")
_MARKERS = ("<s>", "</s>", "<ID>", "<OOD>")
_TAGGED_RE = re.compile(r"^<s> (.*) </s> (.*) <(ID|OOD)> </s>$", re.DOTALL)


class QeDataError(ValueError):
    pass


@dataclass(frozen=True)
class QeTriplet:
    src: str
    mt: str
    label: float
    ref: str | None = None

    def to_json(self) -> str:
        obj = {"src": self.src, "mt": self.mt, "label": round(self.label, 6), "ref": self.ref}
        return json.dumps(obj, ensure_ascii=False)


@dataclass(frozen=True)
class TaggedExample:
    text: str
    tag: str


def label(mt: str, ref: str, metric: str = "ter") -> float:
    """Segment quality label on the 0-100 scale: TER, or smoothed sentence BLEU."""
    if metric == "ter":
        return ter([mt], [ref]).value
    if metric == "bleu":
        return sentence_bleu(mt, ref)
    raise QeDataError(f"unknown label metric {metric!r}")


def make_triplets(
    parallel: Corpus,
    translator,
    portion: int,
    label_metric: str = "ter",
    seed: int = 0,
    workers: int = 1,
) -> list[QeTriplet]:
    """Synthesize (source, MT, label) triplets from a parallel corpus.

    The corpus is shuffled and halved; the first half is what an MT model
    would be trained on (outside this package), and ``portion`` sources are
    sampled from the second half, translated by ``translator`` and labelled
    against their reference. Output order follows the sample order.
    """
    if label_metric not in ("ter", "bleu"):
        raise QeDataError(f"unknown label metric {label_metric!r}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(parallel))
    second = order[len(parallel) // 2:]
    if not 0 <= portion <= len(second):
        raise QeDataError(f"portion={portion} exceeds the held-out half ({len(second)} pairs)")
    picked = [parallel[int(i)] for i in rng.choice(second, size=portion, replace=False)]
    for p in picked:
        if not p.tgt.strip():
            raise QeDataError(f"pair {p.id} has no reference translation")

    def translate(i):
        try:
            return translator.translate(picked[i].src)
        except Exception as e:
            raise QeDataError(f"translation failed for sample {i} (pair {picked[i].id}): {e}") from e

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            mts = list(pool.map(translate, range(len(picked))))
    else:
        mts = [translate(i) for i in range(len(picked))]
    return [QeTriplet(p.src, mt, label(mt, p.tgt, label_metric), p.tgt) for p, mt in zip(picked, mts)]


def write_triplets(triplets: Sequence[QeTriplet], path) -> None:
    with atomic_open(path) as f:
        for t in triplets:
            f.write(t.to_json() + "\n")


def read_triplets(path) -> list[QeTriplet]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(QeTriplet(obj["src"], obj["mt"], float(obj["label"]), obj.get("ref")))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise QeDataError(f"{path}: line {lineno}: bad triplet ({e})") from None
    return out


def format_tagged(src: str, trg: str, tag: str, strict: bool = False) -> TaggedExample:
    if tag not in TAGS:
        raise QeDataError(f"tag must be one of {TAGS}, got {tag!r}")
    if strict:
        for text in (src, trg):
            for marker in _MARKERS:
                if marker in text:
                    raise QeDataError(f"input contains reserved marker {marker!r}")
    return TaggedExample(f"<s> {src} </s> {trg} <{tag}> </s>", tag)


def parse_tagged(text: str) -> tuple[str, str, str]:
    m = _TAGGED_RE.match(text)
    if m is None:
        raise QeDataError(f"not a tagged example: {text[:60]!r}")
    return m.group(1), m.group(2), m.group(3)


def mix_oversample(ood: Sequence, id_data: Sequence, ood_fraction: float = 1.0, seed: int = 0,
                   mode: str = "subsample_ood") -> list:
    """Balance out-of-domain and in-domain items, concatenate and shuffle.

    ``subsample_ood``: draw ``round(ood_fraction * len(id_data))`` OOD items
    without replacement and add all ID items. ``replicate_id``: repeat the ID
    items (whole copies plus a seeded remainder) to exactly ``len(ood)`` and add
    all OOD items.
    """
    if not ood or not id_data:
        raise QeDataError("both OOD and ID lists must be non-empty")
    rng = np.random.default_rng(seed)
    if mode == "subsample_ood":
        if not 0.0 < ood_fraction <= 1.0:
            raise QeDataError("ood_fraction must be in (0, 1]")
        k = math.floor(ood_fraction * len(id_data) + 0.5)
        if k == 0:
            raise QeDataError("OOD subset size rounds to 0")
        if k > len(ood):
            raise QeDataError(f"need {k} OOD items but only {len(ood)} available")
        chosen = [ood[int(i)] for i in np.sort(rng.choice(len(ood), size=k, replace=False))]
        mixed = chosen + list(id_data)
    elif mode == "replicate_id":
        copies, rem = divmod(len(ood), len(id_data))
        grown = list(id_data) * copies
        if rem:
            grown += [id_data[int(i)] for i in np.sort(rng.choice(len(id_data), size=rem, replace=False))]
        mixed = list(ood) + grown
    else:
        raise QeDataError(f"unknown mix mode {mode!r}")
    return [mixed[int(i)] for i in rng.permutation(len(mixed))]


def concat_multilingual(corpora: Sequence[tuple[str, Sequence]]) -> list[tuple[str, object]]:
    """Concatenate per-language-pair data into one list of ``(language_pair, item)``."""
    if not corpora:
        raise QeDataError("need at least one corpus")
    return [(lp, item) for lp, items in corpora for item in items]
