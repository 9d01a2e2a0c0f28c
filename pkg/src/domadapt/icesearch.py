"""QE-guided search for in-context examples (ICEs).

The search grows a prefix of the retrieved candidates one example at a time,
translates the source with that prefix as the prompt, scores the output
(with a QE backend, or sentence BLEU against a reference) and keeps the
best-scoring prefix. It stops when the score fails to improve for
``patience`` consecutive iterations, when the candidates run out, when a
score reaches ``terminate_score``, or when the prompt no longer fits.

Backends speak JSON. Over HTTP::

    POST /translate {"prompt": str}                    -> {"translation": str}
    POST /estimate  {"source": str, "translation": str} -> {"score": float}

As a subprocess, the same bodies plus ``"kind": "translate" | "estimate"``
go one per line on stdin and answers come back one per line on stdout.
An HTTP 413 or a body ``{"error": "too_long"}`` means the prompt is too long.
"""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Protocol, Sequence

from ._io import atomic_open
from .corpus import Corpus
from .metrics import bleu, sentence_bleu, tokenize

__all__ = [
    "MODES",
    "BackendError",
    "PromptTooLong",
    "SearchError",
    "IceCandidate",
    "SearchConfig",
    "SearchResult",
    "BackendEndpoint",
    "HttpBackend",
    "SubprocessBackend",
    "connect",
    "build_prompt",
    "reorder_unigram_overlap",
    "search",
    "run_testset",
]

log = logging.getLogger(__name__)

MODES = ("qe_bm25_order", "qe_unigram_order", "reference_bleu")
STOP_REASONS = ("patience", "exhausted", "terminate_score", "prompt_too_long")


class BackendError(RuntimeError):
    """Transport or protocol failure talking to a translator/estimator."""


class PromptTooLong(BackendError):
    pass


class SearchError(RuntimeError):
    def __init__(self, message, iteration: int):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


@dataclass(frozen=True)
class IceCandidate:
    src: str
    tgt: str
    retriever_rank: int = 1
    retriever_score: float = 0.0

    def __post_init__(self):
        if not self.src.strip() or not self.tgt.strip():
            raise ValueError("ICE source and target must be non-empty")


@dataclass(frozen=True)
class SearchConfig:
    patience: int = 16
    max_candidates: int = 16
    mode: str = "qe_bm25_order"
    terminate_score: float = 100.0
    max_prompt_units: int | None = None
    cyclic: bool = False

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")


@dataclass
class SearchResult:
    selected: list[IceCandidate]
    best_score: float
    translation: str
    iterations_run: int
    stop_reason: str
    trace: list[tuple[int, float, str]] = field(default_factory=list)


class Translator(Protocol):
    def translate(self, prompt: str) -> str: ...


class Estimator(Protocol):
    def estimate(self, source: str, translation: str) -> float: ...


# ---------------------------------------------------------------- backends


@dataclass(frozen=True)
class BackendEndpoint:
    target: str
    timeout: float = 60.0
    retry_count: int = 2

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retry_count < 0:
            raise ValueError("retry_count must be >= 0")

    @property
    def is_http(self) -> bool:
        return self.target.startswith(("http://", "https://"))


def _parse_translation(obj) -> str:
    if isinstance(obj, dict) and obj.get("error") == "too_long":
        raise PromptTooLong("backend rejected the prompt as too long")
    if not isinstance(obj, dict) or not isinstance(obj.get("translation"), str):
        raise BackendError(f"malformed translate response: {obj!r}")
    return obj["translation"]


def _parse_score(obj) -> float:
    score = obj.get("score") if isinstance(obj, dict) else None
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise BackendError(f"malformed estimate response: {obj!r}")
    return float(score)


class HttpBackend:
    """JSON-over-HTTP translator and estimator."""

    def __init__(self, endpoint: BackendEndpoint):
        self.endpoint = endpoint
        self.base = endpoint.target.rstrip("/")

    def _post(self, route: str, body: dict):
        data = json.dumps(body, ensure_ascii=False).encode("utf-8")
        last = None
        for attempt in range(self.endpoint.retry_count + 1):
            req = urllib.request.Request(
                self.base + route, data=data, method="POST",
                headers={"Content-Type": "application/json; charset=utf-8"},
            )
            try:
                with urllib.request.urlopen(req, timeout=self.endpoint.timeout) as resp:
                    raw = resp.read()
            except urllib.error.HTTPError as e:
                if e.code == 413:
                    raise PromptTooLong("backend rejected the prompt as too long (HTTP 413)") from None
                last = BackendError(f"{route}: HTTP {e.code}")
                if 400 <= e.code < 500:
                    break
            except (urllib.error.URLError, TimeoutError, OSError) as e:
                last = BackendError(f"{route}: {e}")
            else:
                try:
                    return json.loads(raw.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError):
                    raise BackendError(f"{route}: response is not JSON") from None
            if attempt < self.endpoint.retry_count:
                time.sleep(min(0.05 * 2 ** attempt, 1.0))
        raise last

    def translate(self, prompt: str) -> str:
        return _parse_translation(self._post("/translate", {"prompt": prompt}))

    def estimate(self, source: str, translation: str) -> float:
        return _parse_score(self._post("/estimate", {"source": source, "translation": translation}))


class SubprocessBackend:
    """Line-delimited JSON over a child process's stdin/stdout."""

    def __init__(self, endpoint: BackendEndpoint):
        self.endpoint = endpoint
        self.argv = shlex.split(endpoint.target)
        self._proc = None
        self._lock = threading.Lock()

    def _start(self):
        self._proc = subprocess.Popen(
            self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, encoding="utf-8", bufsize=1,
        )

    def _request(self, body: dict):
        line = json.dumps(body, ensure_ascii=False) + "\n"
        last = None
        with self._lock:
            for _ in range(self.endpoint.retry_count + 1):
                try:
                    if self._proc is None or self._proc.poll() is not None:
                        self._start()
                    self._proc.stdin.write(line)
                    self._proc.stdin.flush()
                    answer = self._readline()
                except (OSError, BackendError) as e:
                    last = e if isinstance(e, BackendError) else BackendError(str(e))
                    self.close()
                    continue
                try:
                    return json.loads(answer)
                except json.JSONDecodeError:
                    raise BackendError(f"malformed JSON from backend: {answer[:80]!r}") from None
        raise last

    def _readline(self) -> str:
        out: list[str] = []
        reader = threading.Thread(target=lambda: out.append(self._proc.stdout.readline()), daemon=True)
        reader.start()
        reader.join(self.endpoint.timeout)
        if reader.is_alive():
            raise BackendError(f"backend timed out after {self.endpoint.timeout}s")
        if not out or not out[0]:
            raise BackendError("backend closed its output")
        return out[0]

    def translate(self, prompt: str) -> str:
        return _parse_translation(self._request({"kind": "translate", "prompt": prompt}))

    def estimate(self, source: str, translation: str) -> float:
        return _parse_score(self._request({"kind": "estimate", "source": source, "translation": translation}))

    def close(self):
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except OSError:
                pass
            self._proc = None


def connect(endpoint: BackendEndpoint | str):
    if isinstance(endpoint, str):
        endpoint = BackendEndpoint(endpoint)
    return HttpBackend(endpoint) if endpoint.is_http else SubprocessBackend(endpoint)


# ---------------------------------------------------------------- search


def build_prompt(ices: Sequence[IceCandidate], source: str) -> str:
    lines = [f"{ice.src} = {ice.tgt} </s>" for ice in ices]
    lines.append(f"{source} = ")
    return "\n".join(lines)


def reorder_unigram_overlap(ices: Sequence[IceCandidate], source: str) -> list[IceCandidate]:
    """Sort by the number of distinct source unigrams shared with ``source`` (stable)."""
    query = set(tokenize(source))
    keyed = [(-len(query & set(tokenize(ice.src))), ice.retriever_rank, i) for i, ice in enumerate(ices)]
    return [ices[i] for *_, i in sorted(keyed)]


def search(
    source: str,
    candidates: Sequence[IceCandidate],
    translator: Translator,
    estimator: Estimator | None = None,
    cfg: SearchConfig = SearchConfig(),
    reference: str | None = None,
) -> SearchResult:
    """Run the patience-bounded prefix search for one source sentence.

    Patience counts scores that do not beat the best so far, which starts at
    0.0; any strict improvement resets it. ``trace`` records ``(prefix length,
    score, translation)`` for every scored prefix.
    """
    if cfg.mode == "reference_bleu":
        if reference is None:
            raise ValueError("mode reference_bleu needs a reference translation")
    elif estimator is None:
        raise ValueError(f"mode {cfg.mode} needs an estimator")

    def score(translation: str) -> float:
        if cfg.mode == "reference_bleu":
            return sentence_bleu(translation, reference)
        return float(estimator.estimate(source, translation))

    pending = list(candidates)[:cfg.max_candidates]
    if cfg.mode == "qe_unigram_order":
        pending = reorder_unigram_overlap(pending, source)

    if not pending:
        try:
            translation = translator.translate(build_prompt([], source))
            value = score(translation)
        except BackendError as e:
            raise SearchError(str(e), 0) from e
        return SearchResult([], value, translation, 0, "exhausted", [(0, value, translation)])

    prefix: list[IceCandidate] = []
    trace: list[tuple[int, float, str]] = []
    best_len, best_score, best_translation = 0, 0.0, ""
    running_best = 0.0
    patience_counter = 0
    stop_reason = None
    itr = 0
    while pending and patience_counter < cfg.patience:
        pick = itr % len(pending) if cfg.cyclic else 0
        prefix = prefix + [pending.pop(pick)]
        prompt = build_prompt(prefix, source)
        if cfg.max_prompt_units is not None and len(prompt) > cfg.max_prompt_units:
            stop_reason = "prompt_too_long"
            break
        try:
            translation = translator.translate(prompt)
            value = score(translation)
        except PromptTooLong:
            stop_reason = "prompt_too_long"
            break
        except BackendError as e:
            raise SearchError(str(e), itr + 1) from e
        trace.append((len(prefix), value, translation))
        if len(trace) == 1 or value > best_score:
            best_len, best_score, best_translation = len(prefix), value, translation
        if value >= cfg.terminate_score:
            stop_reason = "terminate_score"
            break
        if value <= running_best:
            patience_counter += 1
        else:
            patience_counter = 0
        running_best = max(running_best, value)
        itr += 1

    if stop_reason is None:
        stop_reason = "patience" if patience_counter >= cfg.patience else "exhausted"
    return SearchResult(prefix[:best_len], best_score, best_translation, len(trace), stop_reason, trace)


def _record(pair_id: int, source: str, res: SearchResult) -> dict:
    return {
        "id": pair_id,
        "source": source,
        "translation": res.translation,
        "best_score": round(res.best_score, 6),
        "n_selected": len(res.selected),
        "selected": [asdict(c) for c in res.selected],
        "iterations_run": res.iterations_run,
        "stop_reason": res.stop_reason,
    }


def run_testset(
    testset: Corpus,
    candidates: Mapping[int, Sequence[IceCandidate]] | Sequence[Sequence[IceCandidate]],
    translator: Translator,
    estimator: Estimator | None = None,
    cfg: SearchConfig = SearchConfig(),
    out=None,
    workers: int = 1,
) -> dict:
    """Search every test source, optionally write one JSONL record each, and summarize.

    ``candidates`` maps pair id to its retrieved ICEs (a sequence is taken in
    test-set order). Failures are collected instead of aborting the run. The
    report carries corpus BLEU when every pair has a reference, and the
    min/mean/max number of selected ICEs.
    """
    if len(testset) == 0:
        raise ValueError("empty test set")
    if not isinstance(candidates, Mapping):
        candidates = {p.id: c for p, c in zip(testset, candidates)}
    missing = [p.id for p in testset if p.id not in candidates]
    if missing:
        raise ValueError(f"no candidates for test ids {missing[:10]}")

    def one(pair):
        ref = pair.tgt if pair.tgt.strip() else None
        try:
            return search(pair.src, candidates[pair.id], translator, estimator, cfg, reference=ref), None
        except Exception as e:  # recorded per source, the run goes on
            log.warning("source %d failed: %s", pair.id, e)
            return None, str(e)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, testset.pairs))
    else:
        outcomes = [one(p) for p in testset.pairs]

    records, failures = [], []
    for pair, (res, err) in zip(testset.pairs, outcomes):
        if err is not None:
            failures.append({"id": pair.id, "error": err})
        else:
            records.append(_record(pair.id, pair.src, res))

    if out is not None:
        with atomic_open(out) as f:
            for rec in records:
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")

    counts = [r["n_selected"] for r in records]
    report = {
        "n_sources": len(testset),
        "n_failures": len(failures),
        "failures": failures,
        "ice_count": {
            "min": min(counts) if counts else None,
            "mean": sum(counts) / len(counts) if counts else None,
            "max": max(counts) if counts else None,
        },
        "stop_reasons": {r: sum(rec["stop_reason"] == r for rec in records) for r in STOP_REASONS},
        "bleu": None,
    }
    by_id = testset.by_id()
    if records and all(by_id[r["id"]].tgt.strip() for r in records):
        report["bleu"] = bleu([r["translation"] for r in records], [by_id[r["id"]].tgt for r in records]).value
    report["records"] = records
    return report
