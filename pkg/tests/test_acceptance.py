"""Acceptance criteria 1-11, one test each.

Every test records its outcome in ``RESULTS`` so the run ends with one
PASS/FAIL line per criterion (see conftest.py).
"""

import functools
import inspect
import json
import random
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings

import _corpus25
import _mock_backend as mock
import _oracles as oracle
from _acceptance_log import RESULTS
from test_select import _ood, match_sets
from domadapt import cli
from domadapt.corpus import Corpus
from domadapt.embed import apply_pca, fit_pca
from domadapt.icesearch import IceCandidate, PromptTooLong, SearchConfig, run_testset, search
from domadapt.metrics import bleu, chrf2, ks_two_sample, paired_bootstrap, ter, tokenize
from domadapt.retrieve import build_index, rbm25_rerank, topk
from domadapt.select import RankedMatch, build_subcorpora, rank_topn
from domadapt.vocab import BpeModel, apply_bpe_lines, detokenize, learn_bpe, overlap_report

HERE = Path(__file__).parent


def criterion(n, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            detail = {}
            try:
                fn(*args, detail=detail, **kwargs)
            except BaseException as e:
                RESULTS[n] = (False, title, f"{type(e).__name__}: {str(e).splitlines()[0][:120] if str(e) else ''}")
                print(f"criterion {n}: FAIL  {title}")
                raise
            text = ", ".join(f"{k}={v}" for k, v in detail.items())
            RESULTS[n] = (True, title, text)
            print(f"criterion {n}: PASS  {title}  [{text}]")

        sig = inspect.signature(fn)
        run.__signature__ = sig.replace(parameters=[p for p in sig.parameters.values() if p.name != "detail"])
        return run

    return wrap


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def _main(*argv):
    return cli.main([str(a) for a in argv])


# ---------------------------------------------------------------- 1


@criterion(1, "configuration enumeration")
def test_c01_configs(capsys, detail):
    with Timer() as t:
        code = _main("configs")
    out = capsys.readouterr().out
    assert code == 0
    assert out == (HERE / "snapshots" / "configs.tsv").read_text(encoding="utf-8")
    rows = [line.split("\t") for line in out.splitlines()[1:]]
    assert rows == [["C1", "D", "D"], ["C2", "D", "D+E"], ["C3", "D", "E"], ["C4", "E", "D"],
                    ["C5", "E", "D+E"], ["C6", "E", "E"], ["C7", "D+E", "D+E"]]
    assert t.seconds < 1.0
    detail["rows"] = len(rows)
    detail["seconds"] = f"{t.seconds:.3f}"


# ---------------------------------------------------------------- 2


@criterion(2, "metric oracles on 25 segments")
def test_c02_metric_oracles(detail):
    hyps, refs = _corpus25.HYPS, _corpus25.REFS
    assert len(hyps) == 25
    with Timer() as t:
        got = (bleu(hyps, refs).value, chrf2(hyps, refs).value, ter(hyps, refs).value)
        ident = (bleu(refs, refs).value, chrf2(refs, refs).value, ter(refs, refs).value)
    want = (oracle.bleu(hyps, refs), oracle.chrf2(hyps, refs), oracle.ter(hyps, refs))
    for name, g, w in zip(("bleu", "chrf2", "ter"), got, want):
        assert abs(g - w) <= 1e-9, (name, g, w)
    assert ident == (100.0, 100.0, 0.0)
    assert t.seconds < 1.0
    detail.update(bleu=f"{got[0]:.4f}", chrf2=f"{got[1]:.4f}", ter=f"{got[2]:.4f}", seconds=f"{t.seconds:.3f}")


# ---------------------------------------------------------------- 3


@pytest.mark.slow
@criterion(3, "exact top-n retrieval, 1000 x 10000")
def test_c03_exact_retrieval(detail):
    rng = np.random.default_rng(2024)
    e = rng.normal(size=(10_000, 32)).astype(np.float32)
    q = rng.normal(size=(1_000, 32)).astype(np.float32)
    # exact duplicates and scaled copies give equal cosines, exercising the id tie-break
    e[9_000:9_500] = e[:500]
    e[9_500:] = 2.0 * e[500:1000]
    q[:50] = e[:50]
    with Timer() as t:
        single = rank_topn(q, e, n=6, workers=1)
    ids, scores = oracle.brute_topn(q, e, 6)
    np.testing.assert_array_equal(single.entry_ids, ids)
    np.testing.assert_array_equal(single.scores, scores)
    ties = int(np.sum(scores[:, :-1] == scores[:, 1:]))
    assert ties > 0
    multi = rank_topn(q, e, n=6, workers=4)
    assert multi.entry_ids.tobytes() == single.entry_ids.tobytes()
    assert multi.scores.tobytes() == single.scores.tobytes()
    assert t.seconds < 60.0
    detail.update(tied_neighbours=ties, seconds=f"{t.seconds:.2f}")


# ---------------------------------------------------------------- 4


def _planted_rank3(n, evals, d, seed):
    """Rows whose sample covariance is exactly Q diag(evals) Q^T on a 3-dim subspace."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    z = rng.normal(size=(n, len(evals)))
    z -= z.mean(axis=0)
    c = np.linalg.cholesky(z.T @ z / (n - 1))
    z = z @ np.linalg.inv(c).T
    return (z * np.sqrt(evals)) @ q[:, : len(evals)].T + 1.5, q


@criterion(4, "PCA on a planted spectrum")
def test_c04_pca(detail):
    evals = np.array([25.0, 9.0, 4.0])
    x, basis = _planted_rank3(10_000, evals, 10, seed=11)
    model = fit_pca(x, k=3, method="jacobi")
    rel = np.abs(model.explained_variance - evals) / evals
    assert rel.max() <= 0.02
    for i in range(3):
        assert abs(abs(model.components[i] @ basis[:, i]) - 1.0) < 1e-4
    ortho = np.abs(model.components @ model.components.T - np.eye(3)).max()
    assert ortho <= 1e-6
    lapack = fit_pca(x, k=3, method="lapack")
    assert np.abs(lapack.explained_variance - evals).max() / evals.min() <= 0.02

    y = np.random.default_rng(12).normal(size=(300, 10))
    full = fit_pca(y, k=10)
    full_ortho = np.abs(full.components @ full.components.T - np.eye(10)).max()
    assert full_ortho <= 1e-6
    proj = apply_pca(full, y).data.astype(np.float64)
    centered = y.astype(np.float32).astype(np.float64) - full.mean
    gap = np.abs(proj @ proj.T - centered @ centered.T).max()
    assert gap <= 1e-4
    detail.update(max_rel_err=f"{rel.max():.2e}", ortho=f"{max(ortho, full_ortho):.1e}", ip_gap=f"{gap:.1e}")


# ---------------------------------------------------------------- 5


@criterion(5, "BM25 and R-BM25 equivalence")
def test_c05_bm25(detail):
    rng = random.Random(5)
    words = [f"w{i}" for i in range(40)]
    docs = [" ".join(rng.choices(words, k=rng.randint(1, 15))) for _ in range(100)]
    index = build_index(docs)
    tokens = [tokenize(d) for d in docs]
    for _ in range(30):
        query = " ".join(rng.choices(words + ["oov"], k=rng.randint(1, 6)))
        s = oracle.bm25_scores(tokens, tokenize(query))
        want = sorted(((i, v) for i, v in enumerate(s) if v > 0), key=lambda iv: (-iv[1], iv[0]))
        for k in (1, 5, 16, 100):
            assert topk(index, query, K=k) == want[:k]

    idx = build_index(["a b", "c d", "a b c d"])
    assert rbm25_rerank(idx, "a b c d", [0, 1, 2]) == [2]
    assert rbm25_rerank(idx, "a b c d", [0, 1, 2], discount=0.5) == [2, 0, 1]
    assert rbm25_rerank(build_index(["x y", "y z", "z"]), "x y z", [0, 1, 2]) == [0, 1]
    detail.update(docs=100, queries=30, rbm25_scenarios=3)


# ---------------------------------------------------------------- 6


class _Scripted:
    def __init__(self, scores, overflow_at=None):
        self.scores, self.overflow_at = scores, overflow_at

    def translate(self, prompt):
        k = prompt.count(" </s>")
        if self.overflow_at is not None and k >= self.overflow_at:
            raise PromptTooLong("overflow")
        return f"T{k}"

    def estimate(self, source, translation):
        return self.scores[int(translation[1:]) - 1]


# (scores, patience, overflow_at) -> (iterations, selected, best, stop_reason), traced by hand
SCRIPTS = [
    (([10, 20, 15, 18, 19, 12, 30], 3, None), (5, 2, 20, "patience")),
    (([50, 60, 100, 10], 3, None), (3, 3, 100, "terminate_score")),
    (([30, 40, 35, 50], 16, 4), (3, 2, 40, "prompt_too_long")),
    (([0.0] * 16, 8, None), (8, 1, 0.0, "patience")),
    (([10, 9, 9, 9, 11] + [9] * 11, 8, None), (13, 5, 11, "patience")),
    (([5] + [4] * 15, 16, None), (16, 1, 5, "exhausted")),
    (([1, 2, 3, 4, 5], 8, None), (5, 5, 5, "exhausted")),
]


@criterion(6, "search loop semantics")
def test_c06_search(detail):
    for (scores, patience, overflow), want in SCRIPTS:
        s = _Scripted(scores, overflow)
        ices = [IceCandidate(f"s{i}", f"t{i}", i + 1) for i in range(len(scores))]
        r = search("src", ices, s, s, SearchConfig(patience=patience))
        assert (r.iterations_run, len(r.selected), r.best_score, r.stop_reason) == want, (scores, patience)
        assert oracle.replay_search(scores, patience, overflow_at=overflow) == want
    assert {p for (_, p, _), _ in SCRIPTS} == {3, 8, 16}

    test = Corpus.from_texts("t", [f"patient report {i} on therapy" for i in range(50)], [""] * 50)
    cands = [IceCandidate(f"ex {j}", f"bsp {j}", j + 1) for j in range(16)]

    class Mock:
        translate = staticmethod(mock.translate)
        estimate = staticmethod(mock.estimate)

    rep = run_testset(test, [cands] * 50, Mock(), Mock(), SearchConfig(patience=8))
    expect = [mock.expected_selected(p.src, 16, 8) for p in test]
    assert rep["n_failures"] == 0
    assert rep["ice_count"] == {"min": min(expect), "mean": sum(expect) / 50, "max": max(expect)}
    detail.update(scripts=len(SCRIPTS), ice_count=json.dumps(rep["ice_count"]))


# ---------------------------------------------------------------- 7


_stack_cases = []


@settings(max_examples=200, database=None)
@given(match_sets())
def _stacking_property(data):
    matches, n_entries, n = data
    subs = build_subcorpora(matches, _ood(n_entries), n=n)
    for prev, cur in zip(subs, subs[1:]):
        assert set(prev.pairs) <= set(cur.pairs)
    _stack_cases.append(1)


@criterion(7, "sub-corpus stacking laws")
def test_c07_subcorpora(detail):
    _stack_cases.clear()
    _stacking_property()
    assert len(_stack_cases) >= 200
    q, n = 179, 6
    matches = [RankedMatch(qi, qi * n + r, 0.0, r + 1) for qi in range(q) for r in range(n)]
    sizes = [len(s) for s in build_subcorpora(matches, _ood(q * n), n=n)]
    assert sizes == [k * q for k in range(1, n + 1)]
    assert sizes[1] == 358
    detail.update(property_cases=len(_stack_cases), sizes=sizes)


# ---------------------------------------------------------------- 8


@criterion(8, "vocabulary overlap")
def test_c08_overlap(detail):
    base_src = Counter({"the": 120, "patient": 7, "dose": 3, "of": 90})
    base_tgt = Counter({"der": 80, "patient": 6, "dosis": 2})
    r = overlap_report(base_src, base_tgt, base_src, base_tgt)
    assert (r.src_overlap_pct, r.tgt_overlap_pct, r.new_src_tokens, r.new_tgt_tokens) == (100.0, 100.0, 0, 0)

    base = Counter({"a": 3, "b": 1})
    r = overlap_report(Counter({"a": 1, "c": 1}), Counter({"b": 1, "x": 1, "y": 1}), base, base)
    assert abs(r.src_overlap_pct - 75.0) <= 1e-9 and r.new_src_tokens == 1
    assert abs(r.tgt_overlap_pct - 25.0) <= 1e-9 and r.new_tgt_tokens == 2
    r = overlap_report(Counter({"patient": 1, "of": 1, "ill": 1}), Counter({"der": 1}), base_src, base_tgt)
    assert abs(r.src_overlap_pct - 100.0 * 97 / 220) <= 1e-9 and r.new_src_tokens == 1
    assert abs(r.tgt_overlap_pct - 100.0 * 80 / 88) <= 1e-9 and r.new_tgt_tokens == 0
    detail["cases"] = 3


# ---------------------------------------------------------------- 9


def _mixed_unicode_corpus(n, seed):
    alphabets = ["abcdefghijklmnopqrstuvwxyz", "áéíóúüñçàèßøå", "абвгдежзиклмнопрст", "αβγδεζηθλμπσω",
                 "的一是不了人我在有他这", "あいうえおかきくけこ", "ابتثجحخدذرز", "0123456789", "-.,;:!?()'\"",
                 "😀🚑💊🧬"]
    rng = random.Random(seed)
    lines = []
    for _ in range(n):
        words = []
        for _ in range(rng.randint(1, 12)):
            alpha = rng.choice(alphabets)
            words.append("".join(rng.choice(alpha) for _ in range(rng.randint(1, 9))))
        lines.append(" ".join(words))
    return lines


@pytest.mark.slow
@criterion(9, "BPE round-trip and hand trace")
def test_c09_bpe(detail):
    assert learn_bpe(["aa aa aa"], 1).merges == (("a", "a"),)
    assert apply_bpe_lines(BpeModel((("a", "a"),)), ["aaa"]) == [["aa", "a</w>"]]
    lines = _mixed_unicode_corpus(10_000, seed=9)
    model = learn_bpe(lines, 2000)
    segmented = apply_bpe_lines(model, lines)
    bad = [i for i, (line, toks) in enumerate(zip(lines, segmented)) if detokenize(toks) != line]
    assert not bad, f"{len(bad)} lines differ, first {bad[:5]}"
    n_tokens = sum(map(len, segmented))
    assert n_tokens < sum(len(line.replace(" ", "")) for line in lines)
    detail.update(lines=len(lines), merges=len(model.merges), tokens=n_tokens)


# ---------------------------------------------------------------- 10


@criterion(10, "bootstrap and KS statistics")
def test_c10_statistics(detail):
    refs = [f"the patient received {i} tablets of aspirin today" for i in range(60)]
    good = list(refs)
    bad = [f"zz{i} qq yy" for i in range(60)]
    same = paired_bootstrap(good, good, refs, iterations=1000, seed=3)
    assert same.ties == 1000 and not same.significant
    dom = paired_bootstrap(good, bad, refs, iterations=1000, seed=3)
    assert dom.wins_a == 1000 and dom.significant
    lengths = [len(r.split()) for r in refs]
    assert ks_two_sample(lengths, lengths).statistic == 0.0
    assert ks_two_sample([0.5, 1.5, 2.0], [0.5, 1.5, 2.0]).statistic == 0.0
    detail.update(identical_ties=same.ties, dominant_wins=dom.wins_a)


# ---------------------------------------------------------------- 11


def _write(path, lines):
    path.write_text("".join(x + "\n" for x in lines), encoding="utf-8")
    return path


@pytest.mark.slow
@criterion(11, "end-to-end pipelines")
def test_c11_pipelines(tmp_path, capsys, detail):
    rng = random.Random(11)
    vocab = [f"tok{i}" for i in range(3000)]
    ood_src = _write(tmp_path / "ood.src", [" ".join(rng.choices(vocab, k=rng.randint(3, 20))) for _ in range(20_000)])
    ood_tgt = _write(tmp_path / "ood.tgt", [f"ziel {i}" for i in range(20_000)])
    queries = _write(tmp_path / "id.src", [" ".join(rng.choices(vocab, k=rng.randint(3, 20))) for _ in range(500)])
    emb, model, csv_out = tmp_path / "ood.emb", tmp_path / "pca.npz", tmp_path / "sel.csv"
    with Timer() as t2:
        assert _main("embed", "--input", ood_src, "--dims", 64, "--out", emb) == 0
        assert _main("pca-fit", "--emb", emb, "-k", 32, "--out", model) == 0
        assert _main("select", "--queries", queries, "--ood-src", ood_src, "--ood-tgt", ood_tgt, "--dims", 64,
                     "--pca-model", model, "-n", 6, "--out", csv_out) == 0
    import csv

    rows = list(csv.reader(csv_out.open(encoding="utf-8")))
    assert len(rows) == 501 and len(rows[0]) == 1 + 3 * 6
    for row in rows[1:]:
        scores = [float(row[3 + 3 * j]) for j in range(6)]
        assert all(row[1 + 3 * j] for j in range(6))
        assert all(a >= b for a, b in zip(scores, scores[1:]))
    assert t2.seconds < 30.0

    pool = _write(tmp_path / "pool.tsv", [f"{' '.join(rng.choices(vocab[:300], k=8))}\tziel {i}" for i in range(2000)])
    test_src = [" ".join(rng.choices(vocab[:300], k=8)) for _ in range(100)]
    test = _write(tmp_path / "test.tsv", [f"{s}\tref {i}" for i, s in enumerate(test_src)])
    test_queries = _write(tmp_path / "test.src", test_src)
    cmd = f"{sys.executable} {HERE / '_mock_backend.py'}"
    report, hits = tmp_path / "report.json", tmp_path / "bm25.jsonl"
    with Timer() as t5:
        assert _main("bm25", "--pool", pool, "--queries", test_queries, "--out", hits) == 0
        assert _main("ice-search", "--testset", test, "--pool", pool, "--translator-cmd", cmd,
                     "--estimator-cmd", cmd, "--workers", 1, "--report", report,
                     "--out", tmp_path / "res.jsonl") == 0
    rep = json.loads(report.read_text())
    assert rep["n_sources"] == 100 and rep["n_failures"] == 0 and rep["ice_count"]["max"] <= 16
    assert len(hits.read_text().splitlines()) > 0
    assert t5.seconds < 30.0
    capsys.readouterr()
    detail.update(select_seconds=f"{t2.seconds:.2f}", ice_seconds=f"{t5.seconds:.2f}")
