"""Command-line entry point: ``domadapt <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 backend error (including any failed source in ``ice-search``).

Every subcommand accepts ``--config FILE``, a JSON object whose keys are
flag names (``max_candidates`` or ``max-candidates``). Command-line flags
override the file, which overrides built-in defaults. A key named after the
subcommand may hold a nested object that applies only to that subcommand.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from typing import Sequence

import numpy as np

from . import corpus as corpus_mod
from . import embed, icesearch, metrics, qedata, retrieve, select, vocab
from ._io import LineDecodeError, atomic_open, read_lines, write_lines

log = logging.getLogger("domadapt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if "default:" in (action.help or "") or action.default in (None, False):
            return action.help
        return super()._get_help_string(action)


class _JsonLogFormatter(logging.Formatter):
    def format(self, record):
        obj = {
            "ts": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(record.created)) + f".{int(record.msecs):03d}Z",
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        return json.dumps(obj, ensure_ascii=False)


# ---------------------------------------------------------------- helpers


def _need(args, *names):
    missing = ["--" + n.replace("_", "-") for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): {', '.join(missing)}")


def _numbers(path) -> list[float]:
    out = []
    for lineno, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            out.append(float(line))
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: not a number: {line[:40]!r}") from None
    return out


def _emit(obj, out=None):
    text = json.dumps(obj, ensure_ascii=False, indent=None)
    if out:
        with atomic_open(out) as f:
            f.write(text + "\n")
    else:
        print(text)


def _workers(args) -> int:
    return args.workers if args.workers else (os.cpu_count() or 1)


def _backend(url, cmd, timeout, retries):
    target = url or cmd
    if target is None:
        return None
    return icesearch.connect(icesearch.BackendEndpoint(target, timeout=timeout, retry_count=retries))


def _close(*backends):
    for b in backends:
        if hasattr(b, "close"):
            b.close()


# ---------------------------------------------------------------- commands


def cmd_configs(args):
    rows = vocab.enumerate_configs()
    if args.json:
        for c in rows:
            print(json.dumps({"id": c.id, "bpe_source": c.bpe_source, "vocab_source": c.vocab_source}))
    else:
        print("id\tbpe_source\tvocab_source")
        for c in rows:
            print(f"{c.id}\t{c.bpe_source}\t{c.vocab_source}")
    return EXIT_OK


def cmd_embed(args):
    _need(args, "input", "out")
    m = embed.hash_embed(read_lines(args.input), dims=args.dims, seed=args.seed)
    embed.save_embeddings(m, args.out, format=args.format)
    log.info("embedded %d lines into %d dims", m.rows, m.dims)
    return EXIT_OK


def cmd_pca_fit(args):
    _need(args, "emb", "out")
    m = embed.load_embeddings(args.emb)
    model = embed.fit_pca(m, k=args.k, sample_size=args.sample_size, seed=args.seed, method=args.method)
    model.save(args.out)
    log.info("fitted PCA k=%d on %d rows", model.k, m.rows)
    return EXIT_OK


def cmd_pca_apply(args):
    _need(args, "model", "emb", "out")
    model = embed.PcaModel.load(args.model)
    embed.save_embeddings(embed.apply_pca(model, embed.load_embeddings(args.emb)), args.out, format=args.format)
    return EXIT_OK


def _read_ood(args) -> tuple[corpus_mod.Corpus, np.ndarray, int]:
    srcs = read_lines(args.ood_src)
    tgts = read_lines(args.ood_tgt) if args.ood_tgt else [""] * len(srcs)
    if len(tgts) != len(srcs):
        raise ValueError(f"--ood-src has {len(srcs)} lines but --ood-tgt has {len(tgts)}")
    keep = np.array([i for i, s in enumerate(srcs) if s.strip()], dtype=np.int64)
    if len(keep) < len(srcs):
        log.warning("skipping %d OOD lines with an empty source", len(srcs) - len(keep))
    c = corpus_mod.Corpus.from_texts("ood", [srcs[i] for i in keep], [tgts[i] for i in keep])
    return c, keep, len(srcs)


def cmd_select(args):
    _need(args, "queries", "ood_src", "out")
    queries = read_lines(args.queries)
    ood, keep, n_lines = _read_ood(args)
    if args.query_emb and args.ood_emb:
        q = embed.load_embeddings(args.query_emb)
        e = embed.load_embeddings(args.ood_emb)
        if q.rows != len(queries):
            raise ValueError(f"--query-emb has {q.rows} rows for {len(queries)} queries")
        if e.rows != n_lines:
            raise ValueError(f"--ood-emb has {e.rows} rows for {n_lines} OOD lines")
        e = embed.EmbeddingMatrix(e.data[keep])
    elif args.query_emb or args.ood_emb:
        raise UsageError("select: give both --query-emb and --ood-emb, or neither")
    else:
        q = embed.hash_embed(queries, dims=args.dims, seed=args.seed)
        e = embed.hash_embed(ood.srcs, dims=args.dims, seed=args.seed)

    if args.pca_model:
        model = embed.PcaModel.load(args.pca_model)
    elif args.pca_k:
        model = embed.fit_pca(e, k=args.pca_k, sample_size=args.pca_sample, seed=args.seed)
    else:
        model = None
    if model is not None:
        q, e = embed.apply_pca(model, q), embed.apply_pca(model, e)

    ranking = select.rank_topn(q, e, n=args.n, workers=_workers(args), strict=args.strict)
    if ranking.skipped_queries:
        log.warning("%d queries had zero vectors and were not ranked", len(ranking.skipped_queries))
    select.write_selection_csv(args.out, queries, ranking, ood, n=args.n)
    if args.subcorpora:
        os.makedirs(args.subcorpora, exist_ok=True)
        for sub in select.build_subcorpora(ranking.matches, ood, n=args.n):
            path = os.path.join(args.subcorpora, f"top{sub.level}.tsv")
            corpus_mod.write_corpus(corpus_mod.Corpus("top", tuple(
                corpus_mod.SentencePair(i, p.src, p.tgt) for i, p in enumerate(sub.pairs)), None), path)
    log.info("ranked %d queries against %d entries", len(queries), e.rows)
    return EXIT_OK


def _load_pool(args):
    return corpus_mod.load_corpus(args.pool, format=args.pool_format, name="pool")


def _retrieve(index, query, args):
    hits = retrieve.topk(index, query, K=args.pool_size)
    if args.command == "rbm25" or getattr(args, "retriever", "bm25") == "rbm25":
        order = retrieve.rbm25_rerank(index, query, [d for d, _ in hits], max_order=args.max_order,
                                      K=args.k, discount=args.discount)
        score = dict(hits)
        return [(d, score[d]) for d in order]
    return hits[:args.k]


def cmd_bm25(args):
    _need(args, "pool", "queries", "out")
    pool = _load_pool(args)
    index = retrieve.build_index(pool.srcs, k1=args.k1, b=args.b, ids=[p.id for p in pool])
    with atomic_open(args.out) as f:
        for qi, query in enumerate(read_lines(args.queries)):
            for rank, (doc_id, score) in enumerate(_retrieve(index, query, args), start=1):
                rec = {"query_id": qi, "doc_id": doc_id, "rank": rank, "score": round(score, 6)}
                f.write(json.dumps(rec) + "\n")
    return EXIT_OK


def cmd_ice_search(args):
    _need(args, "testset", "pool")
    test = corpus_mod.load_corpus(args.testset, format=args.testset_format, name="test")
    pool = _load_pool(args)
    empty = [p.id for p in pool if not p.tgt.strip()]
    if empty:
        raise ValueError(f"pool pairs without a target cannot be used as examples: ids {empty[:10]}")
    by_id = pool.by_id()
    index = retrieve.build_index(pool.srcs, ids=[p.id for p in pool])
    args.k = args.max_candidates
    candidates = {}
    for pair in test:
        hits = _retrieve(index, pair.src, args)
        candidates[pair.id] = [
            icesearch.IceCandidate(by_id[d].src, by_id[d].tgt, rank, score)
            for rank, (d, score) in enumerate(hits, start=1)
        ]
    cfg = icesearch.SearchConfig(
        patience=args.patience, max_candidates=args.max_candidates, mode=args.mode,
        terminate_score=args.terminate_score, max_prompt_units=args.max_prompt_chars, cyclic=args.cyclic,
    )
    translator = _backend(args.translator_url, args.translator_cmd, args.timeout, args.retries)
    if translator is None:
        raise UsageError("ice-search: give --translator-url or --translator-cmd")
    estimator = _backend(args.estimator_url, args.estimator_cmd, args.timeout, args.retries)
    if estimator is None and args.mode != "reference_bleu":
        _close(translator)
        raise UsageError(f"ice-search: mode {args.mode} needs --estimator-url or --estimator-cmd")
    try:
        report = icesearch.run_testset(test, candidates, translator, estimator, cfg, out=args.out,
                                       workers=_workers(args))
    finally:
        _close(translator, estimator)
    report = {k: v for k, v in report.items() if k != "records"}
    _emit(report, args.report)
    for fail in report["failures"]:
        log.error("source %s failed: %s", fail["id"], fail["error"])
    return EXIT_BACKEND if report["n_failures"] else EXIT_OK


def cmd_metrics(args):
    _need(args, "hyps", "refs")
    if args.metric == "pearson":
        value = metrics.pearson(_numbers(args.hyps), _numbers(args.refs)).value * 100.0
        n = len(_numbers(args.hyps))
    else:
        hyps, refs = read_lines(args.hyps), read_lines(args.refs)
        fn = {"bleu": metrics.bleu, "chrf2": metrics.chrf2, "ter": metrics.ter}[args.metric]
        value = fn(hyps, refs, case_sensitive=args.case_sensitive).value
        n = len(hyps)
    if args.json:
        _emit({"metric": args.metric, "value": value, "n_segments": n}, args.out)
    else:
        print(round(value, 6))
    return EXIT_OK


def cmd_bootstrap(args):
    _need(args, "hyps_a", "hyps_b", "refs")
    res = metrics.paired_bootstrap(
        read_lines(args.hyps_a), read_lines(args.hyps_b), read_lines(args.refs), metric=args.metric,
        iterations=args.iterations, sample_size=args.sample_size, seed=args.seed,
        case_sensitive=args.case_sensitive,
    )
    _emit({
        "metric": res.metric, "iterations": res.iterations, "sample_size": res.sample_size,
        "wins_a": res.wins_a, "wins_b": res.wins_b, "ties": res.ties,
        "winner": res.winner, "significant": res.significant,
    }, args.out)
    return EXIT_OK


def cmd_ks(args):
    _need(args, "a", "b")
    if args.as_lengths:
        a = [len(metrics.tokenize(s)) for s in read_lines(args.a)]
        b = [len(metrics.tokenize(s)) for s in read_lines(args.b)]
    else:
        a, b = _numbers(args.a), _numbers(args.b)
    res = metrics.ks_two_sample(a, b)
    _emit({"statistic": res.statistic, "p_value": res.p_value, "n_a": len(a), "n_b": len(b)}, args.out)
    return EXIT_OK


def cmd_qe_triplets(args):
    _need(args, "corpus", "portion", "out")
    c = corpus_mod.load_corpus(args.corpus, format=args.format)
    translator = _backend(args.translator_url, args.translator_cmd, args.timeout, args.retries)
    if translator is None:
        raise UsageError("qe-triplets: give --translator-url or --translator-cmd")
    try:
        trips = qedata.make_triplets(c, translator, args.portion, label_metric=args.label_metric,
                                     seed=args.seed, workers=_workers(args))
    except qedata.QeDataError as e:
        if isinstance(e.__cause__, icesearch.BackendError):
            raise e.__cause__ from None
        raise
    finally:
        _close(translator)
    qedata.write_triplets(trips, args.out)
    return EXIT_OK


def cmd_tag(args):
    _need(args, "corpus", "tag", "out")
    c = corpus_mod.load_corpus(args.corpus, format=args.format)
    write_lines(args.out, [qedata.format_tagged(p.src, p.tgt, args.tag, strict=args.strict).text for p in c])
    return EXIT_OK


def cmd_mix(args):
    _need(args, "ood", "id", "out")
    mixed = qedata.mix_oversample(read_lines(args.ood), read_lines(args.id), ood_fraction=args.ood_fraction,
                                  seed=args.seed, mode=args.mode)
    write_lines(args.out, mixed)
    return EXIT_OK


def cmd_bpe_learn(args):
    _need(args, "input", "out")
    lines = read_lines(args.input)
    n = args.merges if args.merges is not None else vocab.merge_ops_for_size(len(lines))
    model = vocab.learn_bpe(lines, n)
    model.save(args.out)
    log.info("learned %d merges (budget %d) from %d lines", len(model.merges), n, len(lines))
    return EXIT_OK


def cmd_bpe_apply(args):
    _need(args, "model", "input", "out")
    model = vocab.BpeModel.load(args.model)
    write_lines(args.out, [" ".join(t) for t in vocab.apply_bpe_lines(model, read_lines(args.input))])
    return EXIT_OK


def cmd_vocab(args):
    _need(args, "input", "out")
    v = vocab.build_vocab(tok for line in read_lines(args.input) for tok in line.split())
    v.save(args.out)
    return EXIT_OK


def cmd_vocab_overlap(args):
    _need(args, "config_src", "config_tgt", "base_src", "base_tgt")
    rep = vocab.overlap_report(
        vocab.Vocabulary.load(args.config_src), vocab.Vocabulary.load(args.config_tgt),
        vocab.Vocabulary.load(args.base_src), vocab.Vocabulary.load(args.base_tgt),
    )
    _emit({
        "src_overlap_pct": rep.src_overlap_pct, "tgt_overlap_pct": rep.tgt_overlap_pct,
        "new_src_tokens": rep.new_src_tokens, "new_tgt_tokens": rep.new_tgt_tokens,
        "new_token_filter": rep.new_token_filter,
    }, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", metavar="FILE", help="JSON file of option values; flags take precedence")
    g.add_argument("--seed", type=int, default=0, help="random seed")
    g.add_argument("--workers", type=int, default=None, help="worker threads (default: all cores)")
    g.add_argument("--strict", action="store_true", help="reject unknown config keys and suspicious input")
    g.add_argument("--log-json", action="store_true", help="log JSON lines to stderr")
    g.add_argument("--log-level", default="warning", choices=["debug", "info", "warning", "error"],
                   help="log level")
    return p


def _backend_flags(p, estimator=True):
    p.add_argument("--translator-url", help="HTTP translator base URL")
    p.add_argument("--translator-cmd", help="translator subprocess command line")
    if estimator:
        p.add_argument("--estimator-url", help="HTTP QE estimator base URL")
        p.add_argument("--estimator-cmd", help="QE estimator subprocess command line")
    p.add_argument("--timeout", type=float, default=60.0, help="per-request timeout in seconds")
    p.add_argument("--retries", type=int, default=2, help="retries per request")


def _retrieval_flags(p, rerank: bool):
    p.add_argument("--pool", metavar="FILE", help="example pool (parallel corpus)")
    p.add_argument("--pool-format", default="tsv", choices=["tsv", "jsonl"], help="pool file format")
    p.add_argument("--k1", type=float, default=1.5, help="BM25 term-frequency saturation")
    p.add_argument("--b", type=float, default=0.75, help="BM25 length normalization")
    p.add_argument("--pool-size", type=int, default=100 if rerank else 16,
                   help="BM25 candidates retrieved per query")
    if rerank:
        p.add_argument("--max-order", type=int, default=4, help="largest n-gram order covered")
        p.add_argument("--discount", type=float, default=0.0, help="weight factor for covered n-grams")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="domadapt", description="Domain adaptation toolkit for machine translation data.",
                     formatter_class=_Formatter)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    common = _common()

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_, parents=[common], formatter_class=_Formatter)
        p.set_defaults(func=func)
        return p

    p = add("configs", cmd_configs, "list the valid fine-tuning configurations C1..C7")
    p.add_argument("--json", action="store_true", help="one JSON object per line")

    p = add("embed", cmd_embed, "hash-embed text lines")
    p.add_argument("--input", metavar="FILE", help="one text per line")
    p.add_argument("--dims", type=int, default=64, help="embedding dimensions")
    p.add_argument("--format", default="binary", choices=["binary", "jsonl"], help="output format")
    p.add_argument("--out", metavar="FILE", help="output embeddings")

    p = add("pca-fit", cmd_pca_fit, "fit PCA on an embedding file")
    p.add_argument("--emb", metavar="FILE", help="input embeddings (.emb binary or .jsonl)")
    p.add_argument("-k", type=int, default=32, help="number of components")
    p.add_argument("--sample-size", type=int, default=500_000, help="rows sampled for fitting")
    p.add_argument("--method", default="auto", choices=["auto", "jacobi", "lapack"], help="eigensolver")
    p.add_argument("--out", metavar="FILE", help="output model (.npz)")

    p = add("pca-apply", cmd_pca_apply, "project embeddings with a fitted PCA model")
    p.add_argument("--model", metavar="FILE", help="PCA model (.npz)")
    p.add_argument("--emb", metavar="FILE", help="input embeddings")
    p.add_argument("--format", default="binary", choices=["binary", "jsonl"], help="output format")
    p.add_argument("--out", metavar="FILE", help="output embeddings")

    p = add("select", cmd_select, "rank out-of-domain pairs against in-domain queries and write a CSV")
    p.add_argument("--queries", metavar="FILE", help="in-domain source lines")
    p.add_argument("--ood-src", metavar="FILE", help="out-of-domain source lines")
    p.add_argument("--ood-tgt", metavar="FILE", help="out-of-domain target lines")
    p.add_argument("--query-emb", metavar="FILE", help="precomputed query embeddings")
    p.add_argument("--ood-emb", metavar="FILE", help="precomputed OOD embeddings, one row per OOD line")
    p.add_argument("--dims", type=int, default=64, help="hash embedding dimensions when no embeddings are given")
    p.add_argument("--pca-k", type=int, default=32, help="PCA components fitted on the OOD side (0 disables)")
    p.add_argument("--pca-sample", type=int, default=500_000, help="rows sampled for PCA fitting")
    p.add_argument("--pca-model", metavar="FILE", help="use this PCA model instead of fitting one")
    p.add_argument("-n", type=int, default=6, help="matches per query")
    p.add_argument("--subcorpora", metavar="DIR", help="also write stacked sub-corpora top1..topN as TSV")
    p.add_argument("--out", metavar="FILE", help="output CSV")

    for name, rerank, help_ in (("bm25", False, "BM25 retrieval of pool pairs for each query"),
                                ("rbm25", True, "BM25 retrieval re-ranked by n-gram coverage")):
        p = add(name, cmd_bm25, help_)
        p.add_argument("--queries", metavar="FILE", help="query lines")
        _retrieval_flags(p, rerank)
        p.add_argument("-k", type=int, default=16, help="results per query")
        p.add_argument("--out", metavar="FILE", help="output JSONL")

    p = add("ice-search", cmd_ice_search, "QE-guided in-context example search over a test set")
    p.add_argument("--testset", metavar="FILE", help="test set, src<TAB>ref per line (ref may be empty) or JSONL")
    p.add_argument("--testset-format", default="tsv", choices=["tsv", "jsonl"], help="test set format")
    _retrieval_flags(p, True)
    p.add_argument("--retriever", default="bm25", choices=["bm25", "rbm25"], help="candidate retriever")
    p.add_argument("--patience", type=int, default=16, help="non-improving iterations tolerated")
    p.add_argument("--max-candidates", type=int, default=16, help="retrieved examples considered")
    p.add_argument("--mode", default="qe_bm25_order", choices=list(icesearch.MODES), help="search mode")
    p.add_argument("--terminate-score", type=float, default=100.0, help="stop once a score reaches this")
    p.add_argument("--max-prompt-chars", type=int, default=None, help="prompt length limit in characters")
    p.add_argument("--cyclic", action="store_true", help="pick candidates by iteration index modulo the remainder")
    _backend_flags(p)
    p.add_argument("--out", metavar="FILE", help="per-source JSONL records")
    p.add_argument("--report", metavar="FILE", help="summary JSON (stdout when omitted)")

    p = add("metrics", cmd_metrics, "corpus-level BLEU, chrF2, TER or Pearson")
    p.add_argument("--hyps", metavar="FILE", help="hypothesis lines (numbers for pearson)")
    p.add_argument("--refs", metavar="FILE", help="reference lines (numbers for pearson)")
    p.add_argument("--metric", default="bleu", choices=["bleu", "chrf2", "ter", "pearson"], help="metric")
    p.add_argument("--case-sensitive", action="store_true", help="do not lowercase")
    p.add_argument("--json", action="store_true", help="print a JSON object instead of the bare value")
    p.add_argument("--out", metavar="FILE", help="write the JSON object here")

    p = add("bootstrap", cmd_bootstrap, "paired bootstrap significance test of two systems")
    p.add_argument("--hyps-a", metavar="FILE", help="system A lines")
    p.add_argument("--hyps-b", metavar="FILE", help="system B lines")
    p.add_argument("--refs", metavar="FILE", help="reference lines")
    p.add_argument("--metric", default="bleu", choices=list(metrics.METRICS), help="metric")
    p.add_argument("--iterations", type=int, default=1000, help="bootstrap iterations")
    p.add_argument("--sample-size", type=int, default=None, help="segments per sample (default: all)")
    p.add_argument("--case-sensitive", action="store_true", help="do not lowercase")
    p.add_argument("--out", metavar="FILE", help="output JSON")

    p = add("ks", cmd_ks, "two-sample Kolmogorov-Smirnov test")
    p.add_argument("--a", metavar="FILE", help="first sample, one number per line")
    p.add_argument("--b", metavar="FILE", help="second sample, one number per line")
    p.add_argument("--as-lengths", action="store_true", help="inputs are text; compare token lengths")
    p.add_argument("--out", metavar="FILE", help="output JSON")

    p = add("qe-triplets", cmd_qe_triplets, "synthesize (source, MT, label) QE training triplets")
    p.add_argument("--corpus", metavar="FILE", help="parallel corpus")
    p.add_argument("--format", default="tsv", choices=["tsv", "jsonl"], help="corpus format")
    p.add_argument("--portion", type=int, help="number of triplets")
    p.add_argument("--label-metric", default="ter", choices=["ter", "bleu"], help="label metric")
    _backend_flags(p, estimator=False)
    p.add_argument("--out", metavar="FILE", help="output JSONL")

    p = add("tag", cmd_tag, "format pairs with a domain tag")
    p.add_argument("--corpus", metavar="FILE", help="parallel corpus")
    p.add_argument("--format", default="tsv", choices=["tsv", "jsonl"], help="corpus format")
    p.add_argument("--tag", choices=list(qedata.TAGS), help="domain tag")
    p.add_argument("--out", metavar="FILE", help="output lines")

    p = add("mix", cmd_mix, "balance OOD and ID lines, concatenate and shuffle")
    p.add_argument("--ood", metavar="FILE", help="out-of-domain lines")
    p.add_argument("--id", metavar="FILE", help="in-domain lines")
    p.add_argument("--ood-fraction", type=float, default=1.0, help="OOD items per ID item (subsample_ood)")
    p.add_argument("--mode", default="subsample_ood", choices=["subsample_ood", "replicate_id"], help="mix mode")
    p.add_argument("--out", metavar="FILE", help="output lines")

    p = add("bpe-learn", cmd_bpe_learn, "learn BPE merges from text lines")
    p.add_argument("--input", metavar="FILE", help="training lines")
    p.add_argument("--merges", type=int, default=None, help="merge operations (default: by corpus size)")
    p.add_argument("--out", metavar="FILE", help="output model")

    p = add("bpe-apply", cmd_bpe_apply, "segment text lines with a BPE model")
    p.add_argument("--model", metavar="FILE", help="BPE model")
    p.add_argument("--input", metavar="FILE", help="text lines")
    p.add_argument("--out", metavar="FILE", help="output token lines")

    p = add("vocab", cmd_vocab, "count tokens of tokenized lines")
    p.add_argument("--input", metavar="FILE", help="whitespace-tokenized lines")
    p.add_argument("--out", metavar="FILE", help="output vocabulary")

    p = add("vocab-overlap", cmd_vocab_overlap, "frequency-weighted overlap of vocabularies with a baseline")
    p.add_argument("--config-src", metavar="FILE", help="configuration source vocabulary")
    p.add_argument("--config-tgt", metavar="FILE", help="configuration target vocabulary")
    p.add_argument("--base-src", metavar="FILE", help="baseline source vocabulary")
    p.add_argument("--base-tgt", metavar="FILE", help="baseline target vocabulary")
    p.add_argument("--out", metavar="FILE", help="output JSON")

    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(name)
    return None


def _apply_config(parser, argv):
    """Parse with config-file values installed as defaults under the flags."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config, encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {args.config}: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    sp = _subparser(parser, args.command)
    commands = set(_subparser_names(parser))
    flat = {k: v for k, v in cfg.items() if k not in commands}
    if isinstance(cfg.get(args.command), dict):
        flat.update(cfg[args.command])
    dests = {a.dest for a in sp._actions if a.dest not in ("help", "config")}
    values, unknown = {}, []
    for key, value in flat.items():
        dest = key.replace("-", "_")
        if dest in dests:
            values[dest] = value
        else:
            unknown.append(key)
    if unknown and (args.strict or flat.get("strict")):
        raise UsageError(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")
    for key in unknown:
        log.debug("ignoring config key %r", key)
    sp.set_defaults(**values)
    return parser.parse_args(argv)


def _subparser_names(parser):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return list(action.choices)
    return []


def _setup_logging(args):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLogFormatter() if args.log_json else logging.Formatter("%(levelname)s: %(message)s"))
    root = logging.getLogger()
    for h in list(root.handlers):
        if getattr(h, "_domadapt", False):
            root.removeHandler(h)
    handler._domadapt = True
    root.addHandler(handler)
    root.setLevel(args.log_level.upper())


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        _setup_logging(args)
        return args.func(args)
    except SystemExit as e:  # --help
        return e.code if isinstance(e.code, int) else EXIT_OK
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (icesearch.BackendError, icesearch.SearchError) as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except (LineDecodeError, ValueError, OSError, KeyError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
