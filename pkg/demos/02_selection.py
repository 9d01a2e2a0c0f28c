"""Pick out-of-domain pairs that look like the in-domain queries.

Hash embeddings stand in for a sentence encoder; everything after that is
the real pipeline: PCA, exact top-n cosine ranking, stacked sub-corpora.
"""

import random

from domadapt.corpus import Corpus
from domadapt.embed import apply_pca, fit_pca, hash_embed
from domadapt.select import build_subcorpora, rank_topn

rng = random.Random(0)
general = "market weather football music election travel film recipe".split()
medical = "patient dose tablet therapy symptom clinical blood infection".split()
ood_src = [" ".join(rng.choices(general + medical[:2], k=8)) for _ in range(3000)]
ood = Corpus.from_texts("ood", ood_src, [f"target {i}" for i in range(len(ood_src))])
queries = [" ".join(rng.choices(medical, k=6)) for _ in range(40)]

e = hash_embed(ood.srcs, dims=64)
q = hash_embed(queries, dims=64)
pca = fit_pca(e, k=6)
print(f"PCA keeps {pca.explained_variance.sum() / e.data.var(axis=0, ddof=1).sum():.1%} of the variance")

ranking = rank_topn(apply_pca(pca, q), apply_pca(pca, e), n=3)
best = ranking.matches[0]
print(f"query 0: {queries[0]!r}")
print(f"  best match {ood[best.entry_id].src!r} (cosine {best.score:.3f})")

for sub in build_subcorpora(ranking.matches, ood, n=3):
    share = sum(any(w in medical for w in p.src.split()) for p in sub.pairs) / len(sub)
    print(f"top{sub.level}: {len(sub):4d} pairs, {share:.0%} mention a medical term")
