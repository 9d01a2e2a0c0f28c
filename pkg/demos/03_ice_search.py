"""Retrieve in-context examples with BM25, then grow the prompt while a QE score improves.

The translator and estimator here are toys: the "translation" records how
many examples it saw, and the estimator likes exactly three of them.
"""

from domadapt.icesearch import IceCandidate, SearchConfig, build_prompt, search
from domadapt.retrieve import build_index, rbm25_rerank, topk

pool = [
    ("the patient takes aspirin daily", "der Patient nimmt täglich Aspirin"),
    ("aspirin reduces fever", "Aspirin senkt Fieber"),
    ("the patient has a fever", "der Patient hat Fieber"),
    ("take two tablets daily", "nehmen Sie täglich zwei Tabletten"),
    ("the weather is nice", "das Wetter ist schön"),
]
source = "the patient takes two aspirin tablets daily"

index = build_index([s for s, _ in pool])
hits = topk(index, source, K=5)
print("BM25:  ", [(d, round(s, 3)) for d, s in hits])
print("R-BM25:", rbm25_rerank(index, source, [d for d, _ in hits], K=4))

candidates = [IceCandidate(pool[d][0], pool[d][1], rank, score) for rank, (d, score) in enumerate(hits, start=1)]


class Toy:
    def translate(self, prompt):
        return f"translation with {prompt.count('</s>')} examples"

    def estimate(self, source, translation):
        k = int(translation.split()[2])
        return 90.0 - 10.0 * abs(k - 3)


result = search(source, candidates, Toy(), Toy(), SearchConfig(patience=2))
print(f"stopped after {result.iterations_run} iterations ({result.stop_reason}), best QE {result.best_score}")
print("final prompt:")
print(build_prompt(result.selected, source))
