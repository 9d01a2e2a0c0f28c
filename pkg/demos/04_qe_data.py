"""Build quality-estimation training data from a parallel corpus."""

from domadapt.corpus import Corpus
from domadapt.qedata import concat_multilingual, format_tagged, make_triplets, mix_oversample

src = [f"the patient received {n} mg of the drug" for n in range(40)]
tgt = [f"der Patient erhielt {n} mg des Medikaments" for n in range(40)]
parallel = Corpus.from_texts("med", src, tgt)


class WordDropper:
    """A weak 'MT system' that forgets the last word."""

    def __init__(self, corpus):
        self.ref = {p.src: p.tgt for p in corpus}

    def translate(self, text):
        return " ".join(self.ref[text].split()[:-1])


triplets = make_triplets(parallel, WordDropper(parallel), portion=5, label_metric="ter", seed=0)
for t in triplets[:3]:
    print(f"{t.mt!r:45} TER {t.label:.2f}")

print(format_tagged(src[0], tgt[0], "ID").text)

ood = [f"general sentence {i}" for i in range(100)]
mixed = mix_oversample(ood, src[:10], ood_fraction=1.0, seed=0)
print(f"balanced mix: {len(mixed)} items, {sum(s in ood for s in mixed)} from OOD")
print(f"multilingual concat: {len(concat_multilingual([('en-de', tgt), ('en-fr', src)]))} items")
