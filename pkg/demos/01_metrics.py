"""Score two toy systems, then ask whether the difference is significant."""

from domadapt.metrics import bleu, chrf2, ks_two_sample, paired_bootstrap, ter

refs = [
    "the patient was given two tablets of aspirin",
    "blood pressure returned to normal after treatment",
    "further tests are needed to confirm the diagnosis",
    "the dose was reduced because of side effects",
] * 10
system_a = [r.replace("the ", "a ", 1) for r in refs]
system_b = [" ".join(r.split()[::-1]) for r in refs]

for name, hyps in (("A", system_a), ("B", system_b)):
    print(f"system {name}: BLEU {bleu(hyps, refs).value:6.2f}  chrF2 {chrf2(hyps, refs).value:6.2f}"
          f"  TER {ter(hyps, refs).value:6.2f}")

res = paired_bootstrap(system_a, system_b, refs, metric="bleu", iterations=1000, seed=1)
print(f"bootstrap: A wins {res.wins_a}, B wins {res.wins_b}, ties {res.ties}, significant={res.significant}")

lengths_a = [len(h.split()) for h in system_a]
lengths_b = [len(h.split()) + (i % 3) for i, h in enumerate(system_b)]
ks = ks_two_sample(lengths_a, lengths_b)
print(f"length distributions: KS D={ks.statistic:.3f}, p={ks.p_value:.3f}")
