"""Subword models and how much of a baseline vocabulary a fine-tuning setup keeps."""

from domadapt.vocab import (
    apply_bpe_lines,
    build_vocab,
    combine_for_bpe,
    detokenize,
    enumerate_configs,
    learn_bpe,
    merge_ops_for_size,
    overlap_report,
)

general = ["the market opened higher today", "the team won the final match", "prices rose in the market"] * 20
medical = ["the patient received antibiotics", "the infection responded to antibiotics"] * 5

print("merge budget for 50K / 500K / 2M lines:", [merge_ops_for_size(n) for n in (50_000, 500_000, 2_000_000)])
for c in enumerate_configs():
    print(f"  {c.id}: BPE from {c.bpe_source:3}  vocabulary from {c.vocab_source}")

bpe_d = learn_bpe(general, 60)
bpe_de = learn_bpe(combine_for_bpe(general, medical, seed=0), 60)
line = "the patient received antibiotics"
for name, model in (("D", bpe_d), ("D+E", bpe_de)):
    toks = apply_bpe_lines(model, [line])[0]
    assert detokenize(toks) == line
    print(f"{name:3} BPE: {' '.join(toks)}")

base = build_vocab(t for toks in apply_bpe_lines(bpe_d, general) for t in toks)
tuned = build_vocab(t for toks in apply_bpe_lines(bpe_de, medical) for t in toks)
rep = overlap_report(tuned, tuned, base, base)
print(f"medical vocabulary covers {rep.src_overlap_pct:.1f}% of baseline token mass, adds {rep.new_src_tokens} tokens")
