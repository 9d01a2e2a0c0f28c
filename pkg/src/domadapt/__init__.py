"""Domain adaptation toolkit for machine translation data.

Modules: ``corpus`` (parallel corpora), ``metrics`` (BLEU, chrF2, TER and
significance tests), ``embed`` (embedding I/O and PCA), ``select``
(similarity search and sub-corpora), ``retrieve`` (BM25 and coverage
re-ranking), ``icesearch`` (QE-guided in-context example search),
``qedata`` (QE training data) and ``vocab`` (BPE and vocabulary analysis).
"""

__version__ = "0.1.0"
