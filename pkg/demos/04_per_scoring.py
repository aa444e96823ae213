"""
Phone error rate with an error breakdown
========================================

PER = (substitutions + deletions + insertions) / reference length under
minimal edit distance, pooled over utterances. Backtrace ties prefer
match > substitution > deletion > insertion, which fixes the breakdown
without ever changing the total.
"""
from afprobe import per, per_corpus

###############################################################################
# Single utterances
# -----------------

r = per("sil b iy t sil".split(), "sil b iy d sil".split(), "u1")
print(f"one substitution: PER {r.per:.3f}  (S,D,I) = "
      f"({r.substitutions},{r.deletions},{r.insertions})")

r = per(list("ab"), list("ba"), "swap")
print(f"swapped pair: PER {r.per:.3f} counted as {r.substitutions} substitutions")

r = per(list("abc"), [], "empty-hyp")
print(f"empty hypothesis: PER {r.per:.3f} with {r.deletions} deletions")

###############################################################################
# Corpus scoring pools counts before dividing
# -------------------------------------------

refs = {
    "utt1": "aa r dx ih s".split(),
    "utt2": "m ay n ow".split(),
    "utt3": "s t aa p".split(),
}
hyps = {
    "utt1": "aa r ih s".split(),      # one deletion
    "utt2": "m ay n ow".split(),      # perfect
    "utt3": "s d aa p p".split(),     # substitution + insertion
}
report = per_corpus(refs, hyps)
print(f"\ncorpus PER {report.per:.3f} over {report.n_ref} reference phones")
for utt in report.utterances:
    print(f"  {utt.utterance_id}: {utt.errors} errors / {utt.n_ref}")
