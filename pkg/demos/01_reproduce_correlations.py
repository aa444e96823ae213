"""
Probing F1 vs phone error rate: the headline correlations
==========================================================

The published result tables pair each representation system's averaged
probing macro-F1 with its phone error rate. Feeding those rows through the
toolkit's Pearson correlation reproduces the reported strengths exactly:
|r| = 0.949 within-language and |r| = 0.990 cross-language (the sign is
negative: more articulatory information, fewer recognition errors).
"""
from importlib import resources

from afprobe import pearson
from afprobe.metrics import correlate_report, load_system

###############################################################################
# Directly from the published rows
# --------------------------------

within_f1 = [0.637, 0.719, 0.769, 0.856]   # MFCC, CPC, wav2vec 2.0, HuBERT
within_per = [24.9, 22.3, 13.4, 10.2]
cross_f1 = [0.656, 0.692, 0.762, 0.831]
cross_per = [56.3, 45.9, 32.6, 23.0]

r_within = pearson(within_f1, within_per)
r_cross = pearson(cross_f1, cross_per)
print("within-language : r = %.3f  |r| = %.3f" % (r_within, abs(r_within)))
print("cross-language  : r = %.3f  |r| = %.3f" % (r_cross, abs(r_cross)))

###############################################################################
# The same numbers through the bundled system fixtures
# ----------------------------------------------------
# Each fixture is a {probe report, PER report} pair transcribed from the
# published tables; `afprobe correlate --inputs ...` consumes the same files.

fixtures = resources.files("afprobe").joinpath("data/fixtures")
for corpus in ("timit", "mboshi"):
    systems = [
        load_system(str(fixtures.joinpath(f"{corpus}_{name}.json")))
        for name in ("mfcc", "cpc", "wav2vec2", "hubert")
    ]
    summary = correlate_report(systems)
    print(f"\n{corpus}: |r| = {summary.abs_r:.3f}")
    for name, f1, per in zip(summary.names, summary.f1_averaged, summary.per):
        print(f"  {name:<16} avg F1 {f1:.3f}   PER {per:.3f}")
