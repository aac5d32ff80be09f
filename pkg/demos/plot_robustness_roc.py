"""
A small robustness run
======================

Distort every video a few times, score originals against their variants and
against each other, and sweep a threshold to get the ROC curve.
"""

import warnings

from hvhash.bench import MILD_RANGES, generate_corpus, run_robustness_suite

corpus = generate_corpus(20, seed=3)

with warnings.catch_warnings():
    warnings.simplefilter("ignore")         # 190 different pairs is too few for tiny FPRs
    result = run_robustness_suite(corpus, variants_per_video=4, seed=1, ranges=MILD_RANGES)

roc = result.roc
print(f"similar pairs {roc.n_similar}, different pairs {roc.n_different}")
print(f"crossover accuracy {roc.crossover_accuracy:.3f} at similarity {roc.crossover_threshold:.3f}")
for target, tpr in roc.tpr_at_fpr.items():
    print(f"TPR at FPR {target:g}:", "unsupported" if tpr is None else f"{tpr:.3f}")

# %%
# Sensitivity to noise, pooled over the other distortions.

for b in result.sensitivity["snr_db"]:
    if b.count:
        print(f"SNR {b.lo:>4}-{b.hi:<4} dB  n={b.count:3d}  mean similarity {b.mean_similarity:.3f}")

# %%
# Optional plot, if matplotlib is around.

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    plt.plot(roc.thresholds, roc.tpr, label="TPR")
    plt.plot(roc.thresholds, [1 - f for f in roc.fpr], label="1 - FPR")
    plt.xlabel("similarity threshold")
    plt.legend()
    plt.savefig("roc.png")
