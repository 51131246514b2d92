"""
Verification and identification metrics on toy scores
======================================================

"""

# Scores above a threshold are accepted. Genuine scores should be high and
# impostor scores low.
import numpy as np

from diu_hfr.evaluation import ScoreSet, auc, eer, rank1, roc_points, vr_at_far

scores = ScoreSet(genuine=np.array([0.9, 0.7, 0.4, 0.8]), impostor=np.array([0.1, 0.5, 0.2, 0.3, 0.6]))

# Equal error rate: the point where false accepts and false rejects balance.
print("EER:", eer(scores))

# AUC counts how often a genuine score beats an impostor score; ties count half.
print("AUC:", auc(scores))

# Verification rate at a fixed false accept rate uses the lowest threshold
# whose false accept rate stays at or under the target.
for far in (0.01, 0.2, 0.4):
    print(f"VR@FAR={far}:", vr_at_far(scores, far))

# The ROC curve as (FAR, TPR, threshold) points, strictest threshold first.
print("ROC:", [(round(f, 2), round(t, 2), th) for f, t, th in roc_points(scores)])

# Rank-1 identification: each probe row picks the best gallery column.
similarity = np.array([[0.9, 0.2, 0.1], [0.3, 0.4, 0.8], [0.5, 0.5, 0.1]])
print("Rank-1:", rank1(similarity, probe_ids=[0, 1, 1], gallery_ids=[0, 1, 2]))
