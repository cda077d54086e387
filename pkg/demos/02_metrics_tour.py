"""
Metrics used in the meta-evaluation
===================================

Segmentation error, rank correlation with ties, rater agreement and
objective classification, each on a case small enough to check by hand.
"""

# %%
import numpy as np

from meetingeff.corpus import ObjectiveGroundTruth, ObjectiveSlot
from meetingeff.metrics import (SegMetricConfig, icc_2k, kendall, match_objectives,
                                objective_metrics, pk, spearman, window_diff)

# %% [markdown]
# Eight utterances, one reference boundary after utterance 3, a hypothesis
# with none. With a window of 2, six windows are checked and two straddle
# the boundary.

# %%
ref = np.array([0, 0, 0, 0, 1, 1, 1, 1])
hyp = np.zeros(8, int)
cfg = SegMetricConfig(2)
print(pk(ref, hyp, cfg), window_diff(ref, hyp, cfg))

# %% [markdown]
# Human means are full of ties (three raters, integer scores), so ranks are
# averaged and Kendall's tau-b corrects its denominator.

# %%
human = [3.0, 3.0, 3.6667, 2.0, 4.3333, 3.0]
judge = [3.2, 2.9, 3.8, 2.5, 4.0, 3.4]
print(spearman(human, judge), kendall(human, judge))
print(spearman([3, 3, 3], judge[:3]))     # constant input is flagged, not NaN

# %% [markdown]
# ICC(2,k) measures absolute agreement: shifting one rater by a point
# lowers it, shifting everyone does not.

# %%
rng = np.random.default_rng(1)
ratings = np.clip(rng.integers(1, 6, (15, 1)) + rng.integers(-1, 2, (15, 3)), 1, 5).astype(float)
print(icc_2k(ratings).value, icc_2k(ratings + 1).value)
shifted = ratings.copy()
shifted[:, 2] += 1
print(icc_2k(shifted).value)

# %% [markdown]
# Predicted objective labels are matched to annotated objectives, each of
# which accepts a few taxonomy labels. Unmatched predictions are false
# positives, unmatched objectives false negatives.

# %%
gt = ObjectiveGroundTruth((ObjectiveSlot("agree on design", frozenset({2, 5})),
                           ObjectiveSlot("share progress", frozenset({1}))))
m = match_objectives({5, 1, 9}, gt)
print(m)
print(objective_metrics([m]))
