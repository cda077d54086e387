"""
Aligning predicted segments onto reference segments
===================================================

A judge scores whatever segments it is given. When those segments come
from a model rather than from the annotators, their scores must be moved
onto the reference segments before they can be compared with human
ratings. This script walks through that transfer and the ceiling it
imposes on any correlation.
"""

# %%
import numpy as np

from meetingeff.corpus import ScoredSegmentation, Segmentation, Transcript, Utterance
from meetingeff.synthetic import make_meeting
from meetingeff.temporal import align, overall_effectiveness, roundtrip, upper_bound

# %% [markdown]
# A toy meeting: three utterances starting at 0, 5 and 10 seconds, ending at 20.
# Segments own the time from their first utterance's start up to the next
# segment's start, so the reference below covers [0, 10) and [10, 20).

# %%
utts = [Utterance(0, "A", 0.0, 4.0, "hi"), Utterance(1, "B", 5.0, 9.0, "agenda"),
        Utterance(2, "A", 10.0, 20.0, "budget")]
t = Transcript("toy", utts)
reference = Segmentation.from_spans(t, [(0, 1), (2, 2)])
predicted = Segmentation.from_spans(t, [(0, 0), (1, 2)], "predicted")
print(reference.starts, reference.ends)
print(predicted.starts, predicted.ends)

# %% [markdown]
# The predicted segments score 2 and 4. The first reference segment shares
# five seconds with each, so it receives (2*5 + 4*5) / 10.

# %%
aligned = align(reference, ScoredSegmentation(predicted, [2, 4]))
print(aligned.values)          # (3.0, 4.0)

# %% [markdown]
# The meeting-level score is the duration-weighted mean. It does not depend
# on how the meeting is cut, provided the scores describe the same timeline.

# %%
s = ScoredSegmentation(reference, [3.0, 4.0])
print(overall_effectiveness(s))
print(align(Segmentation.monolithic(t, "ground_truth"), s).values)

# %% [markdown]
# How well could a perfect judge do on a given predicted segmentation? Push
# the human scores onto it, pull them back, and correlate with the originals.

# %%
rng = np.random.default_rng(0)
rec = make_meeting(rng, "demo")
gt = rec.scored_gt()
for name, pred in [("per utterance", Segmentation.per_utterance(rec.transcript)),
                   ("reference", rec.segmentation),
                   ("one segment", Segmentation.monolithic(rec.transcript))]:
    print(f"{name:>14}: {upper_bound(gt, pred)}")

# %% [markdown]
# Cutting finer usually helps but not always. Below, eighteen one-second
# utterances form five reference segments. Predicting cuts at 1 and 13 pools
# the middle three; adding a cut at 4 isolates the second segment but pools
# the third (scored 3) with the fourth (3.67), which lifts it above the
# second (3.33) in the round trip, so the ceiling drops.

# %%
utts = [Utterance(i, "A", float(i), float(i + 1), "x") for i in range(18)]
t18 = Transcript("chain", utts)
gt = ScoredSegmentation(Segmentation.from_spans(t18, [(0, 0), (1, 3), (4, 7), (8, 12), (13, 17)]),
                        [3.0, 10 / 3, 3.0, 11 / 3, 8 / 3])
for cuts in ([1, 13], [1, 4, 13]):
    spans = list(zip([0] + cuts, [c - 1 for c in cuts] + [17]))
    pred = Segmentation.from_spans(t18, spans, "predicted")
    print(cuts, round(upper_bound(gt, pred).value, 3), np.round(roundtrip(gt, pred).values, 3))
