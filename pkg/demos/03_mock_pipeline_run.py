"""
An offline evaluation run
=========================

The pipeline scores every segment with a judge, moves the scores onto the
annotated segments and correlates them with the human means. Mock judges
make the whole loop reproducible without a model endpoint.
"""

# %%
import tempfile

from meetingeff.judge import MockBackend
from meetingeff.pipeline import RunConfig, consistency_report, run_evaluation, subset_report
from meetingeff.synthetic import make_dataset

data = make_dataset(6, seed=0)
print(len(data), "meetings,", sum(len(r.segmentation) for r in data), "segments")

# %% [markdown]
# A judge that echoes the human scores is a correctness check: the
# correlation must be exactly 1. A constant judge carries no ranking at all.

# %%
echo = run_evaluation(data, RunConfig(), MockBackend.from_dataset(data, "echo_gt"))
flat = run_evaluation(data, RunConfig(), MockBackend("constant", constant=3.0))
print(echo.spearman, echo.kendall)
print(flat.spearman, flat.kendall)

# %% [markdown]
# Now let the judge also segment the meetings (a perturbed copy of the
# reference) and add noise to its scores. The report carries Pk/WindowDiff
# for the predicted segments and the round-trip ceiling on correlation.

# %%
noisy = MockBackend.from_dataset(data, "seeded_noise", sigma=1.0, seed=3, segmentation="perturbed")
rep = run_evaluation(data, RunConfig("pred_segmentation", "predicted", seed=3), noisy)
print("measured", rep.spearman.value, "ceiling", rep.upper_bound["spearman"].value)
print(rep.segmentation_metrics, rep.objective_metrics)

# %% [markdown]
# Reports can be restricted to a class of meetings, and several runs can be
# compared against each other.

# %%
for cls in ("scenario", "non_scenario"):
    print(cls, subset_report(rep, meeting_class=cls).spearman)

runs = [run_evaluation(data, RunConfig(), MockBackend.from_dataset(data, "seeded_noise", sigma=0.5, seed=s))
        for s in range(3)]
print(consistency_report(runs).matrix.round(3))

# %%
with tempfile.TemporaryDirectory() as out:
    for path in rep.write(out):
        print(path.name, path.stat().st_size, "bytes")
