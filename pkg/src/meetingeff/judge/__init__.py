"""LLM-judge orchestration: prompts, backends, scoring, classification, segmentation."""
from .backends import (BackendError, JudgeBackend, JudgeRequest, JudgeResponse, MockBackend,
                       RemoteBackend, ScriptedBackend)
from .core import (CapabilityError, JudgeError, JudgeParseError, ObjectiveCapError,
                   ObjectiveLabelError, Repair, SamplingPolicy, ScoreDistribution, SegmentScore,
                   SegmentationResponseError, classify_objectives, generate_segmentation,
                   parse_score, repair_spans, score_segment)
from .prompts import OBJECTIVE_TAXONOMY, RUBRIC, PromptBundle, build_effectiveness_prompt


def mock_backend(mode="echo_gt", gt=None, **kw) -> MockBackend:
    """Deterministic mock judge; ``gt`` maps meeting ids to scored GT segmentations."""
    if mode == "echo_gt" and not gt:
        raise ValueError("echo_gt mock needs ground truth")
    return MockBackend(mode, gt=gt, **kw)
