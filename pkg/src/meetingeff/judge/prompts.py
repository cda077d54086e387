"""Prompt texts and prompt assembly for the judge."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from ..corpus import ObjectiveSet, Segmentation, Transcript

OBJECTIVES_PLACEHOLDER = "{{OVERALL_MEETING_OBJECTIVES}}"
LAST_ID_PLACEHOLDER = "{{LAST_UTTERANCE_ID_PLACEHOLDER}}"

RUBRIC = """Effectiveness (1-5): the effectiveness of the meeting segmentation in terms of how effectively it contributed to the overall meeting objectives while efficiently utilizing time.
Formally, Effectiveness = (Objective Achievement)/(Time Cost)
The overall meeting objectives are {{OVERALL_MEETING_OBJECTIVES}}

Score 1: Ineffective Segment
- Segment had little or no relevance to the meeting objectives
- Time was poorly utilized with excessive tangents, repetition, or discussions that could have been handled elsewhere
- Participants gained very little value relative to the time invested

Score 2: Marginally Effective Segment
- Segment had some connection to the meeting objectives but with limited concrete progress
- Time usage showed clear inefficiencies (unfocused discussion, unclear direction, excessive details)
- Value delivered was noticeably low compared to time spent

Score 3: Moderately Effective Segment
- Segment had a clear connection to the meeting objectives with some measurable progress
- Time was reasonably managed with typical pacing and standard level of focus
- The value gained appropriately matched the time invested

Score 4: Highly Effective Segment
- Segment made significant progress toward the meeting objectives with clear outcomes
- Time was well utilized with focused discussion and few unnecessary diversions
- The segment delivered good value relative to the time invested

Score 5: Exceptionally Effective Segment
- Segment was critical to achieving the meeting objectives with decisive progress
- Time usage was highly efficient, with calibrated discussion depth and focus
- The segment delivered outstanding value for the time invested"""

OBJECTIVE_TAXONOMY = {
    1: "Exchange/share opinions or views on a topic or issue",
    2: "Make a decision",
    3: "Give or receive orders",
    4: "Find a solution to a problem that has arisen",
    5: "Generate ideas on products, projects or initiatives",
    6: "Generate buy-in or consensus on an idea",
    7: "Resolve conflicts and disagreements within a group",
    8: "Build trust and relationships with one or more individuals",
    9: "Maintain relationships with one or more other people and stay in touch",
    10: "Negotiate or bargain on a deal or contract",
    11: "Routine exchange of information",
    12: "Non-routine exchange of information",
    13: "Communicate positive or negative feelings or emotions on a topic or issue",
    14: "Show personal concern about or interest in a particular issue or situation",
    15: "Assert and/or reinforce your authority, status, position to your team or others",
    16: "Give or receive feedback",
    17: "Assemble a team and/or motivate teamwork on a project",
    18: "Clarify a concept, issue or idea",
    19: "Exchange confidential, private or sensitive information",
}

NO_OBJECTIVES = ("not provided. No meeting objectives are available; infer what the meeting "
                 "is trying to accomplish from the transcript itself.")

EVALUATION_STEPS = """Evaluation steps:
1. Read the target segment and the surrounding context segments.
2. Identify which of the overall meeting objectives the target segment advances, and how much concrete progress it makes.
3. Weigh that progress against the time the segment takes, using the timestamps.
4. Assign an effectiveness score from 1 to 5 following the rubric."""

SCORE_SCHEMA = "Answer with the form filled in as a single final line:\nScore: <integer 1-5>"

SCORE_SYSTEM = "You evaluate the effectiveness of meeting segments."

CLASSIFY_SYSTEM = "You classify the objectives of meetings."

CLASSIFY_INSTRUCTIONS = """Identify the objectives of the meeting below using this list of meeting objectives:
{taxonomy}

Three-Round Selection Process:
Round 1 - Identify potentially relevant objectives with their original ID numbers (1-19)
Round 2 - Detailed Analysis: Examine evidence for each candidate objective, eliminate those with minimal support.
Round 3 - Final Selection: From remaining objectives, select up to {cap} PRIMARY objectives with strongest evidence.

Respond with a JSON object:
{{"round1": [ids], "round2": [ids], "round3": [ids]}}"""

SEGMENT_SYSTEM = "You segment meeting transcripts by topic."

SEGMENT_INSTRUCTIONS = """Please perform **fine-grained topic segmentation** on the meeting transcript.

Instructions:
1. Divide the transcript into distinct segments based on topic changes. Ensure each segment represents a coherent topic discussion with clear boundaries for optimal topic segmentation.
2. Make the segmentation as fine-grained as possible, identifying even subtle topic shifts, while maintaining topic coherence within each segment.
3. For each segment, provide:
    - `start_id`: The ID of the first utterance of the segment.
    - `end_id`: The ID of the last utterance of the segment.
    - `topic`: A concise phrase describing the main topic.
    - `description`: A one-sentence summary of the segment content.
4. Critical Check for Completeness and Continuity:
    - **No Gaps**: The `start_id` ID of any segment (except the first) must immediately follow the `end_id` ID of the preceding segment. For example, if segment N ends at ID 15, segment N+1 must start at ID 16.
    - **Full Coverage**: All utterances from the first utterance ID provided in the transcript to the very last utterance ID MUST be included in a segment.
    - **Final Utterance**: The `end_id` ID of the very last segment **must** be the ID of the last utterance in the entire `Meeting transcripts`. The last utterance ID in the provided transcript is `{{LAST_UTTERANCE_ID_PLACEHOLDER}}`.

Format your response in a structured JSON array as specified below. Ensure the JSON is valid.
[{"start_id": 0, "end_id": 15, "topic": "...", "description": "..."}, ...]"""


def render_utterance(u) -> str:
    return f"[{u.id}] ({u.start_time:.2f}-{u.end_time:.2f}) {u.speaker}: {u.text}"


def render_transcript(transcript: Transcript, start_id=0, end_id=None) -> str:
    end_id = len(transcript) - 1 if end_id is None else end_id
    return "\n".join(render_utterance(u) for u in transcript.utterances[start_id:end_id + 1])


def objectives_text(objectives) -> str:
    """Fill text for the rubric's objectives slot.

    Accepts an :class:`ObjectiveSet` (rendered with taxonomy wording), a
    list of free-text objective names, or ``None``.
    """
    if objectives is None:
        return NO_OBJECTIVES
    if isinstance(objectives, ObjectiveSet):
        items = [OBJECTIVE_TAXONOMY[x] for x in sorted(objectives.labels)]
    else:
        items = [str(x) for x in objectives]
    if not items:
        return NO_OBJECTIVES
    return "\n" + "\n".join(f"{i}. {text}" for i, text in enumerate(items, 1))


@dataclass(frozen=True)
class PromptBundle:
    system: str
    rubric: str
    objectives: str
    window_text: str
    schema_note: str
    meeting_id: str
    target_index: int
    window_indices: tuple
    target_span: tuple
    target_times: tuple
    n_utterances: int

    @property
    def key(self) -> str:
        return f"score/{self.meeting_id}/{self.target_span[0]}-{self.target_span[1]}"

    def user_text(self) -> str:
        return "\n\n".join([self.rubric, EVALUATION_STEPS, "Meeting transcript:", self.window_text,
                            f"Evaluate segment {self.target_index} (marked TARGET).", self.schema_note])

    def messages(self) -> list:
        return [{"role": "system", "content": self.system},
                {"role": "user", "content": self.user_text()}]


def build_effectiveness_prompt(transcript: Transcript, seg: Segmentation, target_index: int,
                               window: int = 1,
                               objectives: Union[ObjectiveSet, Sequence[str], None] = None) -> PromptBundle:
    """Assemble the scoring prompt for one segment plus ``window`` neighbours per side.

    Context stops at the transcript edges; pass a window at least as large
    as the segment count to show the full transcript.
    """
    if not 0 <= target_index < len(seg):
        raise IndexError(f"segment index {target_index} out of range for {len(seg)} segments")
    if window < 0:
        raise ValueError("window must be non-negative")
    lo = max(0, target_index - window)
    hi = min(len(seg) - 1, target_index + window)
    blocks = []
    for j in range(lo, hi + 1):
        s = seg.segments[j]
        role = "TARGET" if j == target_index else (
            "preceding context" if j < target_index else "succeeding context")
        header = f"=== Segment {j} ({role}) [{s.start_time:.2f}s-{s.end_time:.2f}s] ==="
        blocks.append(header + "\n" + render_transcript(transcript, s.start_id, s.end_id))
    obj = objectives_text(objectives)
    target = seg.segments[target_index]
    return PromptBundle(
        system=SCORE_SYSTEM,
        rubric=RUBRIC.replace(OBJECTIVES_PLACEHOLDER, obj),
        objectives=obj,
        window_text="\n\n".join(blocks),
        schema_note=SCORE_SCHEMA,
        meeting_id=transcript.meeting_id,
        target_index=target_index,
        window_indices=tuple(range(lo, hi + 1)),
        target_span=target.span,
        target_times=(target.start_time, target.end_time),
        n_utterances=len(transcript),
    )


def build_classification_messages(transcript: Transcript, cap: int = 3) -> list:
    taxonomy = "\n".join(f"{i}. {t}" for i, t in OBJECTIVE_TAXONOMY.items())
    return [{"role": "system", "content": CLASSIFY_SYSTEM},
            {"role": "user", "content": CLASSIFY_INSTRUCTIONS.format(taxonomy=taxonomy, cap=cap)
             + "\n\nMeeting transcript:\n" + render_transcript(transcript)}]


def build_segmentation_messages(transcript: Transcript) -> list:
    text = SEGMENT_INSTRUCTIONS.replace(LAST_ID_PLACEHOLDER, str(len(transcript) - 1))
    return [{"role": "system", "content": SEGMENT_SYSTEM},
            {"role": "user", "content": text + "\n\nMeeting transcripts:\n" + render_transcript(transcript)}]
