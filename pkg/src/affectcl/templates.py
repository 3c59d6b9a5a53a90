"""Prompt template rendering and output parsing.

Four fixed templates exist: standard prediction (SP) and pairwise contrastive
(CRC), each for Track A (binary) and Track B (intensity).  Rendering fills the
placeholders; parsing is the tolerant inverse used both for training-data
round trips and for scoring raw model outputs.  Parsers never raise on
arbitrary input: a malformed string becomes ``parse_status="malformed"``,
which downstream metrics count as a failure signal.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, TYPE_CHECKING

from .corpus import LabelSet, EmotionSample, Track, _read_header, _write_header

if TYPE_CHECKING:
    from .pairgen import ContrastivePair


class PromptTask(enum.Enum):
    SP_A = "sp_a"
    SP_B = "sp_b"
    CRC_A = "crc_a"
    CRC_B = "crc_b"


_LANGUAGE_LIST = (
    "Afrikaans, Algerian Arabic, Amharic, Emakhuwa, Hausa, Igbo, Kinyarwanda, "
    "Moroccan Arabic, Mozambican Portuguese, Nigerian-Pidgin, Oromo, Setswana, "
    "Somali, Swahili, Sundanese, Tigrinya, Xitsonga, IsiXhosa, Yoruba, isiZulu "
    "Arabic, Chinese, Hindi, Indonesian, Javanese, Marathi English, German, "
    "Romanian, Russian, Latin American Spanish, Tatar, Ukrainian, Swedish, "
    "Mozambican Portuguese, and Brazilian Portuguese"
)

SP_TEMPLATE_A = f"""Task Description:
You are tasked with determining the perceived emotion(s) of a speaker based on a conversation. Specifically, your goal is to predict the emotions that most people would associate with the speaker's last utterance. The possible emotions are: joy, sadness, fear, anger, surprise, and disgust. The conversation may be in any of the following languages: {_LANGUAGE_LIST}.

Instructions:
1. The language of the conversation will be explicitly indicated at the first place.
2. Each turn in the conversation will be marked with "Speaker1" or "Speaker2" to indicate the speaker.
3. You need to predict the emotions based on the last utterance from "Speaker1" (and any additional context or dialogue history if provided).
4. For each emotion, indicate whether it applies using binary labels: 1 (emotion is present) or 0 (emotion is absent).

Example Output Format:
joy: {{{{ 1 or 0 }}}}, sadness: {{{{ 1 or 0 }}}}, fear: {{{{ 1 or 0 }}}}, anger: {{{{ 1 or 0 }}}}, (optional) surprise: {{{{ 1 or 0 }}}}, (optional) disgust: {{{{ 1 or 0 }}}}.

Language:
{{lan}}

Content:
Speaker1: {{text}}"""

SP_TEMPLATE_B = f"""Task Description:
You are tasked with predicting the intensity for each of the perceived emotion classes of a speaker based on a conversation. Specifically, your prediction should represent the emotional intensity most people associate with the speaker's last utterance. The possible emotion classes are: joy, sadness, fear, anger, surprise, and disgust. The conversation may be in any of the following languages: {_LANGUAGE_LIST}.

Instructions:
1. The language of the conversation will be explicitly indicated at the first place.
2. Each turn in the conversation will be marked with "Speaker1" or "Speaker2" to indicate the speaker.
3. You need to predict the emotion intensity based on the last utterance from "Speaker1" (and any additional context or dialogue history if provided).
4. For each emotion class, the ordinal intensity levels include: 0 for no emotion, 1 for a low degree of emotion, 2 for a moderate degree of emotion, and 3 for a high degree of emotion.

Example Output Format:
joy: {{{{ 0, 1, 2, or 3 }}}}, sadness: {{{{ 0, 1, 2, or 3 }}}}, fear: {{{{ 0, 1, 2, or 3 }}}}, anger: {{{{ 0, 1, 2, or 3 }}}}, (optional) surprise: {{{{ 0, 1, 2, or 3 }}}}, (optional) disgust: {{{{ 0, 1, 2, or 3 }}}}.

Language:
{{lan}}

Content:
Speaker1: {{text}}"""

CRC_TEMPLATE_A = f"""Task Description:
Your task is to compare and predict the perceived emotional label exhibited by the speaker in two separate conversations. The target emotion for comparison is "{{label}}". The conversation may be in any of the following languages: {_LANGUAGE_LIST}.

Instructions:
1. The two conversations will be marked as "Conversation1" and "Conversation2". Each turn in the conversation will be marked as "Speaker1" or "Speaker2" to indicate the speaker.
2. The language of the conversation will be explicitly stated at the beginning of each conversation.
3. You only need to predict the emotions of "Speaker1" in both conversations. No predictions are required for "Speaker2".
4. Your comparison and prediction should be based on the last utterance of "Speaker1" in each conversation, while also considering any additional background or dialogue history if provided.
5. First, provide a brief summary of the comparison result between the two conversations. Then, use binary labels to indicate whether the specified emotion ("{{label}}") is present in each conversation: 1 (emotion is present) or 0 (emotion is absent).

Example Output Format:
For emotion label "{{label}}", {{{{Brief summary of the comparison result}}}}. Conversation1: {{{{1 or 0}}}}, Conversation2: {{{{1 or 0}}}}.

Conversation1:
Language: {{lan1}}
Speaker1: {{text1}}

Conversation2:
Language: {{lan2}}
Speaker1: {{text2}}"""

CRC_TEMPLATE_B = f"""Task Description:
Your task is to compare and predict the intensity of the specific perceived emotion class in two separate conversations. The target preceived emotion class for comparison is "{{label}}". The conversation may be in any of the following languages: {_LANGUAGE_LIST}.

Instructions:
1. The two conversations will be marked as "Conversation1" and "Conversation2". Each turn in the conversation will be marked as "Speaker1" or "Speaker2" to indicate the speaker.
2. The language of the conversation will be explicitly stated at the beginning of each conversation.
3. You only need to predict the emotional intensity of "Speaker1" in both conversations. No predictions are required for "Speaker2".
4. Your comparison and prediction should be based on the last utterance of "Speaker1" in each conversation, while also considering any additional background or dialogue history if provided.
5. First, provide a brief summary of the comparison result between the two conversations. Then, use one of the four levels to indicate the target ordinal intensity: 0 for no emotion, 1 for a low degree of emotion, 2 for a moderate degree of emotion, and 3 for a high degree of emotion.

Example Output Format:
For emotion label "{{label}}", {{{{Brief summary of the comparison result}}}}. Conversation1: {{{{ 0, 1, 2, or 3 }}}}, Conversation2: {{{{ 0, 1, 2, or 3 }}}}.

Conversation1:
Language: {{lan1}}
Speaker1: {{text1}}

Conversation2:
Language: {{lan2}}
Speaker1: {{text2}}"""


@dataclass(frozen=True)
class PromptInstance:
    """Rendered input plus target output for one training/inference example."""

    task: PromptTask
    input_text: str
    target_text: str
    meta: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Prediction:
    """Parsed label values, or the malformed-marker when parsing failed."""

    values: dict[str, int]
    parse_status: str  # "ok" | "malformed"
    raw: str = ""

    @property
    def ok(self) -> bool:
        return self.parse_status == "ok"


def render_label_string(values: dict[str, int], label_set: LabelSet) -> str:
    """``emotion: value`` pairs in template output order, period-terminated."""
    parts = [f"{e}: {values[e]}" for e in label_set.output_order()]
    return ", ".join(parts) + "."


def sp_task(track: Track) -> PromptTask:
    return PromptTask.SP_A if track is Track.A else PromptTask.SP_B


def crc_task(track: Track) -> PromptTask:
    return PromptTask.CRC_A if track is Track.A else PromptTask.CRC_B


def render_sp(sample: EmotionSample, label_set: LabelSet) -> PromptInstance:
    """Render the standard-prediction prompt and its gold target."""
    template = SP_TEMPLATE_A if sample.track is Track.A else SP_TEMPLATE_B
    input_text = template.format(lan=sample.language, text=sample.text)
    target_text = render_label_string(sample.values, label_set)
    return PromptInstance(task=sp_task(sample.track), input_text=input_text,
                          target_text=target_text, meta={"id": sample.id})


def render_crc(pair: "ContrastivePair", test_position: int = 2) -> PromptInstance:
    """Render a contrastive prompt for a pair of samples.

    The pair's second sample plays the test role and is placed at
    ``test_position`` (1 or 2); the first sample takes the other slot.  The
    default keeps the pair's own order.
    """
    if test_position not in (1, 2):
        raise ValueError("test_position must be 1 or 2")
    track = pair.s1.track
    template = CRC_TEMPLATE_A if track is Track.A else CRC_TEMPLATE_B
    if test_position == 2:
        first, second = pair.s1, pair.s2
        v1, v2 = pair.v1, pair.v2
    else:
        first, second = pair.s2, pair.s1
        v1, v2 = pair.v2, pair.v1
    input_text = template.format(label=pair.focus, lan1=first.language,
                                 text1=first.text, lan2=second.language,
                                 text2=second.text)
    target_text = (f'For emotion label "{pair.focus}", {pair.summary}. '
                   f"Conversation1: {v1}, Conversation2: {v2}.")
    return PromptInstance(
        task=crc_task(track), input_text=input_text, target_text=target_text,
        meta={"ids": [first.id, second.id], "focus": pair.focus,
              "test_position": test_position,
              "texts": [first.text, second.text]})


_PAIR_RE = re.compile(r"^\s*([A-Za-z]+)\s*:\s*(-?\d+)\s*$")


def parse_sp_output(text: str, label_set: LabelSet, track: Track) -> Prediction:
    """Parse an SP output string back into label values.

    Tolerant in case and whitespace, strict in structure: every LabelSet
    emotion must appear exactly once with an in-range integer value.
    """
    malformed = Prediction(values={}, parse_status="malformed", raw=text)
    if not isinstance(text, str):
        return malformed
    body = text.strip()
    if body.endswith("."):
        body = body[:-1]
    values: dict[str, int] = {}
    for part in body.split(","):
        m = _PAIR_RE.match(part)
        if m is None:
            return malformed
        emotion = m.group(1).lower()
        if emotion not in label_set.emotions or emotion in values:
            return malformed
        value = int(m.group(2))
        if value not in track.value_range:
            return malformed
        values[emotion] = value
    if set(values) != set(label_set.emotions):
        return malformed
    return Prediction(values={e: values[e] for e in label_set.emotions},
                      parse_status="ok", raw=text)


_CRC_RE = re.compile(
    r'For emotion label\s*"([^"]*)"\s*,\s*(.*?)\.?\s*'
    r"Conversation1\s*:\s*(-?\d+)\s*,\s*Conversation2\s*:\s*(-?\d+)\s*\.?\s*$",
    re.IGNORECASE | re.DOTALL)


def parse_crc_output(text: str, track: Track) -> tuple[int, int, str] | None:
    """Extract the two conversation values and the summary, or None if malformed."""
    if not isinstance(text, str):
        return None
    m = _CRC_RE.search(text)
    if m is None:
        return None
    v1, v2 = int(m.group(3)), int(m.group(4))
    if v1 not in track.value_range or v2 not in track.value_range:
        return None
    return v1, v2, m.group(2).strip()


def save_prompts(instances: Iterable[PromptInstance], path: str | Path,
                 extra: dict | None = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        _write_header(fh, "prompts", extra)
        for inst in instances:
            fh.write(json.dumps({
                "task": inst.task.value,
                "input": inst.input_text,
                "target": inst.target_text,
                "meta": inst.meta,
            }, sort_keys=True, ensure_ascii=False) + "\n")


def load_prompts(path: str | Path) -> list[PromptInstance]:
    instances = []
    with Path(path).open(encoding="utf-8") as fh:
        _read_header(fh.readline(), "prompts")
        for line in fh:
            obj = json.loads(line)
            instances.append(PromptInstance(
                task=PromptTask(obj["task"]), input_text=obj["input"],
                target_text=obj["target"], meta=obj.get("meta", {})))
    return instances
