"""Emotion dataset loading, validation, and JSONL round-tripping.

Datasets arrive as CSV files with a header ``id,text,<emotion...>`` and are
normalized into immutable :class:`EmotionSample` records.  Two tracks exist:
Track A carries binary presence labels, Track B carries ordinal intensities
0..3.  Internally every label map uses the canonical emotion ordering; the
column order of the input file is irrelevant.
"""

from __future__ import annotations

import csv
import enum
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

SCHEMA_VERSION = 1

# Canonical ordering used for all internal label maps.
CANONICAL_EMOTIONS = ("anger", "fear", "joy", "sadness", "surprise", "disgust")

# Ordering used when rendering label strings in prompt targets.
OUTPUT_EMOTIONS = ("joy", "sadness", "fear", "anger", "surprise", "disgust")


class Track(enum.Enum):
    """A = multi-label binary classification, B = 0..3 intensity prediction."""

    A = "A"
    B = "B"

    @property
    def value_range(self) -> range:
        return range(2) if self is Track.A else range(4)

    @property
    def arity(self) -> int:
        return 2 if self is Track.A else 4


class DatasetError(Exception):
    """Base for dataset loading failures."""


class MissingColumnError(DatasetError):
    pass


class ValueOutOfRangeError(DatasetError):
    pass


class DuplicateIdError(DatasetError):
    pass


class SchemaVersionError(DatasetError):
    pass


@dataclass(frozen=True)
class LabelSet:
    """The emotions annotated for one language, in canonical order."""

    language: str
    emotions: tuple[str, ...]

    def __post_init__(self):
        if not self.emotions:
            raise ValueError("LabelSet must contain at least one emotion")
        unknown = [e for e in self.emotions if e not in CANONICAL_EMOTIONS]
        if unknown:
            raise ValueError(f"unknown emotions: {unknown}")
        ordered = tuple(e for e in CANONICAL_EMOTIONS if e in self.emotions)
        object.__setattr__(self, "emotions", ordered)
        object.__setattr__(self, "language", self.language.lower())

    def __len__(self) -> int:
        return len(self.emotions)

    def __contains__(self, emotion: str) -> bool:
        return emotion in self.emotions

    def output_order(self) -> tuple[str, ...]:
        """Emotions in the order used by rendered target strings."""
        return tuple(e for e in OUTPUT_EMOTIONS if e in self.emotions)


@dataclass(frozen=True)
class EmotionSample:
    """One utterance with its gold label values."""

    id: str
    language: str
    track: Track
    text: str
    values: dict[str, int]

    def value_list(self, label_set: LabelSet) -> list[int]:
        return [self.values[e] for e in label_set.emotions]


def validate_sample(sample: EmotionSample, label_set: LabelSet) -> list[str]:
    """Return every invariant violation; empty list iff the sample is valid.

    Never raises: violations are reported as human-readable strings.
    """
    violations = []
    rng = sample.track.value_range
    for emotion in label_set.emotions:
        if emotion not in sample.values:
            violations.append(f"MissingValue({emotion})")
        elif sample.values[emotion] not in rng:
            violations.append(f"ValueOutOfRange({emotion}={sample.values[emotion]})")
    for emotion in sample.values:
        if emotion not in label_set.emotions:
            violations.append(f"UnexpectedValue({emotion})")
    if not sample.id:
        violations.append("EmptyId")
    return violations


def load_dataset(path: str | Path, track: Track,
                 language: str) -> tuple[list[EmotionSample], LabelSet]:
    """Load a CSV dataset, aborting on the first malformed row.

    The header must name ``id``, ``text``, and at least one canonical emotion;
    any other column is rejected.  Row order is preserved.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise MissingColumnError(f"{path}: empty file, header required")
        lowered = [h.strip().lower() for h in header]
        for required in ("id", "text"):
            if required not in lowered:
                raise MissingColumnError(f"{path}: missing column '{required}'")
        emotion_cols = [h for h in lowered if h in CANONICAL_EMOTIONS]
        stray = [h for h in lowered if h not in CANONICAL_EMOTIONS
                 and h not in ("id", "text")]
        if stray:
            raise MissingColumnError(f"{path}: unrecognized columns {stray}")
        if not emotion_cols:
            raise MissingColumnError(f"{path}: no emotion columns found")
        label_set = LabelSet(language=language, emotions=tuple(emotion_cols))

        samples = []
        seen_ids: set[str] = set()
        for row_idx, row in enumerate(reader):
            row = {k.strip().lower(): v for k, v in row.items() if k is not None}
            sample_id = (row.get("id") or "").strip()
            if sample_id in seen_ids:
                raise DuplicateIdError(f"{path} row {row_idx}: duplicate id '{sample_id}'")
            seen_ids.add(sample_id)
            text = row.get("text") or ""
            if not text:
                warnings.warn(f"{path} row {row_idx}: empty text for id '{sample_id}'")
            values = {}
            for emotion in label_set.emotions:
                raw = (row.get(emotion) or "").strip()
                try:
                    value = int(raw)
                except ValueError:
                    raise ValueOutOfRangeError(
                        f"{path} row {row_idx}: non-integer value '{raw}' for {emotion}")
                if value not in track.value_range:
                    raise ValueOutOfRangeError(
                        f"{path} row {row_idx}: {emotion}={value} outside track "
                        f"{track.value} range")
                values[emotion] = value
            samples.append(EmotionSample(id=sample_id, language=language.lower(),
                                         track=track, text=text, values=values))
    return samples, label_set


def _write_header(fh: TextIO, kind: str, extra: dict | None = None) -> None:
    header = {"schema_version": SCHEMA_VERSION, "kind": kind}
    if extra:
        header.update(extra)
    fh.write(json.dumps(header, sort_keys=True, ensure_ascii=False) + "\n")


def _read_header(line: str, kind: str) -> None:
    header = json.loads(line)
    if header.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported schema_version {header.get('schema_version')}")
    if header.get("kind") != kind:
        raise SchemaVersionError(f"expected kind '{kind}', got '{header.get('kind')}'")


def save_dataset(samples: Iterable[EmotionSample], label_set: LabelSet,
                 path: str | Path, extra: dict | None = None) -> None:
    """Write the normalized JSONL form: one object per sample, keys sorted."""
    with Path(path).open("w", encoding="utf-8") as fh:
        _write_header(fh, "dataset", extra)
        for s in samples:
            fh.write(json.dumps({
                "id": s.id,
                "language": s.language,
                "track": s.track.value,
                "text": s.text,
                "values": {e: s.values[e] for e in label_set.emotions},
            }, sort_keys=True, ensure_ascii=False) + "\n")


def load_dataset_jsonl(path: str | Path) -> tuple[list[EmotionSample], LabelSet]:
    """Inverse of :func:`save_dataset`."""
    samples = []
    with Path(path).open(encoding="utf-8") as fh:
        _read_header(fh.readline(), "dataset")
        label_set = None
        for line in fh:
            obj = json.loads(line)
            track = Track(obj["track"])
            if label_set is None:
                label_set = LabelSet(language=obj["language"],
                                     emotions=tuple(obj["values"].keys()))
            samples.append(EmotionSample(
                id=obj["id"], language=obj["language"], track=track,
                text=obj["text"],
                values={e: int(v) for e, v in obj["values"].items()}))
    if label_set is None:
        raise DatasetError(f"{path}: no samples")
    return samples, label_set
