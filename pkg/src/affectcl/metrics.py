"""Evaluation reports: F1 (Track A), Pearson (Track B), and diagnostics.

Aggregation follows the conventions of the source experiments, which invert
the usual macro/micro naming: ``paper_macro`` pools every (sample, emotion)
decision into one score, while ``paper_micro`` averages per-emotion scores.
The fields are named explicitly to keep the inversion visible.

Malformed predictions are scored as all-zero label vectors and counted
separately; dropping them would hide the formatting-collapse failure mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .corpus import EmotionSample, LabelSet, Track
from .templates import Prediction


class IdMismatchError(Exception):
    pass


@dataclass
class MetricReport:
    metric: str  # "f1" | "pearson"
    paper_macro: float
    paper_micro: float
    per_emotion: dict[str, float]
    n_samples: int
    n_malformed: int
    zero_variance_emotions: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "paper_macro": self.paper_macro,
            "paper_micro": self.paper_micro,
            "per_emotion": self.per_emotion,
            "n_samples": self.n_samples,
            "n_malformed": self.n_malformed,
            "zero_variance_emotions": self.zero_variance_emotions,
        }

    def to_table(self) -> str:
        """Aligned plain-text table, one row per aggregate/emotion."""
        rows = [("paper_macro", self.paper_macro),
                ("paper_micro", self.paper_micro)]
        rows += sorted(self.per_emotion.items())
        width = max(len(name) for name, _ in rows)
        lines = [f"{self.metric} report  (n={self.n_samples}, "
                 f"malformed={self.n_malformed})"]
        for name, score in rows:
            lines.append(f"  {name:<{width}}  {score: .4f}")
        return "\n".join(lines)


def _aligned_matrices(preds: list[Prediction], golds: list[EmotionSample],
                      label_set: LabelSet) -> tuple[np.ndarray, np.ndarray, int]:
    """(pred, gold) value matrices aligned row-by-row; malformed rows are zeros."""
    if len(preds) != len(golds):
        raise IdMismatchError(f"{len(preds)} predictions vs {len(golds)} golds")
    n_malformed = 0
    p = np.zeros((len(golds), len(label_set)), dtype=np.int64)
    g = np.zeros_like(p)
    for i, (pred, gold) in enumerate(zip(preds, golds)):
        g[i] = [gold.values[e] for e in label_set.emotions]
        if pred.ok:
            p[i] = [pred.values[e] for e in label_set.emotions]
        else:
            n_malformed += 1
    return p, g, n_malformed


def binary_f1(pred: np.ndarray, gold: np.ndarray) -> float:
    """F1 over one binary decision series; defined as 1.0 when no decision
    is positive on either side (nothing to get wrong)."""
    tp = int(np.sum((pred == 1) & (gold == 1)))
    fp = int(np.sum((pred == 1) & (gold == 0)))
    fn = int(np.sum((pred == 0) & (gold == 1)))
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def f1_report(preds: list[Prediction], golds: list[EmotionSample],
              label_set: LabelSet) -> MetricReport:
    """Track A report: pooled F1 (paper_macro) and mean per-emotion F1."""
    p, g, n_malformed = _aligned_matrices(preds, golds, label_set)
    per_emotion = {e: binary_f1(p[:, j], g[:, j])
                   for j, e in enumerate(label_set.emotions)}
    return MetricReport(
        metric="f1",
        paper_macro=binary_f1(p.ravel(), g.ravel()),
        paper_micro=float(np.mean(list(per_emotion.values()))),
        per_emotion=per_emotion,
        n_samples=len(golds),
        n_malformed=n_malformed)


def pearson(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    """Pearson r; zero-variance input yields (0.0, True) instead of NaN."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(np.sum(xc * xc)))
    sy = float(np.sqrt(np.sum(yc * yc)))
    if sx == 0.0 or sy == 0.0:
        return 0.0, True
    return float(np.sum(xc * yc) / (sx * sy)), False


def pearson_report(preds: list[Prediction], golds: list[EmotionSample],
                   label_set: LabelSet) -> MetricReport:
    """Track B report: pooled Pearson (paper_macro) and mean per-emotion r."""
    p, g, n_malformed = _aligned_matrices(preds, golds, label_set)
    per_emotion = {}
    degenerate = []
    for j, e in enumerate(label_set.emotions):
        r, flat = pearson(p[:, j], g[:, j])
        per_emotion[e] = r
        if flat:
            degenerate.append(e)
    pooled, pooled_flat = pearson(p.ravel(), g.ravel())
    if pooled_flat:
        degenerate.append("<pooled>")
    return MetricReport(
        metric="pearson",
        paper_macro=pooled,
        paper_micro=float(np.mean(list(per_emotion.values()))),
        per_emotion=per_emotion,
        n_samples=len(golds),
        n_malformed=n_malformed,
        zero_variance_emotions=degenerate)


def parse_failure_rate(preds: list[Prediction]) -> Fraction:
    """Exact fraction of malformed outputs; float(…) gives the usual rate."""
    if not preds:
        return Fraction(0)
    return Fraction(sum(1 for p in preds if not p.ok), len(preds))


@dataclass
class ErrorBreakdown:
    track: Track
    n_errors: int
    # Track B: among wrong intensities, the share with |pred - gold| == 1
    off_by_one_share: float | None
    # Track A: among per-emotion errors, the share predicted 0 with gold 1
    false_neutral_share: dict[str, float | None]
    confusion: dict[str, dict[str, int]]  # emotion -> {"gold=i,pred=j": count}


def error_breakdown(preds: list[Prediction], golds: list[EmotionSample],
                    label_set: LabelSet, track: Track) -> ErrorBreakdown:
    p, g, _ = _aligned_matrices(preds, golds, label_set)
    confusion: dict[str, dict[str, int]] = {}
    false_neutral: dict[str, float | None] = {}
    for j, e in enumerate(label_set.emotions):
        cells: dict[str, int] = {}
        for gv, pv in zip(g[:, j], p[:, j]):
            key = f"gold={gv},pred={pv}"
            cells[key] = cells.get(key, 0) + 1
        confusion[e] = cells
        errs = int(np.sum(p[:, j] != g[:, j]))
        if track is Track.A:
            fn = int(np.sum((p[:, j] == 0) & (g[:, j] == 1)))
            false_neutral[e] = fn / errs if errs else None
    wrong = p != g
    n_errors = int(wrong.sum())
    off_by_one = None
    if track is Track.B:
        if n_errors:
            off_by_one = float(np.sum(np.abs(p - g)[wrong] == 1) / n_errors)
    return ErrorBreakdown(track=track, n_errors=n_errors,
                          off_by_one_share=off_by_one,
                          false_neutral_share=false_neutral,
                          confusion=confusion)


# Reference constants from the source experiments' English test-set tables.
# Metadata only, never acceptance targets: they came from fine-tuning an 8B
# LLM, which this artifact deliberately does not reproduce.
REFERENCE_RESULTS = {
    ("A", "sp"): {"paper_macro": 0.828, "paper_micro": 0.808},
    ("A", "crc"): {"paper_macro": 0.819, "paper_micro": 0.802},
    ("A", "dpo"): {"paper_macro": 0.827, "paper_micro": 0.806},
    ("A", "simpo"): {"paper_macro": 0.748, "paper_micro": 0.741},
    ("B", "sp"): {"paper_macro": 0.845, "paper_micro": 0.823},
    ("B", "crc"): {"paper_macro": 0.828, "paper_micro": 0.805},
    ("B", "dpo"): {"paper_macro": 0.846, "paper_micro": 0.824},
    ("B", "simpo"): {"paper_macro": 0.770, "paper_micro": 0.741},
}


def report_json(report: MetricReport, extra: dict | None = None) -> str:
    obj = report.to_dict()
    if extra:
        obj.update(extra)
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)
