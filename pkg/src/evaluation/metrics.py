"""
Evaluation metrics for Phase HMM

Frame accuracy, per-class Jaccard with a temporal margin, class-aggregated
summaries, per-frame dumps and Table-style rendering.

Margin Jaccard: with m = round(margin * fps) frames, a frame predicted as
class c is matched when the ground truth shows c somewhere within m frames
of it. J_c = 100 * matched / |pred^-1(c) U gt^-1(c)|. With m = 0 this is
the classic per-class Jaccard.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.models.sequences import LabelSequence, PhaseSet
from src.utils.errors import (
    EmptyInputError,
    EmptySequenceError,
    FpsMismatchError,
    LengthMismatchError,
    OutOfRangeError,
)

logger = logging.getLogger(__name__)

DEFAULT_MARGIN_SECONDS = 10.0


@dataclass(frozen=True)
class EvalReport:
    """Accuracy and Jaccard summary of one prediction against ground truth."""
    accuracy: float
    per_class_jaccard: List[Optional[float]]
    jaccard_mean: float
    jaccard_std: float
    margin_seconds: float
    frames: int = 0

    @property
    def error(self) -> float:
        """Accuracy error, 100 - accuracy."""
        return 100.0 - self.accuracy

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['error'] = self.error
        return data


@dataclass(frozen=True)
class FrameRecord:
    """One row of a per-frame comparison dump."""
    frame: int
    time_s: float
    pred: int
    gt: int
    match: bool

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class AggregateReport:
    """Per-video reports and their mean/std across videos."""
    names: List[str]
    reports: List[EvalReport]
    accuracy_mean: float
    accuracy_std: float
    jaccard_mean: float
    jaccard_std: float
    per_class_jaccard: List[Optional[float]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'videos': {name: report.to_dict() for name, report in zip(self.names, self.reports)},
            'accuracy_mean': self.accuracy_mean,
            'accuracy_std': self.accuracy_std,
            'jaccard_mean': self.jaccard_mean,
            'jaccard_std': self.jaccard_std,
            'per_class_jaccard': self.per_class_jaccard,
        }


def _check_pair(pred: LabelSequence, gt: LabelSequence) -> None:
    if pred.T != gt.T:
        raise LengthMismatchError(f"prediction has {pred.T} frames but ground truth has {gt.T}")
    if pred.fps != gt.fps:
        raise FpsMismatchError(f"prediction is at {pred.fps} fps but ground truth is at {gt.fps} fps")


def _num_classes(pred: LabelSequence, gt: LabelSequence, num_classes: Optional[int]) -> int:
    if num_classes is not None:
        pred.check_phases(num_classes)
        gt.check_phases(num_classes)
        return num_classes
    observed = [int(s.labels.max()) + 1 for s in (pred, gt) if s.T]
    return max(observed) if observed else 0


def margin_frames(margin_seconds: float, fps: float) -> int:
    """Margin in whole frames, rounding halves up."""
    if margin_seconds < 0:
        raise OutOfRangeError(f"margin must be >= 0 seconds, got {margin_seconds}")
    return int(math.floor(margin_seconds * fps + 0.5))


def _dilate(mask: np.ndarray, m: int) -> np.ndarray:
    """True where `mask` holds anywhere within m frames."""
    if m == 0 or mask.shape[0] == 0:
        return mask
    T = mask.shape[0]
    cumulative = np.concatenate([[0], np.cumsum(mask, dtype=np.int64)])
    index = np.arange(T)
    lo = np.maximum(index - m, 0)
    hi = np.minimum(index + m + 1, T)
    return (cumulative[hi] - cumulative[lo]) > 0


def accuracy(pred: LabelSequence, gt: LabelSequence) -> float:
    """Percentage of frames where prediction equals ground truth."""
    _check_pair(pred, gt)
    if pred.T == 0:
        raise EmptySequenceError("accuracy of empty sequences is undefined")
    return 100.0 * float(np.count_nonzero(pred.labels == gt.labels)) / pred.T


def jaccard_per_class(pred: LabelSequence,
                      gt: LabelSequence,
                      margin_seconds: float = DEFAULT_MARGIN_SECONDS,
                      num_classes: Optional[int] = None) -> List[Optional[float]]:
    """
    Per-class Jaccard index in percent, relaxed by a temporal margin.

    Args:
        pred: Predicted labels
        gt: Ground-truth labels
        margin_seconds: Tolerance around ground-truth segments
        num_classes: K; defaults to the largest label seen plus one

    Returns:
        Length-K list; None for classes absent from both sequences
    """
    _check_pair(pred, gt)
    m = margin_frames(margin_seconds, gt.fps)
    K = _num_classes(pred, gt, num_classes)

    scores: List[Optional[float]] = []
    for c in range(K):
        predicted = pred.labels == c
        truth = gt.labels == c
        union = int(np.count_nonzero(predicted | truth))
        if union == 0:
            scores.append(None)
            continue
        matched = int(np.count_nonzero(predicted & _dilate(truth, m)))
        scores.append(100.0 * matched / union)
    return scores


def _mean_std(values: Sequence[Optional[float]]) -> Tuple[float, float]:
    defined = np.array([v for v in values if v is not None], dtype=np.float64)
    if defined.size == 0:
        return float('nan'), float('nan')
    return float(defined.mean()), float(defined.std())


def summarize(pred: LabelSequence,
              gt: LabelSequence,
              margin_seconds: float = DEFAULT_MARGIN_SECONDS,
              num_classes: Optional[int] = None) -> EvalReport:
    """
    Accuracy, per-class Jaccard and their class mean and population std.
    """
    acc = accuracy(pred, gt)
    per_class = jaccard_per_class(pred, gt, margin_seconds, num_classes)
    mean, std = _mean_std(per_class)
    return EvalReport(
        accuracy=acc,
        per_class_jaccard=per_class,
        jaccard_mean=mean,
        jaccard_std=std,
        margin_seconds=float(margin_seconds),
        frames=pred.T,
    )


def aggregate(names: Sequence[str], reports: Sequence[EvalReport]) -> AggregateReport:
    """
    Average several per-video reports.

    Accuracy and Jaccard are averaged over videos (Jaccard of a video is its
    class mean); per-class Jaccard is averaged over the videos where the
    class is defined.
    """
    if not reports:
        raise EmptyInputError("no reports to aggregate")
    accuracies = np.array([r.accuracy for r in reports])
    jaccards = np.array([r.jaccard_mean for r in reports])
    K = max(len(r.per_class_jaccard) for r in reports)
    per_class: List[Optional[float]] = []
    for c in range(K):
        values = [r.per_class_jaccard[c] for r in reports
                  if c < len(r.per_class_jaccard) and r.per_class_jaccard[c] is not None]
        per_class.append(float(np.mean(values)) if values else None)
    return AggregateReport(
        names=list(names),
        reports=list(reports),
        accuracy_mean=float(accuracies.mean()),
        accuracy_std=float(accuracies.std()),
        jaccard_mean=float(np.nanmean(jaccards)) if np.any(~np.isnan(jaccards)) else float('nan'),
        jaccard_std=float(np.nanstd(jaccards)) if np.any(~np.isnan(jaccards)) else float('nan'),
        per_class_jaccard=per_class,
    )


def dump_frames(pred: LabelSequence, gt: LabelSequence) -> List[FrameRecord]:
    """Per-frame (index, time, pred, gt, match) records for external plotting."""
    if pred.T != gt.T:
        raise LengthMismatchError(f"prediction has {pred.T} frames but ground truth has {gt.T}")
    return [
        FrameRecord(frame=t, time_s=t / gt.fps, pred=int(p), gt=int(g), match=bool(p == g))
        for t, (p, g) in enumerate(zip(pred.labels, gt.labels))
    ]


# ----------------------------------------------------------------------
# Rendering


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return 'n/a'
    return f"{value:.2f}"


def _class_labels(K: int, phases: Optional[PhaseSet]) -> List[str]:
    if phases is not None and phases.K >= K:
        return [phases.label(k) for k in range(phases.K)]
    return [f"{k}" for k in range(K)]


def render_report(report: EvalReport, phases: Optional[PhaseSet] = None) -> str:
    """Per-class Jaccard rows, an `All classes` row and accuracy, aligned."""
    labels = _class_labels(len(report.per_class_jaccard), phases)
    per_class = list(report.per_class_jaccard) + [None] * (len(labels) - len(report.per_class_jaccard))
    rows = [(label, _fmt(j)) for label, j in zip(labels, per_class)]
    rows.append(('All classes', f"{_fmt(report.jaccard_mean)} ± {_fmt(report.jaccard_std)}"))
    table = pd.DataFrame(rows, columns=['Phase', 'Jaccard'])
    lines = [
        table.to_string(index=False, justify='left'),
        '',
        f"Accuracy: {_fmt(report.accuracy)}  (error {_fmt(report.error)})",
        f"Margin: {report.margin_seconds:g} s, frames: {report.frames}",
    ]
    return '\n'.join(lines)


def render_aggregate(agg: AggregateReport, phases: Optional[PhaseSet] = None) -> str:
    """One row per video, then per-class means and the across-video summary."""
    videos = pd.DataFrame(
        [(name, _fmt(r.accuracy), _fmt(r.jaccard_mean)) for name, r in zip(agg.names, agg.reports)],
        columns=['Video', 'Accuracy', 'Jaccard'],
    )
    labels = _class_labels(len(agg.per_class_jaccard), phases)
    per_class = list(agg.per_class_jaccard) + [None] * (len(labels) - len(agg.per_class_jaccard))
    classes = pd.DataFrame([(label, _fmt(j)) for label, j in zip(labels, per_class)],
                           columns=['Phase', 'Jaccard'])
    lines = [
        videos.to_string(index=False, justify='left'),
        '',
        classes.to_string(index=False, justify='left'),
        '',
        f"Accuracy: {_fmt(agg.accuracy_mean)} ± {_fmt(agg.accuracy_std)}",
        f"Jaccard:  {_fmt(agg.jaccard_mean)} ± {_fmt(agg.jaccard_std)}",
    ]
    return '\n'.join(lines)
