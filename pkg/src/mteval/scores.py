"""Scalar score transformations.

Covers the stage-1 DA label (aggregate, negate, clip), the raw-DA to MQM
rescaling used in stage 2, the inverse mapping applied to model outputs, and
MQM scores derived from annotated error spans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .core import ErrorSpan, Orientation, QualityScore, ScoreType, Severity
from .errors import DataError


class EmptyRatings(DataError):
    pass


class OutOfRange(DataError):
    pass


class NegativeRaw(DataError):
    pass


MQM_MAX = 25.0
DA_MAX = 100.0


@dataclass(frozen=True)
class SeverityWeights:
    minor: float = 1.0
    major: float = 5.0
    critical: float = 5.0

    def __post_init__(self):
        if min(self.minor, self.major, self.critical) < 0:
            raise ValueError("severity weights must be non-negative")
        if not self.minor <= self.major <= self.critical:
            raise ValueError("severity weights must satisfy minor <= major <= critical")

    def __getitem__(self, sev: Severity) -> float:
        return {Severity.MINOR: self.minor, Severity.MAJOR: self.major, Severity.CRITICAL: self.critical}[sev]


def aggregate_stage1_label(z_scores: Iterable[float], clip: float = 1.0) -> float:
    """Mean per-rater z-score of a segment, negated and clipped to [-clip, clip]."""
    zs = list(z_scores)
    if not zs:
        raise EmptyRatings("no z-scores for segment")
    label = -math.fsum(zs) / len(zs)
    return min(clip, max(-clip, label))


def da_to_mqm_scale(da: float) -> float:
    """Map a raw 0-100 DA score onto the 0-25 lower-is-better MQM scale."""
    if not 0.0 <= da <= DA_MAX:
        raise OutOfRange(f"DA score {da} outside [0, 100]")
    return MQM_MAX * (1.0 - da / DA_MAX)


def rescale_output(raw: float, score_type: ScoreType) -> QualityScore:
    """Turn a model prediction on the MQM scale into the reported score.

    MQM predictions are negated and left unbounded below (long documents can
    exceed 25). ESA predictions go through the inverse of ``da_to_mqm_scale``
    and are clipped to [0, 100].
    """
    if raw < 0:
        raise NegativeRaw(f"raw model output {raw} is negative")
    if score_type is ScoreType.MQM:
        return QualityScore(-float(raw) if raw else 0.0, ScoreType.MQM, Orientation.HIGHER_BETTER)
    esa = DA_MAX * (1.0 - raw / MQM_MAX)
    return QualityScore(min(DA_MAX, max(0.0, esa)), ScoreType.ESA, Orientation.HIGHER_BETTER)


def mqm_score_from_spans(spans: Iterable[ErrorSpan], weights: SeverityWeights = SeverityWeights()) -> float:
    # source-side spans (omissions) count towards MQM like any other error
    return math.fsum(weights[s.severity] for s in spans)
