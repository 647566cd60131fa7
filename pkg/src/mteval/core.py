"""Shared domain types: segments, error spans, quality scores, JSONL records.

All offsets are code-point indices into Python ``str`` objects (never bytes,
never grapheme clusters).
"""

from __future__ import annotations

import enum
import functools
import json
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Any, Iterable, Iterator

from .errors import DataError


class MissingHypothesis(DataError):
    pass


class NoSourceOrReference(DataError):
    pass


class OffsetsOutOfRange(DataError):
    pass


class InvalidScore(DataError):
    pass


class InvalidLangTag(DataError):
    pass


_LANG_RE = re.compile(r"^([A-Za-z]+)(?:[-_]([A-Za-z0-9]+))?$")


@dataclass(frozen=True)
class LangTag:
    language: str
    region: str | None = None

    def __post_init__(self):
        if not self.language or not self.language.isascii() or not self.language.isalpha():
            raise InvalidLangTag(f"bad language code: {self.language!r}")
        if self.region is not None and not self.region:
            raise InvalidLangTag("region must be non-empty when given")
        object.__setattr__(self, "language", self.language.lower())
        if self.region is not None:
            object.__setattr__(self, "region", self.region.upper())

    @classmethod
    def parse(cls, text: str) -> LangTag:
        """Parse ``cs``, ``en-GB`` or ``ar_EG``."""
        m = _LANG_RE.match(text.strip())
        if not m:
            raise InvalidLangTag(f"cannot parse language tag {text!r}")
        return cls(m.group(1), m.group(2))

    def __str__(self) -> str:
        return self.language if self.region is None else f"{self.language}-{self.region}"


def split_lp(lp: str) -> tuple[LangTag, LangTag]:
    """``"en-de"`` -> (en, de). Locales use underscores: ``"en-ar_EG"``."""
    src, sep, tgt = lp.partition("-")
    if not sep:
        raise InvalidLangTag(f"language pair must look like 'xx-yy': {lp!r}")
    return LangTag.parse(src), LangTag.parse(tgt)


@dataclass(frozen=True, kw_only=True)
class Segment:
    doc_id: str
    seg_id: str
    hypothesis: str | None
    src_lang: LangTag
    tgt_lang: LangTag
    source: str | None = None
    reference: str | None = None
    system: str | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.system or "", self.doc_id, self.seg_id)


def validate_segment(seg: Segment) -> Segment:
    # An empty hypothesis is legal: empty system outputs occur in WMT data.
    if seg.hypothesis is None:
        raise MissingHypothesis(f"segment {seg.doc_id}/{seg.seg_id} has no hypothesis")
    if seg.source is None and seg.reference is None:
        raise NoSourceOrReference(f"segment {seg.doc_id}/{seg.seg_id} has neither source nor reference")
    return seg


@functools.total_ordering
class Severity(enum.Enum):
    MINOR = "minor"
    MAJOR = "major"
    CRITICAL = "critical"

    @property
    def rank(self) -> int:
        return _SEVERITY_RANK[self]

    def __lt__(self, other):
        if not isinstance(other, Severity):
            return NotImplemented
        return self.rank < other.rank


_SEVERITY_RANK = {Severity.MINOR: 0, Severity.MAJOR: 1, Severity.CRITICAL: 2}


# Category vocabulary offered to the span annotator. Subcategories are written
# as "parent/child"; bare parents are accepted as well.
CATEGORIES: frozenset[str] = frozenset(
    {
        "accuracy",
        "accuracy/addition",
        "accuracy/mistranslation",
        "accuracy/omission",
        "accuracy/untranslated text",
        "fluency",
        "fluency/character encoding",
        "fluency/grammar",
        "fluency/inconsistency",
        "fluency/punctuation",
        "fluency/register",
        "fluency/spelling",
        "style",
        "style/awkward",
        "terminology",
        "terminology/inappropriate for context",
        "terminology/inconsistent use",
        "non-translation",
        "other",
        "no-error",
    }
)


def normalize_category(text: str) -> str:
    return "/".join(part.strip() for part in text.strip().lower().split("/"))


class ScoreType(enum.Enum):
    MQM = "MQM"
    ESA = "ESA"


class Orientation(enum.Enum):
    LOWER_BETTER = "lower_better"
    HIGHER_BETTER = "higher_better"


@dataclass(frozen=True)
class ErrorSpan:
    span: str
    severity: Severity
    category: str = "other"
    is_source_error: bool = False
    span_with_context: str | None = None
    offsets: tuple[int, int] | None = None

    def __post_init__(self):
        if self.span_with_context is not None and self.span not in self.span_with_context:
            raise DataError(f"span {self.span!r} is not inside its context {self.span_with_context!r}")
        if self.offsets is not None:
            start, end = self.offsets
            if not 0 <= start <= end or end - start != len(self.span):
                raise OffsetsOutOfRange(f"offsets {self.offsets} do not fit span {self.span!r}")
            object.__setattr__(self, "offsets", (int(start), int(end)))

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "span": self.span,
            "severity": self.severity.value,
            "category": self.category,
            "is_source_error": self.is_source_error,
        }
        if self.span_with_context is not None:
            d["span_with_context"] = self.span_with_context
        if self.offsets is not None:
            d["offsets"] = list(self.offsets)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ErrorSpan:
        offsets = d.get("offsets")
        return cls(
            span=d["span"],
            severity=Severity(d["severity"]),
            category=d.get("category", "other"),
            is_source_error=bool(d.get("is_source_error", False)),
            span_with_context=d.get("span_with_context"),
            offsets=tuple(offsets) if offsets is not None else None,
        )


def resolve_offsets_check(text: str, span: ErrorSpan) -> bool:
    """True iff ``text[start:end]`` is exactly the span text."""
    if span.offsets is None:
        raise OffsetsOutOfRange("span has no offsets")
    start, end = span.offsets
    if end > len(text):
        raise OffsetsOutOfRange(f"offsets {span.offsets} exceed text length {len(text)}")
    return text[start:end] == span.span


@dataclass(frozen=True)
class QualityScore:
    value: float
    score_type: ScoreType
    orientation: Orientation

    def __post_init__(self):
        v = self.value
        if self.score_type is ScoreType.ESA and self.orientation is Orientation.HIGHER_BETTER:
            if not 0.0 <= v <= 100.0:
                raise InvalidScore(f"ESA score {v} outside [0, 100]")
        if self.score_type is ScoreType.MQM:
            if self.orientation is Orientation.LOWER_BETTER and v < 0:
                raise InvalidScore(f"MQM error score {v} is negative")
            if self.orientation is Orientation.HIGHER_BETTER and v > 0:
                raise InvalidScore(f"negated MQM score {v} is positive")

    def to_dict(self) -> dict[str, Any]:
        return {"value": self.value, "score_type": self.score_type.value, "orientation": self.orientation.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> QualityScore:
        return cls(float(d["value"]), ScoreType(d["score_type"]), Orientation(d["orientation"]))


@dataclass(frozen=True)
class Record:
    """One line of the canonical JSONL interchange format."""

    segment: Segment
    spans: tuple[ErrorSpan, ...] = ()
    score: QualityScore | None = None
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    def with_spans(self, spans: Iterable[ErrorSpan]) -> Record:
        return replace(self, spans=tuple(spans))

    def to_dict(self) -> dict[str, Any]:
        seg = self.segment
        d: dict[str, Any] = {
            "doc_id": seg.doc_id,
            "seg_id": seg.seg_id,
            "source": seg.source,
            "reference": seg.reference,
            "hypothesis": seg.hypothesis,
            "src_lang": str(seg.src_lang),
            "tgt_lang": str(seg.tgt_lang),
            "spans": [s.to_dict() for s in self.spans],
            "score": self.score.to_dict() if self.score else None,
        }
        if seg.system is not None:
            d["system"] = seg.system
        for k, v in self.extra.items():
            d.setdefault(k, v)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Record:
        known = {"doc_id", "seg_id", "source", "reference", "hypothesis", "src_lang", "tgt_lang", "spans", "score", "system"}
        seg = Segment(
            doc_id=str(d["doc_id"]),
            seg_id=str(d["seg_id"]),
            source=d.get("source"),
            reference=d.get("reference"),
            hypothesis=d.get("hypothesis"),
            src_lang=LangTag.parse(d["src_lang"]),
            tgt_lang=LangTag.parse(d["tgt_lang"]),
            system=d.get("system"),
        )
        score = d.get("score")
        return cls(
            segment=seg,
            spans=tuple(ErrorSpan.from_dict(s) for s in d.get("spans") or ()),
            score=QualityScore.from_dict(score) if score else None,
            extra={k: v for k, v in d.items() if k not in known},
        )


def dumps(obj: dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False)


def iter_jsonl(src: str | Path | IO[str] | None) -> Iterator[dict[str, Any]]:
    """Yield one dict per non-blank line. ``None`` or ``"-"`` reads stdin."""
    if src is None or src == "-":
        fh, close = sys.stdin, False
    elif isinstance(src, (str, Path)):
        fh, close = open(src, encoding="utf-8"), True
    else:
        fh, close = src, False
    try:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"line {lineno}: invalid JSON ({e.msg})") from None
    finally:
        if close:
            fh.close()


def write_jsonl(rows: Iterable[dict[str, Any]], dst: str | Path | IO[str] | None) -> int:
    n = 0
    if dst is None or dst == "-":
        fh, close = sys.stdout, False
    elif isinstance(dst, (str, Path)):
        fh, close = open(dst, "w", encoding="utf-8"), True
    else:
        fh, close = dst, False
    try:
        for row in rows:
            fh.write(dumps(row) + "\n")
            n += 1
    finally:
        if close:
            fh.close()
    return n


def read_records(src) -> list[Record]:
    return [Record.from_dict(d) for d in iter_jsonl(src)]
