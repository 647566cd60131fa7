"""Readers for WMT human-judgement exports.

MQM exports are tab-separated with one error per line and the erroneous span
marked inline with ``<v>``/``</v>``. DA exports carry one rating per line.
"""

from __future__ import annotations

import collections
import csv
import logging
import statistics
from dataclasses import dataclass, replace
from typing import Any, Iterable, NamedTuple, Sequence

from .core import CATEGORIES, ErrorSpan, Record, Segment, Severity, normalize_category, split_lp
from .errors import DataError

logger = logging.getLogger(__name__)

OPEN, CLOSE = "<v>", "</v>"

MQM_COLUMNS = ("system", "doc", "doc_id", "seg_id", "rater", "source", "target", "category", "severity")


class MalformedLine(DataError):
    pass


class UnbalancedMarkers(DataError):
    pass


class DegenerateRater(DataError):
    pass


class UnknownSeverity(DataError):
    pass


def strip_markers(text: str) -> tuple[str, list[tuple[int, int]]]:
    """Remove ``<v>``/``</v>`` markers, returning the clean text and span offsets."""
    out: list[str] = []
    spans: list[tuple[int, int]] = []
    pos = 0
    n_clean = 0
    start: int | None = None
    while True:
        i_open = text.find(OPEN, pos)
        i_close = text.find(CLOSE, pos)
        if i_open < 0 and i_close < 0:
            break
        if i_close < 0 or (0 <= i_open < i_close):
            if start is not None:
                raise UnbalancedMarkers(f"nested {OPEN} in {text!r}")
            chunk = text[pos:i_open]
            out.append(chunk)
            n_clean += len(chunk)
            start = n_clean
            pos = i_open + len(OPEN)
        else:
            if start is None:
                raise UnbalancedMarkers(f"{CLOSE} without {OPEN} in {text!r}")
            chunk = text[pos:i_close]
            out.append(chunk)
            n_clean += len(chunk)
            spans.append((start, n_clean))
            start = None
            pos = i_close + len(CLOSE)
    if start is not None:
        raise UnbalancedMarkers(f"unclosed {OPEN} in {text!r}")
    out.append(text[pos:])
    return "".join(out), spans


def insert_markers(text: str, start: int, end: int) -> str:
    return text[:start] + OPEN + text[start:end] + CLOSE + text[end:]


def _severity(raw: str) -> Severity | None:
    s = raw.strip().lower()
    if s in ("no-error", "no error", "neutral", ""):
        return None
    try:
        return Severity(s)
    except ValueError:
        raise UnknownSeverity(f"unknown MQM severity {raw!r}") from None


def _category(raw: str) -> str:
    cat = normalize_category(raw).rstrip("!")
    return cat if cat in CATEGORIES else "other"


class MqmAnnotation(NamedTuple):
    segment: Segment
    spans: list[ErrorSpan]
    rater: str


def parse_mqm_tsv(
    lines: Iterable[str],
    lp: str,
    *,
    stats: collections.Counter | None = None,
) -> list[MqmAnnotation]:
    """Parse an MQM ratings export into one annotation per (system, doc, seg, rater).

    Lines sharing that key are merged in input order. ``neutral`` errors and
    empty ``<v></v>`` spans are dropped and counted in ``stats``.
    """
    src_lang, tgt_lang = split_lp(lp)
    stats = stats if stats is not None else collections.Counter()
    groups: dict[tuple[str, str, str, str], MqmAnnotation] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != len(MQM_COLUMNS):
            raise MalformedLine(f"line {lineno}: expected {len(MQM_COLUMNS)} columns, got {len(cols)}")
        if lineno == 1 and tuple(c.strip().lower() for c in cols) == MQM_COLUMNS:
            continue
        row = dict(zip(MQM_COLUMNS, cols))
        try:
            source, src_spans = strip_markers(row["source"])
            target, tgt_spans = strip_markers(row["target"])
        except UnbalancedMarkers as e:
            raise UnbalancedMarkers(f"line {lineno}: {e}") from None

        key = (row["system"], row["doc"], row["seg_id"], row["rater"])
        if key not in groups:
            seg = Segment(
                doc_id=row["doc"],
                seg_id=row["seg_id"],
                source=source,
                hypothesis=target,
                src_lang=src_lang,
                tgt_lang=tgt_lang,
                system=row["system"],
            )
            groups[key] = MqmAnnotation(seg, [], row["rater"])
        ann = groups[key]
        if ann.segment.hypothesis != target or ann.segment.source != source:
            logger.warning("line %d: text differs from earlier lines of %s; keeping the first", lineno, key)

        severity_raw = row["severity"].strip().lower()
        if severity_raw == "neutral":
            stats["neutral_dropped"] += len(src_spans) + len(tgt_spans) or 1
            continue
        try:
            severity = _severity(row["severity"])
        except UnknownSeverity as e:
            raise UnknownSeverity(f"line {lineno}: {e}") from None
        if severity is None or normalize_category(row["category"]) == "no-error":
            stats["no_error_lines"] += 1
            continue
        category = _category(row["category"])
        for is_src, text, offsets in ((True, source, src_spans), (False, target, tgt_spans)):
            for start, end in offsets:
                if start == end:
                    stats["empty_spans_dropped"] += 1
                    continue
                ann.spans.append(
                    ErrorSpan(
                        span=text[start:end],
                        severity=severity,
                        category=category,
                        is_source_error=is_src,
                        offsets=(start, end),
                    )
                )
                stats["spans"] += 1
    return list(groups.values())


def mqm_records(annotations: Iterable[MqmAnnotation], *, year: int | None = None, lp: str | None = None) -> list[Record]:
    out = []
    for ann in annotations:
        extra: dict[str, Any] = {"rater": ann.rater}
        if lp is not None:
            extra["lp"] = lp
        if year is not None:
            extra["year"] = year
        out.append(Record(ann.segment, tuple(ann.spans), None, extra))
    return out


@dataclass(frozen=True)
class RatingRecord:
    system: str
    doc_id: str
    seg_id: str
    rater_id: str
    raw_score: float
    z_score: float | None = None
    lp: str | None = None
    year: int | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.system, self.doc_id, self.seg_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system,
            "doc_id": self.doc_id,
            "seg_id": self.seg_id,
            "rater_id": self.rater_id,
            "raw_score": self.raw_score,
            "z_score": self.z_score,
            "lp": self.lp,
            "year": self.year,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RatingRecord:
        z = d.get("z_score")
        year = d.get("year")
        return cls(
            system=str(d["system"]),
            doc_id=str(d["doc_id"]),
            seg_id=str(d["seg_id"]),
            rater_id=str(d["rater_id"]),
            raw_score=float(d["raw_score"]),
            z_score=None if z is None else float(z),
            lp=d.get("lp"),
            year=None if year is None else int(year),
        )


def parse_da_tsv(lines: Iterable[str], delimiter: str = "\t", *, lp: str | None = None, year: int | None = None) -> list[RatingRecord]:
    """Read DA ratings from a file with a header row.

    Required columns: system, doc, seg, rater, raw_score. Optional: z_score,
    lp, year (per-row values override the keyword defaults).
    """
    reader = csv.DictReader(lines, delimiter=delimiter)
    required = {"system", "doc", "seg", "rater", "raw_score"}
    if reader.fieldnames is None or not required <= set(reader.fieldnames):
        raise MalformedLine(f"DA header must contain {sorted(required)}, got {reader.fieldnames}")
    out = []
    for lineno, row in enumerate(reader, 2):
        if None in row or any(row[c] is None for c in required):
            raise MalformedLine(f"line {lineno}: wrong number of columns")
        try:
            raw = float(row["raw_score"])
            z = row.get("z_score")
            z = float(z) if z not in (None, "") else None
            row_year = row.get("year")
            out.append(
                RatingRecord(
                    system=row["system"],
                    doc_id=row["doc"],
                    seg_id=row["seg"],
                    rater_id=row["rater"],
                    raw_score=raw,
                    z_score=z,
                    lp=row.get("lp") or lp,
                    year=int(row_year) if row_year else year,
                )
            )
        except ValueError as e:
            raise MalformedLine(f"line {lineno}: {e}") from None
    return out


def zscore_per_rater(
    records: Sequence[RatingRecord],
    *,
    on_degenerate: str = "drop",
    recompute: bool = True,
) -> list[RatingRecord]:
    """Fill ``z_score`` by standardizing each rater's raw scores (population sd).

    Raters whose scores are all equal have no defined z-score. They are
    dropped with a warning, or raise ``DegenerateRater`` when
    ``on_degenerate="raise"``. With ``recompute=False``, records that already
    carry a z-score are passed through untouched.
    """
    if on_degenerate not in ("drop", "raise"):
        raise ValueError("on_degenerate must be 'drop' or 'raise'")
    by_rater: dict[str, list[float]] = collections.defaultdict(list)
    for r in records:
        by_rater[r.rater_id].append(r.raw_score)
    params: dict[str, tuple[float, float]] = {}
    degenerate = []
    for rater, scores in by_rater.items():
        sd = statistics.pstdev(scores)
        if sd == 0.0:
            degenerate.append(rater)
        else:
            params[rater] = (statistics.fmean(scores), sd)
    if degenerate:
        if on_degenerate == "raise":
            raise DegenerateRater(f"raters with constant scores: {sorted(degenerate)}")
        logger.warning("dropping %d degenerate rater(s): %s", len(degenerate), sorted(degenerate))

    out = []
    for r in records:
        if not recompute and r.z_score is not None:
            out.append(r)
        elif r.rater_id in params:
            mean, sd = params[r.rater_id]
            out.append(replace(r, z_score=(r.raw_score - mean) / sd))
    return out


@dataclass(frozen=True)
class Exclusion:
    year: int
    direction: str  # "into-english", "out-of-english", "any" or a pair like "de-en"

    def matches(self, year: int | None, lp: str | None) -> bool:
        if year != self.year or lp is None:
            return False
        src, tgt = split_lp(lp)
        if self.direction == "any":
            return True
        if self.direction == "into-english":
            return tgt.language == "en" and src.language != "en"
        if self.direction == "out-of-english":
            return src.language == "en" and tgt.language != "en"
        return lp.lower() == self.direction.lower()


@dataclass(frozen=True)
class DatasetFilter:
    exclusions: tuple[Exclusion, ...] = ()


FILTER_PRESETS = {
    "none": DatasetFilter(),
    # WMT21 into-English DA is low quality.
    "metricx25": DatasetFilter((Exclusion(2021, "into-english"),)),
}


def _meta(rec: Any, name: str) -> Any:
    if isinstance(rec, dict):
        return rec.get(name)
    if isinstance(rec, Record):
        if name in rec.extra:
            return rec.extra[name]
        if name == "lp":
            return f"{rec.segment.src_lang}-{rec.segment.tgt_lang}"
        return None
    return getattr(rec, name, None)


def apply_filters(records: Iterable[Any], filt: DatasetFilter) -> tuple[list[Any], int]:
    """Drop every record matching an exclusion. Returns (kept, n_removed)."""
    kept, removed = [], 0
    for rec in records:
        year, lp = _meta(rec, "year"), _meta(rec, "lp")
        year = int(year) if year is not None else None
        if any(ex.matches(year, lp) for ex in filt.exclusions):
            removed += 1
        else:
            kept.append(rec)
    return kept, removed
