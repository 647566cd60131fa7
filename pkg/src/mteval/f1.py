"""Severity-aware character-level precision/recall/F1 for error spans."""

from __future__ import annotations

from typing import Iterable, NamedTuple, Sequence

from .core import ErrorSpan, OffsetsOutOfRange, Severity
from .errors import DataError

CharLabeling = tuple  # tuple[Severity | None, ...], one entry per character


class LengthMismatch(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def label_characters(text: str | int, spans: Iterable[ErrorSpan]) -> CharLabeling:
    """Per-character severity over ``text``; overlapping spans keep the max severity.

    ``text`` may also be given as its length. Source-side spans are skipped.
    """
    n = text if isinstance(text, int) else len(text)
    labels: list[Severity | None] = [None] * n
    for sp in spans:
        if sp.is_source_error:
            continue
        if sp.offsets is None:
            raise OffsetsOutOfRange(f"span {sp.span!r} has no offsets")
        start, end = sp.offsets
        if not 0 <= start <= end <= n:
            raise OffsetsOutOfRange(f"offsets {sp.offsets} outside text of length {n}")
        for i in range(start, end):
            cur = labels[i]
            if cur is None or sp.severity > cur:
                labels[i] = sp.severity
    return tuple(labels)


def _counts(pred: Sequence, gold: Sequence, partial_credit: float) -> tuple[float, int, int]:
    if len(pred) != len(gold):
        raise LengthMismatch(f"labelings differ in length: {len(pred)} vs {len(gold)}")
    matched = 0.0
    n_pred = n_gold = 0
    for p, g in zip(pred, gold):
        if p is not None:
            n_pred += 1
        if g is not None:
            n_gold += 1
            if p is not None:
                matched += 1.0 if p == g else partial_credit
    return matched, n_pred, n_gold


def _prf(matched: float, n_pred: int, n_gold: int) -> PRF:
    if n_pred == 0 and n_gold == 0:
        return PRF(1.0, 1.0, 1.0)
    if n_pred == 0 or n_gold == 0:
        return PRF(0.0, 0.0, 0.0)
    p, r = matched / n_pred, matched / n_gold
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return PRF(p, r, f)


def segment_char_f1(pred: CharLabeling, gold: CharLabeling, partial_credit: float = 0.5) -> PRF:
    """Exact severity match scores 1 per character, a mismatch ``partial_credit``."""
    return _prf(*_counts(pred, gold, partial_credit))


def corpus_char_f1(
    pairs: Iterable[tuple[CharLabeling, CharLabeling]],
    partial_credit: float = 0.5,
    macro: bool = False,
) -> PRF:
    """Micro-average by default: pool matches and label counts over all segments."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyCorpus("no segments to score")
    if macro:
        scores = [segment_char_f1(p, g, partial_credit) for p, g in pairs]
        return PRF(*(sum(col) / len(scores) for col in zip(*scores)))
    matched, n_pred, n_gold = 0.0, 0, 0
    for p, g in pairs:
        m, a, b = _counts(p, g, partial_credit)
        matched += m
        n_pred += a
        n_gold += b
    return _prf(matched, n_pred, n_gold)
