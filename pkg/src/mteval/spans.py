"""Error-span context generation, response parsing and localization.

A short span such as "im" can occur several times in a translation. To make a
predicted span point at one place, non-unique spans carry a
``span_with_context``: the span grown outward, word by word (or character by
character for Chinese and Japanese), until the grown string occurs exactly
once. Localization then finds the context first and the span inside it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Sequence

from .core import CATEGORIES, ErrorSpan, Segment, Severity, normalize_category
from .errors import DataError

logger = logging.getLogger(__name__)


class EmptyNeedle(DataError):
    pass


class SpanNotInText(DataError):
    pass


class SpanNotFound(DataError):
    pass


class ContextNotFound(DataError):
    pass


class SpanNotInContext(DataError):
    pass


class ParseFailure(DataError):
    """The response is not valid JSON (e.g. truncated by repetition)."""


class SchemaError(DataError):
    pass


class UnknownSeverity(SchemaError):
    pass


class UnknownCategory(SchemaError):
    pass


WORD, CHARACTER = "word", "character"


@dataclass(frozen=True)
class ContextExpansionPolicy:
    unit: str = WORD
    character_languages: frozenset[str] = field(default_factory=lambda: frozenset({"zh", "ja"}))

    def __post_init__(self):
        if self.unit not in (WORD, CHARACTER):
            raise ValueError(f"unit must be {WORD!r} or {CHARACTER!r}")

    def unit_for(self, language: str | None) -> str:
        if language is not None and language.lower() in self.character_languages:
            return CHARACTER
        return self.unit


def count_occurrences(text: str, needle: str) -> int:
    """Number of possibly overlapping occurrences of ``needle`` in ``text``."""
    if not needle:
        raise EmptyNeedle("needle must be non-empty")
    n, i = 0, text.find(needle)
    while i >= 0:
        n += 1
        i = text.find(needle, i + 1)
    return n


def _is_unique(text: str, needle: str) -> bool:
    first = text.find(needle)
    return first >= 0 and text.find(needle, first + 1) < 0


def _prev_space(text: str, i: int) -> int:
    """Index of the last whitespace character strictly before ``i``, or -1."""
    i -= 1
    while i >= 0 and not text[i].isspace():
        i -= 1
    return i


def _next_space(text: str, i: int) -> int:
    """Index of the first whitespace character at or after ``i``, or len(text)."""
    while i < len(text) and not text[i].isspace():
        i += 1
    return i


def expand_once(text: str, start: int, end: int, unit: str) -> tuple[int, int]:
    """One symmetric expansion step; a side at the text boundary stays put."""
    if unit == CHARACTER:
        return max(0, start - 1), min(len(text), end + 1)
    # Skip the character next to the span (usually the separating space), then
    # run to the following word boundary.
    new_start = _prev_space(text, start - 1) + 1 if start > 0 else 0
    new_end = _next_space(text, end + 1) if end < len(text) else len(text)
    return new_start, new_end


class Context(NamedTuple):
    text: str
    start: int
    end: int
    via_schedule: bool = True


def _identifies(text: str, span: str, start: int, a: int, b: int) -> bool:
    window = text[a:b]
    return window.find(span) == start - a and _is_unique(text, window)


def _search_window(text: str, start: int, end: int) -> tuple[int, int] | None:
    """Shortest window around [start, end) that pins the occurrence down."""
    span = text[start:end]
    n = len(text)
    for length in range(end - start + 1, n + 1):
        for a in range(max(0, end - length), min(start, n - length) + 1):
            if _identifies(text, span, start, a, a + length):
                return a, a + length
    return None


def make_unique_context(
    text: str,
    start: int,
    end: int,
    policy: ContextExpansionPolicy | str = WORD,
) -> Context | None:
    """Context that identifies the occurrence ``text[start:end]``, or None if the span is unique.

    The span is grown symmetrically until the grown string occurs exactly
    once in ``text`` and the first occurrence of the span inside it is the
    one being annotated, so that a plain search inside the context finds it.
    If growing to the whole text does not achieve that, the shortest
    qualifying window is searched for directly. Occurrences that no window
    can identify (e.g. the second "a" of "aa") get the whole text, with a
    warning.
    """
    unit = policy if isinstance(policy, str) else policy.unit
    if not 0 <= start < end <= len(text):
        raise SpanNotInText(f"offsets ({start}, {end}) do not select a non-empty span of the text")
    span = text[start:end]
    if _is_unique(text, span):
        return None
    s, e = start, end
    while (s, e) != (0, len(text)):
        s, e = expand_once(text, s, e, unit)
        if _identifies(text, span, start, s, e):
            return Context(text[s:e], s, e)
    found = _search_window(text, start, end)
    if found is None:
        logger.warning("occurrence at %d of %r cannot be identified by any context", start, span)
        return Context(text, 0, len(text), via_schedule=False)
    a, b = found
    return Context(text[a:b], a, b, via_schedule=False)


def annotate_training_spans(
    segment: Segment,
    spans: Iterable[ErrorSpan],
    policy: ContextExpansionPolicy = ContextExpansionPolicy(),
) -> list[ErrorSpan]:
    """Attach ``span_with_context`` to every gold span that is not unique in its text."""
    out = []
    for sp in spans:
        if sp.offsets is None:
            raise SpanNotInText(f"gold span {sp.span!r} has no offsets")
        if sp.is_source_error:
            text, lang = segment.source or "", segment.src_lang.language
        else:
            text, lang = segment.hypothesis or "", segment.tgt_lang.language
        if text[sp.offsets[0] : sp.offsets[1]] != sp.span:
            raise SpanNotInText(f"span {sp.span!r} is not at {sp.offsets} in the text")
        ctx = make_unique_context(text, *sp.offsets, policy=policy.unit_for(lang))
        out.append(replace(sp, span_with_context=ctx.text if ctx else None))
    return out


def locate_span(text: str, span: ErrorSpan, *, fallback_to_span: bool = False) -> tuple[int, int]:
    """Resolve a span (and its optional context) to character offsets in ``text``.

    With ``fallback_to_span``, a context that does not occur in the text is
    ignored and the bare span is searched for instead.
    """
    needle = span.span
    if not needle:
        raise SpanNotFound("empty span")
    ctx = span.span_with_context
    if ctx is not None:
        c = text.find(ctx)
        if c >= 0:
            r = ctx.find(needle)
            if r < 0:
                raise SpanNotInContext(f"span {needle!r} not inside context {ctx!r}")
            return c + r, c + r + len(needle)
        if not fallback_to_span:
            raise ContextNotFound(f"context {ctx!r} does not occur in the text")
        logger.info("context %r not found; falling back to bare span %r", ctx, needle)
    i = text.find(needle)
    if i < 0:
        raise SpanNotFound(f"span {needle!r} does not occur in the text")
    return i, i + len(needle)


def span_uniqueness_stats(corpus: Iterable[tuple[str, Sequence[ErrorSpan]]]) -> tuple[float, float]:
    """(fraction of spans that are not unique, fraction of span characters in them)."""
    n_spans = n_nonunique = 0
    n_chars = n_nonunique_chars = 0
    for text, spans in corpus:
        for sp in spans:
            if not sp.span:
                continue
            n_spans += 1
            n_chars += len(sp.span)
            if count_occurrences(text, sp.span) > 1:
                n_nonunique += 1
                n_nonunique_chars += len(sp.span)
    if n_spans == 0:
        return 0.0, 0.0
    return n_nonunique / n_spans, n_nonunique_chars / n_chars


# --- response parsing -------------------------------------------------------

STRICT, LENIENT = "strict", "lenient"
_KEYS = {"span", "severity", "category", "span_with_context", "is_source_error"}


def _decode(response: str, strictness: str):
    try:
        return json.loads(response)
    except json.JSONDecodeError as e:
        if strictness == STRICT:
            raise ParseFailure(f"invalid JSON: {e.msg} at char {e.pos}") from None
        first_err = e
    decoder = json.JSONDecoder()
    i = response.find("[")
    while i >= 0:
        try:
            value, _ = decoder.raw_decode(response, i)
            return value
        except json.JSONDecodeError:
            i = response.find("[", i + 1)
    raise ParseFailure(f"invalid JSON: {first_err.msg} at char {first_err.pos}")


def _parse_item(item, strictness: str, vocabulary: frozenset[str]) -> ErrorSpan | None:
    strict = strictness == STRICT
    if not isinstance(item, dict):
        if strict:
            raise SchemaError(f"expected an object, got {type(item).__name__}")
        return None
    if strict:
        extra = set(item) - _KEYS
        missing = {"span", "severity", "category"} - set(item)
        if extra or missing:
            raise SchemaError(f"bad keys: missing={sorted(missing)} unexpected={sorted(extra)}")
    span = item.get("span")
    if not isinstance(span, str) or not span:
        if strict:
            raise SchemaError(f"span must be a non-empty string: {span!r}")
        return None

    category = item.get("category", "other")
    category = normalize_category(category) if isinstance(category, str) else None
    if category == "no-error":
        return None
    if category not in vocabulary:
        if strict:
            raise UnknownCategory(f"unknown category {item.get('category')!r}")
        category = "other"

    sev = item.get("severity")
    try:
        severity = Severity(sev if strict else str(sev).strip().lower())
    except ValueError:
        if strict:
            raise UnknownSeverity(f"unknown severity {sev!r}") from None
        severity = Severity.MINOR

    ctx = item.get("span_with_context")
    if ctx is not None and (not isinstance(ctx, str) or span not in ctx):
        if strict:
            raise SchemaError(f"span_with_context {ctx!r} must be a string containing the span")
        ctx = None

    src = item.get("is_source_error", False)
    if strict and not isinstance(src, bool):
        raise SchemaError(f"is_source_error must be a boolean: {src!r}")
    return ErrorSpan(span=span, severity=severity, category=category, is_source_error=bool(src), span_with_context=ctx)


def parse_span_response(
    response: str,
    strictness: str = LENIENT,
    vocabulary: frozenset[str] = CATEGORIES,
) -> list[ErrorSpan]:
    """Parse a model's JSON list of error objects.

    Lenient mode skips text around the array, maps unknown severities to
    minor and unknown categories to "other", and drops malformed entries.
    Strict mode raises on any of these. Invalid JSON raises ``ParseFailure``
    in both modes.
    """
    if strictness not in (STRICT, LENIENT):
        raise ValueError(f"strictness must be {STRICT!r} or {LENIENT!r}")
    data = _decode(response.strip(), strictness)
    if isinstance(data, dict) and strictness == LENIENT:
        lists = [v for v in data.values() if isinstance(v, list)]
        if len(lists) == 1:
            data = lists[0]
    if not isinstance(data, list):
        raise SchemaError(f"expected a JSON array, got {type(data).__name__}")
    out = []
    for item in data:
        sp = _parse_item(item, strictness, vocabulary)
        if sp is not None:
            out.append(sp)
    return out
