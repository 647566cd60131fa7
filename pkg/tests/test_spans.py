import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TIMER_MT, IM_START, timer_gold_spans, golden
from mteval.core import ErrorSpan, LangTag, Segment, Severity
from mteval.spans import (
    CHARACTER,
    WORD,
    ContextExpansionPolicy,
    ContextNotFound,
    EmptyNeedle,
    ParseFailure,
    SchemaError,
    SpanNotFound,
    SpanNotInText,
    UnknownCategory,
    UnknownSeverity,
    annotate_training_spans,
    count_occurrences,
    expand_once,
    locate_span,
    make_unique_context,
    parse_span_response,
    span_uniqueness_stats,
)


def brute_count(text, needle):
    return sum(text[i : i + len(needle)] == needle for i in range(len(text) - len(needle) + 1))


def identifiable(text, start, end):
    """Some substring around the occurrence is unique and finds the span first."""
    span = text[start:end]
    for a in range(0, start + 1):
        for b in range(end, len(text) + 1):
            w = text[a:b]
            if brute_count(text, w) == 1 and w.find(span) == start - a:
                return True
    return False


@pytest.mark.parametrize("text,needle,n", [("aaa", "aa", 2), (TIMER_MT, "im", 4), ("abc", "d", 0)])
def test_count_occurrences(text, needle, n):
    assert count_occurrences(text, needle) == n == brute_count(text, needle)


def test_count_empty_needle():
    with pytest.raises(EmptyNeedle):
        count_occurrences("abc", "")


@given(st.text(alphabet="ab ", max_size=25), st.text(alphabet="ab ", min_size=1, max_size=3))
def test_count_matches_brute_force(text, needle):
    assert count_occurrences(text, needle) == brute_count(text, needle)


def test_timer_context():
    ctx = make_unique_context(TIMER_MT, IM_START, IM_START + 2)
    assert ctx.text == "nützlich im Büro"
    assert ctx.start <= IM_START and IM_START + 2 <= ctx.end


def test_unique_span_needs_no_context():
    i = TIMER_MT.index("Timer")
    assert make_unique_context(TIMER_MT, i, i + 5) is None


def test_small_word_example_against_enumeration():
    text = "a b a b c"
    # every symmetric word expansion of "a" at 0, with its occurrence count
    steps, s, e = [], 0, 1
    while (s, e) != (0, len(text)):
        s, e = expand_once(text, s, e, WORD)
        steps.append((text[s:e], brute_count(text, text[s:e])))
    assert steps == [("a b", 2), ("a b a", 1), ("a b a b", 1), ("a b a b c", 1)]
    ctx = make_unique_context(text, 0, 1)
    assert (ctx.text, ctx.start, ctx.end) == ("a b a", 0, 5)


def test_word_expansion_completes_partial_words():
    i = TIMER_MT.index("Timer") + 1
    assert make_unique_context(TIMER_MT, i, i + 2).text == "Timer"


def test_character_expansion():
    text = "我们的我们"
    ctx = make_unique_context(text, 3, 5, CHARACTER)
    assert ctx.text == "的我们"
    assert make_unique_context(text, 0, 2, CHARACTER).text == "我们的"


def test_span_not_in_text():
    with pytest.raises(SpanNotInText):
        make_unique_context("abc", 2, 5)
    with pytest.raises(SpanNotInText):
        make_unique_context("abc", 1, 1)


def test_policy_language_override():
    p = ContextExpansionPolicy()
    assert p.unit_for("zh") == CHARACTER and p.unit_for("ja") == CHARACTER and p.unit_for("de") == WORD
    assert ContextExpansionPolicy(character_languages=frozenset({"th"})).unit_for("th") == CHARACTER


def test_annotate_timer_example(timer_segment):
    out = annotate_training_spans(timer_segment, timer_gold_spans())
    assert [s.span_with_context for s in out] == ["nützlich im Büro", None, None]
    for gold, ann in zip(timer_gold_spans(), out):
        assert locate_span(TIMER_MT, ann) == gold.offsets


def test_annotate_all_unique_is_identity(timer_segment):
    spans = timer_gold_spans()[1:]
    assert annotate_training_spans(timer_segment, spans) == spans


def test_annotate_source_errors_use_source_text(timer_segment):
    i = timer_segment.source.index("the timer")
    sp = ErrorSpan("the", Severity.MAJOR, "accuracy/omission", is_source_error=True, offsets=(i, i + 3))
    [out] = annotate_training_spans(timer_segment, [sp])
    assert out.span_with_context == "of the timer,"
    assert locate_span(timer_segment.source, out) == (i, i + 3)


def test_annotate_cjk_uses_characters():
    seg = Segment(doc_id="d", seg_id="1", source="x", hypothesis="我们的我们", src_lang=LangTag("en"), tgt_lang=LangTag("zh"))
    [out] = annotate_training_spans(seg, [ErrorSpan("我们", Severity.MINOR, offsets=(3, 5))])
    assert out.span_with_context == "的我们"


def test_locate_examples():
    ctx_span = ErrorSpan("im", Severity.MINOR, span_with_context="nützlich im Büro")
    assert locate_span(TIMER_MT, ctx_span) == (IM_START, IM_START + 2)
    i = TIMER_MT.index("Timer")
    assert locate_span(TIMER_MT, ErrorSpan("Timer", Severity.MINOR)) == (i, i + 5)
    with pytest.raises(SpanNotFound):
        locate_span(TIMER_MT, ErrorSpan("Katze", Severity.MINOR))
    bad_ctx = ErrorSpan("im", Severity.MINOR, span_with_context="nützlich im Haus")
    with pytest.raises(ContextNotFound):
        locate_span(TIMER_MT, bad_ctx)
    j = TIMER_MT.index("im")
    assert locate_span(TIMER_MT, bad_ctx, fallback_to_span=True) == (j, j + 2)


def test_first_unique_window_is_not_enough():
    # "a a c" is unique but its first "a" is the wrong one; a narrower window identifies it
    text = "b a a c b a"
    assert identifiable(text, 4, 5)
    ctx = make_unique_context(text, 4, 5, WORD)
    assert ctx.text != "a a c"
    assert locate_span(text, ErrorSpan("a", Severity.MINOR, span_with_context=ctx.text)) == (4, 5)


def test_unidentifiable_occurrence_documented():
    # both "a"s of "aa" can only be described by the whole text
    assert not identifiable("aa", 1, 2)
    ctx = make_unique_context("aa", 1, 2, CHARACTER)
    assert ctx.text == "aa" and not ctx.via_schedule


def _round_trip_case(text, start, end, unit):
    ctx = make_unique_context(text, start, end, unit)
    span = ErrorSpan(text[start:end], Severity.MINOR, span_with_context=ctx.text if ctx else None)
    return ctx, locate_span(text, span)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="ab", min_size=1, max_size=14), st.data(), st.sampled_from([WORD, CHARACTER]))
def test_round_trip_on_identifiable_occurrences(text, data, unit):
    text = text.replace("b", data.draw(st.sampled_from(["b", " "])))
    start = data.draw(st.integers(0, len(text) - 1))
    end = data.draw(st.integers(start + 1, min(len(text), start + 3)))
    ctx, got = _round_trip_case(text, start, end, unit)
    if ctx is not None:
        assert brute_count(text, ctx.text) == 1
        assert ctx.text[start - ctx.start : end - ctx.start] == text[start:end]
    if identifiable(text, start, end):
        assert got == (start, end)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "ab", "ba", "."]), min_size=1, max_size=10), st.data())
def test_schedule_context_is_minimal(words, data):
    text = " ".join(words)
    start = data.draw(st.integers(0, len(text) - 1))
    end = data.draw(st.integers(start + 1, min(len(text), start + 3)))
    span = text[start:end]
    ctx = make_unique_context(text, start, end, WORD)
    if ctx is None or not ctx.via_schedule:
        return
    # walk the schedule again; every earlier step must fail to identify the span
    s, e = start, end
    while True:
        s, e = expand_once(text, s, e, WORD)
        if (s, e) == (ctx.start, ctx.end):
            break
        w = text[s:e]
        assert brute_count(text, w) != 1 or w.find(span) != start - s


def test_parse_gemspaneval_response():
    spans = parse_span_response(golden("gemspaneval_response.json"))
    assert [s.span for s in spans] == ["im", "ihn", "mit"]
    assert spans[0].span_with_context == "nützlich im Büro"
    assert all(s.severity is Severity.MINOR and s.category == "accuracy/mistranslation" for s in spans)
    assert parse_span_response(golden("gemspaneval_response.json"), "strict") == spans


def test_parse_empty_and_truncated():
    assert parse_span_response("[]") == []
    assert parse_span_response("[]", "strict") == []
    for mode in ("strict", "lenient"):
        with pytest.raises(ParseFailure):
            parse_span_response("[{", mode)


def test_lenient_coercions():
    resp = 'Here you go:\n```json\n[{"span": "x", "severity": "Severe", "category": "Made/Up"}, 3, {"severity": "minor"}]\n```\nDone.'
    [sp] = parse_span_response(resp)
    assert sp.severity is Severity.MINOR and sp.category == "other"
    [sp] = parse_span_response('{"errors": [{"span": "x", "severity": "major", "category": "Fluency/Spelling"}]}')
    assert sp.category == "fluency/spelling"
    [sp] = parse_span_response('[{"span": "x", "severity": "major", "category": "other", "span_with_context": "abc"}]')
    assert sp.span_with_context is None


def test_strict_rejections():
    with pytest.raises(UnknownSeverity):
        parse_span_response('[{"span": "x", "severity": "severe", "category": "other"}]', "strict")
    with pytest.raises(UnknownCategory):
        parse_span_response('[{"span": "x", "severity": "minor", "category": "made/up"}]', "strict")
    with pytest.raises(SchemaError):
        parse_span_response('{"span": "x"}', "strict")
    with pytest.raises(SchemaError):
        parse_span_response('[{"span": "x", "severity": "minor"}]', "strict")
    with pytest.raises(ParseFailure):
        parse_span_response('[] trailing', "strict")


def test_no_error_entries_skipped():
    assert parse_span_response('[{"span": "x", "severity": "minor", "category": "no-error"}]') == []


json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.floats(allow_nan=False) | st.text(max_size=6),
    lambda inner: st.lists(inner, max_size=3) | st.dictionaries(st.text(max_size=4), inner, max_size=3),
    max_leaves=6,
)
error_objects = st.dictionaries(
    st.sampled_from(["span", "severity", "category", "span_with_context", "is_source_error", "extra"]),
    json_values | st.sampled_from(["minor", "major", "critical", "accuracy/mistranslation", "im"]),
)


@given(st.lists(error_objects, max_size=5))
def test_lenient_never_fails_on_arrays_of_objects(items):
    parse_span_response(json.dumps(items), "lenient")


def test_uniqueness_stats():
    spans = timer_gold_spans()
    assert span_uniqueness_stats([(TIMER_MT, spans)]) == (1 / 3, 2 / 8)
    assert span_uniqueness_stats([(TIMER_MT, spans[1:])]) == (0.0, 0.0)
    assert span_uniqueness_stats([]) == (0.0, 0.0)
