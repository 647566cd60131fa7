from pathlib import Path

import pytest

from mteval.core import ErrorSpan, LangTag, Segment, Severity

GOLDEN = Path(__file__).parent / "golden"

TIMER_SRC = (
    "I have not made use of the timer, preferring to turn them on and off myself. "
    "I can see this feature as useful in an office setting with houseplants or if on vacation"
)
TIMER_MT = (
    "Ich benutze den Timer nicht, sondern schalte ihn lieber selbst ein und aus. "
    "Ich sehe diese Funktion als nützlich im Büro mit Zimmerpflanzen oder im Urlaub."
)
LIGHTS_SRC = "The lights are dimmable, but I use the strongest setting only. " + TIMER_SRC
LIGHTS_MT = "Die Lichter sind dimmbar, aber ich benutze nur die stärkste Einstellung. " + TIMER_MT

# offsets of the annotated "im" (the one in "nützlich im Büro")
IM_START = TIMER_MT.index("nützlich im") + len("nützlich ")

GRAVE = Segment(
    doc_id="d",
    seg_id="1",
    source="Připadalo mi, že na mě dýchnul závan z hrobu.",
    reference="It was like having felt a draught from a grave.",
    hypothesis="It was like having felt a draft from a grave.",
    src_lang=LangTag.parse("cs"),
    tgt_lang=LangTag.parse("en-GB"),
)


def golden(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8").replace("\r\n", "\n").removesuffix("\n")


def timer_gold_spans() -> list[ErrorSpan]:
    def sp(text, start):
        return ErrorSpan(text, Severity.MINOR, "accuracy/mistranslation", offsets=(start, start + len(text)))

    return [sp("im", IM_START), sp("ihn", TIMER_MT.index("ihn")), sp("mit", TIMER_MT.index("mit"))]


@pytest.fixture
def timer_segment() -> Segment:
    return Segment(
        doc_id="doc1",
        seg_id="1",
        source=TIMER_SRC,
        hypothesis=TIMER_MT,
        src_lang=LangTag("en"),
        tgt_lang=LangTag("de"),
        system="sysA",
    )


@pytest.fixture
def lights_segment() -> Segment:
    return Segment(
        doc_id="doc1",
        seg_id="1",
        source=LIGHTS_SRC,
        hypothesis=LIGHTS_MT,
        src_lang=LangTag("en"),
        tgt_lang=LangTag("de"),
    )


# --- acceptance report ------------------------------------------------------

_ACCEPTANCE: list[str] = []


@pytest.fixture
def detail(request):
    """Attach a one-line summary to the acceptance line of the running test."""

    def note(text: str):
        request.node.acceptance_detail = text

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
    note = getattr(item, "acceptance_detail", "")
    _ACCEPTANCE.append(f"[{status}] {marker.args[0]}" + (f": {note}" if note else ""))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
