"""Model input rendering for the score-prediction and span-annotation tasks."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .core import LangTag, ScoreType, Segment
from .errors import DataError

FENCE = "```"


class MissingField(DataError):
    pass


class UnknownLanguageCode(DataError):
    pass


class PromptMode(enum.Enum):
    SRC_ONLY = "src_only"
    REF_ONLY = "ref_only"  # first training stage only
    SRC_AND_REF = "src_and_ref"


class DatasetKind(enum.Enum):
    MQM = "MQM-annotated"
    DA = "DA-rated"
    ESA = "ESA-rated"


LANGUAGE_NAMES: dict[str, str] = {
    "af": "Afrikaans",
    "am": "Amharic",
    "ar": "Arabic",
    "as": "Assamese",
    "be": "Belarusian",
    "bg": "Bulgarian",
    "bho": "Bhojpuri",
    "bn": "Bengali",
    "bs": "Bosnian",
    "ca": "Catalan",
    "cs": "Czech",
    "cy": "Welsh",
    "da": "Danish",
    "de": "German",
    "el": "Greek",
    "en": "English",
    "es": "Spanish",
    "et": "Estonian",
    "eu": "Basque",
    "fa": "Persian",
    "fi": "Finnish",
    "fr": "French",
    "ga": "Irish",
    "gu": "Gujarati",
    "ha": "Hausa",
    "he": "Hebrew",
    "hi": "Hindi",
    "hr": "Croatian",
    "hu": "Hungarian",
    "hy": "Armenian",
    "id": "Indonesian",
    "is": "Icelandic",
    "it": "Italian",
    "iu": "Inuktitut",
    "ja": "Japanese",
    "ka": "Georgian",
    "kk": "Kazakh",
    "km": "Khmer",
    "kn": "Kannada",
    "ko": "Korean",
    "ky": "Kyrgyz",
    "lt": "Lithuanian",
    "lv": "Latvian",
    "mas": "Maasai",
    "mk": "Macedonian",
    "ml": "Malayalam",
    "mr": "Marathi",
    "ms": "Malay",
    "mt": "Maltese",
    "my": "Burmese",
    "ne": "Nepali",
    "nl": "Dutch",
    "no": "Norwegian",
    "or": "Odia",
    "pa": "Punjabi",
    "pl": "Polish",
    "ps": "Pashto",
    "pt": "Portuguese",
    "ro": "Romanian",
    "ru": "Russian",
    "sah": "Yakut",
    "si": "Sinhala",
    "sk": "Slovak",
    "sl": "Slovenian",
    "so": "Somali",
    "sr": "Serbian",
    "sv": "Swedish",
    "sw": "Swahili",
    "ta": "Tamil",
    "te": "Telugu",
    "th": "Thai",
    "tl": "Tagalog",
    "tr": "Turkish",
    "uk": "Ukrainian",
    "ur": "Urdu",
    "uz": "Uzbek",
    "vi": "Vietnamese",
    "xh": "Xhosa",
    "yo": "Yoruba",
    "zh": "Chinese",
    "zu": "Zulu",
}

DEFAULT_DIALECTS: dict[str, dict[str, str]] = {
    "ar": {"EG": "Egypt", "SA": "Saudi Arabia", "MA": "Morocco", "AE": "United Arab Emirates", "LB": "Lebanon"},
    "pt": {"BR": "Brazil", "PT": "Portugal"},
    "en": {"GB": "United Kingdom", "US": "United States", "AU": "Australia", "CA": "Canada", "IN": "India"},
    "es": {"ES": "Spain", "MX": "Mexico", "AR": "Argentina", "CO": "Colombia"},
    "zh": {"CN": "China", "TW": "Taiwan", "HK": "Hong Kong", "SG": "Singapore"},
    "fr": {"FR": "France", "CA": "Canada", "BE": "Belgium", "CH": "Switzerland"},
}


@dataclass(frozen=True)
class DialectTable:
    """Languages with several major dialects, and display names for their regions."""

    dialects: Mapping[str, Mapping[str, str]] = field(default_factory=lambda: DEFAULT_DIALECTS)
    languages: Mapping[str, str] = field(default_factory=lambda: LANGUAGE_NAMES)

    @classmethod
    def from_file(cls, path: str | Path) -> DialectTable:
        """Load a TOML or JSON table with optional ``dialects`` and ``languages`` sections.

        Entries are merged over the defaults.
        """
        data = load_config(path)
        dialects = {k: dict(v) for k, v in DEFAULT_DIALECTS.items()}
        for lang, regions in data.get("dialects", {}).items():
            dialects[lang.lower()] = {r.upper(): name for r, name in regions.items()}
        languages = {**LANGUAGE_NAMES, **{k.lower(): v for k, v in data.get("languages", {}).items()}}
        return cls(dialects, languages)


def load_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


DEFAULT_TABLE = DialectTable()


def render_language(tag: LangTag, table: DialectTable = DEFAULT_TABLE) -> str:
    try:
        name = table.languages[tag.language]
    except KeyError:
        raise UnknownLanguageCode(f"no display name for language {tag.language!r}") from None
    regions = table.dialects.get(tag.language)
    if tag.region and regions and tag.region in regions:
        return f"{name} ({regions[tag.region]})"
    return name


def _fenced(label: str, text: str) -> str:
    return f"{label}:\n{FENCE}{text}{FENCE}"


def render_metricx_prompt(
    seg: Segment,
    mode: PromptMode,
    score_type: ScoreType | None,
    table: DialectTable = DEFAULT_TABLE,
) -> str:
    """Render the score-prediction input.

    ``score_type=None`` renders a first-stage input without the trailing
    score-type line.
    """
    use_src = mode in (PromptMode.SRC_ONLY, PromptMode.SRC_AND_REF)
    use_ref = mode in (PromptMode.REF_ONLY, PromptMode.SRC_AND_REF)
    if use_src and seg.source is None:
        raise MissingField(f"mode {mode.value} needs a source segment")
    if use_ref and seg.reference is None:
        raise MissingField(f"mode {mode.value} needs a reference")
    if seg.hypothesis is None:
        raise MissingField("segment has no translation")
    src_name = render_language(seg.src_lang, table)
    tgt_name = render_language(seg.tgt_lang, table)
    blocks = []
    if use_src:
        blocks.append(_fenced(f"{src_name} source", seg.source))
    if use_ref:
        blocks.append(_fenced(f"{tgt_name} reference", seg.reference))
    blocks.append(_fenced(f"{tgt_name} translation", seg.hypothesis))
    if score_type is not None:
        blocks.append(f"Score type: {score_type.value}")
    return "\n\n".join(blocks)


SPAN_PREAMBLE = (
    "You are an annotator for the quality of machine translation. Your task is to identify errors "
    "and assess the quality of the translation.\n"
    "Based on the source segment, human-generated reference translation, and machine translation "
    "surrounded with triple backticks, identify error types in the translation and classify them. "
    "The categories of errors are: accuracy (addition, mistranslation, omission, untranslated text), "
    "fluency (character encoding, grammar, inconsistency, punctuation, register, spelling), "
    "style (awkward), terminology (inappropriate for context, inconsistent use), non-translation, "
    "other, or no-error.\n"
    "Each error is classified as one of three severities: critical, major, and minor. Critical "
    "errors inhibit comprehension of the text. Major errors disrupt the flow, but what the text is "
    "trying to say is still understandable. Minor errors are technically errors, but do not disrupt "
    "the flow or hinder comprehension.\n"
    "\n"
    "Make sure your response is a strict and valid json object that could be parsed with "
    "json.loads() in python.\n"
)


def render_gemspaneval_prompt(seg: Segment, with_reference: bool, table: DialectTable = DEFAULT_TABLE) -> str:
    if seg.source is None:
        raise MissingField("span annotation needs a source segment")
    if with_reference and seg.reference is None:
        raise MissingField("with_reference=True but the segment has no reference")
    if seg.hypothesis is None:
        raise MissingField("segment has no translation")
    src_name = render_language(seg.src_lang, table)
    tgt_name = render_language(seg.tgt_lang, table)
    blocks = [_fenced(f"{src_name} source", seg.source)]
    if with_reference:
        blocks.append(_fenced(f"{tgt_name} reference", seg.reference))
    blocks.append(_fenced(f"{tgt_name} machine translation", seg.hypothesis))
    return SPAN_PREAMBLE + "\n" + "\n".join(blocks)


def score_type_for_dataset(kind: DatasetKind) -> ScoreType:
    # DA ratings share ESA's 0-100 scale, so they train the ESA head
    return ScoreType.MQM if kind is DatasetKind.MQM else ScoreType.ESA


@dataclass(frozen=True)
class PromptRecord:
    key: tuple[str, str, str]
    mode: str
    score_type: ScoreType | None
    text: str
    task: str = "score"

    def to_dict(self) -> dict[str, Any]:
        system, doc_id, seg_id = self.key
        return {
            "system": system,
            "doc_id": doc_id,
            "seg_id": seg_id,
            "task": self.task,
            "mode": self.mode,
            "score_type": self.score_type.value if self.score_type else None,
            "prompt": self.text,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PromptRecord:
        st = d.get("score_type")
        return cls(
            key=(d.get("system") or "", str(d["doc_id"]), str(d["seg_id"])),
            mode=d.get("mode", ""),
            score_type=ScoreType(st) if st else None,
            text=d["prompt"],
            task=d.get("task", "score"),
        )
