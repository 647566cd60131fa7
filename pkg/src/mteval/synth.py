"""Synthetic bad translations with fixed scores on the 0-25 MQM scale."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .core import Orientation, QualityScore, Record, ScoreType, Segment
from .errors import DataError


class NoReference(DataError):
    pass


class EmptyPool(DataError):
    pass


class SynthCategory(enum.Enum):
    UNDERTRANSLATION = "undertranslation"
    OVERTRANSLATION = "overtranslation"
    UNRELATED = "unrelated"
    MISSING_PUNCT = "missing_punct"


CLI_NAMES = {
    "under": SynthCategory.UNDERTRANSLATION,
    "over": SynthCategory.OVERTRANSLATION,
    "unrelated": SynthCategory.UNRELATED,
    "punct": SynthCategory.MISSING_PUNCT,
}

TERMINAL_PUNCT = frozenset(".!?。！？")


@dataclass(frozen=True)
class SynthScores:
    bad: float = 25.0
    missing_punct: float = 1.0

    def __post_init__(self):
        for v in (self.bad, self.missing_punct):
            if not 0.0 <= v <= 25.0:
                raise ValueError("synthetic scores must lie in [0, 25]")


@dataclass(frozen=True)
class SyntheticExample:
    segment: Segment
    score: float
    category: SynthCategory

    def __post_init__(self):
        if not 0.0 <= self.score <= 25.0:
            raise ValueError(f"synthetic score {self.score} outside [0, 25]")

    def to_record(self, score_type: ScoreType = ScoreType.MQM) -> Record:
        # The score stays on the 0-25 error scale for both tags.
        return Record(
            self.segment,
            score=QualityScore(self.score, ScoreType.MQM, Orientation.LOWER_BETTER),
            extra={"synthetic_category": self.category.value, "score_type_tag": score_type.value},
        )


def _reference(seg: Segment) -> str:
    if seg.reference is None:
        raise NoReference(f"segment {seg.doc_id}/{seg.seg_id} has no reference")
    return seg.reference


def gen_undertranslation(
    seg: Segment,
    fraction: float | None,
    rng: random.Random,
    scores: SynthScores = SynthScores(),
) -> SyntheticExample:
    """Keep a prefix of the reference, cut at the whitespace closest to ``fraction`` of its length.

    With ``fraction=None`` a fraction is drawn uniformly from [0.2, 0.8].
    A single-word reference has no cut point and is returned whole.
    """
    ref = _reference(seg)
    if fraction is None:
        fraction = rng.uniform(0.2, 0.8)
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    target = fraction * len(ref)
    cuts = [i for i in range(1, len(ref)) if ref[i].isspace() and not ref[i - 1].isspace()]
    hyp = ref if not cuts else ref[: min(cuts, key=lambda i: (abs(i - target), i))]
    return SyntheticExample(replace(seg, hypothesis=hyp), scores.bad, SynthCategory.UNDERTRANSLATION)


def _pool_refs(seg: Segment, pool: Sequence[Segment]) -> list[str]:
    own = seg.reference
    return [
        p.reference
        for p in pool
        if p.reference and p.tgt_lang.language == seg.tgt_lang.language and p.reference != own
    ]


def gen_overtranslation(
    seg: Segment,
    pool: Sequence[Segment],
    rng: random.Random,
    scores: SynthScores = SynthScores(),
) -> SyntheticExample:
    ref = _reference(seg)
    candidates = _pool_refs(seg, pool)
    if not candidates:
        raise EmptyPool(f"no other {seg.tgt_lang.language} references to append")
    hyp = ref + " " + rng.choice(candidates)
    return SyntheticExample(replace(seg, hypothesis=hyp), scores.bad, SynthCategory.OVERTRANSLATION)


def gen_unrelated(
    seg: Segment,
    pool: Sequence[Segment],
    rng: random.Random,
    scores: SynthScores = SynthScores(),
) -> SyntheticExample:
    _reference(seg)
    candidates = _pool_refs(seg, pool)
    if not candidates:
        raise EmptyPool(f"no other {seg.tgt_lang.language} references to sample from")
    return SyntheticExample(replace(seg, hypothesis=rng.choice(candidates)), scores.bad, SynthCategory.UNRELATED)


def gen_missing_punct(
    seg: Segment,
    punctuation: frozenset[str] = TERMINAL_PUNCT,
    scores: SynthScores = SynthScores(),
) -> SyntheticExample | None:
    ref = _reference(seg)
    stripped = ref.rstrip()
    if not stripped or stripped[-1] not in punctuation:
        return None
    return SyntheticExample(replace(seg, hypothesis=stripped[:-1]), scores.missing_punct, SynthCategory.MISSING_PUNCT)


def generate_mixture(
    segments: Sequence[Segment],
    weights: Mapping[SynthCategory, float],
    seed: int,
    pool: Sequence[Segment] | None = None,
    scores: SynthScores = SynthScores(),
) -> list[SyntheticExample]:
    """One synthetic example per segment, category drawn by ``weights``.

    Each segment gets its own generator seeded from (seed, index), so any
    partition of the segments produces the same examples. Segments where the
    drawn generator does not apply (no terminal punctuation) are skipped.
    """
    pool = segments if pool is None else pool
    cats = [c for c, w in weights.items() if w > 0]
    ws = [weights[c] for c in cats]
    if not cats:
        raise ValueError("at least one category needs a positive weight")
    out = []
    for i, seg in enumerate(segments):
        rng = random.Random(f"{seed}:{i}")
        cat = rng.choices(cats, ws)[0]
        if cat is SynthCategory.UNDERTRANSLATION:
            ex = gen_undertranslation(seg, None, rng, scores)
        elif cat is SynthCategory.OVERTRANSLATION:
            ex = gen_overtranslation(seg, pool, rng, scores)
        elif cat is SynthCategory.UNRELATED:
            ex = gen_unrelated(seg, pool, rng, scores)
        else:
            ex = gen_missing_punct(seg, scores=scores)
        if ex is not None:
            out.append(ex)
    return out
