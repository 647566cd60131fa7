"""Metric meta-evaluation against human judgements.

Segment level: pairwise accuracy with a calibrated metric tie threshold.
System level: soft pairwise accuracy (agreement of permutation-test p-values).
"""

from __future__ import annotations

import collections
import itertools
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError


class NoComparablePairs(DataError):
    pass


class TooFewSystems(DataError):
    pass


class TooFewSegments(DataError):
    pass


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Higher-is-better scores, systems x segments, NaN where missing."""

    systems: tuple[str, ...]
    segments: tuple[Any, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.systems), len(self.segments)):
            raise DataError(f"values shape {values.shape} does not match {len(self.systems)}x{len(self.segments)}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_dict(cls, scores: dict[str, dict[Any, float | None]]) -> ScoreMatrix:
        """Build from ``{system: {segment_key: score}}``."""
        systems = tuple(sorted(scores))
        segments = tuple(sorted({k for per in scores.values() for k in per}, key=repr))
        values = np.full((len(systems), len(segments)), np.nan)
        col = {k: j for j, k in enumerate(segments)}
        for i, s in enumerate(systems):
            for k, v in scores[s].items():
                if v is not None:
                    values[i, col[k]] = v
        return cls(systems, segments, values)

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())

    def reindex(self, systems: Sequence[str], segments: Sequence[Any]) -> np.ndarray:
        si = {s: i for i, s in enumerate(self.systems)}
        gi = {g: j for j, g in enumerate(self.segments)}
        out = np.full((len(systems), len(segments)), np.nan)
        for a, s in enumerate(systems):
            if s not in si:
                continue
            for b, g in enumerate(segments):
                if g in gi:
                    out[a, b] = self.values[si[s], gi[g]]
        return out


def _aligned(human: ScoreMatrix, metric: ScoreMatrix) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Common systems (sorted) and segments (canonical order), as two arrays."""
    systems = tuple(sorted(set(human.systems) & set(metric.systems)))
    segments = sorted(set(human.segments) & set(metric.segments), key=repr)
    return systems, human.reindex(systems, segments), metric.reindex(systems, segments)


# --- segment level ----------------------------------------------------------


class TieCalibration(NamedTuple):
    accuracy: float
    epsilon: float
    n_pairs: int


def _segment_pairs(h: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For every within-segment system pair with all four scores present:
    |metric diff|, whether humans tie, and whether a non-tied metric
    prediction points the same way as the humans."""
    n_sys = h.shape[0]
    ii, jj = np.triu_indices(n_sys, k=1)
    hd = h[ii, :] - h[jj, :]
    md = m[ii, :] - m[jj, :]
    ok = ~(np.isnan(hd) | np.isnan(md))
    hd, md = hd[ok], md[ok]
    return np.abs(md), hd == 0, (np.sign(md) == np.sign(hd)) & (md != 0)


def tie_candidates(abs_diffs: np.ndarray) -> np.ndarray:
    """0, midpoints of consecutive distinct |diffs|, and the largest |diff|."""
    u = np.unique(abs_diffs)
    cands = [0.0]
    if u.size:
        cands.extend(((u[:-1] + u[1:]) / 2).tolist())
        cands.append(float(u[-1]))
    return np.unique(np.asarray(cands, dtype=float))


def accuracy_at(abs_diffs: np.ndarray, human_tie: np.ndarray, concordant: np.ndarray, eps: float) -> float:
    metric_tie = abs_diffs <= eps
    correct = (human_tie & metric_tie) | (~human_tie & ~metric_tie & concordant)
    return float(correct.mean())


def pairwise_accuracy_tie_calibrated(human: ScoreMatrix, metric: ScoreMatrix) -> TieCalibration:
    """Pairwise ranking accuracy with the metric tie threshold chosen to maximize it.

    Humans tie only on exactly equal scores; the metric ties a pair when the
    absolute score difference is at most epsilon. The smallest maximizing
    epsilon is returned.
    """
    _, h, m = _aligned(human, metric)
    d, htie, conc = _segment_pairs(h, m)
    n = d.size
    if n == 0:
        raise NoComparablePairs("no system pair has both human and metric scores on a segment")
    cands = tie_candidates(d)
    # correct(eps) = #(human tie, d <= eps) + #(concordant, d > eps)
    tie_d = np.sort(d[htie])
    conc_d = np.sort(d[conc])
    n_tie_hit = np.searchsorted(tie_d, cands, side="right")
    n_conc_hit = conc_d.size - np.searchsorted(conc_d, cands, side="right")
    correct = n_tie_hit + n_conc_hit
    best = int(np.argmax(correct))
    return TieCalibration(float(correct[best]) / n, float(cands[best]), n)


# --- system level -----------------------------------------------------------


def _pair_rng(seed: int, a: str, b: str) -> np.random.Generator:
    key = zlib.crc32(f"{a}\x00{b}".encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed, key]))


def permutation_p_value(diffs: np.ndarray, signs: np.ndarray) -> float:
    """Two-sided paired sign-flip test on the mean difference, add-one smoothed."""
    n = diffs.size
    observed = abs(math.fsum(diffs)) / n
    permuted = np.abs(signs @ diffs) / n
    tol = 1e-12 * max(1.0, observed)
    hits = int(np.count_nonzero(permuted >= observed - tol))
    return (hits + 1) / (signs.shape[0] + 1)


def _pair_score(h: np.ndarray, m: np.ndarray, a: str, b: str, resamples: int, seed: int) -> tuple[float, float]:
    ok = ~(np.isnan(h[0]) | np.isnan(h[1]) | np.isnan(m[0]) | np.isnan(m[1]))
    hd = (h[0] - h[1])[ok]
    md = (m[0] - m[1])[ok]
    if hd.size < 2:
        raise TooFewSegments(f"systems {a!r} and {b!r} share fewer than 2 scored segments")
    signs = _pair_rng(seed, a, b).integers(0, 2, size=(resamples, hd.size)) * 2 - 1
    return permutation_p_value(hd, signs), permutation_p_value(md, signs)


def soft_pairwise_accuracy(
    human: ScoreMatrix,
    metric: ScoreMatrix,
    resamples: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> float:
    """Mean over system pairs of 1 - |p_human - p_metric|.

    Both p-values of a pair are computed with the same sign-flip draws, which
    come from a stream keyed on (seed, system pair), so the result does not
    depend on ``workers`` or on argument order.
    """
    systems, h, m = _aligned(human, metric)
    if len(systems) < 2:
        raise TooFewSystems("need at least two systems")
    pairs = list(itertools.combinations(range(len(systems)), 2))

    def job(pair):
        i, j = pair
        return _pair_score(h[[i, j]], m[[i, j]], systems[i], systems[j], resamples, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pvals = list(pool.map(job, pairs))
    else:
        pvals = [job(p) for p in pairs]
    return math.fsum(1.0 - abs(ph - pm) for ph, pm in pvals) / len(pvals)


def checkpoint_selection_score(seg_accs: Sequence[float], sys_accs: Sequence[float], w_sys: float = 0.2) -> float:
    if not 0.0 <= w_sys <= 1.0:
        raise ValueError("w_sys must lie in [0, 1]")
    return (1.0 - w_sys) * float(np.mean(seg_accs)) + w_sys * float(np.mean(sys_accs))


# --- JSONL plumbing ---------------------------------------------------------


def _score_value(raw: Any) -> float | None:
    if raw is None:
        return None
    if isinstance(raw, dict):
        v = raw.get("value")
        if v is None:
            return None
        return -float(v) if raw.get("orientation") == "lower_better" else float(v)
    return float(raw)


def matrices_from_rows(rows: Iterable[dict[str, Any]]) -> dict[str, ScoreMatrix]:
    """Group score rows by language pair into matrices.

    Rows need ``system``, ``seg_id`` and ``score`` (a number or a score
    object); ``doc_id`` and ``lp`` are optional. Repeated (system, segment)
    rows, e.g. from several raters, are averaged. Lower-is-better score
    objects are negated.
    """
    acc: dict[str, dict[str, dict[Any, list[float]]]] = collections.defaultdict(
        lambda: collections.defaultdict(lambda: collections.defaultdict(list))
    )
    for row in rows:
        lp = row.get("lp") or ""
        seg = (str(row.get("doc_id", "")), str(row["seg_id"]))
        v = _score_value(row.get("score"))
        slot = acc[lp][str(row["system"])][seg]
        if v is not None:
            slot.append(v)
    out = {}
    for lp, per_sys in acc.items():
        out[lp] = ScoreMatrix.from_dict(
            {s: {k: (math.fsum(v) / len(v) if v else None) for k, v in segs.items()} for s, segs in per_sys.items()}
        )
    return out


def meta_evaluate(
    human: dict[str, ScoreMatrix],
    metric: dict[str, ScoreMatrix],
    levels: Iterable[str] = ("segment", "system"),
    resamples: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> dict[str, Any]:
    """Per-language-pair report for the requested levels."""
    levels = set(levels)
    report: dict[str, Any] = {}
    for lp in sorted(human):
        if lp not in metric:
            continue
        h, m = human[lp], metric[lp]
        entry: dict[str, Any] = {"n_systems": len(set(h.systems) & set(m.systems)), "missing_human": h.n_missing}
        if "segment" in levels:
            tc = pairwise_accuracy_tie_calibrated(h, m)
            entry.update(segment_accuracy=tc.accuracy, epsilon=tc.epsilon, n_pairs=tc.n_pairs)
        if "system" in levels:
            # system-level SPA compares per-system mean scores via per-segment differences
            entry["spa"] = soft_pairwise_accuracy(h, m, resamples=resamples, seed=seed, workers=workers)
        report[lp] = entry
    return report
