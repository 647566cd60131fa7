import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mteval.metaeval import (
    NoComparablePairs,
    ScoreMatrix,
    TooFewSegments,
    TooFewSystems,
    checkpoint_selection_score,
    matrices_from_rows,
    meta_evaluate,
    pairwise_accuracy_tie_calibrated,
    permutation_p_value,
    soft_pairwise_accuracy,
)


def matrix(values, systems=None):
    values = np.asarray(values, dtype=float)
    systems = systems or tuple(f"s{i}" for i in range(values.shape[0]))
    return ScoreMatrix(tuple(systems), tuple(range(values.shape[1])), values)


def brute_tie_calibration(h, m):
    """Plain-Python scan over every candidate epsilon."""
    pairs = []
    for seg in range(h.shape[1]):
        for i, j in itertools.combinations(range(h.shape[0]), 2):
            vals = (h[i, seg], h[j, seg], m[i, seg], m[j, seg])
            if any(math.isnan(v) for v in vals):
                continue
            hd, md = h[i, seg] - h[j, seg], m[i, seg] - m[j, seg]
            pairs.append((hd, md))
    diffs = sorted({abs(md) for _, md in pairs})
    cands = sorted({0.0, *((a + b) / 2 for a, b in zip(diffs, diffs[1:])), *diffs[-1:]})

    def acc(eps):
        ok = 0
        for hd, md in pairs:
            hrel = 0 if hd == 0 else (1 if hd > 0 else -1)
            mrel = 0 if abs(md) <= eps else (1 if md > 0 else -1)
            ok += hrel == mrel
        return ok / len(pairs)

    best = max(cands, key=lambda e: (acc(e), -e))
    return acc(best), best, acc


@st.composite
def score_pair(draw, max_sys=8, max_seg=20, with_nan=True):
    n_sys = draw(st.integers(2, max_sys))
    n_seg = draw(st.integers(1, max_seg))
    cell = st.integers(0, 4).map(float)
    if with_nan:
        cell = cell | st.just(math.nan)
    h = np.array(draw(st.lists(st.lists(cell, min_size=n_seg, max_size=n_seg), min_size=n_sys, max_size=n_sys)))
    m = np.array(
        draw(st.lists(st.lists(st.integers(-6, 6).map(lambda x: x / 2), min_size=n_seg, max_size=n_seg), min_size=n_sys, max_size=n_sys))
    )
    return h, m


def test_perfect_and_reversed_metric():
    h = np.array([[3.0, 1, 5, 2], [2, 4, 1, 3], [1, 5, 3, 4]])
    assert pairwise_accuracy_tie_calibrated(matrix(h), matrix(h)) == (1.0, 0.0, 12)
    acc, eps, n = pairwise_accuracy_tie_calibrated(matrix(h), matrix(-h))
    assert (acc, eps, n) == (0.0, 0.0, 12)
    assert brute_tie_calibration(h, -h)[:2] == (0.0, 0.0)


def test_all_human_ties_pick_largest_gap():
    h = np.zeros((3, 2))
    m = np.array([[0.0, 1.0], [0.3, 5.0], [2.0, 1.5]])
    acc, eps, _ = pairwise_accuracy_tie_calibrated(matrix(h), matrix(m))
    assert acc == 1.0 and eps == 4.0


def test_missing_values_drop_pairs():
    h = np.array([[1.0, np.nan], [0.0, 1.0]])
    tc = pairwise_accuracy_tie_calibrated(matrix(h), matrix(h))
    assert tc.n_pairs == 1
    with pytest.raises(NoComparablePairs):
        pairwise_accuracy_tie_calibrated(matrix([[np.nan], [1.0]]), matrix([[1.0], [1.0]]))


@settings(max_examples=200, deadline=None)
@given(score_pair())
def test_tie_calibration_matches_brute_force(hm):
    h, m = hm
    try:
        got = pairwise_accuracy_tie_calibrated(matrix(h), matrix(m))
    except NoComparablePairs:
        return
    acc, eps, acc_at = brute_tie_calibration(h, m)
    assert (got.accuracy, got.epsilon) == (acc, eps)
    # no epsilon at all, candidate or not, does better
    for e in np.linspace(0, 7, 29):
        assert acc_at(e) <= acc


@settings(max_examples=100, deadline=None)
@given(score_pair(with_nan=False), st.integers(1, 40), st.integers(-20, 20))
def test_invariant_under_positive_affine_transform(hm, a, b):
    # quarter-step coefficients keep the arithmetic exact, so equal gaps stay equal
    h, m = hm
    a, b = a / 4, b / 4
    base = pairwise_accuracy_tie_calibrated(matrix(h), matrix(m)).accuracy
    assert pairwise_accuracy_tie_calibrated(matrix(h), matrix(a * m + b)).accuracy == pytest.approx(base)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(1, 10), st.data())
def test_invariant_under_monotone_transform_without_human_ties(n_sys, n_seg, data):
    # distinct human scores per segment: with no human ties, only orderings matter
    h = np.array([data.draw(st.permutations(range(n_sys))) for _ in range(n_seg)], dtype=float).T
    m = np.array(data.draw(st.lists(st.lists(st.integers(-5, 5), min_size=n_seg, max_size=n_seg), min_size=n_sys, max_size=n_sys)), float)
    base = pairwise_accuracy_tie_calibrated(matrix(h), matrix(m)).accuracy
    for f in (np.exp, np.cbrt, lambda x: x**3 + 10 * x):
        assert pairwise_accuracy_tie_calibrated(matrix(h), matrix(f(m))).accuracy == pytest.approx(base)


def test_monotone_transform_counterexample():
    # seg 0: humans tie, metric gap 1; seg 1: humans prefer s0, metric gap 2
    h = np.array([[0.0, 1.0], [0.0, 0.0]])
    m = np.array([[1.0, 4.0], [0.0, 2.0]])
    assert pairwise_accuracy_tie_calibrated(matrix(h), matrix(m)).accuracy == 1.0
    f = {0.0: 0.0, 1.0: 10.0, 2.0: 11.0, 4.0: 12.0}  # strictly increasing
    fm = np.vectorize(f.get)(m)
    # the tie gap (10) now exceeds the win gap (1), so no epsilon gets both right
    assert pairwise_accuracy_tie_calibrated(matrix(h), matrix(fm)).accuracy == 0.5


def test_permutation_p_value_matches_loop():
    rng = np.random.default_rng(1)
    d = rng.normal(size=7)
    signs = rng.integers(0, 2, size=(50, 7)) * 2 - 1
    obs = abs(d.mean())
    hits = sum(abs((s * d).mean()) >= obs - 1e-12 for s in signs)
    assert permutation_p_value(d, signs) == (hits + 1) / 51


def test_spa_examples():
    h = matrix([[1.0] * 10, [0.0] * 10])
    zero = matrix(np.zeros((2, 10)))
    # 2 of 1000 sign draws are all-equal (each has prob 2/1024); pinned regression value
    assert soft_pairwise_accuracy(h, zero, 1000, 0) == pytest.approx(3 / 1001, abs=1e-15)
    assert soft_pairwise_accuracy(zero, h, 1000, 0) == soft_pairwise_accuracy(h, zero, 1000, 0)


@settings(max_examples=30, deadline=None)
@given(score_pair(max_sys=5, max_seg=8, with_nan=False), st.integers(0, 2**32 - 1))
def test_spa_properties(hm, seed):
    h, m = hm
    if h.shape[1] < 2:
        return
    H, M = matrix(h), matrix(m)
    spa = soft_pairwise_accuracy(H, M, 200, seed)
    assert 0.0 <= spa <= 1.0
    assert soft_pairwise_accuracy(H, H, 200, seed) == 1.0
    assert soft_pairwise_accuracy(M, H, 200, seed) == spa
    assert soft_pairwise_accuracy(H, M, 200, seed, workers=3) == spa


def test_spa_invariant_to_segment_and_system_order():
    rng = np.random.default_rng(3)
    h, m = rng.normal(size=(4, 12)), rng.normal(size=(4, 12))
    base = soft_pairwise_accuracy(matrix(h), matrix(m), 300, 5)
    perm_seg, perm_sys = rng.permutation(12), rng.permutation(4)
    names = tuple(f"s{i}" for i in perm_sys)
    H = ScoreMatrix(names, tuple(perm_seg.tolist()), h[perm_sys][:, perm_seg])
    M = ScoreMatrix(names, tuple(perm_seg.tolist()), m[perm_sys][:, perm_seg])
    assert soft_pairwise_accuracy(H, M, 300, 5) == base


def test_spa_errors():
    with pytest.raises(TooFewSystems):
        soft_pairwise_accuracy(matrix([[1.0, 2.0]], ["a"]), matrix([[1.0, 2.0]], ["a"]))
    with pytest.raises(TooFewSegments):
        soft_pairwise_accuracy(matrix([[1.0], [2.0]]), matrix([[1.0], [2.0]]))


def test_checkpoint_selection():
    assert checkpoint_selection_score([0.5] * 3, [0.5] * 3, 0.7) == 0.5
    assert checkpoint_selection_score([0.6] * 3, [0.9] * 3, 0.2) == pytest.approx(0.66)
    assert checkpoint_selection_score([0.6, 0.7, 0.8], [0.0] * 3, 0.0) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        checkpoint_selection_score([0.5], [0.5], 1.5)


def test_rows_to_report():
    rows = [
        {"lp": "en-de", "system": s, "doc_id": "d", "seg_id": str(k), "score": {"value": v, "orientation": "lower_better"}}
        for s, vals in (("a", [0, 1, 5]), ("b", [5, 5, 6]), ("c", [1, 0, 25]))
        for k, v in enumerate(vals)
    ]
    human = matrices_from_rows(rows)
    assert set(human) == {"en-de"} and human["en-de"].values[0, 0] == -0.0
    report = meta_evaluate(human, human, resamples=100)
    assert report["en-de"]["segment_accuracy"] == 1.0 and report["en-de"]["spa"] == 1.0
    # duplicate rows (several raters) are averaged
    dup = matrices_from_rows([{"system": "a", "seg_id": "1", "score": 1.0}, {"system": "a", "seg_id": "1", "score": 3.0}])
    assert dup[""].values[0, 0] == 2.0
