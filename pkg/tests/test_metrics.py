import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hallcube.errors import ConfigurationError, DomainError, UsageError
from hallcube.metrics import (
    GroupStats,
    MetricsReport,
    SampleMetrics,
    SensitivityMap,
    aggregate,
    evaluate,
    force_error,
    force_sensitivity,
    match,
    match_batch,
    non_contact_accuracy,
    samples_csv,
    search_displacements,
    zncc_at,
)

M = 10


def hot(pixels, m=M):
    h = np.zeros((m, m))
    for (x, y), v in pixels:
        h[x - 1, y - 1] = v
    return h


def flat_ranges(span=20.0, lo=1.0, m=M):
    rm = np.zeros((m, m, 2))
    rm[:, :, 0] = lo
    rm[:, :, 1] = lo + span
    return rm


def smooth_map(seed, m=M):
    rng = np.random.default_rng(seed)
    cx, cy = rng.uniform(2, m - 2, 2)
    xs, ys = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    return np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / 8.0) * rng.uniform(2, 10)


def test_search_order_prefers_small_displacements():
    disps = search_displacements(M)
    assert disps[0] == (0, 0)
    assert len(disps) == (2 * M - 1) ** 2
    d2 = [dx * dx + dy * dy for dx, dy in disps]
    assert d2 == sorted(d2)
    assert disps[1] == (-1, 0)  # lexicographic within a distance shell


def test_zncc_self_is_one():
    h = smooth_map(0)
    assert zncc_at(h, h, (0, 0)) == 1.0


def test_zncc_affine_invariance():
    h = smooth_map(1)
    assert zncc_at(2.0 * h, h, (0, 0)) == 1.0
    assert zncc_at(3.7 * h + 1.2, h, (0, 0)) == pytest.approx(1.0, abs=1e-12)


def test_zncc_shift_by_one():
    gt = hot([((3, 4), 5.0), ((5, 5), 2.0)])
    pred = np.zeros((M, M))
    pred[1:, :] = gt[:-1, :]
    assert zncc_at(pred, gt, (1, 0)) == 1.0


def test_zncc_zero_variance_is_nan():
    gt = hot([((1, 1), 5.0)])
    pred = smooth_map(2)
    # shifted window sees only the empty corner of gt
    assert math.isnan(zncc_at(pred, gt, (-9, -9)))
    assert math.isnan(zncc_at(np.full((M, M), 3.0), gt, (0, 0)))


def test_zncc_swap_symmetry():
    a, b = smooth_map(3), smooth_map(4)
    for d in [(0, 0), (2, -1), (-3, 5), (9, 0)]:
        assert zncc_at(a, b, d) == zncc_at(b, a, (-d[0], -d[1]))


def test_match_perfect():
    gt = hot([((4, 6), 8.0)])
    assert match(gt, gt) == (1.0, 0.0, 0.0, 0.0)


def test_match_one_pixel_shift():
    gt = hot([((3, 4), 5.0), ((5, 5), 2.0)])
    pred = np.zeros((M, M))
    pred[1:, :] = gt[:-1, :]
    a_sim, ex, ey, el = match(pred, gt)
    assert a_sim == 1.0
    assert (ex, ey, el) == (1.0, 0.0, 1.0)


def test_match_tie_breaks_toward_origin():
    # equal hot pixels along the diagonal alias at displacement (4, 4)
    gt = hot([((4, 4), 6.0), ((8, 8), 6.0)])
    a_sim, ex, ey, el = match(gt, gt)
    assert a_sim == 1.0
    assert el == 0.0


def test_match_affine_identical():
    # sums chosen so every mean in the affine copy is exact
    gt = hot([((5, 5), 25.0)])
    pred = hot([((5, 6), 25.0)])
    assert match(2.0 * pred + 0.5, gt) == match(pred, gt)


def test_match_constant_prediction_penalized():
    gt = hot([((2, 2), 4.0)])
    a_sim, ex, ey, el = match(np.zeros((M, M)), gt)
    assert a_sim == 0.0
    assert (ex, ey) == (9.0, 9.0)
    assert el == pytest.approx(math.hypot(9, 9))


def test_match_requires_contact_gt():
    with pytest.raises(DomainError):
        match(smooth_map(5), np.zeros((M, M)))


def test_match_batch_agrees_with_scalar():
    gts = np.stack([hot([((2, 3), 4.0)]), smooth_map(6) + hot([((7, 7), 9.0)])])
    preds = np.stack([smooth_map(7), smooth_map(8)])
    a, ex, ey, el = match_batch(preds, gts)
    for i in range(2):
        assert match(preds[i], gts[i]) == (a[i], ex[i], ey[i], el[i])


def test_force_error_arithmetic():
    gt = hot([((5, 5), 10.0)])
    pred = hot([((5, 5), 9.0)])
    pct, newton = force_error(pred, gt, flat_ranges(span=20.0))
    assert pct == 5.0
    assert newton == 1.0


def test_force_error_percent_newton_consistency():
    rm = np.zeros((M, M, 2))
    rng = np.random.default_rng(9)
    rm[:, :, 0] = rng.uniform(0.5, 1.0, (M, M))
    rm[:, :, 1] = rm[:, :, 0] + rng.uniform(5.0, 20.0, (M, M))
    for seed in range(5):
        r = np.random.default_rng(seed)
        x, y = r.integers(1, M + 1, 2)
        gt = hot([((x, y), float(r.uniform(1, 12)))])
        pred = gt + r.normal(0, 0.5, (M, M)) * (gt > 0)
        pct, newton = force_error(pred, gt, rm)
        span = rm[x - 1, y - 1, 1] - rm[x - 1, y - 1, 0]
        assert abs(pct * span / 100.0 - newton) < 1e-12


def test_force_error_multi_pixel_mean():
    gt = hot([((1, 1), 4.0), ((9, 9), 8.0)])
    pred = hot([((1, 1), 5.0), ((9, 9), 6.0)])
    pct, newton = force_error(pred, gt, flat_ranges(span=10.0))
    assert newton == pytest.approx(1.5)
    assert pct == pytest.approx(15.0)


def test_force_error_missing_range():
    rm = flat_ranges()
    rm[4, 4, 1] = rm[4, 4, 0]  # empty span
    with pytest.raises(ConfigurationError):
        force_error(hot([((5, 5), 1.0)]), hot([((5, 5), 1.0)]), rm)
    with pytest.raises(DomainError):
        force_error(smooth_map(1), np.zeros((M, M)), flat_ranges())


def test_non_contact_accuracy():
    zeros = np.zeros((4, M, M))
    assert non_contact_accuracy(zeros, 0.5) == 1.0
    mixed = np.zeros((4, M, M))
    mixed[:2, 3, 3] = 0.9
    assert non_contact_accuracy(mixed, 0.5) == 0.5
    with pytest.raises(UsageError):
        non_contact_accuracy(np.zeros((0, M, M)), 0.5)


def test_force_sensitivity_simplex_oracle():
    signals = np.vstack([np.zeros(9), np.eye(9)])
    forces = np.linspace(0.0, 1.0, 10)
    assert force_sensitivity(signals, forces) == 1.0 / 362880.0


def test_force_sensitivity_degenerate_and_errors():
    flat = np.ones((12, 9))
    assert force_sensitivity(flat, np.linspace(0, 2, 12)) == 0.0
    with pytest.raises(DomainError):
        force_sensitivity(np.eye(9), np.arange(9.0))  # fewer than 10 rows
    with pytest.raises(DomainError):
        force_sensitivity(np.random.default_rng(0).normal(size=(12, 9)),
                          np.ones(12))


def test_sensitivity_map_rejects_negative():
    with pytest.raises(DomainError):
        SensitivityMap(face=1, delta=np.full((M, M), -1.0))
    sm = SensitivityMap(face=1, delta=np.full((M, M), np.nan))
    assert sm.face == 1


def test_evaluate_end_to_end():
    gts = np.stack([
        hot([((3, 3), 6.0)]),
        hot([((7, 2), 4.0), ((2, 7), 4.0)]),
        np.zeros((M, M)),
        np.zeros((M, M)),
    ])
    preds = np.stack([
        hot([((3, 3), 5.0)]),
        hot([((7, 2), 4.0), ((2, 7), 4.0)]),
        np.zeros((M, M)),
        hot([((5, 5), 2.0)]),  # false contact
    ])
    rep = evaluate(preds, gts, flat_ranges(span=10.0), threshold=0.5, face=3,
                   case_ids=np.array(["a", "b", "nc-0", "nc-1"]),
                   samples=np.array([0, 1, 2, 3]))
    assert (rep.n_samples, rep.n_contact, rep.n_non_contact) == (4, 2, 2)
    assert rep.a_non == 0.5
    assert rep.a_sim == 1.0
    assert rep.e_loc == 0.0
    assert rep.e_f_newton == pytest.approx(0.5)  # (1.0 + 0.0) / 2
    assert rep.e_f_pct == pytest.approx(5.0)
    assert rep.loc_counts[2, 2] == 1  # only the single-contact sample lands
    assert rep.loc_counts.sum() == 1
    assert rep.loc_e_f_newton[2, 2] == pytest.approx(1.0)
    assert math.isnan(rep.loc_a_sim[0, 0])
    singles = [r for r in rep.samples if r.probe == 1]
    assert singles[0].location == (3, 3) and singles[0].case_id == "a"
    with pytest.raises(UsageError):
        evaluate(np.zeros((0, M, M)), np.zeros((0, M, M)),
                 flat_ranges(), 0.5)


def test_report_invariants():
    gts = np.stack([hot([((5, 5), 3.0)])])
    preds = np.stack([smooth_map(11)])
    rep = evaluate(preds, gts, flat_ranges(), threshold=0.5)
    assert -1.0 <= rep.a_sim <= 1.0
    assert rep.e_loc >= 0 and rep.e_f_pct >= 0 and rep.e_f_newton >= 0
    assert math.isnan(rep.a_non)  # no non-contact records


def test_aggregate_groups():
    def rec(face, loc, probe, a_sim, e_f):
        return SampleMetrics(face=face, case_id="c", sample=0, probe=probe,
                             location=loc, a_sim=a_sim, e_loc_x=0.0,
                             e_loc_y=0.0, e_loc=0.0, e_f_pct=e_f,
                             e_f_newton=e_f / 10)

    records = [rec(1, (2, 2), 1, 0.9, 4.0), rec(1, (2, 2), 1, 0.7, 8.0),
               rec(2, (3, 3), 2, 0.5, 2.0)]
    by_face = aggregate(records, "face")
    assert set(by_face) == {1, 2}
    assert by_face[1].count == 2
    assert by_face[1].mean["a_sim"] == pytest.approx(0.8)
    assert by_face[2].mean["e_f_pct"] == 2.0
    assert by_face[1].p50["e_f_pct"] == pytest.approx(6.0)

    by_loc = aggregate(records, "location")
    assert sum(g.count for g in by_loc.values()) == len(records)

    custom = aggregate(records, ["lo", "hi", "hi"])
    assert custom["hi"].count == 2

    single = aggregate(records[:1], "probe")[1]
    assert single.mean["a_sim"] == 0.9
    assert single.p10["a_sim"] == single.p90["a_sim"] == 0.9

    with pytest.raises(UsageError):
        aggregate(records, "flavor")
    with pytest.raises(UsageError):
        aggregate(records, ["one"])
    with pytest.raises(UsageError):
        aggregate([], "face")


def test_aggregate_non_contact_fraction():
    nc = SampleMetrics(face=1, case_id="nc", sample=0, probe=0,
                       location=(0, 0), a_sim=float("nan"),
                       e_loc_x=float("nan"), e_loc_y=float("nan"),
                       e_loc=float("nan"), e_f_pct=float("nan"),
                       e_f_newton=float("nan"), non_contact_ok=True)
    stats = aggregate([nc], "face")[1]
    assert stats.a_non == 1.0
    assert math.isnan(stats.mean["a_sim"])


def test_samples_csv_shape():
    gts = np.stack([hot([((3, 3), 6.0)]), np.zeros((M, M))])
    preds = np.stack([hot([((3, 3), 6.0)]), np.zeros((M, M))])
    rep = evaluate(preds, gts, flat_ranges(), threshold=0.5)
    text = samples_csv(rep)
    lines = text.strip().split("\n")
    assert lines[0].startswith("face,case_id,sample,probe")
    assert len(lines) == 3
    assert lines[2].endswith(",1")  # non-contact classified correctly


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_match_bounds_property(s1, s2):
    gt = smooth_map(s1) + hot([((4, 4), 3.0)])
    pred = np.abs(smooth_map(s2))
    a_sim, ex, ey, el = match(pred, gt)
    assert -1.0 <= a_sim <= 1.0 + 1e-12
    assert el == math.hypot(ex, ey)
    assert 0 <= ex <= M - 1 and 0 <= ey <= M - 1
