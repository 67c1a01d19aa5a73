import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multires_ipp.field import LabelGrid, Rect
from multires_ipp.metrics import UNOBSERVED, FusedMap, MetricsError, fuse, miou, vegetation_ratio


def brute_iou(pred, gt):
    out = []
    for c in range(3):
        inter = union = 0
        for p, g in zip(pred.ravel().tolist(), gt.ravel().tolist()):
            inter += (p == c) and (g == c)
            union += (p == c) or (g == c)
        out.append(None if union == 0 else inter / union)
    return out


def test_vegetation_ratio_examples():
    assert vegetation_ratio(np.zeros((3, 3), np.uint8)) == 0.0
    assert vegetation_ratio(np.array([[1, 2], [0, 0]])) == 0.5
    with pytest.raises(MetricsError):
        vegetation_ratio(np.zeros((0, 3), np.uint8))


def test_miou_examples():
    g = np.array([[0, 1], [2, 0]])
    s = miou(g, g)
    assert s.iou == (1.0, 1.0, 1.0) and s.miou == 1.0
    s = miou(np.zeros((2, 2)), np.ones((2, 2)))
    assert s.iou[:2] == (0.0, 0.0) and s.miou == 0.0
    s = miou(np.array([0, 0, 1, 2]), np.array([0, 1, 1, 2]))
    assert s.iou == pytest.approx((0.5, 0.5, 1.0))
    assert s.miou == pytest.approx(2 / 3)


def test_absent_class_excluded():
    s = miou(np.array([0, 0, 1]), np.array([0, 1, 1]))
    assert s.miou == pytest.approx((0.5 + 0.5) / 2)


def test_shape_mismatch():
    with pytest.raises(MetricsError):
        miou(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_metrics_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    pred = rng.integers(0, 3, (64, 64))
    gt = rng.integers(0, 3, (64, 64))
    expected = brute_iou(pred, gt)
    s = miou(pred, gt)
    for c in range(3):
        assert s.iou[c] == expected[c]
    assert s.miou == np.mean([e for e in expected if e is not None])
    count = sum(v in (1, 2) for v in pred.ravel().tolist())
    assert vegetation_ratio(pred) == count / pred.size


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_iou_symmetry_and_permutation(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 3, (10, 10))
    b = rng.integers(0, 3, (10, 10))
    assert miou(a, b).iou == miou(b, a).iou
    perm = rng.permutation(a.size)
    assert vegetation_ratio(a.ravel()[perm]) == vegetation_ratio(a)
    assert miou(a, a).miou == 1.0


def test_unobserved_counts_as_wrong():
    gt = np.array([[0, 1], [1, 2]])
    pred = np.array([[0, 1], [UNOBSERVED, 2]])
    s = miou(pred, gt)
    assert s.iou == pytest.approx((1.0, 0.5, 1.0))


# -- fusion -------------------------------------------------------------------

def _seg(value, shape, res=0.01):
    return LabelGrid(np.full(shape, value, np.uint8), res)


def test_fuse_coarse_then_fine_and_back():
    fp = Rect(0, 0, 0.1, 0.1)
    m = FusedMap((10, 10), 0.01)
    fuse(m, _seg(0, (10, 10)), 0.03, fp)
    fuse(m, _seg(2, (10, 10)), 0.01, fp)
    assert (m.labels == 2).all() and (m.provenance == 0.01).all()
    fuse(m, _seg(1, (10, 10)), 0.03, fp)
    assert (m.labels == 2).all()
    fuse(m, _seg(1, (10, 10)), 0.01, fp)  # equal gsd: first write wins
    assert (m.labels == 2).all()


def test_fuse_misaligned_raises():
    m = FusedMap((10, 10), 0.01)
    with pytest.raises(MetricsError):
        m.fuse(_seg(1, (3, 3)), 0.02, Rect(0, 0, 0.05, 0.05))
    with pytest.raises(MetricsError):
        m.fuse(_seg(1, (5, 5), res=0.02), 0.02, Rect(0, 0, 0.1, 0.1))


def _random_fuses(rng, n, shape):
    h, w = shape
    out = []
    for _ in range(n):
        r0, c0 = rng.integers(0, h - 1), rng.integers(0, w - 1)
        r1, c1 = rng.integers(r0 + 1, h + 1), rng.integers(c0 + 1, w + 1)
        gsd = float(rng.choice([0.01, 0.02, 0.03]))
        cells = rng.integers(0, 3, (r1 - r0, c1 - c0)).astype(np.uint8)
        # rows count from the north edge
        fp = Rect(c0 * 0.01, (h - r1) * 0.01, c1 * 0.01, (h - r0) * 0.01)
        out.append((LabelGrid(cells, 0.01, (fp.x0, fp.y0)), gsd, fp, (r0, r1, c0, c1)))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fusion_matches_min_gsd_replay(seed):
    rng = np.random.default_rng(seed)
    shape = (12, 15)
    ops = _random_fuses(rng, 8, shape)
    m = FusedMap(shape, 0.01)
    for seg, gsd, fp, _ in ops:
        m.fuse(seg, gsd, fp)
    # brute force: for every cell, the first write among the minimum-gsd observations
    for r in range(shape[0]):
        for c in range(shape[1]):
            best, label = np.inf, UNOBSERVED
            for seg, gsd, _, (r0, r1, c0, c1) in ops:
                if r0 <= r < r1 and c0 <= c < c1 and gsd < best:
                    best, label = gsd, seg.cells[r - r0, c - c0]
            assert m.labels[r, c] == label
            assert m.provenance[r, c] == best


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fusion_commutes_for_distinct_gsds(seed):
    rng = np.random.default_rng(seed)
    shape = (10, 10)
    ops = _random_fuses(rng, 3, shape)
    ops = [(s, g, f, i) for (s, _, f, i), g in zip(ops, (0.01, 0.02, 0.03))]
    a, b = FusedMap(shape, 0.01), FusedMap(shape, 0.01)
    for seg, gsd, fp, _ in ops:
        a.fuse(seg, gsd, fp)
    for seg, gsd, fp, _ in reversed(ops):
        b.fuse(seg, gsd, fp)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_fully_observed_and_stats():
    gt = LabelGrid(np.array([[0, 1], [2, 0]], np.uint8), 0.01)
    m = FusedMap.like(gt)
    assert not m.fully_observed
    m.fuse(gt, 0.01, gt.extent)
    assert m.fully_observed
    assert m.stats(gt).miou == 1.0
