import numpy as np
import pytest

from pinet.services.metrics import (
    CulaneFrame,
    TusimpleFrame,
    ablation_gap,
    culane_frame_counts,
    culane_score,
    format_report,
    lane_iou,
    map_frames,
    pair_frames,
    rasterize_lane,
    read_culane_categories,
    read_culane_frames,
    read_tusimple_frames,
    tusimple_frame_counts,
    tusimple_score,
    write_report,
)
from pinet.utils.errors import FrameSetMismatch, MetricInputError

H_SAMPLES = [160.0 + 10 * i for i in range(10)]
SMALL = (100, 100)


def _frame(lanes, name="a.jpg", h_samples=H_SAMPLES):
    return TusimpleFrame(raw_file=name, h_samples=list(h_samples), lanes=[list(map(float, lane)) for lane in lanes])


def _gt_lanes():
    return [[100 + 10 * i + 200 * k for i in range(10)] for k in range(4)]


def _brute_force_counts(pred, gt, threshold=20.0, ratio=0.85):
    correct = matched = n_gt = 0
    for g in gt.lanes:
        valid = [i for i, x in enumerate(g) if x >= 0]
        if not valid:
            continue
        n_gt += 1
        best = 0
        for p in pred.lanes:
            best = max(best, sum(1 for i in valid if p[i] >= 0 and abs(p[i] - g[i]) < threshold))
        correct += best
        if best / len(valid) >= ratio:
            matched += 1
    total_points = sum(1 for g in gt.lanes for x in g if x >= 0)
    return correct, total_points, matched, max(len(pred.lanes) - matched, 0), n_gt - matched


def test_perfect_predictions():
    gt = _frame(_gt_lanes())

    report = tusimple_score([gt], [gt])

    assert report.accuracy == 1.0
    assert report.fp_rate == 0.0
    assert report.fn_rate == 0.0
    assert report.f1 == 1.0


def test_no_predictions():
    report = tusimple_score([_frame([])], [_frame(_gt_lanes())])

    assert report.accuracy == 0.0
    assert report.fn_rate == 1.0
    assert report.fp_rate == 0.0
    assert report.fn == 4


def test_lane_off_at_two_points():
    gt_lane = [300.0] * 10
    pred_lane = list(gt_lane)
    pred_lane[3] += 25
    pred_lane[7] += 25

    report = tusimple_score([_frame([pred_lane])], [_frame([gt_lane])])

    assert report.correct_points == 8
    assert report.accuracy == pytest.approx(0.8)
    assert report.fp_rate == 1.0
    assert report.fn_rate == 1.0


def test_extra_prediction_counts_as_false_positive():
    gt = _gt_lanes()

    report = tusimple_score([_frame(gt + [[5.0] * 10])], [_frame(gt)])

    assert report.accuracy == 1.0
    assert report.fp == 1
    assert report.fp_rate == pytest.approx(0.2)
    assert report.precision == pytest.approx(0.8)


def test_missing_points_are_not_counted():
    gt_lane = [-2.0, -2.0] + [300.0] * 8

    counts = tusimple_frame_counts(_frame([gt_lane]), _frame([gt_lane]))

    assert counts.gt_points == 8
    assert counts.correct == 8


def test_angle_adjusted_threshold():
    gt_lane = [100.0 + y for y in H_SAMPLES]
    pred_lane = [x + 25.0 for x in gt_lane]

    plain = tusimple_score([_frame([pred_lane])], [_frame([gt_lane])])
    adjusted = tusimple_score([_frame([pred_lane])], [_frame([gt_lane])], angle_adjusted=True)

    assert plain.accuracy == 0.0
    assert adjusted.accuracy == 1.0


def test_h_samples_mismatch():
    with pytest.raises(MetricInputError):
        tusimple_score([_frame([], h_samples=H_SAMPLES[:5])], [_frame([[1.0] * 10])])


def test_frame_count_mismatch():
    with pytest.raises(MetricInputError):
        tusimple_score([], [_frame([])])


@pytest.mark.parametrize("seed", range(100))
def test_counts_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    gt_lanes = []
    for _ in range(int(rng.integers(0, 5))):
        lane = rng.uniform(0, 1280, size=10)
        lane[rng.random(10) < 0.2] = -2
        gt_lanes.append(lane.tolist())
    pred_lanes = []
    for lane in gt_lanes:
        if rng.random() < 0.8:
            noisy = np.asarray(lane) + rng.normal(0, 12, size=10)
            noisy[np.asarray(lane) < 0] = -2
            pred_lanes.append(noisy.tolist())
    for _ in range(int(rng.integers(0, 2))):
        pred_lanes.append(rng.uniform(0, 1280, size=10).tolist())
    pred, gt = _frame(pred_lanes), _frame(gt_lanes)

    counts = tusimple_frame_counts(pred, gt)

    correct, total, matched, wrong, missed = _brute_force_counts(pred, gt)
    assert (counts.correct, counts.gt_points, counts.matched, counts.wrong, counts.missed) == (
        correct, total, matched, wrong, missed,
    )


def test_parallel_workers_give_same_report():
    rng = np.random.default_rng(5)
    gts = [_frame([rng.uniform(0, 1280, 10).tolist()], name=f"{i}.jpg") for i in range(8)]
    preds = [_frame([(np.asarray(g.lanes[0]) + rng.normal(0, 15, 10)).tolist()], name=g.raw_file) for g in gts]

    assert tusimple_score(preds, gts, workers=3) == tusimple_score(preds, gts)


def test_map_frames_preserves_order():
    assert map_frames(lambda x: x * 2, list(range(20)), workers=4) == [x * 2 for x in range(20)]


def _vertical(x, top=-50.0, bottom=150.0):
    return np.array([[x, top], [x, bottom]])


def _brute_force_iou(a, b, shape, width):
    def covered(points, px, py):
        radius2 = (width / 2.0) ** 2
        for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
            dx, dy = x1 - x0, y1 - y0
            length2 = dx * dx + dy * dy
            t = 0.0 if length2 == 0 else min(max(((px - x0) * dx + (py - y0) * dy) / length2, 0.0), 1.0)
            if (px - x0 - t * dx) ** 2 + (py - y0 - t * dy) ** 2 <= radius2:
                return True
        return False

    inter = union = 0
    for i in range(shape[0]):
        for j in range(shape[1]):
            in_a = covered(a, j + 0.5, i + 0.5)
            in_b = covered(b, j + 0.5, i + 0.5)
            inter += in_a and in_b
            union += in_a or in_b
    return inter / union if union else 0.0


def test_identical_lanes_have_full_iou():
    lane = np.array([[10.0, 90.0], [40.0, 50.0], [60.0, 5.0]])

    assert lane_iou(lane, lane, SMALL) == 1.0


def test_parallel_lines_thirty_apart_do_not_overlap():
    assert lane_iou(_vertical(50.0), _vertical(80.0), SMALL) == 0.0


def test_parallel_lines_ten_apart_have_half_iou():
    iou = lane_iou(_vertical(50.0), _vertical(60.0), SMALL)

    assert iou == pytest.approx(0.5, abs=0.01)
    assert iou == pytest.approx(_brute_force_iou(_vertical(50.0), _vertical(60.0), SMALL, 30))


@pytest.mark.parametrize("seed", range(30))
def test_iou_matches_pixel_oracle(seed):
    rng = np.random.default_rng(seed)
    shape = (40, 40)
    a = rng.uniform(0, 40, size=(int(rng.integers(2, 5)), 2))
    b = a + rng.normal(0, 3, size=a.shape)

    assert lane_iou(a, b, shape, width=6) == pytest.approx(_brute_force_iou(a, b, shape, 6), abs=0.01)


def test_rasterized_lane_width():
    mask = rasterize_lane(_vertical(50.0), SMALL)

    assert mask[50].sum() == 30


def _culane(lanes, name="f", category=None):
    return CulaneFrame(name=name, lanes=[np.asarray(l, dtype=float) for l in lanes], category=category)


def test_culane_identical_frames():
    lanes = [_vertical(20.0), _vertical(70.0)]

    counts = culane_frame_counts(_culane(lanes), _culane(lanes), shape=SMALL)

    assert (counts.tp, counts.fp, counts.fn) == (2, 0, 0)


def test_culane_swap_exchanges_precision_and_recall():
    gts = [_culane([_vertical(20.0), _vertical(70.0)])]
    preds = [_culane([_vertical(21.0)])]

    forward = culane_score(preds, gts, shape=SMALL)
    backward = culane_score(gts, preds, shape=SMALL)

    assert (forward.precision, forward.recall) == (1.0, 0.5)
    assert (backward.precision, backward.recall) == (forward.recall, forward.precision)
    assert forward.f1 == pytest.approx(2 / 3)


def test_culane_empty_predictions():
    report = culane_score([_culane([])], [_culane([_vertical(20.0)])], shape=SMALL)

    assert report.recall == 0.0
    assert report.f1 == 0.0
    assert report.fn == 1


def test_culane_empty_ground_truth():
    report = culane_score([_culane([_vertical(20.0)])], [_culane([])], shape=SMALL)

    assert report.precision == 0.0
    assert report.fp == 1


def test_culane_short_lanes_are_skipped():
    report = culane_score([_culane([[[5.0, 5.0]], _vertical(20.0)])], [_culane([_vertical(20.0)])], shape=SMALL)

    assert report.skipped_lanes == 1
    assert report.tp == 1
    assert report.fp == 0


def test_culane_categories_are_reported():
    gts = [
        _culane([_vertical(20.0)], "a", "Normal"),
        _culane([_vertical(20.0)], "b", "Night"),
        _culane([], "c", "Crossroad"),
    ]
    preds = [_culane([_vertical(20.0)], "a"), _culane([], "b"), _culane([_vertical(50.0)], "c")]

    report = culane_score(preds, gts, shape=SMALL)

    assert list(report.categories) == ["Crossroad", "Night", "Normal"]
    assert report.categories["Normal"].f1 == 1.0
    assert report.categories["Night"].fn == 1
    assert report.categories["Crossroad"].fp == 1
    table = format_report(report)
    assert "Crossroad" in table
    assert table.splitlines()[-1].startswith("Total")


def test_ablation_gap():
    assert ablation_gap([0.96, 0.95], [0.90, 0.89]) == pytest.approx(0.06)
    assert ablation_gap([0.9], [0.8]) == pytest.approx(0.1)
    with pytest.raises(MetricInputError):
        ablation_gap([0.9, 0.8], [0.8])
    with pytest.raises(MetricInputError):
        ablation_gap([], [])


def test_pair_frames_reports_missing_names():
    with pytest.raises(FrameSetMismatch) as exc:
        pair_frames({"a": 1, "b": 2}, {"b": 2, "c": 3})

    assert exc.value.missing == ["a", "c"]


def test_pair_frames_aligns_by_name():
    preds, gts = pair_frames({"b": "pb", "a": "pa"}, {"a": "ga", "b": "gb"})

    assert preds == ["pa", "pb"]
    assert gts == ["ga", "gb"]


def test_read_tusimple_frames(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "pred.json").write_text(
        '{"raw_file": "x.jpg", "h_samples": [1, 2], "lanes": [[3, -2]]}\n\n'
    )

    frames = read_tusimple_frames(tmp_path)

    assert frames["x.jpg"].lanes == [[3.0, -2.0]]


def test_read_tusimple_frames_rejects_bad_records(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"raw_file": "x.jpg"}\n')

    with pytest.raises(MetricInputError):
        read_tusimple_frames(bad)


def test_culane_directory_with_categories(tmp_path):
    (tmp_path / "driver_1").mkdir()
    (tmp_path / "driver_1" / "00000.lines.txt").write_text("10 20 30 40\n")
    split = tmp_path / "list" / "test_split"
    split.mkdir(parents=True)
    (split / "test0_normal.txt").write_text("/driver_1/00000.jpg\n")
    (split / "test8_cross.txt").write_text("")

    frames = read_culane_frames(tmp_path)
    categories = read_culane_categories(tmp_path)

    assert list(frames) == ["driver_1/00000"]
    assert frames["driver_1/00000"].lanes[0] == pytest.approx(np.array([[10.0, 20.0], [30.0, 40.0]]))
    assert categories == {"driver_1/00000": "Normal"}


def test_write_report(tmp_path):
    gt = _frame(_gt_lanes())
    report = tusimple_score([gt], [gt])

    path = write_report(tmp_path / "out" / "eval_report.txt", report)

    assert "100.00%" in path.read_text()
    assert path.with_suffix(".json").is_file()
