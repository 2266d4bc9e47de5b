import numpy as np
import pytest
import torch

from pinet.models.grid import GRID_SHAPE, GroundTruthGrid
from pinet.models.lane import KeyPoint, LaneInstance
from pinet.services.encoding import cell_of, decode_cell, encode_label, grids_to_tensors
from pinet.utils.errors import GridBoundsError, LabelError
from tests.conftest import make_lane


def test_point_lands_in_cell_with_offsets():
    grid = encode_label([make_lane([(28.0, 4.0), (200.0, 200.0)])])

    assert cell_of(28.0, 4.0) == (0, 3)
    assert grid.exist[0, 3] == 1.0
    assert grid.offset_x[0, 3] == pytest.approx(0.5)
    assert grid.offset_y[0, 3] == pytest.approx(0.5)
    assert grid.instance[0, 3] == 1
    assert grid.n_exist == 2


def test_origin_point_has_zero_offsets():
    grid = encode_label([make_lane([(0.0, 0.0), (200.0, 200.0)])])

    assert grid.exist[0, 0] == 1.0
    assert grid.offset_x[0, 0] == 0.0
    assert grid.offset_y[0, 0] == 0.0


def test_same_lane_points_in_one_cell_are_averaged():
    grid = encode_label([make_lane([(24.0, 8.0), (30.0, 10.0), (200.0, 200.0)])])

    assert grid.offset_x[1, 3] == pytest.approx(0.375)
    assert grid.offset_y[1, 3] == pytest.approx(0.125)
    assert grid.n_exist == 2


def test_collision_between_lanes_keeps_point_nearest_center():
    far = make_lane([(25.0, 9.0), (100.0, 100.0)], 1)
    near = make_lane([(27.0, 11.0), (300.0, 100.0)], 2)

    grid = encode_label([far, near])

    assert grid.instance[1, 3] == 2
    assert grid.offset_x[1, 3] == pytest.approx(27.0 / 8 - 3)


def test_collision_tie_goes_to_first_lane():
    a = make_lane([(26.0, 12.0), (100.0, 100.0)], 1)
    b = make_lane([(30.0, 12.0), (300.0, 100.0)], 2)

    grid = encode_label([a, b])

    assert grid.instance[1, 3] == 1


def test_point_on_far_edge_keeps_offset_below_one():
    edge = float(np.nextafter(512.0, 0.0))
    grid = encode_label([make_lane([(edge, 255.9999), (10.0, 10.0)])])

    assert grid.exist[31, 63] == 1.0
    assert grid.offset_x[31, 63] < 1.0
    assert grid.offset_y[31, 63] < 1.0


def test_empty_frame_gives_empty_grid():
    grid = encode_label([])

    assert grid.n_exist == 0
    assert grid.n_background == GRID_SHAPE[0] * GRID_SHAPE[1]


def test_lane_with_single_point_is_rejected():
    lane = LaneInstance.model_construct(points=[KeyPoint(x=10.0, y=10.0, instance_id=1)])

    with pytest.raises(LabelError):
        encode_label([lane])


def test_point_outside_frame_is_rejected():
    outside = KeyPoint.model_construct(x=600.0, y=10.0, instance_id=1)
    lane = LaneInstance.model_construct(points=[KeyPoint(x=10.0, y=10.0, instance_id=1), outside])

    with pytest.raises(LabelError):
        encode_label([lane])


def test_decode_cell_examples():
    assert decode_cell(0, 3, 0.5, 0.5) == (28.0, 4.0)
    assert decode_cell(31, 63, 0.0, 0.0) == (504.0, 248.0)


@pytest.mark.parametrize("row,col", [(32, 0), (0, 64), (-1, 0)])
def test_decode_cell_out_of_bounds(row, col):
    with pytest.raises(GridBoundsError):
        decode_cell(row, col, 0.0, 0.0)


def test_grid_bounds_error_is_index_error():
    with pytest.raises(IndexError):
        decode_cell(40, 0, 0.0, 0.0)


def test_decode_inverts_encode_for_isolated_points():
    rng = np.random.default_rng(7)
    for _ in range(100):
        xs = rng.uniform(0.0, 512.0, size=2)
        ys = np.array([rng.uniform(0.0, 120.0), rng.uniform(136.0, 256.0)])
        grid = encode_label([LaneInstance.from_xy(xs, ys, 1)])
        for x, y in zip(xs, ys):
            row, col = cell_of(x, y)
            dx, dy = decode_cell(row, col, grid.offset_x[row, col], grid.offset_y[row, col])
            assert abs(dx - x) < 1e-9
            assert abs(dy - y) < 1e-9


def test_grid_rejects_instance_without_exist():
    instance = np.zeros(GRID_SHAPE)
    instance[3, 3] = 1

    with pytest.raises(ValueError):
        GroundTruthGrid(exist=np.zeros(GRID_SHAPE), offset_x=np.zeros(GRID_SHAPE),
                        offset_y=np.zeros(GRID_SHAPE), instance=instance)


def test_grids_to_tensors_stacks_batch():
    grids = [encode_label([make_lane([(28.0, 4.0), (200.0, 200.0)])]), GroundTruthGrid.empty()]

    tensors = grids_to_tensors(grids)

    assert tensors["exist"].shape == (2, 32, 64)
    assert tensors["exist"].dtype == torch.float32
    assert tensors["instance"].dtype == torch.long
    assert tensors["exist"][1].sum() == 0
