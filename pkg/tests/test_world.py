import math

import numpy as np
import pytest

from maernav.robot import Pose, footprint_collides
from maernav.world import (
    ScenarioError,
    TaskSpec,
    WorldMap,
    boundary_segments,
    dump_scenario,
    empty_room,
    generate_training_grid,
    grid_map_size,
    load_scenario,
    validate_map,
)

SIMPLE = """\
# a small room
name demo
size 5 4
segment 2.5 1.0 2.5 3.0
start 1.0 2.0 0.0
goal 4.0 2.0
"""


@pytest.fixture(scope="module")
def grid():
    return generate_training_grid()


class TestScenarioFormat:
    def test_load(self):
        m = load_scenario(SIMPLE)
        assert m.name == "demo"
        assert (m.width, m.height) == (5.0, 4.0)
        # boundary added automatically
        assert len(m.segments) == 5
        assert m.start_poses == (Pose(1.0, 2.0, 0.0),)
        assert m.goal_points == ((4.0, 2.0),)

    def test_round_trip(self):
        m = load_scenario(SIMPLE)
        again = load_scenario(dump_scenario(m))
        assert again == m

    def test_round_trip_generated(self, grid):
        m = grid[2][3]
        assert load_scenario(dump_scenario(m)) == m

    def test_segments_read_only(self):
        m = load_scenario(SIMPLE)
        with pytest.raises(ValueError):
            m.segments[0, 0] = 9.0

    @pytest.mark.parametrize(
        "text, line",
        [
            ("size 5 5\nsegment 1 2 3\n", 2),
            ("size 5 5\nbogus 1\n", 2),
            ("size 5 5\n\ngoal x 1\n", 3),
        ],
    )
    def test_malformed_reports_line(self, text, line):
        with pytest.raises(ScenarioError) as exc:
            load_scenario(text)
        assert exc.value.line == line

    def test_missing_size(self):
        with pytest.raises(ScenarioError):
            load_scenario("segment 0 0 1 1\n")

    def test_out_of_bounds(self):
        with pytest.raises(ScenarioError, match="out of bounds"):
            load_scenario("size 5 5\nsegment 1 1 6 1\n")

    def test_start_in_collision(self):
        with pytest.raises(ScenarioError, match="collision"):
            load_scenario("size 5 5\nsegment 1 0 1 5\nstart 1.1 2 0\n")

    def test_goal_on_obstacle(self):
        with pytest.raises(ScenarioError, match="obstacle"):
            load_scenario("size 5 5\nsegment 1 0 1 5\ngoal 1 2\n")

    def test_missing_boundary(self):
        m = WorldMap(5, 5, [(0, 0, 5, 0)])
        with pytest.raises(ScenarioError, match="boundary"):
            validate_map(m)


class TestTrainingGrid:
    def test_shape_and_names(self, grid):
        assert len(grid) == 5 and all(len(r) == 5 for r in grid)
        assert grid[1][4].name == "env_1_4"

    def test_sizes_shrink(self, grid):
        assert grid[0][0].width == 20.0
        assert grid[4][4].width == 8.0
        for r in range(5):
            for c in range(5):
                assert grid[r][c].width == grid_map_size(r, c)

    def test_all_valid(self, grid):
        for row in grid:
            for m in row:
                validate_map(m)
                assert len(m.start_poses) >= 8
                assert len(m.goal_points) >= 8

    def test_deterministic(self, grid):
        assert generate_training_grid()[3][1] == grid[3][1]

    def test_difficulty_grows(self, grid):
        assert len(grid[4][4].segments) > len(grid[0][0].segments)

    def test_slot_goals_are_dead_ends(self, grid):
        # first goal sits in a slot: axis-aligned poses fit, the diagonal does not
        for row in grid:
            for m in row:
                gx, gy = m.goal_points[0]
                assert not footprint_collides(Pose(gx, gy, 0.0), m) and not footprint_collides(Pose(gx, gy, math.pi / 2), m)
                assert footprint_collides(Pose(gx, gy, math.pi / 4), m), m.name


class TestHelpers:
    def test_empty_room_starts_free(self):
        m = empty_room(6.0)
        validate_map(m)
        assert len(m.segments) == 4
        assert not any(footprint_collides(p, m) for p in m.start_poses)

    def test_boundary(self):
        b = boundary_segments(2, 3)
        assert (0.0, 0.0, 2, 0.0) in b and len(b) == 4

    def test_task_steps(self):
        with pytest.raises(ValueError):
            TaskSpec(Pose(0, 0, 0), (1, 1), 0)
        assert TaskSpec(Pose(0, 0, 0), (1, 1)).max_steps == 400

    def test_inequality(self):
        a = empty_room(6.0)
        b = a.with_segments([(1, 1, 2, 2)])
        assert a != b
        assert len(b.segments) == 5
        assert math.isclose(b.width, 6.0)
        assert np.array_equal(b.segments[:4], a.segments)
