"""Domain grid: construction, lookup, metric, adjacency."""

import numpy as np
import pytest

from safebo.grid import DomainGrid


def test_points_inside_unit_box_and_unique():
    grid = DomainGrid((11, 7))
    assert np.all(grid.points >= 0.0) and np.all(grid.points <= 1.0)
    assert len(np.unique(grid.points, axis=0)) == grid.size == 77


def test_coordinates_are_correctly_rounded():
    # i/(n-1) construction: 0.6 must be the nearest double to 6/10 exactly.
    grid = DomainGrid((11,))
    assert grid.points[6, 0] == 0.6
    assert grid.points[3, 0] == 0.3


def test_default_resolutions():
    assert DomainGrid.regular(1).size == 101
    assert DomainGrid.regular(2).size == 31**2
    assert DomainGrid.regular(3).size == 15**3


def test_index_roundtrip():
    grid = DomainGrid((5, 9, 3))
    rng = np.random.default_rng(0)
    for i in rng.integers(grid.size, size=20):
        assert grid.index_of(grid.points[i]) == i


def test_index_of_off_grid_raises():
    grid = DomainGrid((11,))
    with pytest.raises(ValueError):
        grid.index_of(np.array([0.55]))
    with pytest.raises(ValueError):
        grid.index_of(np.array([1.2]))


def test_distances_match_norm():
    grid = DomainGrid((7, 7))
    p = grid.points[13]
    d = grid.distances_from(p)
    # bitwise equal to the defining formula; np.linalg.norm may differ by 1 ulp
    # (BLAS nrm2 rescales internally)
    formula = np.array([np.sqrt(np.sum((q - p) ** 2)) for q in grid.points])
    np.testing.assert_array_equal(d, formula)
    np.testing.assert_allclose(d, [np.linalg.norm(q - p) for q in grid.points], rtol=1e-14)
    assert d[13] == 0.0


def test_axis_neighbor_pairs_counts():
    grid = DomainGrid((4, 5))
    pairs = grid.axis_neighbor_pairs()
    # 3*5 pairs along axis 0 plus 4*4 along axis 1
    assert pairs.shape == (31, 2)
    steps = np.linalg.norm(grid.points[pairs[:, 0]] - grid.points[pairs[:, 1]], axis=1)
    assert np.allclose(np.sort(np.unique(np.round(steps, 12))), [1 / 4, 1 / 3])
