import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from universalize.geometry import (
    ParamSpace,
    ball_volume,
    build_grid,
    cell_fraction,
    mc_simplex_volume,
    neighbors,
    scale_point,
    simplex_volume,
    single_point_grid,
)


@pytest.mark.parametrize("k, ell, delta, size", [
    (2, 1, 0.25, 5), (3, 1, 0.5, 6), (2, 2, 0.5, 9), (3, 1, 0.1, 66), (2, 1, 1.0, 2), (4, 1, 0.25, 41),
])
def test_grid_sizes(k, ell, delta, size):
    assert len(build_grid(ParamSpace(k, ell), delta)) == size


def test_grid_points_on_simplex_and_ordered():
    g = build_grid(ParamSpace(3, 2), 0.25)
    np.testing.assert_allclose(g.points.sum(axis=-1), 1.0)
    assert np.all(g.points >= 0)
    flat = [tuple(i) for i in g.index.reshape(len(g), -1)]
    assert flat == sorted(flat)


@given(k=st.integers(2, 5), L=st.integers(1, 12))
def test_cell_fractions_tile_the_simplex(k, L):
    # free coordinates: the simplex block has volume 1/(k-1)! ; each cell has volume delta^(k-1)
    delta = 1.0 / L
    g = build_grid(ParamSpace(k), delta)
    total = g.volume_weights.sum() * delta ** (k - 1)
    assert total == pytest.approx(1 / math.factorial(k - 1), rel=1e-12)
    assert np.all(g.volume_weights > 0) and np.all(g.volume_weights <= 1)


def test_cell_fraction_against_monte_carlo():
    rng = np.random.default_rng(0)
    delta = 0.2
    for idx in ([0, 0], [2, 3], [0, 5], [1, 4], [3, 2], [4, 1]):
        u = rng.random((400_000, 2)) - 0.5
        pts = (np.array(idx) + u) * delta
        inside = np.all(pts >= 0, axis=1) & (pts.sum(axis=1) <= 1)
        assert cell_fraction(np.array([idx]), delta)[0] == pytest.approx(inside.mean(), abs=3e-3)


def test_neighbor_table_symmetric():
    g = build_grid(ParamSpace(3, 2), 0.25)
    T = g.neighbor_table
    for p in range(len(g)):
        for axis in range(T.shape[1] // 2):
            up = T[p, 2 * axis + 1]
            if up >= 0:
                assert T[up, 2 * axis] == p
            down = T[p, 2 * axis]
            if down >= 0:
                assert T[down, 2 * axis + 1] == p


def test_neighbors_off_grid_at_edges():
    g = build_grid(ParamSpace(2), 0.25)
    nb = neighbors(0, g)
    assert len(nb) == 2
    assert not nb[0].in_domain and nb[0].index == (-1,)
    assert nb[1].in_domain and nb[1].position == 1
    assert not neighbors(len(g) - 1, g)[1].in_domain


def test_locate_and_nearest():
    g = build_grid(ParamSpace(3), 0.25)
    p = g.locate([1, 2])
    np.testing.assert_allclose(g.points[p, 0], [0.25, 0.5, 0.25])
    assert g.locate([5, 5]) == -1
    assert g.nearest([0.26, 0.49, 0.25]) == p


def test_single_point_grid():
    g = single_point_grid([0.3, 0.7])
    assert len(g) == 1 and g.log_volume[0] == 0.0
    assert np.all(g.neighbor_table == -1)


def test_volumes():
    assert simplex_volume(2) == pytest.approx(math.sqrt(2))
    assert simplex_volume(3) == pytest.approx(math.sqrt(3) / 2)
    assert ball_volume(3, 1.0) == pytest.approx(math.pi)
    assert ball_volume(2, 0.5) == pytest.approx(1.0)
    for k in (2, 3, 4):
        assert mc_simplex_volume(k, 200_000, seed=1) == pytest.approx(simplex_volume(k), rel=0.03)


def test_weighted_grid_mean_converges():
    # E[(1+w)(1-w/2)] over w ~ U[0,1], oracle by adaptive quadrature
    f = lambda w: (1 + w) * (1 - w / 2)
    oracle, _ = integrate.quad(f, 0, 1)
    errs = []
    for delta in (0.1, 0.05, 0.025):
        g = build_grid(ParamSpace(2), delta)
        wts = g.volume_weights / g.volume_weights.sum()
        errs.append(abs(wts @ f(g.points[:, 0, 1]) - oracle))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-4


def test_weighted_grid_mean_on_triangle():
    # second moment of one coordinate of a uniform point on the 2-simplex: 2 / (k (k + 1))
    g = build_grid(ParamSpace(3), 0.02)
    wts = g.volume_weights / g.volume_weights.sum()
    assert wts @ g.points[:, 0, 0] ** 2 == pytest.approx(1 / 6, abs=2e-4)
    assert wts @ g.points[:, 0, 0] == pytest.approx(1 / 3, abs=1e-4)


def test_scale_point():
    w = np.array([0.1, 0.3, 0.6])
    s, inside = scale_point(w, 0.0)
    np.testing.assert_allclose(s, w) and inside
    s, inside = scale_point(w, -0.5)
    assert inside and np.all(s > 0) and s.sum() == pytest.approx(1)
    _, inside = scale_point(np.array([0.0, 1.0]), 0.2)
    assert not inside
    c, _ = scale_point(np.full(3, 1 / 3), 0.7)
    np.testing.assert_allclose(c, 1 / 3)
    with pytest.raises(ValueError):
        scale_point(w, 1.0)
