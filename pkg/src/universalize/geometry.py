"""Geometry of the parameter space ``W_k^ell``: volumes, grids, neighbours, scaling.

Grids live in the free-coordinate frame of each simplex block: the first
``k - 1`` entries, with the last one implied. Cube centres sit at integer
multiples of the spacing ``delta``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ParamSpace:
    k: int
    ell: int = 1

    def __post_init__(self):
        if self.k < 2 or self.ell < 1:
            raise ValueError("need k >= 2 and ell >= 1")

    @property
    def dim(self) -> int:
        """Number of free coordinates, ``(k - 1) * ell``."""
        return (self.k - 1) * self.ell

    @property
    def diameter(self) -> float:
        return math.sqrt(2 * self.ell)

    @property
    def center(self) -> np.ndarray:
        return np.full((self.ell, self.k), 1.0 / self.k)


def simplex_volume(k: int) -> float:
    """``(k-1)``-dimensional volume of the standard simplex in R^k: ``sqrt(k) / (k-1)!``."""
    if k < 2:
        raise ValueError("k must be >= 2")
    return math.sqrt(k) / math.factorial(k - 1)


def ball_volume(k: int, rho: float) -> float:
    """Volume of a ``(k-1)``-ball of radius ``rho``."""
    if k < 2 or rho <= 0:
        raise ValueError("need k >= 2 and rho > 0")
    d = k - 1
    return math.pi ** (d / 2) * rho ** d / math.gamma(d / 2 + 1)


def mc_simplex_volume(k: int, n_samples: int = 10**6, seed: int = 0) -> float:
    """Monte Carlo simplex volume: hit rate in the free-coordinate unit box times the ``sqrt(k)`` Jacobian."""
    rng = np.random.default_rng(seed)
    u = rng.random((n_samples, k - 1))
    hits = np.count_nonzero(u.sum(axis=1) <= 1.0)
    return math.sqrt(k) * hits / n_samples


def _box_under_plane(lengths: np.ndarray, budget: np.ndarray) -> np.ndarray:
    """Volume of ``{y in prod [0, c_j] : sum y <= u}`` by inclusion-exclusion, row-wise."""
    n, d = lengths.shape
    total = np.zeros(n)
    for r in range(d + 1):
        for J in itertools.combinations(range(d), r):
            s = budget - lengths[:, list(J)].sum(axis=1)
            total += (-1) ** r * np.clip(s, 0.0, None) ** d
    return np.clip(total / math.factorial(d), 0.0, None)


def cell_fraction(index: np.ndarray, delta: float) -> np.ndarray:
    """Fraction of each grid cube that lies inside the simplex block.

    ``index`` is ``(n, d)`` integer free coordinates; cubes are
    ``[i*delta - delta/2, i*delta + delta/2]`` per axis.
    """
    index = np.asarray(index, dtype=float)
    n, d = index.shape
    if d == 0:
        return np.ones(n)
    half = 0.5
    lo = np.clip(index - half, 0.0, None)           # in units of delta
    hi = index + half
    lengths = hi - lo
    budget = 1.0 / delta - lo.sum(axis=1)
    full = hi.sum(axis=1) <= 1.0 / delta
    out = np.prod(lengths, axis=1)
    part = ~full
    if np.any(part):
        out[part] = _box_under_plane(lengths[part], budget[part])
    return out


def _block_indices(d: int, delta: float) -> np.ndarray:
    """Free-coordinate index vectors of the cubes with positive-volume overlap, lexicographic."""
    if d == 0:
        return np.zeros((1, 0), dtype=np.int64)
    # candidates with sum(i*delta - delta/2) < 1; cells clipped at zero are filtered by volume later
    limit = 1.0 / delta + d / 2.0
    top = int(math.floor(limit + 1e-9))
    cols = [np.arange(top + 1)]
    out = np.zeros((1, 0), dtype=np.int64)
    for _ in range(d):
        rep = np.repeat(out, len(cols[0]), axis=0)
        new = np.tile(cols[0], len(out))[:, None]
        out = np.hstack([rep, new])
        out = out[out.sum(axis=1) < limit - 1e-9]
    return out


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Discretization of ``W_k^ell`` into cubes of side ``delta`` in free coordinates.

    Attributes
    ----------
    index : (G, ell, k-1) int array of free-coordinate multiples of delta
    points : (G, ell, k) parameter points (centres, clamped onto the simplex)
    log_volume : (G,) log of the fraction of each cube inside the space
    neighbor_table : (G, 2 (k-1) ell) neighbour grid indices, -1 when off-grid
    """

    space: ParamSpace
    delta: float
    index: np.ndarray
    points: np.ndarray
    log_volume: np.ndarray
    neighbor_table: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.points)

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def volume_weights(self) -> np.ndarray:
        return np.exp(self.log_volume)

    def locate(self, index) -> int:
        """Grid position of a free-coordinate index array, or -1."""
        idx = np.asarray(index, dtype=np.int64).reshape(1, -1)
        code = _encode(idx, self._base)
        pos = np.searchsorted(self._codes_sorted, code)
        if pos[0] < len(self._codes_sorted) and self._codes_sorted[pos[0]] == code[0]:
            return int(self._order[pos[0]])
        return -1

    def nearest(self, w) -> int:
        """Grid position whose point is closest to ``w`` (Euclidean)."""
        w = np.asarray(w, dtype=float).reshape(self.space.ell, self.space.k)
        d2 = ((self.points - w) ** 2).sum(axis=(1, 2))
        return int(np.argmin(d2))


def _encode(flat_index: np.ndarray, base: int) -> np.ndarray:
    # shift by 1 so that -1 (one step off the low edge) stays representable
    code = np.zeros(len(flat_index), dtype=np.int64)
    for col in range(flat_index.shape[1]):
        code = code * base + (flat_index[:, col] + 1)
    return code


def build_grid(space: ParamSpace, delta: float) -> GridSpec:
    """Enumerate cube centres intersecting the parameter space, in lexicographic order.

    Centres whose free coordinates sum past 1 are scaled back onto the simplex
    face; the cube-volume fraction keeps the quadrature weights exact.
    """
    if not (0 < delta <= 1):
        raise ValueError("grid spacing must lie in (0, 1]")
    d = space.k - 1
    block = _block_indices(d, delta)
    frac = cell_fraction(block, delta)
    keep = frac > 0
    block, frac = block[keep], frac[keep]
    nb = len(block)
    free = block * delta
    s = free.sum(axis=1, keepdims=True)
    free = np.where(s > 1.0, free / np.where(s > 0, s, 1.0), free)
    pts_block = np.hstack([free, np.clip(1.0 - free.sum(axis=1, keepdims=True), 0.0, None)])

    combos = np.array(list(itertools.product(range(nb), repeat=space.ell)), dtype=np.int64)
    index = block[combos]                       # (G, ell, d)
    points = pts_block[combos]                  # (G, ell, k)
    log_volume = np.log(frac[combos]).sum(axis=1)

    G = len(combos)
    flat = index.reshape(G, -1)
    base = int(flat.max(initial=0)) + 3
    codes = _encode(flat, base)
    order = np.argsort(codes, kind="stable")
    codes_sorted = codes[order]
    D = flat.shape[1]
    table = np.full((G, 2 * D), -1, dtype=np.int64)
    for axis in range(D):
        for sgn, slot in ((-1, 2 * axis), (1, 2 * axis + 1)):
            moved = flat.copy()
            moved[:, axis] += sgn
            c = _encode(moved, base)
            pos = np.clip(np.searchsorted(codes_sorted, c), 0, G - 1)
            hit = codes_sorted[pos] == c
            table[hit, slot] = order[pos[hit]]
    grid = GridSpec(space, float(delta), index, points, log_volume, table)
    object.__setattr__(grid, "_base", base)
    object.__setattr__(grid, "_codes_sorted", codes_sorted)
    object.__setattr__(grid, "_order", order)
    return grid


def single_point_grid(w) -> GridSpec:
    """Degenerate one-point grid at ``w`` (no neighbours, unit weight)."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w[None]
    space = ParamSpace(w.shape[1], w.shape[0])
    table = np.full((1, 2 * space.dim), -1, dtype=np.int64)
    grid = GridSpec(space, 1.0, np.zeros((1, space.ell, space.k - 1), dtype=np.int64), w[None].copy(),
                    np.zeros(1), table)
    object.__setattr__(grid, "_base", 3)
    object.__setattr__(grid, "_codes_sorted", _encode(np.zeros((1, space.dim), dtype=np.int64), 3))
    object.__setattr__(grid, "_order", np.zeros(1, dtype=np.int64))
    return grid


@dataclass(frozen=True)
class Neighbor:
    position: int            # grid index, -1 when off-grid
    index: tuple             # free-coordinate multi-index (flattened over blocks)
    in_domain: bool


def neighbors(p: int, grid: GridSpec) -> list[Neighbor]:
    """The ``2 (k-1) ell`` axis-adjacent slots of grid point ``p`` (two per free axis)."""
    flat = grid.index[p].reshape(-1)
    out = []
    for axis in range(len(flat)):
        for sgn, slot in ((-1, 2 * axis), (1, 2 * axis + 1)):
            idx = flat.copy()
            idx[axis] += sgn
            pos = int(grid.neighbor_table[p, slot])
            out.append(Neighbor(pos, tuple(int(i) for i in idx), pos >= 0))
    return out


def scale_point(w, chi: float):
    """Scale ``w`` about the simplex centre by ``1 + chi`` (blockwise).

    Returns ``(scaled, inside)`` where ``inside`` says whether the result is
    still in the parameter space (it may leave it when ``chi > 0``).
    """
    if not (-1 < chi < 1):
        raise ValueError("chi must lie in (-1, 1)")
    w = np.asarray(w, dtype=float)
    center = 1.0 / w.shape[-1]
    out = (1.0 + chi) * (w - center) + center
    inside = bool(np.all(out >= -1e-15))
    return out, inside
