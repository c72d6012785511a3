"""Periodic tensor-product cubic Lagrange interpolation of cell-centred rasters."""
from __future__ import annotations

import itertools

import numpy as np

from .fields import Grid


def _cubic_weights(f: np.ndarray) -> np.ndarray:
    """Lagrange weights for nodes -1, 0, 1, 2 at fractional offset f in [0, 1)."""
    return np.stack(
        [
            -f * (f - 1.0) * (f - 2.0) / 6.0,
            (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
            -(f + 1.0) * f * (f - 2.0) / 2.0,
            (f + 1.0) * f * (f - 1.0) / 6.0,
        ]
    )


class CubicInterpolator:
    """Precomputed stencil for evaluating rasters at a fixed set of points.

    ``points`` has shape ``(dim, ...)`` in physical coordinates; anything
    outside the box is wrapped.  A point exactly on a node resolves to that
    node (the stencil base is ``floor``, i.e. the lower index wins a tie).
    """

    def __init__(self, grid: Grid, points: np.ndarray):
        self.grid = grid
        pts = np.asarray(points, dtype=float)
        self.out_shape = pts.shape[1:]
        pts = pts.reshape(grid.dim, -1)
        self.base = []
        self.weights = []
        for a in range(grid.dim):
            s = pts[a] / grid.spacing[a] - 0.5
            i0 = np.floor(s)
            frac = s - i0
            self.base.append(i0.astype(np.int64))
            self.weights.append(_cubic_weights(frac))
        strides = np.cumprod((1,) + grid.n[::-1])[:-1][::-1]
        # per-axis flattened offsets for stencil nodes -1..2
        self._axis_idx = [
            [((self.base[a] + o) % grid.n[a]) * strides[a] for o in (-1, 0, 1, 2)]
            for a in range(grid.dim)
        ]

    def _flat_index(self, nodes) -> np.ndarray:
        """Flat raster index of stencil node ``nodes[a]`` in 0..3 along each axis."""
        idx = self._axis_idx[0][nodes[0]]
        for a in range(1, len(nodes)):
            idx = idx + self._axis_idx[a][nodes[a]]
        return idx

    def __call__(self, values: np.ndarray, monotone: bool = False) -> np.ndarray:
        """Interpolate a raster ``(*n)`` or a stack ``(F, *n)``.

        With ``monotone=True`` each result is clipped to the range of the
        ``2**dim`` cells enclosing the point (quasi-monotone cubic), which
        keeps new extrema from appearing.
        """
        g = self.grid
        single = values.ndim == g.dim
        flat = values.reshape(1 if single else values.shape[0], -1)
        npts = self.base[0].size
        out = np.zeros((flat.shape[0], npts))
        for offsets in itertools.product(range(4), repeat=g.dim):
            w = np.ones(npts)
            for a, o in enumerate(offsets):
                w = w * self.weights[a][o]
            out += flat[:, self._flat_index(offsets)] * w
        if monotone:
            lo = np.full_like(out, np.inf)
            hi = np.full_like(out, -np.inf)
            for offsets in itertools.product((1, 2), repeat=g.dim):
                v = flat[:, self._flat_index(offsets)]
                lo = np.minimum(lo, v)
                hi = np.maximum(hi, v)
            out = np.clip(out, lo, hi)
        shape = self.out_shape if single else (flat.shape[0], *self.out_shape)
        return out.reshape(shape)


def interpolate(values: np.ndarray, grid: Grid, points: np.ndarray, monotone: bool = False) -> np.ndarray:
    return CubicInterpolator(grid, points)(values, monotone)


def wrap(points: np.ndarray, grid: Grid) -> np.ndarray:
    """Map positions ``(dim, ...)`` into the periodic box ``[0, L)``."""
    L = np.asarray(grid.length).reshape(-1, *([1] * (points.ndim - 1)))
    out = np.mod(points, L)
    # mod of a tiny negative number rounds up to L itself
    return np.where(out >= L, 0.0, out)
