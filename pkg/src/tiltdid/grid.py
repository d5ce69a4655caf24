"""Shared quadrature grid over the dose support (0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter


@dataclass(frozen=True)
class DoseGrid:
    """Uniform quadrature grid on (0, 1].

    Nodes sit at cell midpoints d_m = (m - 1/2)/M so the first and last
    node stay strictly inside (0, 1]; the cell weights sum to exactly 1,
    the length of the dose support.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if pts.ndim != 1 or pts.shape != wts.shape or pts.size < 2:
            raise InvalidParameter("grid needs matching 1-d points and weights, size >= 2")
        if pts[0] <= 0.0 or pts[-1] > 1.0 or np.any(np.diff(pts) <= 0):
            raise InvalidParameter("grid points must be strictly increasing within (0, 1]")
        pts.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def uniform(cls, size: int = 101) -> "DoseGrid":
        if size < 2:
            raise InvalidParameter(f"grid size must be >= 2, got {size}")
        m = np.arange(1, size + 1)
        points = (m - 0.5) / size
        weights = np.full(size, 1.0 / size)
        return cls(points=points, weights=weights)

    @property
    def size(self) -> int:
        return self.points.size

    def integrate(self, values: np.ndarray):
        """Quadrature of ``values`` sampled at the grid nodes.

        ``values`` may be (M,) or (n, M); returns a scalar or (n,).
        """
        values = np.asarray(values, dtype=float)
        return values @ self.weights

    def interp_at(self, rows: np.ndarray, doses: np.ndarray) -> np.ndarray:
        """Row-wise linear interpolation of grid curves at arbitrary doses.

        ``rows`` is (n, M) with one curve per unit, ``doses`` is (n,).
        Doses beyond the first/last node clamp to the boundary node value.
        """
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        doses = np.asarray(doses, dtype=float)
        pts = self.points
        idx = np.clip(np.searchsorted(pts, doses) - 1, 0, pts.size - 2)
        left = pts[idx]
        right = pts[idx + 1]
        frac = np.clip((doses - left) / (right - left), 0.0, 1.0)
        take = np.arange(rows.shape[0])
        return rows[take, idx] * (1.0 - frac) + rows[take, idx + 1] * frac


def integrate_over_dose(grid: DoseGrid, values: np.ndarray):
    """Integrate ``values`` over the dose support using the grid weights."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidParameter("cannot integrate non-finite values")
    return grid.integrate(values)
