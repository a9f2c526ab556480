from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..exceptions import UserException, InternalException
from ..util import trapezoid_weights


# Nodes adjacent to each boundary excluded from comparisons
BULK_MARGIN = 5


class SpatialGrid:
    """Uniform tensor grid on a box in one or two dimensions"""

    def __init__(self, bounds: Sequence[Tuple[float, float]], npts: Sequence[int]):
        bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        npts = [int(n) for n in npts]
        if len(bounds) not in (1, 2) or len(bounds) != len(npts):
            raise UserException(f"A grid needs one (lo, hi) pair and one node count per axis, in 1 or 2 dimensions")
        for (lo, hi), n in zip(bounds, npts):
            if not hi > lo:
                raise UserException(f"Invalid grid axis bounds [{lo}, {hi}]")
            if n < 3:
                raise UserException(f"A grid axis needs at least 3 nodes, got {n}")

        self.bounds = bounds
        self.npts = npts
        self.h = [(hi - lo) / (n - 1) for (lo, hi), n in zip(bounds, npts)]
        self.axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(bounds, npts)]

    @classmethod
    def centered(cls, half_width, npts: int, dim: int = 1) -> "SpatialGrid":
        return cls([(-half_width, half_width)] * dim, [npts] * dim)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.npts)

    def points(self) -> np.ndarray:
        """All nodes as an array of shape (*npts, dim)"""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.axes)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights() * values))

    def bulk_mask(self, margin: int = BULK_MARGIN, region: Optional[Sequence[Tuple[float, float]]] = None) -> np.ndarray:
        """Nodes at least `margin` nodes away from every boundary and, if given, inside `region`"""
        mask = np.zeros(self.shape, dtype=bool)
        mask[tuple(slice(margin, n - margin) for n in self.npts)] = True
        if region is not None:
            pts = self.points()
            for axis, (lo, hi) in enumerate(region):
                mask &= (pts[..., axis] >= lo) & (pts[..., axis] <= hi)
        return mask

    def metadata(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "npts": list(self.npts)}

    def __eq__(self, other):
        return isinstance(other, SpatialGrid) and self.bounds == other.bounds and self.npts == other.npts

    def __repr__(self):
        return f"SpatialGrid(bounds={self.bounds}, npts={self.npts})"


@dataclass
class _Stack:
    grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[: 1 + self.grid.dim] != (len(self.times),) + self.grid.shape:
            raise InternalException(
                f"Stack values of shape {self.values.shape} do not match {len(self.times)} times on {self.grid}"
            )
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise InternalException("Stack times must be increasing")

    def slice_at(self, t: float) -> np.ndarray:
        """Values at time t, linearly interpolated between the stored slices"""
        k, theta = self._bracket(t)
        if theta == 0.0:
            return self.values[k]
        return (1 - theta) * self.values[k] + theta * self.values[k + 1]

    def _bracket(self, t: float) -> Tuple[int, float]:
        times = self.times
        if t <= times[0]:
            return 0, 0.0
        if t >= times[-1]:
            return len(times) - 1, 0.0
        k = int(np.searchsorted(times, t, side="right") - 1)
        theta = (t - times[k]) / (times[k + 1] - times[k])
        return k, float(theta)

    def interpolate(self, points: np.ndarray, t: float) -> np.ndarray:
        """Values at arbitrary points (n, dim) and time t: bilinear in space, linear in time.
        Points outside the grid are clamped to its boundary.
        """
        k, theta = self._bracket(t)
        result = self._interpolate_slice(self.values[k], points)
        if theta != 0.0:
            result = (1 - theta) * result + theta * self._interpolate_slice(self.values[k + 1], points)
        return result

    def _interpolate_slice(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.grid.dim)
        lo = np.array([b[0] for b in self.grid.bounds])
        hi = np.array([b[1] for b in self.grid.bounds])
        points = np.clip(points, lo, hi)
        trailing = values.shape[self.grid.dim :]
        if self.grid.dim == 1:
            x = self.grid.axes[0]
            if not trailing:
                return np.interp(points[:, 0], x, values)
            return np.column_stack([np.interp(points[:, 0], x, values[:, c]) for c in range(trailing[0])])
        interpolator = RegularGridInterpolator(tuple(self.grid.axes), values, method="linear")
        return interpolator(points)


@dataclass
class DensityStack(_Stack):
    """Grid-sampled density ρ(x_j, t_k) together with the inverse temperature it was evolved at"""

    beta: float = 1.0

    def mass(self, k: int) -> float:
        return self.grid.integrate(self.values[k])

    def masses(self) -> np.ndarray:
        weights = self.grid.weights()
        return np.array([np.sum(weights * v) for v in self.values])

    @classmethod
    def from_function(cls, grid: SpatialGrid, times, density, beta: float) -> "DensityStack":
        """Tabulates an analytic density(points, t) on a grid"""
        pts = grid.points()
        values = np.stack([density(pts, t) for t in times])
        return cls(grid, np.asarray(times, dtype=float), values, beta=beta)


@dataclass
class ScalarStack(_Stack):
    """Grid-sampled scalar field u(x_j, t_k). `mask` marks nodes that carry no value"""

    mask: Optional[np.ndarray] = None

    @property
    def masked_fraction(self) -> float:
        if self.mask is None:
            return 0.0
        return float(np.mean(self.mask))


@dataclass
class VectorStack(_Stack):
    """Grid-sampled vector field with values of shape (K+1, *npts, dim)"""

    mask: Optional[np.ndarray] = None
