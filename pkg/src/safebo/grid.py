"""Finite rectangular grids over the normalized domain [0, 1]^d.

The optimizers in this package operate on a finite grid, so grid points are
the unit of querying. Coordinates are built as ``i / (resolution - 1)`` per
axis, which yields correctly rounded doubles (``numpy.linspace`` does not),
so boundary cases in the Lipschitz-cone inequalities behave exactly.
"""

from __future__ import annotations

import numpy as np

__all__ = ["DomainGrid", "DEFAULT_RESOLUTIONS"]

# Defaults keep the O(|grid|^2 q) expander scan at desk scale.
DEFAULT_RESOLUTIONS = {1: 101, 2: 31, 3: 15}


class DomainGrid:
    """Flat list of unique grid points in [0, 1]^d with Euclidean metric."""

    def __init__(self, resolutions: tuple[int, ...]):
        if len(resolutions) == 0:
            raise ValueError("grid needs at least one dimension")
        if any(r < 2 for r in resolutions):
            raise ValueError("grid resolution must be >= 2 per dimension")
        self.resolutions = tuple(int(r) for r in resolutions)
        axes = [np.arange(r, dtype=float) / (r - 1) for r in self.resolutions]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=-1)
        self.points.setflags(write=False)

    @classmethod
    def regular(cls, dim: int, resolution: int | None = None) -> "DomainGrid":
        """Grid with the package default resolution for the dimension."""
        if resolution is None:
            if dim not in DEFAULT_RESOLUTIONS:
                raise ValueError(f"no default resolution for dimension {dim}")
            resolution = DEFAULT_RESOLUTIONS[dim]
        return cls((resolution,) * dim)

    @property
    def dim(self) -> int:
        return len(self.resolutions)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def index_of(self, point: np.ndarray, tol: float = 1e-9) -> int:
        """Flat index of a grid point; raises if ``point`` is not on the grid."""
        point = np.asarray(point, dtype=float).reshape(-1)
        if point.shape[0] != self.dim:
            raise ValueError("point dimension does not match grid dimension")
        flat = 0
        for coord, r in zip(point, self.resolutions):
            i = int(round(coord * (r - 1)))
            if i < 0 or i >= r or abs(coord - i / (r - 1)) > tol:
                raise ValueError(f"point {point} is not on the grid")
            flat = flat * r + i
        return flat

    def distances_from(self, point: np.ndarray) -> np.ndarray:
        """Euclidean distance from one point to every grid point.

        Uses |a - b| directly in one dimension so that exact boundary hits in
        the safety inequalities are not perturbed by a sqrt round trip.
        """
        point = np.asarray(point, dtype=float).reshape(-1)
        if self.dim == 1:
            return np.abs(self.points[:, 0] - point[0])
        diff = self.points - point
        return np.sqrt(np.sum(diff * diff, axis=1))

    def cross_distances(self, indices_a: np.ndarray, indices_b: np.ndarray) -> np.ndarray:
        """(len(a), len(b)) distance matrix between two index subsets."""
        a = self.points[indices_a]
        b = self.points[indices_b]
        if self.dim == 1:
            return np.abs(a[:, :1] - b[:, 0][None, :])
        diff = a[:, None, :] - b[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def axis_neighbor_pairs(self) -> np.ndarray:
        """(m, 2) flat-index pairs of grid points adjacent along one axis."""
        shape = self.resolutions
        idx = np.arange(self.size).reshape(shape)
        pairs = []
        for axis in range(self.dim):
            lead = np.moveaxis(idx, axis, 0)
            a = lead[:-1].ravel()
            b = lead[1:].ravel()
            pairs.append(np.stack([a, b], axis=1))
        return np.concatenate(pairs, axis=0)
