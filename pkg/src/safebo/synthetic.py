"""Seeded synthetic problems with known ground truth for safety testing.

Each problem draws smooth random functions (sums of Gaussian radial bumps)
for the objective and every constraint. Gaussian bumps have closed-form
gradient bounds, so a valid Lipschitz constant is available analytically as
the sum of per-bump bounds. A designated initial point is guaranteed safe
with margin by construction, and measurement noise is sampled uniformly
inside the hard bounds the safety argument assumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import DomainGrid

__all__ = ["BumpFunction", "SyntheticProblem", "synthetic_problem"]

# max_r |d/dr a*exp(-r^2/(2w^2))| = |a| * exp(-1/2) / w, attained at r = w
_BUMP_GRAD_FACTOR = math.exp(-0.5)


@dataclass(frozen=True)
class BumpFunction:
    """Sum of Gaussian radial bumps plus a constant offset."""

    centers: np.ndarray  # (m, d)
    amplitudes: np.ndarray  # (m,)
    widths: np.ndarray  # (m,)
    offset: float = 0.0

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        diff = pts[:, None, :] - self.centers[None, :, :]
        sq = np.sum(diff * diff, axis=-1)
        vals = self.amplitudes * np.exp(-0.5 * sq / self.widths**2)
        out = np.sum(vals, axis=1) + self.offset
        return out if np.ndim(points) > 1 else float(out[0])

    def gradient(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        diff = pts[:, None, :] - self.centers[None, :, :]
        sq = np.sum(diff * diff, axis=-1)
        scale = -self.amplitudes / self.widths**2 * np.exp(-0.5 * sq / self.widths**2)
        return np.sum(scale[:, :, None] * diff, axis=1)

    def lipschitz_bound(self) -> float:
        """Valid global bound: sum of the per-bump gradient-norm maxima."""
        return float(np.sum(np.abs(self.amplitudes) * _BUMP_GRAD_FACTOR / self.widths))

    def with_extra_bump(self, center: np.ndarray, amplitude: float, width: float) -> "BumpFunction":
        return BumpFunction(
            centers=np.vstack([self.centers, center[None, :]]),
            amplitudes=np.append(self.amplitudes, amplitude),
            widths=np.append(self.widths, width),
            offset=self.offset,
        )


def _random_bumps(rng: np.random.Generator, d: int, amplitude: float) -> BumpFunction:
    m = int(rng.integers(3, 7))
    return BumpFunction(
        centers=rng.uniform(0.0, 1.0, size=(m, d)),
        amplitudes=rng.uniform(-amplitude, amplitude, size=m),
        widths=rng.uniform(0.12, 0.35, size=m),
    )


@dataclass
class SyntheticProblem:
    """Problem handle: callable ground truth, valid constants, noise samplers."""

    seed: int
    dimension: int
    q: int
    grid: DomainGrid
    objective: BumpFunction
    constraints: list[BumpFunction]
    lipschitz: np.ndarray  # (q,) valid upper bounds for the constraints
    noise_bound: np.ndarray  # (q+1,); index 0 = objective
    theta0: np.ndarray  # guaranteed-safe initial point (a grid point)
    theta0_index: int
    tied: bool = False  # single-constraint reduction: objective == constraint 1

    def true_objective(self, theta) -> float:
        return float(self.objective(np.atleast_2d(theta))[0])

    def true_constraints(self, theta) -> np.ndarray:
        t = np.atleast_2d(theta)
        return np.array([float(g(t)[0]) for g in self.constraints])

    def is_safe(self, theta) -> bool:
        return bool(np.all(self.true_constraints(theta) >= 0.0))

    def measure(self, theta, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        """Noisy measurement of the objective and all constraints.

        Noise is uniform within the hard bounds. In tied mode the objective
        measurement is the constraint measurement (same noise draw), matching
        the single-constraint reduction where both are one function.
        """
        ys = self.true_constraints(theta) + rng.uniform(
            -self.noise_bound[1:], self.noise_bound[1:]
        )
        if self.tied:
            return float(ys[0]), ys
        y0 = self.true_objective(theta) + float(
            rng.uniform(-self.noise_bound[0], self.noise_bound[0])
        )
        return y0, ys


def synthetic_problem(
    seed: int,
    d: int,
    q: int,
    grid: DomainGrid | None = None,
    tied: bool = False,
) -> SyntheticProblem:
    """Deterministic random problem with analytic Lipschitz constants.

    The initial point is a random grid point; every constraint receives an
    extra bump there sized so that ``g_i(theta0) >= 0.2`` holds by
    construction. ``tied`` builds the single-constraint reduction (q must be
    1): the objective IS the constraint function.
    """
    if d not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2, or 3")
    if q not in (1, 2, 3):
        raise ValueError("constraint count must be 1, 2, or 3")
    if tied and q != 1:
        raise ValueError("tied mode is the single-constraint reduction")
    rng = np.random.default_rng(seed)
    grid = grid if grid is not None else DomainGrid.regular(d)
    theta0_index = int(rng.integers(grid.size))
    theta0 = grid.points[theta0_index].copy()

    constraints = []
    for _ in range(q):
        g = _random_bumps(rng, d, amplitude=0.8)
        margin = 0.2 + float(rng.uniform(0.0, 0.3))
        value_at_start = float(g(theta0[None, :])[0])
        bump = max(0.0, margin - value_at_start)
        if bump > 0.0:
            g = g.with_extra_bump(theta0, bump, 0.2)
        constraints.append(g)
    objective = constraints[0] if tied else _random_bumps(rng, d, amplitude=1.0)

    noise_bound = rng.uniform(0.02, 0.1, size=q + 1)
    if tied:
        noise_bound[0] = noise_bound[1]
    return SyntheticProblem(
        seed=seed,
        dimension=d,
        q=q,
        grid=grid,
        objective=objective,
        constraints=constraints,
        lipschitz=np.array([g.lipschitz_bound() for g in constraints]),
        noise_bound=noise_bound,
        theta0=theta0,
        theta0_index=theta0_index,
        tied=tied,
    )
