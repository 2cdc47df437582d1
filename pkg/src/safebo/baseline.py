"""Reconstructed SafeOpt-MC baseline: confidence-bound safety with Lipschitz cones.

This is the comparison algorithm of the benchmark study, rebuilt from its
operational recipe: the safe set is driven by the GP lower confidence bounds
of the constraint functions, propagated through Lipschitz cones from the
previous safe set. Unlike the Lipschitz-only optimizer, its safety therefore
depends on the kernel hyperparameters being well specified; with a fixed
confidence factor beta (the variant used in practice) a misspecified model
can certify genuinely unsafe points. Maximizers, expanders, and the
acquisition rule are shared with the main engine.
"""

from __future__ import annotations

import numpy as np

from .engine import EmptySafeSetError, _EngineBase
from .grid import DomainGrid

__all__ = ["SafeOptMc", "baseline_safe_set"]


def _certified_from_lower(
    lower_constraints: np.ndarray,
    lipschitz,
    grid: DomainGrid,
    previous_safe: np.ndarray,
) -> np.ndarray:
    """Intersection over constraints of cone unions anchored at prior safe points."""
    prev_idx = np.flatnonzero(previous_safe)
    if prev_idx.size == 0:
        raise EmptySafeSetError("previous safe set is empty")
    lipschitz = np.asarray(lipschitz, dtype=float)
    all_idx = np.arange(grid.size)
    mask = np.ones(grid.size, dtype=bool)
    chunk = max(1, 2_000_000 // grid.size)
    for i in range(lower_constraints.shape[0]):
        l_i = lower_constraints[i]
        certified = np.zeros(grid.size, dtype=bool)
        for start in range(0, prev_idx.size, chunk):
            sel = prev_idx[start : start + chunk]
            dist = grid.cross_distances(sel, all_idx)
            certified |= np.any(l_i[sel][:, None] - lipschitz[i] * dist >= 0.0, axis=0)
        mask &= certified
        if not mask.any():
            break
    if not mask.any():
        raise EmptySafeSetError("confidence-bound safe set is empty")
    return mask


def baseline_safe_set(
    constraint_models,
    beta: float,
    lipschitz,
    grid: DomainGrid,
    previous_safe: np.ndarray,
) -> np.ndarray:
    """Confidence-bound safe set: cones anchored at lower bounds of prior safe points.

    A point is certified per constraint when some point of the previous safe
    set has ``l_i(theta) - L_i * dist >= 0`` with ``l_i`` the beta-lower
    confidence bound; the result intersects the per-constraint certifications.
    Recomputed from the current bounds each iteration, so it is not monotone.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    lower = np.empty((len(constraint_models), grid.size))
    for i, model in enumerate(constraint_models):
        mean, var = model.posterior(grid.points)
        lower[i] = mean - beta * np.sqrt(var)
    return _certified_from_lower(lower, lipschitz, grid, previous_safe)


class SafeOptMc(_EngineBase):
    """SafeOpt-MC with a fixed beta, sharing the selection machinery of the engine."""

    algorithm = "safeopt-mc"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._prev_safe = np.zeros(self.grid.size, dtype=bool)
        self._prev_safe[list(self.initial_safe)] = True

    def _safe_mask(self, completed, lower, upper) -> np.ndarray:
        if len(completed) == 0:
            # Before any founding measurement only the assumed-safe seeds exist.
            return self._prev_safe.copy()
        certified = _certified_from_lower(
            lower[1:], self.safety.lipschitz, self.grid, self._prev_safe
        )
        self._prev_safe = certified
        return certified

    def to_dict(self) -> dict:
        doc = super().to_dict()
        doc["baseline_prev_safe"] = np.flatnonzero(self._prev_safe).tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SafeOptMc":
        engine = super().from_dict(doc)
        engine._prev_safe = np.zeros(engine.grid.size, dtype=bool)
        engine._prev_safe[doc["baseline_prev_safe"]] = True
        return engine
