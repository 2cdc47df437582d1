"""Safe optimization on a 1-D synthetic problem with known ground truth.

Runs the Lipschitz-only optimizer for 20 synchronous iterations and prints,
per iteration, the query, its true constraint values, and the safe-set
extent. Every query provably satisfies the constraints; the safe set only
grows.

Run: python demos/02_safe_optimization_1d.py
"""

import numpy as np

from safebo import (
    DomainGrid,
    EngineOptions,
    GpSpec,
    KernelConfig,
    Mclosbo,
    NoiseConfig,
    SafetyConfig,
)
from safebo.synthetic import synthetic_problem


def main():
    grid = DomainGrid((101,))
    problem = synthetic_problem(seed=5, d=1, q=2, grid=grid)
    rng = np.random.default_rng(5)

    engine = Mclosbo(
        grid=grid,
        safety=SafetyConfig(
            lipschitz=tuple(problem.lipschitz),
            noise_bound=tuple(problem.noise_bound[1:]),
        ),
        functions=[
            GpSpec(KernelConfig.isotropic(0.2, 1.0, 1), NoiseConfig(0.05)) for _ in range(3)
        ],
        initial_safe=[problem.theta0_index],
        beta=2.0,
        options=EngineOptions(),
        seed=5,
    )

    print(f"initial safe point theta0 = {problem.theta0[0]:.2f}, "
          f"true constraints {problem.true_constraints(problem.theta0).round(3)}")
    print(f"{'iter':>4} {'theta':>6} {'y0':>7} {'g1':>7} {'g2':>7} {'safe set':>16}")
    best = -np.inf
    for step in range(1, 21):
        idx = engine.propose()
        theta = grid.points[idx]
        y0, ys = problem.measure(theta, rng)
        engine.observe(idx, y0, ys)
        g = problem.true_constraints(theta)
        assert np.all(g >= 0.0), "a safe optimizer never queries an unsafe point"
        safe = grid.points[engine.last_state.safe, 0]
        best = max(best, y0)
        print(f"{step:>4} {theta[0]:>6.2f} {y0:>7.3f} {g[0]:>7.3f} {g[1]:>7.3f} "
              f"[{safe.min():.2f}, {safe.max():.2f}] ({engine.last_state.safe.sum()} pts)")
    print(f"\nbest measured objective: {best:.3f}")


if __name__ == "__main__":
    main()
