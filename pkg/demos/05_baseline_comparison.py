"""Why Lipschitz-only safety matters: misspecified kernels on a spiky problem.

Both optimizers get the same 10x-too-long lengthscale on a problem with a
narrow unsafe valley. The confidence-bound baseline smooths over the valley,
certifies it, and steps in; the Lipschitz-only optimizer never does, because
its safe set depends only on measurements, the Lipschitz constant, and the
noise bound - not on the GP.

Run: python demos/05_baseline_comparison.py
"""

import numpy as np

from safebo import (
    DomainGrid,
    EmptySafeSetError,
    GpSpec,
    KernelConfig,
    Mclosbo,
    NoiseConfig,
    SafeOptMc,
    SafetyConfig,
)
from safebo.synthetic import BumpFunction


def main():
    grid = DomainGrid((101,))
    valley = BumpFunction(
        centers=np.array([[0.6]]), amplitudes=np.array([-1.4]), widths=np.array([0.03]), offset=0.5
    )
    g = lambda theta: float(valley(np.atleast_2d(theta))[0])
    unsafe = [i for i in range(grid.size) if g(grid.points[i]) < 0.0]
    print(f"unsafe valley: theta in [{grid.points[unsafe[0], 0]:.2f}, {grid.points[unsafe[-1], 0]:.2f}], "
          f"true Lipschitz bound {valley.lipschitz_bound():.1f}")

    # both get the same deliberately misspecified kernel: lengthscale 2.0 (10x)
    specs = [GpSpec(KernelConfig.isotropic(2.0, 1.0, 1), NoiseConfig(0.05))] * 2

    for cls in (SafeOptMc, Mclosbo):
        engine = cls(
            grid=grid,
            safety=SafetyConfig((valley.lipschitz_bound(),), (0.01,)),
            functions=list(specs),
            initial_safe=[30],
            seed=0,
        )
        rng = np.random.default_rng(0)
        violations = []
        for _ in range(40):
            try:
                idx = engine.propose()
            except EmptySafeSetError:
                break
            theta = grid.points[idx]
            y = g(theta) + rng.uniform(-0.01, 0.01)
            engine.observe(idx, -((theta[0] - 0.9) ** 2), np.array([y]))
            if g(theta) < 0.0:
                violations.append(theta[0])
        name = engine.algorithm
        if violations:
            print(f"{name:12s}: {len(violations)} unsafe queries, e.g. theta={violations[0]:.2f}")
        else:
            print(f"{name:12s}: no unsafe queries")


if __name__ == "__main__":
    main()
