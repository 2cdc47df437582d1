"""GP regression walkthrough: kernel, posterior, MAP fitting, rescaling.

Fits an exact Matern-5/2 GP to noisy samples of a known function, then
recovers kernel hyperparameters by MAP ascent under Gamma priors, and shows
the min-max rescaling used for objective observations.

Run: python demos/01_gp_regression.py
"""

import numpy as np

from safebo import (
    GammaPrior,
    GammaPriorConfig,
    GpModel,
    KernelConfig,
    NoiseConfig,
    fit_hyperparameters,
    minmax_rescale,
)


def main():
    rng = np.random.default_rng(0)
    truth = lambda x: np.sin(6.0 * x) * np.exp(-x)

    train_x = rng.uniform(size=(12, 1))
    train_y = truth(train_x[:, 0]) + rng.normal(scale=0.05, size=12)

    model = GpModel(
        KernelConfig.isotropic(lengthscale=0.2, outputscale=1.0, dim=1),
        NoiseConfig(noise_std=0.05),
        train_x,
        train_y,
    )

    print("posterior vs truth on a few query points:")
    for q in (0.05, 0.3, 0.55, 0.8):
        mean, var = model.posterior_at(np.array([q]))
        print(f"  x={q:.2f}  mean={mean:+.3f}  sd={np.sqrt(var):.3f}  truth={truth(q):+.3f}")

    priors = GammaPriorConfig(
        lengthscale=GammaPrior(shape=3.0, rate=10.0),
        outputscale=GammaPrior(shape=3.0, rate=2.0),
    )
    before, _ = model.log_marginal_likelihood()
    result = fit_hyperparameters(model, priors=priors, rng=rng)
    print(f"\nMAP fit: lengthscale {model.kernel.lengthscales[0]:.3f} -> "
          f"{result.kernel.lengthscales[0]:.3f}, outputscale {model.kernel.outputscale:.3f} -> "
          f"{result.kernel.outputscale:.3f}")
    print(f"MAP objective: {before:.3f} -> {result.map_value:.3f}")

    values = [2.0, 4.0, 6.0]
    scaled, transform = minmax_rescale(values)
    print(f"\nmin-max rescaling {values} -> {scaled.tolist()} (invert(0.5) = {transform.invert(np.array([0.5]))[0]})")


if __name__ == "__main__":
    main()
