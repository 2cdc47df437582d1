"""Exact Gaussian process regression with Matern-5/2 kernels.

Every scalar function in the optimizer (the objective and each safety
constraint) is modeled by an independent zero-mean GP. The module provides
the kernel, exact posterior inference with a cached Cholesky factor, the
(MAP) log marginal likelihood with analytic gradients in log-hyperparameter
space, a multi-start gradient-ascent hyperparameter fitter, and the min-max
rescaling applied to objective observations.

Observation noise sigma_d is part of the likelihood but is never optimized:
it doubles as the companion of the hard noise bound used for safety and must
stay at its configured value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco

__all__ = [
    "ConditioningError",
    "KernelConfig",
    "NoiseConfig",
    "GammaPrior",
    "GammaPriorConfig",
    "GpModel",
    "FitResult",
    "kernel_eval",
    "fit_hyperparameters",
    "minmax_rescale",
    "MinMaxTransform",
]

_SQRT5 = math.sqrt(5.0)

# Jitter added to the Gram diagonal, relative to the signal variance.
# Escalates by 10x on factorization failure. The starting value is small
# enough not to perturb the posterior beyond 1e-8 against a jitter-free
# dense solve even for near-singular Gram matrices.
_JITTER_START = 1e-12
_JITTER_MAX = 1e-6


class ConditioningError(RuntimeError):
    """Gram matrix is not positive definite even after jitter escalation."""


@dataclass(frozen=True)
class KernelConfig:
    """Matern-5/2 kernel with per-dimension lengthscales.

    Parameters
    ----------
    lengthscales:
        Positive lengthscale per input dimension, in normalized-domain units.
    outputscale:
        Signal variance sigma_f^2; the kernel value at zero distance.
    """

    lengthscales: tuple[float, ...]
    outputscale: float

    def __post_init__(self):
        if any(l <= 0 for l in self.lengthscales):
            raise ValueError("lengthscales must be positive")
        if self.outputscale <= 0:
            raise ValueError("outputscale must be positive")

    @classmethod
    def isotropic(cls, lengthscale: float, outputscale: float, dim: int) -> "KernelConfig":
        """One shared lengthscale for every dimension."""
        return cls(lengthscales=(float(lengthscale),) * dim, outputscale=float(outputscale))

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def scaled(self, lengthscale_factor: float = 1.0, outputscale_factor: float = 1.0) -> "KernelConfig":
        """Multiplicatively perturbed copy (used for misspecification studies)."""
        return KernelConfig(
            lengthscales=tuple(l * lengthscale_factor for l in self.lengthscales),
            outputscale=self.outputscale * outputscale_factor,
        )


@dataclass(frozen=True)
class NoiseConfig:
    """Observation noise standard deviation sigma_d (>= 0) in the GP likelihood."""

    noise_std: float

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) prior over a positive hyperparameter."""

    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("Gamma prior requires shape > 0 and rate > 0")

    def log_density(self, x: float) -> float:
        return (
            self.shape * math.log(self.rate)
            - math.lgamma(self.shape)
            + (self.shape - 1.0) * math.log(x)
            - self.rate * x
        )

    def dlog_density_dlogx(self, x: float) -> float:
        # d/d(log x) of log_density
        return (self.shape - 1.0) - self.rate * x

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.gamma(self.shape, 1.0 / self.rate))


@dataclass(frozen=True)
class GammaPriorConfig:
    """Priors for the MAP objective: one on each lengthscale, one on the outputscale."""

    lengthscale: GammaPrior
    outputscale: GammaPrior


def _scaled_sq_dists(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """(m, n) matrix of squared lengthscale-scaled Euclidean distances."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sum((diff / lengthscales) ** 2, axis=-1)


def _matern52_from_r(r: np.ndarray, outputscale: float) -> np.ndarray:
    return outputscale * (1.0 + _SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-_SQRT5 * r)


def kernel_matrix(cfg: KernelConfig, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Matern-5/2 covariance between the rows of ``a`` and ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != cfg.dim or b.shape[1] != cfg.dim:
        raise ValueError(
            f"point dimension {a.shape[1]}/{b.shape[1]} does not match kernel dimension {cfg.dim}"
        )
    ls = np.asarray(cfg.lengthscales, dtype=float)
    r = np.sqrt(_scaled_sq_dists(a, b, ls))
    return _matern52_from_r(r, cfg.outputscale)


def kernel_eval(cfg: KernelConfig, x: np.ndarray, y: np.ndarray) -> float:
    """Kernel value between two single points."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    return float(kernel_matrix(cfg, x, y)[0, 0])


class GpModel:
    """Zero-mean GP conditioned on scalar observations, with cached factorization.

    Instances are immutable in practice: :meth:`update` returns a new model and
    the cached Cholesky factor is computed once at construction. One instance
    must not be mutated from two threads, but independent instances are safe
    to use in parallel.
    """

    def __init__(
        self,
        kernel: KernelConfig,
        noise: NoiseConfig,
        train_x: np.ndarray | None = None,
        train_y: np.ndarray | None = None,
        priors: GammaPriorConfig | None = None,
    ):
        self.kernel = kernel
        self.noise = noise
        self.priors = priors
        if train_x is None:
            self.train_x = np.empty((0, kernel.dim), dtype=float)
            self.train_y = np.empty((0,), dtype=float)
        else:
            self.train_x = np.atleast_2d(np.asarray(train_x, dtype=float)).copy()
            self.train_y = np.asarray(train_y, dtype=float).reshape(-1).copy()
            if self.train_x.shape[0] != self.train_y.shape[0]:
                raise ValueError("train_x and train_y length mismatch")
            if self.train_x.shape[1] != kernel.dim:
                raise ValueError("data dimension does not match kernel dimension")
            if not np.all(np.isfinite(self.train_x)) or not np.all(np.isfinite(self.train_y)):
                raise ValueError("non-finite training data")
        self._chol = None
        self._alpha = None
        self.jitter = 0.0
        if self.n > 0:
            self._factorize()

    @property
    def n(self) -> int:
        return self.train_x.shape[0]

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def _gram(self, jitter: float) -> np.ndarray:
        k = kernel_matrix(self.kernel, self.train_x)
        k[np.diag_indices_from(k)] += self.noise.noise_std**2 + jitter
        return k

    def _factorize(self) -> None:
        jitter = _JITTER_START * self.kernel.outputscale
        limit = _JITTER_MAX * self.kernel.outputscale
        while True:
            try:
                self._chol = cholesky(self._gram(jitter), lower=True)
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
                if jitter > limit * (1.0 + 1e-12):
                    raise ConditioningError(
                        f"Gram matrix not positive definite with jitter up to {limit:.3e}"
                    ) from None
        self.jitter = jitter
        self._alpha = cho_solve((self._chol, True), self.train_y)

    def posterior(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at the given points.

        Accepts a single point of shape (d,) or a batch (m, d); returns arrays
        of shape (m,). Variance is clipped at zero against round-off.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError("query dimension does not match model dimension")
        prior_var = np.full(pts.shape[0], self.kernel.outputscale)
        if self.n == 0:
            return np.zeros(pts.shape[0]), prior_var
        k_star = kernel_matrix(self.kernel, self.train_x, pts)  # (n, m)
        mean = k_star.T @ self._alpha
        v = solve_triangular(self._chol, k_star, lower=True)
        var = prior_var - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def posterior_at(self, point: np.ndarray) -> tuple[float, float]:
        mean, var = self.posterior(np.asarray(point, dtype=float).reshape(1, -1))
        return float(mean[0]), float(var[0])

    def update(self, point: np.ndarray, value: float) -> "GpModel":
        """New model conditioned on one additional observation."""
        if not np.isfinite(value):
            raise ValueError("observation value must be finite")
        point = np.asarray(point, dtype=float).reshape(1, -1)
        if point.shape[1] != self.dim:
            raise ValueError("observation dimension does not match model dimension")
        return GpModel(
            self.kernel,
            self.noise,
            np.vstack([self.train_x, point]),
            np.concatenate([self.train_y, [float(value)]]),
            priors=self.priors,
        )

    def with_kernel(self, kernel: KernelConfig) -> "GpModel":
        return GpModel(kernel, self.noise, self.train_x, self.train_y, priors=self.priors)

    def log_marginal_likelihood(self) -> tuple[float, np.ndarray]:
        """MAP objective and its gradient in log-hyperparameter space.

        Returns ``(value, grad)`` where grad has one entry per log-lengthscale,
        then log sigma_f^2, then log sigma_d^2. When Gamma priors are attached,
        their log densities (on lengthscales and outputscale) are added, making
        this the MAP objective rather than the plain marginal likelihood.
        """
        if self.n == 0:
            raise ValueError("log marginal likelihood requires at least one observation")
        diff = self.train_x[:, None, :] - self.train_x[None, :, :]
        value, grad = _lml_core(
            diff * diff,
            self.train_y,
            np.asarray(self.kernel.lengthscales),
            self.kernel.outputscale,
            self.noise.noise_std**2,
            self.priors,
            want_grad=True,
        )
        return value, grad


@_njit(cache=True)
def _lml_kernel_jit(diff2, y, ls, sf2, sd2, jitter, want_grad):
    """Value and gradient of the zero-mean GP log marginal likelihood.

    Returns (ok, value, grad); ok=False flags a failed Cholesky so the caller
    can escalate the jitter. Hand-rolled factorization keeps the whole body
    jittable without exception handling.
    """
    n = y.shape[0]
    d = ls.shape[0]
    sqrt5 = math.sqrt(5.0)
    grad = np.zeros(d + 2)

    r_mat = np.empty((n, n))
    e_mat = np.empty((n, n))
    k_f = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            r2 = 0.0
            for k in range(d):
                r2 += diff2[i, j, k] / (ls[k] * ls[k])
            r = math.sqrt(r2)
            e = math.exp(-sqrt5 * r)
            r_mat[i, j] = r
            e_mat[i, j] = e
            k_f[i, j] = sf2 * (1.0 + sqrt5 * r + (5.0 / 3.0) * r2) * e

    low = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = k_f[i, j]
            if i == j:
                s += sd2 + jitter
            for k in range(j):
                s -= low[i, k] * low[j, k]
            if i == j:
                if s <= 0.0:
                    return False, 0.0, grad
                low[i, i] = math.sqrt(s)
            else:
                low[i, j] = s / low[j, j]

    alpha = np.empty(n)
    for i in range(n):
        s = y[i]
        for k in range(i):
            s -= low[i, k] * alpha[k]
        alpha[i] = s / low[i, i]
    for i in range(n - 1, -1, -1):
        s = alpha[i]
        for k in range(i + 1, n):
            s -= low[k, i] * alpha[k]
        alpha[i] = s / low[i, i]

    logdet = 0.0
    for i in range(n):
        logdet += math.log(low[i, i])
    ydota = 0.0
    for i in range(n):
        ydota += y[i] * alpha[i]
    value = -0.5 * ydota - logdet - 0.5 * n * math.log(2.0 * math.pi)
    if not want_grad:
        return True, value, grad

    # K^-1 column by column via the triangular factors
    k_inv = np.empty((n, n))
    col = np.empty(n)
    for c in range(n):
        for i in range(n):
            s = 1.0 if i == c else 0.0
            for k in range(i):
                s -= low[i, k] * col[k]
            col[i] = s / low[i, i]
        for i in range(n - 1, -1, -1):
            s = col[i]
            for k in range(i + 1, n):
                s -= low[k, i] * col[k]
            col[i] = s / low[i, i]
        for i in range(n):
            k_inv[i, c] = col[i]

    g_sf2 = 0.0
    g_sd2 = 0.0
    for i in range(n):
        for j in range(n):
            a_ij = alpha[i] * alpha[j] - k_inv[i, j]
            base = sf2 * (5.0 / 3.0) * (1.0 + sqrt5 * r_mat[i, j]) * e_mat[i, j]
            for k in range(d):
                grad[k] += 0.5 * a_ij * base * diff2[i, j, k] / (ls[k] * ls[k])
            g_sf2 += 0.5 * a_ij * k_f[i, j]
            if i == j:
                g_sd2 += 0.5 * a_ij * sd2
    grad[d] = g_sf2
    grad[d + 1] = g_sd2
    return True, value, grad


def _lml_core(
    diff2: np.ndarray,
    y: np.ndarray,
    ls: np.ndarray,
    sf2: float,
    sd2: float,
    priors: GammaPriorConfig | None,
    want_grad: bool,
) -> tuple[float, np.ndarray | None]:
    """Shared MAP-objective kernel over precomputed squared coordinate diffs."""
    if _HAVE_NUMBA:
        jitter = _JITTER_START * sf2
        limit = _JITTER_MAX * sf2
        while True:
            ok, value, grad = _lml_kernel_jit(
                diff2, y, np.asarray(ls, dtype=float), float(sf2), float(sd2), jitter, want_grad
            )
            if ok:
                break
            jitter *= 10.0
            if jitter > limit * (1.0 + 1e-12):
                raise ConditioningError("factorization failed in log_marginal_likelihood")
        d = diff2.shape[2]
        if priors is not None:
            for l in ls:
                value += priors.lengthscale.log_density(float(l))
            value += priors.outputscale.log_density(sf2)
            if want_grad:
                for j, l in enumerate(ls):
                    grad[j] += priors.lengthscale.dlog_density_dlogx(float(l))
                grad[d] += priors.outputscale.dlog_density_dlogx(sf2)
        return value, (grad if want_grad else None)
    return _lml_core_numpy(diff2, y, ls, sf2, sd2, priors, want_grad)


def _lml_core_numpy(
    diff2: np.ndarray,
    y: np.ndarray,
    ls: np.ndarray,
    sf2: float,
    sd2: float,
    priors: GammaPriorConfig | None,
    want_grad: bool,
) -> tuple[float, np.ndarray | None]:
    """Numpy twin of the jitted kernel, used when numba is unavailable."""
    n = y.shape[0]
    d = diff2.shape[2]
    sq = diff2 / (ls**2)  # (n, n, d)
    r = np.sqrt(np.sum(sq, axis=-1))
    expo = np.exp(-_SQRT5 * r)
    k_f = sf2 * (1.0 + _SQRT5 * r + (5.0 / 3.0) * r * r) * expo

    jitter = _JITTER_START * sf2
    limit = _JITTER_MAX * sf2
    while True:
        try:
            gram = k_f.copy()
            gram[np.diag_indices(n)] += sd2 + jitter
            chol = cholesky(gram, lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > limit * (1.0 + 1e-12):
                raise ConditioningError("factorization failed in log_marginal_likelihood") from None
    alpha = cho_solve((chol, True), y)
    value = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(chol))))
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    if priors is not None:
        for l in ls:
            value += priors.lengthscale.log_density(float(l))
        value += priors.outputscale.log_density(sf2)
    if not want_grad:
        return value, None

    # dL/dtheta = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta)
    k_inv = cho_solve((chol, True), np.eye(n))
    a_mat = np.outer(alpha, alpha) - k_inv

    grad = np.empty(d + 2)
    # dK/dlog l_j = sf2 * (5/3) * (1 + sqrt5 r) * exp(-sqrt5 r) * sq_j
    base = sf2 * (5.0 / 3.0) * (1.0 + _SQRT5 * r) * expo
    ab = a_mat * base
    for j in range(d):
        grad[j] = 0.5 * float(np.sum(ab * sq[:, :, j]))
    grad[d] = 0.5 * float(np.sum(a_mat * k_f))  # dK/dlog sf2 = K_f
    grad[d + 1] = 0.5 * float(np.trace(a_mat)) * sd2  # dK/dlog sd2 = sd2 I
    if priors is not None:
        for j, l in enumerate(ls):
            grad[j] += priors.lengthscale.dlog_density_dlogx(float(l))
        grad[d] += priors.outputscale.dlog_density_dlogx(sf2)
    return value, grad


@dataclass(frozen=True)
class FitResult:
    """Outcome of a hyperparameter fit."""

    kernel: KernelConfig
    map_value: float
    improved: bool
    warning: bool


# Log-space bounds keeping the ascent away from degenerate hyperparameters.
_LOG_BOUND = math.log(1e3)


def fit_hyperparameters(
    model: GpModel,
    priors: GammaPriorConfig | None = None,
    rng: np.random.Generator | None = None,
    restarts: int = 5,
    max_iter: int = 100,
    grad_tol: float = 1e-3,
) -> FitResult:
    """MAP fit of lengthscales and outputscale by multi-start gradient ascent.

    Works in log-space with a backtracking (Armijo) line search; sigma_d is
    held fixed. The current hyperparameters are always one of the starts, so
    the returned MAP value never falls below the initial one. If every start
    fails to factorize, the initial hyperparameters come back with
    ``warning=True`` instead of an error.
    """
    if model.n < 2:
        raise ValueError("hyperparameter fitting requires at least 2 observations")
    if priors is None:
        priors = model.priors
    rng = np.random.default_rng(0) if rng is None else rng
    d = model.dim
    sd2 = model.noise.noise_std**2
    diff = model.train_x[:, None, :] - model.train_x[None, :, :]
    diff2 = np.ascontiguousarray(diff * diff)
    y = model.train_y

    def objective(x: np.ndarray, want_grad: bool):
        ls = np.exp(x[:d])
        sf2 = math.exp(x[d])
        value, grad = _lml_core(diff2, y, ls, sf2, sd2, priors, want_grad)
        return value, None if grad is None else grad[: d + 1]  # sigma_d stays fixed

    x0 = np.array([math.log(l) for l in model.kernel.lengthscales] + [math.log(model.kernel.outputscale)])
    starts = [x0]
    for _ in range(restarts):
        if priors is not None:
            ls = [priors.lengthscale.sample(rng) for _ in range(d)]
            sf2 = priors.outputscale.sample(rng)
            starts.append(np.log(np.array(ls + [sf2])))
        else:
            starts.append(x0 + rng.normal(scale=1.0, size=d + 1))

    try:
        f0, _ = objective(x0, want_grad=False)
    except ConditioningError:
        f0 = -np.inf

    best_x, best_f = x0, f0
    any_ok = np.isfinite(f0)
    for x_start in starts:
        x = np.clip(x_start, -_LOG_BOUND, _LOG_BOUND)
        try:
            f, g = objective(x, want_grad=True)
        except ConditioningError:
            continue
        any_ok = True
        step = 0.5
        for _ in range(max_iter):
            gnorm = float(np.max(np.abs(g)))
            if gnorm < grad_tol:
                break
            direction = g / max(gnorm, 1.0)  # scaled ascent direction
            slope = float(g @ direction)
            accepted = False
            while step >= 1e-12:
                x_new = np.clip(x + step * direction, -_LOG_BOUND, _LOG_BOUND)
                try:
                    f_new, _ = objective(x_new, want_grad=False)
                except ConditioningError:
                    step *= 0.5
                    continue
                if f_new > f + 1e-4 * step * slope:
                    x, f = x_new, f_new
                    _, g = objective(x, want_grad=True)
                    accepted = True
                    step = min(step * 2.0, 2.0)
                    break
                step *= 0.5
            if not accepted:
                break
        if f > best_f:
            best_x, best_f = x, f

    if not any_ok:
        return FitResult(kernel=model.kernel, map_value=f0, improved=False, warning=True)
    kernel = KernelConfig(
        lengthscales=tuple(math.exp(v) for v in best_x[:d]),
        outputscale=math.exp(best_x[d]),
    )
    return FitResult(kernel=kernel, map_value=best_f, improved=best_f > f0, warning=False)


@dataclass(frozen=True)
class MinMaxTransform:
    """Affine record of a min-max rescaling; supports inverse mapping."""

    lo: float
    hi: float

    @property
    def degenerate(self) -> bool:
        return self.hi == self.lo

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.degenerate:
            return np.full_like(values, 0.5)
        return (values - self.lo) / (self.hi - self.lo)

    def invert(self, scaled: np.ndarray) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=float)
        if self.degenerate:
            return np.full_like(scaled, self.lo)
        return self.lo + scaled * (self.hi - self.lo)


def minmax_rescale(values) -> tuple[np.ndarray, MinMaxTransform]:
    """Rescale observations to [0, 1]; all-equal inputs map to 0.5."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("minmax_rescale requires at least one value")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite values in minmax_rescale")
    t = MinMaxTransform(lo=float(np.min(values)), hi=float(np.max(values)))
    return t.apply(values), t
