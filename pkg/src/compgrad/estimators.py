"""Elementary gradient estimators under Gaussian randomized smoothing.

The smoothed objective is ``E[f(theta + sigma * eps)]`` with ``eps ~ N(0, I)``.
Two unbiased (for continuous ``f``) estimators of its gradient are built
from one batch of perturbations:

* 0th-order (score function): ``eps_i / sigma * (f(zeta_i) - b)``
* 1st-order (pathwise):       ``grad f(zeta_i)``

where ``b = f(theta)`` is a deterministic baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from compgrad.errors import ConfigError, InsufficientSamplesError, NumericError


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SmoothingDistribution:
    """Gaussian search distribution ``N(theta, sigma^2 I)``."""

    theta: np.ndarray
    sigma: float

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if theta.ndim != 1 or theta.size < 1:
            raise ConfigError(f"theta must be a non-empty vector, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ConfigError("theta must be finite")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        object.__setattr__(self, "theta", _frozen(theta))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def dim(self):
        return self.theta.size

    def perturb(self, epsilons):
        return self.theta + self.sigma * np.asarray(epsilons)


@dataclass(frozen=True)
class SampleBatch:
    """Perturbations, objective values and gradients at ``zeta_i``."""

    epsilons: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    baseline: float

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        grads = np.asarray(self.grads, dtype=float)
        if eps.ndim != 2 or grads.shape != eps.shape or vals.shape != (eps.shape[0],):
            raise ConfigError(
                f"inconsistent batch shapes: eps {eps.shape}, values {vals.shape}, grads {grads.shape}"
            )
        if eps.shape[0] < 2:
            raise InsufficientSamplesError(f"a batch needs N >= 2 samples, got {eps.shape[0]}")
        for name, arr in (("epsilons", eps), ("values", vals), ("grads", grads)):
            object.__setattr__(self, name, _frozen(arr))
        object.__setattr__(self, "baseline", float(self.baseline))

    @property
    def n(self):
        return self.epsilons.shape[0]

    @property
    def dim(self):
        return self.epsilons.shape[1]


@dataclass(frozen=True)
class GradEstimate:
    """Batch mean of per-sample gradient estimates and their empirical variance."""

    mean: np.ndarray
    var_per_dim: np.ndarray
    var_scalar: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "var_per_dim", _frozen(self.var_per_dim))
        object.__setattr__(self, "var_scalar", float(self.var_scalar))
        object.__setattr__(self, "n", int(self.n))

    @property
    def dim(self):
        return self.mean.size

    @classmethod
    def from_samples(cls, samples):
        samples = np.asarray(samples, dtype=float)
        per_dim, scalar = empirical_variance(samples)
        return cls(samples.mean(axis=0), per_dim, scalar, samples.shape[0])


def empirical_variance(samples):
    """Unbiased ``1/(M-1)`` variance of an ``M x D`` sample matrix.

    Returns the per-dimension variances and their sum, which equals the
    mean squared deviation norm ``1/(M-1) sum ||x_i - mean||^2``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    m = samples.shape[0]
    if m < 2:
        raise InsufficientSamplesError(f"empirical variance needs M >= 2 samples, got {m}")
    centered = samples - samples.mean(axis=0)
    per_dim = np.einsum("ij,ij->j", centered, centered) / (m - 1)
    return per_dim, float(per_dim.sum())


def draw_epsilons(seed, n, dim):
    return np.random.default_rng(seed).standard_normal((n, dim))


def _check_finite(values, grads):
    bad = ~np.isfinite(values)
    if grads is not None:
        bad |= ~np.all(np.isfinite(grads), axis=1)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite objective value or gradient at sample {idx}", location=idx)


def sample_batch(dist, objective, n, seed):
    """Draw ``n`` perturbations and evaluate the objective and its gradient.

    The baseline is one extra evaluation of the objective at ``theta``.
    Results are a pure function of ``(dist, objective, n, seed)``.
    """
    if n < 2:
        raise InsufficientSamplesError(f"sample_batch needs n >= 2, got {n}")
    if objective.dim != dist.dim:
        raise ConfigError(f"objective dimension {objective.dim} != distribution dimension {dist.dim}")
    eps = draw_epsilons(seed, n, dist.dim)
    values, grads = objective.value_and_grad_batch(dist.perturb(eps))
    _check_finite(values, grads)
    baseline = objective.eval(dist.theta)
    if not np.isfinite(baseline):
        raise NumericError("non-finite baseline value at theta", location="baseline")
    return SampleBatch(eps, values, grads, baseline)


def zeroth_order_samples(batch, dist):
    """Per-sample score-function estimates ``eps_i / sigma * (f_i - b)``."""
    return batch.epsilons / dist.sigma * (batch.values - batch.baseline)[:, None]


def estimate_g0(batch, dist):
    if batch.n < 2:
        raise InsufficientSamplesError("estimate_g0 needs N >= 2")
    return GradEstimate.from_samples(zeroth_order_samples(batch, dist))


def estimate_g1(batch):
    if batch.n < 2:
        raise InsufficientSamplesError("estimate_g1 needs N >= 2")
    return GradEstimate.from_samples(batch.grads)
