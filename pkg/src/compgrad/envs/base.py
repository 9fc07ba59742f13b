"""Common objective interface, smoothed-gradient oracle and finite-difference checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from compgrad import dual
from compgrad.errors import ConfigError


class DifferentiableObjective:
    """A deterministic scalar objective with gradients.

    Subclasses implement ``value_and_grad_batch`` (hand-derived, vectorized
    over rows) and ``expression`` (a scalar function written against
    :mod:`compgrad.dual`, used as the forward-mode reference).
    """

    name = "objective"
    dim = 1
    # parameter-space points where the value jumps or the gradient switches branch
    discontinuities: tuple = ()
    # documented sampling box for gradient checks
    domain: tuple = (-1.0, 1.0)

    def __init__(self, **params):
        self.params = dict(params)

    def __repr__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({inner})"

    # -- to implement --------------------------------------------------------
    def value_and_grad_batch(self, X):
        raise NotImplementedError

    def expression(self, x):
        raise NotImplementedError

    # -- derived -------------------------------------------------------------
    def _rows(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, self.dim) if self.dim == 1 else X[None, :]
        if X.shape[1] != self.dim:
            raise ConfigError(f"{self.name} expects dimension {self.dim}, got {X.shape[1]}")
        return X

    def value_batch(self, X):
        return self.value_and_grad_batch(X)[0]

    def eval(self, x):
        return float(self.value_batch(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[0])

    def grad(self, x):
        return self.value_and_grad_batch(np.atleast_1d(np.asarray(x, dtype=float))[None, :])[1][0]

    def grad_dual(self, x):
        """Value and gradient by forward-mode dual numbers through ``expression``."""
        return dual.gradient(self.expression, np.atleast_1d(np.asarray(x, dtype=float)))

    def branch_margin(self, x):
        """Distance from ``x`` to the nearest declared discontinuity locus."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.discontinuities:
            return math.inf
        return float(min(abs(x[0] - loc) for loc in self.discontinuities))

    def sample_domain(self, rng, n):
        lo, hi = self.domain
        return rng.uniform(lo, hi, size=(n, self.dim))


def central_difference(fn, x, rel_step=1e-6):
    """Central finite differences with step ``rel_step * max(1, |x_j|)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.empty_like(x)
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (fn(xp) - fn(xm)) / (xp[j] - xm[j])
    return g


def relative_error(g, ref, floor=1.0):
    """Max-norm error relative to the gradient magnitude.

    The scale is floored at ``floor`` (absolute error below unit magnitude):
    central differences carry ~1e-10 absolute roundoff on O(1) values, which
    would otherwise dominate near-zero gradients such as a flat sigmoid tail.
    """
    g = np.asarray(g, dtype=float)
    ref = np.asarray(ref, dtype=float)
    scale = max(float(np.max(np.abs(ref))), float(np.max(np.abs(g))), floor)
    return float(np.max(np.abs(g - ref))) / scale


@dataclass
class GradCheckResult:
    task: str
    points: int
    excluded: int
    max_rel_error: float
    worst_point: np.ndarray | None


def gradcheck(objective, n_points=100, seed=0, exclusion=1e-4, rel_step=1e-6):
    """Compare analytic gradients with central differences at random domain points.

    Points within ``exclusion`` (parameter units) of a branch switch are
    skipped and replaced, so ``n_points`` checks are always performed.
    """
    rng = np.random.default_rng(seed)
    checked = excluded = 0
    worst, worst_x = 0.0, None
    while checked < n_points:
        for x in objective.sample_domain(rng, n_points):
            if checked >= n_points:
                break
            if objective.branch_margin(x) < exclusion:
                excluded += 1
                continue
            g = objective.grad(x)
            fd = central_difference(objective.eval, x, rel_step)
            err = relative_error(g, fd)
            if err > worst:
                worst, worst_x = err, x.copy()
            checked += 1
    return GradCheckResult(objective.name, checked, excluded, worst, worst_x)


@dataclass(frozen=True)
class SmoothedOracle:
    """Large-sample 0th-order estimate of the smoothed gradient (ground truth)."""

    objective: DifferentiableObjective
    sigma: float
    n_oracle: int = 10_000_000
    chunk: int = 1_000_000


def oracle_gradient(oracle, theta, seed=0):
    """Score-function gradient estimate with ``n_oracle`` samples and its standard error.

    Evaluated in fixed-size chunks from one seeded stream; the accumulation
    order is deterministic.
    """
    if oracle.n_oracle < 2:
        raise ConfigError("n_oracle must be >= 2")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    obj = oracle.objective
    baseline = obj.eval(theta)
    rng = np.random.default_rng(seed)
    total = np.zeros(theta.size)
    total_sq = np.zeros(theta.size)
    done = 0
    while done < oracle.n_oracle:
        k = min(oracle.chunk, oracle.n_oracle - done)
        eps = rng.standard_normal((k, theta.size))
        vals = obj.value_batch(theta + oracle.sigma * eps)
        g = eps / oracle.sigma * (vals - baseline)[:, None]
        total += g.sum(axis=0)
        total_sq += (g * g).sum(axis=0)
        done += k
    n = oracle.n_oracle
    mean = total / n
    var = np.maximum(total_sq - n * mean * mean, 0.0) / (n - 1)
    return mean, np.sqrt(var / n)
