"""Smooth toy objectives: a temperature-controlled sigmoid and a quadratic."""

import numpy as np

from compgrad import dual
from compgrad.envs.base import DifferentiableObjective
from compgrad.errors import ConfigError


class Sigmoid(DifferentiableObjective):
    """``1 / (1 + exp(-x / T))``; small ``T`` makes a near-step at 0."""

    name = "sigmoid"
    dim = 1
    domain = (-3.0, 3.0)

    def __init__(self, T=1.0):
        if not T > 0:
            raise ConfigError(f"sigmoid temperature must be > 0, got {T}")
        super().__init__(T=float(T))
        self.T = float(T)

    def value_and_grad_batch(self, X):
        X = self._rows(X)
        z = X[:, 0] / self.T
        e = np.exp(-np.abs(z))
        # stable on both sides: never exponentiates a positive number
        vals = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        grads = e / (self.T * (1.0 + e) ** 2)
        return vals, grads[:, None]

    def expression(self, x):
        z = x[0] / self.T
        if dual.value(z) >= 0:
            return 1.0 / (1.0 + dual.exp(-z))
        e = dual.exp(z)
        return e / (1.0 + e)

    def smoothed_gradient(self, theta, sigma):
        """Quadrature oracle: ``E[f'(theta + sigma eps)]`` by adaptive integration."""
        from scipy import integrate, stats

        theta = float(np.atleast_1d(theta)[0])

        def integrand(x):
            return self.value_and_grad_batch(np.array([[x]]))[1][0, 0] * stats.norm.pdf(x, theta, sigma)

        # the derivative is concentrated within ~40 T of 0; split there
        pts = sorted({theta - 12 * sigma, -40 * self.T, 0.0, 40 * self.T, theta + 12 * sigma})
        pts = [p for p in pts if theta - 12 * sigma <= p <= theta + 12 * sigma]
        total = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            total += integrate.quad(integrand, a, b, limit=200, epsabs=1e-13, epsrel=1e-11)[0]
        return np.array([total])


class Quadratic(DifferentiableObjective):
    """``f(x) = x^2``; the smoothed gradient is exactly ``2 theta``."""

    name = "quadratic"
    dim = 1
    domain = (-5.0, 5.0)

    def value_and_grad_batch(self, X):
        X = self._rows(X)
        return X[:, 0] ** 2, 2.0 * X

    def expression(self, x):
        return x[0] * x[0]

    def smoothed_gradient(self, theta, sigma):
        return 2.0 * np.atleast_1d(np.asarray(theta, dtype=float))


class CenteredQuadratic(DifferentiableObjective):
    """``f(x) = L/2 ||x - mu||^2`` in ``dim`` dimensions."""

    name = "centered_quadratic"

    def __init__(self, dim=1, curvature=2.0, center=0.0):
        super().__init__(dim=int(dim), curvature=float(curvature), center=float(center))
        self.dim = int(dim)
        self.curvature = float(curvature)
        self.center = float(center)

    def value_and_grad_batch(self, X):
        X = self._rows(X)
        d = X - self.center
        return 0.5 * self.curvature * np.einsum("ij,ij->i", d, d), self.curvature * d

    def expression(self, x):
        total = 0.0
        for xi in x:
            total = total + (xi - self.center) * (xi - self.center)
        return 0.5 * self.curvature * total

    def smoothed_gradient(self, theta, sigma):
        return self.curvature * (np.asarray(theta, dtype=float) - self.center)


def sigmoid_env(T=1.0):
    return Sigmoid(T)


def quadratic_env():
    return Quadratic()
