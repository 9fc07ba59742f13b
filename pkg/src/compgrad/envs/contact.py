"""Multi-step trajectory-optimization tasks with contact and friction.

The parameter vector is an open-loop force sequence, one entry per control
step. Batched rollouts run in :mod:`compgrad.kernels` (compiled or NumPy);
``expression`` is the same dynamics written once against dual numbers.
"""

import numpy as np

from compgrad import dual, kernels
from compgrad.envs.base import DifferentiableObjective
from compgrad.errors import ConfigError


class _RolloutObjective(DifferentiableObjective):
    init_value = 0.0

    def _kernel(self, U):
        raise NotImplementedError

    def value_and_grad_batch(self, X):
        vals, grads, _ = self._kernel(self._rows(X))
        return vals, grads

    def branch_margin(self, x):
        return float(self._kernel(self._rows(np.atleast_1d(x)[None, :]))[2][0])

    def initial_controls(self):
        return np.full(self.dim, self.init_value)


class Pushing(_RolloutObjective):
    """Box 1 is pushed into box 2 through a one-sided spring contact.

    Unit boxes on a line; contact force ``k * max(0, x1 + size - x2)``.
    Cost ``(x2(T) - goal)^2 + effort * sum(u^2)``. Each control interval
    ``dt`` is integrated with ``substeps`` semi-implicit Euler steps.
    """

    name = "pushing"
    domain = (-10.0, 30.0)

    def __init__(self, k=10.0, horizon=20, dt=0.05, substeps=10, m1=1.0, m2=1.0, size=1.0,
                 x1_0=0.0, x2_0=1.5, goal=3.0, effort=1e-3, init_value=0.0):
        if not k > 0:
            raise ConfigError(f"spring constant must be > 0, got {k}")
        if horizon < 1 or substeps < 1:
            raise ConfigError("horizon and substeps must be >= 1")
        super().__init__(k=float(k), horizon=int(horizon), dt=float(dt), substeps=int(substeps),
                         m1=float(m1), m2=float(m2), size=float(size), x1_0=float(x1_0),
                         x2_0=float(x2_0), goal=float(goal), effort=float(effort))
        self.dim = int(horizon)
        self.init_value = float(init_value)

    def _kernel(self, U, backend=None):
        p = self.params
        fn = (backend or kernels.backend).pushing_rollout
        return fn(U, p["k"], p["dt"], p["substeps"], p["m1"], p["m2"], p["size"],
                  p["x1_0"], p["x2_0"], p["goal"], p["effort"])

    def expression(self, u):
        p = self.params
        h = p["dt"] / p["substeps"]
        x1, x2, v1, v2 = p["x1_0"], p["x2_0"], 0.0, 0.0
        for ut in u:
            for _ in range(p["substeps"]):
                force = p["k"] * dual.relu(x1 + p["size"] - x2)
                v1 = v1 + h * (ut - force) / p["m1"]
                v2 = v2 + h * force / p["m2"]
                x1 = x1 + h * v1
                x2 = x2 + h * v2
        cost = (x2 - p["goal"]) ** 2
        for ut in u:
            cost = cost + p["effort"] * ut * ut
        return cost


class Friction(_RolloutObjective):
    """Block 2 rides on block 1 under Coulomb friction; the force acts on block 1.

    While the relative speed is below ``v_eps`` the blocks stick if the
    friction needed to keep them together stays within ``mu_s * N``;
    otherwise kinetic friction ``mu_k * N`` opposes the slip. Breaking away
    drops the friction force from ``mu_s N`` to ``mu_k N``, so the final
    position of block 2 jumps. Cost ``(x2(T) - goal)^2``.
    """

    name = "friction"
    domain = (0.0, 9.0)

    def __init__(self, horizon=20, dt=0.05, m1=1.0, m2=1.0, mu_s=0.5, mu_k=0.3, gravity=9.81,
                 v_eps=1e-3, x2_0=0.0, goal=2.5, init_value=10.0, mu=None):
        if mu is not None:
            mu_s = mu_k = float(mu)
        if horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if mu_s < 0 or mu_k < 0:
            raise ConfigError("friction coefficients must be nonnegative")
        super().__init__(horizon=int(horizon), dt=float(dt), m1=float(m1), m2=float(m2),
                         mu_s=float(mu_s), mu_k=float(mu_k), gravity=float(gravity),
                         v_eps=float(v_eps), x2_0=float(x2_0), goal=float(goal))
        self.dim = int(horizon)
        self.init_value = float(init_value)

    @property
    def breakaway_force(self):
        """Constant force above which resting blocks start to slip."""
        p = self.params
        return p["mu_s"] * p["m2"] * p["gravity"] * (p["m1"] + p["m2"]) / p["m2"]

    def rigid_gradient(self, u):
        """Closed-form gradient when the blocks never slip (one rigid body)."""
        p = self.params
        u = np.asarray(u, dtype=float)
        H, dt = u.size, p["dt"]
        lever = dt * dt * (H - np.arange(H)) / (p["m1"] + p["m2"])
        x2 = p["x2_0"] + float(lever @ u)
        return 2.0 * (x2 - p["goal"]) * lever

    def _kernel(self, U, backend=None):
        p = self.params
        fn = (backend or kernels.backend).friction_rollout
        return fn(U, p["dt"], p["m1"], p["m2"], p["mu_s"], p["mu_k"], p["gravity"],
                  p["v_eps"], p["x2_0"], p["goal"])

    def expression(self, u):
        p = self.params
        dt = p["dt"]
        normal = p["m2"] * p["gravity"]
        mred = p["m1"] * p["m2"] / (p["m1"] + p["m2"])
        x2, v1, v2 = p["x2_0"], 0.0, 0.0
        for ut in u:
            vrel = v2 - v1
            if abs(dual.value(vrel)) < p["v_eps"]:
                freq = mred * (ut / p["m1"] - vrel / dt)
                if abs(dual.value(freq)) <= p["mu_s"] * normal:
                    f = freq
                else:
                    f = p["mu_k"] * normal * dual.sign(freq)
            else:
                f = -p["mu_k"] * normal * dual.sign(vrel)
            v2 = v2 + dt * f / p["m2"]
            v1 = v1 + dt * (ut - f) / p["m1"]
            x2 = x2 + dt * v2
        return (x2 - p["goal"]) ** 2


def pushing_env(k=10.0, horizon=20, **kw):
    return Pushing(k=k, horizon=horizon, **kw)


def friction_env(horizon=20, **kw):
    return Friction(horizon=horizon, **kw)
