"""Stepwise inverse-variance fusion (IVW-H) for multi-step policy optimization.

A batch of ``N`` actors rolls out a tanh-squashed Gaussian policy for ``H``
steps. For every step ``t``, actor ``n`` and distribution parameter ``p``
(the ``A`` means followed by the ``A`` log-scales, so ``P = 2A``) we form

* ``g1[t, n, p]``: derivative of the pathwise loss ``-(sum of rewards)``
  w.r.t. that parameter, by a reverse pass through the env Jacobians;
* ``g0[t, n, p]``: score-function term ``A[t, n] * d(-log p(u))/d(param)``
  with Monte-Carlo reward-to-go advantages.

Variances across actors at fixed ``(t, p)`` give ``alpha[t, p]``; the fused
per-step gradients are pushed to the policy weights by one VJP.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from compgrad.composite import ivw_alpha
from compgrad.errors import ConfigError, NumericError

NORMALIZATIONS = ("matched", "as_written")
MODES = ("first", "zeroth", "ivwh")


# ---------------------------------------------------------------------------
# environments
# ---------------------------------------------------------------------------


@dataclass
class StepResult:
    next_state: np.ndarray  # (N, S)
    reward: np.ndarray  # (N,)
    ds: np.ndarray  # (N, S, S)  d next / d state
    da: np.ndarray  # (N, S, A)  d next / d action
    dr_ds: np.ndarray  # (N, S)
    dr_da: np.ndarray  # (N, A)


class TrajectoryEnv:
    """Batched differentiable env; subclasses define ``_dynamics`` and ``_reward``.

    ``_dynamics(S, A)`` returns ``(next, d next/d S, d next/d A)``.
    ``_reward(next, A)`` returns ``(r, dr/d next, partial dr/d A)``; the total
    reward derivatives are chained here. ``steps`` counts actor-steps.
    """

    name = "trajectory"
    state_dim = 1
    action_dim = 1

    def __init__(self, horizon, episode_length=None, init_noise=0.0):
        if horizon < 1:
            raise ConfigError("horizon must be >= 1")
        self.horizon = int(horizon)
        self.episode_length = int(episode_length or horizon)
        if self.episode_length < 1:
            raise ConfigError("episode_length must be >= 1")
        self.init_noise = float(init_noise)
        self.steps = 0

    def initial_state(self):
        return np.zeros(self.state_dim)

    def reset(self, n_actors, seed=0, episode=0):
        s = np.tile(self.initial_state(), (n_actors, 1))
        if self.init_noise > 0:
            rng = np.random.default_rng((seed, episode, 7))
            s = s + self.init_noise * rng.standard_normal(s.shape)
        return s

    def _dynamics(self, S, A):
        raise NotImplementedError

    def _reward(self, nxt, A):
        raise NotImplementedError

    def step(self, S, A):
        S = np.asarray(S, dtype=float)
        A = np.asarray(A, dtype=float)
        self.steps += S.shape[0]
        nxt, ds, da = self._dynamics(S, A)
        r, dr_dn, dr_da = self._reward(nxt, A)
        return StepResult(
            nxt, r, ds, da,
            np.einsum("ns,nsk->nk", dr_dn, ds),
            dr_da + np.einsum("ns,nsa->na", dr_dn, da),
        )


def check_step_jacobians(env, n_points=50, seed=0, rel_step=1e-6, scale=1.0):
    """Max relative error of ``step`` Jacobians against central differences."""
    rng = np.random.default_rng(seed)
    S = scale * rng.standard_normal((n_points, env.state_dim))
    A = np.tanh(rng.standard_normal((n_points, env.action_dim)))
    res = env.step(S, A)
    analytic = np.concatenate(
        [res.ds, res.da, res.dr_ds[:, None, :], res.dr_da[:, None, :]], axis=None
    )
    fd_ds = np.empty_like(res.ds)
    fd_da = np.empty_like(res.da)
    fd_rs = np.empty_like(res.dr_ds)
    fd_ra = np.empty_like(res.dr_da)
    for k in range(env.state_dim):
        h = rel_step * np.maximum(1.0, np.abs(S[:, k]))
        Sp, Sm = S.copy(), S.copy()
        Sp[:, k] += h
        Sm[:, k] -= h
        p, m = env.step(Sp, A), env.step(Sm, A)
        fd_ds[:, :, k] = (p.next_state - m.next_state) / (2 * h[:, None])
        fd_rs[:, k] = (p.reward - m.reward) / (2 * h)
    for k in range(env.action_dim):
        h = rel_step * np.maximum(1.0, np.abs(A[:, k]))
        Ap, Am = A.copy(), A.copy()
        Ap[:, k] += h
        Am[:, k] -= h
        p, m = env.step(S, Ap), env.step(S, Am)
        fd_da[:, :, k] = (p.next_state - m.next_state) / (2 * h[:, None])
        fd_ra[:, k] = (p.reward - m.reward) / (2 * h)
    fd = np.concatenate([fd_ds, fd_da, fd_rs[:, None, :], fd_ra[:, None, :]], axis=None)
    return float(np.max(np.abs(analytic - fd)) / max(1.0, float(np.max(np.abs(fd)))))


class LinearEnv(TrajectoryEnv):
    """``s' = M s + B a`` with reward ``-q ||s' - target||^2 - rho ||a||^2``.

    Defaults to a 1-D double integrator (position, velocity).
    """

    name = "linear"

    def __init__(self, horizon=10, M=None, B=None, target=None, s0=None, q=1.0, rho=0.01, dt=0.1,
                 episode_length=None, init_noise=0.0):
        super().__init__(horizon, episode_length, init_noise)
        self.M = np.array([[1.0, dt], [0.0, 1.0]]) if M is None else np.atleast_2d(np.asarray(M, float))
        self.B = np.array([[0.0], [dt]]) if B is None else np.atleast_2d(np.asarray(B, float))
        self.state_dim, self.action_dim = self.B.shape
        if self.M.shape != (self.state_dim, self.state_dim):
            raise ConfigError("M must be square with the row count of B")
        self.target = np.zeros(self.state_dim) if target is None else np.asarray(target, float)
        self.s0 = np.zeros(self.state_dim) if s0 is None else np.asarray(s0, float)
        self.q, self.rho = float(q), float(rho)

    def initial_state(self):
        return self.s0.copy()

    def _dynamics(self, S, A):
        n = S.shape[0]
        nxt = S @ self.M.T + A @ self.B.T
        return nxt, np.broadcast_to(self.M, (n,) + self.M.shape), np.broadcast_to(self.B, (n,) + self.B.shape)

    def _reward(self, nxt, A):
        d = nxt - self.target
        r = -self.q * np.einsum("ns,ns->n", d, d) - self.rho * np.einsum("na,na->n", A, A)
        return r, -2.0 * self.q * d, -2.0 * self.rho * A

    def closed_form_states(self, actions):
        """States under a fixed action sequence ``actions`` (H, A), by powers of ``M``."""
        H = len(actions)
        out = [self.s0.copy()]
        for t in range(1, H + 1):
            s = np.linalg.matrix_power(self.M, t) @ self.s0
            for k in range(t):
                s = s + np.linalg.matrix_power(self.M, t - 1 - k) @ self.B @ actions[k]
            out.append(s)
        return np.array(out)


class PointMassGoal(TrajectoryEnv):
    """2-D point mass driven to a goal under linear drag; smooth everywhere.

    State ``(px, py, vx, vy)``; action in ``[-1, 1]^2`` scaled by ``max_force``.
    Semi-implicit Euler; reward ``-||p' - goal||^2 - rho ||a||^2``.
    """

    name = "point_mass"
    state_dim = 4
    action_dim = 2

    def __init__(self, horizon=30, dt=0.1, mass=1.0, max_force=2.0, drag=0.5, goal=(1.0, 1.0),
                 rho=0.01, episode_length=None, init_noise=0.0):
        super().__init__(horizon, episode_length, init_noise)
        self.dt, self.mass, self.max_force, self.drag = float(dt), float(mass), float(max_force), float(drag)
        self.goal = np.asarray(goal, dtype=float)
        self.rho = float(rho)
        dt = self.dt
        kv = 1.0 - dt * self.drag
        self._M = np.array([
            [1.0, 0.0, dt * kv, 0.0],
            [0.0, 1.0, 0.0, dt * kv],
            [0.0, 0.0, kv, 0.0],
            [0.0, 0.0, 0.0, kv],
        ])
        c = dt * self.max_force / self.mass
        self._B = np.array([[dt * c, 0.0], [0.0, dt * c], [c, 0.0], [0.0, c]])

    def _dynamics(self, S, A):
        n = S.shape[0]
        nxt = S @ self._M.T + A @ self._B.T
        return nxt, np.broadcast_to(self._M, (n, 4, 4)), np.broadcast_to(self._B, (n, 4, 2))

    def _reward(self, nxt, A):
        d = nxt[:, :2] - self.goal
        r = -np.einsum("ns,ns->n", d, d) - self.rho * np.einsum("na,na->n", A, A)
        dn = np.zeros_like(nxt)
        dn[:, :2] = -2.0 * d
        return r, dn, -2.0 * self.rho * A

    def zero_action_return(self):
        """Closed-form return when every action is zero (the mass never moves)."""
        d = self.initial_state()[:2] - self.goal
        return -self.horizon * float(d @ d)


class BouncingPointMass(TrajectoryEnv):
    """Vertical point mass above a floor with spring-damper contact.

    State ``(y, v)``; action ``a in [-1, 1]`` is thrust ``max_force * a``.
    Contact force ``k * pen - c * v`` while ``pen = -y > 0``. Reward
    ``-(y' - target)^2 - rho a^2``. Large ``k`` makes the contact stiff:
    the per-step Jacobians during contact are far from identity.
    """

    name = "bouncing"
    state_dim = 2
    action_dim = 1

    def __init__(self, horizon=50, dt=0.02, substeps=4, mass=1.0, gravity=9.81, max_force=20.0,
                 stiffness=1.0e5, damping=0.5, y0=1.0, target=0.6, rho=0.01, episode_length=None,
                 init_noise=0.0):
        super().__init__(horizon, episode_length, init_noise)
        if not stiffness > 0:
            raise ConfigError("stiffness must be > 0")
        self.dt, self.substeps = float(dt), int(substeps)
        self.mass, self.gravity, self.max_force = float(mass), float(gravity), float(max_force)
        self.k, self.c = float(stiffness), float(damping)
        self.y0, self.target, self.rho = float(y0), float(target), float(rho)

    def initial_state(self):
        return np.array([self.y0, 0.0])

    def _dynamics(self, S, A):
        n = S.shape[0]
        h = self.dt / self.substeps
        y, v = S[:, 0].copy(), S[:, 1].copy()
        # running Jacobian of (y, v) w.r.t. (y0, v0, a)
        J = np.zeros((n, 2, 3))
        J[:, 0, 0] = 1.0
        J[:, 1, 1] = 1.0
        thrust = self.max_force * A[:, 0] / self.mass
        for _ in range(self.substeps):
            contact = y < 0.0
            acc = thrust - self.gravity + np.where(contact, (-self.k * y - self.c * v) / self.mass, 0.0)
            dacc_dy = np.where(contact, -self.k / self.mass, 0.0)
            dacc_dv = np.where(contact, -self.c / self.mass, 0.0)
            # d acc / d(y0, v0, a)
            dacc = dacc_dy[:, None] * J[:, 0] + dacc_dv[:, None] * J[:, 1]
            dacc[:, 2] += self.max_force / self.mass
            v = v + h * acc
            Jv = J[:, 1] + h * dacc
            y = y + h * v
            J = np.stack([J[:, 0] + h * Jv, Jv], axis=1)
        nxt = np.stack([y, v], axis=1)
        return nxt, J[:, :, :2], J[:, :, 2:]

    def _reward(self, nxt, A):
        d = nxt[:, 0] - self.target
        dn = np.zeros_like(nxt)
        dn[:, 0] = -2.0 * d
        return -d * d - self.rho * A[:, 0] ** 2, dn, -2.0 * self.rho * A


class ObjectiveEnv(TrajectoryEnv):
    """One-step wrapper of a :class:`DifferentiableObjective`: reward ``-f(a)``.

    Pair with an unsquashed policy to recover the plain smoothing estimators.
    """

    name = "objective"
    state_dim = 1

    def __init__(self, objective):
        super().__init__(1)
        self.objective = objective
        self.action_dim = objective.dim

    def _dynamics(self, S, A):
        n = S.shape[0]
        return S.copy(), np.ones((n, 1, 1)), np.zeros((n, 1, self.action_dim))

    def _reward(self, nxt, A):
        vals, grads = self.objective.value_and_grad_batch(A)
        return -vals, np.zeros_like(nxt), -grads


TRAJECTORY_ENVS = {
    "linear": LinearEnv,
    "point_mass": PointMassGoal,
    "bouncing": BouncingPointMass,
}


def make_trajectory_env(name, **params):
    try:
        cls = TRAJECTORY_ENVS[name]
    except KeyError:
        from compgrad.errors import UnknownTaskError

        raise UnknownTaskError(
            f"unknown trajectory env {name!r}; known: {', '.join(sorted(TRAJECTORY_ENVS))}"
        ) from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc


# ---------------------------------------------------------------------------
# policy
# ---------------------------------------------------------------------------


class GaussianPolicy:
    """Linear-Gaussian policy ``u ~ N(W s + b, diag(exp(2 log_std)))``, ``a = tanh(u)``.

    ``log_std`` is state-independent and clamped to ``log_std_bounds``;
    outside the bounds it receives no gradient. ``squash=False`` acts with
    ``u`` directly.
    """

    def __init__(self, state_dim, action_dim, log_std_init=-0.5, log_std_bounds=(-5.0, 1.0),
                 squash=True, W=None, b=None):
        lo, hi = log_std_bounds
        if not lo < hi:
            raise ConfigError("log_std_bounds must be an increasing pair")
        self.state_dim, self.action_dim = int(state_dim), int(action_dim)
        self.log_std_bounds = (float(lo), float(hi))
        self.squash = bool(squash)
        self.W = np.zeros((action_dim, state_dim)) if W is None else np.array(W, dtype=float)
        self.b = np.zeros(action_dim) if b is None else np.array(b, dtype=float)
        self.log_std = np.full(action_dim, float(log_std_init))

    @property
    def n_params(self):
        return self.W.size + 2 * self.action_dim

    def get_flat(self):
        return np.concatenate([self.W.ravel(), self.b, self.log_std])

    def set_flat(self, theta):
        theta = np.asarray(theta, dtype=float)
        k = self.W.size
        A = self.action_dim
        self.W = theta[:k].reshape(self.W.shape).copy()
        self.b = theta[k:k + A].copy()
        self.log_std = theta[k + A:k + 2 * A].copy()

    def effective_log_std(self):
        lo, hi = self.log_std_bounds
        return np.clip(self.log_std, lo, hi)

    def log_std_active(self):
        lo, hi = self.log_std_bounds
        return ((self.log_std >= lo) & (self.log_std <= hi)).astype(float)

    def mean(self, S):
        return S @ self.W.T + self.b

    def act(self, u):
        return np.tanh(u) if self.squash else u

    def act_derivative(self, a):
        return 1.0 - a * a if self.squash else np.ones_like(a)


# ---------------------------------------------------------------------------
# rollout and per-step gradients
# ---------------------------------------------------------------------------


@dataclass
class RolloutData:
    states: np.ndarray  # (H, N, S) state at which step t acts
    final_states: np.ndarray  # (N, S)
    noises: np.ndarray  # (H, N, A)
    means: np.ndarray  # (H, N, A)
    log_std: np.ndarray  # (A,) clamped
    actions: np.ndarray  # (H, N, A) post-squash
    rewards: np.ndarray  # (H, N)
    mask: np.ndarray  # (H, N) episode starts
    jac_s: np.ndarray  # (H, N, S, S)
    jac_a: np.ndarray  # (H, N, S, A)
    dr_ds: np.ndarray  # (H, N, S)
    dr_da: np.ndarray  # (H, N, A)
    sim_steps: int = 0

    @property
    def horizon(self):
        return self.rewards.shape[0]

    @property
    def n_actors(self):
        return self.rewards.shape[1]

    @property
    def n_trajectories(self):
        return int(self.mask.sum())

    def episode_returns(self):
        """Total reward per (episode, actor), flattened."""
        starts = np.flatnonzero(self.mask[:, 0])
        bounds = list(starts) + [self.horizon]
        return np.concatenate([self.rewards[a:b].sum(axis=0) for a, b in zip(bounds[:-1], bounds[1:])])


def rollout(env, policy, n_actors, seed=0, noise=None):
    """Roll out ``n_actors`` actors for ``env.horizon`` steps, caching Jacobians.

    ``noise`` (H, N, A) overrides the standard-normal draws (e.g. zeros for a
    deterministic check); otherwise they come from ``seed``.
    """
    if n_actors < 2:
        raise ConfigError(f"rollout needs n_actors >= 2, got {n_actors}")
    H, A, S_dim = env.horizon, env.action_dim, env.state_dim
    if (policy.state_dim, policy.action_dim) != (S_dim, A):
        raise ConfigError("policy dimensions do not match the environment")
    if noise is None:
        noise = np.random.default_rng(seed).standard_normal((H, n_actors, A))
    else:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != (H, n_actors, A):
            raise ConfigError(f"noise shape {noise.shape} != {(H, n_actors, A)}")
    log_std = policy.effective_log_std()
    std = np.exp(log_std)
    steps_before = env.steps
    states = np.empty((H, n_actors, S_dim))
    means = np.empty((H, n_actors, A))
    actions = np.empty((H, n_actors, A))
    rewards = np.empty((H, n_actors))
    mask = np.zeros((H, n_actors), dtype=bool)
    jac_s = np.empty((H, n_actors, S_dim, S_dim))
    jac_a = np.empty((H, n_actors, S_dim, A))
    dr_ds = np.empty((H, n_actors, S_dim))
    dr_da = np.empty((H, n_actors, A))
    s = None
    for t in range(H):
        if t % env.episode_length == 0:
            s = env.reset(n_actors, seed, t // env.episode_length)
            mask[t] = True
        states[t] = s
        mu = policy.mean(s)
        a = policy.act(mu + std * noise[t])
        res = env.step(s, a)
        bad = ~(np.all(np.isfinite(res.next_state), axis=1) & np.isfinite(res.reward))
        if np.any(bad):
            n = int(np.flatnonzero(bad)[0])
            raise NumericError(f"non-finite state at step {t}, actor {n}", location=(t, n))
        means[t], actions[t], rewards[t] = mu, a, res.reward
        jac_s[t], jac_a[t], dr_ds[t], dr_da[t] = res.ds, res.da, res.dr_ds, res.dr_da
        s = res.next_state
    return RolloutData(states, s, noise, means, log_std, actions, rewards, mask,
                       jac_s, jac_a, dr_ds, dr_da, env.steps - steps_before)


def reward_to_go(rewards, mask):
    """Sum of rewards from ``t`` to the end of the episode containing ``t``."""
    out = np.empty_like(rewards)
    acc = np.zeros(rewards.shape[1])
    for t in range(rewards.shape[0] - 1, -1, -1):
        acc = acc + rewards[t]
        out[t] = acc
        acc = np.where(mask[t], 0.0, acc)
    return out


def advantages(rewards, mask):
    """Reward-to-go minus a leave-one-out mean over the other actors at the same step."""
    G = reward_to_go(rewards, mask)
    n = G.shape[1]
    if n < 2:
        raise ConfigError("advantages need at least two actors")
    baseline = (G.sum(axis=1, keepdims=True) - G) / (n - 1)
    return G - baseline


@dataclass
class StepGradTensor:
    g0: np.ndarray  # (H, N, P), P = 2A: means then log-scales
    g1: np.ndarray  # (H, N, P)
    advantages: np.ndarray  # (H, N)
    mask: np.ndarray  # (H, N)
    scale: float = 1.0  # factor applied when pushing to parameters

    @property
    def shape(self):
        return self.g0.shape


def _pathwise_adjoints(data, policy, weight):
    """Reverse pass: adjoint of every pre-squash parameter for loss ``-weight * sum r``."""
    H, N, A = data.actions.shape
    std = np.exp(data.log_std)
    g1 = np.empty((H, N, 2 * A))
    lam = np.zeros((N, data.states.shape[2]))
    for t in range(H - 1, -1, -1):
        if t + 1 == H or data.mask[t + 1, 0]:
            lam = np.zeros_like(lam)
        a_bar = -weight * data.dr_da[t] + np.einsum("ns,nsa->na", lam, data.jac_a[t])
        u_bar = a_bar * policy.act_derivative(data.actions[t])
        g1[t, :, :A] = u_bar
        g1[t, :, A:] = u_bar * std * data.noises[t]
        lam = -weight * data.dr_ds[t] + np.einsum("ns,nsk->nk", lam, data.jac_s[t]) + u_bar @ policy.W
    return g1


def per_step_gradients(data, policy, normalization="matched", normalize_advantages=None):
    """Per-step, per-actor, per-parameter 0th- and 1st-order gradients.

    ``matched``: both are per-trajectory quantities and the parameter push
    divides by the number of trajectories ``M``.
    ``as_written``: ``g1`` carries the ``1/M`` of the pathwise loss and
    ``g0`` the batch mean ``1/(H N)`` with standardized advantages.
    """
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")
    H, N, A = data.actions.shape
    M = data.n_trajectories
    adv = advantages(data.rewards, data.mask)
    if normalize_advantages is None:
        normalize_advantages = normalization == "as_written"
    adv_used = adv
    if normalize_advantages:
        sd = adv.std()
        adv_used = (adv - adv.mean()) / (sd if sd > 0 else 1.0)
    if normalization == "matched":
        w1, w0, scale = 1.0, 1.0, 1.0 / M
    else:
        w1, w0, scale = 1.0 / M, 1.0 / (H * N), 1.0
    g1 = _pathwise_adjoints(data, policy, w1)
    std = np.exp(data.log_std)
    eps = data.noises
    # -d log N(u; mu, std) / d mu = -eps / std ;  / d log std = 1 - eps^2
    score = np.concatenate([-eps / std, 1.0 - eps * eps], axis=2)
    g0 = w0 * adv_used[:, :, None] * score
    for name, g in (("g0", g0), ("g1", g1)):
        bad = ~np.all(np.isfinite(g), axis=2)
        if np.any(bad):
            t, n = (int(i) for i in np.argwhere(bad)[0])
            raise NumericError(f"non-finite {name} at step {t}, actor {n}", location=(t, n))
    return StepGradTensor(g0, g1, adv, data.mask.copy(), scale)


def ivwh_fuse(tensor, alpha_override=None):
    """Per-(t, p) IVW across the actor axis. Returns ``(fused, alpha)``."""
    g0, g1 = tensor.g0, tensor.g1
    if g0.shape[1] < 2:
        raise ConfigError("IVW-H needs at least two actors")
    if alpha_override is None:
        v0 = np.var(g0, axis=1, ddof=1)
        v1 = np.var(g1, axis=1, ddof=1)
        alpha = np.asarray(ivw_alpha(v0, v1), dtype=float).reshape(v0.shape)
    else:
        alpha = np.broadcast_to(np.asarray(alpha_override, dtype=float), (g0.shape[0], g0.shape[2])).copy()
    a = alpha[:, None, :]
    fused = np.where(a == 1.0, g1, np.where(a == 0.0, g0, a * g1 + (1.0 - a) * g0))
    return fused, alpha


def push_to_parameters(fused, policy, data, scale=1.0, clip_norm=None):
    """VJP of per-step parameter gradients through the policy.

    Returns ``(gradient, norm_before_clipping)`` with the gradient in the
    layout of :meth:`GaussianPolicy.get_flat`.
    """
    A = policy.action_dim
    f_mu, f_ls = fused[:, :, :A], fused[:, :, A:]
    grad_W = np.einsum("tna,tns->as", f_mu, data.states)
    grad_b = f_mu.sum(axis=(0, 1))
    grad_ls = f_ls.sum(axis=(0, 1)) * policy.log_std_active()
    grad = scale * np.concatenate([grad_W.ravel(), grad_b, grad_ls])
    norm = float(np.linalg.norm(grad))
    if clip_norm is not None and np.isfinite(clip_norm) and norm > clip_norm:
        grad = grad * (clip_norm / norm)
    return grad, norm


# ---------------------------------------------------------------------------
# reference parameter gradients (independent of the per-step decomposition)
# ---------------------------------------------------------------------------


def pathwise_parameter_gradient(data, policy):
    """Gradient of ``-(1/M) sum of rewards`` w.r.t. the policy weights by forward sensitivities."""
    H, N, A = data.actions.shape
    S = data.states.shape[2]
    P = policy.n_params
    std = np.exp(data.log_std)
    active = policy.log_std_active()
    total = np.zeros((N, P))
    ds = np.zeros((N, S, P))
    for t in range(H):
        if data.mask[t, 0]:
            ds = np.zeros((N, S, P))
        s = data.states[t]
        # d mu / d theta: through W s + b and through the state
        dmu = np.einsum("as,nsp->nap", policy.W, ds)
        for a in range(A):
            dmu[:, a, a * S:(a + 1) * S] += s
            dmu[:, a, A * S + a] += 1.0
        du = dmu.copy()
        for a in range(A):
            du[:, a, A * S + A + a] += std[a] * data.noises[t, :, a] * active[a]
        da = du * policy.act_derivative(data.actions[t])[:, :, None]
        total += np.einsum("ns,nsp->np", data.dr_ds[t], ds) + np.einsum("na,nap->np", data.dr_da[t], da)
        ds = np.einsum("nsk,nkp->nsp", data.jac_s[t], ds) + np.einsum("nsa,nap->nsp", data.jac_a[t], da)
    return -total.sum(axis=0) / data.n_trajectories


def score_parameter_gradient(data, policy, adv, weight):
    """``weight * sum_{t,n} adv[t,n] * grad_theta(-log pi(u | s))`` written directly in weights."""
    A = policy.action_dim
    std = np.exp(data.log_std)
    eps = data.noises
    c_mu = adv[:, :, None] * (-eps / std)
    c_ls = adv[:, :, None] * (1.0 - eps * eps)
    grad_W = np.einsum("tna,tns->as", c_mu, data.states)
    return weight * np.concatenate([grad_W.ravel(), c_mu.sum(axis=(0, 1)),
                                    c_ls.sum(axis=(0, 1)) * policy.log_std_active()])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    n_actors: int = 32
    iterations: int = 100
    lr: float = 0.01
    mode: str = "ivwh"
    clip_norm: float | None = 10.0
    normalization: str = "matched"
    seed: int = 0
    log_std_init: float = -0.5
    log_std_min: float = -5.0
    log_std_max: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if self.n_actors < 2 or self.iterations < 0 or self.lr < 0:
            raise ConfigError("need n_actors >= 2, iterations >= 0, lr >= 0")


@dataclass
class TrainRecord:
    iteration: int
    return_mean: float
    return_stderr: float
    alpha_mean: float
    grad_norm: float
    sim_steps: int
    status: str = "ok"


TRAIN_FIELDS = tuple(TrainRecord.__dataclass_fields__)


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mh = self.m / (1 - self.beta1**self.t)
        vh = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * mh / (np.sqrt(vh) + self.eps)


def make_policy(env, config):
    return GaussianPolicy(env.state_dim, env.action_dim, config.log_std_init,
                          (config.log_std_min, config.log_std_max))


def train(env, policy, config):
    """Adam on the fused gradient; one rollout of ``n_actors x H`` steps per iteration.

    A non-finite rollout or gradient ends the run with a ``diverged`` record.
    """
    opt = Adam(config.lr)
    records = []
    for it in range(config.iterations):
        try:
            data = rollout(env, policy, config.n_actors, seed=(config.seed, it))
            tensor = per_step_gradients(data, policy, config.normalization)
            if config.mode == "first":
                fused, alpha = ivwh_fuse(tensor, 1.0)
            elif config.mode == "zeroth":
                fused, alpha = ivwh_fuse(tensor, 0.0)
            else:
                fused, alpha = ivwh_fuse(tensor)
            grad, norm = push_to_parameters(fused, policy, data, tensor.scale, config.clip_norm)
            if not np.all(np.isfinite(grad)):
                raise NumericError("non-finite parameter gradient", location=it)
        except NumericError:
            records.append(TrainRecord(it, math.nan, math.nan, math.nan, math.nan, 0, "diverged"))
            break
        rets = data.episode_returns()
        records.append(TrainRecord(it, float(rets.mean()), float(rets.std(ddof=1) / math.sqrt(rets.size)),
                                   float(alpha.mean()), norm, data.sim_steps))
        policy.set_flat(opt.step(policy.get_flat(), grad))
    return records


def write_train_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRAIN_FIELDS)
    for r in records:
        w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])


def final_return(records, window=1):
    ok = [r.return_mean for r in records if r.status == "ok"]
    if not ok or records[-1].status != "ok":
        return -math.inf
    return float(np.mean(ok[-window:]))


__all__ = [
    "BouncingPointMass",
    "GaussianPolicy",
    "LinearEnv",
    "ObjectiveEnv",
    "PointMassGoal",
    "RolloutData",
    "StepGradTensor",
    "TrainConfig",
    "TrainRecord",
    "TrajectoryEnv",
    "advantages",
    "check_step_jacobians",
    "ivwh_fuse",
    "make_trajectory_env",
    "pathwise_parameter_gradient",
    "per_step_gradients",
    "push_to_parameters",
    "reward_to_go",
    "rollout",
    "score_parameter_gradient",
    "train",
]
