"""Combining 0th- and 1st-order gradient estimates.

``g_alpha = alpha * g1 + (1 - alpha) * g0`` with ``alpha`` chosen by one of

* inverse-variance weighting (IVW): ``alpha = v0 / (v0 + v1)``;
* AoBG: IVW capped so that ``alpha * ||g1 - g0|| <= gamma - eps``;
* DDCG: IVW when a smoothness/variance-reliability test passes, else 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from compgrad.errors import ConfigError, ContractError, InsufficientSamplesError


class MixKind(str, enum.Enum):
    ZEROTH = "zeroth"
    FIRST = "first"
    IVW = "ivw"
    AOBG = "aobg"
    DDCG = "ddcg"


class VarianceMode(str, enum.Enum):
    SCALAR = "scalar"
    PER_DIMENSION = "per_dimension"


@dataclass(frozen=True)
class MixPolicy:
    kind: MixKind
    gamma: float | None = None
    c: float | None = None
    delta: float = 0.05
    variance_mode: VarianceMode = VarianceMode.SCALAR

    def __post_init__(self):
        object.__setattr__(self, "kind", MixKind(self.kind))
        object.__setattr__(self, "variance_mode", VarianceMode(self.variance_mode))
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.kind is MixKind.AOBG and not (self.gamma is not None and self.gamma > 0):
            raise ConfigError(f"AoBG needs gamma > 0, got {self.gamma}")
        if self.kind is MixKind.DDCG and not (self.c is not None and 0.0 <= self.c <= 1.0):
            raise ConfigError(f"DDCG needs c in [0, 1], got {self.c}")

    @classmethod
    def zeroth(cls):
        return cls(MixKind.ZEROTH)

    @classmethod
    def first(cls):
        return cls(MixKind.FIRST)

    @classmethod
    def ivw(cls, variance_mode=VarianceMode.SCALAR):
        return cls(MixKind.IVW, variance_mode=variance_mode)

    @classmethod
    def aobg(cls, gamma, delta=0.05, variance_mode=VarianceMode.SCALAR):
        return cls(MixKind.AOBG, gamma=gamma, delta=delta, variance_mode=variance_mode)

    @classmethod
    def ddcg(cls, c=0.3, delta=0.05):
        return cls(MixKind.DDCG, c=c, delta=delta)

    @property
    def name(self):
        return self.kind.value

    @classmethod
    def parse(cls, spec, gamma=None, c=None, delta=0.05):
        """Build a policy from a name such as ``"ddcg"`` or ``"aobg:gamma=0.1"``."""
        name, _, rest = spec.strip().partition(":")
        kwargs = {}
        for item in filter(None, rest.split(",")):
            key, _, val = item.partition("=")
            kwargs[key.strip()] = float(val)
        try:
            kind = MixKind(name.strip().lower())
        except ValueError as exc:
            raise ConfigError(f"unknown estimator {name!r}") from exc
        delta = kwargs.get("delta", delta)
        if kind is MixKind.AOBG:
            return cls.aobg(kwargs.get("gamma", gamma), delta=delta)
        if kind is MixKind.DDCG:
            return cls.ddcg(kwargs.get("c", 0.3 if c is None else c), delta=delta)
        return cls(kind, delta=delta)


@dataclass(frozen=True)
class MixResult:
    gradient: np.ndarray
    alpha: float | np.ndarray
    gate_passed: bool | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def alpha_mean(self):
        return float(np.mean(self.alpha))


def ivw_alpha(v0, v1):
    """Inverse-variance weight on the 1st-order estimate; elementwise for arrays.

    Both variances zero gives 1: the 1st-order estimate is then exact.
    """
    v0 = np.asarray(v0, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    if np.any(v0 < 0) or np.any(v1 < 0) or np.any(np.isnan(v0)) or np.any(np.isnan(v1)):
        raise ContractError(f"variances must be nonnegative, got v0={v0}, v1={v1}")
    total = v0 + v1
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = np.where(total > 0, v0 / np.where(total > 0, total, 1.0), 1.0)
    alpha = np.where(np.isinf(v0) & np.isinf(v1), 0.5, alpha)
    return float(alpha) if alpha.ndim == 0 else alpha


def combine(g0, g1, alpha):
    """Elementwise ``alpha * g1.mean + (1 - alpha) * g0.mean``."""
    m0 = np.asarray(getattr(g0, "mean", g0), dtype=float)
    m1 = np.asarray(getattr(g1, "mean", g1), dtype=float)
    if m0.shape != m1.shape:
        raise ConfigError(f"dimension mismatch: {m0.shape} vs {m1.shape}")
    a = np.asarray(alpha, dtype=float)
    if a.ndim and a.shape != m0.shape:
        raise ConfigError(f"alpha shape {a.shape} does not match gradient shape {m0.shape}")
    if np.any(a < 0) or np.any(a > 1):
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    # exact endpoints: no rounding from the zero-weighted term
    out = np.where(a == 1.0, m1, np.where(a == 0.0, m0, a * m1 + (1.0 - a) * m0))
    return np.array(out, dtype=float)


def _variances(g0, g1, mode):
    if VarianceMode(mode) is VarianceMode.PER_DIMENSION:
        return g0.var_per_dim, g1.var_per_dim
    return g0.var_scalar, g1.var_scalar


def aobg_confidence(g0, delta=0.05):
    """Normal-approximation half-width on the norm error of the mean 0th-order gradient."""
    z = special.ndtri(1.0 - delta / 2.0)
    return float(z * math.sqrt(g0.var_scalar / g0.n))


def aobg_alpha(g0, g1, gamma, delta=0.05, variance_mode=VarianceMode.SCALAR):
    if not gamma > 0:
        raise ConfigError(f"gamma must be > 0, got {gamma}")
    alpha_opt = ivw_alpha(*_variances(g0, g1, variance_mode))
    bias = float(np.linalg.norm(g1.mean - g0.mean))
    eps = aobg_confidence(g0, delta)
    budget = gamma - eps
    a = np.asarray(alpha_opt, dtype=float)
    if budget <= 0:
        alpha = np.zeros_like(a)
    else:
        capped = np.clip(budget / bias, 0.0, 1.0) if bias > 0 else 1.0
        alpha = np.where(a * bias <= budget, a, capped)
    alpha = float(alpha) if alpha.ndim == 0 else alpha
    diag = {"v0": g0.var_scalar, "v1": g1.var_scalar, "B": bias, "eps": eps, "alpha_opt": alpha_opt}
    return MixResult(combine(g0, g1, alpha), alpha, None, diag)


def chi2_lower_quantile(delta, dof):
    """``delta``-quantile of chi-squared(dof) by inverting the regularized lower incomplete gamma."""
    return 2.0 * float(special.gammaincinv(dof / 2.0, delta))


def variance_bound_epsilon(v_hat, n, delta):
    """One-sided upward allowance on the true variance given an empirical ``v_hat``.

    With ``(n-1) v_hat / V ~ chi2(n-1)``, ``V <= v_hat (n-1) / q_delta`` holds
    with probability ``1 - delta``; the allowance is the gap to ``v_hat``.
    """
    if n < 2:
        raise InsufficientSamplesError(f"variance bound needs n >= 2, got {n}")
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if v_hat < 0:
        raise ContractError(f"v_hat must be nonnegative, got {v_hat}")
    if v_hat == 0:
        return 0.0
    q = chi2_lower_quantile(delta, n - 1)
    return float(v_hat * ((n - 1) / q - 1.0))


def ddcg_test(batch, g1, dist, c, delta):
    """Discontinuity test: ``v1 + eps_v >= 2 (1 - c) V[f] / sigma^2 - 2 ||mean grad||^2``.

    Returns ``(passed, lhs, rhs)``.
    """
    eps_v = variance_bound_epsilon(g1.var_scalar, batch.n, delta)
    lhs = g1.var_scalar + eps_v
    var_f = float(np.var(batch.values, ddof=1))
    rhs = 2.0 * (1.0 - c) * var_f / dist.sigma**2 - 2.0 * float(g1.mean @ g1.mean)
    return bool(lhs >= rhs), float(lhs), float(rhs)


def ddcg_mix(g0, g1, batch, dist, c, delta, variance_mode=VarianceMode.SCALAR):
    passed, lhs, rhs = ddcg_test(batch, g1, dist, c, delta)
    alpha_opt = ivw_alpha(*_variances(g0, g1, variance_mode))
    alpha = alpha_opt if passed else (0.0 if np.ndim(alpha_opt) == 0 else np.zeros_like(alpha_opt))
    diag = {
        "v0": g0.var_scalar,
        "v1": g1.var_scalar,
        "eps_v": lhs - g1.var_scalar,
        "test_lhs": lhs,
        "test_rhs": rhs,
        "B": float(np.linalg.norm(g1.mean - g0.mean)),
        "alpha_opt": alpha_opt,
    }
    return MixResult(combine(g0, g1, alpha), alpha, passed, diag)


def mix(policy, g0, g1, batch=None, dist=None):
    """Apply a :class:`MixPolicy` to a pair of estimates from the same batch."""
    kind = policy.kind
    if kind is MixKind.ZEROTH:
        return MixResult(combine(g0, g1, 0.0), 0.0)
    if kind is MixKind.FIRST:
        return MixResult(combine(g0, g1, 1.0), 1.0)
    if kind is MixKind.IVW:
        alpha = ivw_alpha(*_variances(g0, g1, policy.variance_mode))
        diag = {"v0": g0.var_scalar, "v1": g1.var_scalar, "alpha_opt": alpha}
        return MixResult(combine(g0, g1, alpha), alpha, None, diag)
    if kind is MixKind.AOBG:
        return aobg_alpha(g0, g1, policy.gamma, policy.delta, policy.variance_mode)
    if batch is None or dist is None:
        raise ConfigError("DDCG needs the sample batch and smoothing distribution")
    return ddcg_mix(g0, g1, batch, dist, policy.c, policy.delta, policy.variance_mode)
