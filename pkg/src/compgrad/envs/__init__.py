"""Benchmark objectives and the name registry used by the harness and CLI."""

from compgrad.envs.base import (
    DifferentiableObjective,
    GradCheckResult,
    SmoothedOracle,
    central_difference,
    gradcheck,
    oracle_gradient,
    relative_error,
)
from compgrad.envs.collisions import BallWithWall, MomentumTransfer
from compgrad.envs.contact import Friction, Pushing, friction_env, pushing_env
from compgrad.envs.toys import CenteredQuadratic, Quadratic, Sigmoid, quadratic_env, sigmoid_env
from compgrad.errors import ConfigError, UnknownTaskError

REGISTRY = {
    "sigmoid": Sigmoid,
    "quadratic": Quadratic,
    "centered_quadratic": CenteredQuadratic,
    "ball_with_wall": BallWithWall,
    "momentum_transfer": MomentumTransfer,
    "pushing": Pushing,
    "friction": Friction,
}


def ball_with_wall_env(**params):
    return BallWithWall(**params)


def momentum_transfer_env(**params):
    return MomentumTransfer(**params)


def make_env(name, **params):
    try:
        cls = REGISTRY[name]
    except KeyError:
        raise UnknownTaskError(f"unknown task {name!r}; known: {', '.join(sorted(REGISTRY))}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc


def parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_kv(text, source="<string>"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        out[key.strip()] = parse_value(val)
    return out


def load_env_config(path):
    """Read environment constants from a ``key = value`` file.

    The optional ``task`` key selects the environment; remaining keys are
    passed to its constructor.
    """
    with open(path, encoding="utf-8") as fh:
        params = parse_kv(fh.read(), str(path))
    name = params.pop("task", None)
    if name is None:
        raise ConfigError(f"{path}: missing 'task' key")
    return make_env(name, **params)


__all__ = [
    "REGISTRY",
    "BallWithWall",
    "CenteredQuadratic",
    "DifferentiableObjective",
    "Friction",
    "GradCheckResult",
    "MomentumTransfer",
    "Pushing",
    "Quadratic",
    "Sigmoid",
    "SmoothedOracle",
    "ball_with_wall_env",
    "central_difference",
    "friction_env",
    "gradcheck",
    "load_env_config",
    "make_env",
    "momentum_transfer_env",
    "oracle_gradient",
    "parse_kv",
    "pushing_env",
    "quadratic_env",
    "relative_error",
    "sigmoid_env",
]
