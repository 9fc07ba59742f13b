"""Forward-mode automatic differentiation with vector-valued dual numbers.

A :class:`Dual` carries a real value and a tangent vector (one entry per
seeded input direction), so a single forward pass yields the full gradient
of a scalar function of ``D`` inputs.

The elementary functions in this module (``exp``, ``sin``, ...) accept plain
floats as well as duals, which lets environment code be written once and run
either for values only or for values plus derivatives.
"""

from __future__ import annotations

import math

import numpy as np


class Dual:
    __slots__ = ("val", "der")
    __array_priority__ = 1000

    def __init__(self, val, der):
        self.val = float(val)
        self.der = np.asarray(der, dtype=float)

    @classmethod
    def constant(cls, val, dim):
        return cls(val, np.zeros(dim))

    @classmethod
    def variables(cls, x):
        """Seed one dual per input coordinate with unit tangents."""
        x = np.asarray(x, dtype=float).ravel()
        eye = np.eye(x.size)
        return [cls(xi, eye[i]) for i, xi in enumerate(x)]

    def __repr__(self):
        return f"Dual({self.val!r}, {self.der!r})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        return Dual(self.val + other, self.der)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.der - other.der)
        return Dual(self.val - other, self.der)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.der)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.val * other.der + other.val * self.der)
        return Dual(self.val * other, self.der * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            return Dual(self.val * inv, (self.der - self.val * inv * other.der) * inv)
        return Dual(self.val / other, self.der / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        return Dual(other * inv, -other * inv * inv * self.der)

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __pos__(self):
        return self

    def __abs__(self):
        return self if self.val >= 0 else -self

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponent not supported")
        if p == 2:
            return Dual(self.val * self.val, 2.0 * self.val * self.der)
        return Dual(self.val**p, p * self.val ** (p - 1) * self.der)

    # comparisons act on the primal value (branch selection)
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)

    def __float__(self):
        return self.val


def value(x):
    return x.val if isinstance(x, Dual) else float(x)


def tangent(x, dim):
    return x.der if isinstance(x, Dual) else np.zeros(dim)


def _lift(f, df):
    def fn(x):
        if isinstance(x, Dual):
            return Dual(f(x.val), df(x.val) * x.der)
        return f(x)

    fn.__name__ = f.__name__
    return fn


exp = _lift(math.exp, math.exp)
log = _lift(math.log, lambda v: 1.0 / v)
sin = _lift(math.sin, math.cos)
cos = _lift(math.cos, lambda v: -math.sin(v))
tan = _lift(math.tan, lambda v: 1.0 / math.cos(v) ** 2)
tanh = _lift(math.tanh, lambda v: 1.0 - math.tanh(v) ** 2)
sqrt = _lift(math.sqrt, lambda v: 0.5 / math.sqrt(v))


def relu(x):
    """max(0, x) with derivative 0 on the non-positive side."""
    return x if value(x) > 0.0 else 0.0 * x


def sign(x):
    v = value(x)
    return 1.0 if v > 0 else (-1.0 if v < 0 else 0.0)


def clip(x, lo, hi):
    v = value(x)
    if v < lo:
        return lo + 0.0 * x
    if v > hi:
        return hi + 0.0 * x
    return x


def gradient(fn, x):
    """Value and gradient of a scalar function via one forward pass."""
    x = np.asarray(x, dtype=float).ravel()
    out = fn(Dual.variables(x))
    if isinstance(out, Dual):
        return out.val, out.der.copy()
    return float(out), np.zeros(x.size)
