"""Single-impact landscape tasks: ball with wall, and momentum transfer.

Both map one launch angle to a cost through a closed-form piecewise
trajectory. The pieces meet discontinuously at grazing contacts, whose
angles are computed analytically and exported as ``discontinuities``.
"""

import math

import numpy as np

from compgrad import dual
from compgrad.envs.base import DifferentiableObjective


class BallWithWall(DifferentiableObjective):
    """Projectile launched at angle theta toward a vertical wall; cost = -landing x.

    The ball starts at the origin with speed ``v0``. If the unobstructed arc
    reaches the wall line ``x = wall_x`` below ``wall_h`` it bounces back
    elastically and lands at the mirror image ``2 wall_x - R`` of the
    unobstructed range ``R = v0^2 sin(2 theta) / g``. Outside ``(0, pi/2)``
    the range formula is continued analytically (``R <= 0``, no wall
    contact), so Gaussian smoothing never sees an artificial kink at the
    ends of the launch interval.
    """

    name = "ball_with_wall"
    dim = 1
    domain = (0.02, math.pi / 2 - 0.02)

    def __init__(self, v0=10.0, gravity=9.81, wall_x=6.0, wall_h=2.5):
        super().__init__(v0=float(v0), gravity=float(gravity), wall_x=float(wall_x), wall_h=float(wall_h))
        self.v0, self.g, self.w, self.h = float(v0), float(gravity), float(wall_x), float(wall_h)
        self.grazing_angles = self._grazing_angles()
        self.reach_angles = self._reach_angles()
        # value jumps at the grazing angles; the reach angles are kinks
        self.discontinuities = tuple(self.grazing_angles) + tuple(self.reach_angles)

    def _grazing_angles(self):
        # w tan(t) - a (1 + tan^2 t) = h, a = g w^2 / (2 v0^2)
        a = self.g * self.w**2 / (2.0 * self.v0**2)
        disc = self.w**2 - 4.0 * a * (a + self.h)
        if disc <= 0:
            return ()
        r = math.sqrt(disc)
        return tuple(sorted(math.atan((self.w + s * r) / (2.0 * a)) for s in (-1.0, 1.0)))

    def _reach_angles(self):
        s = self.w * self.g / self.v0**2
        if s >= 1:
            return ()
        half = 0.5 * math.asin(s)
        return (half, math.pi / 2 - half)

    def jump_sizes(self):
        """Cost change across each grazing angle (clear minus blocked)."""
        out = []
        for th in self.grazing_angles:
            rng = self.v0**2 * math.sin(2 * th) / self.g
            out.append(abs(rng - (2 * self.w - rng)))
        return out

    def value_and_grad_batch(self, X):
        X = self._rows(X)
        th = X[:, 0]
        v2g = self.v0**2 / self.g
        R = v2g * np.sin(2 * th)
        dR = 2 * v2g * np.cos(2 * th)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            yw = self.w * np.tan(th) - self.g * self.w**2 / (2 * self.v0**2 * np.cos(th) ** 2)
        # R > w only happens for launch angles inside (0, pi/2)
        blocked = (R > self.w) & (yw < self.h)
        vals = np.where(blocked, -(2 * self.w - R), -R)
        grads = np.where(blocked, dR, -dR)
        return vals, grads[:, None]

    def expression(self, x):
        th = x[0]
        R = self.v0**2 * dual.sin(2 * th) / self.g
        if R > self.w:
            yw = self.w * dual.tan(th) - self.g * self.w**2 / (2 * self.v0**2 * dual.cos(th) ** 2)
            if yw < self.h:
                return -(2 * self.w - R)
        return -R


class MomentumTransfer(DifferentiableObjective):
    """Striker launched at angle theta toward a square puck; cost = -puck angular momentum.

    A point striker (mass ``m_striker``, speed ``speed``) leaves the origin
    along ``(cos theta, sin theta)``. The puck (mass ``m_puck``, half-width
    ``half``) rests at ``(px, py)`` with its left face at ``px - half``. A hit
    on that face at height offset ``b`` from the puck centre is an elastic
    rigid-body impact with normal ``+x``; the puck gains translation and
    spin. The objective is minus the puck's angular momentum about the
    pivot ``(px, py + arm)``. A miss transfers nothing, so the cost jumps
    at both face edges.
    """

    name = "momentum_transfer"
    dim = 1
    domain = (-0.6, 0.6)

    def __init__(self, speed=1.0, px=1.0, py=0.0, half=0.25, arm=1.5, m_striker=1.0, m_puck=1.0):
        super().__init__(speed=speed, px=px, py=py, half=half, arm=arm, m_striker=m_striker, m_puck=m_puck)
        self.speed, self.px, self.py, self.half, self.arm = map(float, (speed, px, py, half, arm))
        self.ms, self.mp = float(m_striker), float(m_puck)
        self.inertia = self.mp * (2 * self.half) ** 2 / 6.0
        face = self.px - self.half
        self.discontinuities = tuple(
            sorted(math.atan2(self.py + s * self.half, face) for s in (-1.0, 1.0))
        )

    def impact(self, theta):
        """Post-impact state ``(hit, impulse, v_puck, omega, v_striker)`` for one angle."""
        c, s = math.cos(theta), math.sin(theta)
        face = self.px - self.half
        if c <= 0:
            return False, 0.0, 0.0, 0.0, (self.speed * c, self.speed * s)
        b = face * s / c - self.py
        if abs(b) > self.half:
            return False, 0.0, 0.0, 0.0, (self.speed * c, self.speed * s)
        vn = self.speed * c
        J = 2.0 * vn / (1.0 / self.ms + 1.0 / self.mp + b * b / self.inertia)
        return True, J, J / self.mp, -b * J / self.inertia, (vn - J / self.ms, self.speed * s)

    def value_and_grad_batch(self, X):
        X = self._rows(X)
        th = X[:, 0]
        c, s = np.cos(th), np.sin(th)
        face = self.px - self.half
        safe_c = np.where(c > 0, c, 1.0)
        tn = s / safe_c
        b = face * tn - self.py
        hit = (c > 0) & (np.abs(b) <= self.half)
        db = face / safe_c**2
        denom = 1.0 / self.ms + 1.0 / self.mp + b * b / self.inertia
        ddenom = 2.0 * b * db / self.inertia
        J = 2.0 * self.speed * c / denom
        dJ = (-2.0 * self.speed * s * denom - 2.0 * self.speed * c * ddenom) / denom**2
        # L = m (P - Q) x v_cm + I omega = J * (arm - b)
        L = J * (self.arm - b)
        dL = dJ * (self.arm - b) - J * db
        vals = np.where(hit, -L, 0.0)
        grads = np.where(hit, -dL, 0.0)
        return vals, grads[:, None]

    def expression(self, x):
        th = x[0]
        c = dual.cos(th)
        if dual.value(c) <= 0:
            return 0.0 * th
        b = (self.px - self.half) * dual.sin(th) / c - self.py
        if abs(dual.value(b)) > self.half:
            return 0.0 * th
        J = 2.0 * self.speed * c / (1.0 / self.ms + 1.0 / self.mp + b * b / self.inertia)
        return -(J * (self.arm - b))
