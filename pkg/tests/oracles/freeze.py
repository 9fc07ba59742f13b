"""Compute reference values with tools independent of compgrad and freeze them.

    python3 tests/oracles/freeze.py   # rewrites tests/oracles/frozen.json

Nothing here imports compgrad: quadratures use mpmath, quantiles use
scipy.stats plus a brute-force Monte-Carlo quantile, and discontinuity
loci come from dense scans of hand-written cost functions.
"""

import json
import math
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy import stats

OUT = Path(__file__).with_name("frozen.json")
mp.mp.dps = 30


def chi2_quantiles():
    q_ppf = float(stats.chi2.ppf(0.05, 100))
    rng = np.random.default_rng(20240501)
    draws = rng.chisquare(100, size=10_000_000)
    q_mc = float(np.quantile(draws, 0.05))
    return {"dof": 100, "delta": 0.05, "ppf": q_ppf, "monte_carlo": q_mc,
            "eps_v_n101": 100.0 / q_ppf - 1.0}


def _sig(x, T):
    return 1 / (1 + mp.exp(-x / T))


def _dsig(x, T):
    z = x / T
    e = mp.exp(-abs(z))
    return e / (T * (1 + e) ** 2)


def sigmoid_smoothed(theta, sigma, T):
    """``E[f'(theta + sigma eps)]`` and ``E[f'^2]`` by mpmath quadrature."""
    pdf = lambda x: mp.npdf(x, theta, sigma)  # noqa: E731
    pts = [theta - 12 * sigma, -60 * T, 0, 60 * T, theta + 12 * sigma]
    pts = sorted(p for p in pts if theta - 12 * sigma <= p <= theta + 12 * sigma)
    m1 = mp.quad(lambda x: _dsig(x, T) * pdf(x), pts)
    m2 = mp.quad(lambda x: _dsig(x, T) ** 2 * pdf(x), pts)
    return float(m1), float(m2 - m1 * m1)


def ball_cost(th, v0=10.0, g=9.81, w=6.0, h=2.5):
    R = v0 * v0 * math.sin(2 * th) / g
    if R > w:
        yw = w * math.tan(th) - g * w * w / (2 * v0 * v0 * math.cos(th) ** 2)
        if yw < h:
            return -(2 * w - R)
    return -R


def scan_jumps(fn, lo, hi, step):
    """Locations and sizes of value jumps larger than 0.1 on a dense grid."""
    xs = np.arange(lo, hi, step)
    vals = np.array([fn(x) for x in xs])
    d = np.abs(np.diff(vals))
    idx = np.flatnonzero(d > 0.1)
    return [{"x": float(0.5 * (xs[i] + xs[i + 1])), "jump": float(d[i])} for i in idx]


def striker_cost(th, speed=1.0, px=1.0, py=0.0, half=0.25, arm=1.5, ms=1.0, mp_=1.0):
    c, s = math.cos(th), math.sin(th)
    face = px - half
    if c <= 0:
        return 0.0
    b = face * s / c - py
    if abs(b) > half:
        return 0.0
    inertia = mp_ * (2 * half) ** 2 / 6.0
    J = 2 * speed * c / (1 / ms + 1 / mp_ + b * b / inertia)
    return -J * (arm - b)


def main():
    out = {"chi2": chi2_quantiles()}
    g, v = sigmoid_smoothed(0.0, 1.0, 1.0)
    out["sigmoid_T1_theta0"] = {"grad": g, "g1_var": v}
    g, v = sigmoid_smoothed(1.0, 1.0, 1.0)
    out["sigmoid_T1_theta1"] = {"grad": g, "g1_var": v}
    g, v = sigmoid_smoothed(1.0, 1.0, 1e-5)
    out["sigmoid_T1e-5_theta1"] = {"grad": g, "g1_var": v}
    out["ball_jumps"] = scan_jumps(ball_cost, 0.01, math.pi / 2 - 0.01, 1e-6)
    out["momentum_jumps"] = scan_jumps(striker_cost, -0.6, 0.6, 1e-6)
    OUT.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
