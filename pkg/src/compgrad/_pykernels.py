"""Pure-NumPy rollout kernels (fallback when the compiled extension is absent).

Every kernel takes a batch of control sequences ``U`` with shape ``(N, H)``
and returns ``values (N,)``, ``grads (N, H)`` and ``margins (N,)``. Gradients
are propagated forward (tangent vectors, one per control step); ``margins``
is a first-order estimate of the parameter-space distance to the nearest
branch switch seen during the rollout.

The compiled extension ``_ckernels`` implements the same signatures.
"""

import numpy as np

_TINY = 1e-300


def _margin_update(margin, gap, dgap):
    norm = np.sqrt(np.einsum("ij,ij->i", dgap, dgap))
    return np.minimum(margin, np.abs(gap) / np.maximum(norm, _TINY))


def pushing_rollout(U, k, dt, substeps, m1, m2, size, x1_0, x2_0, goal, effort):
    U = np.ascontiguousarray(U, dtype=float)
    n, horizon = U.shape
    h = dt / substeps
    x1 = np.full(n, x1_0)
    x2 = np.full(n, x2_0)
    v1 = np.zeros(n)
    v2 = np.zeros(n)
    dx1 = np.zeros((n, horizon))
    dx2 = np.zeros((n, horizon))
    dv1 = np.zeros((n, horizon))
    dv2 = np.zeros((n, horizon))
    margin = np.full(n, np.inf)
    for t in range(horizon):
        u = U[:, t]
        for _ in range(substeps):
            pen = x1 + size - x2
            dpen = dx1 - dx2
            margin = _margin_update(margin, pen, dpen)
            contact = pen > 0.0
            force = np.where(contact, k * pen, 0.0)
            dforce = np.where(contact[:, None], k * dpen, 0.0)
            v1 = v1 + h * (u - force) / m1
            dv1 = dv1 - (h / m1) * dforce
            dv1[:, t] += h / m1
            v2 = v2 + h * force / m2
            dv2 = dv2 + (h / m2) * dforce
            x1 = x1 + h * v1
            dx1 = dx1 + h * dv1
            x2 = x2 + h * v2
            dx2 = dx2 + h * dv2
    err = x2 - goal
    values = err * err + effort * np.einsum("ij,ij->i", U, U)
    grads = 2.0 * err[:, None] * dx2 + 2.0 * effort * U
    return values, grads, margin


def friction_rollout(U, dt, m1, m2, mu_s, mu_k, gravity, v_eps, x2_0, goal):
    U = np.ascontiguousarray(U, dtype=float)
    n, horizon = U.shape
    normal = m2 * gravity
    mred = m1 * m2 / (m1 + m2)
    x2 = np.full(n, x2_0)
    v1 = np.zeros(n)
    v2 = np.zeros(n)
    dx2 = np.zeros((n, horizon))
    dv1 = np.zeros((n, horizon))
    dv2 = np.zeros((n, horizon))
    margin = np.full(n, np.inf)
    for t in range(horizon):
        u = U[:, t]
        vrel = v2 - v1
        dvrel = dv2 - dv1
        sgn_v = np.sign(vrel)
        margin = _margin_update(margin, np.abs(vrel) - v_eps, sgn_v[:, None] * dvrel)
        near = np.abs(vrel) < v_eps
        freq = mred * (u / m1 - vrel / dt)
        dfreq = -(mred / dt) * dvrel
        dfreq[:, t] += mred / m1
        sgn_f = np.sign(freq)
        over = np.abs(freq) - mu_s * normal
        m_stick = _margin_update(margin, over, sgn_f[:, None] * dfreq)
        margin = np.where(near, m_stick, margin)
        stick = near & (over <= 0.0)
        f = np.where(stick, freq, np.where(near, mu_k * normal * sgn_f, -mu_k * normal * sgn_v))
        df = np.where(stick[:, None], dfreq, 0.0)
        v2 = v2 + dt * f / m2
        dv2 = dv2 + (dt / m2) * df
        v1 = v1 + dt * (u - f) / m1
        dv1 = dv1 - (dt / m1) * df
        dv1[:, t] += dt / m1
        x2 = x2 + dt * v2
        dx2 = dx2 + dt * dv2
    err = x2 - goal
    return err * err, 2.0 * err[:, None] * dx2, margin
