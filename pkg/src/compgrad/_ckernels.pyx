# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout kernels; same contract as ``compgrad._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, INFINITY

cnp.import_array()


cdef inline double _dist(double gap, double[::1] d, Py_ssize_t m) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t j
    for j in range(m):
        s += d[j] * d[j]
    s = sqrt(s)
    if s < 1e-300:
        s = 1e-300
    return fabs(gap) / s


cdef inline double _sign(double v) noexcept nogil:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


def pushing_rollout(U, double k, double dt, int substeps, double m1, double m2,
                    double size, double x1_0, double x2_0, double goal, double effort):
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t n = u.shape[0], horizon = u.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] values = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grads = np.empty((n, horizon))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] margins = np.empty(n)
    cdef double[::1] dx1 = np.empty(horizon)
    cdef double[::1] dx2 = np.empty(horizon)
    cdef double[::1] dv1 = np.empty(horizon)
    cdef double[::1] dv2 = np.empty(horizon)
    cdef double[::1] dpen = np.empty(horizon)
    cdef double h = dt / substeps
    cdef double x1, x2, v1, v2, pen, force, err, cost, margin, d
    cdef Py_ssize_t i, t, s, j
    cdef bint contact
    for i in range(n):
        x1 = x1_0
        x2 = x2_0
        v1 = 0.0
        v2 = 0.0
        margin = INFINITY
        for j in range(horizon):
            dx1[j] = 0.0
            dx2[j] = 0.0
            dv1[j] = 0.0
            dv2[j] = 0.0
        for t in range(horizon):
            for s in range(substeps):
                pen = x1 + size - x2
                for j in range(horizon):
                    dpen[j] = dx1[j] - dx2[j]
                d = _dist(pen, dpen, horizon)
                if d < margin:
                    margin = d
                contact = pen > 0.0
                force = k * pen if contact else 0.0
                v1 = v1 + h * (u[i, t] - force) / m1
                v2 = v2 + h * force / m2
                x1 = x1 + h * v1
                x2 = x2 + h * v2
                for j in range(horizon):
                    if contact:
                        dv1[j] -= (h / m1) * k * dpen[j]
                        dv2[j] += (h / m2) * k * dpen[j]
                    if j == t:
                        dv1[j] += h / m1
                    dx1[j] += h * dv1[j]
                    dx2[j] += h * dv2[j]
        err = x2 - goal
        cost = 0.0
        for j in range(horizon):
            cost += u[i, j] * u[i, j]
            grads[i, j] = 2.0 * err * dx2[j] + 2.0 * effort * u[i, j]
        values[i] = err * err + effort * cost
        margins[i] = margin
    return values, grads, margins


def friction_rollout(U, double dt, double m1, double m2, double mu_s, double mu_k,
                     double gravity, double v_eps, double x2_0, double goal):
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t n = u.shape[0], horizon = u.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] values = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grads = np.empty((n, horizon))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] margins = np.empty(n)
    cdef double[::1] dx2 = np.empty(horizon)
    cdef double[::1] dv1 = np.empty(horizon)
    cdef double[::1] dv2 = np.empty(horizon)
    cdef double[::1] dvrel = np.empty(horizon)
    cdef double[::1] dfreq = np.empty(horizon)
    cdef double normal = m2 * gravity
    cdef double mred = m1 * m2 / (m1 + m2)
    cdef double x2, v1, v2, vrel, freq, f, err, margin, d, sv, sf
    cdef Py_ssize_t i, t, j
    cdef bint near, stick
    for i in range(n):
        x2 = x2_0
        v1 = 0.0
        v2 = 0.0
        margin = INFINITY
        for j in range(horizon):
            dx2[j] = 0.0
            dv1[j] = 0.0
            dv2[j] = 0.0
        for t in range(horizon):
            vrel = v2 - v1
            sv = _sign(vrel)
            for j in range(horizon):
                dvrel[j] = sv * (dv2[j] - dv1[j])
            d = _dist(fabs(vrel) - v_eps, dvrel, horizon)
            if d < margin:
                margin = d
            near = fabs(vrel) < v_eps
            stick = False
            f = -mu_k * normal * sv
            if near:
                freq = mred * (u[i, t] / m1 - vrel / dt)
                sf = _sign(freq)
                for j in range(horizon):
                    dfreq[j] = -(mred / dt) * (dv2[j] - dv1[j])
                dfreq[t] += mred / m1
                for j in range(horizon):
                    dvrel[j] = sf * dfreq[j]
                d = _dist(fabs(freq) - mu_s * normal, dvrel, horizon)
                if d < margin:
                    margin = d
                if fabs(freq) - mu_s * normal <= 0.0:
                    stick = True
                    f = freq
                else:
                    f = mu_k * normal * sf
            v2 = v2 + dt * f / m2
            v1 = v1 + dt * (u[i, t] - f) / m1
            x2 = x2 + dt * v2
            for j in range(horizon):
                if stick:
                    dv2[j] += (dt / m2) * dfreq[j]
                    dv1[j] -= (dt / m1) * dfreq[j]
                if j == t:
                    dv1[j] += dt / m1
                dx2[j] += dt * dv2[j]
        err = x2 - goal
        values[i] = err * err
        for j in range(horizon):
            grads[i, j] = 2.0 * err * dx2[j]
        margins[i] = margin
    return values, grads, margins
