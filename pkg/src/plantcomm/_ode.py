"""Fixed-step classical Runge-Kutta integration."""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter


def step_grid(t0, t1, dt):
    """Uniform grid from ``t0`` with spacing ``dt``; the last step is shortened to land on ``t1``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t1 > t0:
        raise ValueError(f"need t0 < t1, got t0={t0}, t1={t1}")
    if dt > t1 - t0:
        raise ValueError(f"dt={dt} exceeds the integration span {t1 - t0}")
    n = int(np.floor((t1 - t0) / dt + 1e-9))
    grid = t0 + dt * np.arange(n + 1)
    if t1 - grid[-1] > 1e-9 * dt:
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1
    return grid


def rk4(f, y0, times):
    """Integrate ``dy/dt = f(t, y)`` over ``times`` with the classical 4th-order scheme.

    ``y0`` may be a scalar or array; the result has shape ``(len(times),) + shape(y0)``.
    """
    times = np.asarray(times, dtype=float)
    y = np.asarray(y0, dtype=float)
    out = np.empty((times.size,) + y.shape)
    out[0] = y
    for i in range(times.size - 1):
        t = times[i]
        h = times[i + 1] - t
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = y
    return out


def rk4_linear_decay(forcing, decay, g0, times):
    """RK4 for ``dg/dt = F(t) - decay * g`` with a g-independent forcing.

    ``forcing(t)`` must accept arrays. Because the right-hand side is affine in
    ``g`` every RK4 step reduces to ``g[n+1] = a_n g[n] + b_n``; the stage
    forcings are evaluated in one vectorised call. Results agree with
    :func:`rk4` to rounding.
    """
    times = np.asarray(times, dtype=float)
    h = np.diff(times)
    return affine_rk4(forcing(times[:-1]), forcing(times[:-1] + 0.5 * h), forcing(times[1:]), decay, h, g0)


def affine_rk4(f0, fm, f1, decay, h, g0):
    """RK4 recurrence for ``dg/dt = F - decay * g`` from precomputed stage forcings.

    ``f0``, ``fm``, ``f1`` hold the forcing at the start, midpoint and end of
    each step of width ``h``.
    """
    h = np.asarray(h, dtype=float)
    kh = decay * h
    a = 1.0 - kh + kh**2 / 2.0 - kh**3 / 6.0 + kh**4 / 24.0
    # stage slopes with g = 0, giving the inhomogeneous part of the step
    s1 = f0
    s2 = fm - decay * 0.5 * h * s1
    s3 = fm - decay * 0.5 * h * s2
    s4 = f1 - decay * h * s3
    b = (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
    g = np.empty(h.size + 1)
    g[0] = g0
    if h.size > 1 and np.ptp(a) <= 4 * np.finfo(float).eps:
        # uniform steps: first-order recursive filter y[n] = b[n] + a * y[n-1]
        g[1:] = lfilter([1.0], [1.0, -a[0]], b, zi=[a[0] * float(g0)])[0]
        return g
    acc = float(g0)
    for i in range(h.size):
        acc = a[i] * acc + b[i]
        g[i + 1] = acc
    return g
