"""Dormand-Prince 5(4) embedded Runge-Kutta pair with adaptive step control.

Works on real or complex NumPy arrays. The fifth-order solution is
propagated; the embedded fourth-order solution supplies the error estimate.
"""
from __future__ import annotations

import numpy as np

from .errors import StiffnessError

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B5 = np.array(A[6] + [0.0])
B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
E = B5 - B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


class DormandPrince:
    """Adaptive integrator for ``y' = f(t, y)``.

    Parameters
    ----------
    f : callable
        Right-hand side ``f(t, y) -> array`` of the same shape as ``y``.
    atol, rtol : float
        Per-component tolerances; the step is accepted when
        ``max |err| / (atol + rtol * max(|y|, |y_new|)) <= 1``.
    h_max : float
        Upper bound on the step size (stability bound for PDEs).
    """

    def __init__(self, f, *, atol=1e-10, rtol=0.0, h_max=np.inf):
        self.f = f
        self.atol = atol
        self.rtol = rtol
        self.h_max = h_max
        self.n_steps = 0
        self.n_rejected = 0
        self._last = None

    def _initial_step(self, t, y, k0, t_end):
        scale = self.atol + self.rtol * np.abs(y)
        d0 = np.max(np.abs(y) / scale)
        d1 = np.max(np.abs(k0) / scale)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        return min(h, self.h_max, abs(t_end - t))

    def advance(self, t, y, t_end, h=None, on_step=None):
        """Integrate from ``t`` to exactly ``t_end``.

        Returns ``(y_end, h_next)``; pass ``h_next`` back in to continue a
        run across output times without restarting the step-size controller.
        ``on_step(t, y)`` is called after every accepted step.
        """
        y = np.array(y, copy=True)
        if t_end <= t:
            return y, h
        cached = self._last
        if cached is not None and cached[0] == t and np.array_equal(cached[1], y):
            k0 = cached[2]
        else:
            k0 = self.f(t, y)
        if h is None:
            h = self._initial_step(t, y, k0, t_end)
        h_floor = 1e-15 * max(abs(t_end), abs(t), 1e-300)
        k = [None] * 7
        while t < t_end:
            h = min(h, self.h_max)
            last = t + h >= t_end
            step = t_end - t if last else h
            if step < h_floor and not last:
                raise StiffnessError(t, step)
            k[0] = k0
            for i in range(1, 7):
                acc = y.copy()
                for j, a in enumerate(A[i]):
                    if a:
                        acc += step * a * k[j]
                k[i] = self.f(t + C[i] * step, acc)
            y_new = acc  # stage 7 argument is the 5th-order solution (FSAL)
            err_vec = step * sum(e * kk for e, kk in zip(E, k) if e)
            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.max(np.abs(err_vec) / scale))
            if not np.isfinite(err):
                err = np.inf
            if err <= 1.0:
                t = t_end if last else t + step
                y = y_new
                k0 = k[6]
                self.n_steps += 1
                if on_step is not None:
                    on_step(t, y)
                factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
                if not last or step >= h:
                    h = step * factor
            else:
                self.n_rejected += 1
                h = step * max(MIN_FACTOR, SAFETY * err ** -0.2)
                if h < h_floor:
                    raise StiffnessError(t, h)
        self._last = (t, y, k0)
        return y, h
