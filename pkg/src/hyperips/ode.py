"""Adaptive Dormand-Prince 5(4) integrator shared by every ODE in the package.

The NIMFA system, the master equation and matrix-exponential actions all go
through :func:`integrate`, so tolerances mean the same thing everywhere.
"""
import numpy as np

from .errors import StepUnderflow

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    en = float(np.sqrt(np.mean((err / scale) ** 2)))
    # overflowed stages count as a rejected step
    return en if np.isfinite(en) else np.inf


def _initial_step(fun, t0, y0, f0, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def integrate(fun, y0, t_grid, rtol=1e-8, atol=1e-10, post_step=None, t0=0.0):
    """Integrate ``y' = fun(t, y)`` and return the solution at each grid time.

    Parameters
    ----------
    fun : callable
        Right-hand side ``fun(t, y) -> array`` with the shape of ``y``.
    y0 : array_like
        State at ``t0``; any shape.
    t_grid : array_like
        Non-decreasing output times, all ``>= t0``. Steps are clipped so that
        every grid time is hit exactly.
    rtol, atol : float
        Relative and absolute tolerances of the embedded error estimate.
    post_step : callable, optional
        ``post_step(y) -> y`` applied after every accepted step (used for
        simplex repair). If it returns a different array the stored
        derivative is recomputed.
    t0 : float
        Initial time.

    Returns
    -------
    ndarray
        Array of shape ``(len(t_grid),) + y0.shape``.
    """
    y = np.array(y0, dtype=float, copy=True)
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1:
        raise ValueError("t_grid must be one-dimensional")
    if grid.size and (np.any(np.diff(grid) < 0) or grid[0] < t0):
        raise ValueError("t_grid must be non-decreasing and start at or after t0")
    out = np.empty((grid.size,) + y.shape)
    t = float(t0)
    f = fun(t, y)
    h = None
    for g, t_out in enumerate(grid):
        while t < t_out:
            if h is None:
                h = _initial_step(fun, t, y, f, rtol, atol)
            h_min = 16 * np.spacing(max(abs(t), 1.0))
            step = min(h, t_out - t)
            last = step >= t_out - t
            k = [f]
            for s in range(1, 7):
                ys = y.copy()
                for a, kk in zip(_A[s], k):
                    if a != 0.0:
                        ys += (step * a) * kk
                k.append(fun(t + _C[s] * step, ys))
            y_new = ys  # stage 7 evaluates at the 5th-order solution (FSAL)
            err = step * sum(e * kk for e, kk in zip(_E, k) if e != 0.0)
            en = _error_norm(err, y, y_new, rtol, atol)
            if en <= 1.0:
                t = t_out if last else t + step
                y = y_new
                f = k[6]
                if post_step is not None:
                    fixed = post_step(y)
                    if fixed is not y:
                        y = fixed
                        f = fun(t, y)
                factor = _MAX_FACTOR if en == 0 else min(_MAX_FACTOR, _SAFETY * en ** -0.2)
                # a step clipped to the grid says nothing about the natural size
                if not last or step == h:
                    h = step * factor
            else:
                h = step * max(_MIN_FACTOR, _SAFETY * en ** -0.2)
                if h < h_min:
                    raise StepUnderflow(f"step size {h:.3g} underflowed at t={t:.17g}")
        out[g] = y
    return out
