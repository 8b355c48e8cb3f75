"""Limited-memory quasi-Newton descent with a discrete barrier.

The energy landscape is piecewise smooth: plateau bonds have zero gradient
and the orientation penalty is a flat barrier.  The line search therefore
requires plain energy decrease (Armijo) and additionally rejects any step
that raises the barrier level, so minimization never tunnels through the
orientation penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool
    message: str = ""


def lbfgs_minimize(
    fun,
    x0: np.ndarray,
    barrier=None,
    max_iter: int = 600,
    gtol: float = 1e-10,
    ftol: float = 1e-15,
    memory: int = 10,
    c1: float = 1e-4,
    max_backtracks: int = 45,
) -> MinimizeResult:
    """Minimize ``fun(x) -> (f, grad)`` by L-BFGS with backtracking.

    ``barrier(x)``, if given, returns the discrete barrier level at ``x``;
    candidate steps that increase it are rejected regardless of their energy.
    Returns the best point seen; ``converged`` is False if the line search
    stagnated before the tolerances were met.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun(x)
    b_level = barrier(x) if barrier is not None else 0.0
    s_hist, y_hist, rho_hist = [], [], []
    best_x, best_f = x.copy(), f
    stall = 0

    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= gtol:
            return MinimizeResult(best_x, best_f, gnorm, it - 1, True, "gradient below tolerance")

        d = _two_loop(g, s_hist, y_hist, rho_hist)
        gtd = float(np.dot(g, d))
        if not np.isfinite(gtd) or gtd >= 0.0:
            d = -g
            gtd = float(np.dot(g, d))

        t = 1.0
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + t * d
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * t * gtd:
                if barrier is not None:
                    b_new = barrier(x_new)
                    if b_new > b_level + 1e-15:
                        t *= 0.5
                        continue
                    b_level = b_new
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if s_hist:
                # retry from scratch along steepest descent
                s_hist, y_hist, rho_hist = [], [], []
                continue
            return MinimizeResult(best_x, best_f, gnorm, it, False, "line search stagnated")

        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        df = f - f_new
        x, f, g = x_new, f_new, g_new
        if f < best_f:
            best_x, best_f = x.copy(), f
        if df <= ftol * (1.0 + abs(f)):
            stall += 1
            if stall >= 3:
                return MinimizeResult(best_x, best_f, float(np.max(np.abs(g))), it, True, "energy stalled")
        else:
            stall = 0

    return MinimizeResult(best_x, best_f, float(np.max(np.abs(g))), max_iter, False, "iteration limit")


def _two_loop(g, s_hist, y_hist, rho_hist):
    d = -g.copy()
    if not s_hist:
        return d
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * np.dot(s, d)
        alphas.append(a)
        d -= a * y
    y_last, s_last = y_hist[-1], s_hist[-1]
    d *= np.dot(s_last, y_last) / np.dot(y_last, y_last)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        b = rho * np.dot(y, d)
        d += (a - b) * s
    return d
