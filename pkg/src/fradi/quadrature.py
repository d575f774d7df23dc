"""Windowed correction integrals and a recursive adaptive Simpson rule.

The correction integrals are radial moments of the window,

    M_p(delta)     = int_0^delta w(r) r^p dr
    L_p(delta)     = int_0^delta w(r) r^p ln(r) dr

with ``p = 1 - 2 beta > -1``.  Because ``w`` is a polynomial in ``r/delta``
both have closed forms; the ``method="quad"`` path recomputes them with
:func:`adaptive_1d` for cross-checking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import WINDOW_TERMS, window

MAX_DEPTH = 15
# integrals over [0, delta * ORIGIN_FRACTION] are done term by term
ORIGIN_FRACTION = 1e-3


@dataclass(frozen=True)
class QuadResult:
    value: float
    error_estimate: float
    evaluations: int
    converged: bool = True


def adaptive_1d(f, a: float, b: float, tol: float = 1e-12, rtol: float = 1e-12,
                max_depth: int = MAX_DEPTH) -> QuadResult:
    """Recursive Simpson quadrature of ``f`` on ``[a, b]``.

    ``converged`` is False when some subinterval hit ``max_depth`` before
    meeting its share of the tolerance; the returned value is still the best
    available estimate.
    """
    if not a < b:
        raise ValueError("adaptive_1d needs a < b")
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4 * fm + fb)
    # absolute+relative target, fixed from the coarse estimate
    target = max(tol, rtol * abs(whole))
    state = {"n": 3, "failed": False}

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        state["n"] += 2
        left = (m - a) / 6.0 * (fa + 4 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4 * frm + fb)
        diff = left + right - whole
        if abs(diff) <= 15.0 * tol:
            return left + right + diff / 15.0, abs(diff) / 15.0
        if depth >= max_depth:
            state["failed"] = True
            return left + right + diff / 15.0, abs(diff) / 15.0
        v1, e1 = rec(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
        v2, e2 = rec(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
        return v1 + v2, e1 + e2

    value, err = rec(a, b, fa, fm, fb, whole, target, 0)
    return QuadResult(value, err, state["n"], not state["failed"])


# closed-form radial moments -------------------------------------------------

def _check_power(p) -> None:
    if np.any(~(np.asarray(p) > -1.0)):
        raise ValueError(f"radial power {p} is not integrable at the origin")


def window_moment(p, delta: float, upper: float | None = None):
    """int_0^upper w(r) r^p dr (``upper`` defaults to ``delta``); ``p`` may be an array."""
    _check_power(p)
    t1 = 1.0 if upper is None else upper / delta
    return delta ** (p + 1) * sum(a * t1 ** (p + k + 1) / (p + k + 1) for k, a in WINDOW_TERMS)


def window_log_moment(p, delta: float, upper: float | None = None):
    """int_0^upper w(r) r^p ln(r) dr."""
    _check_power(p)
    t1 = 1.0 if upper is None else upper / delta
    ld = math.log(delta)
    total = 0.0
    for k, a in WINDOW_TERMS:
        q = p + k + 1
        # int_0^t1 t^(q-1) (ln delta + ln t) dt
        total += a * (t1**q * (ld + math.log(t1)) / q - t1**q / q**2)
    return delta ** (p + 1) * total


def _quad_moment(p: float, delta: float, log: bool, tol: float) -> float:
    if np.ndim(p):
        return np.array([_quad_moment(float(q), delta, log, tol) for q in np.ravel(p)]).reshape(np.shape(p))
    r0 = ORIGIN_FRACTION * delta
    head = window_log_moment(p, delta, r0) if log else window_moment(p, delta, r0)
    if log:
        res = adaptive_1d(lambda r: window(r, delta) * r**p * math.log(r), r0, delta, tol, tol)
    else:
        res = adaptive_1d(lambda r: window(r, delta) * r**p, r0, delta, tol, tol)
    return head + res.value


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _check_beta(beta) -> None:
    b = np.asarray(beta)
    if np.any(~((b > 0.0) & (b < 1.0))):
        raise ValueError(f"beta must lie in (0, 1), got {beta}")


def corr_u2_1d(beta: float, delta: float, method: str = "analytic", tol: float = 1e-13) -> float:
    """int_{-delta}^{delta} w(|s|) |s|^(1 - 2 beta) ds."""
    _check_beta(beta)
    p = 1.0 - 2.0 * np.asarray(beta, dtype=float)
    m = window_moment(p, delta) if method == "analytic" else _quad_moment(p, delta, False, tol)
    return 2.0 * m


def corr_log_1d(beta: float, dbeta: float, delta: float, method: str = "analytic",
                tol: float = 1e-13) -> float:
    """dbeta * int_{-delta}^{delta} w(|s|) ln|s| |s|^(1 - 2 beta) ds."""
    _check_beta(beta)
    p = 1.0 - 2.0 * np.asarray(beta, dtype=float)
    m = window_log_moment(p, delta) if method == "analytic" else _quad_moment(p, delta, True, tol)
    return 2.0 * dbeta * m


def corr_u2_nd(beta: float, delta: float, n: int, method: str = "analytic",
               tol: float = 1e-13) -> float:
    """int_{B_delta} w(|y|) y_d^2 / |y|^(n + 2 beta) dy, the same for every direction d."""
    _check_beta(beta)
    p = 1.0 - 2.0 * np.asarray(beta, dtype=float)
    m = window_moment(p, delta) if method == "analytic" else _quad_moment(p, delta, False, tol)
    return sphere_area(n) / n * m


def corr_log_nd(beta: float, dbeta_d: float, delta: float, n: int, method: str = "analytic",
                tol: float = 1e-13) -> float:
    """dbeta_d * int_{B_delta} w(|y|) y_d^2 ln|y| / |y|^(n + 2 beta) dy."""
    _check_beta(beta)
    p = 1.0 - 2.0 * np.asarray(beta, dtype=float)
    m = window_log_moment(p, delta) if method == "analytic" else _quad_moment(p, delta, True, tol)
    return dbeta_d * sphere_area(n) / n * m
