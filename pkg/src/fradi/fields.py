"""Coefficient fields, the radial window and the two kernel scalings.

Fields are vectorised: ``field(points)`` takes an ``(P, n)`` array (or a
length-``n`` point) and returns ``P`` values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

# w(t) = 1 - 35 t^4 + 84 t^5 - 70 t^6 + 20 t^7 as (power, coefficient) pairs
WINDOW_TERMS = ((0, 1.0), (4, -35.0), (5, 84.0), (6, -70.0), (7, 20.0))


class Formulation(str, Enum):
    SYMMETRIC_KAPPA = "symmetric-variable-kappa"
    SYMMETRIC_BETA = "symmetric-variable-beta"
    NONSYMMETRIC_BETA = "nonsymmetric-variable-beta"


def window(r, delta):
    """Polynomial window of radius ``delta``; 1 at the origin, C^3 zero at ``delta``."""
    t = np.asarray(r, dtype=float) / delta
    tt = np.minimum(t, 1.0)
    # expanded form stays <= 1 near the origin; the factored form stays >= 0 near t = 1
    near = 1.0 + tt**4 * (-35.0 + tt * (84.0 + tt * (-70.0 + 20.0 * tt)))
    far = (1.0 - tt) ** 4 * (1.0 + tt * (4.0 + tt * (10.0 + 20.0 * tt)))
    val = np.where(tt < 0.5, near, far)
    out = np.where(t < 1.0, val, 0.0)
    return float(out) if out.ndim == 0 else out


def window_deriv(r, delta):
    """dw/dr."""
    t = np.asarray(r, dtype=float) / delta
    tt = np.minimum(t, 1.0)
    val = -140.0 * tt**3 * (1.0 - tt) ** 3 / delta
    out = np.where(t < 1.0, val, 0.0)
    return float(out) if out.ndim == 0 else out


def bump_1d(x, c, l):
    x = np.asarray(x, dtype=float)
    r = (x - c) / (0.5 * l)
    inside = np.abs(r) < 1.0
    rr = np.where(inside, r, 0.0)
    out = np.where(inside, np.exp(-1.0 / (1.0 - rr * rr)), 0.0)
    return float(out) if out.ndim == 0 else out


def bump_1d_deriv(x, c, l):
    x = np.asarray(x, dtype=float)
    half = 0.5 * l
    r = (x - c) / half
    inside = np.abs(r) < 1.0
    rr = np.where(inside, r, 0.0)
    q = 1.0 - rr * rr
    out = np.where(inside, np.exp(-1.0 / q) * (-2.0 * rr / q**2) / half, 0.0)
    return float(out) if out.ndim == 0 else out


def _rotate(p, theta):
    ct, st = math.cos(theta), math.sin(theta)
    return np.stack([ct * p[..., 0] - st * p[..., 1], st * p[..., 0] + ct * p[..., 1]], axis=-1)


def bump_2d(x, c, l, theta=0.0):
    """Product of two 1D bumps along axes rotated by ``theta`` about ``c``."""
    x = np.asarray(x, dtype=float)
    p = _rotate(x - np.asarray(c, dtype=float), -theta)
    out = bump_1d(p[..., 0], 0.0, l[0]) * bump_1d(p[..., 1], 0.0, l[1])
    return float(out) if np.ndim(out) == 0 else out


def bump_2d_grad(x, c, l, theta=0.0):
    x = np.asarray(x, dtype=float)
    p = _rotate(x - np.asarray(c, dtype=float), -theta)
    b0, b1 = bump_1d(p[..., 0], 0.0, l[0]), bump_1d(p[..., 1], 0.0, l[1])
    g_rot = np.stack(
        [bump_1d_deriv(p[..., 0], 0.0, l[0]) * b1, b0 * bump_1d_deriv(p[..., 1], 0.0, l[1])],
        axis=-1,
    )
    # chain rule through p = R(-theta)(x - c): grad_x = R(theta) grad_p
    return _rotate(g_rot, theta)


@dataclass(frozen=True)
class ScalarField:
    """A scalar coefficient field with an optional analytic gradient."""

    func: Callable[[np.ndarray], np.ndarray]
    grad_func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    tag: str = "custom"
    constant: Optional[float] = None

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.func(pts), dtype=float).reshape(pts.shape[0])

    def grad(self, points, h: float = 1e-4) -> np.ndarray:
        """Gradient, analytic when available, else centred O(h^2) differences."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.constant is not None:
            return np.zeros_like(pts)
        if self.grad_func is not None:
            return np.asarray(self.grad_func(pts), dtype=float).reshape(pts.shape)
        g = np.empty_like(pts)
        for d in range(pts.shape[1]):
            e = np.zeros(pts.shape[1])
            e[d] = h
            g[:, d] = (self(pts + e) - self(pts - e)) / (2 * h)
        return g

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    @classmethod
    def const(cls, value: float) -> "ScalarField":
        v = float(value)
        return cls(lambda p: np.full(p.shape[0], v), lambda p: np.zeros_like(p), "constant", v)

    @classmethod
    def linear(cls, offset: float, slope) -> "ScalarField":
        """offset + slope . x"""
        s = np.atleast_1d(np.asarray(slope, dtype=float))
        return cls(
            lambda p: offset + p @ s,
            lambda p: np.broadcast_to(s, p.shape).copy(),
            "linear",
        )


def bump_field_1d(background: float, amplitude: float, c: float, l: float) -> ScalarField:
    return ScalarField(
        lambda p: background + amplitude * bump_1d(p[:, 0], c, l),
        lambda p: amplitude * bump_1d_deriv(p[:, 0], c, l)[:, None],
        "bump-1d",
    )


def bump_sum_field_2d(background: float, bumps) -> ScalarField:
    """``background + sum(a * bump_2d(x, c, l, theta))`` for ``(a, c, l, theta)`` in bumps."""
    bumps = [(float(a), tuple(c), tuple(l), float(t)) for a, c, l, t in bumps]

    def f(p):
        out = np.full(p.shape[0], background)
        for a, c, l, t in bumps:
            out = out + a * bump_2d(p, c, l, t)
        return out

    def g(p):
        out = np.zeros_like(p)
        for a, c, l, t in bumps:
            out = out + a * bump_2d_grad(p, c, l, t)
        return out

    return ScalarField(f, g, "bump-2d-sum")


# Fields used in the numerical studies
def kappa_bump_1d() -> ScalarField:
    return bump_field_1d(1.0, 1.0, 0.5, 1.0)


def beta_linear_1d(beta0: float = 0.7, slope: float = 0.1) -> ScalarField:
    return ScalarField.linear(beta0, [slope])


def kappa_two_bumps_2d() -> ScalarField:
    return bump_sum_field_2d(
        1.0,
        [
            (2.5, (0.2, 0.25), (1.4, 1.4), math.pi / 4),
            (2.5, (-0.1, -0.2), (1.4, 1.8), -math.pi / 10),
        ],
    )


def beta_bump_2d() -> ScalarField:
    return bump_sum_field_2d(0.8, [(-0.2, (0.0, 0.0), (2.0, 2.0), 0.0)])


@dataclass(frozen=True)
class WindowSpec:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"window radius must be positive, got {self.delta}")

    def __call__(self, r):
        return window(r, self.delta)


@dataclass(frozen=True)
class ProblemSpec:
    """Problem definition on the box ``inner^n`` embedded in ``outer^n``."""

    formulation: Formulation
    dim: int = 1
    inner: tuple = (-1.0, 1.0)
    outer: tuple = (-2.0, 2.0)
    kappa: ScalarField = field(default_factory=lambda: ScalarField.const(1.0))
    beta: ScalarField = field(default_factory=lambda: ScalarField.const(0.5))
    source: ScalarField = field(default_factory=lambda: ScalarField.const(1.0))
    delta_mult: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "formulation", Formulation(self.formulation))
        if self.dim not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        a, b = self.inner
        A, B = self.outer
        if not (A < a < b < B):
            raise ValueError(f"interior box {self.inner} must lie strictly inside {self.outer}")
        if self.delta_mult <= 0:
            raise ValueError("delta multiplier must be positive")

    @property
    def margin(self) -> float:
        """Distance from the interior box to the outer boundary."""
        return min(self.inner[0] - self.outer[0], self.outer[1] - self.inner[1])

    def window_for(self, h: float) -> WindowSpec:
        delta = self.delta_mult * h
        if delta > self.margin + 1e-14:
            raise ValueError(
                f"window radius {delta:g} exceeds the exterior margin {self.margin:g}; "
                "refine the grid or reduce the delta multiplier"
            )
        return WindowSpec(delta)


def validate_fields(spec: ProblemSpec, points: np.ndarray, kappa_min: float = 0.0) -> None:
    """Check positivity of kappa and 0 < beta < 1 at the given sample points."""
    k = spec.kappa(points)
    if np.any(~np.isfinite(k)) or np.any(k <= kappa_min):
        raise ValueError(f"kappa must be positive; min sampled value {np.min(k):g}")
    b = spec.beta(points)
    if np.any(~((b > 0.0) & (b < 1.0))):
        raise ValueError(f"beta must lie in (0, 1); sampled range [{np.min(b):g}, {np.max(b):g}]")


def gamma_sym(x, y, spec: ProblemSpec) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    r = float(np.linalg.norm(y - x))
    if r == 0.0:
        raise ValueError("kernel evaluated at coincident points")
    pts = np.stack([x, y])
    k = spec.kappa(pts)
    b = spec.beta(pts)
    return math.sqrt(k[0] * k[1]) / r ** (spec.dim + b[0] + b[1])


def omega(beta, n: int = 1):
    """Normalisation of the fractional gradient of order ``beta`` in ``n`` dimensions."""
    b = np.asarray(beta, dtype=float)
    if np.any(~((b > 0.0) & (b < 1.0))):
        raise ValueError("omega requires 0 < beta < 1")
    g = np.vectorize(math.gamma, otypes=[float])
    out = 2.0**b * g((n + b + 1.0) / 2.0) / (math.pi ** (n / 2.0) * g((1.0 - b) / 2.0))
    return float(out) if out.ndim == 0 else out
