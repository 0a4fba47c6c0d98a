"""Chemotactic sensitivity matrices, the boundary cutoff and the smallness threshold.

Three preset families are provided: a scalar sensitivity ``chi * I``, a
constant-angle rotation scaled by an envelope ``S0(c)``, and a spatial
modulation of either.  Every entry of the matrix is bounded by the
envelope, which is all the threshold calculation needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import GridSpec

H_MAX = 1.0 / 48.0


@dataclass(frozen=True)
class Envelope:
    """Non-decreasing bound ``S0(c) = a + b*c`` with ``a, b >= 0``."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"envelope coefficients must be finite and non-negative, got a={self.a}, b={self.b}")

    @classmethod
    def constant(cls, s0: float) -> "Envelope":
        return cls(float(s0), 0.0)

    def __call__(self, c):
        return self.a + self.b * c


def rotation_matrix(theta: float, dim: int) -> np.ndarray:
    ct, st = math.cos(theta), math.sin(theta)
    R = np.eye(dim)
    # 3D: rotate about the vertical (last) axis
    R[0, 0], R[0, 1], R[1, 0], R[1, 1] = ct, -st, st, ct
    return R


class SensitivityModel:
    """Base class; subclasses implement :meth:`matrix` vectorised over points."""

    envelope: Envelope
    is_scalar = False

    def matrix(self, x, n, c, dim: int) -> np.ndarray:
        """Return S with shape ``(dim, dim) + broadcast(x, n, c).shape``."""
        raise NotImplementedError


@dataclass(frozen=True)
class ScalarSensitivity(SensitivityModel):
    chi: float

    is_scalar = True

    @property
    def envelope(self) -> Envelope:
        return Envelope.constant(abs(self.chi))

    def matrix(self, x, n, c, dim):
        shape = np.broadcast(x[0], n, c).shape
        return self.chi * np.eye(dim).reshape((dim, dim) + (1,) * len(shape)) * np.ones(shape)


@dataclass(frozen=True)
class RotationalSensitivity(SensitivityModel):
    envelope: Envelope
    theta: float

    def matrix(self, x, n, c, dim):
        shape = np.broadcast(x[0], n, c).shape
        R = rotation_matrix(self.theta, dim).reshape((dim, dim) + (1,) * len(shape))
        return R * np.broadcast_to(self.envelope(np.asarray(c, dtype=float)), shape)


@dataclass(frozen=True)
class ModulatedSensitivity(SensitivityModel):
    """``m(x) * base``; the modulation must satisfy ``|m| <= 1`` on the box."""

    base: SensitivityModel
    modulation: Callable
    label: str = "custom"

    @property
    def envelope(self) -> Envelope:
        return self.base.envelope

    @property
    def is_scalar(self) -> bool:
        return self.base.is_scalar

    def matrix(self, x, n, c, dim):
        m = np.asarray(self.modulation(x), dtype=float)
        if np.any(np.abs(m) > 1.0 + 1e-15):
            raise ValueError("spatial modulation exceeds 1 in magnitude")
        return self.base.matrix(x, n, c, dim) * m


def cosine_modulation(extents, amplitude: float = 0.5) -> Callable:
    """``1 - a + a*cos(pi x/L_x)``-type profile bounded by 1 for 0 <= a <= 1."""
    if not 0.0 <= amplitude <= 1.0:
        raise ValueError("modulation amplitude must lie in [0, 1]")
    L0 = extents[0]

    def m(x):
        return (1.0 - amplitude) + amplitude * np.cos(np.pi * np.asarray(x[0]) / L0)

    return m


def _check_nc(n, c):
    if np.any(np.asarray(n) < 0) or np.any(np.asarray(c) < 0):
        raise ValueError("n and c must be non-negative")


def eval_S(model: SensitivityModel, x, n: float, c: float) -> np.ndarray:
    _check_nc(n, c)
    x = tuple(np.asarray(xi, dtype=float) for xi in x)
    return model.matrix(x, n, c, len(x))


@dataclass(frozen=True)
class RegularizerParams:
    epsilon: float
    enabled: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("regularizer epsilon must be positive")

    def validate(self, grid: GridSpec) -> None:
        if self.enabled and not self.epsilon < min(grid.extents) / 2:
            raise ValueError(
                f"regularizer epsilon {self.epsilon} must be below half the shortest extent {min(grid.extents) / 2}"
            )


def smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def boundary_distance(x, grid: GridSpec):
    d = None
    for xi, L in zip(x, grid.extents):
        xi = np.asarray(xi, dtype=float)
        di = np.minimum(xi, L - xi)
        d = di if d is None else np.minimum(d, di)
    return np.maximum(d, 0.0)


def eval_rho(params: RegularizerParams, x, grid: GridSpec):
    """Boundary cutoff: 0 on the walls, 1 at distance >= epsilon."""
    if not params.enabled:
        return np.ones(np.broadcast(*[np.asarray(xi) for xi in x]).shape)
    return smoothstep(boundary_distance(x, grid) / params.epsilon)


def eval_S_eps(model, params: RegularizerParams, x, n, c, grid: GridSpec) -> np.ndarray:
    return eval_rho(params, x, grid) * eval_S(model, x, n, c)


@dataclass(frozen=True)
class ThresholdParams:
    p: float
    h: float
    delta0: float
    binding: str  # which admissibility condition is active: "quadratic" or "linear"


def _validate_ph(p: float, h: float) -> None:
    if not p > 1:
        raise ValueError(f"Lebesgue exponent p must exceed 1, got {p}")
    if not 0 < h < H_MAX:
        raise ValueError(f"h must satisfy 0 < h < 1/48, got {h}")


def threshold_constraints(p: float, h: float, envelope, delta: float) -> tuple[float, float]:
    """Signed slack of the two admissibility conditions (<= 0 means satisfied)."""
    s = envelope(delta)
    quad = 3.0 * p * (p - 1.0) * delta**2 * s**2 - h * (h + 1.0)
    lin = 3.0 * p * delta * s - (h + 1.0)
    return quad, lin


def smallness_threshold(p: float, h: float, envelope, iterations: int = 200) -> ThresholdParams:
    """Largest delta0 satisfying both admissibility conditions, by bisection."""
    _validate_ph(p, h)

    def ok(d):
        q, lin = threshold_constraints(p, h, envelope, d)
        return q <= 0 and lin <= 0

    s_at_zero = envelope(0.0)
    hi = (h + 1.0) / (3.0 * p * s_at_zero) + 1.0 if s_at_zero > 0 else 1.0
    doublings = 0
    while ok(hi):
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise ValueError("envelope too small: admissibility conditions never fail")
    lo = 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if ok(mid):
            lo = mid
        else:
            hi = mid
    q, lin = threshold_constraints(p, h, envelope, lo)
    binding = "quadratic" if q / (h * (h + 1.0)) >= lin / (h + 1.0) else "linear"
    return ThresholdParams(p, h, lo, binding)


def threshold_closed_form(p: float, h: float, s0: float) -> float:
    _validate_ph(p, h)
    return min(math.sqrt(h * (h + 1.0) / (3.0 * p * (p - 1.0) * s0**2)), (h + 1.0) / (3.0 * p * s0))


@dataclass(frozen=True)
class SmallnessReport:
    admissible: bool
    margin: float


def check_smallness(c0: np.ndarray, th: ThresholdParams) -> SmallnessReport:
    c0 = np.asarray(c0, dtype=float)
    if np.any(c0 < 0):
        raise ValueError("initial concentration has negative values")
    cmax = float(c0.max()) if c0.size else 0.0
    return SmallnessReport(cmax < th.delta0, th.delta0 - cmax)
