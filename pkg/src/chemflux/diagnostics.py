"""Functionals monitored along a trajectory and exponential-rate fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .grid import GridSpec, divergence, face_gradient, faces_to_center, lp_norm, vector_l2_norm, w1q_norm
from .sensitivity import ThresholdParams

CSV_COLUMNS = (
    "t", "mass_n", "linf_c", "lyapunov", "classical", "kinetic",
    "linf_n_dev", "w1q_c", "linf_u", "min_n", "min_c", "div_u_inf",
)


class WeightSingularity(ValueError):
    pass


def weight_w(c, th: ThresholdParams):
    """(delta0 - c)^-h; singular as c approaches delta0."""
    c = np.asarray(c, dtype=float)
    if np.any(c >= th.delta0):
        raise WeightSingularity(f"c={float(np.max(c))!r} reaches the threshold delta0={th.delta0!r}")
    return (th.delta0 - c) ** (-th.h)


def weight_w_prime(c, th: ThresholdParams):
    c = np.asarray(c, dtype=float)
    return th.h * (th.delta0 - c) ** (-th.h - 1.0)


def weight_w_second(c, th: ThresholdParams):
    c = np.asarray(c, dtype=float)
    return th.h * (th.h + 1.0) * (th.delta0 - c) ** (-th.h - 2.0)


def lyapunov_weighted(grid: GridSpec, n, c, th: ThresholdParams) -> float:
    """Sum of n^p * w(c) * cell volume."""
    if np.any(n < 0):
        raise ValueError("n must be non-negative")
    cmax = float(np.max(c))
    if cmax >= th.delta0:
        raise WeightSingularity(f"max(c)={cmax!r} is not below delta0={th.delta0!r}; weighted functional undefined")
    return float(np.sum(n**th.p * weight_w(c, th)) * grid.cell_volume)


def classical_functional(grid: GridSpec, n, c, c_floor: float = 1e-8) -> float:
    """int n ln n + 1/2 int |grad c|^2 / c, with c clamped below at c_floor."""
    if not c_floor > 0:
        raise ValueError("c_floor must be positive")
    if np.any(n < 0):
        raise ValueError("n must be non-negative")
    nlogn = np.where(n > 0, n * np.log(np.where(n > 0, n, 1.0)), 0.0)
    G = face_gradient(grid, c)
    grad2 = sum(faces_to_center(G[a], a) ** 2 for a in range(grid.dim))
    vol = grid.cell_volume
    return float(np.sum(nlogn) * vol + 0.5 * np.sum(grad2 / np.maximum(c, c_floor)) * vol)


@dataclass
class DiagnosticsRecord:
    t: float
    mass_n: float
    linf_c: float
    lyapunov: float | None
    classical: float | None
    kinetic: float
    linf_n_dev: float
    w1q_c: float
    linf_u: float
    min_n: float
    min_c: float
    div_u_inf: float

    def csv_row(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append("" if v is None else f"{v:.17g}")
        return ",".join(out)


def record_step(
    grid: GridSpec,
    t: float,
    n,
    c,
    u,
    n_mean: float,
    th: ThresholdParams | None = None,
    scalar_sensitivity: bool = False,
    q: float = 4.0,
    c_floor: float = 1e-8,
    div_u_inf: float | None = None,
) -> DiagnosticsRecord:
    lyap = None
    if th is not None and float(np.max(c)) < th.delta0:
        lyap = lyapunov_weighted(grid, n, c, th)
    classical = classical_functional(grid, n, c, c_floor) if scalar_sensitivity else None
    if div_u_inf is None:
        div_u_inf = float(np.max(np.abs(divergence(grid, u))))
    return DiagnosticsRecord(
        t=float(t),
        mass_n=lp_norm(grid, n, 1),
        linf_c=lp_norm(grid, c, math.inf),
        lyapunov=lyap,
        classical=classical,
        kinetic=0.5 * vector_l2_norm(grid, u) ** 2,
        linf_n_dev=float(np.max(np.abs(n - n_mean))),
        w1q_c=w1q_norm(grid, c, q),
        linf_u=max(float(np.max(np.abs(comp))) for comp in u),
        min_n=float(np.min(n)),
        min_c=float(np.min(c)),
        div_u_inf=div_u_inf,
    )


class RateFitError(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    window: tuple[float, float]
    rate: float
    r_squared: float
    n_points: int


def fit_decay_rate(t, values, window: tuple[float, float] | None = None) -> RateFit:
    """Least-squares fit of log(value) against t; rate is minus the slope."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if len(t) < 10:
        raise RateFitError(f"need at least 10 samples in the fit window, got {len(t)}")
    if np.any(v <= 0):
        raise RateFitError("non-positive values in the fit window; log undefined")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    if ss_tot == 0.0:
        slope = 0.0
    return RateFit((float(t[0]), float(t[-1])), float(-slope), r2, len(t))


def tail_window(t, values, t_start: float, floor: float) -> tuple[float, float]:
    """Last half of the stretch after t_start where values stay above floor.

    Values that have decayed into round-off carry no rate information, so the
    stretch ends just before the first sample at or below ``floor``.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    after = np.nonzero(t >= t_start)[0]
    if after.size == 0:
        raise RateFitError("no samples after the window start")
    i0 = after[0]
    below = np.nonzero(v[i0:] <= floor)[0]
    i1 = len(t) - 1 if below.size == 0 else i0 + below[0] - 1
    if i1 <= i0:
        raise RateFitError("series is at its noise floor throughout the window")
    t0, t1 = t[i0], t[i1]
    return (t0 + 0.5 * (t1 - t0), t1)
