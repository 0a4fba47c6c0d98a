"""Split-step advancement of the cell density n and the chemical c.

n: conservative donor-cell drift by (chemotactic velocity + fluid velocity),
   then backward-Euler Neumann diffusion.  Mass is conserved by telescoping.
c: advective donor-cell transport by the fluid, backward-Euler Neumann
   diffusion, then pointwise implicit consumption c / (1 + dt*n).  Every
   sub-step is a convex combination, hence the discrete maximum principle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, _sl, center_to_faces, face_gradient, faces_to_center, pad_faces, divergence
from .sensitivity import RegularizerParams, SensitivityModel, eval_rho
from .solvers import LinearOperatorSpec, solve_or_raise


class CFLViolation(ValueError):
    pass


@dataclass(frozen=True)
class TransportScheme:
    cfl: float = 0.4
    dt_max: float = 5e-3
    solver_tol: float = 1e-12
    solver_maxiter: int = 2000
    preconditioner: str | None = "spectral"

    def __post_init__(self):
        # a cell may lose mass through both faces on every axis, so the
        # per-cell outflow fraction is at most 2*cfl
        if not 0 < self.cfl <= 0.5:
            raise ValueError(f"cfl number must lie in (0, 0.5], got {self.cfl}")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")


def chemotactic_velocity(grid: GridSpec, n, c, model: SensitivityModel, reg: RegularizerParams):
    """Face field V = rho_eps * S(x, n, c) grad c, zero on boundary faces.

    The normal derivative on a face is the two-point difference; each
    tangential derivative is the mean of the four nearest tangential faces.
    """
    dim = grid.dim
    G = face_gradient(grid, c)
    G_center = [faces_to_center(G[j], j) for j in range(dim)]
    V = []
    for i in range(dim):
        x = tuple(xi[_sl(dim, i, slice(1, -1))] for xi in grid.face_points(i))
        n_f = center_to_faces(n, i)
        c_f = center_to_faces(c, i)
        grads = [G[i][_sl(dim, i, slice(1, -1))] if j == i else center_to_faces(G_center[j], i) for j in range(dim)]
        S = model.matrix(x, n_f, c_f, dim)
        v = sum(S[i, j] * grads[j] for j in range(dim))
        v = v * eval_rho(reg, x, grid)
        V.append(pad_faces(v, i))
    return tuple(V)


def max_face_speed(*fields) -> float:
    speed = 0.0
    for F in fields:
        for comp in F:
            if comp.size:
                speed = max(speed, float(np.max(np.abs(comp))))
    return speed


def stable_dt(grid: GridSpec, V, u, scheme: TransportScheme) -> float:
    W = tuple(v + w for v, w in zip(V, u))
    speed = max(max_face_speed(W), max_face_speed(u))
    if speed == 0.0:
        return scheme.dt_max
    dt = scheme.cfl * min(grid.spacing) / (grid.dim * speed)
    return min(dt, scheme.dt_max)


def _outflow_rate(grid: GridSpec, W) -> np.ndarray:
    rate = np.zeros(grid.shape)
    for a, h in enumerate(grid.spacing):
        d = grid.dim
        hi = W[a][_sl(d, a, slice(1, None))]
        lo = W[a][_sl(d, a, slice(None, -1))]
        rate += (np.maximum(hi, 0.0) + np.maximum(-lo, 0.0)) / h
    return rate


def _inflow_rate(grid: GridSpec, u) -> np.ndarray:
    rate = np.zeros(grid.shape)
    for a, h in enumerate(grid.spacing):
        d = grid.dim
        hi = u[a][_sl(d, a, slice(1, None))]
        lo = u[a][_sl(d, a, slice(None, -1))]
        rate += (np.maximum(lo, 0.0) + np.maximum(-hi, 0.0)) / h
    return rate


def upwind_flux_divergence(grid: GridSpec, f, W) -> np.ndarray:
    """div(W f) with donor-cell face values; boundary faces carry no flux."""
    flux = []
    for a in range(grid.dim):
        d = grid.dim
        w = W[a][_sl(d, a, slice(1, -1))]
        lo = f[_sl(d, a, slice(None, -1))]
        hi = f[_sl(d, a, slice(1, None))]
        flux.append(pad_faces(np.maximum(w, 0.0) * lo + np.minimum(w, 0.0) * hi, a))
    return divergence(grid, flux)


def upwind_advect(grid: GridSpec, f, u, dt: float) -> np.ndarray:
    """One explicit donor-cell step of f_t + u.grad f = 0 in advective form.

    Each cell only gathers from upstream neighbours through inflow faces, so
    the update is a convex combination whenever dt * inflow <= 1.
    """
    d = grid.dim
    out = f.copy()
    for a, h in enumerate(grid.spacing):
        lo_vel = u[a][_sl(d, a, slice(None, -1))]
        hi_vel = u[a][_sl(d, a, slice(1, None))]
        # neighbour values, edge-replicated so wall faces contribute nothing
        fp = np.concatenate([f[_sl(d, a, slice(0, 1))], f, f[_sl(d, a, slice(-1, None))]], axis=a)
        f_lo = fp[_sl(d, a, slice(None, -2))]
        f_hi = fp[_sl(d, a, slice(2, None))]
        out += dt / h * (np.maximum(lo_vel, 0.0) * (f_lo - f) + np.maximum(-hi_vel, 0.0) * (f_hi - f))
    return out


def implicit_diffusion(grid: GridSpec, f, dt: float, scheme: TransportScheme, what: str) -> np.ndarray:
    op = LinearOperatorSpec("neumann_helmholtz", grid, alpha=dt)
    x, _ = solve_or_raise(op, f, scheme.solver_tol, scheme.solver_maxiter, scheme.preconditioner, what)
    return x


def advance_n(grid: GridSpec, n, c, u, dt: float, model, reg, scheme: TransportScheme, V=None) -> np.ndarray:
    if V is None:
        V = chemotactic_velocity(grid, n, c, model, reg)
    W = tuple(v + w for v, w in zip(V, u))
    worst = float(np.max(_outflow_rate(grid, W))) * dt
    if worst > 1.0 + 1e-12:
        raise CFLViolation(f"dt={dt:.3e} drains {worst:.3f} of a cell per step (must be <= 1)")
    n_tilde = n - dt * upwind_flux_divergence(grid, n, W)
    return implicit_diffusion(grid, n_tilde, dt, scheme, "cell-density diffusion")


def advance_c(grid: GridSpec, n, c, u, dt: float, scheme: TransportScheme) -> np.ndarray:
    worst = float(np.max(_inflow_rate(grid, u))) * dt
    if worst > 1.0 + 1e-12:
        raise CFLViolation(f"dt={dt:.3e} gives advective Courant sum {worst:.3f} (must be <= 1)")
    c_adv = upwind_advect(grid, c, u, dt)
    c_diff = implicit_diffusion(grid, c_adv, dt, scheme, "chemical diffusion")
    return c_diff / (1.0 + dt * n)
