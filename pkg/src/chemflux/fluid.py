"""Chorin projection step for the buoyancy-driven (Navier-)Stokes flow on a MAC grid.

One step of :func:`advance_u`::

    w   = u - dt*kappa*div(u (x) u)          donor-cell, conservative
    w   = (I - dt*Lap_D)^-1 w                per component, no-slip walls
    w  += dt * n_face * grad(phi)            buoyancy
    Lap_N P = div(w)/dt,  mean(P) = 0
    u+  = w - dt*grad(P)

Buoyancy is added after the viscous solve: a force that is a discrete
gradient then lands entirely in P and leaves u untouched.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, _sl, center_to_faces, divergence, face_gradient, pad_faces, vector_l2_norm
from .solvers import LinearOperatorSpec, SolverError, cg_solve, solve_or_raise

# instrumentation: number of convective-term evaluations
stats: Counter = Counter()


@dataclass(frozen=True)
class FluidParams:
    kappa: int = 1
    gravity: float = 1.0
    phi: str = "vertical"  # "vertical": phi = gravity * x_last; "zero": no forcing

    def __post_init__(self):
        if self.kappa not in (0, 1):
            raise ValueError(f"kappa must be 0 or 1, got {self.kappa}")
        if self.phi not in ("vertical", "zero"):
            raise ValueError(f"unknown potential {self.phi!r}")
        if not math.isfinite(self.gravity):
            raise ValueError("gravity must be finite")

    @property
    def phi_grad_bound(self) -> float:
        return abs(self.gravity) if self.phi == "vertical" else 0.0


@dataclass(frozen=True)
class FluidSolverOptions:
    tol: float = 1e-12
    maxiter: int = 2000
    preconditioner: str | None = "spectral"


def buoyancy_force(grid: GridSpec, n, params: FluidParams):
    """n*grad(phi) on faces: face-averaged n times the exact gradient of phi."""
    F = list(grid.zero_vector())
    if params.phi == "vertical" and params.gravity != 0.0:
        a = grid.dim - 1
        F[a] = pad_faces(params.gravity * center_to_faces(n, a), a)
    return tuple(F)


def convective_term(grid: GridSpec, u):
    """div(u (x) u) for each MAC component with donor-cell upwinding.

    Returns arrays on the interior faces of each component.
    """
    stats["convective_evals"] += 1
    dim = grid.dim
    out = []
    for k in range(dim):
        uk = u[k]
        acc = np.zeros(grid.face_shape(k))[_sl(dim, k, slice(1, -1))]
        for d in range(dim):
            h = grid.spacing[d]
            if d == k:
                # fluxes through cell centres between consecutive k-faces
                a = 0.5 * (uk[_sl(dim, k, slice(None, -1))] + uk[_sl(dim, k, slice(1, None))])
                lo = uk[_sl(dim, k, slice(None, -1))]
                hi = uk[_sl(dim, k, slice(1, None))]
                F = np.maximum(a, 0.0) * lo + np.minimum(a, 0.0) * hi
                acc += np.diff(F, axis=k) / h
            else:
                # fluxes through d-faces at the k-face positions
                ud = u[d]
                a = 0.5 * (ud[_sl(dim, k, slice(None, -1))] + ud[_sl(dim, k, slice(1, None))])
                a = a[_sl(dim, d, slice(1, -1))]
                uki = uk[_sl(dim, k, slice(1, -1))]
                lo = uki[_sl(dim, d, slice(None, -1))]
                hi = uki[_sl(dim, d, slice(1, None))]
                F = pad_faces(np.maximum(a, 0.0) * lo + np.minimum(a, 0.0) * hi, d)
                acc += np.diff(F, axis=d) / h
        out.append(acc)
    return tuple(out)


def pressure_poisson(grid: GridSpec, rhs, opts: FluidSolverOptions = FluidSolverOptions()):
    """Mean-zero P with Lap_N P = rhs - mean(rhs)."""
    op = LinearOperatorSpec("neumann_poisson", grid)
    P, report = cg_solve(op, rhs, tol=opts.tol, maxiter=opts.maxiter, preconditioner=opts.preconditioner)
    if not report.converged:
        raise SolverError(
            f"pressure Poisson solve did not converge; residual history tail {report.history[-5:]}", report
        )
    return P, report


def viscous_solve(grid: GridSpec, w, dt: float, opts: FluidSolverOptions):
    out = []
    for k in range(grid.dim):
        op = LinearOperatorSpec("dirichlet_helmholtz", grid, alpha=dt, axis=k)
        x, _ = solve_or_raise(op, w[k], opts.tol, opts.maxiter, opts.preconditioner, f"viscous solve (component {k})")
        out.append(pad_faces(x, k))
    return out


def project(grid: GridSpec, w, dt: float = 1.0, opts: FluidSolverOptions = FluidSolverOptions()):
    """Discrete Helmholtz projection; returns (divergence-free field, P)."""
    P, _ = pressure_poisson(grid, divergence(grid, w) / dt, opts)
    G = face_gradient(grid, P)
    u = []
    for k in range(grid.dim):
        uk = w[k] - dt * G[k]
        uk[_sl(grid.dim, k, slice(0, 1))] = 0.0
        uk[_sl(grid.dim, k, slice(-1, None))] = 0.0
        u.append(uk)
    return tuple(u), P


def advance_u(grid: GridSpec, u, n, dt: float, params: FluidParams, opts: FluidSolverOptions = FluidSolverOptions()):
    if params.kappa not in (0, 1):
        raise ValueError(f"kappa must be 0 or 1, got {params.kappa}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    dim = grid.dim
    interior = [u[k][_sl(dim, k, slice(1, -1))] for k in range(dim)]
    if params.kappa == 1:
        conv = convective_term(grid, u)
        interior = [w - dt * cv for w, cv in zip(interior, conv)]
    w = viscous_solve(grid, interior, dt, opts)
    F = buoyancy_force(grid, n, params)
    w = [wk + dt * Fk for wk, Fk in zip(w, F)]
    return project(grid, w, dt, opts)


def divergence_inf(grid: GridSpec, u) -> float:
    return float(np.max(np.abs(divergence(grid, u))))


def smooth_random_field(grid: GridSpec, rng: np.random.Generator, modes: int = 3):
    """Random low-mode face field with zero boundary faces (not yet divergence-free).

    Every product of sines with wavenumbers 1..modes per axis gets a normal
    amplitude, so no symmetry class (and hence no Stokes mode) is missed.
    """
    comps = []
    for k in range(grid.dim):
        pts = grid.face_points(k)
        basis = [
            np.stack([np.sin(q * np.pi * pts[a] / grid.extents[a]) for q in range(1, modes + 1)])
            for a in range(grid.dim)
        ]
        amp = rng.normal(size=(modes,) * grid.dim)
        if grid.dim == 2:
            f = np.einsum("pq,pij,qij->ij", amp, basis[0], basis[1])
        else:
            f = np.einsum("pqr,pijk,qijk,rijk->ijk", amp, basis[0], basis[1], basis[2])
        f[_sl(grid.dim, k, slice(0, 1))] = 0.0
        f[_sl(grid.dim, k, slice(-1, None))] = 0.0
        comps.append(f)
    return tuple(comps)


class FitError(RuntimeError):
    pass


def estimate_lambda1_stokes(
    grid: GridSpec,
    opts: FluidSolverOptions = FluidSolverOptions(),
    seed: int = 0,
    dt: float | None = None,
    settle: float = 1e-10,
    window: int = 50,
    max_steps: int = 20000,
    return_history: bool = False,
):
    """First Stokes eigenvalue from the force-free decay of a random solenoidal field.

    The field is rescaled to unit norm after every step and the log-norm is
    accumulated, so the decay can run past the point where faster modes have
    died out without underflow.  Once the per-step decrement has settled
    (relative change below ``settle`` over ``window`` steps) the accumulated
    log-norm over the last ``window`` steps is fitted by a line.  The decay
    factor g of the backward-Euler stepper is converted back to a
    continuous rate via lambda = (1/g - 1)/dt.
    """
    guess = sum((math.pi / L) ** 2 for L in grid.extents)
    if dt is None:
        dt = 0.01 / guess
    rng = np.random.default_rng(seed)
    u, _ = project(grid, smooth_random_field(grid, rng), 1.0, opts)
    norm0 = vector_l2_norm(grid, u)
    if norm0 == 0.0:
        raise FitError("random start has zero norm")
    u = tuple(c / norm0 for c in u)
    params = FluidParams(kappa=0, phi="zero")
    zero_n = grid.zeros()
    log_norms = [0.0]
    decrements = []
    settled = False
    for _ in range(max_steps):
        u, _ = advance_u(grid, u, zero_n, dt, params, opts)
        nrm = vector_l2_norm(grid, u)
        if not nrm > 0.0:
            raise FitError("field vanished during the decay")
        u = tuple(c / nrm for c in u)
        decrements.append(-math.log(nrm))
        log_norms.append(log_norms[-1] + math.log(nrm))
        if len(decrements) > window:
            d_now, d_then = decrements[-1], decrements[-1 - window]
            if abs(d_now - d_then) <= settle * abs(d_now):
                settled = True
                break
    if not settled:
        raise FitError(f"decay rate did not settle within {max_steps} steps")
    t = dt * np.arange(len(log_norms))
    y = np.array(log_norms)
    tail = slice(len(t) - window - 1, None)
    if np.any(np.diff(y[tail]) >= 0):
        raise FitError("energy decay tail is not monotone")
    slope = np.polyfit(t[tail], y[tail], 1)[0]
    lam = (math.exp(-slope * dt) - 1.0) / dt
    if return_history:
        return lam, t, y
    return lam
