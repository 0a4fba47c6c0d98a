"""Matrix-free conjugate gradients for the Helmholtz and Poisson systems.

Three operator families appear in the time stepper:

* ``neumann_helmholtz``   (I - a*Lap_N) on cell centers
* ``dirichlet_helmholtz`` (I - a*Lap_D) on the interior faces of one
  velocity component (no-slip walls, ghost reflection tangentially)
* ``neumann_poisson``     Lap_N on cell centers, null space = constants

All are diagonalised by separable sine/cosine transforms on a uniform box,
which is what the ``"spectral"`` preconditioner exploits.  With it CG
converges in one or two iterations; ``"jacobi"`` and ``None`` are kept for
verification and for grids where the transform is not wanted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft

from .grid import GridSpec, _sl

KINDS = ("neumann_helmholtz", "dirichlet_helmholtz", "neumann_poisson")

# scipy.fft worker count; 1 is the serial reference mode
fft_workers = 1


def set_serial(serial: bool = True) -> None:
    global fft_workers
    fft_workers = 1 if serial else -1


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class LinearOperatorSpec:
    kind: str
    grid: GridSpec
    alpha: float = 0.0
    axis: int | None = None  # velocity component for dirichlet_helmholtz

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.kind == "dirichlet_helmholtz" and self.axis not in range(self.grid.dim):
            raise ValueError("dirichlet_helmholtz needs the component axis")

    @property
    def shape(self) -> tuple[int, ...]:
        if self.kind == "dirichlet_helmholtz":
            s = list(self.grid.cells)
            s[self.axis] -= 1
            return tuple(s)
        return self.grid.shape


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    history: list[float] = field(default_factory=list)


def _second_difference(x: np.ndarray, axis: int, h: float, bc: str) -> np.ndarray:
    d = x.ndim
    lo = x[_sl(d, axis, slice(0, 1))]
    hi = x[_sl(d, axis, slice(-1, None))]
    if bc == "neumann":
        xp = np.concatenate([lo, x, hi], axis=axis)
    elif bc == "dirichlet_node":
        xp = np.concatenate([np.zeros_like(lo), x, np.zeros_like(hi)], axis=axis)
    else:  # wall half a cell away: odd ghost
        xp = np.concatenate([-lo, x, -hi], axis=axis)
    return np.diff(xp, n=2, axis=axis) / h**2


def _axis_bc(op: LinearOperatorSpec, a: int) -> str:
    if op.kind != "dirichlet_helmholtz":
        return "neumann"
    return "dirichlet_node" if a == op.axis else "dirichlet_ghost"


def laplacian(op: LinearOperatorSpec, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    for a, h in enumerate(op.grid.spacing):
        out += _second_difference(x, a, h, _axis_bc(op, a))
    return out


def apply(op: LinearOperatorSpec, x: np.ndarray) -> np.ndarray:
    if op.kind == "neumann_poisson":
        return laplacian(op, x)
    return x - op.alpha * laplacian(op, x)


def _axis_eigenvalues(op: LinearOperatorSpec, a: int) -> np.ndarray:
    """Eigenvalues of -d2/dx2 along axis a in the transform's mode order."""
    h = op.grid.spacing[a]
    m = op.grid.cells[a]
    bc = _axis_bc(op, a)
    if bc == "neumann":
        q = np.arange(m)
    elif bc == "dirichlet_node":
        q = np.arange(1, m)
    else:
        q = np.arange(1, m + 1)
    return 4.0 / h**2 * np.sin(np.pi * q / (2 * m)) ** 2


def _eigen_tensor(op: LinearOperatorSpec) -> np.ndarray:
    d = op.grid.dim
    lam = np.zeros(op.shape)
    for a in range(d):
        shape = [1] * d
        shape[a] = -1
        lam = lam + _axis_eigenvalues(op, a).reshape(shape)
    return lam


_TRANSFORM = {"neumann": ("dct", 2), "dirichlet_node": ("dst", 1), "dirichlet_ghost": ("dst", 2)}


def _forward(op: LinearOperatorSpec, x: np.ndarray) -> np.ndarray:
    for a in range(op.grid.dim):
        fn, t = _TRANSFORM[_axis_bc(op, a)]
        x = getattr(scipy.fft, fn)(x, type=t, axis=a, norm="ortho", workers=fft_workers)
    return x


def _inverse(op: LinearOperatorSpec, x: np.ndarray) -> np.ndarray:
    for a in range(op.grid.dim):
        fn, t = _TRANSFORM[_axis_bc(op, a)]
        x = getattr(scipy.fft, "i" + fn)(x, type=t, axis=a, norm="ortho", workers=fft_workers)
    return x


def spectral_preconditioner(op: LinearOperatorSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Exact inverse of the SPD form of ``op`` via separable transforms.

    For the Poisson kind the SPD form is -Lap_N and the constant mode is
    mapped to zero.
    """
    lam = _eigen_tensor(op)
    if op.kind == "neumann_poisson":
        inv = np.zeros_like(lam)
        nz = lam > 0
        inv[nz] = 1.0 / lam[nz]
        inv.flat[0] = 0.0
    else:
        inv = 1.0 / (1.0 + op.alpha * lam)
    return lambda r: _inverse(op, _forward(op, r) * inv)


def jacobi_preconditioner(op: LinearOperatorSpec) -> Callable[[np.ndarray], np.ndarray]:
    diag = np.zeros(op.shape)
    d = op.grid.dim
    for a, h in enumerate(op.grid.spacing):
        n = op.shape[a]
        w = np.full(n, 2.0)
        bc = _axis_bc(op, a)
        if bc == "neumann":
            w[0] = w[-1] = 1.0
        elif bc == "dirichlet_ghost":
            w[0] = w[-1] = 3.0
        shape = [1] * d
        shape[a] = -1
        diag = diag + (w / h**2).reshape(shape)
    if op.kind != "neumann_poisson":
        diag = 1.0 + op.alpha * diag
    return lambda r: r / diag


def make_preconditioner(op: LinearOperatorSpec, kind: str | None):
    if kind is None or kind == "none":
        return None
    if kind == "spectral":
        return spectral_preconditioner(op)
    if kind == "jacobi":
        return jacobi_preconditioner(op)
    raise ValueError(f"unknown preconditioner {kind!r}")


def cg_solve(
    op: LinearOperatorSpec,
    rhs: np.ndarray,
    tol: float = 1e-12,
    maxiter: int = 2000,
    preconditioner: str | None = "spectral",
    x0: np.ndarray | None = None,
    callback: Callable[[np.ndarray], None] | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``op x = rhs`` by (preconditioned) conjugate gradients.

    Convergence means ``||rhs - op x||_2 <= tol * ||rhs||_2``.  For
    ``neumann_poisson`` the mean of ``rhs`` is removed first and the
    returned solution has zero mean.  Running out of iterations is not an
    error here; inspect ``report.converged``.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != op.shape:
        raise ValueError(f"rhs shape {rhs.shape} does not match operator shape {op.shape}")
    poisson = op.kind == "neumann_poisson"
    if poisson:
        # CG on the SPD form -Lap_N x = -(rhs - mean)
        b = -(rhs - rhs.mean())
        A = lambda v: -laplacian(op, v)  # noqa: E731
    else:
        b = rhs
        A = lambda v: apply(op, v)  # noqa: E731
    M = make_preconditioner(op, preconditioner)

    bnorm = math.sqrt(float(np.sum(b * b)))
    if poisson and bnorm <= 64 * np.finfo(float).eps * math.sqrt(float(np.sum(rhs * rhs))):
        # only the incompatible (constant) part was present; what is left is round-off
        bnorm = 0.0
        b = np.zeros_like(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0 and x0 is None:
        return x, SolveReport(0, 0.0, True, [0.0])

    r = b - A(x) if x0 is not None else b.copy()
    rnorm = math.sqrt(float(np.sum(r * r)))
    history = [rnorm / bnorm if bnorm else rnorm]
    if rnorm <= tol * bnorm:
        return x, SolveReport(0, history[-1], True, history)

    z = M(r) if M else r
    if poisson:
        z = z - z.mean()
    p = z.copy()
    rz = float(np.sum(r * z))
    it = 0
    converged = False
    while it < maxiter:
        it += 1
        Ap = A(p)
        pAp = float(np.sum(p * Ap))
        if pAp <= 0.0:
            break
        step = rz / pAp
        x += step * p
        r -= step * Ap
        if poisson:
            x -= x.mean()
        if callback is not None:
            callback(x)
        rnorm = math.sqrt(float(np.sum(r * r)))
        history.append(rnorm / bnorm)
        if rnorm <= tol * bnorm:
            converged = True
            break
        z = M(r) if M else r
        if poisson:
            z = z - z.mean()
        rz_new = float(np.sum(r * z))
        p = z + (rz_new / rz) * p
        rz = rz_new

    return x, SolveReport(it, history[-1], converged, history)


def solve_or_raise(op, rhs, tol, maxiter, preconditioner="spectral", what="linear solve"):
    x, report = cg_solve(op, rhs, tol=tol, maxiter=maxiter, preconditioner=preconditioner)
    if not report.converged:
        raise SolverError(
            f"{what} did not converge: residual {report.final_residual:.3e} after "
            f"{report.iterations} iterations (tol {tol:.1e})",
            report,
        )
    return x, report
