import numpy as np
import pytest

from chemflux.grid import make_grid, neumann_laplacian
from chemflux.solvers import LinearOperatorSpec, SolverError, apply, cg_solve, solve_or_raise

from conftest import cos_mode, mu_h


@pytest.mark.parametrize("pre", ["spectral", "jacobi", None])
def test_helmholtz_eigen_oracle(unit32, pre):
    alpha = 0.01
    f = cos_mode(unit32)
    op = LinearOperatorSpec("neumann_helmholtz", unit32, alpha=alpha)
    x, rep = cg_solve(op, 1.0 + f, tol=1e-13, preconditioner=pre)
    assert rep.converged
    np.testing.assert_allclose(x, 1.0 + f / (1 + alpha * mu_h(1 / 32)), atol=1e-12)


def test_spectral_preconditioner_is_exact(unit32, rng):
    op = LinearOperatorSpec("neumann_helmholtz", unit32, alpha=0.3)
    _, rep = cg_solve(op, rng.normal(size=unit32.shape), tol=1e-12)
    assert rep.iterations <= 2


@pytest.mark.parametrize("pre", ["spectral", "jacobi"])
def test_poisson_eigen_oracle(unit32, pre):
    f = cos_mode(unit32)
    op = LinearOperatorSpec("neumann_poisson", unit32)
    x, rep = cg_solve(op, f + 5.0, tol=1e-13, preconditioner=pre)  # mean is discarded
    assert rep.converged
    assert abs(x.mean()) < 1e-14
    np.testing.assert_allclose(x, -f / mu_h(1 / 32), atol=1e-13)
    np.testing.assert_allclose(neumann_laplacian(unit32, x), f, atol=1e-9)


def test_dirichlet_helmholtz_sine_modes():
    g = make_grid(2, [1.0, 1.0], [16, 16])
    alpha = 0.02
    # x-velocity lives on interior x-faces (nodes) and y cell centres
    op = LinearOperatorSpec("dirichlet_helmholtz", g, alpha=alpha, axis=0)
    xs = g.axis_nodes(0)[1:-1]
    ys = g.axis_centers(1)
    mode = np.sin(np.pi * xs)[:, None] * np.sin(np.pi * ys)[None, :]
    h = 1 / 16
    lam_node = 4 / h**2 * np.sin(np.pi / 32) ** 2
    # odd reflection about the wall: ghost = -value; sin(pi y) at centres is an eigenvector
    lam_ghost = 4 / h**2 * np.sin(np.pi / 32) ** 2
    x, rep = cg_solve(op, mode, tol=1e-13)
    assert rep.converged and op.shape == (15, 16)
    np.testing.assert_allclose(x, mode / (1 + alpha * (lam_node + lam_ghost)), atol=1e-13)


def test_3d_operators_agree_with_dense(rng):
    g = make_grid(3, [1.0, 0.7, 1.3], [5, 4, 6])
    for kind, axis in [("neumann_helmholtz", None), ("dirichlet_helmholtz", 2), ("dirichlet_helmholtz", 0)]:
        op = LinearOperatorSpec(kind, g, alpha=0.05, axis=axis)
        size = int(np.prod(op.shape))
        A = np.column_stack([apply(op, e.reshape(op.shape)).ravel() for e in np.eye(size)])
        np.testing.assert_allclose(A, A.T, atol=1e-10)
        b = rng.normal(size=op.shape)
        x, rep = cg_solve(op, b, tol=1e-13)
        np.testing.assert_allclose(x.ravel(), np.linalg.solve(A, b.ravel()), atol=1e-11)
        jx, _ = cg_solve(op, b, tol=1e-13, preconditioner="jacobi")
        np.testing.assert_allclose(jx, x, atol=1e-11)


def test_zero_rhs_and_shape_checks(unit32):
    op = LinearOperatorSpec("neumann_helmholtz", unit32, alpha=1.0)
    x, rep = cg_solve(op, unit32.zeros())
    assert rep.iterations == 0 and np.all(x == 0)
    with pytest.raises(ValueError):
        cg_solve(op, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        LinearOperatorSpec("bogus", unit32)
    with pytest.raises(ValueError):
        LinearOperatorSpec("dirichlet_helmholtz", unit32, alpha=1.0)


def test_iteration_budget_raises(unit32, rng):
    op = LinearOperatorSpec("neumann_helmholtz", unit32, alpha=10.0)
    b = rng.normal(size=unit32.shape)
    _, rep = cg_solve(op, b, tol=1e-14, maxiter=2, preconditioner=None)
    assert not rep.converged and rep.iterations == 2
    with pytest.raises(SolverError) as err:
        solve_or_raise(op, b, 1e-14, 2, None, "probe")
    assert err.value.report.iterations == 2


def test_jacobi_poisson_reaches_tolerance(unit32, rng):
    op = LinearOperatorSpec("neumann_poisson", unit32)
    _, rep = cg_solve(op, rng.normal(size=unit32.shape), tol=1e-12, preconditioner="jacobi")
    assert rep.converged
    assert rep.history[-1] <= 1e-12
