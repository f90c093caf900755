from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from cutfem_ib.assembly import PenaltyParameters, build_system
from cutfem_ib.errors import SingularMatrixError
from cutfem_ib.mesh import build_mesh
from cutfem_ib.solver import RESIDUAL_RTOL, Factorization, factor_system, solve_system


def test_dense_oracle_small_system():
    r = np.random.default_rng(0)
    M = r.normal(size=(30, 30))
    A = sp.csr_matrix(M + M.T + 30 * np.eye(30))
    b = r.normal(size=30)
    x, rep = solve_system(A, b)
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-10)
    assert rep.ok and rep.residual <= RESIDUAL_RTOL * (abs(A).max() * np.linalg.norm(x) + np.linalg.norm(b))


def test_zero_rhs_returns_exact_zero():
    A = sp.identity(5, format="csr")
    x, rep = Factorization(A).solve(np.zeros(5))
    assert not np.any(x) and rep.residual == 0.0


def test_singular_matrix_raises():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularMatrixError):
        solve_system(A, np.array([1.0, 0.0]))


def test_shape_checks():
    with pytest.raises(ValueError):
        Factorization(sp.csr_matrix(np.ones((2, 3))))
    with pytest.raises(ValueError):
        Factorization(sp.identity(3)).solve(np.ones(4))


@pytest.mark.parametrize("dt", [None, 0.01])
def test_saddle_point_system_matches_direct(circle_poly, dt):
    _, _, dm, parts = build_system(circle_poly, build_mesh(8), 1.0)
    A = parts.matrix(PenaltyParameters(mu=1.0, h=1 / 8, dt=dt, kappa=4.0))
    b = np.random.default_rng(2).normal(size=dm.n_total)
    b[dm.n_velocity:dm.mean_dof] = 0.0
    fac = factor_system(A, dm)
    x, rep = fac.solve(b)
    assert rep.bordered and rep.ok
    dense = np.linalg.solve(A.toarray(), b)
    np.testing.assert_allclose(x, dense, atol=1e-8 * np.abs(dense).max())
    # mean constraint holds
    assert abs(x[dm.mean_dof - 0] - dense[-1]) < 1e-6 * max(1.0, abs(dense[-1]))
