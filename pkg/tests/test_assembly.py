from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutfem_ib.assembly import (
    DonorField,
    PenaltyParameters,
    assemble_rhs_dynamic,
    assemble_rhs_manufactured,
    build_system,
    ghost_face_matrices,
)
from cutfem_ib.exact import ExactSolution
from cutfem_ib.interface import Circle, CurveSpec, polygon_from_points, sample_initial
from cutfem_ib.mesh import build_mesh
from cutfem_ib.solver import factor_system, pressure_null_vector
from cutfem_ib.spaces import eval_velocity, interpolate_velocity, project_pressure


def _star(seed, m=40):
    r = np.random.default_rng(seed)
    th = 2 * np.pi * (np.arange(m) + 0.3 * r.uniform(size=m)) / m
    rad = 0.22 + 0.06 * np.cos(2 * th + r.uniform(0, 6))
    return polygon_from_points(np.column_stack([0.5 + rad * np.cos(th), 0.5 + rad * np.sin(th)]))


@pytest.fixture(scope="module")
def system(circle_poly):
    return build_system(circle_poly, build_mesh(8), 1.0)


def test_penalty_parameters_arithmetic():
    p = PenaltyParameters(mu=1.0, h=1 / 32, dt=0.01)
    assert p.gamma_p == pytest.approx(0.025)
    assert p.gamma_u == pytest.approx(10 + 10 / 1024 / 0.01)
    assert p.pen2 == pytest.approx(10 / 32 / 0.01)
    s = PenaltyParameters(mu=2.0, h=1 / 16)
    assert s.static and s.gamma_u == 20.0 and s.gamma_p == 1 / 80 and s.pen2 == 0.0


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([None, 0.01, 0.05]), st.sampled_from([0, 1]),
       st.floats(0.1, 5.0))
def test_global_matrix_symmetric(seed, dt, nu, mu):
    _, _, dm, parts = build_system(_star(seed), build_mesh(8), mu)
    A = parts.matrix(PenaltyParameters(mu=mu, h=1 / 8, dt=dt, kappa=3.0, nu=nu))
    asym = abs(A - A.T).max()
    assert asym <= 1e-12 * abs(A).max()


def test_ghost_penalties_vanish_on_global_polynomials(system):
    _, _, dm, parts = system
    x = np.zeros(dm.n_total)
    for side in (1, 2):
        interpolate_velocity(dm, side, lambda X, Y: np.column_stack([X * X * Y * Y + X, 3 * X * Y - Y * Y]), x)
        project_pressure(dm, side, lambda X, Y: 2 - X + 4 * Y, x)
    xu = x.copy()
    xu[dm.n_velocity:] = 0
    xp = x - xu
    scale_u = abs(parts.ghost_u).max() * (xu @ xu)
    scale_p = abs(parts.ghost_p).max() * (xp @ xp)
    assert abs(xu @ (parts.ghost_u @ xu)) <= 1e-12 * scale_u
    assert abs(xp @ (parts.ghost_p @ xp)) <= 1e-12 * scale_p
    # but a kinked field is penalised
    y = np.zeros(dm.n_total)
    interpolate_velocity(dm, 1, lambda X, Y: np.column_stack([np.abs(X - 0.51), 0 * Y]), y)
    assert y @ (parts.ghost_u @ y) > 1e-6


def test_ghost_reference_matrices_psd():
    for axis, mats in ghost_face_matrices(0.125).items():
        for M in mats:
            np.testing.assert_allclose(M, M.T, atol=1e-12 * abs(M).max())
            assert np.linalg.eigvalsh(M).min() >= -1e-10 * abs(M).max()
        # constants across the face are in the kernel
        Ku, Kp = mats
        one = np.zeros(36)
        one[:9] = one[18:27] = 1.0
        assert abs(one @ Ku @ one) <= 1e-12 * abs(Ku).max()
        c = np.array([1.0, 0, 0, 1.0, 0, 0])
        assert abs(c @ Kp @ c) <= 1e-12 * abs(Kp).max()


def test_forms_are_semidefinite(system):
    _, _, dm, parts = system
    r = np.random.default_rng(5)
    for name in ("mass", "stokes", "iface_pen1", "iface_pen2", "bdry_pen1", "bdry_pen2",
                 "ghost_u", "ghost_p", "membrane"):
        M = getattr(parts, name)
        for _ in range(5):
            v = r.normal(size=dm.n_total)
            assert v @ (M @ v) >= -1e-10 * abs(M).max() * (v @ v), name


def test_mass_integrates_constant(system):
    _, _, dm, parts = system
    x = np.zeros(dm.n_total)
    for side in (1, 2):
        interpolate_velocity(dm, side, lambda X, Y: np.column_stack([2 + 0 * X, -1 + 0 * Y]), x)
    assert 0.5 * x @ (parts.mass @ x) == pytest.approx(0.5 * 5.0, rel=1e-13)


def test_vertex_average_and_membrane(system, circle_poly):
    _, _, dm, parts = system
    f = lambda X, Y: np.column_stack([X * Y, 1 - Y * Y])
    x = np.zeros(dm.n_total)
    for side in (1, 2):
        interpolate_velocity(dm, side, f, x)
    vel = (parts.vertex_avg @ x).reshape(-1, 2)
    np.testing.assert_allclose(vel, f(*circle_poly.points.T), atol=1e-13)
    d = np.diff(np.vstack([vel, vel[:1]]), axis=0)
    oracle = np.sum(np.sum(d * d, axis=1) / circle_poly.ds)
    assert x @ (parts.membrane @ x) == pytest.approx(oracle, rel=1e-12)


def test_pressure_constant_is_null_vector(system):
    _, _, dm, parts = system
    A = parts.matrix(PenaltyParameters(mu=1.0, h=1 / 8, dt=0.01, kappa=2.0))
    z = pressure_null_vector(dm)
    r = A[:-1, :-1] @ z
    assert np.abs(r).max() <= 1e-12 * abs(A).max()


def test_zero_data_fixed_point(system):
    _, _, dm, parts = system
    params = PenaltyParameters(mu=1.0, h=1 / 8, dt=0.01, kappa=0.0)
    rhs, donors = assemble_rhs_dynamic(parts, params, DonorField(dm, np.zeros(dm.n_total)))
    assert not np.any(rhs)
    x, rep = factor_system(parts.matrix(params), dm).solve(rhs)
    assert not np.any(x) and rep.residual == 0.0


def test_polynomial_patch_test():
    """Q2/P1-representable two-phase data is reproduced to roundoff."""
    ex = ExactSolution(velocity={1: ("x**2", "-2*x*y"), 2: ("y**2", "x**2")},
                       pressure={1: "x + y", 2: "2*x - y"})
    poly = sample_initial(CurveSpec(Circle(0.3), 60))
    _, geom, dm, parts = build_system(poly, build_mesh(8), 1.0)
    params = PenaltyParameters(mu=1.0, h=1 / 8)
    x, _ = factor_system(parts.matrix(params), dm).solve(assemble_rhs_manufactured(parts, params, ex))
    for side in (1, 2):
        b = geom.bulk(side)
        u = eval_velocity(dm, x, side, b.points, b.elem)
        np.testing.assert_allclose(u, ex.u(side, *b.points.T), atol=1e-10)
