"""Closed-form two-phase fields for manufactured steady problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sym

_x, _y = sym.symbols("x y", real=True)


def _vec(fn, x, y):
    """Evaluate a lambdified expression list and broadcast to ``(P, k)``."""
    x = np.asarray(x, dtype=float)
    out = fn(x, y)
    return np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in out], axis=-1)


@dataclass
class ExactSolution:
    """Velocity and pressure expressions per side (1 = exterior, 2 = interior).

    Expressions are sympy strings in ``x`` and ``y``.  The body force is
    ``-div(mu eps(u)) + grad p`` evaluated symbolically.
    """

    velocity: dict[int, tuple[str, str]]
    pressure: dict[int, str]
    mu: float = 1.0
    _fns: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        mu = sym.nsimplify(self.mu)
        for side in (1, 2):
            u = sym.Matrix([sym.sympify(e, locals={"x": _x, "y": _y}) for e in self.velocity[side]])
            p = sym.sympify(self.pressure[side], locals={"x": _x, "y": _y})
            grad = u.jacobian([_x, _y])
            eps = (grad + grad.T) / 2
            div_eps = sym.Matrix([sym.diff(eps[i, 0], _x) + sym.diff(eps[i, 1], _y) for i in range(2)])
            f = -mu * div_eps + sym.Matrix([sym.diff(p, _x), sym.diff(p, _y)])
            args = (_x, _y)
            self._fns[side] = {
                "u": sym.lambdify(args, list(u), "numpy"),
                "grad_u": sym.lambdify(args, list(grad), "numpy"),
                "p": sym.lambdify(args, p, "numpy"),
                "grad_p": sym.lambdify(args, [sym.diff(p, _x), sym.diff(p, _y)], "numpy"),
                "f": sym.lambdify(args, [sym.simplify(c) for c in f], "numpy"),
                "div": sym.lambdify(args, sym.simplify(grad.trace()), "numpy"),
            }

    def u(self, side: int, x, y) -> np.ndarray:
        return _vec(self._fns[side]["u"], x, y)

    def grad_u(self, side: int, x, y) -> np.ndarray:
        """``(P, 2, 2)`` with ``[component, derivative]``."""
        return _vec(self._fns[side]["grad_u"], x, y).reshape(-1, 2, 2)

    def p(self, side: int, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self._fns[side]["p"](x, y), dtype=float), x.shape).copy()

    def grad_p(self, side: int, x, y) -> np.ndarray:
        return _vec(self._fns[side]["grad_p"], x, y)

    def f(self, side: int, x, y) -> np.ndarray:
        return _vec(self._fns[side]["f"], x, y)

    def divergence(self, side: int, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self._fns[side]["div"](x, y), dtype=float), x.shape).copy()

    def traction(self, side: int, x, y, normals, mu: float | None = None) -> np.ndarray:
        mu = self.mu if mu is None else mu
        g = self.grad_u(side, x, y)
        eps = 0.5 * (g + np.swapaxes(g, 1, 2))
        n = np.atleast_2d(normals)
        return mu * np.einsum("pij,pj->pi", eps, n) - self.p(side, x, y)[:, None] * n


def example1_solution(mu: float = 1.0) -> ExactSolution:
    """Smooth divergence-free fields with a jump in velocity, traction and pressure."""
    return ExactSolution(
        velocity={
            1: ("sin(x)*cos(y)", "-cos(x)*sin(y)"),
            2: ("x*exp(-x*y)", "-y*exp(-x*y)"),
        },
        pressure={1: "sin(2*pi*x)*cos(2*pi*y)", 2: "x**2*y**2"},
        mu=mu,
    )
