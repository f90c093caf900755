"""Sparse direct solution of the bordered saddle-point system.

The global matrix has the form ``[[A0, c], [c^T, 0]]`` where the last row is
the pressure-mean constraint.  ``A0`` is singular with the piecewise-constant
pressure as its null vector ``z``.  Factoring the dense border directly ruins
the fill-reducing ordering, so we factor ``A0`` with one pressure constant
pinned and recover the bordered solution from ``z``.

Most pressure rows of ``A0`` have a zero diagonal, which forces SuperLU into
off-diagonal pivoting and destroys a symmetric ordering.  The first attempt
therefore factors a copy whose pressure diagonal is shifted by a roundoff-level
amount; iterative refinement against the exact matrix removes the shift.  If
refinement stalls above the residual contract, unshifted factorizations with
increasing pivot thresholds are tried.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularMatrixError

log = logging.getLogger(__name__)

RESIDUAL_RTOL = 1e-9
PRESSURE_SHIFT = 1e-14
# (ordering, diagonal pivot threshold, shifted) in the order they are tried
STRATEGIES = (
    ("MMD_AT_PLUS_A", 0.0, True),
    ("COLAMD", 1e-3, False),
    ("COLAMD", 0.1, False),
    ("COLAMD", 1.0, False),
)


@dataclass
class SolveReport:
    residual: float
    bound: float
    refinements: int
    bordered: bool
    strategy: int

    @property
    def ok(self) -> bool:
        return self.residual <= self.bound


def _max_abs(A: sp.spmatrix) -> float:
    return float(abs(A).max()) if A.nnz else 0.0


def _locate_singular_block(A: sp.spmatrix, names) -> str | None:
    if names is None:
        return None
    A = sp.csr_matrix(A)
    absr = np.asarray(abs(A).sum(axis=1)).ravel()
    tiny = absr <= 1e-14 * max(absr.max(), 1.0)
    if np.any(tiny):
        return str(names[np.flatnonzero(tiny)[0]])
    zero_diag = A.diagonal() == 0
    if np.any(zero_diag):
        # zero diagonals are expected on pressure rows; report the most common one
        vals, counts = np.unique(names[zero_diag].astype(str), return_counts=True)
        return str(vals[np.argmax(counts)])
    return None


class Factorization:
    """Reusable factorization of the global system matrix.

    Parameters
    ----------
    A : square sparse matrix
    block_names : optional per-dof block labels used in error messages
    null_vector : null vector of ``A`` with its last row/column removed
    pin : index with ``null_vector[pin] != 0`` eliminated from the factorization
    shift_mask : dofs (of the unbordered system) that may receive the diagonal shift
    """

    def __init__(self, A, block_names=None, null_vector=None, pin: int | None = None, shift_mask=None):
        A = sp.csr_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        self.n = A.shape[0]
        self.names = None if block_names is None else np.asarray(block_names)
        self.norm = _max_abs(A)
        self.bordered = False
        self.strategy = 0
        self._shift_mask = shift_mask
        if null_vector is not None:
            self._setup_border(np.asarray(null_vector, dtype=float), pin)
        if self.bordered:
            self.B = self.A0[self.keep][:, self.keep].tocsc()
            names = None if self.names is None else self.names[: self.n - 1][self.keep]
            mask = None if shift_mask is None else np.asarray(shift_mask)[self.keep]
        else:
            self.B = self.A.tocsc()
            names = self.names
            mask = shift_mask
        self._bnames = names
        self._bmask = mask
        self._factor()

    # -- setup --------------------------------------------------------------
    def _setup_border(self, z: np.ndarray, pin: int | None) -> None:
        n0 = self.n - 1
        A0 = self.A[:n0, :n0].tocsr()
        c = self.A[:n0, n0].toarray().ravel()
        if self.A[n0, n0] != 0.0 or np.abs(self.A[n0, :n0].toarray().ravel() - c).max() > 0:
            return
        if pin is None:
            pin = int(np.argmax(np.abs(z)))
        if z[pin] == 0.0 or abs(c @ z) == 0.0:
            return
        nz = np.abs(A0 @ z).max() / max(self.norm * np.abs(z).max(), 1e-300)
        if nz > 1e-10:
            log.debug("supplied null vector fails check (%.2e); factoring full matrix", nz)
            return
        keep = np.ones(n0, dtype=bool)
        keep[pin] = False
        self.keep = np.flatnonzero(keep)
        self.A0 = A0
        self.z = z
        self.c = c
        self.bordered = True

    def _factor(self) -> None:
        order, thresh, shifted = STRATEGIES[self.strategy]
        M = self.B
        if shifted:
            if self._bmask is None:
                self.strategy += 1
                return self._factor()
            shift = np.where(self._bmask, -PRESSURE_SHIFT * self.norm, 0.0)
            M = (M + sp.diags(shift)).tocsc()
        try:
            self.lu = spla.splu(M, permc_spec=order, diag_pivot_thresh=thresh, options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            if self.strategy + 1 < len(STRATEGIES):
                self.strategy += 1
                return self._factor()
            block = _locate_singular_block(self.B, self._bnames)
            raise SingularMatrixError(f"system matrix is singular ({exc}); suspect block: {block}", block=block) from exc

    # -- solves -------------------------------------------------------------
    def _inner(self, r: np.ndarray) -> np.ndarray:
        """Approximate solve with the factored (possibly shifted) matrix, refined against ``B``."""
        with np.errstate(all="ignore"):
            y = self.lu.solve(r)
            if _STRATEGY_SHIFTED[self.strategy]:
                best = y
                best_res = np.linalg.norm(r - self.B @ y)
                for _ in range(8):
                    y = y + self.lu.solve(r - self.B @ y)
                    res = np.linalg.norm(r - self.B @ y)
                    if not res < 0.5 * best_res:
                        if res < best_res:
                            best, best_res = y, res
                        break
                    best, best_res = y, res
                y = best
        return y

    def _raw_solve(self, b: np.ndarray) -> np.ndarray:
        if not self.bordered:
            return self._inner(b)
        n0 = self.n - 1
        rb, beta = b[:n0], b[n0]
        z, c = self.z, self.c
        lam = (z @ rb) / (z @ c)
        r = rb - lam * c
        xp = np.zeros(n0)
        xp[self.keep] = self._inner(r[self.keep])
        alpha = (beta - c @ xp) / (c @ z)
        return np.r_[xp + alpha * z, lam]

    def _bound(self, x: np.ndarray, b: np.ndarray) -> float:
        return RESIDUAL_RTOL * (self.norm * np.linalg.norm(x) + np.linalg.norm(b))

    def _solve_once(self, b: np.ndarray, max_refine: int) -> tuple[np.ndarray, SolveReport]:
        x = self._raw_solve(b)
        if not np.all(np.isfinite(x)):
            block = _locate_singular_block(self.A, self.names)
            raise SingularMatrixError(f"non-finite solution; suspect block: {block}", block=block)
        res = np.linalg.norm(b - self.A @ x)
        it = 0
        while it < max_refine and res > 1e-3 * self._bound(x, b):
            dx = self._raw_solve(b - self.A @ x)
            xn = x + dx
            rn = np.linalg.norm(b - self.A @ xn)
            if not np.isfinite(rn) or rn >= res:
                break
            x, res = xn, rn
            it += 1
        report = SolveReport(float(res), float(self._bound(x, b)), it, self.bordered, self.strategy)
        if not report.ok:
            block = _locate_singular_block(self.A, self.names)
            raise SingularMatrixError(
                f"residual {report.residual:.3e} exceeds {report.bound:.3e} after {it} refinements; "
                f"matrix is numerically singular (suspect block: {block})",
                block=block,
            )
        return x, report

    def solve(self, b: np.ndarray, max_refine: int = 4) -> tuple[np.ndarray, SolveReport]:
        """Solve ``A x = b``; the residual contract is checked before returning."""
        b = np.asarray(b, dtype=float)
        if b.shape != (self.n,):
            raise ValueError(f"rhs has shape {b.shape}, expected ({self.n},)")
        if not np.any(b):
            return np.zeros(self.n), SolveReport(0.0, 0.0, 0, self.bordered, self.strategy)
        while True:
            try:
                return self._solve_once(b, max_refine)
            except SingularMatrixError:
                if self.strategy + 1 >= len(STRATEGIES):
                    raise
                log.debug("factorization strategy %d insufficient, trying the next", self.strategy)
                self.strategy += 1
                self._factor()


_STRATEGY_SHIFTED = tuple(s[2] for s in STRATEGIES)


def pressure_null_vector(dofmap) -> np.ndarray:
    """Piecewise-constant unit pressure on every active element (mean dof excluded)."""
    z = np.zeros(dofmap.n_total - 1)
    for side in (1, 2):
        pd = dofmap.pres_dofs(side)
        z[pd[dofmap.active[side - 1], 0]] = 1.0
    return z


def factor_system(A, dofmap) -> Factorization:
    """Factor a global system built on ``dofmap`` using the pressure-mean border."""
    mask = np.zeros(dofmap.n_total - 1, dtype=bool)
    mask[dofmap.n_velocity :] = True
    return Factorization(
        A, dofmap.block_names, pressure_null_vector(dofmap), pin=dofmap.p_offset[0], shift_mask=mask
    )


def solve_system(A, b, dofmap=None) -> tuple[np.ndarray, SolveReport]:
    if dofmap is None:
        return Factorization(A).solve(b)
    return factor_system(A, dofmap).solve(b)
