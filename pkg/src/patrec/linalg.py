"""Conjugate gradients and cached normal-equation solvers.

The quadratic sub-problem of every outer iteration shares one SPD matrix
(2/n) H^T H + beta * (I + D^T D); only the right-hand side changes. Two
interchangeable backends solve it:

* ``CgNormalSolver`` - matrix-free conjugate gradients through the
  operator's apply/adjoint, the route that scales to large grids.
* ``DirectNormalSolver`` - dense Cholesky factorization computed once and
  reused for every right-hand side, worthwhile at moderate image sizes.
"""

import numpy as np
import scipy.linalg

from .errors import NonConvergence


def conjugate_gradient(apply_a, b, x0=None, tol=1e-8, max_iter=2000):
    """Solve A x = b for SPD A given as a callable.

    Stops when ||b - A x|| <= tol * ||b||. Returns (x, rel_residual,
    iterations). Does not raise; callers decide what a cap hit means.
    """
    b = np.asarray(b, dtype=np.float64)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros_like(b), 0.0, 0
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply_a(x)
    res = np.linalg.norm(r)
    if res <= tol * b_norm:
        return x, res / b_norm, 0
    p = r.copy()
    rs = r @ r
    for it in range(1, max_iter + 1):
        ap = apply_a(p)
        alpha = rs / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        rs_new = r @ r
        res = np.sqrt(rs_new)
        if res <= tol * b_norm:
            return x, res / b_norm, it
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, res / b_norm, max_iter


class CgNormalSolver:
    """Matrix-free CG on (2/n) H^T H x + beta * G x = rhs."""

    def __init__(self, op, gram, beta: float):
        self.op = op
        self.gram = gram
        self.beta = beta
        self._scale = 2.0 / op.rows

    def apply(self, x):
        return self._scale * self.op.adjoint(self.op.apply(x)) + self.beta * (
            self.gram @ x
        )

    def solve(self, rhs, x0=None, tol=1e-8, max_iter=2000):
        x, rel, it = conjugate_gradient(self.apply, rhs, x0, tol, max_iter)
        if rel > tol:
            raise NonConvergence(
                f"normal-equation CG: residual {rel:.3e} > {tol:.1e} "
                f"after {it} iterations"
            )
        return x


class DirectNormalSolver:
    """Dense Cholesky of (2/n) H^T H + beta * G, shared across solves."""

    def __init__(self, op, gram, beta: float):
        hd = op.matrix.toarray()
        a = (2.0 / op.rows) * (hd.T @ hd)
        del hd
        a += beta * gram.toarray()
        self._factor = scipy.linalg.cho_factor(a, lower=True, overwrite_a=True)

    def solve(self, rhs, x0=None, tol=1e-8, max_iter=2000):
        return scipy.linalg.cho_solve(self._factor, rhs)
