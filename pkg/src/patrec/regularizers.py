"""Derivative filters, sparsity penalties, proximal maps, and the
quadratic-penalty baseline.

Stencils (symmetric/mirror boundary extension, image vector row-major):

* d/dx      : out(i,j) = v(i,j+1) - v(i,j)
* d2/dx2    : out(i,j) = v(i,j-1) - 2 v(i,j) + v(i,j+1)
* cross     : sqrt(2) * (d/dy after d/dx), each first difference as above

Mirror extension duplicates the edge sample, so every filter annihilates
constant images including at the boundary.
"""

import numpy as np
from scipy import sparse

from .errors import DimensionMismatch, NonConvergence
from .grid import ImageGrid
from .linalg import conjugate_gradient


def _mirror(idx: np.ndarray, n: int) -> np.ndarray:
    # only +/-1 offsets occur, so clipping implements mirror extension
    return np.clip(idx, 0, n - 1)


def _filter_matrix(shape, offsets, coeffs, axis) -> sparse.csr_matrix:
    """1-D stencil along ``axis`` (0 = rows/y, 1 = cols/x) on a 2-D grid."""
    ny, nx = shape
    n = nx * ny
    rows_r, cols_r = np.divmod(np.arange(n), nx)
    data, rows, cols = [], [], []
    for off, c in zip(offsets, coeffs):
        if axis == 1:
            tap = rows_r * nx + _mirror(cols_r + off, nx)
        else:
            tap = _mirror(rows_r + off, ny) * nx + cols_r
        rows.append(np.arange(n))
        cols.append(tap)
        data.append(np.full(n, c))
    m = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def first_derivative_matrices(shape) -> list[sparse.csr_matrix]:
    """[d/dx, d/dy] as sparse N x N matrices."""
    return [
        _filter_matrix(shape, (0, 1), (-1.0, 1.0), axis=1),
        _filter_matrix(shape, (0, 1), (-1.0, 1.0), axis=0),
    ]


def second_derivative_matrices(shape) -> list[sparse.csr_matrix]:
    """[d2/dx2, d2/dy2, sqrt(2) d2/dxdy] as sparse N x N matrices."""
    dxx = _filter_matrix(shape, (-1, 0, 1), (1.0, -2.0, 1.0), axis=1)
    dyy = _filter_matrix(shape, (-1, 0, 1), (1.0, -2.0, 1.0), axis=0)
    dx, dy = first_derivative_matrices(shape)
    cross = np.sqrt(2.0) * (dy @ dx)
    cross = cross.tocsr()
    cross.sort_indices()
    return [dxx, dyy, cross]


def derivative_matrices(shape, order: int) -> list[sparse.csr_matrix]:
    if order == 1:
        return first_derivative_matrices(shape)
    if order == 2:
        return second_derivative_matrices(shape)
    raise ValueError(f"derivative order must be 1 or 2, got {order}")


class DerivativeStack:
    """Analysis operator mixing pixel intensity and second derivatives.

    Maps an N-pixel image to a 4N vector: block 0 is sqrt(alpha) * x,
    blocks 1-3 are sqrt(1 - alpha) times the three second-derivative
    images. ``apply_split`` prepends a plain identity block (5N rows)
    for the box-constraint splitting used by the solver.
    """

    def __init__(self, shape, alpha: float):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        self.shape = tuple(shape)
        self.alpha = float(alpha)
        self.n_pixels = shape[0] * shape[1]
        eye = sparse.identity(self.n_pixels, format="csr")
        blocks = [np.sqrt(alpha) * eye] + [
            np.sqrt(1.0 - alpha) * d for d in second_derivative_matrices(shape)
        ]
        self.matrix = sparse.vstack(blocks, format="csr")
        self.split_matrix = sparse.vstack([eye, self.matrix], format="csr")
        self.split_gram = (self.split_matrix.T @ self.split_matrix).tocsr()

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        return self.matrix.T @ v

    def apply_split(self, x: np.ndarray) -> np.ndarray:
        return self.split_matrix @ x

    def adjoint_split(self, w: np.ndarray) -> np.ndarray:
        return self.split_matrix.T @ w

    def penalty(self, x: np.ndarray) -> float:
        """Group penalty of the stacked response (the regularizer value)."""
        return group_norm(self.apply(x))


_STACK_CACHE: dict[tuple, DerivativeStack] = {}


def get_stack(shape, alpha: float) -> DerivativeStack:
    """Memoized stack; safe because stacks are read-only after build."""
    key = (tuple(shape), float(alpha))
    st = _STACK_CACHE.get(key)
    if st is None:
        if len(_STACK_CACHE) > 16:
            _STACK_CACHE.clear()
        st = _STACK_CACHE[key] = DerivativeStack(shape, alpha)
    return st


def group_norm(v: np.ndarray) -> float:
    """Sum over pixels of the l2 norms of interlaced 4-vectors.

    Entry r of the 4N input is grouped with entries r+N, r+2N, r+3N.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size % 4 != 0:
        raise DimensionMismatch(f"group vector length {v.size} not divisible by 4")
    g = v.reshape(4, v.size // 4)
    return float(np.sqrt((g * g).sum(axis=0)).sum())


def prox_group(v: np.ndarray, threshold: float) -> np.ndarray:
    """Group soft-shrinkage: per 4-vector slice z, scale by
    max(||z|| - threshold, 0) / ||z|| (zero slices stay zero)."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=np.float64)
    if v.size % 4 != 0:
        raise DimensionMismatch(f"group vector length {v.size} not divisible by 4")
    g = v.reshape(4, v.size // 4)
    norms = np.sqrt((g * g).sum(axis=0))
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(norms[nz] - threshold, 0.0) / norms[nz]
    return (g * scale).reshape(v.shape)


def clip_box(v: np.ndarray, upper: float) -> np.ndarray:
    """Projection onto the box [0, upper]."""
    if upper <= 0:
        raise ValueError("upper bound must be positive")
    return np.clip(v, 0.0, upper)


def _as_vector(img) -> tuple[np.ndarray, tuple[int, int]]:
    if isinstance(img, ImageGrid):
        return img.values, img.shape
    raise TypeError("expected an ImageGrid")


def eval_augmented(img: ImageGrid, alpha: float) -> float:
    """Intensity + second-derivative group-sparsity penalty.

    At alpha = 0 this is exactly second-order total variation.
    """
    x, shape = _as_vector(img)
    return get_stack(shape, alpha).penalty(x)


def eval_tv2(img: ImageGrid) -> float:
    return eval_augmented(img, 0.0)


def eval_tikhonov(img: ImageGrid, order: int) -> float:
    """Sum of squared derivative responses of the given order."""
    x, shape = _as_vector(img)
    return float(sum((d @ x) @ (d @ x) for d in derivative_matrices(shape, order)))


def solve_tikhonov(
    op,
    m: np.ndarray,
    lam: float,
    order: int = 2,
    tol: float = 1e-8,
    max_iter: int = 5000,
) -> ImageGrid:
    """Quadratically regularized least squares by conjugate gradients.

    Solves (H^T H + lam * sum_i D_i^T D_i) x = H^T m, unconstrained.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    m = np.asarray(m, dtype=np.float64)
    if m.size != op.rows:
        raise DimensionMismatch(f"measurement length {m.size} != rows {op.rows}")
    shape = (op.ny, op.nx)
    mats = derivative_matrices(shape, order)
    gram = sum(d.T @ d for d in mats).tocsr()

    def apply_a(x):
        return op.adjoint(op.apply(x)) + lam * (gram @ x)

    rhs = op.adjoint(m)
    x, rel, it = conjugate_gradient(apply_a, rhs, tol=tol, max_iter=max_iter)
    if rel > tol:
        raise NonConvergence(
            f"Tikhonov CG: residual {rel:.3e} > {tol:.1e} after {it} iterations"
        )
    return ImageGrid(op.nx, op.ny, op.spacing_mm, x)
