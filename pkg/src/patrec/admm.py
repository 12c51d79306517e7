"""ADMM solver for the box-constrained, group-sparse reconstruction cost

    (1/n) ||m - H x||^2 + lam * penalty(x, alpha) + indicator(0 <= x <= u)

split as D_a x = d, x = b. Each iteration solves the normal equations

    ((2/n) H^T H + beta * Dbar^T Dbar) x = (2/n) H^T m + Dbar^T (beta y - yhat)

(the 2/n factor keeps the quadratic consistent with the 1/n data term),
then shrinks d group-wise, clips b to the box, and ascends the dual.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .grid import ImageGrid
from .linalg import CgNormalSolver, DirectNormalSolver
from .regularizers import clip_box, get_stack, prox_group

log = logging.getLogger(__name__)

_TINY = 1e-300


@dataclass
class AdmmConfig:
    beta: float = 1.0
    cg_tol: float = 1e-8
    cg_max_iter: int = 2000
    max_outer_iter: int = 3000
    primal_tol: float = 1e-6
    dual_tol: float = 1e-6
    x_solver: str = "auto"  # auto | direct | cg
    direct_max_pixels: int = 4096
    track_cost: bool = True

    def __post_init__(self):
        for name in ("beta", "cg_tol", "primal_tol", "dual_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.cg_max_iter <= 0 or self.max_outer_iter <= 0:
            raise ValueError("iteration caps must be positive")
        if self.x_solver not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown x_solver {self.x_solver!r}")


@dataclass
class CostBreakdown:
    data_term: float
    reg_term: float
    lam: float
    total_without_bound: float
    bound_violation: float


@dataclass
class AdmmState:
    x: np.ndarray
    b: np.ndarray
    d: np.ndarray
    yhat: np.ndarray
    iteration: int = 0
    primal_residuals: list = field(default_factory=list)
    dual_residuals: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    converged: bool = False

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.b, self.d])


def init_state(n_pixels: int, stack, x0: np.ndarray | None = None) -> AdmmState:
    """Zero duals; splits initialized consistently with the start image."""
    x = np.zeros(n_pixels) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    split = stack.apply_split(x)
    return AdmmState(
        x=x,
        b=split[:n_pixels].copy(),
        d=split[n_pixels:].copy(),
        yhat=np.zeros(5 * n_pixels),
    )


def eval_cost(x, op, m, lam: float, alpha: float, upper: float = 1.0) -> CostBreakdown:
    """Cost pieces at x; the data term is normalized by the row count."""
    xv = x.values if isinstance(x, ImageGrid) else np.asarray(x, dtype=np.float64)
    if xv.size != op.cols:
        raise DimensionMismatch(f"x length {xv.size} != operator cols {op.cols}")
    m = np.asarray(m, dtype=np.float64)
    if m.size != op.rows:
        raise DimensionMismatch(f"m length {m.size} != operator rows {op.rows}")
    resid = m - op.apply(xv)
    data = float(resid @ resid) / op.rows
    reg = get_stack((op.ny, op.nx), alpha).penalty(xv)
    violation = max(0.0, float(xv.max()) - upper, -float(xv.min()))
    return CostBreakdown(data, reg, lam, data + lam * reg, violation)


def _make_normal_solver(op, stack, cfg: AdmmConfig):
    kind = cfg.x_solver
    if kind == "auto":
        kind = "direct" if op.cols <= cfg.direct_max_pixels else "cg"
    key = (kind, stack.alpha, cfg.beta, op.rows)
    solver = op._solver_cache.get(key)
    if solver is None:
        if kind == "direct":
            solver = DirectNormalSolver(op, stack.split_gram, cfg.beta)
        else:
            solver = CgNormalSolver(op, stack.split_gram, cfg.beta)
        op._solver_cache[key] = solver
    return solver


def admm_x_update(state: AdmmState, op, m, stack, cfg: AdmmConfig, solver=None):
    """Quadratic-subproblem solve; returns the new image vector."""
    if solver is None:
        solver = _make_normal_solver(op, stack, cfg)
    rhs = (2.0 / op.rows) * op.adjoint(m) + stack.adjoint_split(
        cfg.beta * state.y - state.yhat
    )
    return solver.solve(rhs, x0=state.x, tol=cfg.cg_tol, max_iter=cfg.cg_max_iter)


def admm_y_update(state: AdmmState, stack, cfg: AdmmConfig, lam: float, upper: float):
    """Split-variable updates from the freshly updated x."""
    n = state.x.size
    ybar = stack.apply_split(state.x) + state.yhat / cfg.beta
    b = clip_box(ybar[:n], upper)
    d = prox_group(ybar[n:], lam / cfg.beta)
    return b, d


def admm_dual_update(state: AdmmState, stack, cfg: AdmmConfig) -> np.ndarray:
    """Dual ascent on the split constraints."""
    return state.yhat + cfg.beta * (stack.apply_split(state.x) - state.y)


class _Loop:
    """One solve's shared pieces: operator, data, solver, rhs cache."""

    def __init__(self, op, m, lam, alpha, upper, cfg):
        self.op = op
        self.m = np.asarray(m, dtype=np.float64)
        if self.m.size != op.rows:
            raise DimensionMismatch(
                f"measurement length {self.m.size} != rows {op.rows}"
            )
        self.lam = float(lam)
        self.alpha = float(alpha)
        self.upper = float(upper)
        self.cfg = cfg
        self.stack = get_stack((op.ny, op.nx), alpha)
        self.solver = _make_normal_solver(op, self.stack, cfg)
        self.rhs_data = (2.0 / op.rows) * op.adjoint(self.m)
        # absolute anchors: duals vanish on noiseless consistent data, and
        # the splits vanish when the solution is the zero image, so purely
        # relative residuals would never register convergence there
        self.rhs_norm = np.linalg.norm(self.rhs_data)
        self.primal_anchor = 0.01 * np.sqrt(5.0 * op.cols)
        self.n = op.cols

    def iterate(self, state: AdmmState) -> tuple[float, float]:
        cfg, stack, n = self.cfg, self.stack, self.n
        rhs = self.rhs_data + stack.adjoint_split(cfg.beta * state.y - state.yhat)
        state.x = self.solver.solve(
            rhs, x0=state.x, tol=cfg.cg_tol, max_iter=cfg.cg_max_iter
        )
        split = stack.apply_split(state.x)
        ybar = split + state.yhat / cfg.beta
        b = clip_box(ybar[:n], self.upper)
        d = prox_group(ybar[n:], self.lam / cfg.beta)
        dy = np.concatenate([b - state.b, d - state.d])
        state.b, state.d = b, d
        y = state.y
        r = split - y
        state.yhat = state.yhat + cfg.beta * r
        primal = np.linalg.norm(r) / max(
            np.linalg.norm(split), np.linalg.norm(y), self.primal_anchor
        )
        dual = (
            cfg.beta
            * np.linalg.norm(stack.adjoint_split(dy))
            / max(
                np.linalg.norm(stack.adjoint_split(state.yhat)),
                self.rhs_norm,
                _TINY,
            )
        )
        state.primal_residuals.append(primal)
        state.dual_residuals.append(dual)
        if cfg.track_cost:
            resid = self.m - self.op.apply(state.x)
            state.costs.append(
                float(resid @ resid) / self.op.rows + self.lam * stack.penalty(state.x)
            )
        state.iteration += 1
        return primal, dual


def admm_partial(
    state: AdmmState, op, m, lam, alpha, upper, cfg: AdmmConfig, m_iters: int
) -> AdmmState:
    """Exactly ``m_iters`` iterations from (and mutating) the given state."""
    if m_iters < 1:
        raise ValueError(f"m_iters must be >= 1, got {m_iters}")
    loop = _Loop(op, m, lam, alpha, upper, cfg)
    for _ in range(m_iters):
        loop.iterate(state)
    return state


def admm_solve(
    op,
    m,
    lam: float,
    alpha: float,
    upper: float = 1.0,
    cfg: AdmmConfig | None = None,
    x0: np.ndarray | None = None,
    state: AdmmState | None = None,
) -> tuple[ImageGrid, CostBreakdown, AdmmState]:
    """Iterate until primal and dual residuals fall below tolerance.

    ``state.converged`` is False when the iteration cap is hit; the best
    (last) iterate is still returned.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    cfg = cfg or AdmmConfig()
    loop = _Loop(op, m, lam, alpha, upper, cfg)
    if state is None:
        state = init_state(op.cols, loop.stack, x0)
    state.converged = False
    for _ in range(cfg.max_outer_iter):
        primal, dual = loop.iterate(state)
        if primal <= cfg.primal_tol and dual <= cfg.dual_tol:
            state.converged = True
            break
    if not state.converged:
        log.warning(
            "ADMM stopped at iteration cap %d (primal %.2e, dual %.2e)",
            state.iteration,
            state.primal_residuals[-1],
            state.dual_residuals[-1],
        )
    img = ImageGrid(op.nx, op.ny, op.spacing_mm, state.x)
    return img, eval_cost(state.x, op, m, lam, alpha, upper), state
