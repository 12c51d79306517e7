"""Semi-automatic regularization-weight selection.

The relative smoothness of a reconstruction compares the cost evaluated
with the full-row and reduced-row data terms; when the weight is large
enough that the solution stops fitting noise, the two per-sample data
terms nearly agree and the measure drops. The tracker walks a geometric
weight ladder until the measure falls below a user bound, interleaving a
fixed number of warm-started ADMM iterations per probe, and restarts the
walk until the reconstruction stabilizes.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmConfig, AdmmState, _Loop, init_state
from .errors import CapExceeded, DegenerateCost, DimensionMismatch, Lambda0TooLarge
from .forward import OperatorSplit
from .grid import ImageGrid
from .regularizers import get_stack

log = logging.getLogger(__name__)


@dataclass
class TrackingConfig:
    epsilon: float = 0.06
    delta: float = 0.1
    k: float = 1.05
    m_iters: int = 50
    epsilon_t: float = 1e-4
    alpha: float = 0.5
    upper: float = 1.0
    lambda0: float | None = None  # None = scale-aware automatic choice
    lambda_cap_factor: float = 1e6
    max_rounds: int = 50
    restart_mode: str = "resume"  # resume (re-enter at lambda/k^2) | fresh

    def __post_init__(self):
        if self.epsilon <= 0 or self.epsilon_t <= 0:
            raise ValueError("epsilon and epsilon_t must be positive")
        if self.k <= 1:
            raise ValueError("k must exceed 1")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 0.5)")
        if self.m_iters < 1:
            raise ValueError("m_iters must be >= 1")
        if self.restart_mode not in ("resume", "fresh"):
            raise ValueError(f"unknown restart_mode {self.restart_mode!r}")


@dataclass
class ProbeRecord:
    round_index: int
    probe_index: int
    lam: float
    s_tilde: float
    data_term_reduced: float
    data_term_full: float
    reg_term: float
    cumulative_admm_iters: int


@dataclass
class TrackingResult:
    x_final: ImageGrid
    lambda_final: float
    probes: list[ProbeRecord]
    outer_rounds: int
    converged: bool
    total_admm_iters: int

    def probe_pairs(self) -> list[tuple[float, float]]:
        return [(p.lam, p.s_tilde) for p in self.probes]


def smoothness_from_terms(
    data_reduced: float, data_full: float, weighted_reg: float
) -> float:
    """|full - reduced| data mismatch over the mean of the two costs."""
    denom = 0.5 * (data_full + data_reduced) + weighted_reg
    if denom == 0.0:
        raise DegenerateCost("both reduced and full costs are zero")
    return abs(data_full - data_reduced) / denom


def _smoothness_terms(x, lam, split, m_reduced, m_full, alpha):
    """Data terms of both systems from a single full-operator product.

    The reduced rows are bit-identical rows of the full matrix, so the
    reduced residual is a row slice of the full one.
    """
    hx_full = split.full.apply(x)
    resid_full = np.asarray(m_full, dtype=np.float64) - hx_full
    resid_reduced = (
        np.asarray(m_reduced, dtype=np.float64) - hx_full[split.kept_rows]
    )
    data_full = float(resid_full @ resid_full) / split.full.rows
    data_reduced = float(resid_reduced @ resid_reduced) / split.reduced.rows
    reg = get_stack((split.full.ny, split.full.nx), alpha).penalty(
        np.asarray(x, dtype=np.float64)
    )
    return data_reduced, data_full, reg


def relative_smoothness(
    x, lam: float, split: OperatorSplit, m_reduced, m_full, alpha: float
) -> float:
    """Bound-free relative cost mismatch between full and reduced systems."""
    xv = x.values if isinstance(x, ImageGrid) else np.asarray(x, dtype=np.float64)
    if xv.size != split.full.cols:
        raise DimensionMismatch(f"x length {xv.size} != cols {split.full.cols}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    dr, df, reg = _smoothness_terms(xv, lam, split, m_reduced, m_full, alpha)
    return smoothness_from_terms(dr, df, lam * reg)


def default_lambda0(op, m, alpha: float) -> float:
    """Scale-aware starting weight, far below any plausible final value."""
    m = np.asarray(m, dtype=np.float64)
    z = op.adjoint(m)
    peak = np.abs(z).max()
    if peak > 0:
        z = z / peak
    reg = get_stack((op.ny, op.nx), alpha).penalty(z)
    data0 = float(m @ m) / op.rows
    if not np.isfinite(reg) or reg <= 0 or data0 <= 0:
        return 1e-6
    return 1e-4 * data0 / reg


class _Tracker:
    """Shared machinery for full and partial tracking."""

    def __init__(self, split, m_full, cfg: TrackingConfig, admm_cfg: AdmmConfig):
        self.split = split
        self.m_full = np.asarray(m_full, dtype=np.float64)
        if self.m_full.size != split.full.rows:
            raise DimensionMismatch(
                f"measurement length {self.m_full.size} != full rows "
                f"{split.full.rows}"
            )
        self.m_reduced = split.reduce_measurement(self.m_full)
        self.cfg = cfg
        self.admm_cfg = admm_cfg
        self.probes: list[ProbeRecord] = []
        self.total_iters = 0

    def smoothness(self, x, lam) -> tuple[float, float, float, float]:
        dr, df, reg = _smoothness_terms(
            x, lam, self.split, self.m_reduced, self.m_full, self.cfg.alpha
        )
        try:
            s = smoothness_from_terms(dr, df, lam * reg)
        except DegenerateCost:
            # a zero measurement with a zero iterate satisfies any bound
            s = 0.0
        return s, dr, df, reg

    def record(self, round_index, probe_index, lam, s, dr, df, reg):
        self.probes.append(
            ProbeRecord(
                round_index, probe_index, lam, s, dr, df, reg, self.total_iters
            )
        )


def track_full(
    split: OperatorSplit,
    m_full: np.ndarray,
    cfg: TrackingConfig | None = None,
    admm_cfg: AdmmConfig | None = None,
    x0: np.ndarray | None = None,
    lambda0: float | None = None,
) -> tuple[ImageGrid, float, list[ProbeRecord]]:
    """Geometric weight search with a fully converged solve per probe.

    Requires the first probe to violate the smoothness bound; returns the
    first ladder weight satisfying it, with its reconstruction.
    """
    from .admm import admm_solve

    cfg = cfg or TrackingConfig()
    admm_cfg = admm_cfg or AdmmConfig()
    t = _Tracker(split, m_full, cfg, admm_cfg)
    lam = lambda0 if lambda0 is not None else (
        cfg.lambda0
        if cfg.lambda0 is not None
        else default_lambda0(split.reduced, t.m_reduced, cfg.alpha)
    )
    cap = cfg.lambda_cap_factor * lam
    x_warm = x0
    probe_index = 0
    while True:
        img, _, state = admm_solve(
            split.reduced, t.m_reduced, lam, cfg.alpha, cfg.upper, admm_cfg,
            x0=x_warm,
        )
        t.total_iters += state.iteration
        s, dr, df, reg = t.smoothness(state.x, lam)
        t.record(0, probe_index, lam, s, dr, df, reg)
        if s <= cfg.epsilon:
            if probe_index == 0:
                raise Lambda0TooLarge(
                    f"smoothness {s:.4f} <= bound {cfg.epsilon} at the "
                    f"starting weight {lam:.3e}"
                )
            return img, lam, t.probes
        x_warm = state.x
        lam *= cfg.k
        probe_index += 1
        if lam > cap:
            raise CapExceeded(f"weight {lam:.3e} above cap {cap:.3e}")


def track_partial(
    split: OperatorSplit,
    m_full: np.ndarray,
    cfg: TrackingConfig | None = None,
    admm_cfg: AdmmConfig | None = None,
    x0: np.ndarray | None = None,
    lambda0: float | None = None,
    state: AdmmState | None = None,
) -> tuple[ImageGrid, float, list[ProbeRecord]]:
    """Weight search with a fixed block of ADMM iterations per probe.

    The solver state is warm-started across probes, so each probe refines
    the running reconstruction under the current candidate weight.
    """
    cfg = cfg or TrackingConfig()
    admm_cfg = admm_cfg or AdmmConfig()
    t = _Tracker(split, m_full, cfg, admm_cfg)
    lam = lambda0 if lambda0 is not None else (
        cfg.lambda0
        if cfg.lambda0 is not None
        else default_lambda0(split.reduced, t.m_reduced, cfg.alpha)
    )
    if state is None:
        stack = get_stack((split.full.ny, split.full.nx), cfg.alpha)
        state = init_state(split.full.cols, stack, x0)
    lam, _ = _partial_ladder(t, state, lam, cfg.lambda_cap_factor * lam,
                             round_index=0, prev_lambda=None)
    img = ImageGrid(
        split.full.nx, split.full.ny, split.full.spacing_mm, state.x
    )
    return img, lam, t.probes


def _partial_ladder(t: _Tracker, state: AdmmState, lam, cap,
                    round_index: int, prev_lambda):
    """One geometric walk with partial solves. Returns (weight, rearm_failed).

    With no previous weight (the first round), a first probe that already
    satisfies the bound raises Lambda0TooLarge; otherwise the previous
    weight is kept and the caller switches to refinement.
    """
    cfg = t.cfg
    loop = _Loop(
        t.split.reduced, t.m_reduced, lam, cfg.alpha, cfg.upper, t.admm_cfg
    )
    probe_index = 0
    while True:
        loop.lam = lam
        for _ in range(cfg.m_iters):
            loop.iterate(state)
        t.total_iters += cfg.m_iters
        s, dr, df, reg = t.smoothness(state.x, lam)
        t.record(round_index, probe_index, lam, s, dr, df, reg)
        if s <= cfg.epsilon:
            if probe_index == 0 and prev_lambda is not None:
                return prev_lambda, True
            if probe_index == 0:
                raise Lambda0TooLarge(
                    f"smoothness {s:.4f} <= bound {cfg.epsilon} at the "
                    f"starting weight {lam:.3e}"
                )
            return lam, False
        lam *= cfg.k
        probe_index += 1
        if lam > cap:
            raise CapExceeded(f"weight {lam:.3e} above cap {cap:.3e}")


def track_and_reconstruct(
    split: OperatorSplit,
    m_full: np.ndarray,
    cfg: TrackingConfig | None = None,
    admm_cfg: AdmmConfig | None = None,
    x0: np.ndarray | None = None,
) -> TrackingResult:
    """Repeated partial tracking until the reconstruction stabilizes.

    Each round re-enters the ladder two steps below the accepted weight;
    when re-entry no longer violates the bound, the weight is frozen and
    later rounds only refine the reconstruction.
    """
    cfg = cfg or TrackingConfig()
    admm_cfg = admm_cfg or AdmmConfig()
    t = _Tracker(split, m_full, cfg, admm_cfg)
    stack = get_stack((split.full.ny, split.full.nx), cfg.alpha)
    state = init_state(split.full.cols, stack, x0)

    lam0 = (
        cfg.lambda0
        if cfg.lambda0 is not None
        else default_lambda0(split.reduced, t.m_reduced, cfg.alpha)
    )
    cap = cfg.lambda_cap_factor * lam0
    lam_hat: float | None = None
    refine_only = False
    converged = False
    rounds = 0
    for round_index in range(cfg.max_rounds):
        x_before = state.x.copy()
        if refine_only:
            loop = _Loop(
                t.split.reduced, t.m_reduced, lam_hat, cfg.alpha, cfg.upper,
                admm_cfg,
            )
            for _ in range(cfg.m_iters):
                loop.iterate(state)
            t.total_iters += cfg.m_iters
            s, dr, df, reg = t.smoothness(state.x, lam_hat)
            t.record(round_index, 0, lam_hat, s, dr, df, reg)
        elif lam_hat is None:
            lam_hat = _round_one(t, state, lam0, cap, round_index)
        else:
            entry = lam_hat / cfg.k**2 if cfg.restart_mode == "resume" else lam0
            lam_hat, rearm_failed = _partial_ladder(
                t, state, entry, cap, round_index, prev_lambda=lam_hat
            )
            if rearm_failed:
                refine_only = True
        rounds = round_index + 1
        change = _relative_change(state.x, x_before)
        if change <= cfg.epsilon_t:
            converged = True
            break
    if not converged:
        log.warning("tracking hit the round cap %d", cfg.max_rounds)
    img = ImageGrid(split.full.nx, split.full.ny, split.full.spacing_mm, state.x)
    return TrackingResult(
        x_final=img,
        lambda_final=float(lam_hat),
        probes=t.probes,
        outer_rounds=rounds,
        converged=converged,
        total_admm_iters=t.total_iters,
    )


def _round_one(t: _Tracker, state: AdmmState, lam0, cap, round_index) -> float:
    """First round: halve a too-large starting weight up to 20 times."""
    lam = lam0
    for attempt in range(21):
        try:
            lam_hat, _ = _partial_ladder(
                t, state, lam, cap, round_index, prev_lambda=None
            )
            return lam_hat
        except Lambda0TooLarge:
            last = t.probes[-1]
            degenerate = (
                last.data_term_reduced + last.data_term_full + last.reg_term == 0.0
            )
            if degenerate or attempt == 20:
                # nothing left to fit (or retries exhausted): accept and refine
                return lam
            lam *= 0.5
    return lam  # pragma: no cover


def _relative_change(x_new: np.ndarray, x_old: np.ndarray) -> float:
    norm_old = np.linalg.norm(x_old)
    diff = np.linalg.norm(x_new - x_old)
    if norm_old == 0.0:
        return 0.0 if diff == 0.0 else np.inf
    return diff / norm_old
