"""Discrete photoacoustic forward model.

Each measurement sample is the pressure recorded by transducer i at time
t_j. Row (i, j) of the operator discretizes the time derivative of the
circular-arc integral of the source image over |r_i - r'| = c0 * t_j,
weighted by 1/|r_i - r'|: the arc is sampled at steps of at most half a
pixel, each sample scattered onto the four neighboring pixels by bilinear
interpolation, the quadrature divided by the arc radius, and consecutive
radii combined by a central difference in time.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import (
    DeltaOutOfRange,
    DimensionMismatch,
    GeometryInsideGrid,
    WindowTooShort,
)
from .grid import ImageGrid

ARC_STEP_PIXELS = 0.5


@dataclass(frozen=True)
class TransducerGeometry:
    """Point transducers on a circle enclosing the image support."""

    count: int
    radius_mm: float
    angles_rad: np.ndarray
    center: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def ring(cls, count: int, radius_mm: float) -> "TransducerGeometry":
        angles = 2.0 * np.pi * np.arange(count) / count
        return cls(count, radius_mm, angles)

    def __post_init__(self):
        angles = np.asarray(self.angles_rad, dtype=np.float64)
        if angles.size != self.count:
            raise ValueError("angles length != transducer count")
        if angles.size > 1 and (np.any(np.diff(angles) <= 0) or angles[-1] >= 2 * np.pi):
            raise ValueError("angles must be strictly increasing within [0, 2*pi)")
        angles.setflags(write=False)
        object.__setattr__(self, "angles_rad", angles)

    def positions(self) -> np.ndarray:
        """(count, 2) transducer coordinates in mm."""
        cx, cy = self.center
        return np.column_stack(
            [
                cx + self.radius_mm * np.cos(self.angles_rad),
                cy + self.radius_mm * np.sin(self.angles_rad),
            ]
        )


@dataclass(frozen=True)
class TimeSampling:
    """Uniform sampling of the pressure traces."""

    mt: int
    dt_us: float
    t0_us: float
    c0_mm_per_us: float = 1.5

    @classmethod
    def cover(
        cls, geometry: TransducerGeometry, grid: ImageGrid, mt: int,
        c0_mm_per_us: float = 1.5,
    ) -> "TimeSampling":
        """Window spanning every source-to-transducer distance exactly."""
        half_diag = 0.5 * math.hypot(*grid.extent_mm)
        d_lo = geometry.radius_mm - half_diag
        d_hi = geometry.radius_mm + half_diag
        if d_lo <= 0:
            raise GeometryInsideGrid(
                f"radius {geometry.radius_mm} mm <= grid half-diagonal "
                f"{half_diag:.3f} mm"
            )
        t0 = d_lo / c0_mm_per_us
        dt = (d_hi - d_lo) / c0_mm_per_us / (mt - 1)
        return cls(mt, dt, t0, c0_mm_per_us)

    def times_us(self) -> np.ndarray:
        return self.t0_us + np.arange(self.mt) * self.dt_us


@dataclass
class Measurement:
    """Stacked noisy transducer traces (row-major by transducer)."""

    values: np.ndarray
    snr_db: float
    noise_seed: int | None
    geometry: TransducerGeometry
    sampling: TimeSampling
    nx: int
    ny: int
    spacing_mm: float


class ForwardOperator:
    """Sparse row-compressed forward map with its adjoint.

    ``row_map`` is None for a full operator (rows = count * mt); a reduced
    operator remembers the original row indices it kept. ``scale`` records
    the calibration factor folded into the stored weights (see
    ``build_operator``).
    """

    def __init__(self, matrix, nx, ny, spacing_mm, geometry, sampling,
                 gamma=1.0, row_map=None, scale=1.0):
        self.matrix = matrix.tocsr()
        self.nx = int(nx)
        self.ny = int(ny)
        self.spacing_mm = float(spacing_mm)
        self.geometry = geometry
        self.sampling = sampling
        self.gamma = float(gamma)
        self.scale = float(scale)
        self.row_map = None if row_map is None else np.asarray(row_map, dtype=np.int64)
        self._solver_cache: dict = {}
        expected = geometry.count * sampling.mt if row_map is None else len(row_map)
        if self.matrix.shape != (expected, self.nx * self.ny):
            raise DimensionMismatch(
                f"matrix shape {self.matrix.shape} != ({expected}, {self.nx * self.ny})"
            )

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def apply(self, img) -> np.ndarray:
        """H @ x for an ImageGrid or a raw length-N vector."""
        if isinstance(img, ImageGrid):
            if (img.ny, img.nx) != (self.ny, self.nx):
                raise DimensionMismatch(
                    f"image {img.nx}x{img.ny} != operator grid {self.nx}x{self.ny}"
                )
            x = img.values
        else:
            x = np.asarray(img, dtype=np.float64)
            if x.size != self.cols:
                raise DimensionMismatch(f"vector length {x.size} != cols {self.cols}")
        return self.matrix @ x

    def adjoint(self, vec) -> np.ndarray:
        """H^T @ v as a raw length-N vector."""
        v = np.asarray(vec, dtype=np.float64)
        if v.size != self.rows:
            raise DimensionMismatch(f"vector length {v.size} != rows {self.rows}")
        return self.matrix.T @ v

    def adjoint_image(self, vec) -> ImageGrid:
        return ImageGrid(self.nx, self.ny, self.spacing_mm, self.adjoint(vec))

    def trace(self, values: np.ndarray, transducer: int) -> np.ndarray:
        """One transducer's time series out of a stacked sample vector."""
        if self.row_map is not None:
            raise ValueError("traces are only contiguous on a full operator")
        mt = self.sampling.mt
        return values[transducer * mt : (transducer + 1) * mt]


@dataclass(frozen=True)
class OperatorSplit:
    """Full operator and the reduced one left after removing rows."""

    full: ForwardOperator
    reduced: ForwardOperator
    removed_rows: np.ndarray
    kept_rows: np.ndarray
    delta: float

    def reduce_measurement(self, m_full: np.ndarray) -> np.ndarray:
        m_full = np.asarray(m_full)
        if m_full.size != self.full.rows:
            raise DimensionMismatch(
                f"measurement length {m_full.size} != full rows {self.full.rows}"
            )
        return m_full[self.kept_rows]


def _arc_integrals(tpos, radii, nx, ny, h):
    """Arc quadrature (divided by radius) for one transducer.

    Returns a csr matrix with one row per radius; row q holds the bilinear
    scatter of the quadrature over the circle of radius radii[q] around the
    transducer, restricted to the grid support.
    """
    n = nx * ny
    tx, ty = tpos
    dist_c = math.hypot(tx, ty)
    half_diag = 0.5 * math.hypot(nx * h, ny * h)
    reach = half_diag + 1.5 * h
    rows, cols, data = [], [], []
    for q, rho in enumerate(radii):
        if rho <= 0 or rho <= dist_c - reach or rho >= dist_c + reach:
            continue
        cos_phi = (rho * rho + dist_c * dist_c - reach * reach) / (2 * rho * dist_c)
        phi = math.acos(min(1.0, max(-1.0, cos_phi)))
        n_s = max(4, int(math.ceil(2.0 * phi * rho / (ARC_STEP_PIXELS * h))))
        dtheta = 2.0 * phi / n_s
        theta_c = math.atan2(-ty, -tx)
        theta = theta_c - phi + (np.arange(n_s) + 0.5) * dtheta
        px = tx + rho * np.cos(theta)
        py = ty + rho * np.sin(theta)
        # fractional pixel coordinates (col along x, row along y)
        u = px / h + (nx - 1) / 2.0
        v = py / h + (ny - 1) / 2.0
        c0f = np.floor(u)
        r0f = np.floor(v)
        fu = u - c0f
        fv = v - r0f
        c0i = c0f.astype(np.int64)
        r0i = r0f.astype(np.int64)
        # quadrature weight: ds / rho = dtheta per sample
        for dc, dr, w in (
            (0, 0, (1 - fu) * (1 - fv)),
            (1, 0, fu * (1 - fv)),
            (0, 1, (1 - fu) * fv),
            (1, 1, fu * fv),
        ):
            cc = c0i + dc
            rr = r0i + dr
            ok = (cc >= 0) & (cc < nx) & (rr >= 0) & (rr < ny)
            if not np.any(ok):
                continue
            cols.append((rr[ok] * nx + cc[ok]))
            data.append(w[ok] * dtheta)
            rows.append(np.full(int(ok.sum()), q, dtype=np.int64))
    if not rows:
        return sparse.csr_matrix((len(radii), n))
    mat = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(radii), n),
    ).tocsr()
    mat.sum_duplicates()
    return mat


def _top_singular_value(matrix, iters: int = 100) -> float:
    """Deterministic power iteration on H^T H."""
    n = matrix.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    sigma = 0.0
    for _ in range(iters):
        w = matrix.T @ (matrix @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        sigma = np.sqrt(nw)
        v = w / nw
    return sigma


def build_operator(
    grid: ImageGrid,
    geometry: TransducerGeometry,
    sampling: TimeSampling,
    gamma: float = 1.0,
    normalize: bool = True,
) -> ForwardOperator:
    """Assemble the sparse forward matrix for the given acquisition.

    With ``normalize`` (default) the weights are rescaled so the
    1/n-normalized data term has curvature 4 along its stiffest direction,
    which straddles a unit splitting penalty and keeps both the stiff and
    the weakly observed directions converging at useful rates. The factor
    is an overall calibration constant (the absolute pressure scale is
    arbitrary here) and is recorded in ``scale``.
    """
    half_diag = 0.5 * math.hypot(*grid.extent_mm)
    if geometry.radius_mm <= half_diag:
        raise GeometryInsideGrid(
            f"radius {geometry.radius_mm} mm <= grid half-diagonal {half_diag:.3f} mm"
        )
    c0 = sampling.c0_mm_per_us
    slack = 1e-9 * geometry.radius_mm
    d_start = sampling.t0_us * c0
    d_end = (sampling.t0_us + (sampling.mt - 1) * sampling.dt_us) * c0
    if d_start > geometry.radius_mm - half_diag + slack or d_end < (
        geometry.radius_mm + half_diag - slack
    ):
        raise WindowTooShort(
            f"window [{d_start:.3f}, {d_end:.3f}] mm does not cover "
            f"[{geometry.radius_mm - half_diag:.3f}, "
            f"{geometry.radius_mm + half_diag:.3f}] mm"
        )
    mt = sampling.mt
    # radii for time indices -1 .. mt so the central difference is defined
    # at both trace ends; out-of-window radii miss the grid and contribute 0
    t_ext = sampling.t0_us + np.arange(-1, mt + 1) * sampling.dt_us
    radii = c0 * t_ext
    scale = gamma / (4.0 * np.pi * c0) / (2.0 * sampling.dt_us)
    rows_idx = np.repeat(np.arange(mt), 2)
    cols_idx = np.empty(2 * mt, dtype=np.int64)
    cols_idx[0::2] = np.arange(mt)          # arc index j-1 lives at slot j
    cols_idx[1::2] = np.arange(mt) + 2      # arc index j+1 lives at slot j+2
    diff_data = np.tile([-scale, scale], mt)
    diff = sparse.csr_matrix(
        (diff_data, (rows_idx, cols_idx)), shape=(mt, mt + 2)
    )
    blocks = []
    for tpos in geometry.positions():
        arcs = _arc_integrals(tpos, radii, grid.nx, grid.ny, grid.spacing_mm)
        block = (diff @ arcs).tocsr()
        blocks.append(block)
    matrix = sparse.vstack(blocks, format="csr")
    matrix.eliminate_zeros()
    matrix.sort_indices()
    scale = 1.0
    if normalize:
        sigma = _top_singular_value(matrix)
        if sigma > 0:
            # (2/n) * (scale*sigma)^2 == 4
            scale = np.sqrt(2.0 * matrix.shape[0]) / sigma
            matrix = matrix * scale
    return ForwardOperator(
        matrix, grid.nx, grid.ny, grid.spacing_mm, geometry, sampling, gamma,
        scale=scale,
    )


def _stride_removal(mt: int, per_block: int) -> np.ndarray:
    # evenly spread local indices; spacing >= 2 keeps them unique
    s = np.arange(per_block)
    return np.unique(((s + 0.5) * mt / per_block).astype(np.int64))


def split_rows(
    op: ForwardOperator, delta: float, scheme: str = "stride", seed: int = 0
) -> OperatorSplit:
    """Remove a fraction ``delta`` of rows, returning full + reduced pair.

    Schemes: 'stride' (uniform within each transducer's time block,
    default), 'random' (seeded, per block), 'tail' (end of each block),
    'block' (one contiguous mid-trace span per transducer, staggered
    across transducers). Finely sampled traces make strided or random
    holdouts interpolable from their neighbors, so the resulting
    smoothness measure sees almost no generalization gap; a contiguous
    span holds out information a reconstruction actually has to get
    right, which is what the weight-tracking protocol relies on.
    """
    if not 0.0 < delta < 0.5:
        raise DeltaOutOfRange(f"delta {delta} outside (0, 0.5)")
    if op.row_map is not None:
        raise ValueError("can only split a full operator")
    n_f = op.rows
    count, mt = op.geometry.count, op.sampling.mt
    total = int(round(delta * n_f))
    base, rem = divmod(total, count)
    removed = []
    rng = np.random.default_rng(seed)
    for i in range(count):
        t_i = base + (1 if i < rem else 0)
        if t_i == 0:
            continue
        if scheme == "stride":
            local = _stride_removal(mt, t_i)
        elif scheme == "random":
            local = np.sort(rng.choice(mt, size=t_i, replace=False))
        elif scheme == "tail":
            local = np.arange(mt - t_i, mt)
        elif scheme == "block":
            # stagger spans over the central 70% of the trace (the edges
            # see only the image corners and hold out almost nothing)
            lo = int(round(0.15 * mt))
            span = max(1, int(round(0.85 * mt)) - t_i - lo)
            start = lo + int(round(span * ((i * 0.6180339887498949) % 1.0)))
            local = np.arange(start, start + t_i)
        else:
            raise ValueError(f"unknown removal scheme {scheme!r}")
        removed.append(local + i * mt)
    removed_rows = (
        np.concatenate(removed) if removed else np.empty(0, dtype=np.int64)
    )
    keep_mask = np.ones(n_f, dtype=bool)
    keep_mask[removed_rows] = False
    kept_rows = np.flatnonzero(keep_mask)
    reduced = ForwardOperator(
        op.matrix[kept_rows],
        op.nx,
        op.ny,
        op.spacing_mm,
        op.geometry,
        op.sampling,
        op.gamma,
        row_map=kept_rows,
    )
    return OperatorSplit(op, reduced, removed_rows, kept_rows, delta)


def simulate_measurement(
    op: ForwardOperator, img: ImageGrid, snr_db: float, seed: int | None = 0
) -> Measurement:
    """Forward-project and add white Gaussian noise at the target SNR.

    Noise scale sigma = ||Hx|| / (sqrt(n) * 10^(snr_db/20)), so the
    expected energy SNR 20*log10(||Hx|| / ||eta||) equals snr_db.
    ``snr_db = inf`` returns the clean projection.
    """
    clean = op.apply(img)
    if np.isinf(snr_db):
        values = clean
    else:
        if not np.isfinite(snr_db):
            raise ValueError("snr_db must be finite or +inf")
        sigma = np.linalg.norm(clean) / (
            np.sqrt(op.rows) * 10.0 ** (snr_db / 20.0)
        )
        eta = sigma * np.random.default_rng(seed).standard_normal(op.rows)
        values = clean + eta
    return Measurement(
        values=values,
        snr_db=snr_db,
        noise_seed=seed,
        geometry=op.geometry,
        sampling=op.sampling,
        nx=op.nx,
        ny=op.ny,
        spacing_mm=op.spacing_mm,
    )
