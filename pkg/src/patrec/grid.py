"""Image-grid data model and scan-line extraction."""

from dataclasses import dataclass

import numpy as np

from .errors import RowOutOfRange


@dataclass(frozen=True)
class ImageGrid:
    """Square 2D scalar field (initial pressure, Pa) on a cartesian grid.

    ``values`` is a read-only, row-major float64 vector of length nx*ny:
    entry ``r = row*nx + col``. The grid is centered on the origin, so the
    pixel at (row, col) sits at ``((col - (nx-1)/2)*spacing,
    (row - (ny-1)/2)*spacing)`` in mm.
    """

    nx: int
    ny: int
    spacing_mm: float
    values: np.ndarray

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.nx}x{self.ny}")
        if self.spacing_mm <= 0:
            raise ValueError("spacing_mm must be positive")
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).ravel())
        if v.size != self.nx * self.ny:
            raise ValueError(
                f"values length {v.size} != nx*ny = {self.nx * self.ny}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_pixels(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        """(ny, nx), matching ``as_matrix()``."""
        return (self.ny, self.nx)

    @property
    def extent_mm(self) -> tuple[float, float]:
        """Physical size (width, height) in mm."""
        return (self.nx * self.spacing_mm, self.ny * self.spacing_mm)

    def as_matrix(self) -> np.ndarray:
        return self.values.reshape(self.ny, self.nx)

    def x_positions_mm(self) -> np.ndarray:
        return (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.spacing_mm

    def y_positions_mm(self) -> np.ndarray:
        return (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.spacing_mm

    def with_values(self, values: np.ndarray) -> "ImageGrid":
        """Same geometry, new pixel values."""
        return ImageGrid(self.nx, self.ny, self.spacing_mm, values)


def scanline(img: ImageGrid, row: int) -> np.ndarray:
    """Horizontal intensity profile along one pixel row.

    Returns an (nx, 2) array of (x_position_mm, value) pairs, left to right.
    """
    if not 0 <= row < img.ny:
        raise RowOutOfRange(f"row {row} outside [0, {img.ny})")
    return np.column_stack([img.x_positions_mm(), img.as_matrix()[row]])
