"""Synthetic test images for reconstruction experiments.

All generators are pure functions of (kind, size, seed): repeated calls
produce bit-identical images. Values are non-negative and peak-normalized
to exactly 1.0 (a 1 Pa initial pressure rise).
"""

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UnreadableFile, UnsupportedSize
from .grid import ImageGrid

DEFAULT_APERTURE_MM = 12.8

_SIZE_MIN, _SIZE_MAX = 32, 1024


class PhantomKind(enum.Enum):
    BLOOD_VESSEL = "bloodvessel"
    DERENZO = "derenzo"
    PAT_TEXT = "pattext"
    FROM_FILE = "file"


@dataclass(frozen=True)
class PhantomSpec:
    kind: PhantomKind
    size: int
    seed: int = 0
    path: str | None = None

    @classmethod
    def parse(cls, text: str, size: int, seed: int = 0) -> "PhantomSpec":
        """Parse 'derenzo', 'bloodvessel', 'pattext' or 'file:PATH'."""
        if text.startswith("file:"):
            return cls(PhantomKind.FROM_FILE, size, seed, path=text[5:])
        return cls(PhantomKind(text.lower()), size, seed)

    @property
    def name(self) -> str:
        if self.kind is PhantomKind.FROM_FILE:
            return Path(self.path or "file").stem
        return self.kind.value


def generate_phantom(spec: PhantomSpec, spacing_mm: float | None = None) -> ImageGrid:
    """Build the phantom image for ``spec``.

    Default pixel pitch keeps the physical aperture at 12.8 mm for any size.
    """
    if not _SIZE_MIN <= spec.size <= _SIZE_MAX:
        raise UnsupportedSize(
            f"size {spec.size} outside [{_SIZE_MIN}, {_SIZE_MAX}]"
        )
    if spacing_mm is None:
        spacing_mm = DEFAULT_APERTURE_MM / spec.size
    if spec.kind is PhantomKind.DERENZO:
        img = _derenzo(spec.size)
    elif spec.kind is PhantomKind.BLOOD_VESSEL:
        img = _blood_vessel(spec.size, np.random.default_rng(spec.seed))
    elif spec.kind is PhantomKind.PAT_TEXT:
        img = _pat_text(spec.size)
    elif spec.kind is PhantomKind.FROM_FILE:
        img = _from_file(spec.path, spec.size)
    else:  # pragma: no cover
        raise ValueError(f"unknown phantom kind {spec.kind}")
    img = np.clip(img, 0.0, None)
    peak = img.max()
    if peak > 0:
        img = img / peak
    return ImageGrid(spec.size, spec.size, spacing_mm, img.ravel())


def _derenzo(size: int) -> np.ndarray:
    """Six 60-degree sectors of disks, one disk radius per sector.

    Classic resolution-phantom layout: triangular lattice with
    center-to-center pitch of four disk radii, so gaps equal diameters.
    """
    scale = size / 128.0
    radii = np.array([2.0, 3.0, 4.0, 6.0, 8.0, 10.0]) * scale
    r_outer = 0.44 * size
    r_inner = 0.10 * size
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    img = np.zeros((size, size))
    for s, rho in enumerate(radii):
        phi = np.deg2rad(s * 60.0 + 30.0)
        half_width = np.deg2rad(24.0)
        e1 = np.array([np.cos(phi), np.sin(phi)])
        e2 = np.array([-np.sin(phi), np.cos(phi)])
        pitch = 4.0 * rho
        row_step = pitch * np.sqrt(3.0) / 2.0
        n_rows = int(np.ceil((r_outer - r_inner) / row_step)) + 1
        n_lat = int(np.ceil(r_outer / pitch)) + 1
        for i in range(n_rows):
            axial = r_inner + 2.0 * rho + i * row_step
            for j in range(-n_lat, n_lat + 1):
                lateral = (j + 0.5 * (i % 2)) * pitch
                p = axial * e1 + lateral * e2
                r = np.hypot(p[0], p[1])
                if r + rho > r_outer or r - rho < r_inner:
                    continue
                ang = np.arctan2(p[1], p[0])
                dang = np.abs((ang - phi + np.pi) % (2 * np.pi) - np.pi)
                if dang + np.arcsin(min(rho / r, 1.0)) > half_width:
                    continue
                d2 = (xx - (c + p[0])) ** 2 + (yy - (c + p[1])) ** 2
                img[d2 <= rho * rho] = 1.0
    return img


def _blood_vessel(size: int, rng: np.random.Generator) -> np.ndarray:
    """Recursive branching tubes with Gaussian cross-sections."""
    scale = size / 128.0
    img = np.zeros((size, size))
    step = max(2.0, 4.0 * scale)
    margin = 0.08 * size

    def draw_segment(p, q, sigma):
        lo = np.floor(np.minimum(p, q) - 4 * sigma).astype(int)
        hi = np.ceil(np.maximum(p, q) + 4 * sigma).astype(int)
        lo = np.clip(lo, 0, size - 1)
        hi = np.clip(hi, 0, size - 1)
        if np.any(hi < lo):
            return
        ys, xs = np.mgrid[lo[1] : hi[1] + 1, lo[0] : hi[0] + 1]
        d = q - p
        L2 = d @ d
        if L2 == 0:
            t = np.zeros_like(xs, dtype=float)
        else:
            t = np.clip(((xs - p[0]) * d[0] + (ys - p[1]) * d[1]) / L2, 0.0, 1.0)
        dx = xs - (p[0] + t * d[0])
        dy = ys - (p[1] + t * d[1])
        img[lo[1] : hi[1] + 1, lo[0] : hi[0] + 1] += np.exp(
            -(dx * dx + dy * dy) / (2.0 * sigma * sigma)
        )

    def grow(pos, direction, sigma, depth):
        n_steps = int(rng.integers(5, 10))
        for _ in range(n_steps):
            direction += rng.normal(0.0, 0.25, size=2)
            direction /= np.hypot(*direction) + 1e-12
            nxt = pos + direction * step
            if np.any(nxt < margin) or np.any(nxt > size - 1 - margin):
                return
            draw_segment(pos, nxt, sigma)
            pos = nxt
            if depth > 0 and rng.random() < 0.22:
                fork = direction + rng.normal(0.0, 0.8, size=2)
                fork /= np.hypot(*fork) + 1e-12
                grow(pos.copy(), fork, max(0.8, sigma * 0.7), depth - 1)
        if depth > 0:
            grow(pos, direction, max(0.8, sigma * 0.7), depth - 1)

    for _ in range(3):
        ang = rng.uniform(0, 2 * np.pi)
        start = np.array([size / 2.0, size / 2.0]) + 0.30 * size * np.array(
            [np.cos(ang), np.sin(ang)]
        )
        heading = -np.array([np.cos(ang), np.sin(ang)])
        sigma0 = np.clip(rng.uniform(2.0, 3.0) * scale, 0.9, 3.0)
        grow(start, heading, sigma0, depth=2)
    return np.clip(img, 0.0, 1.0)


# 5x7 block glyphs, one string per row.
_GLYPHS = {
    "P": ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
    "A": [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "T": ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
}


def _pat_text(size: int) -> np.ndarray:
    cells = []
    for i, ch in enumerate("PAT"):
        g = np.array([[1.0 if c == "#" else 0.0 for c in row] for row in _GLYPHS[ch]])
        cells.append(g)
        if i < 2:
            cells.append(np.zeros((7, 1)))
    bitmap = np.concatenate(cells, axis=1)
    h, w = bitmap.shape
    mag = max(1, int(0.72 * size) // w)
    big = np.kron(bitmap, np.ones((mag, mag)))
    img = np.zeros((size, size))
    r0 = (size - big.shape[0]) // 2
    c0 = (size - big.shape[1]) // 2
    img[r0 : r0 + big.shape[0], c0 : c0 + big.shape[1]] = big
    return img


def _from_file(path: str | None, size: int) -> np.ndarray:
    from . import fileio

    if path is None:
        raise UnreadableFile("FromFile phantom requires a path")
    p = Path(path)
    if not p.is_file():
        raise UnreadableFile(f"cannot read {path}")
    try:
        if p.suffix.lower() == ".patg":
            grid = fileio.read_grid_raw(p)
            arr = grid.as_matrix()
        else:
            from PIL import Image

            with Image.open(p) as im:
                arr = np.asarray(im.convert("F"), dtype=np.float64)
    except UnreadableFile:
        raise
    except Exception as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    arr = np.clip(arr, 0.0, None)
    if arr.shape != (size, size):
        from PIL import Image

        im = Image.fromarray(arr.astype(np.float32), mode="F")
        arr = np.asarray(
            im.resize((size, size), Image.Resampling.BILINEAR), dtype=np.float64
        )
        arr = np.clip(arr, 0.0, None)
    return arr
