"""Binary file formats for grids, operators, and measurements.

All multi-byte fields are little-endian. Formats:

* image PGM: binary P5, maxval 65535, sample = round(65535 * value).
* grid raw ("PATG"): 16-byte header = magic "PATG", u32 nx, u32 ny,
  u32 reserved, then nx*ny float64 values; spacing is carried in the
  reserved word as round(spacing_mm * 1e6) micrometers*1e0 (0 = unknown).
* operator cache ("PATH"): magic, u32 version, dims and geometry metadata,
  then CSR arrays (u64 row offsets, u32 column indices, f64 weights).
* measurement ("PATM"): magic, u32 version, geometry/sampling metadata,
  then n float64 samples.
"""

import struct
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import UnreadableFile
from .grid import ImageGrid

_PATH_VERSION = 1
_PATM_VERSION = 1


def write_pgm16(path, img: ImageGrid) -> None:
    """16-bit binary PGM; samples are big-endian per the PGM standard."""
    data = np.clip(np.rint(img.values * 65535.0), 0, 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.nx} {img.ny}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm16(path, spacing_mm: float = 1.0) -> ImageGrid:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise UnreadableFile(str(exc)) from exc
    try:
        fields: list[bytes] = []
        pos = 0
        while len(fields) < 4:
            while pos < len(blob) and blob[pos : pos + 1].isspace():
                pos += 1
            if blob[pos : pos + 1] == b"#":
                while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                    pos += 1
                continue
            start = pos
            while pos < len(blob) and not blob[pos : pos + 1].isspace():
                pos += 1
            fields.append(blob[start:pos])
        pos += 1
        magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
        if magic != b"P5" or maxval != 65535:
            raise ValueError(f"not a 16-bit P5 PGM: {magic!r} maxval={maxval}")
        raw = np.frombuffer(blob, dtype=">u2", count=w * h, offset=pos)
    except (ValueError, IndexError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    return ImageGrid(w, h, spacing_mm, raw.astype(np.float64) / 65535.0)


def write_grid_raw(path, img: ImageGrid) -> None:
    with open(path, "wb") as fh:
        spacing_um = int(round(img.spacing_mm * 1e6)) & 0xFFFFFFFF
        fh.write(struct.pack("<4sIII", b"PATG", img.nx, img.ny, spacing_um))
        fh.write(img.values.astype("<f8").tobytes())


def read_grid_raw(path) -> ImageGrid:
    try:
        with open(path, "rb") as fh:
            header = fh.read(16)
            magic, nx, ny, spacing_um = struct.unpack("<4sIII", header)
            if magic != b"PATG":
                raise ValueError(f"bad magic {magic!r}")
            values = np.frombuffer(fh.read(8 * nx * ny), dtype="<f8")
            if values.size != nx * ny:
                raise ValueError("truncated grid payload")
    except (OSError, struct.error, ValueError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    spacing = spacing_um / 1e6 if spacing_um else 1.0
    return ImageGrid(nx, ny, spacing, values)


def write_operator(path, op) -> None:
    m = op.matrix.tocsr()
    m.sort_indices()
    g, s = op.geometry, op.sampling
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", b"PATH", _PATH_VERSION))
        fh.write(
            struct.pack(
                "<IIdIdIddddd",
                op.nx,
                op.ny,
                op.spacing_mm,
                g.count,
                g.radius_mm,
                s.mt,
                s.dt_us,
                s.t0_us,
                s.c0_mm_per_us,
                op.gamma,
                op.scale,
            )
        )
        fh.write(struct.pack("<QQ", m.shape[0], m.nnz))
        fh.write(m.indptr.astype("<u8").tobytes())
        fh.write(m.indices.astype("<u4").tobytes())
        fh.write(m.data.astype("<f8").tobytes())


def read_operator(path):
    from .forward import ForwardOperator, TimeSampling, TransducerGeometry

    try:
        with open(path, "rb") as fh:
            magic, version = struct.unpack("<4sI", fh.read(8))
            if magic != b"PATH" or version != _PATH_VERSION:
                raise ValueError(f"bad operator header {magic!r} v{version}")
            (nx, ny, spacing, count, radius, mt, dt, t0, c0, gamma, scale) = (
                struct.unpack("<IIdIdIddddd", fh.read(struct.calcsize("<IIdIdIddddd")))
            )
            rows, nnz = struct.unpack("<QQ", fh.read(16))
            indptr = np.frombuffer(fh.read(8 * (rows + 1)), dtype="<u8").astype(
                np.int64
            )
            indices = np.frombuffer(fh.read(4 * nnz), dtype="<u4").astype(np.int32)
            data = np.frombuffer(fh.read(8 * nnz), dtype="<f8")
            if data.size != nnz:
                raise ValueError("truncated operator payload")
    except (OSError, struct.error, ValueError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    matrix = sparse.csr_matrix((data, indices, indptr), shape=(rows, nx * ny))
    return ForwardOperator(
        matrix=matrix,
        nx=nx,
        ny=ny,
        spacing_mm=spacing,
        geometry=TransducerGeometry.ring(count, radius),
        sampling=TimeSampling(mt, dt, t0, c0),
        gamma=gamma,
        scale=scale,
    )


def write_measurement(path, meas) -> None:
    g, s = meas.geometry, meas.sampling
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", b"PATM", _PATM_VERSION))
        fh.write(
            struct.pack(
                "<IdIdddIIdqQ",
                g.count,
                g.radius_mm,
                s.mt,
                s.dt_us,
                s.t0_us,
                s.c0_mm_per_us,
                meas.nx,
                meas.ny,
                meas.spacing_mm,
                meas.noise_seed if meas.noise_seed is not None else -1,
                meas.values.size,
            )
        )
        fh.write(struct.pack("<d", meas.snr_db))
        fh.write(meas.values.astype("<f8").tobytes())


def read_measurement(path):
    from .forward import Measurement, TimeSampling, TransducerGeometry

    fmt = "<IdIdddIIdqQ"
    try:
        with open(path, "rb") as fh:
            magic, version = struct.unpack("<4sI", fh.read(8))
            if magic != b"PATM" or version != _PATM_VERSION:
                raise ValueError(f"bad measurement header {magic!r} v{version}")
            (count, radius, mt, dt, t0, c0, nx, ny, spacing, seed, n) = struct.unpack(
                fmt, fh.read(struct.calcsize(fmt))
            )
            (snr_db,) = struct.unpack("<d", fh.read(8))
            values = np.frombuffer(fh.read(8 * n), dtype="<f8")
            if values.size != n:
                raise ValueError("truncated measurement payload")
    except (OSError, struct.error, ValueError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    return Measurement(
        values=values.copy(),
        snr_db=snr_db,
        noise_seed=None if seed < 0 else int(seed),
        geometry=TransducerGeometry.ring(count, radius),
        sampling=TimeSampling(mt, dt, t0, c0),
        nx=int(nx),
        ny=int(ny),
        spacing_mm=spacing,
    )


def read_image_any(path, size: int | None = None) -> ImageGrid:
    """Load a grid from PATG, PGM, or any Pillow-readable grayscale image."""
    p = Path(path)
    if p.suffix.lower() == ".patg":
        img = read_grid_raw(p)
    elif p.suffix.lower() == ".pgm":
        img = read_pgm16(p)
    else:
        from .phantoms import PhantomKind, PhantomSpec, generate_phantom

        if size is None:
            raise UnreadableFile(f"need a target size to import {path}")
        return generate_phantom(
            PhantomSpec(PhantomKind.FROM_FILE, size, path=str(p))
        )
    return img
