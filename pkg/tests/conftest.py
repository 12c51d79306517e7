import numpy as np
import pytest

import patrec as pr


def blob_image(size: int, spacing_mm: float | None = None) -> pr.ImageGrid:
    """Small smooth test image with a few bumps, peak exactly 1."""
    spacing = spacing_mm if spacing_mm else 12.8 / size
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    img = np.zeros((size, size))
    for cy, cx, s, a in [
        (size * 0.35, size * 0.40, size * 0.12, 1.0),
        (size * 0.65, size * 0.62, size * 0.09, 0.8),
        (size * 0.50, size * 0.30, size * 0.06, 0.6),
    ]:
        img += a * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))
    img /= img.max()
    return pr.ImageGrid(size, size, spacing, img.ravel())


def build_small_operator(size, transducers, mt, radius_mm=9.5):
    img = blob_image(size)
    geo = pr.TransducerGeometry.ring(transducers, radius_mm)
    samp = pr.TimeSampling.cover(geo, img, mt)
    return pr.build_operator(img, geo, samp), img


@pytest.fixture(scope="session")
def op16():
    """16x16 grid, dense angles: well-posed small system."""
    return build_small_operator(16, 16, 96)


@pytest.fixture(scope="session")
def op12():
    """12x12 grid, 4 transducers: the optimality-check fixture."""
    return build_small_operator(12, 4, 64)


@pytest.fixture(scope="session")
def op24():
    return build_small_operator(24, 8, 96)


@pytest.fixture(scope="session")
def op24dense():
    """Dense angular sampling: effectively well-posed."""
    return build_small_operator(24, 16, 96)


@pytest.fixture(scope="session")
def derenzo32():
    return pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.DERENZO, 32))


@pytest.fixture(scope="session")
def op32(derenzo32):
    geo = pr.TransducerGeometry.ring(16, 9.5)
    samp = pr.TimeSampling.cover(geo, derenzo32, 128)
    return pr.build_operator(derenzo32, geo, samp)


@pytest.fixture(scope="session")
def split32(op32):
    return pr.split_rows(op32, 0.1)
