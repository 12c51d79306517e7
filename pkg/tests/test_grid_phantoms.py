import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

import patrec as pr
from patrec import fileio
from patrec.errors import RowOutOfRange, UnreadableFile, UnsupportedSize

ALL_KINDS = [pr.PhantomKind.DERENZO, pr.PhantomKind.BLOOD_VESSEL, pr.PhantomKind.PAT_TEXT]


class TestImageGrid:
    def test_rejects_small_grids(self):
        with pytest.raises(ValueError):
            pr.ImageGrid(4, 4, 0.1, np.zeros(16))

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            pr.ImageGrid(8, 8, 0.1, np.zeros(63))

    def test_rejects_nonfinite(self):
        vals = np.zeros(64)
        vals[3] = np.nan
        with pytest.raises(ValueError):
            pr.ImageGrid(8, 8, 0.1, vals)

    def test_values_read_only(self):
        img = pr.ImageGrid(8, 8, 0.1, np.zeros(64))
        with pytest.raises(ValueError):
            img.values[0] = 1.0

    def test_row_major_layout(self):
        vals = np.arange(64.0)
        img = pr.ImageGrid(8, 8, 0.1, vals)
        assert img.as_matrix()[2, 5] == 2 * 8 + 5

    def test_positions_centered(self):
        img = pr.ImageGrid(8, 8, 0.5, np.zeros(64))
        x = img.x_positions_mm()
        assert x[0] == -x[-1]
        np.testing.assert_allclose(np.diff(x), 0.5)


class TestScanline:
    def test_constant_image(self):
        img = pr.ImageGrid(8, 8, 0.1, np.full(64, 0.7))
        line = pr.scanline(img, 3)
        np.testing.assert_array_equal(line[:, 1], 0.7)

    def test_matches_matrix_row(self):
        rng = np.random.default_rng(0)
        img = pr.ImageGrid(8, 8, 0.1, rng.random(64))
        for row in range(8):
            np.testing.assert_array_equal(
                pr.scanline(img, row)[:, 1], img.as_matrix()[row]
            )

    def test_embedded_2x2_pattern(self):
        # the [[1,2],[3,4]] indexing semantics on a legal grid size
        vals = np.zeros(64)
        vals[0:2] = [1, 2]
        vals[8:10] = [3, 4]
        img = pr.ImageGrid(8, 8, 0.1, vals)
        np.testing.assert_array_equal(pr.scanline(img, 1)[:2, 1], [3, 4])

    def test_derenzo_row_matches_slice(self):
        img = pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.DERENZO, 128))
        line = pr.scanline(img, 64)
        np.testing.assert_array_equal(line[:, 1], img.values[64 * 128 : 65 * 128])

    def test_row_out_of_range(self):
        img = pr.ImageGrid(8, 8, 0.1, np.zeros(64))
        with pytest.raises(RowOutOfRange):
            pr.scanline(img, 8)
        with pytest.raises(RowOutOfRange):
            pr.scanline(img, -1)


class TestPhantoms:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    @pytest.mark.parametrize("size", [32, 64, 128])
    def test_range_and_peak(self, kind, size):
        img = pr.generate_phantom(pr.PhantomSpec(kind, size, seed=2))
        assert img.values.min() >= 0.0
        assert img.values.max() == 1.0

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_deterministic(self, kind):
        a = pr.generate_phantom(pr.PhantomSpec(kind, 64, seed=1))
        b = pr.generate_phantom(pr.PhantomSpec(kind, 64, seed=1))
        assert np.array_equal(a.values, b.values)

    def test_bloodvessel_seeds_differ(self):
        a = pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.BLOOD_VESSEL, 64, seed=1))
        b = pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.BLOOD_VESSEL, 64, seed=2))
        assert not np.array_equal(a.values, b.values)

    def test_derenzo_disk_clusters(self):
        img = pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.DERENZO, 128, seed=0))
        _, n_components = ndimage.label(img.as_matrix() > 0)
        assert n_components >= 6

    def test_default_spacing_keeps_aperture(self):
        img64 = pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.DERENZO, 64))
        img128 = pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.DERENZO, 128))
        assert img64.extent_mm == pytest.approx(img128.extent_mm)

    def test_size_bounds(self):
        with pytest.raises(UnsupportedSize):
            pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.DERENZO, 16))
        with pytest.raises(UnsupportedSize):
            pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.DERENZO, 2048))

    def test_from_file_uniform_normalizes(self, tmp_path):
        path = tmp_path / "uniform.patg"
        fileio.write_grid_raw(
            path, pr.ImageGrid(64, 64, 0.2, np.full(64 * 64, 0.5))
        )
        spec = pr.PhantomSpec(pr.PhantomKind.FROM_FILE, 64, path=str(path))
        img = pr.generate_phantom(spec)
        np.testing.assert_array_equal(img.values, 1.0)

    def test_from_file_resizes(self, tmp_path):
        path = tmp_path / "img.patg"
        fileio.write_grid_raw(path, blob(48))
        spec = pr.PhantomSpec(pr.PhantomKind.FROM_FILE, 64, path=str(path))
        img = pr.generate_phantom(spec)
        assert img.shape == (64, 64)
        assert img.values.max() == 1.0

    def test_from_file_missing(self):
        spec = pr.PhantomSpec(pr.PhantomKind.FROM_FILE, 64, path="/nonexistent.png")
        with pytest.raises(UnreadableFile):
            pr.generate_phantom(spec)

    def test_parse_spec_strings(self):
        spec = pr.PhantomSpec.parse("derenzo", 64)
        assert spec.kind is pr.PhantomKind.DERENZO
        spec = pr.PhantomSpec.parse("file:/tmp/x.png", 64)
        assert spec.kind is pr.PhantomKind.FROM_FILE
        assert spec.path == "/tmp/x.png"


def blob(size):
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    img = np.exp(-((xx - size / 2) ** 2 + (yy - size / 2) ** 2) / (size / 4) ** 2)
    return pr.ImageGrid(size, size, 12.8 / size, (img / img.max()).ravel())


class TestGridFiles:
    def test_patg_roundtrip_exact(self, tmp_path):
        img = blob(32)
        path = tmp_path / "g.patg"
        fileio.write_grid_raw(path, img)
        back = fileio.read_grid_raw(path)
        assert back.shape == img.shape
        assert back.spacing_mm == pytest.approx(img.spacing_mm, abs=1e-6)
        np.testing.assert_array_equal(back.values, img.values)

    def test_pgm_roundtrip_quantized(self, tmp_path):
        img = blob(32)
        path = tmp_path / "g.pgm"
        fileio.write_pgm16(path, img)
        back = fileio.read_pgm16(path, spacing_mm=img.spacing_mm)
        expected = np.rint(img.values * 65535.0) / 65535.0
        np.testing.assert_allclose(back.values, expected, atol=1e-12)

    def test_pgm_bytes_deterministic(self, tmp_path):
        img = blob(32)
        p1, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
        fileio.write_pgm16(p1, img)
        fileio.write_pgm16(p2, img)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unreadable_raises(self, tmp_path):
        bad = tmp_path / "bad.patg"
        bad.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(UnreadableFile):
            fileio.read_grid_raw(bad)


@settings(max_examples=25, deadline=None)
@given(
    size=st.sampled_from([32, 48, 64]),
    seed=st.integers(min_value=0, max_value=50),
)
def test_bloodvessel_always_valid(size, seed):
    img = pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.BLOOD_VESSEL, size, seed))
    assert img.values.min() >= 0.0
    assert img.values.max() == 1.0
    assert np.all(np.isfinite(img.values))
