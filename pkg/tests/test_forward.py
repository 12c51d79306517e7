import numpy as np
import pytest

import patrec as pr
from patrec import fileio
from patrec.errors import (
    DeltaOutOfRange,
    DimensionMismatch,
    GeometryInsideGrid,
    WindowTooShort,
)

from conftest import blob_image


class TestGeometryAndSampling:
    def test_ring_angles(self):
        geo = pr.TransducerGeometry.ring(8, 9.5)
        assert geo.angles_rad[0] == 0.0
        np.testing.assert_allclose(np.diff(geo.angles_rad), 2 * np.pi / 8)

    def test_positions_on_circle(self):
        geo = pr.TransducerGeometry.ring(16, 9.5)
        pos = geo.positions()
        np.testing.assert_allclose(np.hypot(pos[:, 0], pos[:, 1]), 9.5)

    def test_cover_window(self):
        img = blob_image(32)
        geo = pr.TransducerGeometry.ring(8, 9.5)
        samp = pr.TimeSampling.cover(geo, img, 128)
        half_diag = 0.5 * np.hypot(*img.extent_mm)
        t = samp.times_us()
        assert t[0] * samp.c0_mm_per_us <= 9.5 - half_diag + 1e-12
        assert t[-1] * samp.c0_mm_per_us >= 9.5 + half_diag - 1e-12

    def test_radius_inside_grid_rejected(self):
        img = blob_image(32)
        geo = pr.TransducerGeometry.ring(8, 5.0)  # half-diagonal is ~9.05
        with pytest.raises(GeometryInsideGrid):
            pr.TimeSampling.cover(geo, img, 128)
        samp = pr.TimeSampling(128, 0.05, 0.5)
        with pytest.raises(GeometryInsideGrid):
            pr.build_operator(img, geo, samp)

    def test_short_window_rejected(self):
        img = blob_image(32)
        geo = pr.TransducerGeometry.ring(8, 9.5)
        good = pr.TimeSampling.cover(geo, img, 128)
        bad = pr.TimeSampling(64, good.dt_us, good.t0_us)
        with pytest.raises(WindowTooShort):
            pr.build_operator(img, geo, bad)


class TestOperator:
    def test_zero_image_zero_measurement(self, op16):
        op, _ = op16
        out = op.apply(np.zeros(op.cols))
        np.testing.assert_array_equal(out, 0.0)

    def test_linearity(self, op16):
        op, _ = op16
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal((2, op.cols))
        a, b = 1.7, -0.3
        lhs = op.apply(a * x + b * y)
        rhs = a * op.apply(x) + b * op.apply(y)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)

    def test_apply_matches_dense_rows(self, op32, derenzo32):
        dense = op32.matrix.toarray()
        lhs = op32.apply(derenzo32)
        rhs = dense @ derenzo32.values
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(np.linalg.norm(rhs), 1e-30)

    def test_adjoint_dot_product_50_pairs(self, op32):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.standard_normal(op32.cols)
            y = rng.standard_normal(op32.rows)
            hx = op32.apply(x)
            err = abs(hx @ y - x @ op32.adjoint(y))
            assert err <= 1e-10 * np.linalg.norm(hx) * np.linalg.norm(y)

    def test_adjoint_unit_vector_extracts_row(self, op16):
        op, _ = op16
        ell = op.rows // 3
        e = np.zeros(op.rows)
        e[ell] = 1.0
        np.testing.assert_array_equal(
            op.adjoint(e), op.matrix.getrow(ell).toarray().ravel()
        )

    def test_adjoint_zero(self, op16):
        op, _ = op16
        np.testing.assert_array_equal(op.adjoint(np.zeros(op.rows)), 0.0)

    def test_adjoint_image_carries_grid(self, op16):
        op, _ = op16
        img = op.adjoint_image(np.zeros(op.rows))
        assert img.shape == (op.ny, op.nx)
        assert img.spacing_mm == op.spacing_mm

    def test_dimension_mismatch(self, op16):
        op, _ = op16
        with pytest.raises(DimensionMismatch):
            op.apply(np.zeros(op.cols + 1))
        with pytest.raises(DimensionMismatch):
            op.adjoint(np.zeros(op.rows - 1))

    def test_spectral_calibration(self, op16):
        op, _ = op16
        sigma = np.linalg.svd(op.matrix.toarray(), compute_uv=False)[0]
        assert (2.0 / op.rows) * sigma**2 == pytest.approx(4.0, rel=1e-3)


@pytest.fixture(scope="module")
def point_setup():
    n = 33  # odd: the center pixel sits exactly on the origin
    vals = np.zeros(n * n)
    vals[(n // 2) * n + n // 2] = 1.0
    img = pr.ImageGrid(n, n, 12.8 / n, vals)
    geo = pr.TransducerGeometry.ring(4, 9.5)
    samp = pr.TimeSampling.cover(geo, img, 256)
    op = pr.build_operator(img, geo, samp)
    return op, img, geo, samp


class TestPointSourcePhysics:
    def test_bipolar_with_arrival_time(self, point_setup):
        op, img, geo, samp = point_setup
        m = op.apply(img)
        t = samp.times_us()
        expected = geo.radius_mm / samp.c0_mm_per_us
        for i in range(geo.count):
            trace = op.trace(m, i)
            nz = np.abs(trace) > 1e-9 * np.abs(trace).max()
            signs = np.sign(trace[nz])
            assert (np.diff(signs) != 0).sum() == 1
            idx = np.flatnonzero(nz)
            flip = idx[np.flatnonzero(np.diff(signs) != 0)[0]]
            frac = trace[flip] / (trace[flip] - trace[flip + 1])
            t_cross = t[flip] + frac * (t[flip + 1] - t[flip])
            assert abs(t_cross - expected) <= samp.dt_us


class TestShiftCovariance:
    def test_quarter_turn(self):
        """With 4 transducers the inter-transducer angle is a lattice
        symmetry, so rotating the image and cycling trace blocks must agree."""
        img = pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.BLOOD_VESSEL, 32, seed=3))
        geo = pr.TransducerGeometry.ring(4, 9.5)
        samp = pr.TimeSampling.cover(geo, img, 128)
        op = pr.build_operator(img, geo, samp)
        m = op.apply(img)
        # rotate image by +90 degrees: position angle of every pixel grows
        # by pi/2, matching the transducer index shift by one
        rotated = np.rot90(img.as_matrix(), k=-1).copy()
        m_rot = op.apply(pr.ImageGrid(32, 32, img.spacing_mm, rotated.ravel()))
        mt = samp.mt
        blocks = [m[i * mt : (i + 1) * mt] for i in range(4)]
        m_expected = np.concatenate([blocks[-1]] + blocks[:-1])
        rel = np.linalg.norm(m_rot - m_expected) / np.linalg.norm(m)
        assert rel <= 1e-6


class TestSplitRows:
    def test_frozen_arithmetic_8192(self):
        img = blob_image(32)
        geo = pr.TransducerGeometry.ring(16, 9.5)
        samp = pr.TimeSampling.cover(geo, img, 512)
        op = pr.build_operator(img, geo, samp)
        assert op.rows == 8192
        split = pr.split_rows(op, 0.1)
        assert len(split.removed_rows) == 819  # round(0.1 * 8192)
        assert split.reduced.rows == 7373

    def test_partition(self, split32):
        union = np.union1d(split32.removed_rows, split32.kept_rows)
        np.testing.assert_array_equal(union, np.arange(split32.full.rows))
        assert np.intersect1d(split32.removed_rows, split32.kept_rows).size == 0

    def test_ratio_within_one_row(self, split32):
        n, n_f = split32.reduced.rows, split32.full.rows
        assert abs(n - (1 - split32.delta) * n_f) <= 1.0

    def test_deterministic(self, op32):
        a = pr.split_rows(op32, 0.1)
        b = pr.split_rows(op32, 0.1)
        np.testing.assert_array_equal(a.removed_rows, b.removed_rows)

    def test_rows_bit_identical(self, split32):
        full = split32.full.matrix
        red = split32.reduced.matrix
        for local, original in [(0, split32.kept_rows[0]), (5, split32.kept_rows[5])]:
            np.testing.assert_array_equal(
                red.getrow(local).toarray(), full.getrow(original).toarray()
            )
        sliced = full[split32.kept_rows]
        assert np.array_equal(sliced.data, red.data)

    def test_reduce_measurement(self, split32):
        m = np.arange(split32.full.rows, dtype=float)
        np.testing.assert_array_equal(
            split32.reduce_measurement(m), split32.kept_rows.astype(float)
        )

    def test_schemes(self, op32):
        for scheme in ("stride", "random", "tail"):
            split = pr.split_rows(op32, 0.1, scheme=scheme)
            assert len(split.removed_rows) == round(0.1 * op32.rows)
        with pytest.raises(ValueError):
            pr.split_rows(op32, 0.1, scheme="bogus")

    def test_random_scheme_seeded(self, op32):
        a = pr.split_rows(op32, 0.1, scheme="random", seed=7)
        b = pr.split_rows(op32, 0.1, scheme="random", seed=7)
        c = pr.split_rows(op32, 0.1, scheme="random", seed=8)
        np.testing.assert_array_equal(a.removed_rows, b.removed_rows)
        assert not np.array_equal(a.removed_rows, c.removed_rows)

    def test_stride_spreads_within_blocks(self, op32):
        split = pr.split_rows(op32, 0.1)
        mt = op32.sampling.mt
        first_block = split.removed_rows[split.removed_rows < mt]
        gaps = np.diff(first_block)
        assert gaps.min() >= 2

    def test_delta_out_of_range(self, op32):
        for delta in (0.0, 0.5, -0.1, 0.7):
            with pytest.raises(DeltaOutOfRange):
                pr.split_rows(op32, delta)


class TestSimulateMeasurement:
    def test_no_noise_exact(self, op16):
        op, img = op16
        meas = pr.simulate_measurement(op, img, np.inf)
        np.testing.assert_array_equal(meas.values, op.apply(img))

    def test_seed_deterministic(self, op16):
        op, img = op16
        a = pr.simulate_measurement(op, img, 20.0, seed=9)
        b = pr.simulate_measurement(op, img, 20.0, seed=9)
        np.testing.assert_array_equal(a.values, b.values)
        c = pr.simulate_measurement(op, img, 20.0, seed=10)
        assert not np.array_equal(a.values, c.values)

    def test_empirical_snr(self):
        img = pr.generate_phantom(pr.PhantomSpec(pr.PhantomKind.DERENZO, 64))
        geo = pr.TransducerGeometry.ring(16, 9.5)
        samp = pr.TimeSampling.cover(geo, img, 256)
        op = pr.build_operator(img, geo, samp)
        assert op.rows >= 4096
        clean = op.apply(img)
        for snr in (15.0, 25.0):
            meas = pr.simulate_measurement(op, img, snr, seed=3)
            measured = 20 * np.log10(
                np.linalg.norm(clean) / np.linalg.norm(meas.values - clean)
            )
            assert abs(measured - snr) <= 0.5

    def test_zero_image_zero_measurement(self, op16):
        op, img = op16
        zero = img.with_values(np.zeros(op.cols))
        meas = pr.simulate_measurement(op, zero, 20.0, seed=1)
        np.testing.assert_array_equal(meas.values, 0.0)


class TestOperatorFiles:
    def test_operator_roundtrip(self, op16, tmp_path):
        op, _ = op16
        path = tmp_path / "op.path"
        fileio.write_operator(path, op)
        back = fileio.read_operator(path)
        assert back.rows == op.rows and back.cols == op.cols
        np.testing.assert_array_equal(back.matrix.data, op.matrix.data)
        np.testing.assert_array_equal(back.matrix.indices, op.matrix.indices)
        np.testing.assert_array_equal(back.matrix.indptr, op.matrix.indptr)
        assert back.scale == op.scale
        assert back.sampling.dt_us == op.sampling.dt_us

    def test_measurement_roundtrip(self, op16, tmp_path):
        op, img = op16
        meas = pr.simulate_measurement(op, img, 18.0, seed=4)
        path = tmp_path / "m.patm"
        fileio.write_measurement(path, meas)
        back = fileio.read_measurement(path)
        np.testing.assert_array_equal(back.values, meas.values)
        assert back.snr_db == 18.0
        assert back.noise_seed == 4
        assert back.geometry.count == op.geometry.count
        assert back.sampling.mt == op.sampling.mt

    def test_infinite_snr_roundtrips(self, op16, tmp_path):
        op, img = op16
        meas = pr.simulate_measurement(op, img, np.inf)
        path = tmp_path / "m.patm"
        fileio.write_measurement(path, meas)
        assert np.isinf(fileio.read_measurement(path).snr_db)
