import numpy as np
import pytest

import patrec as pr
from patrec.admm import AdmmConfig
from patrec.errors import DimensionMismatch
from patrec.metrics import SsimConfig, default_lambda_grid

from conftest import blob_image


def ssim_windowed_oracle(x, y, window=11, sigma=1.5, k1=0.01, k2=0.03, drange=1.0):
    """Brute-force reimplementation: explicit loop over valid windows."""
    r = np.arange(window) - (window - 1) / 2.0
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = (k1 * drange) ** 2, (k2 * drange) ** 2
    h, wd = x.shape
    vals = []
    for i in range(h - window + 1):
        for j in range(wd - window + 1):
            px = x[i : i + window, j : j + window]
            py = y[i : i + window, j : j + window]
            mx = (w * px).sum()
            my = (w * py).sum()
            vx = (w * px * px).sum() - mx * mx
            vy = (w * py * py).sum() - my * my
            cxy = (w * px * py).sum() - mx * my
            vals.append(
                ((2 * mx * my + c1) * (2 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return float(np.mean(vals))


class TestSsim:
    def test_identity_is_one(self):
        img = blob_image(32)
        assert pr.ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_checkerboard_low(self):
        n = 32
        yy, xx = np.mgrid[0:n, 0:n]
        board = ((xx // 4 + yy // 4) % 2).astype(float)
        a = pr.ImageGrid(n, n, 0.1, board.ravel())
        b = pr.ImageGrid(n, n, 0.1, (1.0 - board).ravel())
        assert pr.ssim(a, b) < 0.2

    def test_brute_force_window_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.random((16, 16))
        y = np.clip(x + 0.2 * rng.standard_normal((16, 16)), 0, 1)
        a = pr.ImageGrid(16, 16, 0.1, x.ravel())
        b = pr.ImageGrid(16, 16, 0.1, y.ravel())
        cfg = SsimConfig(dynamic_range=1.0)
        expected = ssim_windowed_oracle(x, y)
        assert pr.ssim(a, b, cfg) == pytest.approx(expected, abs=1e-12)

    def test_against_skimage_reference(self):
        from skimage.metrics import structural_similarity

        rng = np.random.default_rng(1)
        x = rng.random((32, 32))
        y = np.clip(x + 0.1 * rng.standard_normal((32, 32)), 0, 1)
        ours = pr.ssim(
            pr.ImageGrid(32, 32, 0.1, x.ravel()),
            pr.ImageGrid(32, 32, 0.1, y.ravel()),
            SsimConfig(dynamic_range=1.0),
        )
        reference = structural_similarity(
            x, y, win_size=11, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=1.0, K1=0.01, K2=0.03,
        )
        assert ours == pytest.approx(reference, abs=1e-4)

    def test_symmetry_with_fixed_range(self):
        rng = np.random.default_rng(2)
        a = pr.ImageGrid(16, 16, 0.1, rng.random(256))
        b = pr.ImageGrid(16, 16, 0.1, rng.random(256))
        cfg = SsimConfig(dynamic_range=1.0)
        assert pr.ssim(a, b, cfg) == pytest.approx(pr.ssim(b, a, cfg), abs=1e-12)

    def test_dimension_mismatch(self):
        a = pr.ImageGrid(16, 16, 0.1, np.zeros(256))
        b = pr.ImageGrid(32, 32, 0.1, np.zeros(1024))
        with pytest.raises(DimensionMismatch):
            pr.ssim(a, b)


FAST_ADMM = AdmmConfig(track_cost=False, max_outer_iter=500,
                       primal_tol=1e-4, dual_tol=1e-4)


@pytest.fixture(scope="module")
def oracle_setup(op24):
    op, img = op24
    m = pr.simulate_measurement(op, img, 20.0, seed=21).values
    return op, img, m


class TestOracleTune:
    def test_single_point_grid(self, oracle_setup):
        op, img, m = oracle_setup
        result = pr.oracle_tune(op, m, img, 0.5, np.array([1e-4]), FAST_ADMM)
        assert result.best_lambda == pytest.approx(1e-4)
        assert len(result.grid) == 1

    def test_constructed_truth_wins_with_perfect_score(self, oracle_setup):
        op, _, m = oracle_setup
        lam_mid = 1e-3
        tight = AdmmConfig(track_cost=False, max_outer_iter=8000,
                           primal_tol=1e-7, dual_tol=1e-7)
        fake_truth, _, _ = pr.admm_solve(op, m, lam_mid, 0.5, 1.0, tight)
        grid = np.array([lam_mid / 10, lam_mid, lam_mid * 10])
        result = pr.oracle_tune(op, m, fake_truth, 0.5, grid, tight)
        assert result.best_lambda == pytest.approx(lam_mid)
        assert result.best_ssim == pytest.approx(1.0, abs=1e-9)

    def test_best_is_max_over_grid(self, oracle_setup):
        op, img, m = oracle_setup
        grid = default_lambda_grid(m, op.rows, points=7)
        result = pr.oracle_tune(op, m, img, 0.5, grid, FAST_ADMM)
        scores = [s for _, s in result.grid]
        assert result.best_ssim == max(scores)
        assert len(result.grid) == 7

    def test_rejects_bad_grids(self, oracle_setup):
        op, img, m = oracle_setup
        with pytest.raises(ValueError):
            pr.oracle_tune(op, m, img, 0.5, np.array([]), FAST_ADMM)
        with pytest.raises(ValueError):
            pr.oracle_tune(op, m, img, 0.5, np.array([1e-3, 1e-4]), FAST_ADMM)


class TestCompareMethods:
    def test_noise_free_all_methods_excellent(self, op24dense):
        op, img = op24dense
        split = pr.split_rows(op, 0.1)
        m = pr.simulate_measurement(op, img, np.inf).values
        scale = float(m @ m) / op.rows
        grid = scale * np.array([1e-6, 1e-4, 1e-2])
        cfg = pr.TrackingConfig(max_rounds=40)
        oracle_admm = AdmmConfig(track_cost=False, max_outer_iter=6000,
                                 primal_tol=1e-5, dual_tol=1e-5)
        row = pr.compare_methods(
            img, split, m, cfg, grid, FAST_ADMM, oracle_admm
        )
        assert row.ssim_ar_tr >= 0.99
        assert row.ssim_ar_o >= 0.99
        assert row.ssim_tv2_o >= 0.99

    def test_csv_row_format(self, op24):
        row = pr.MethodComparison(
            ssim_ar_tr=0.9, ssim_tv2_o=0.8, ssim_ar_o=0.91,
            lambda_tr=1e-4, lambda_ar_o=2e-4, lambda_tv2_o=3e-4,
            rounds=5, converged=True, wall_s=1.0,
        )
        text = row.csv_row("derenzo", 20.0)
        fields = text.split(",")
        assert len(fields) == len(pr.MethodComparison.CSV_FIELDS.split(","))
        assert fields[0] == "derenzo"
        assert float(fields[2]) == pytest.approx(0.9)
