"""Command-line experiment harness.

Subcommands: phantom | simulate | reconstruct | track | oracle | grid |
evaluate. Configuration comes from defaults, then an optional key=value
config file, then flags. Exit codes: 0 success, 2 configuration error,
3 solver non-convergence, 4 I/O error.
"""

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fileio
from .admm import AdmmConfig, admm_solve
from .errors import NonConvergence, PatrecError, UnreadableFile
from .forward import (
    TimeSampling,
    TransducerGeometry,
    build_operator,
    simulate_measurement,
    split_rows,
)
from .grid import ImageGrid, scanline
from .metrics import MethodComparison, compare_methods, oracle_tune, ssim
from .phantoms import PhantomSpec, generate_phantom
from .tracking import TrackingConfig, track_and_reconstruct

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4


@dataclass
class ExperimentPlan:
    """One experiment grid: phantoms x SNR levels, all methods."""

    phantoms: list[str] = field(default_factory=lambda: ["bloodvessel", "derenzo", "pattext"])
    size: int = 128
    snr_list_db: list[float] = field(default_factory=lambda: [15.0, 20.0, 25.0, 30.0])
    transducers: int = 16
    radius_mm: float = 9.5
    samples: int = 512
    c0_mm_per_us: float = 1.5
    epsilon: float = 0.06
    delta: float = 0.1
    k: float = 1.05
    m_iters: int = 50
    epsilon_t: float = 1e-4
    alpha: float = 0.5
    upper: float = 1.0
    seed: int = 0
    jobs: int = 1
    max_rounds: int = 120
    removal_scheme: str = "block"
    oracle_points: int = 25
    admm_max_iter: int = 800
    admm_tol: float = 1e-5
    out: str = "out"

    def tracking_config(self) -> TrackingConfig:
        return TrackingConfig(
            epsilon=self.epsilon,
            delta=self.delta,
            k=self.k,
            m_iters=self.m_iters,
            epsilon_t=self.epsilon_t,
            alpha=self.alpha,
            upper=self.upper,
            max_rounds=self.max_rounds,
        )

    def admm_config(self) -> AdmmConfig:
        return AdmmConfig(
            max_outer_iter=self.admm_max_iter,
            primal_tol=self.admm_tol,
            dual_tol=self.admm_tol,
            track_cost=False,
        )


_PLAN_TYPES = {f.name: f.type for f in ExperimentPlan.__dataclass_fields__.values()}


def read_config(path) -> dict:
    """Plain 'key = value' lines; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UnreadableFile(str(exc)) from exc
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key] = val
    return values


def _coerce(key: str, val: str):
    if key in ("phantoms",):
        return [p.strip() for p in val.split(",") if p.strip()]
    if key in ("snr_list_db",):
        return [float(p) for p in val.split(",") if p.strip()]
    if key in ("size", "transducers", "samples", "seed", "jobs", "m_iters",
               "max_rounds", "oracle_points", "admm_max_iter"):
        return int(val)
    if key in ("out", "removal_scheme"):
        return val
    return float(val)


def build_plan(args) -> ExperimentPlan:
    plan = ExperimentPlan()
    if getattr(args, "config", None):
        for key, val in read_config(args.config).items():
            if key not in _PLAN_TYPES:
                raise ValueError(f"unknown config key {key!r}")
            plan = replace(plan, **{key: _coerce(key, val)})
    overrides = {}
    mapping = {
        "phantoms": "phantoms", "size": "size", "snr_db_list": "snr_list_db",
        "transducers": "transducers", "radius_mm": "radius_mm",
        "samples": "samples", "epsilon": "epsilon", "delta": "delta",
        "k": "k", "M": "m_iters", "epsilon_t": "epsilon_t", "alpha": "alpha",
        "u": "upper", "seed": "seed", "jobs": "jobs", "out": "out",
        "max_rounds": "max_rounds", "oracle_points": "oracle_points",
        "admm_max_iter": "admm_max_iter", "admm_tol": "admm_tol",
        "removal_scheme": "removal_scheme",
    }
    for flag, name in mapping.items():
        val = getattr(args, flag, None)
        if val is not None:
            overrides[name] = val
    plan = replace(plan, **overrides)
    if not plan.phantoms or not plan.snr_list_db:
        raise ValueError("plan needs at least one phantom and one SNR level")
    return plan


def _acquisition(plan: ExperimentPlan, grid: ImageGrid):
    geometry = TransducerGeometry.ring(plan.transducers, plan.radius_mm)
    sampling = TimeSampling.cover(geometry, grid, plan.samples, plan.c0_mm_per_us)
    return geometry, sampling


def _geometry_hash(plan: ExperimentPlan) -> str:
    key = (
        f"{plan.size}:{plan.transducers}:{plan.radius_mm}:{plan.samples}:"
        f"{plan.c0_mm_per_us}"
    )
    return hashlib.sha1(key.encode()).hexdigest()[:16]


def cached_operator(plan: ExperimentPlan, grid: ImageGrid, cache_dir: Path):
    """Build or reload the forward operator keyed by acquisition geometry."""
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"operator_{_geometry_hash(plan)}.path"
    if path.is_file():
        try:
            op = fileio.read_operator(path)
            log.info("operator cache hit: %s", path)
            return op
        except UnreadableFile:
            log.warning("operator cache unreadable, rebuilding: %s", path)
    geometry, sampling = _acquisition(plan, grid)
    op = build_operator(grid, geometry, sampling)
    fileio.write_operator(path, op)
    return op


def _write_image(out_dir: Path, name: str, img: ImageGrid) -> None:
    fileio.write_pgm16(out_dir / f"{name}.pgm", img)
    fileio.write_grid_raw(out_dir / f"{name}.patg", img)


def _write_probe_log(path, probes) -> None:
    with open(path, "w") as fh:
        fh.write(
            "round,probe_index,lambda,s_tilde,data_term_reduced,"
            "data_term_full,reg_term,cumulative_admm_iters\n"
        )
        for p in probes:
            fh.write(
                f"{p.round_index},{p.probe_index},{p.lam:.9e},{p.s_tilde:.9e},"
                f"{p.data_term_reduced:.9e},{p.data_term_full:.9e},"
                f"{p.reg_term:.9e},{p.cumulative_admm_iters}\n"
            )


def _write_trace(path, state) -> None:
    with open(path, "w") as fh:
        fh.write("iter,cost,primal_res,dual_res\n")
        costs = state.costs or [float("nan")] * len(state.primal_residuals)
        for i, (c, p, d) in enumerate(
            zip(costs, state.primal_residuals, state.dual_residuals), 1
        ):
            fh.write(f"{i},{c:.9e},{p:.9e},{d:.9e}\n")


def cell_seed(global_seed: int, phantom_index: int, snr_index: int) -> int:
    return global_seed * 1_000_003 + phantom_index * 1009 + snr_index


def run_cell(plan: ExperimentPlan, phantom_name: str, phantom_index: int,
             snr_db: float, snr_index: int, out_root: Path) -> dict:
    """One (phantom, SNR) cell; resumable through its result.json."""
    cell_dir = out_root / "cells" / f"{phantom_name.replace(':', '_')}_{snr_db:g}db"
    result_path = cell_dir / "result.json"
    if result_path.is_file():
        log.info("cell cache hit: %s", result_path)
        return json.loads(result_path.read_text())
    cell_dir.mkdir(parents=True, exist_ok=True)
    spec = PhantomSpec.parse(phantom_name, plan.size, seed=plan.seed)
    truth = generate_phantom(spec)
    op = cached_operator(plan, truth, out_root / "ops")
    split = split_rows(op, plan.delta, scheme=plan.removal_scheme)
    seed = cell_seed(plan.seed, phantom_index, snr_index)
    meas = simulate_measurement(op, truth, snr_db, seed=seed)
    fileio.write_measurement(cell_dir / "measurement.patm", meas)
    comparison = compare_methods(
        truth,
        split,
        meas.values,
        tracking_cfg=plan.tracking_config(),
        oracle_grid=None if plan.oracle_points == 25 else _oracle_grid(plan, meas, op),
        admm_cfg_tracking=plan.admm_config(),
        admm_cfg_oracle=plan.admm_config(),
    )
    _write_image(cell_dir, "truth", truth)
    _write_image(cell_dir, "recon_ar_tr", comparison.recon_ar_tr)
    _write_image(cell_dir, "recon_ar_o", comparison.recon_ar_o)
    _write_image(cell_dir, "recon_tv2_o", comparison.recon_tv2_o)
    _write_probe_log(cell_dir / "probes.csv", comparison.tracking.probes)
    mid_row = truth.ny // 2
    with open(cell_dir / "scanlines.csv", "w") as fh:
        fh.write("x_mm,truth,ar_tr,tv2_o,ar_o\n")
        rows = [
            scanline(truth, mid_row),
            scanline(comparison.recon_ar_tr, mid_row),
            scanline(comparison.recon_tv2_o, mid_row),
            scanline(comparison.recon_ar_o, mid_row),
        ]
        for i in range(truth.nx):
            fh.write(
                f"{rows[0][i, 0]:.6f},{rows[0][i, 1]:.9e},{rows[1][i, 1]:.9e},"
                f"{rows[2][i, 1]:.9e},{rows[3][i, 1]:.9e}\n"
            )
    result = {
        "phantom": phantom_name,
        "snr_db": snr_db,
        "ssim_ar_tr": comparison.ssim_ar_tr,
        "ssim_tv2_o": comparison.ssim_tv2_o,
        "ssim_ar_o": comparison.ssim_ar_o,
        "lambda_tr": comparison.lambda_tr,
        "lambda_ar_o": comparison.lambda_ar_o,
        "lambda_tv2_o": comparison.lambda_tv2_o,
        "rounds": comparison.rounds,
        "converged": comparison.converged,
        "wall_s": comparison.wall_s,
        "seed": seed,
    }
    result_path.write_text(json.dumps(result, indent=1))
    return result


def _oracle_grid(plan: ExperimentPlan, meas, op):
    from .metrics import default_lambda_grid

    return default_lambda_grid(meas.values, op.rows, plan.oracle_points)


def run_grid(plan: ExperimentPlan) -> Path:
    out_root = Path(plan.out)
    out_root.mkdir(parents=True, exist_ok=True)
    cells = [
        (name, pi, snr, si)
        for pi, name in enumerate(plan.phantoms)
        for si, snr in enumerate(plan.snr_list_db)
    ]
    results = []
    if plan.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            futures = [
                pool.submit(run_cell, plan, name, pi, snr, si, out_root)
                for name, pi, snr, si in cells
            ]
            results = [f.result() for f in futures]
    else:
        for name, pi, snr, si in cells:
            t0 = time.perf_counter()
            results.append(run_cell(plan, name, pi, snr, si, out_root))
            log.info(
                "cell %s %gdB done in %.1fs", name, snr, time.perf_counter() - t0
            )
    csv_path = out_root / "results.csv"
    with open(csv_path, "w") as fh:
        fh.write(MethodComparison.CSV_FIELDS + "\n")
        for r in results:
            fh.write(
                f"{r['phantom']},{r['snr_db']:g},{r['ssim_ar_tr']:.6f},"
                f"{r['ssim_tv2_o']:.6f},{r['ssim_ar_o']:.6f},"
                f"{r['lambda_tr']:.9e},{r['lambda_ar_o']:.9e},"
                f"{r['lambda_tv2_o']:.9e},{r['rounds']},{r['wall_s']:.3f}\n"
            )
    return csv_path


def _load_measurement_with_operator(args, plan):
    meas = fileio.read_measurement(args.measurement)
    grid = ImageGrid(
        meas.nx, meas.ny, meas.spacing_mm, np.zeros(meas.nx * meas.ny)
    )
    plan = replace(
        plan,
        size=meas.nx,
        transducers=meas.geometry.count,
        radius_mm=meas.geometry.radius_mm,
        samples=meas.sampling.mt,
        c0_mm_per_us=meas.sampling.c0_mm_per_us,
    )
    op = cached_operator(plan, grid, Path(plan.out) / "ops")
    return meas, op, plan


# ---------------------------------------------------------------- commands


def cmd_phantom(args) -> int:
    plan = build_plan(args)
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in plan.phantoms:
        spec = PhantomSpec.parse(name, plan.size, seed=plan.seed)
        img = generate_phantom(spec)
        _write_image(out, spec.name, img)
        print(f"wrote {out / spec.name}.pgm and .patg")
    return EXIT_OK


def cmd_simulate(args) -> int:
    plan = build_plan(args)
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = PhantomSpec.parse(plan.phantoms[0], plan.size, seed=plan.seed)
    truth = generate_phantom(spec)
    op = cached_operator(plan, truth, out / "ops")
    snr = plan.snr_list_db[0] if args.snr_db is None else args.snr_db
    meas = simulate_measurement(op, truth, snr, seed=plan.seed)
    target = out / f"{spec.name}_{snr:g}db.patm"
    fileio.write_measurement(target, meas)
    _write_image(out, spec.name, truth)
    print(f"wrote {target}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    plan = build_plan(args)
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    meas, op, plan = _load_measurement_with_operator(args, plan)
    if args.method == "ar-tr":
        split = split_rows(op, plan.delta, scheme=plan.removal_scheme)
        result = track_and_reconstruct(
            split, meas.values, plan.tracking_config(), plan.admm_config()
        )
        _write_image(out, "recon_ar_tr", result.x_final)
        _write_probe_log(out / "probes.csv", result.probes)
        print(
            f"tracked lambda {result.lambda_final:.6e} rounds "
            f"{result.outer_rounds} converged {result.converged}"
        )
        return EXIT_OK if result.converged else EXIT_NONCONVERGENCE
    if args.reg_lambda is None:
        raise ValueError(f"method {args.method} needs --lambda")
    alpha = plan.alpha if args.method == "ar" else 0.0
    img, cost, state = admm_solve(
        op, meas.values, args.reg_lambda, alpha, plan.upper, plan.admm_config()
    )
    _write_image(out, f"recon_{args.method}", img)
    if args.trace:
        _write_trace(out / "trace.csv", state)
    print(
        f"{args.method}: data {cost.data_term:.6e} reg {cost.reg_term:.6e} "
        f"converged {state.converged}"
    )
    return EXIT_OK if state.converged else EXIT_NONCONVERGENCE


def cmd_track(args) -> int:
    args.method = "ar-tr"
    return cmd_reconstruct(args)


def cmd_oracle(args) -> int:
    plan = build_plan(args)
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    meas, op, plan = _load_measurement_with_operator(args, plan)
    truth = fileio.read_image_any(args.truth, size=plan.size)
    alpha = plan.alpha if args.regularizer == "ar" else 0.0
    from .metrics import default_lambda_grid

    grid = default_lambda_grid(meas.values, op.rows, plan.oracle_points)
    result = oracle_tune(
        op, meas.values, truth, alpha, grid, admm_cfg=plan.admm_config()
    )
    with open(out / f"oracle_{args.regularizer}.csv", "w") as fh:
        fh.write("lambda,ssim\n")
        for lam, score in result.grid:
            fh.write(f"{lam:.9e},{score:.6f}\n")
    _write_image(out, f"recon_{args.regularizer}_oracle", result.best_image)
    print(f"best lambda {result.best_lambda:.6e} ssim {result.best_ssim:.4f}")
    return EXIT_OK


def cmd_grid(args) -> int:
    plan = build_plan(args)
    csv_path = run_grid(plan)
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    truth = fileio.read_image_any(args.truth)
    recon = fileio.read_image_any(args.recon)
    score = ssim(recon, truth)
    print(f"ssim {score:.6f}")
    if args.row is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        t_line = scanline(truth, args.row)
        r_line = scanline(recon, args.row)
        target = out / f"scanline_row{args.row}.csv"
        with open(target, "w") as fh:
            fh.write("x_mm,truth,recon\n")
            for i in range(truth.nx):
                fh.write(f"{t_line[i,0]:.6f},{t_line[i,1]:.9e},{r_line[i,1]:.9e}\n")
        print(f"wrote {target}")
    return EXIT_OK


def _add_plan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--phantoms", type=lambda s: [x.strip() for x in s.split(",")],
                   help="comma list: derenzo,bloodvessel,pattext,file:PATH")
    p.add_argument("--size", type=int, help="grid size in pixels")
    p.add_argument("--snr-db-list", dest="snr_db_list",
                   type=lambda s: [float(x) for x in s.split(",")])
    p.add_argument("--transducers", type=int)
    p.add_argument("--radius-mm", dest="radius_mm", type=float)
    p.add_argument("--samples", type=int, help="time samples per transducer")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--snr-db", dest="snr_db", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--M", dest="M", type=int)
    p.add_argument("--epsilon-t", dest="epsilon_t", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--u", dest="u", type=float)
    p.add_argument("--max-rounds", dest="max_rounds", type=int)
    p.add_argument("--oracle-points", dest="oracle_points", type=int)
    p.add_argument("--admm-max-iter", dest="admm_max_iter", type=int)
    p.add_argument("--admm-tol", dest="admm_tol", type=float)
    p.add_argument("--removal-scheme", dest="removal_scheme",
                   choices=["stride", "random", "tail", "block"])
    p.add_argument("--trace", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patrec",
        description="Model-based photoacoustic tomography reconstruction",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate phantom images")
    _add_plan_flags(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("simulate", help="simulate a noisy measurement")
    _add_plan_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="reconstruct from a measurement file")
    _add_plan_flags(p)
    p.add_argument("--measurement", required=True)
    p.add_argument("--method", choices=["ar", "tv2", "ar-tr"], default="ar")
    p.add_argument("--lambda", dest="reg_lambda", type=float)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("track", help="reconstruct with weight tracking")
    _add_plan_flags(p)
    p.add_argument("--measurement", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("oracle", help="oracle-tune lambda against a known truth")
    _add_plan_flags(p)
    p.add_argument("--measurement", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--regularizer", choices=["ar", "tv2"], default="ar")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("grid", help="run the full experiment grid")
    _add_plan_flags(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("evaluate", help="score a reconstruction against truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--row", type=int)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UnreadableFile, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NonConvergence as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ValueError, PatrecError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
