"""Acceptance criteria, one test each, with a printed PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from rsgrasp.calibration import calibrate_finger, r_squared, rmse
from rsgrasp.cli import finger_seed, main
from rsgrasp.harness import run_comparison
from rsgrasp.optimizer import balance_magnitudes, interactive_grasp, torque_optimize
from rsgrasp.scene import BaseMode, GripperConfiguration, ObjectShape, perturb_pose
from rsgrasp.sensor import FingerResponseModel, flux_loss

from test_optimizer import grid_min_twist, simplex_grid_best, unit_normals


@pytest.fixture
def report(capsys):
    def emit(number, ok, elapsed, limit, detail):
        ok = ok and (limit is None or elapsed < limit)
        budget = f" (limit {limit:g} s)" if limit is not None else ""
        with capsys.disabled():
            print(f"\nAC{number} {'PASS' if ok else 'FAIL'} {elapsed:.2f} s{budget}: {detail}")
        return ok
    return emit


def test_ac1_flux_loss(report):
    t0 = time.perf_counter()
    exact = [((1.0, 1.0), 0.0), ((10.0, 1.0), 10.0), ((2.0, 1.0), 10.0 * math.log10(2.0))]
    errors = [abs(flux_loss(*args) - want) for args, want in exact]
    # the printed value is rounded to 10 decimals, so it can only agree to half its last place
    printed = abs(flux_loss(2.0, 1.0) - 3.0102999566)
    rng = np.random.default_rng(1)
    cascade = 0.0
    for _ in range(1000):
        i0, i1, i2 = np.sort(rng.uniform(0.01, 10.0, 3))[::-1]
        cascade = max(cascade, abs(flux_loss(i0, i1) + flux_loss(i1, i2) - flux_loss(i0, i2)))
    ok = max(errors) <= 1e-12 and printed <= 5e-11 and cascade <= 1e-12
    detail = f"closed-form error {max(errors):.1e}, printed-value error {printed:.1e}, cascade {cascade:.1e}"
    assert report(1, ok, time.perf_counter() - t0, 1.0, detail)


def test_ac2_metric_identities(report):
    t0 = time.perf_counter()
    hand = [
        abs(rmse([1, 1, 1], [1, 1, 1])) <= 1e-9,
        abs(rmse([0, 0], [1, 1]) - 1.0) <= 1e-9,
        abs(rmse([1, 2, 3], [2, 2, 2]) - 0.8164965809) <= 1e-9,
        abs(r_squared([1, 2, 3], [1, 2, 3]) - 1.0) <= 1e-9,
        abs(r_squared([1, 2, 3], [2, 2, 2]) - 0.0) <= 1e-9,
        abs(r_squared([1, 2, 3], [3, 2, 1]) + 3.0) <= 1e-9,
    ]
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(2, 200))
        y = rng.normal(0, rng.uniform(0.1, 100), m)
        y_hat = y + rng.normal(0, rng.uniform(0.01, 50), m)
        ss_tot = float(np.sum((y.mean() - y) ** 2))
        worst = max(worst, abs(r_squared(y, y_hat) - (1 - m * rmse(y, y_hat) ** 2 / ss_tot)))
    ok = all(hand) and worst <= 1e-9
    assert report(2, ok, time.perf_counter() - t0, 5.0, f"hand cases {sum(hand)}/6, identity worst {worst:.1e}")


def _calibrate_all(scene, params, noise):
    fingers = [FingerResponseModel.synthetic(int(s), spread=scene.fingers.spread, noise=noise)
               for s in scene.fingers.seeds]
    return [calibrate_finger(scene.objects, f, params.calibration, finger_seed(params.seed, k))[0]
            for k, f in enumerate(fingers, start=1)]


def test_ac3_calibration_quality(report, scene, params):
    t0 = time.perf_counter()
    models = _calibrate_all(scene, params, noise=0.15)
    r2 = [m.metrics["fn_r2"] for m in models]
    sr = [m.metrics["success_rate"] for m in models]
    ok = min(r2) >= 0.88 and min(sr) >= 0.94 and all(m.n_samples == 1600 for m in models)
    detail = "F_n R2 " + ", ".join(f"{v:.4f}" for v in r2) + "; sign success " + ", ".join(f"{v:.4f}" for v in sr)
    assert report(3, ok, time.perf_counter() - t0, 30.0, detail)


def test_ac4_noiseless_recovery(report, scene, params):
    t0 = time.perf_counter()
    r2 = [m.metrics["fn_r2"] for m in _calibrate_all(scene, params, noise=0.0)]
    ok = min(r2) >= 0.999
    assert report(4, ok, time.perf_counter() - t0, 30.0, "F_n R2 " + ", ".join(f"{v:.6f}" for v in r2))


CERT_OBJECTS = [
    ObjectShape("square", (0.04,), name="square"),
    ObjectShape("rectangle", (0.08, 0.04), name="rectangle"),
    ObjectShape("triangle", (0.06,), name="triangle"),
    ObjectShape("circle", (0.03,), name="circle"),
]


def test_ac5_optimizer_certificates(report, hand, scene, params):
    t0 = time.perf_counter()
    opt = params.optimizer
    converged = violations = 0
    worst_tz = worst_imb = 0.0
    for k, obj in enumerate(CERT_OBJECTS):
        rng = np.random.default_rng([params.seed, k])
        for _ in range(20):
            posed = perturb_pose(obj, scene.pose_noise, rng)
            res = interactive_grasp(posed, opt, hand, rng, scene.geometry)
            if not res.converged:
                continue
            converged += 1
            tz = float(np.abs(res.state.torques).max())
            imb = res.state.imbalance
            worst_tz, worst_imb = max(worst_tz, tz), max(worst_imb, imb)
            if tz > opt.torque_tol or imb > opt.force_tol or res.margin_after < res.margin_before - 1e-9:
                violations += 1
    ok = violations == 0 and converged > 0
    detail = (f"{converged}/80 converged, {violations} certificate violations, "
              f"max |T_z| {worst_tz:.4f} N*m, max imbalance {worst_imb:.2e} N")
    assert report(5, ok, time.perf_counter() - t0, 60.0, detail)


def test_ac6_oracle_equivalence(report, hand, params):
    t0 = time.perf_counter()
    opt = params.optimizer
    slope = hand.fingers[0].torsional_stiffness
    tol = 2 * slope * opt.step
    cases = [(ObjectShape("square", (0.04,), theta=math.radians(d), x=dx), BaseMode.LATERAL)
             for d, dx in ((0.0, 0.0), (6.0, 0.002), (-9.0, -0.003))]
    cases += [(ObjectShape("rectangle", (0.08, 0.04), theta=math.radians(d), y=dy), BaseMode.PARALLEL)
              for d, dy in ((0.0, 0.0), (4.0, 0.002), (-8.0, -0.001))]
    gaps = []
    for k, (obj, mode) in enumerate(cases):
        res = torque_optimize(obj, GripperConfiguration.nominal(mode), hand, opt, np.random.default_rng(k))
        final = float(np.abs(res.state.torques).sum())
        gaps.append(abs(final - grid_min_twist(obj, mode, hand)) if res.converged else math.inf)
    normals = unit_normals([0, 90, 180])
    got = balance_magnitudes(normals, 30.0, opt.min_force)
    _, brute = simplex_grid_best(normals, 30.0, opt.min_force, 0.05)
    force_gap = float(np.abs(got - brute).max())
    ok = max(gaps) <= tol and force_gap <= 1e-3
    detail = f"torque gap {max(gaps):.4f} <= {tol:.4f} N*m, friction gap {force_gap:.1e} N"
    assert report(6, ok, time.perf_counter() - t0, 120.0, detail)


def test_ac7_table_direction(report, hand, scene, params):
    t0 = time.perf_counter()
    n = 20
    comp = run_comparison(scene.objects, n, params.optimizer, params.disturbance, hand, params.seed,
                          scene.pose_noise, scene.geometry)
    failures = []
    for row in comp.rows:
        conv, inter = row["conventional_successes"], row["interactive_successes"]
        if inter < conv:
            failures.append(f"{row['object']} interactive < conventional")
    for name in ("cube", "cuboid", "potted_meat_can"):
        row = comp.row(name)
        if row["interactive_successes"] - row["conventional_successes"] < 0.4 * n:
            failures.append(f"{name} gap below 40 points")
    for obj in scene.objects:
        if obj.kind == "circle":
            row = comp.row(obj.name)
            if abs(row["interactive_successes"] - row["conventional_successes"]) > 1:
                failures.append(f"{obj.name} counts differ by more than 1")
    table = "conventional/interactive " + "; ".join(f"{r['object']} {r['conventional_successes']}/{r['interactive_successes']}" for r in comp.rows)
    ok = not failures
    assert report(7, ok, time.perf_counter() - t0, 180.0, (", ".join(failures) + " | " if failures else "") + table)


def test_ac8_determinism(report, tmp_path, params):
    t0 = time.perf_counter()
    models = tmp_path / "models"
    assert main(["calibrate", "--models", str(models), "--out", str(tmp_path)]) == 0
    outs = []
    for run in ("first", "second"):
        out = tmp_path / run
        assert main(["evaluate", "--models", str(models), "--out", str(out), "--seed", str(params.seed)]) == 0
        outs.append(out)
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in ("results.json", "table.csv"))
    assert report(8, same, time.perf_counter() - t0, None, "results.json and table.csv byte-identical" if same
                  else "outputs differ")
