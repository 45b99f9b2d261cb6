"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line with the measured
numbers; the lines are repeated in the pytest terminal summary.  The
full-size Monte Carlo runs take a few minutes in total.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from conftest import report
from mekfkit import engine
from mekfkit.alignment import SyntheticCase, synthetic_sweep
from mekfkit.checks import check_conservation, check_se3_not_affine, check_so3_affine, check_transformed_update
from mekfkit.cli import EXIT_OK, main
from mekfkit.error_models import NoiseConfig
from mekfkit.harness import preset_scenario_a, preset_scenario_b, run_scenario, simulate_block

INVARIANT = ("IMEKF", "IGEKF", "MEKF-ref", "QRIEKF")
CLASSIC = ("MEKF", "GEKF")


def _verdict(n, clauses, detail):
    ok = all(clauses.values())
    failed = [k for k, v in clauses.items() if not v]
    tail = f"; failed: {', '.join(failed)}" if failed else ""
    report(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail}{tail})")
    return ok, failed


def _mc(out, *extra):
    t = time.perf_counter()
    rc = main(["mc", "--preset", "paper-a", "--out", str(out), *extra])
    return rc, time.perf_counter() - t


@pytest.fixture(scope="module")
def scenario_a(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenario_a")
    rc, elapsed = _mc(out)
    summary = json.loads((out / "summary.json").read_text())
    return out, rc, elapsed, summary


def test_criterion_1_group_affine():
    rng = np.random.default_rng(0)
    t = time.perf_counter()
    so3 = check_so3_affine(rng, trials=1000)
    se3 = check_se3_not_affine(rng, trials=100)
    elapsed = time.perf_counter() - t
    ok, failed = _verdict(1, {"SO(3) residual": so3.value < 1e-12, "SE(3) residual": se3.value > 1e-3,
                              "runtime": elapsed < 1.0},
                          f"SO(3) max residual {so3.value:.2e} < 1e-12, SE(3) min residual "
                          f"{se3.value:.3g} > 1e-3, {elapsed:.2f} s < 1 s")
    assert ok, failed


def test_criterion_2_transformed_update_equivalence():
    t = time.perf_counter()
    res = check_transformed_update(np.random.default_rng(1), n=100)
    elapsed = time.perf_counter() - t
    ok, failed = _verdict(2, {"deviation": res.value < 1e-9, "runtime": elapsed < 1.0},
                          f"max deviation in q, beta, P over 100 states (ref and left SE(3)) "
                          f"{res.value:.2e} < 1e-9, {elapsed:.2f} s < 1 s")
    assert ok, failed


def test_criterion_3_scenario_a(scenario_a):
    _, rc, elapsed, summary = scenario_a
    final = {f: summary["final"][f]["final_att_rmse_conventional_deg"] for f in engine.PAPER_FILTERS}
    classic_floor = min(final[f] for f in CLASSIC)
    inv = [final[f] for f in INVARIANT]
    spread = max(inv) / min(inv)
    clauses = {"exit status": rc == EXIT_OK,
               **{f"{f} <= half of MEKF and GEKF": final[f] <= 0.5 * classic_floor for f in INVARIANT},
               "invariant filters within 2x": spread <= 2.0,
               "runtime": elapsed < 120.0}
    vals = ", ".join(f"{f} {final[f]:.3g}" for f in engine.PAPER_FILTERS)
    ok, failed = _verdict(3, clauses, f"final RMSE deg at 60 min: {vals}; half of classic floor "
                          f"{0.5 * classic_floor:.3g}; invariant spread {spread:.3g}x <= 2x; {elapsed:.0f} s < 120 s")
    assert ok, failed


def test_criterion_4_scenario_b():
    s = preset_scenario_b()
    t = time.perf_counter()
    res = run_scenario(s, workers=os.cpu_count() or 1)
    elapsed = time.perf_counter() - t
    att = {f: res.att_conventional[res.index(f)] for f in s.filters}
    before = res.t < 4800.0
    best = {f: float(np.nanmin(att[f][before])) for f in INVARIANT}
    mekf_end = float(att["MEKF"][-1])
    clauses = {**{f"{f} below 5 deg": best[f] < 5.0 for f in INVARIANT},
               "MEKF above 20 deg at 80 min": mekf_end > 20.0,
               "runtime": elapsed < 180.0}
    vals = ", ".join(f"{f} {best[f]:.3g}" for f in INVARIANT)
    ok, failed = _verdict(4, clauses, f"lowest RMSE deg before 80 min: {vals} (< 5); MEKF at 80 min "
                          f"{mekf_end:.3g} > 20; {elapsed:.0f} s < 180 s")
    assert ok, failed


def test_criterion_5_small_error_consistency():
    s = preset_scenario_a(att_std_deg=5.0)
    res = run_scenario(s, workers=os.cpu_count() or 1)
    tail = res.t >= res.t[-1] - 1200.0
    steady = {f: float(res.att_conventional[res.index(f)][tail].mean()) for f in s.filters}
    diverged = {f: int(res.diverged[res.index(f), -1]) for f in s.filters}
    ratio = max(steady.values()) / min(steady.values())
    clauses = {**{f"{f} converged": diverged[f] == 0 and steady[f] < 1.0 for f in s.filters},
               "steady states within 20%": ratio <= 1.2}
    vals = ", ".join(f"{f} {v:.3g}" for f, v in steady.items())
    ok, failed = _verdict(5, clauses, f"steady RMSE deg over the last 20 min: {vals}; max/min "
                          f"{ratio:.3f} <= 1.2; diverged runs {sum(diverged.values())}")
    assert ok, failed


def test_criterion_6_zero_noise():
    s = preset_scenario_a(runs=1, att_std_deg=None, q0_true=(0.0, 0.0, 0.0, 1.0), bias_std_deg_h=None,
                          noise=NoiseConfig(0.0, 0.0), sensor_noise=False, filters=tuple(engine.FILTERS))
    res = simulate_block(s, [0])
    worst = {f: math.radians(float(res.geodesic[i].max())) for i, f in enumerate(s.filters)}
    clauses = {f"{f} < 1e-6 rad": v < 1e-6 for f, v in worst.items()}
    clauses["duration"] = res.t[-1] == 3600.0
    ok, failed = _verdict(6, clauses, f"max attitude error over 60 min {max(worst.values()):.2e} rad < 1e-6 "
                          f"for {len(worst)} filter configurations")
    assert ok, failed


def test_criterion_7_conservation():
    res = check_conservation(steps=1000, dt=1.0)
    ok, failed = _verdict(7, {"drift": res.value < 1e-8},
                          f"max relative drift of energy and |J w| over 1000 RK4 steps {res.value:.2e} < 1e-8")
    assert ok, failed


def test_criterion_8_alignment_sweep():
    t = time.perf_counter()
    res = synthetic_sweep(SyntheticCase())
    elapsed = time.perf_counter() - t
    steady = res.steady_yaw("IMEKF")
    reach = res.reach_time("IMEKF")
    ratio = float(np.nanmax(reach) / np.nanmin(reach)) if np.all(np.isfinite(reach)) else math.inf
    mekf_reach = res.reach_time("MEKF")
    wide = np.array(res.sweep_deg) >= 150
    clauses = {"IMEKF steady yaw < 1 deg": bool(np.all(steady < 1.0)),
               "IMEKF time-to-5 deg within 2x": ratio < 2.0,
               "MEKF never reaches 5 deg at >= 150 deg": bool(np.all(np.isnan(mekf_reach[wide]))),
               "runtime": elapsed < 60.0}
    sweep = ", ".join(f"{m:g}:{r:.0f}s" for m, r in zip(res.sweep_deg, reach))
    ok, failed = _verdict(8, clauses, f"IMEKF max steady yaw {steady.max():.3g} deg < 1; IMEKF time-to-5 deg "
                          f"{sweep}, ratio {ratio:.3g} < 2; MEKF reach at >= 150 deg "
                          f"{mekf_reach[wide].tolist()}; {elapsed:.1f} s < 60 s")
    assert ok, failed


def test_criterion_9_determinism(scenario_a, tmp_path):
    first, rc0, _, _ = scenario_a
    rc1, _ = _mc(tmp_path / "repeat")
    rc2, _ = _mc(tmp_path / "parallel", "--workers", str(max(2, os.cpu_count() or 1)))
    same = {}
    for name in ("rmse.csv", "rmse_conventional.csv"):
        ref = (first / name).read_bytes()
        same[f"{name} repeat"] = (tmp_path / "repeat" / name).read_bytes() == ref
        same[f"{name} parallel"] = (tmp_path / "parallel" / name).read_bytes() == ref
    clauses = {"exit status": rc0 == rc1 == rc2 == EXIT_OK, **same}
    ok, failed = _verdict(9, clauses, "scenario A CSVs byte-identical on repeat and with parallel workers")
    assert ok, failed


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
