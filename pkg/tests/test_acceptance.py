"""Acceptance run: the eleven criteria at full size, one status line each."""

import time

import pytest
from test_oracles import CHECKS, TOLERANCES

from zyglab.experiments import (
    AlmostOrthConfig,
    BmoNormConfig,
    CalderonRunConfig,
    CounterexampleConfig,
    EquivalenceConfig,
    ExpLogConfig,
    JnTailConfig,
    LowerBoundConfig,
    PlancherelConfig,
    UpperSweepConfig,
    run_almost_orth,
    run_bmo_norm,
    run_calderon,
    run_counterexample,
    run_equivalence,
    run_exp_log,
    run_jn_tail,
    run_lower_bound,
    run_plancherel,
    run_upper_sweep,
)


@pytest.fixture
def report_line(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
    return emit


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def failing(rep):
    return [k for k, v in rep.checks.items() if not v]


def test_criterion_01_bmo_of_x1(report_line):
    rep, dt = timed(run_bmo_norm, BmoNormConfig(a_values=(1.0, 2.0, 4.0), n=64))
    means, osc = rep.metrics["means"], rep.metrics["oscillations"]
    ok = rep.passed and dt < 5
    report_line(1, "bmo of x1", ok, f"means={[round(m, 4) for m in means]} "
                f"osc={[round(o, 4) for o in osc]} time={dt:.1f}s")
    assert rep.passed, failing(rep)
    assert dt < 5


def test_criterion_02_plancherel(report_line):
    rep, dt = timed(run_plancherel, PlancherelConfig(n=64, samples=20, tol=1e-6))
    err = rep.metrics["max_relative_error"]
    ok = err <= 1e-6 and dt < 30
    report_line(2, "Plancherel", ok, f"max rel error={err:.2e} time={dt:.1f}s")
    assert err <= 1e-6
    assert dt < 30


def test_criterion_03_weighted_equivalence(report_line):
    rep, dt = timed(run_equivalence, EquivalenceConfig(n=64, samples=20))
    spans = {k[7:-1]: (round(v["min"], 3), round(v["max"], 3), round(v["char"], 3))
             for k, v in rep.metrics.items() if k.startswith("ratios[")}
    ok = rep.passed and len(spans) == 3 and dt < 120
    report_line(3, "S/g weighted equivalence", ok, f"(min, max, [w]) per weight={spans} time={dt:.1f}s")
    assert rep.passed, failing(rep)
    assert len(spans) == 3
    assert dt < 120


def test_criterion_04_calderon(report_line):
    rep, dt = timed(run_calderon, CalderonRunConfig(n=32))
    m = rep.metrics
    ok = rep.passed and dt < 180
    report_line(4, "Calderon contraction", ok,
                f"norms={ {k: round(v, 4) for k, v in m['norms'].items()} } N0={m['N0']} "
                f"residual={m.get('residual', float('nan')):.1e} time={dt:.1f}s")
    assert rep.passed, failing(rep)
    assert dt < 180


def test_criterion_05_almost_orthogonality(report_line):
    rep, dt = timed(run_almost_orth, AlmostOrthConfig(max_offset=4))
    m = rep.metrics
    ok = m["slope"] <= -0.9 and m["r2"] >= 0.9 and dt < 120
    report_line(5, "almost orthogonality", ok, f"slope={m['slope']:.3f} R2={m['r2']:.3f} time={dt:.1f}s")
    assert m["slope"] <= -0.9 and m["r2"] >= 0.9
    assert dt < 120


def test_criterion_06_john_nirenberg(report_line):
    rep = run_jn_tail(JnTailConfig())
    m = rep.metrics
    ok = rep.passed
    report_line(6, "John-Nirenberg tail", ok,
                f"R2={m['base']['r_squared']:.4f} rescale factor={m['rescale_factor']:.4f}")
    assert m["base"]["r_squared"] >= 0.95
    assert abs(m["rescale_factor"] - 1) <= 0.05


def test_criterion_07_exp_log(report_line):
    rep = run_exp_log(ExpLogConfig())
    i = [k for k in rep.checks if k.startswith("(i)")]
    ii = [k for k in rep.checks if k.startswith("(ii)")]
    ok = rep.passed and len(i) == 5 and len(ii) == 5
    report_line(7, "exp-log link", ok, f"(i) {sum(rep.checks[k] for k in i)}/5 weights, "
                f"(ii) {sum(rep.checks[k] for k in ii)}/5 symbols")
    assert len(i) == 5 and len(ii) == 5
    assert rep.passed, failing(rep)


def test_criterion_08_lower_bound(report_line):
    rep, dt = timed(run_lower_bound, LowerBoundConfig(n=32, trials=5))
    rows = rep.curves["trials"][1]
    floors = [r[1] for r in rows]
    margins = [r[2] / r[3] for r in rows]
    ok = rep.passed and len(rows) == 5 and dt < 120
    report_line(8, "median lower bound", ok, f"min floor ratio={min(floors):.3f} "
                f"min left/bound={min(margins):.3g} time={dt:.1f}s")
    assert len(rows) == 5 and min(floors) >= 1
    assert all(r[2] >= r[3] for r in rows)
    assert rep.passed, failing(rep)
    assert dt < 120


def test_criterion_09_counterexample(report_line):
    rep = run_counterexample(CounterexampleConfig(a_values=(1.0, 2.0, 4.0, 8.0)))
    m = rep.metrics
    var, slope = m["sup_variation"], m["oscillation_slope"]
    ok = var < 0.10 and abs(slope - 0.25) <= 0.01
    report_line(9, "Ricci-Stein counterexample", ok,
                f"sup|d1 K^| {m['sup_d1_symbol']:.4g} -> {m['sup_d1_symbol_wider']:.4g} "
                f"(variation {var:.1%}) slope={slope:.4f}")
    assert abs(slope - 0.25) <= 0.01
    assert var < 0.10


def test_criterion_10_oracles(report_line):
    t0 = time.perf_counter()
    errs = {name: max(check(seed) for seed in (0, 1)) for name, check in CHECKS.items()}
    dt = time.perf_counter() - t0
    bad = [n for n, e in errs.items() if e > TOLERANCES[n]]
    ok = not bad and dt < 60
    report_line(10, "oracle equivalences", ok,
                " ".join(f"{n}={e:.1e}" for n, e in errs.items()) + f" time={dt:.1f}s")
    assert not bad, bad
    assert dt < 60


def test_criterion_11_upper_uniformity(report_line):
    rep = run_upper_sweep(UpperSweepConfig(symbols=4))
    spreads = rep.metrics["spreads"]
    worst = max(spreads.values())
    ok = worst <= 3 and len(rep.metrics["rows"]) == 4
    report_line(11, "upper-bound uniformity", ok, f"max/min ratio={worst:.3f}")
    assert len(rep.metrics["rows"]) == 4
    assert worst <= 3
