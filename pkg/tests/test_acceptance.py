"""Acceptance suite.

Each test checks one criterion at its stated tolerance and prints a single
``criterion N: PASS|FAIL`` line with the measured values.  Run directly with
``python tests/test_acceptance.py`` or through pytest.
"""

import math
import sys

import numpy as np
import pytest

from condint.cli import dumps_json
from condint.intervals import build_interval_2ip, build_interval_sta, default_split_plan
from condint.metrics import (
    StepCdf,
    d_bounded_lipschitz,
    d_kolmogorov,
    d_levy,
    generalized_inverse,
    point_mass,
)
from condint.models import (
    Ar1Params,
    Garch11Params,
    TimeSeries,
    TruncationConfig,
    get_model,
    simulate_ar1,
    simulate_garch11,
)
from condint.montecarlo import (
    ExperimentConfig,
    run_coverage_2ip,
    run_coverage_spl,
    run_equivalence,
    run_merging,
    run_negligibility,
)

SEED = 42
AR1 = {"beta": 0.5, "noise_sd": 1.0}
GARCH = {"omega": 0.1, "alpha": 0.1, "beta": 0.8}
GRID = (500, 2000, 8000)


def config(kind, model, params, T, reps, **kw):
    return ExperimentConfig(kind=kind, model=model, params=params, T=T, reps=reps, gamma=0.1, seed=SEED, **kw)


def report(capsys, number, checks):
    """Print one verdict line and assert every named check."""
    ok = all(passed for passed, _ in checks)
    detail = "; ".join(text for _, text in checks)
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def strictly_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


def fmt(values):
    return "[" + ", ".join(f"{v:.4g}" for v in values) + "]"


@pytest.fixture(scope="module")
def ar1_merging():
    return run_merging(config("merging", "ar1", AR1, GRID, 2000))


# --------------------------------------------------------------------------


def test_criterion_1_two_ip_coverage(capsys):
    rep = run_coverage_2ip(config("coverage", "ar1", AR1, (500,), 5000))
    report(capsys, 1, [(0.88 <= rep.coverage <= 0.92, f"AR1 2IP T=500 R=5000 coverage {rep.coverage:.4f}")])


def test_criterion_2_spl_coverage(capsys):
    ar1 = run_coverage_spl(config("coverage", "ar1", AR1, (2000,), 5000))
    garch = run_coverage_spl(config("coverage", "garch11", GARCH, (2000,), 2000))
    report(
        capsys,
        2,
        [
            (0.88 <= ar1.coverage <= 0.92, f"AR1 SPL T=2000 R=5000 coverage {ar1.coverage:.4f}"),
            (
                0.87 <= garch.coverage <= 0.93,
                f"GARCH SPL T=2000 R=2000 coverage {garch.coverage:.4f} ({garch.failure_count} failed fits)",
            ),
        ],
    )


def test_criterion_3_merging(capsys, ar1_merging):
    d = ar1_merging.column("d_bl")
    report(
        capsys,
        3,
        [
            (strictly_decreasing(d), f"d_BL over T={GRID}: {fmt(d)}"),
            (d[0] / d[-1] >= 2.0, f"ratio T=500/T=8000 {d[0] / d[-1]:.2f} (need >= 2)"),
        ],
    )


def test_criterion_4_plug_in_merging(capsys, ar1_merging):
    row = ar1_merging.rows[-1]
    report(
        capsys,
        4,
        [(row["d_k_2ip"] < 0.05, f"median d_K(2IP errors, plug-in normal) at T=8000 {row['d_k_2ip']:.4f}")],
    )


def test_criterion_5_equivalence(capsys):
    checks = []
    for name, model, params, reps in (("AR1", "ar1", AR1, 500), ("GARCH", "garch11", GARCH, 200)):
        rep = run_equivalence(config("equivalence", model, params, GRID, reps))
        center = rep.column("median_center_gap")
        upper = rep.column("median_quantile_gap_upper")
        checks.append((strictly_decreasing(center), f"{name} median center gap {fmt(center)}"))
        checks.append((strictly_decreasing(upper), f"{name} u=0.95 quantile gap {fmt(upper)}"))
    report(capsys, 5, checks)


def random_step_cdf(rng):
    n = int(rng.integers(1, 9))
    z = np.sort(rng.choice(np.arange(-40, 41), size=n, replace=False)) / 10.0
    w = rng.integers(1, 10, size=n).astype(float)
    return StepCdf(z, np.cumsum(w) / w.sum())


def test_criterion_6_metric_exactness(capsys):
    bl = d_bounded_lipschitz(point_mass(0.0), point_mass(1.0))
    lv = d_levy(point_mass(0.0), point_mass(0.3))
    rng = np.random.default_rng(SEED)
    triangle = levy_vs_k = levy_vs_bl = bracket = True
    worst_triangle = -math.inf
    for _ in range(200):
        F, G, H = (random_step_cdf(rng) for _ in range(3))
        dk_fg, dk_gh, dk_fh = d_kolmogorov(F, G), d_kolmogorov(G, H), d_kolmogorov(F, H)
        worst_triangle = max(worst_triangle, dk_fh - dk_fg - dk_gh)
        triangle &= dk_fh <= dk_fg + dk_gh + 1e-9
        dl = d_levy(F, G)
        levy_vs_k &= dl <= dk_fg + 1e-9
        levy_vs_bl &= dl <= 2 * math.sqrt(d_bounded_lipschitz(F, G)) + 1e-9
        eps = dk_fg + 1e-9
        for u in np.linspace(eps, 1 - eps, 53)[1:-1] if eps < 0.5 else ():
            g = generalized_inverse(G, u)
            bracket &= generalized_inverse(F, u - eps) - eps <= g <= generalized_inverse(F, u + eps) + eps
    report(
        capsys,
        6,
        [
            (abs(bl - 2 / 3) <= 1e-8, f"d_BL(d0, d1) = {bl:.12f}"),
            (abs(lv - 0.3) <= 1e-9, f"d_L(d0, d0.3) = {lv:.12f}"),
            (triangle, f"d_K triangle over 200 triples, worst excess {worst_triangle:.2e}"),
            (levy_vs_k and levy_vs_bl, "d_L <= d_K and d_L <= 2 sqrt(d_BL) on every pair"),
            (bracket, "quantile bracketing on every pair"),
        ],
    )


def test_criterion_7_gradient(capsys):
    rng = np.random.default_rng(SEED)
    model = get_model("garch11")
    worst = 0.0
    for _ in range(100):
        theta = np.array([rng.uniform(0.02, 1.0), rng.uniform(0.01, 0.3), rng.uniform(0.1, 0.68)])
        x, _ = simulate_garch11(Garch11Params(*theta), int(rng.integers(200, 2000)), seed=int(rng.integers(2**31)))
        t1 = int(rng.integers(1, len(x) + 1))
        trunc = TruncationConfig(t1, *rng.choice(["zeros", "unconditional"], size=2))
        grad = model.predict(theta, x, trunc).gradient
        fd = np.empty(3)
        for j in range(3):
            h = 1e-6 * max(1.0, abs(theta[j]))
            up, down = theta.copy(), theta.copy()
            up[j] += h
            down[j] -= h
            fd[j] = (model.predict(up, x, trunc).psi - model.predict(down, x, trunc).psi) / (2 * h)
        worst = max(worst, np.linalg.norm(grad - fd) / np.linalg.norm(grad))
    report(capsys, 7, [(worst < 1e-6, f"worst relative error over 100 draws {worst:.2e}")])


def test_criterion_8_identities(capsys):
    checks = []
    x_ar = simulate_ar1(Ar1Params(0.5), 500, seed=SEED)
    x_g, _ = simulate_garch11(Garch11Params(0.1, 0.1, 0.8), 1000, seed=SEED)
    same = True
    for series, model in ((x_ar, "ar1"), (x_g, "garch11")):
        a = build_interval_2ip(series, series, model, 0.1)
        b = build_interval_sta(series, model, 0.1)
        same &= (a.lower, a.center, a.upper, a.variance) == (b.lower, b.center, b.upper, b.variance)
    checks.append((same, "2IP with y = x equals STA bit-exactly"))

    ar1 = get_model("ar1")
    base = ar1.predict(np.array([0.5]), x_ar, TruncationConfig())
    invariant = True
    for t1 in (1, 250, 500):
        for sv in ("zeros", "unconditional", [3.0, -1.0]):
            for cv in ("zeros", "unconditional"):
                out = ar1.predict(np.array([0.5]), x_ar, TruncationConfig(t1, sv, cv))
                invariant &= out.psi == base.psi and np.array_equal(out.gradient, base.gradient)
    checks.append((invariant, "AR1 prediction invariant to truncation config"))

    garch = get_model("garch11")
    theta = np.array([0.3, 0.0, 0.6])
    values = {garch.predict(theta, x_g.head(n), TruncationConfig()).psi for n in (100, 500, 1000)}
    const = len(values) == 1 and math.isclose(values.pop(), 0.3 / 0.4, rel_tol=1e-12)
    checks.append((const, "alpha = 0 GARCH prediction equals omega/(1-beta) on every path"))

    cfg = config("coverage", "garch11", GARCH, (500,), 100, dump_samples=True)
    one = dumps_json(run_coverage_2ip(cfg, workers=1).to_dict()) + repr(run_coverage_2ip(cfg, workers=1).samples)
    two = dumps_json(run_coverage_2ip(cfg, workers=2).to_dict()) + repr(run_coverage_2ip(cfg, workers=2).samples)
    checks.append((one == two, "GARCH coverage replay byte-identical for 1 and 2 workers"))
    report(capsys, 8, checks)


def test_criterion_9_negligibility(capsys):
    rep = run_negligibility(config("negligibility", "garch11", GARCH, (2000,), 500))
    plan = default_split_plan(2000)
    default = rep.default_scaled_gap
    report(
        capsys,
        9,
        [
            (
                abs(rep.slope - math.log(0.8)) <= 0.05,
                f"slope {rep.slope:.4f} vs ln(0.8) = {math.log(0.8):.4f}",
            ),
            (
                rep.default_t1 == plan.t_p and default["max"] < 1e-3,
                f"sqrt(T) gap at t1={rep.default_t1}: median {default['median']:.2e}, max {default['max']:.2e}",
            ),
        ],
    )


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
