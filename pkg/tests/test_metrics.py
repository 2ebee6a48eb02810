import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.stats import ks_2samp

from condint.errors import DomainError, EmptySampleError
from condint.metrics import (
    StepCdf,
    d_bounded_lipschitz,
    d_kolmogorov,
    d_kolmogorov_continuous,
    d_levy,
    evaluate,
    from_samples,
    generalized_inverse,
    point_mass,
)


@st.composite
def step_cdfs(draw, max_points=8):
    n = draw(st.integers(1, max_points))
    # a coarse grid makes shared support points common
    pts = draw(st.lists(st.integers(-40, 40), min_size=n, max_size=n, unique=True))
    weights = draw(st.lists(st.integers(1, 9), min_size=n, max_size=n))
    order = np.argsort(pts)
    z = np.asarray(pts, dtype=float)[order] / 10.0
    w = np.asarray(weights, dtype=float)[order]
    return StepCdf(z, np.cumsum(w) / w.sum())


# --------------------------------------------------------------------------
# StepCdf basics


def test_from_samples_examples():
    F = from_samples([0, 0, 1])
    assert_allclose(F.support, [0, 1])
    assert_allclose(F.cum, [2 / 3, 1])
    assert from_samples([5]) == point_mass(5.0)
    F = from_samples([3, 1, 2])
    assert_allclose(F.support, [1, 2, 3])
    assert_allclose(F.cum, [1 / 3, 2 / 3, 1])


def test_from_samples_empty():
    with pytest.raises(EmptySampleError):
        from_samples([])


def test_step_cdf_validation():
    with pytest.raises(ValueError):
        StepCdf([1.0, 0.0], [0.5, 1.0])
    with pytest.raises(ValueError):
        StepCdf([0.0, 1.0], [0.6, 0.5])
    with pytest.raises(ValueError):
        StepCdf([0.0, 1.0], [0.5, 0.9])


def test_evaluate_examples():
    d0 = point_mass(0.0)
    assert evaluate(d0, -0.1) == 0.0
    assert evaluate(d0, 0.0) == 1.0
    F = from_samples([1, 2, 3])
    assert evaluate(F, 2.0) == pytest.approx(2 / 3)
    assert evaluate(F, 2.999) == pytest.approx(2 / 3)


def test_generalized_inverse_examples():
    d0 = point_mass(0.0)
    for u in (1e-9, 0.5, 1.0):
        assert generalized_inverse(d0, u) == 0.0
    F = from_samples([1, 2, 3])
    assert generalized_inverse(F, 0.5) == 2.0
    assert generalized_inverse(F, 1 / 3) == 1.0
    with pytest.raises(DomainError):
        generalized_inverse(F, 0.0)
    with pytest.raises(DomainError):
        generalized_inverse(F, 1.5)


@given(F=step_cdfs(), u=st.floats(1e-9, 1.0))
def test_generalized_inverse_is_infimum(F, u):
    q = generalized_inverse(F, u)
    assert evaluate(F, q) >= u - 1e-15
    below = F.support[F.support < q]
    if below.size:
        assert evaluate(F, below[-1]) < u


@settings(max_examples=50)
@given(F=step_cdfs(), seed=st.integers(0, 2**32 - 1))
def test_sampling_reproduces_masses(F, seed):
    x = F.sample(np.random.default_rng(seed), 40_000)
    G = from_samples(x)
    assert d_kolmogorov(F, G) < 0.02


# --------------------------------------------------------------------------
# Kolmogorov


def test_kolmogorov_examples():
    F = from_samples([0.0, 1.0])
    assert d_kolmogorov(F, F) == 0.0
    assert d_kolmogorov(point_mass(0.0), point_mass(1.0)) == 1.0
    assert d_kolmogorov(F, from_samples([0.0, 2.0])) == 0.5


@settings(max_examples=100)
@given(
    a=st.lists(st.integers(-20, 20), min_size=1, max_size=30),
    b=st.lists(st.integers(-20, 20), min_size=1, max_size=30),
)
def test_kolmogorov_matches_two_sample_ks(a, b):
    expected = ks_2samp(a, b, method="asymp").statistic
    assert d_kolmogorov(from_samples(a), from_samples(b)) == pytest.approx(expected, abs=1e-12)


def test_kolmogorov_continuous_against_grid():
    from scipy.special import ndtr

    F = from_samples([-1.0, 0.0, 0.5, 2.0])
    grid = np.linspace(-6, 6, 200_001)
    left = evaluate(F, grid - 1e-12)
    approx = np.max(np.maximum(np.abs(evaluate(F, grid) - ndtr(grid)), np.abs(left - ndtr(grid))))
    assert d_kolmogorov_continuous(F, ndtr) == pytest.approx(approx, abs=1e-4)


# --------------------------------------------------------------------------
# Levy


def levy_grid_oracle(F, G, tol=1e-6):
    """Bisection with the sandwich checked on a dense grid instead of breakpoints."""
    lo_z = min(F.support[0], G.support[0]) - 1.5
    hi_z = max(F.support[-1], G.support[-1]) + 1.5
    tau = np.linspace(lo_z, hi_z, 40_001)

    def ok(xi):
        f = evaluate(F, tau)
        return np.all(evaluate(G, tau - xi) - xi <= f + 1e-12) and np.all(f <= evaluate(G, tau + xi) + xi + 1e-12)

    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


def test_levy_examples():
    F = from_samples([0.0, 1.0])
    assert d_levy(F, F) == 0.0
    assert d_levy(point_mass(0.0), point_mass(0.3)) == pytest.approx(0.3, abs=1e-9)
    assert d_levy(point_mass(0.0), point_mass(5.0)) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(F=step_cdfs(5), G=step_cdfs(5))
def test_levy_matches_grid_oracle(F, G):
    # the grid spacing bounds how far the oracle can be off
    spacing = (max(F.support[-1], G.support[-1]) - min(F.support[0], G.support[0]) + 3.0) / 40_000
    assert d_levy(F, G) == pytest.approx(levy_grid_oracle(F, G), abs=2 * spacing + 1e-5)


# --------------------------------------------------------------------------
# bounded Lipschitz


def bl_closed_form(d):
    return 2 * d / (2 + d)


def test_bounded_lipschitz_examples():
    F = from_samples([0.0, 1.0, 1.0])
    assert d_bounded_lipschitz(F, F) == 0.0
    assert d_bounded_lipschitz(point_mass(0.0), point_mass(1.0)) == pytest.approx(2 / 3, abs=1e-8)
    for d in (10.0, 100.0, 1e4):
        assert d_bounded_lipschitz(point_mass(0.0), point_mass(d)) == pytest.approx(bl_closed_form(d), abs=1e-8)
    assert d_bounded_lipschitz(point_mass(0.0), point_mass(1e4)) > 1.99


def test_bounded_lipschitz_two_point_grid_oracle():
    # f(0) = -a, f(d) = b over a grid, keeping the best feasible value
    d = 1.0
    best = 0.0
    for L in np.linspace(0, 1, 1001):
        a = min(1 - L, L * d / 2)  # symmetric choice is optimal for fixed L
        best = max(best, 2 * a)
    assert d_bounded_lipschitz(point_mass(0.0), point_mass(d)) == pytest.approx(best, abs=1e-3)


def cvxpy_bl(F, G, n_fine=400):
    """d_BL with f on a fine grid and an explicit sup-norm variable."""
    import cvxpy as cp

    z = np.union1d(np.union1d(F.support, G.support), np.linspace(F.support[0], F.support[-1], n_fine))
    z = np.union1d(z, np.linspace(G.support[0], G.support[-1], n_fine))
    p = np.diff(evaluate(F, z), prepend=0.0)
    q = np.diff(evaluate(G, z), prepend=0.0)
    f = cp.Variable(z.size)
    M = cp.Variable()
    L = cp.Variable()
    cons = [cp.abs(f) <= M, M + L <= 1, L >= 0]
    if z.size > 1:
        cons.append(cp.abs(cp.diff(f)) <= L * np.diff(z))
    prob = cp.Problem(cp.Maximize((p - q) @ f), cons)
    prob.solve()
    return prob.value


@settings(max_examples=25, deadline=None)
@given(F=step_cdfs(6), G=step_cdfs(6))
def test_bounded_lipschitz_matches_cvxpy(F, G):
    assert d_bounded_lipschitz(F, G) == pytest.approx(cvxpy_bl(F, G), abs=1e-6)


def feasible_functions():
    for L in (0.1, 0.3, 0.5, 0.8):
        for c in (-1.0, 0.0, 0.7):
            yield lambda x, L=L, c=c: np.clip(L * (x - c), -(1 - L), 1 - L)
    for s in (0.5, 2.0, 5.0):
        yield lambda x, s=s: np.sin(s * x) / (1 + s)
    yield lambda x: 0.5 * np.tanh(x) / 1.0  # sup 0.5, Lipschitz 0.5


@settings(max_examples=50)
@given(F=step_cdfs(), G=step_cdfs())
def test_bounded_lipschitz_dominates_test_functions(F, G):
    dist = d_bounded_lipschitz(F, G)
    for f in feasible_functions():
        value = abs(f(F.support) @ F.masses - f(G.support) @ G.masses)
        assert value <= dist + 1e-8


# --------------------------------------------------------------------------
# axioms and inequalities


@settings(max_examples=200)
@given(F=step_cdfs(), G=step_cdfs(), H=step_cdfs())
def test_metric_axioms(F, G, H):
    for d in (d_kolmogorov, d_levy, d_bounded_lipschitz):
        assert d(F, F) == 0.0
        # bisection and LP tolerances bound the asymmetry
        assert d(F, G) == pytest.approx(d(G, F), abs=1e-9)
        assert d(F, H) <= d(F, G) + d(G, H) + 1e-9


@settings(max_examples=200)
@given(F=step_cdfs(), G=step_cdfs())
def test_distance_inequalities(F, G):
    dl = d_levy(F, G)
    assert dl <= d_kolmogorov(F, G) + 1e-9
    assert dl <= 2 * math.sqrt(d_bounded_lipschitz(F, G)) + 1e-9


@settings(max_examples=200)
@given(F=step_cdfs(), G=step_cdfs())
def test_quantile_bracketing(F, G):
    eps = d_kolmogorov(F, G) + 1e-9
    assume(eps < 0.5)
    for u in np.linspace(eps, 1 - eps, 103)[1:-1]:
        g = generalized_inverse(G, u)
        assert generalized_inverse(F, u - eps) - eps <= g <= generalized_inverse(F, u + eps) + eps


@given(F=step_cdfs())
def test_distances_are_bounded(F):
    far = point_mass(F.support[-1] + 1e6)
    assert d_kolmogorov(F, far) == 1.0
    assert 0.0 <= d_bounded_lipschitz(F, far) <= 2.0
    assert 0.0 <= d_levy(F, far) <= 1.0
