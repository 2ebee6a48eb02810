"""Step CDFs and the Kolmogorov, Levy and bounded-Lipschitz distances between them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import DomainError, EmptySampleError

__all__ = [
    "StepCdf",
    "from_samples",
    "point_mass",
    "evaluate",
    "generalized_inverse",
    "d_kolmogorov",
    "d_kolmogorov_continuous",
    "d_levy",
    "d_bounded_lipschitz",
]

LEVY_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class StepCdf:
    """Right-continuous distribution function of a finite discrete measure.

    ``support`` is strictly increasing and ``cum[i] = F(support[i])``; the
    last cumulative weight is exactly one.
    """

    support: np.ndarray
    cum: np.ndarray

    def __post_init__(self) -> None:
        z = np.array(self.support, dtype=float).ravel()
        c = np.array(self.cum, dtype=float).ravel()
        if z.size < 1 or z.size != c.size:
            raise ValueError("support and cumulative weights must be nonempty and of equal length")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(c))):
            raise ValueError("StepCdf entries must be finite")
        if np.any(np.diff(z) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(np.diff(c) < 0) or c[0] < 0:
            raise ValueError("cumulative weights must be nondecreasing and nonnegative")
        if abs(c[-1] - 1.0) > 1e-12:
            raise ValueError(f"cumulative weights must end at 1, got {c[-1]!r}")
        c[-1] = 1.0
        z.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "support", z)
        object.__setattr__(self, "cum", c)

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self.cum, prepend=0.0)

    def __call__(self, tau):
        return evaluate(self, tau)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StepCdf):
            return NotImplemented
        return np.array_equal(self.support, other.support) and np.array_equal(self.cum, other.cum)

    def quantile(self, u):
        return generalized_inverse(self, u)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw from the measure by inverting uniforms on (0, 1]."""
        u = 1.0 - rng.random(size)
        return self.support[np.searchsorted(self.cum, u, side="left")]


def from_samples(samples: Sequence[float]) -> StepCdf:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptySampleError("cannot build an empirical CDF from no samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    support, counts = np.unique(x, return_counts=True)
    return StepCdf(support, np.cumsum(counts) / x.size)


def point_mass(at: float) -> StepCdf:
    return StepCdf([at], [1.0])


def evaluate(cdf: StepCdf, tau):
    """``F(tau)``: cumulative weight of the largest support point ``<= tau``."""
    tau_arr = np.asarray(tau, dtype=float)
    idx = np.searchsorted(cdf.support, tau_arr, side="right")
    out = np.where(idx > 0, cdf.cum[np.maximum(idx - 1, 0)], 0.0)
    return float(out) if out.ndim == 0 else out


def generalized_inverse(cdf: StepCdf, u):
    """``inf{tau : F(tau) >= u}`` for ``0 < u <= 1``."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(~(u_arr > 0.0)) or np.any(u_arr > 1.0):
        raise DomainError("generalized inverse is defined for 0 < u <= 1")
    idx = np.searchsorted(cdf.cum, u_arr, side="left")
    out = cdf.support[np.minimum(idx, cdf.support.size - 1)]
    return float(out) if out.ndim == 0 else out


def _pooled(F: StepCdf, G: StepCdf) -> np.ndarray:
    return np.union1d(F.support, G.support)


def d_kolmogorov(F: StepCdf, G: StepCdf) -> float:
    """``sup |F - G|``.  Both functions are constant between pooled support
    points, so the supremum is a maximum over those points."""
    z = _pooled(F, G)
    return float(np.max(np.abs(evaluate(F, z) - evaluate(G, z))))


def d_kolmogorov_continuous(F: StepCdf, G: Callable[[np.ndarray], np.ndarray]) -> float:
    """``sup |F - G|`` for a continuous distribution function ``G``.

    The supremum is attained at a jump of ``F``, from the right or the left.
    """
    g = np.asarray(G(F.support), dtype=float)
    left = np.concatenate(([0.0], F.cum[:-1]))
    return float(max(np.max(np.abs(F.cum - g)), np.max(np.abs(left - g))))


def _levy_feasible(F: StepCdf, G: StepCdf, xi: float) -> bool:
    # every step function involved is right-continuous, so checking each at
    # its own jump points suffices; each function is evaluated at its own
    # support exactly and only the partner argument is shifted, which avoids
    # a rounded (z + xi) - xi falling just left of a jump at z
    f, g = F.support, G.support
    # G(s) - xi <= F(s + xi) for all s
    lower = np.all(evaluate(G, g) - xi <= evaluate(F, g + xi)) and np.all(
        evaluate(G, f - xi) - xi <= evaluate(F, f)
    )
    # F(t) <= G(t + xi) + xi for all t
    upper = np.all(evaluate(F, f) <= evaluate(G, f + xi) + xi) and np.all(
        evaluate(F, g - xi) <= evaluate(G, g) + xi
    )
    return bool(lower and upper)


def d_levy(F: StepCdf, G: StepCdf, tol: float = LEVY_TOLERANCE) -> float:
    """Levy distance by bisection on the sandwich width ``xi``.

    The result overestimates the infimum by at most ``tol``.
    """
    if F == G or _levy_feasible(F, G, 0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _levy_feasible(F, G, mid):
            hi = mid
        else:
            lo = mid
    return hi


def d_bounded_lipschitz(F: StepCdf, G: StepCdf) -> float:
    """Bounded-Lipschitz distance between two discrete measures on the line.

    Solves, over values ``f_i`` on the pooled support and a Lipschitz budget
    ``L``,

        max  sum_i f_i (p_i - q_i)
        s.t. |f_i| <= 1 - L,  |f_{i+1} - f_i| <= L (z_{i+1} - z_i),  0 <= L <= 1.

    Linear interpolation between support points realizes any feasible
    vector with ``sup|f| + Lip(f) <= 1``, so the program is exact.
    """
    if F == G:
        return 0.0
    z = _pooled(F, G)
    m = z.size
    w = evaluate(F, z) - evaluate(G, z)
    w = np.diff(w, prepend=0.0)  # p_i - q_i
    if m == 1:
        return 0.0
    gaps = np.diff(z)
    n = m + 1  # f_1..f_m, L
    eye = sparse.identity(m, format="csr")
    ones_col = sparse.csr_matrix(np.ones((m, 1)))
    diff = sparse.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m), format="csr")
    gap_col = sparse.csr_matrix(gaps[:, None])
    A = sparse.vstack(
        [
            sparse.hstack([eye, ones_col]),
            sparse.hstack([-eye, ones_col]),
            sparse.hstack([diff, -gap_col]),
            sparse.hstack([-diff, -gap_col]),
        ],
        format="csc",
    )
    b = np.concatenate([np.ones(2 * m), np.zeros(2 * (m - 1))])
    c = np.concatenate([-w, [0.0]])
    bounds = [(None, None)] * m + [(0.0, 1.0)]
    res = linprog(
        c,
        A_ub=A,
        b_ub=b,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    assert res.x.size == n
    return float(max(-res.fun, 0.0))
