"""Iteration-complexity predictors and the constants they are built from:
block smoothness scalars, expected embedded inverses, and the per-class
K(epsilon) formulas for each selection rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import (
    DEFAULT_ENUMERATION_BUDGET,
    EnumerationTooLargeError,
    enumerate_subsets,
    eig_extremes,
)


class NoGuaranteeError(ValueError):
    """The requested rule/class pair carries no published complexity bound."""


class NoParameterError(ValueError):
    pass


@dataclass
class FunctionClass:
    kind: str  # strongly_pl | weakly_pl | gradient_dominated | general_nonconvex
    mu: Optional[float] = None
    rho: Optional[float] = None
    c: Optional[float] = None
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind == "strongly_pl" and (self.mu is None or self.mu <= 0):
            raise NoParameterError("strongly_pl needs mu > 0")
        if self.kind == "weakly_pl" and (self.rho is None or self.rho <= 0):
            raise NoParameterError("weakly_pl needs rho > 0")
        if self.kind == "gradient_dominated" and (
            self.c is None or self.c <= 0 or self.p is None or self.p <= 0
        ):
            raise NoParameterError("gradient_dominated needs modulus c, p > 0")
        if self.kind not in (
            "strongly_pl", "weakly_pl", "gradient_dominated", "general_nonconvex"
        ):
            raise ValueError(f"unknown function class {self.kind!r}")


@dataclass
class RateBound:
    rule_name: str
    class_kind: str
    K: Callable[[float], int]
    constant: float  # the rule's proportion-function lower bound
    provenance: dict = field(default_factory=dict)


def L_tau(M: np.ndarray, tau: int,
          budget: int = DEFAULT_ENUMERATION_BUDGET) -> float:
    """Largest eigenvalue over all cardinality-tau principal submatrices.

    Falls back to the trace upper bound (sum of the tau largest diagonal
    entries) with a warning when enumeration is infeasible.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if not 1 <= tau <= n:
        raise ValueError(f"need 1 <= tau <= n, got tau={tau}")
    if tau == 1:
        return float(np.diag(M).max())
    if tau == n:
        return eig_extremes(M)[1]
    try:
        return max(
            eig_extremes(M[np.ix_(S.array, S.array)])[1]
            for S in enumerate_subsets(n, tau, budget)
        )
    except EnumerationTooLargeError:
        bound = float(np.sort(np.diag(M))[-tau:].sum())
        warnings.warn(
            f"C({n},{tau}) exceeds the enumeration budget; using the trace "
            f"upper bound {bound} for L_tau"
        )
        return bound


def expected_inverse_matrix(M: np.ndarray, tau: int,
                            budget: int = DEFAULT_ENUMERATION_BUDGET,
                            mc_samples: int = 20_000,
                            mc_seed: int = 0) -> np.ndarray:
    """Average over all cardinality-tau sets S of the inverse block of M
    embedded back at the rows/columns of S."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    out = np.zeros_like(M)
    try:
        count = 0
        for S in enumerate_subsets(n, tau, budget):
            idx = S.array
            out[np.ix_(idx, idx)] += np.linalg.inv(M[np.ix_(idx, idx)])
            count += 1
        return out / count
    except EnumerationTooLargeError:
        warnings.warn(
            f"C({n},{tau}) exceeds the enumeration budget; Monte-Carlo "
            f"estimate over {mc_samples} samples"
        )
        rng = np.random.default_rng(mc_seed)
        for _ in range(mc_samples):
            idx = np.sort(rng.choice(n, size=tau, replace=False))
            out[np.ix_(idx, idx)] += np.linalg.inv(M[np.ix_(idx, idx)])
        return out / mc_samples


def eso_v(A: np.ndarray, tau: int) -> np.ndarray:
    """Per-coordinate curvature bounds from the factorization M = A'A.

    v_i = sum_j [1 + (nnz(A_j:) - 1)(tau - 1)/(n - 1)] A_ji^2; the derived
    bound lambda_min(E[M_[S]^-1]) >= 1/(n max_i v_i) is cheap to evaluate.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if n < 2:
        raise ValueError("the ESO vector is undefined for n = 1")
    if not 1 <= tau <= n:
        raise ValueError(f"need 1 <= tau <= n, got tau={tau}")
    row_nnz = (A != 0).sum(axis=1)
    weights = 1.0 + (row_nnz - 1) * (tau - 1) / (n - 1)
    return (weights[:, None] * A * A).sum(axis=0)


def rule_constant(rule, problem, budget: int = DEFAULT_ENUMERATION_BUDGET):
    """The published lower bound on (the expectation of) the proportion
    function for a selection rule, with provenance."""
    M = problem.objective.smoothness
    n = M.shape[0]
    smooth = problem.smooth_path
    kind = rule.kind
    if kind == "cyclic_coord":
        raise NoGuaranteeError("cyclic selection carries no complexity bound")
    if kind == "full_batch":
        lam_max = eig_extremes(M)[1]
        return 1.0 / lam_max, {"lambda_max(M)": lam_max}
    if kind in ("uniform_coord",) or (not smooth and kind == "greedy_coord"):
        top = float(np.diag(M).max())
        return 1.0 / (n * top), {"n*max_diag(M)": n * top}
    if kind in ("importance_coord", "greedy_coord"):
        if not smooth:
            raise NoGuaranteeError(
                "no nonsmooth bound published for importance sampling")
        trace = float(np.diag(M).sum())
        return 1.0 / trace, {"trace(M)": trace}
    # minibatch kinds
    if smooth:
        lam_min = eig_extremes(expected_inverse_matrix(M, rule.tau, budget))[0]
        return lam_min, {"lambda_min(E[inv])": lam_min}
    lt = L_tau(M, rule.tau, budget)
    return rule.tau / (n * lt), {"L_tau": lt, "n*L_tau/tau": n * lt / rule.tau}


def predict_K(rule, fclass: FunctionClass, problem, epsilon: float,
              xi0: float, budget: int = DEFAULT_ENUMERATION_BUDGET) -> RateBound:
    """K(epsilon) guaranteeing the target gap for a (rule, class) pair."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    c, provenance = rule_constant(rule, problem, budget)

    if fclass.kind == "strongly_pl":
        def K(eps):
            if eps >= xi0:
                return 0
            return math.ceil(math.log(xi0 / eps) / (c * fclass.mu))
    elif fclass.kind == "weakly_pl":
        def K(eps):
            if eps >= xi0:
                return 0
            return math.ceil(1.0 / (fclass.rho * c * eps))
    elif fclass.kind == "general_nonconvex":
        def K(eps):
            if eps >= xi0:
                return 0
            return math.ceil((xi0 / (c * eps)) * math.log(xi0 / eps))
    else:  # gradient_dominated: only the batch-descent bound is published
        if rule.kind != "full_batch":
            raise NoGuaranteeError(
                "gradient-dominated bounds are published for batch descent only")
        L = eig_extremes(problem.objective.smoothness)[1]

        def K(eps):
            return gradient_dominated_K(fclass.c, fclass.p, L, xi0, eps)

    return RateBound(rule_name=rule.name, class_kind=fclass.kind, K=K,
                     constant=c, provenance=provenance)


def strongly_convex_mu(problem, L: float) -> float:
    """Forcing-function lower bound for strongly convex composites:
    min{L/2, L lambda_F / (lambda_F - lambda_f + L)}."""
    lam_f = problem.objective.strong_convexity_f
    lam_F = lam_f + problem.regularizer.strong_convexity_F
    if lam_F <= 0:
        raise NoParameterError("strong convexity parameter of F not declared")
    return min(L / 2.0, L * lam_F / (lam_F - lam_f + L))


def level_set_radius(problem, x0: np.ndarray, x_star: Optional[np.ndarray] = None,
                     n_dirs: int = 10_000, seed: int = 0,
                     t_cap: float = 1e8) -> float:
    """Over-estimate of max ||x - x*|| over the F-level set of x0, by
    bisection along seeded random directions, inflated by 10 percent."""
    if x_star is None:
        x_star = problem.objective.known_minimizer
    if x_star is None:
        raise NoParameterError("level-set radius needs a minimizer")
    x_star = np.asarray(x_star, dtype=float)
    level = problem.F(np.asarray(x0, dtype=float))
    rng = np.random.default_rng(seed)
    n = problem.dim
    worst = 0.0
    for _ in range(n_dirs):
        d = rng.standard_normal(n)
        d /= np.linalg.norm(d)
        t = 1.0
        while problem.F(x_star + t * d) <= level:
            t *= 2.0
            if t > t_cap:
                raise NoParameterError("level set appears unbounded")
        lo, hi = t / 2.0, t
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if problem.F(x_star + mid * d) <= level:
                lo = mid
            else:
                hi = mid
        worst = max(worst, lo)
    return 1.1 * worst


def quadratic_level_radius(M: np.ndarray, xi0: float) -> float:
    """Exact level-set radius for xi = (x-x*)'M(x-x*)/2 <= xi0."""
    lam_min = eig_extremes(M)[0]
    return math.sqrt(2.0 * xi0 / lam_min)


def weakly_convex_rho(problem, x0: np.ndarray, L: float,
                      R: Optional[float] = None, **radius_kwargs) -> float:
    """rho(x0) = min{L/(2 xi(x0)), 1/(2 R^2)} for convex composites."""
    xi0 = problem.xi(np.asarray(x0, dtype=float))
    if xi0 <= 0:
        raise NoParameterError("initial point is already optimal")
    if R is None:
        R = level_set_radius(problem, x0, **radius_kwargs)
    return min(L / (2.0 * xi0), 1.0 / (2.0 * R * R))


def gradient_dominated_K(c: float, p: float, L: float, xi0: float,
                         epsilon: float) -> int:
    """Smallest k with k >= (2 L xi0 / eps) log(xi0 / phi(eps)) for the
    modulus phi(t) = c t^p; guarantees min over the first k gaps <= phi(eps)."""
    if epsilon <= 0 or xi0 < 0:
        raise ValueError("epsilon must be positive and xi0 nonnegative")
    phi = c * epsilon ** p
    if phi >= xi0:
        return 0
    return math.ceil(2.0 * L * xi0 / epsilon * math.log(xi0 / phi))
