"""Concrete objectives, separable regularizers, and instance generation.

An Objective bundles f (value, gradient) with a positive definite curvature
matrix M such that f(x+h) <= f(x) + <grad f(x), h> + h'Mh/2 for all admissible
x, h.  A SeparableRegularizer supplies per-coordinate values and exact scalar
prox maps for the nonsmooth half of F = f + g.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import check_symmetric, eig_extremes, is_spd, spd_factor


@dataclass
class Objective:
    dim: int
    eval_f: Callable[[np.ndarray], float]
    grad_f: Callable[[np.ndarray], np.ndarray]
    smoothness: np.ndarray
    strong_convexity_f: float = 0.0
    known_opt_value: Optional[float] = None
    known_minimizer: Optional[np.ndarray] = None
    # Cholesky factors of principal submatrices, keyed by index tuple
    _factor_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.smoothness = check_symmetric(self.smoothness)
        if self.smoothness.shape != (self.dim, self.dim):
            raise ValueError("smoothness matrix shape does not match dim")
        if not is_spd(self.smoothness):
            raise ValueError("smoothness matrix must be positive definite")
        lam_min, _ = eig_extremes(self.smoothness)
        if self.strong_convexity_f > lam_min + 1e-10:
            raise ValueError("strong convexity parameter exceeds lambda_min(M)")
        if self.known_minimizer is not None:
            self.known_minimizer = np.asarray(self.known_minimizer, dtype=float)

    def factor_for(self, indices: tuple):
        """Cached SPD factorization of the principal submatrix M[indices]."""
        fac = self._factor_cache.get(indices)
        if fac is None:
            idx = np.asarray(indices, dtype=np.intp)
            fac = spd_factor(self.smoothness[np.ix_(idx, idx)])
            if len(self._factor_cache) < 100_000:
                self._factor_cache[indices] = fac
        return fac


class SeparableRegularizer:
    """Per-coordinate g_i with an exact scalar prox.

    prox(c, ell, i) returns argmin_v { (ell/2) (v - c)^2 + g_i(v) }.
    """

    is_zero = False
    strong_convexity_F: float = 0.0

    def value_i(self, i: int, v: float) -> float:
        raise NotImplementedError

    def prox(self, c: float, ell: float, i: int) -> float:
        raise NotImplementedError

    def value(self, x: np.ndarray) -> float:
        return float(sum(self.value_i(i, float(v)) for i, v in enumerate(x)))


class ZeroRegularizer(SeparableRegularizer):
    is_zero = True

    def value_i(self, i, v):
        return 0.0

    def prox(self, c, ell, i):
        return c

    def value(self, x):
        return 0.0


class L1Regularizer(SeparableRegularizer):
    def __init__(self, lam: float):
        if lam < 0:
            raise ValueError("l1 weight must be nonnegative")
        self.lam = float(lam)
        self.is_zero = lam == 0.0

    def value_i(self, i, v):
        return self.lam * abs(v)

    def prox(self, c, ell, i):
        t = self.lam / ell
        return math.copysign(max(abs(c) - t, 0.0), c)

    def value(self, x):
        return self.lam * float(np.abs(x).sum())


def make_l1(lam: float) -> L1Regularizer:
    return L1Regularizer(lam)


@dataclass
class CompositeProblem:
    """F = f + g with a scalar smoothness constant for the prox path.

    With a zero regularizer the solver takes the matrix-curvature path; any
    nonzero regularizer forces the scalar L*I path.
    """

    objective: Objective
    regularizer: SeparableRegularizer = field(default_factory=ZeroRegularizer)
    L_scalar: Optional[float] = None
    opt_value: Optional[float] = None

    def __post_init__(self):
        if self.L_scalar is None:
            self.L_scalar = eig_extremes(self.objective.smoothness)[1]
        if self.L_scalar <= 0:
            raise ValueError("L_scalar must be positive")
        if self.opt_value is None and self.regularizer.is_zero:
            self.opt_value = self.objective.known_opt_value

    @property
    def dim(self) -> int:
        return self.objective.dim

    @property
    def smooth_path(self) -> bool:
        return self.regularizer.is_zero

    def F(self, x: np.ndarray) -> float:
        return float(self.objective.eval_f(x)) + self.regularizer.value(x)

    def grad_f(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.objective.grad_f(x), dtype=float)

    def xi(self, x: np.ndarray) -> float:
        if self.opt_value is None:
            raise ValueError("optimality gap requires a known or empirical optimum")
        return self.F(x) - self.opt_value


def make_lsq_cos(A: np.ndarray, b: np.ndarray, c: np.ndarray) -> Objective:
    """f(x) = ||Ax - b||^2 / (2m) + cos(<c, x>) / m.

    Curvature bound M = (A'A + cc') / m dominates the Hessian
    (A'A - cos(<c,x>) cc') / m uniformly since |cos| <= 1.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    m, n = A.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValueError(f"dimension mismatch: A is {m}x{n}, b {b.shape}, c {c.shape}")

    M = (A.T @ A + np.outer(c, c)) / m

    def f(x):
        r = A @ x - b
        return 0.5 / m * float(r @ r) + math.cos(float(c @ x)) / m

    def grad(x):
        r = A @ x - b
        return (A.T @ r - math.sin(float(c @ x)) * c) / m

    return Objective(dim=n, eval_f=f, grad_f=grad, smoothness=M)


def make_quadratic(Q: np.ndarray, smoothness: Optional[np.ndarray] = None) -> Objective:
    """f(x) = x'Qx / 2 with SPD Q; optionally a looser smoothness matrix."""
    Q = check_symmetric(Q)
    if not is_spd(Q):
        raise ValueError("quadratic matrix must be positive definite")
    n = Q.shape[0]
    M = Q if smoothness is None else check_symmetric(smoothness)
    lam_min = eig_extremes(Q)[0]
    return Objective(
        dim=n,
        eval_f=lambda x: 0.5 * float(x @ (Q @ x)),
        grad_f=lambda x: Q @ x,
        smoothness=M,
        strong_convexity_f=lam_min,
        known_opt_value=0.0,
        known_minimizer=np.zeros(n),
    )


def _box_spd(scale: float, n: int) -> np.ndarray:
    return scale * np.eye(n)


def make_product_square(box: float = 2.0) -> Objective:
    """f(x1, x2) = x1^2 x2^2; minimized (value 0) on both axes.

    No global quadratic majorant exists (quartic growth), so the curvature
    matrix is a Gershgorin bound on the Hessian over [-box, box]^2.
    """
    if box <= 0:
        raise ValueError("box must be positive")
    scale = 6.0 * box * box  # |f_11| + |f_12| <= 2 box^2 + 4 box^2 on the box

    def f(x):
        return float(x[0] ** 2 * x[1] ** 2)

    def grad(x):
        return np.array([2.0 * x[0] * x[1] ** 2, 2.0 * x[0] ** 2 * x[1]])

    return Objective(
        dim=2,
        eval_f=f,
        grad_f=grad,
        smoothness=_box_spd(scale, 2),
        known_opt_value=0.0,
        known_minimizer=np.zeros(2),
    )


def _huber(z: float) -> float:
    return z * z if abs(z) < 1 else 2.0 * abs(z) - 1.0


def _huber_d(z: float) -> float:
    return 2.0 * z if abs(z) < 1 else 2.0 * math.copysign(1.0, z)


def make_huber_product(box: float = 2.0) -> Objective:
    """f(x1, x2) = H(x1) H(x2) with H the Huber loss; minimum 0 on the axes."""
    if box < 1:
        raise ValueError("box must cover the quadratic region, need box >= 1")
    # On the box: |H''| <= 2, H <= 2 box - 1, |H'| <= 2.
    scale = 2.0 * (2.0 * box - 1.0) + 4.0

    def f(x):
        return _huber(float(x[0])) * _huber(float(x[1]))

    def grad(x):
        x1, x2 = float(x[0]), float(x[1])
        return np.array([_huber_d(x1) * _huber(x2), _huber(x1) * _huber_d(x2)])

    return Objective(
        dim=2,
        eval_f=f,
        grad_f=grad,
        smoothness=_box_spd(scale, 2),
        known_opt_value=0.0,
        known_minimizer=np.zeros(2),
    )


def flat_inflection_coefficient(bracket=(2.0, 2.3), tol: float = 1e-12) -> float:
    """Coefficient c for which x -> (x - pi/c)^2/2 + cos(cx) has a point with
    f' = f'' = 0 (a flat inflection), found by bisection.

    At the critical c, the local minimum of f' on the branch right of the
    global minimizer touches zero; below it the branch stays positive.
    """

    def branch_min(c):
        # local min of f' on [2.5, 4.5] via golden-section refinement
        lo, hi = 2.5, 4.5
        xs = np.linspace(lo, hi, 4001)
        fp = (xs - math.pi / c) - c * np.sin(c * xs)
        i = int(fp.argmin())
        a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
        phi = (math.sqrt(5.0) - 1.0) / 2.0
        c1, c2 = b - phi * (b - a), a + phi * (b - a)
        while b - a > 1e-14:
            f1 = (c1 - math.pi / c) - c * math.sin(c * c1)
            f2 = (c2 - math.pi / c) - c * math.sin(c * c2)
            if f1 < f2:
                b, c2 = c2, c1
                c1 = b - phi * (b - a)
            else:
                a, c1 = c1, c2
                c2 = a + phi * (b - a)
        x = 0.5 * (a + b)
        return (x - math.pi / c) - c * math.sin(c * x)

    lo, hi = bracket
    flo, fhi = branch_min(lo), branch_min(hi)
    if flo <= 0 or fhi >= 0:
        raise ValueError("bracket does not straddle the critical coefficient")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if branch_min(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def make_plateau_1d(c: float) -> Objective:
    """1-D f(x) = (x - pi/c)^2 / 2 + cos(cx), nonconvex for c > 1.

    The optimum is located numerically by a global grid sweep plus local
    polish; the grid result lands on x = pi/c where both terms attain their
    minima simultaneously.
    """
    if c <= 0:
        raise ValueError("coefficient must be positive")
    obj = make_lsq_cos(np.array([[1.0]]), np.array([math.pi / c]), np.array([c]))
    center = math.pi / c
    xs = np.linspace(center - 30.0, center + 30.0, 300001)
    vals = 0.5 * (xs - center) ** 2 + np.cos(c * xs)
    i = int(vals.argmin())
    x = xs[i]
    for _ in range(200):  # local polish: damped Newton on f'
        g = (x - center) - c * math.sin(c * x)
        h = 1.0 - c * c * math.cos(c * x)
        if h <= 0:
            break
        step = g / h
        x -= step
        if abs(step) < 1e-15:
            break
    obj.known_opt_value = float(0.5 * (x - center) ** 2 + math.cos(c * x))
    obj.known_minimizer = np.array([x])
    return obj


def gen_instance(m: int, n: int, seed: int, lam: float = 0.0) -> CompositeProblem:
    """Random least-squares-plus-cosine instance with prescribed spectrum.

    A = U diag(sigma) V' with orthonormal factors from QR of seeded Gaussian
    matrices, sigma linearly spaced in [1/m, 1]; b = A y with unit-norm
    Gaussian y; unit-norm Gaussian c.  Deterministic for a fixed seed.
    """
    if not m >= n >= 1:
        raise ValueError(f"need m >= n >= 1, got m={m}, n={n}")
    rng = np.random.default_rng(seed)

    def ortho(rows, cols):
        Q, R = np.linalg.qr(rng.standard_normal((rows, cols)))
        return Q * np.sign(np.diag(R))  # fix the sign ambiguity of QR

    U = ortho(m, n)
    V = ortho(n, n)
    sigma = np.linspace(1.0 / m, 1.0, n)
    A = U @ np.diag(sigma) @ V.T
    y = rng.standard_normal(n)
    y /= np.linalg.norm(y)
    b = A @ y
    c = rng.standard_normal(n)
    c /= np.linalg.norm(c)
    obj = make_lsq_cos(A, b, c)
    problem = CompositeProblem(objective=obj, regularizer=make_l1(lam))
    problem.instance_meta = {"m": m, "n": n, "seed": seed, "lam": lam}
    _attach_arrays(problem, A, b, c)
    return problem


def save_instance(problem: CompositeProblem, path) -> None:
    """Serialize a generated instance (A row-major, b, c, lambda, seed)."""
    meta = getattr(problem, "instance_meta", {})
    A = problem.instance_A
    payload = {
        "m": A.shape[0],
        "n": A.shape[1],
        "seed": meta.get("seed"),
        "lambda": meta.get("lam", 0.0),
        "A": A.ravel().tolist(),
        "b": problem.instance_b.tolist(),
        "c": problem.instance_c.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_instance(path) -> CompositeProblem:
    with open(path) as fh:
        payload = json.load(fh)
    m, n = payload["m"], payload["n"]
    A = np.array(payload["A"], dtype=float).reshape(m, n)
    b = np.array(payload["b"], dtype=float)
    c = np.array(payload["c"], dtype=float)
    lam = payload.get("lambda", 0.0)
    obj = make_lsq_cos(A, b, c)
    problem = CompositeProblem(objective=obj, regularizer=make_l1(lam))
    problem.instance_meta = {"m": m, "n": n, "seed": payload.get("seed"), "lam": lam}
    _attach_arrays(problem, A, b, c)
    return problem


def _attach_arrays(problem, A, b, c):
    problem.instance_A = A
    problem.instance_b = b
    problem.instance_c = c
