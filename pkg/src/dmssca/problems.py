"""Stochastic composite problem instances.

A problem bundles n local stochastic objectives u_i (each with a sampling
oracle), a convex regularizer h and a closed convex feasible set. Noise
enters every built-in objective additively through a zero-mean linear term,
so sampled gradients are unbiased with state-independent variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Regularizer",
    "ZeroRegularizer",
    "L1Regularizer",
    "FeasibleSet",
    "UnboundedSet",
    "BoxSet",
    "StochasticObjective",
    "PiecewiseCubicObjective",
    "QuadraticObjective",
    "LeastSquaresObjective",
    "ProblemInstance",
    "make_piecewise_cubic_problem",
    "make_quadratic_consensus_problem",
    "make_lasso_problem",
    "global_objective",
    "objective_on_grid",
    "brute_force_minimize",
    "golden_section",
]


# ---------------------------------------------------------------------------
# regularizers

class Regularizer:
    kind = "abstract"

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def prox(self, v: np.ndarray, rho: float) -> np.ndarray:
        """argmin_u value(u) + (1/(2 rho)) ||u - v||^2"""
        raise NotImplementedError

    def value_grid(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ZeroRegularizer(Regularizer):
    kind = "zero"

    def value(self, x):
        return 0.0

    def prox(self, v, rho):
        return np.asarray(v, dtype=float)

    def value_grid(self, xs):
        return np.zeros_like(xs)


class L1Regularizer(Regularizer):
    kind = "l1"

    def __init__(self, weight: float):
        if weight < 0:
            raise ValueError(f"l1 weight must be >= 0, got {weight}")
        self.weight = float(weight)

    def value(self, x):
        return self.weight * float(np.sum(np.abs(x)))

    def prox(self, v, rho):
        v = np.asarray(v, dtype=float)
        thr = rho * self.weight
        return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)

    def value_grid(self, xs):
        return self.weight * np.abs(xs)


# ---------------------------------------------------------------------------
# feasible sets

class FeasibleSet:
    kind = "abstract"

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        raise NotImplementedError

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class UnboundedSet(FeasibleSet):
    kind = "unbounded"

    def contains(self, x, tol=0.0):
        return True

    def project(self, x):
        return np.asarray(x, dtype=float)


class BoxSet(FeasibleSet):
    kind = "box"

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if np.any(self.lo > self.hi):
            raise ValueError("box lower bound exceeds upper bound")

    @classmethod
    def symmetric(cls, bound: float, d: int) -> "BoxSet":
        b = float(bound) * np.ones(d)
        return cls(-b, b)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def project(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)


# ---------------------------------------------------------------------------
# local objectives

class StochasticObjective:
    """One node's objective u(x) = E[f(x, xi)] plus its sampling oracle.

    Noise draws are standard-normal vectors of shape (noise_dim,); each
    subclass maps the draw to its own noise model.
    """

    d: int
    noise_dim: int
    smoothness_L: float
    variance_sigma_sq: float

    def expected_value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def expected_gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_value(self, x: np.ndarray, xi: np.ndarray) -> float:
        raise NotImplementedError

    def sample_gradient(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _polyval(coeffs: np.ndarray, x):
    # Horner, ascending coefficients
    out = np.zeros_like(np.asarray(x, dtype=float))
    for c in coeffs[::-1]:
        out = out * x + c
    return out


class PiecewiseCubicObjective(StochasticObjective):
    """Scalar objective: quartic interior on |x| <= 10, affine tails outside,
    plus an additive noise term xi * x with xi ~ N(0, 1).

    The tail lines are used exactly as configured even where they do not meet
    the interior value; the gradient noise is state-independent, so the
    sampled gradient has variance 1 everywhere.
    """

    def __init__(self, interior_coeffs, upper_tail, lower_tail):
        self.c = np.asarray(interior_coeffs, dtype=float)  # ascending, degree 4
        self.dc = self.c[1:] * np.arange(1, len(self.c))
        self.up = tuple(map(float, upper_tail))            # (slope, intercept)
        self.lo = tuple(map(float, lower_tail))
        self.d = 1
        self.noise_dim = 1
        self.variance_sigma_sq = 1.0
        # curvature bound over the interval the iterates live in
        ddc = self.dc[1:] * np.arange(1, len(self.dc))
        grid = np.linspace(-10.0, 10.0, 4001)
        self.smoothness_L = float(np.max(np.abs(_polyval(ddc, grid))))

    def _value(self, x):
        x = np.asarray(x, dtype=float)
        interior = _polyval(self.c, x)
        upper = self.up[0] * x + self.up[1]
        lower = self.lo[0] * x + self.lo[1]
        return np.where(x > 10.0, upper, np.where(x < -10.0, lower, interior))

    def _deriv(self, x):
        x = np.asarray(x, dtype=float)
        interior = _polyval(self.dc, x)
        return np.where(x > 10.0, self.up[0], np.where(x < -10.0, self.lo[0], interior))

    def expected_value(self, x):
        x0 = float(np.asarray(x).reshape(-1)[0])
        return float(self._value(x0))

    def expected_gradient(self, x):
        return np.array([float(self._deriv(float(x[0])))])

    def sample_value(self, x, xi):
        return self.expected_value(x) + float(xi[0]) * float(np.asarray(x).reshape(-1)[0])

    def sample_gradient(self, x, xi):
        return self.expected_gradient(x) + xi[:1]

    def value_grid(self, xs):
        return self._value(xs)

    def gradient_grid(self, xs):
        return self._deriv(xs)


class QuadraticObjective(StochasticObjective):
    """u(x) = 0.5 (x - c)^T A (x - c) with optional additive gradient noise."""

    def __init__(self, a: np.ndarray, c: np.ndarray, noise_std: float = 0.0):
        self.a = np.asarray(a, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.noise_std = float(noise_std)
        self.d = self.c.size
        self.noise_dim = self.d
        self.smoothness_L = float(np.max(np.abs(np.linalg.eigvalsh(self.a))))
        self.variance_sigma_sq = self.noise_std**2 * self.d

    def expected_value(self, x):
        r = np.asarray(x, dtype=float) - self.c
        return 0.5 * float(r @ self.a @ r)

    def expected_gradient(self, x):
        return self.a @ (np.asarray(x, dtype=float) - self.c)

    def sample_value(self, x, xi):
        return self.expected_value(x) + self.noise_std * float(xi @ x)

    def sample_gradient(self, x, xi):
        return self.expected_gradient(x) + self.noise_std * xi

    def value_grid(self, xs):
        if self.d != 1:
            raise ValueError("grid evaluation only supported for d = 1")
        return 0.5 * self.a[0, 0] * (xs - self.c[0]) ** 2

    def gradient_grid(self, xs):
        if self.d != 1:
            raise ValueError("grid evaluation only supported for d = 1")
        return self.a[0, 0] * (xs - self.c[0])


class LeastSquaresObjective(StochasticObjective):
    """u(x) = 0.5 ||B x - b||^2 with optional additive gradient noise."""

    def __init__(self, bmat: np.ndarray, bvec: np.ndarray, noise_std: float = 0.0):
        self.bmat = np.asarray(bmat, dtype=float)
        self.bvec = np.asarray(bvec, dtype=float)
        self.noise_std = float(noise_std)
        self.d = self.bmat.shape[1]
        self.noise_dim = self.d
        self.gram = self.bmat.T @ self.bmat
        self.smoothness_L = float(np.max(np.linalg.eigvalsh(self.gram)))
        self.variance_sigma_sq = self.noise_std**2 * self.d

    def expected_value(self, x):
        r = self.bmat @ np.asarray(x, dtype=float) - self.bvec
        return 0.5 * float(r @ r)

    def expected_gradient(self, x):
        return self.bmat.T @ (self.bmat @ np.asarray(x, dtype=float) - self.bvec)

    def sample_value(self, x, xi):
        return self.expected_value(x) + self.noise_std * float(xi @ x)

    def sample_gradient(self, x, xi):
        return self.expected_gradient(x) + self.noise_std * xi


# ---------------------------------------------------------------------------
# problem instance

@dataclass
class ProblemInstance:
    n: int
    locals: tuple[StochasticObjective, ...]
    h: Regularizer
    feasible: FeasibleSet
    x_star: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if len(self.locals) != self.n:
            raise ValueError(f"expected {self.n} local objectives, got {len(self.locals)}")
        dims = {f.d for f in self.locals}
        if len(dims) != 1:
            raise ValueError(f"local objectives disagree on dimension: {sorted(dims)}")
        self.d = dims.pop()
        self.noise_dim = self.locals[0].noise_dim
        self.global_L = max(f.smoothness_L for f in self.locals)
        self.sigma_bar_sq = float(sum(f.variance_sigma_sq for f in self.locals))
        self._family = self._stack_family()

    def _stack_family(self):
        """Stacked coefficient arrays when all locals share one family, so the
        per-iteration gradient evaluations vectorize across nodes."""
        kinds = {type(f) for f in self.locals}
        if kinds == {PiecewiseCubicObjective}:
            return (
                "cubic",
                np.stack([f.dc for f in self.locals]),            # (n, 4) ascending
                np.array([f.up[0] for f in self.locals]),
                np.array([f.lo[0] for f in self.locals]),
            )
        if kinds == {QuadraticObjective}:
            return (
                "quad",
                np.stack([f.a for f in self.locals]),             # (n, d, d)
                np.stack([f.c for f in self.locals]),             # (n, d)
                np.array([f.noise_std for f in self.locals])[:, None],
            )
        if kinds == {LeastSquaresObjective}:
            return (
                "lsq",
                np.stack([f.gram for f in self.locals]),
                np.stack([f.bmat.T @ f.bvec for f in self.locals]),
                np.array([f.noise_std for f in self.locals])[:, None],
            )
        return None

    def _fast_gradients(self, xs: np.ndarray) -> np.ndarray:
        kind = self._family[0]
        if kind == "cubic":
            _k, dc, up, lo = self._family
            xv = xs[:, 0]
            out = dc[:, 3].copy()
            for j in (2, 1, 0):
                out = out * xv + dc[:, j]
            return np.where(xv > 10.0, up, np.where(xv < -10.0, lo, out))[:, None]
        if kind == "quad":
            _k, amat, centers, _sig = self._family
            return np.einsum("nij,nj->ni", amat, xs - centers)
        _k, gram, rhs, _sig = self._family
        return np.einsum("nij,nj->ni", gram, xs) - rhs

    def expected_gradients(self, xs: np.ndarray) -> np.ndarray:
        """Per-node exact gradients; xs has shape (n, d)."""
        if self._family is not None:
            return self._fast_gradients(xs)
        return np.stack([f.expected_gradient(xs[i]) for i, f in enumerate(self.locals)])

    def sample_gradients(self, xs: np.ndarray, xi: np.ndarray) -> np.ndarray:
        if self._family is not None:
            g = self._fast_gradients(xs)
            if self._family[0] == "cubic":
                return g + xi[:, :1]
            return g + self._family[3] * xi
        return np.stack([f.sample_gradient(xs[i], xi[i]) for i, f in enumerate(self.locals)])

    def loop_expected_gradients(self, xs: np.ndarray) -> np.ndarray:
        """Reference per-node path; the vectorized path must match it exactly."""
        return np.stack([f.expected_gradient(xs[i]) for i, f in enumerate(self.locals)])

    def loop_sample_gradients(self, xs: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return np.stack([f.sample_gradient(xs[i], xi[i]) for i, f in enumerate(self.locals)])

    def u_bar_gradient(self, v: np.ndarray) -> np.ndarray:
        """Gradient of the network-average smooth part at a single point."""
        g = self.locals[0].expected_gradient(v).copy()
        for f in self.locals[1:]:
            g += f.expected_gradient(v)
        return g / self.n

    def u_bar_value(self, v: np.ndarray) -> float:
        return sum(f.expected_value(v) for f in self.locals) / self.n


def global_objective(p: ProblemInstance, x: np.ndarray) -> float:
    """Noise-free U(x) = (1/n) sum_i u_i(x) + h(x)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.d,):
        raise ValueError(f"expected point of shape ({p.d},), got {x.shape}")
    return p.u_bar_value(x) + p.h.value(x)


def objective_on_grid(p: ProblemInstance, xs: np.ndarray) -> np.ndarray:
    """Vectorized noise-free U over a 1-d grid (d = 1 problems only)."""
    if p.d != 1:
        raise ValueError("grid evaluation only supported for d = 1")
    total = np.zeros_like(xs, dtype=float)
    for f in p.locals:
        total += f.value_grid(xs)
    return total / p.n + p.h.value_grid(xs)


# ---------------------------------------------------------------------------
# built-in instances

# Interior quartics in ascending coefficients:
#   (x^3 - 16 x)(x + 2)   = x^4 + 2 x^3 - 16 x^2 - 32 x
#   (0.5 x^3 + x^2)(x - 4) = 0.5 x^4 - x^3 - 4 x^2
_CUBIC_SPECS = (
    ((0.0, -32.0, -16.0, 2.0, 1.0), (4248.0, -32400.0), (-3112.0, -25040.0)),
    ((0.0, 0.0, -4.0, -1.0, 0.5), (1620.0, -12600.0), (-2220.0, -16600.0)),
    ((0.0, -32.0, -16.0, 2.0, 1.0), (288.0, -2016.0), (228.0, -2624.0)),
)


def make_piecewise_cubic_problem(box_bound: float | None = None) -> ProblemInstance:
    """The 3-node scalar non-convex instance with unit additive gradient noise."""
    locs = tuple(PiecewiseCubicObjective(*spec) for spec in _CUBIC_SPECS)
    feas: FeasibleSet = BoxSet.symmetric(box_bound, 1) if box_bound is not None else UnboundedSet()
    return ProblemInstance(n=3, locals=locs, h=ZeroRegularizer(), feasible=feas)


def make_quadratic_consensus_problem(
    n: int,
    d: int,
    seed: int,
    noise_std: float = 0.0,
    eig_range: tuple[float, float] = (0.5, 2.0),
    center_scale: float = 1.0,
) -> ProblemInstance:
    """Strongly convex test problem with a known optimum.

    Local curvatures A_i are random SPD matrices with eigenvalues in
    eig_range; the global optimum (sum A_i)^{-1} (sum A_i c_i) is stored on
    the instance for use as a test oracle.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 9001)))
    objs = []
    for _ in range(n):
        q, _r = np.linalg.qr(rng.standard_normal((d, d)))
        eigs = rng.uniform(eig_range[0], eig_range[1], size=d)
        a = q @ np.diag(eigs) @ q.T
        a = (a + a.T) / 2.0
        c = center_scale * rng.standard_normal(d)
        objs.append(QuadraticObjective(a, c, noise_std=noise_std))
    a_sum = sum(o.a for o in objs)
    rhs = sum(o.a @ o.c for o in objs)
    x_star = np.linalg.solve(a_sum, rhs)
    return ProblemInstance(
        n=n, locals=tuple(objs), h=ZeroRegularizer(), feasible=UnboundedSet(), x_star=x_star
    )


def make_lasso_problem(
    n: int,
    d: int,
    seed: int,
    samples_per_node: int | None = None,
    l1_weight: float = 0.1,
    box_bound: float | None = None,
    noise_std: float = 0.0,
) -> ProblemInstance:
    """Least squares + l1, optionally box constrained; exercises nonsmooth h at d > 1."""
    m = samples_per_node if samples_per_node is not None else 2 * d
    rng = np.random.default_rng(np.random.SeedSequence((seed, 9002)))
    x_true = rng.standard_normal(d)
    x_true[rng.random(d) < 0.5] = 0.0
    objs = []
    for _ in range(n):
        bmat = rng.standard_normal((m, d)) / np.sqrt(m)
        bvec = bmat @ x_true + 0.1 * rng.standard_normal(m)
        objs.append(LeastSquaresObjective(bmat, bvec, noise_std=noise_std))
    feas: FeasibleSet = BoxSet.symmetric(box_bound, d) if box_bound is not None else UnboundedSet()
    return ProblemInstance(n=n, locals=tuple(objs), h=L1Regularizer(l1_weight), feasible=feas)


# ---------------------------------------------------------------------------
# brute-force 1-d minimization oracle

def golden_section(f, a: float, b: float, xtol: float = 1e-6) -> tuple[float, float]:
    """Minimize a unimodal scalar function on [a, b] to within xtol."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d_ = a + invphi * (b - a)
    fc, fd = f(c), f(d_)
    while (b - a) > xtol:
        if fc < fd:
            b, d_, fd = d_, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d_, fd
            d_ = a + invphi * (b - a)
            fd = f(d_)
    x = (a + b) / 2.0
    return x, f(x)


def brute_force_minimize(
    p: ProblemInstance, lo: float, hi: float, grid_step: float
) -> list[tuple[float, float]]:
    """Locate all strict interior local minima of noise-free U on [lo, hi].

    Grid scan followed by golden-section refinement of each bracket; serves
    as the independent ground truth for convergence checks on d = 1 problems.
    """
    if p.d != 1:
        raise ValueError("brute-force minimization is only supported for d = 1")
    if grid_step <= 0:
        raise ValueError(f"grid_step must be positive, got {grid_step}")
    m = int(round((hi - lo) / grid_step)) + 1
    xs = lo + grid_step * np.arange(m)
    us = objective_on_grid(p, xs)
    minima = []
    for i in range(1, m - 1):
        if us[i] < us[i - 1] and us[i] < us[i + 1]:
            f = lambda t: float(objective_on_grid(p, np.array([t]))[0])
            x, v = golden_section(f, xs[i - 1], xs[i + 1], xtol=1e-6)
            minima.append((x, v))
    return minima
