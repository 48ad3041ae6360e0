"""Per-node strongly convex subproblem solvers.

With the quadratic surrogate, the smooth part of the node subproblem has
gradient z_t + mu (x - x_t) at the expansion point plus the tracker
correction y_t - z_t, so the whole objective collapses to

    argmin_{x in X}  (mu/2) ||x - (x_t - y_t / mu)||^2 + h(x).

Every minimizer comes with a subgradient certificate
w_hat = -mu (x_hat - x_t) - y_t in the subdifferential of h plus the set
indicator at x_hat; the stationarity measure is built from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import FeasibleSet, ProblemInstance, Regularizer

_CLOSED_FORM_H = ("zero", "l1")
_CLOSED_FORM_SET = ("unbounded", "box")


class UnsupportedCompositeError(ValueError):
    """The (h, feasible set) pair has no exact coordinatewise solution."""


@dataclass(frozen=True)
class SurrogateSpec:
    """Strongly convex model of one local objective around the current iterate.

    Only the quadratic-proximal kind ships: value plus inner product of the
    sampled gradient with the displacement plus (mu/2) times its squared norm.
    Tangent matching (surrogate gradient at the expansion point equals the
    sampled gradient) and mu-strong convexity hold identically for it.
    """

    mu: float
    kind: str = "quadratic-proximal"

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.kind != "quadratic-proximal":
            raise ValueError(f"unsupported surrogate kind {self.kind!r}")

    def gradient(self, g_sample: np.ndarray, x: np.ndarray, x_t: np.ndarray) -> np.ndarray:
        return g_sample + self.mu * (x - x_t)


class SubproblemSolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SubproblemInputs:
    x_t: np.ndarray
    z_t: np.ndarray
    y_t: np.ndarray
    mu: float
    h: Regularizer
    feasible: FeasibleSet

    def __post_init__(self):
        if not (self.x_t.shape == self.z_t.shape == self.y_t.shape):
            raise ValueError("x_t, z_t, y_t must share one dimension")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")


@dataclass(frozen=True)
class SubproblemSolution:
    x_hat: np.ndarray
    w_hat: np.ndarray
    inner_iterations: int


def _certificate(inp: SubproblemInputs, x_hat: np.ndarray) -> np.ndarray:
    return -inp.mu * (x_hat - inp.x_t) - inp.y_t


def solve_subproblem_closed_form(inp: SubproblemInputs) -> SubproblemSolution:
    """Exact prox-then-clamp path for separable h over a box (or no) constraint."""
    if inp.h.kind not in _CLOSED_FORM_H or inp.feasible.kind not in _CLOSED_FORM_SET:
        raise UnsupportedCompositeError(
            f"no closed form for h={inp.h.kind!r} with set={inp.feasible.kind!r}; "
            "use the iterative solver"
        )
    target = inp.x_t - inp.y_t / inp.mu
    x_hat = inp.feasible.project(inp.h.prox(target, 1.0 / inp.mu))
    return SubproblemSolution(x_hat=x_hat, w_hat=_certificate(inp, x_hat), inner_iterations=0)


def solve_subproblem_iterative(
    inp: SubproblemInputs, tol: float = 1e-10, max_iter: int = 10_000
) -> SubproblemSolution:
    """Forward-backward iteration on the collapsed objective.

    Gradient step 1/(2 mu) on the mu-quadratic makes the fixed-point map a
    1/2-contraction, so the residual halves every pass; stops when
    ||x - T(x)|| <= tol.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    target = inp.x_t - inp.y_t / inp.mu
    step = 1.0 / (2.0 * inp.mu)
    x = inp.feasible.project(np.array(inp.x_t, dtype=float))
    for it in range(1, max_iter + 1):
        grad = inp.mu * (x - target)
        x_next = inp.feasible.project(inp.h.prox(x - step * grad, step))
        residual = float(np.linalg.norm(x_next - x))
        x = x_next
        if residual <= tol:
            return SubproblemSolution(x_hat=x, w_hat=_certificate(inp, x), inner_iterations=it)
    raise SubproblemSolverError(
        f"subproblem did not reach tol={tol} in {max_iter} iterations "
        f"(last residual {residual:.3e})",
        residual=residual,
    )


def subproblem_objective(inp: SubproblemInputs, x: np.ndarray) -> float:
    """Collapsed subproblem objective value (for decrease checks and tests)."""
    q = 0.5 * inp.mu * float(np.sum((x - (inp.x_t - inp.y_t / inp.mu)) ** 2))
    return q + inp.h.value(x)


def stationarity_residual(p: ProblemInstance, sol: SubproblemSolution) -> float:
    """Squared stationarity gap ||grad u(x_hat) + w_hat||^2 of one solution,
    where u is the network-average smooth part."""
    g = p.u_bar_gradient(sol.x_hat)
    return float(np.sum((g + sol.w_hat) ** 2))
