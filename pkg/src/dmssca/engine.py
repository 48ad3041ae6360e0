"""Synchronous decentralized optimizer engine.

One round per iteration, for all nodes at once: solve the strongly convex
local subproblem, mix the relaxed iterates through W, draw one fresh sample
per node and refresh the hybrid momentum gradient estimator (the fresh
sample is evaluated at both the new and the old iterate, two oracle calls),
then mix the gradient trackers. Two reference algorithms run on the same
harness: gradient tracking with plain stochastic gradients (beta forced to
1) and proximal decentralized SGD.

Pathwise identities are enforced while running: the network averages of the
trackers and of the gradient estimators must coincide at every iteration,
and the consensus error must contract according to the mixing inequality
with ratio 2 lambda_w^2. A violation of either is an implementation bug,
never noise, so the engine raises instead of logging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import noise
from .diagnostics import IterationTrace, measure
from .graphs import MixingMatrix
from .problems import ProblemInstance
from .subproblem import (
    SubproblemInputs,
    SubproblemSolverError,
    solve_subproblem_iterative,
)

__all__ = [
    "HyperParams",
    "NetworkState",
    "SelectedOutput",
    "RunStats",
    "RunOutput",
    "StepsizeReport",
    "MonitorError",
    "InfeasibleStartError",
    "EngineError",
    "initialize",
    "step",
    "baseline_step",
    "run",
    "corollary_schedule",
    "check_stepsize_conditions",
]

ALGORITHMS = ("dmssca", "dsgt", "prox_dsgd")

_TRACKING_RTOL = 1e-9
_CONTRACTION_SLACK = 1e-12

_CLOSED_FORM_H = ("zero", "l1")
_CLOSED_FORM_SET = ("unbounded", "box")


class MonitorError(RuntimeError):
    """A pathwise identity that must hold exactly was violated."""


class InfeasibleStartError(ValueError):
    pass


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class HyperParams:
    alpha: float
    beta: float
    mu: float
    b0: int = 1
    T: int = 1
    schedule: str = "fixed"

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.b0 < 1:
            raise ValueError(f"b0 must be >= 1, got {self.b0}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.schedule not in ("fixed", "corollary1"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "corollary1":
            s = corollary_schedule(self.T)
            if (abs(self.alpha - s["alpha"]) > 1e-12
                    or abs(self.beta - s["beta"]) > 1e-12 or self.b0 != s["b0"]):
                raise ValueError(
                    "corollary1 schedule requires alpha = T^(-1/3), beta = alpha^2, "
                    f"b0 = ceil(T^(1/3)); expected {s}, "
                    f"got alpha={self.alpha}, beta={self.beta}, b0={self.b0}"
                )

    @classmethod
    def corollary1(cls, T: int, mu: float) -> "HyperParams":
        s = corollary_schedule(T)
        return cls(alpha=s["alpha"], beta=s["beta"], mu=mu, b0=s["b0"], T=T,
                   schedule="corollary1")


def corollary_schedule(T: int) -> dict:
    """Step sizes alpha = T^(-1/3), beta = alpha^2 and batch b0 = ceil(T^(1/3))."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    alpha = float(T) ** (-1.0 / 3.0)
    return {"alpha": alpha, "beta": alpha * alpha,
            "b0": math.ceil(float(T) ** (1.0 / 3.0) - 1e-9)}


@dataclass(frozen=True)
class StepsizeReport:
    admissible: bool
    alpha_max: float
    mu_min: float
    violations: tuple[str, ...]


def check_stepsize_conditions(
    hp: HyperParams, lambda_w: float, L: float, n: int
) -> StepsizeReport:
    """Evaluate the admissibility conditions on (alpha, beta, mu).

    Terms that degenerate at lambda_w = 0 are vacuous there and excluded
    from the minimum. The report never blocks a run.
    """
    if not (0.0 <= lambda_w <= 1.0):
        raise ValueError(f"lambda_w must be in [0, 1], got {lambda_w}")
    if L <= 0 or n < 1:
        raise ValueError("need L > 0 and n >= 1")
    lam2 = lambda_w * lambda_w
    one = 1.0 - lam2
    if one <= 0.0:
        mu_min = float("inf")
        alpha_max = 0.0
    else:
        mu_min = (6.0 * math.sqrt(3.0) * L / n) * (1.0 + 8.0 * lam2 / one)
        terms = [1.0 / 116.0, hp.mu / (6.0 * L)]
        if lambda_w > 0.0:
            terms.append(one**2 / (432.0 * lam2))
            terms.append((one / (24.0 * lambda_w)) ** (2.0 / 3.0))
            terms.append(hp.mu**2 * one**2 / (48.0 * L**2 * lam2))
        alpha_max = min(terms)
    violations = []
    if abs(hp.beta - hp.alpha**2) > 1e-12:
        violations.append(
            f"beta != alpha^2 (beta={hp.beta:.6g}, alpha^2={hp.alpha**2:.6g})"
        )
    if hp.alpha > alpha_max:
        violations.append(f"alpha={hp.alpha:.6g} exceeds alpha_max={alpha_max:.6g}")
    if hp.mu < mu_min:
        violations.append(f"mu={hp.mu:.6g} below mu_min={mu_min:.6g}")
    return StepsizeReport(
        admissible=not violations,
        alpha_max=alpha_max,
        mu_min=mu_min,
        violations=tuple(violations),
    )


@dataclass
class NetworkState:
    """Per-node state at the start of iteration t; arrays have shape (n, d)."""

    t: int
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    seed: int
    x_hat: np.ndarray | None = None
    w_cert: np.ndarray | None = None


@dataclass(frozen=True)
class SelectedOutput:
    node: int
    t: int
    x_hat: np.ndarray
    w_hat: np.ndarray
    gap: float


@dataclass
class RunStats:
    max_tracking_rel: float = 0.0
    contraction_checks: int = 0
    tracking_checks: int = 0
    sfo_paired: int = 0
    sfo_single: int = 0


@dataclass
class RunOutput:
    seed: int
    selected: SelectedOutput
    trace: list[IterationTrace]
    trajectory: list[tuple[int, np.ndarray]]
    final_state: NetworkState
    stats: RunStats
    algorithm: str = "dmssca"
    config_key: str = field(default="")


# ---------------------------------------------------------------------------
# core updates

def _supports_block_solve(p: ProblemInstance) -> bool:
    return p.h.kind in _CLOSED_FORM_H and p.feasible.kind in _CLOSED_FORM_SET


def _solve_all(x: np.ndarray, z: np.ndarray, y: np.ndarray, p: ProblemInstance,
               mu: float, t: int):
    """Solve every node's subproblem; closed form when exact, else iterative."""
    if _supports_block_solve(p):
        x_hat = p.feasible.project(p.h.prox(x - y / mu, 1.0 / mu))
    else:
        rows = []
        for i in range(p.n):
            inp = SubproblemInputs(x_t=x[i], z_t=z[i], y_t=y[i], mu=mu,
                                   h=p.h, feasible=p.feasible)
            try:
                rows.append(solve_subproblem_iterative(inp).x_hat)
            except SubproblemSolverError as exc:
                raise EngineError(f"subproblem solve failed at node {i}, t={t}: {exc}") from exc
        x_hat = np.stack(rows)
    w_cert = -mu * (x_hat - x) - y
    return x_hat, w_cert


def _hybrid_z(g_new: np.ndarray, g_old: np.ndarray, z: np.ndarray, beta: float) -> np.ndarray:
    """Convex combination of a plain stochastic gradient (beta = 1) and the
    recursive difference estimator (beta = 0), both under one fresh sample."""
    return g_new + (1.0 - beta) * (z - g_old)


def initialize(
    p: ProblemInstance, hp: HyperParams, x0: np.ndarray, seed: int
) -> NetworkState:
    """All nodes at the same feasible point; trackers and estimators start
    from the same size-b0 batch of sampled gradients."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (p.d,):
        raise ValueError(f"x0 must have shape ({p.d},), got {x0.shape}")
    if not p.feasible.contains(x0):
        raise InfeasibleStartError(f"x0={x0!r} is outside the feasible set")
    x = np.tile(x0, (p.n, 1))
    batch = noise.init_batch(seed, p.n, p.noise_dim, hp.b0)
    g = np.zeros((p.n, p.d))
    for r in range(hp.b0):
        g += p.sample_gradients(x, batch[r])
    g /= hp.b0
    return NetworkState(t=1, x=x, z=g.copy(), y=g.copy(), seed=seed)


def step(
    state: NetworkState, p: ProblemInstance, hp: HyperParams, w: MixingMatrix
) -> NetworkState:
    """One synchronous round; returns the state at t+1 with the round's
    subproblem solutions attached."""
    tape = noise.NoiseTape(state.seed, noise.TAG_ITER, p.n, p.noise_dim)
    x_hat, w_cert = _solve_all(state.x, state.z, state.y, p, hp.mu, state.t)
    x_new = w.w @ (state.x + hp.alpha * (x_hat - state.x))
    xi = tape.row(state.t + 1)
    g_new = p.sample_gradients(x_new, xi)
    g_old = p.sample_gradients(state.x, xi)
    z_new = _hybrid_z(g_new, g_old, state.z, hp.beta)
    y_new = w.w @ (state.y + z_new - state.z)
    return NetworkState(t=state.t + 1, x=x_new, z=z_new, y=y_new,
                        seed=state.seed, x_hat=x_hat, w_cert=w_cert)


def baseline_step(
    state: NetworkState, p: ProblemInstance, hp: HyperParams, w: MixingMatrix,
    kind: str,
) -> NetworkState:
    if kind == "dsgt":
        return step(state, p, replace(hp, beta=1.0), w)
    if kind != "prox_dsgd":
        raise ValueError(f"unknown baseline {kind!r}")
    tape = noise.NoiseTape(state.seed, noise.TAG_ITER, p.n, p.noise_dim)
    g = p.sample_gradients(state.x, tape.row(state.t))
    v = w.w @ state.x - hp.alpha * g
    x_hat = p.feasible.project(p.h.prox(v, hp.alpha))
    w_cert = (v - x_hat) / hp.alpha
    return NetworkState(t=state.t + 1, x=x_hat, z=g, y=g, seed=state.seed,
                        x_hat=x_hat, w_cert=w_cert)


# ---------------------------------------------------------------------------
# full run

def _node_gap(p: ProblemInstance, x_hat_i: np.ndarray, w_i: np.ndarray) -> float:
    g = p.u_bar_gradient(x_hat_i)
    return float(np.sum((g + w_i) ** 2))


def run(
    p: ProblemInstance,
    hp: HyperParams,
    w: MixingMatrix,
    x0: np.ndarray,
    seed: int,
    trace_every: int = 1,
    algorithm: str = "dmssca",
    record_trajectory: bool = False,
    monitors: bool = True,
) -> RunOutput:
    """Execute T rounds and report traces, monitor stats and the output
    iterate drawn uniformly over all n*T subproblem solutions.

    The selection index and all noise come from dedicated streams keyed by
    (seed, purpose), so changing trace_every or the algorithm's bookkeeping
    never perturbs the trajectory.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}")
    label = algorithm
    if algorithm == "dsgt":
        hp = replace(hp, beta=1.0)
    prox_dsgd = algorithm == "prox_dsgd"
    if trace_every < 1:
        raise ValueError(f"trace_every must be >= 1, got {trace_every}")

    n, d = p.n, p.d
    wmat = w.w
    lam2 = w.lambda_w * w.lambda_w
    mu, alpha, beta, T = hp.mu, hp.alpha, hp.beta, hp.T
    block_solve = _supports_block_solve(p)

    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (d,):
        raise ValueError(f"x0 must have shape ({d},), got {x0.shape}")
    if not p.feasible.contains(x0):
        raise InfeasibleStartError(f"x0={x0!r} is outside the feasible set")

    stats = RunStats()
    x = np.tile(x0, (n, 1))
    if prox_dsgd:
        z = np.zeros((n, d))
        y = np.zeros((n, d))
    else:
        batch = noise.init_batch(seed, n, p.noise_dim, hp.b0)
        g0 = np.zeros((n, d))
        for r in range(hp.b0):
            g0 += p.sample_gradients(x, batch[r])
        g0 /= hp.b0
        z, y = g0.copy(), g0.copy()
        stats.sfo_paired = n * hp.b0
        stats.sfo_single = n * hp.b0

    tape = noise.NoiseTape(seed, noise.TAG_ITER, n, p.noise_dim)
    sel_rng = noise.stream(seed, noise.TAG_SELECT)
    t_sel = int(sel_rng.integers(1, T + 1))
    i_sel = int(sel_rng.integers(0, n))

    trace: list[IterationTrace] = []
    trajectory: list[tuple[int, np.ndarray]] = []
    selected: SelectedOutput | None = None
    prev_theta_sq = None
    prev_delta_sq = None

    for t in range(1, T + 1):
        if prox_dsgd:
            g = p.sample_gradients(x, tape.row(t))
            z = g
            y = g
            stats.sfo_paired += n
            stats.sfo_single += n
            v = wmat @ x - alpha * g
            x_hat = p.feasible.project(p.h.prox(v, alpha))
            w_cert = (v - x_hat) / alpha
        elif block_solve:
            x_hat = p.feasible.project(p.h.prox(x - y / mu, 1.0 / mu))
            w_cert = -mu * (x_hat - x) - y
        else:
            x_hat, w_cert = _solve_all(x, z, y, p, mu, t)

        delta = x_hat - x
        delta_sq = float(np.sum(delta * delta))
        xbar = x.mean(axis=0)
        theta_sq = float(np.sum((x - xbar) ** 2))

        if monitors and not prox_dsgd and prev_theta_sq is not None:
            bound = 2.0 * lam2 * (prev_theta_sq + alpha * alpha * prev_delta_sq)
            if theta_sq > bound + _CONTRACTION_SLACK:
                raise MonitorError(
                    f"consensus contraction violated at t={t}: "
                    f"theta^2={theta_sq:.6e} > {bound:.6e} + {_CONTRACTION_SLACK}"
                )
            stats.contraction_checks += 1

        if t == t_sel:
            selected = SelectedOutput(
                node=i_sel, t=t, x_hat=x_hat[i_sel].copy(),
                w_hat=w_cert[i_sel].copy(), gap=_node_gap(p, x_hat[i_sel], w_cert[i_sel]),
            )
        if t % trace_every == 0:
            trace.append(measure(p, t, x, z, y, x_hat, w_cert,
                                 stats.sfo_paired, stats.sfo_single))
            if record_trajectory:
                trajectory.append((t, x.copy()))

        if prox_dsgd:
            x = x_hat
        else:
            x_old = x
            x = wmat @ (x_old + alpha * delta)
            xi = tape.row(t + 1)
            g_new = p.sample_gradients(x, xi)
            g_old = p.sample_gradients(x_old, xi)
            z_new = _hybrid_z(g_new, g_old, z, beta)
            y = wmat @ (y + z_new - z)
            z = z_new
            stats.sfo_paired += 2 * n
            stats.sfo_single += n
            zbar = z.mean(axis=0)
            ybar = y.mean(axis=0)
            rel = float(np.linalg.norm(ybar - zbar) / (1.0 + np.linalg.norm(zbar)))
            stats.tracking_checks += 1
            if rel > stats.max_tracking_rel:
                stats.max_tracking_rel = rel
            if monitors and rel > _TRACKING_RTOL:
                raise MonitorError(
                    f"tracker average drifted from estimator average at t={t}: "
                    f"relative error {rel:.3e} > {_TRACKING_RTOL}"
                )

        prev_theta_sq = theta_sq
        prev_delta_sq = delta_sq

    final_state = NetworkState(t=T + 1, x=x, z=z, y=y, seed=seed)
    assert selected is not None  # t_sel is always within 1..T
    return RunOutput(
        seed=seed,
        selected=selected,
        trace=trace,
        trajectory=trajectory,
        final_state=final_state,
        stats=stats,
        algorithm=label,
    )
