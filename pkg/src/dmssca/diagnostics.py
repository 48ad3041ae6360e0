"""Empirical measurement of every error quantity used in the analysis.

All expectation-based quantities are recorded as single-path realizations
(suffix _hat); their cross-seed means and standard errors come from
aggregate_runs. Gradients of the smooth parts are always evaluated with the
exact expected-gradient oracle so the measurements carry no estimator noise
of their own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import MixingMatrix
from .problems import ProblemInstance, global_objective

__all__ = ["IterationTrace", "measure", "aggregate_runs", "AggregatedTrace",
           "pathwise_monitor", "MonitorRow"]

TRACE_FIELDS = ("theta_sq", "delta_sq_mean", "phi_hat", "upsilon_hat",
                "eps_hat", "gap_mean", "u_bar")


@dataclass(frozen=True)
class IterationTrace:
    t: int
    theta_sq: float        # squared consensus error of the stacked iterate
    delta_sq_mean: float   # squared subproblem progress ||x_hat - x||^2 / n
    phi_hat: float         # averaged-estimator error ||z_bar - mean_i grad u_i(x_i)||^2
    upsilon_hat: float     # stacked-estimator error ||z - grad u(x)||^2
    eps_hat: float         # tracker disagreement ||y - replicated y_bar||^2
    gap_mean: float        # (1/n) sum_i ||grad u(x_hat_i) + w_i||^2
    u_bar: float           # noise-free objective at the network average
    sfo_calls: int         # cumulative oracle calls, paired evaluation = two calls
    sfo_calls_single: int  # cumulative oracle calls, paired evaluation = one call


def measure(
    p: ProblemInstance,
    t: int,
    x: np.ndarray,
    z: np.ndarray,
    y: np.ndarray,
    x_hat: np.ndarray,
    w_cert: np.ndarray,
    sfo_paired: int,
    sfo_single: int,
) -> IterationTrace:
    """Snapshot the iteration-t state together with its subproblem solutions."""
    n = p.n
    xbar = x.mean(axis=0)
    theta_sq = float(np.sum((x - xbar) ** 2))
    delta_sq_mean = float(np.sum((x_hat - x) ** 2)) / n
    grads = p.expected_gradients(x)
    phi_hat = float(np.sum((z.mean(axis=0) - grads.mean(axis=0)) ** 2))
    upsilon_hat = float(np.sum((z - grads) ** 2))
    ybar = y.mean(axis=0)
    eps_hat = float(np.sum((y - ybar) ** 2))
    gap = 0.0
    for i in range(n):
        gi = p.u_bar_gradient(x_hat[i])
        gap += float(np.sum((gi + w_cert[i]) ** 2))
    return IterationTrace(
        t=t,
        theta_sq=theta_sq,
        delta_sq_mean=delta_sq_mean,
        phi_hat=phi_hat,
        upsilon_hat=upsilon_hat,
        eps_hat=eps_hat,
        gap_mean=gap / n,
        u_bar=global_objective(p, xbar),
        sfo_calls=sfo_paired,
        sfo_calls_single=sfo_single,
    )


@dataclass
class AggregatedTrace:
    t: np.ndarray
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    n_runs: int


def aggregate_runs(runs, require_same_config: bool = True) -> AggregatedTrace:
    """Cross-seed mean and standard error of every trace field.

    Accepts RunOutput objects or bare lists of IterationTrace. Runs must
    share the t grid, and (when available) the same configuration key;
    aggregating runs of different experiments is a bug, not an average.
    """
    if len(runs) < 2:
        raise ValueError("aggregation needs at least 2 runs")
    traces = [r.trace if hasattr(r, "trace") else r for r in runs]
    if require_same_config:
        keys = {r.config_key for r in runs if hasattr(r, "config_key") and r.config_key}
        if len(keys) > 1:
            raise ValueError(f"refusing to aggregate runs with different configs: {sorted(keys)}")
    grids = [tuple(tr.t for tr in seq) for seq in traces]
    if len(set(grids)) != 1:
        raise ValueError("runs have mismatched trace grids")
    tgrid = np.array(grids[0], dtype=int)
    mean: dict[str, np.ndarray] = {}
    stderr: dict[str, np.ndarray] = {}
    r = len(traces)
    for name in TRACE_FIELDS:
        data = np.array([[getattr(tr, name) for tr in seq] for seq in traces])
        mean[name] = data.mean(axis=0)
        stderr[name] = data.std(axis=0, ddof=1) / np.sqrt(r)
    return AggregatedTrace(t=tgrid, mean=mean, stderr=stderr, n_runs=r)


@dataclass(frozen=True)
class MonitorRow:
    name: str
    lhs: float
    rhs: float
    holds: bool


def pathwise_monitor(prev_state, state, alpha: float, mixing: MixingMatrix) -> list[MonitorRow]:
    """Evaluate the three pathwise identities between consecutive states.

    prev_state is the state at t, state the one at t+1 carrying the round-t
    subproblem solutions in state.x_hat. All three rows must hold on any
    correct trajectory; a False is an implementation fault.
    """
    if state.x_hat is None:
        raise ValueError("current state carries no subproblem solutions")
    lam2 = mixing.lambda_w**2
    xp = prev_state.x
    xc = state.x
    theta_prev_sq = float(np.sum((xp - xp.mean(axis=0)) ** 2))
    theta_cur_sq = float(np.sum((xc - xc.mean(axis=0)) ** 2))
    delta_sq = float(np.sum((state.x_hat - xp) ** 2))
    rows = []

    rhs = 2.0 * lam2 * theta_prev_sq + 2.0 * alpha**2 * lam2 * delta_sq + 1e-12
    rows.append(MonitorRow("consensus_contraction_recursion", theta_cur_sq, rhs,
                           theta_cur_sq <= rhs))

    mixed = mixing.w @ xp
    lhs_mix = float(np.linalg.norm(mixed - xp.mean(axis=0)))
    rhs_mix = mixing.lambda_w * float(np.linalg.norm(xp - xp.mean(axis=0))) + 1e-12
    rows.append(MonitorRow("mixing_contraction", lhs_mix, rhs_mix, lhs_mix <= rhs_mix))

    zbar = state.z.mean(axis=0)
    ybar = state.y.mean(axis=0)
    rel = float(np.linalg.norm(ybar - zbar) / (1.0 + np.linalg.norm(zbar)))
    rows.append(MonitorRow("tracker_average_identity", rel, 1e-9, rel <= 1e-9))
    return rows
