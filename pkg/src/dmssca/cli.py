"""Config-driven experiment runner.

Subcommands:
  run     --config cfg.json [--seed N] [--out DIR] [--replicates N] [--workers N]
  preset  --name {fig1,fig2,fig3,fig4} --out DIR
  check   --config cfg.json

A run config is one JSON document; see RunConfig for the schema. Every run
writes trace.csv, trajectory.csv, summary.json and config_echo.json into its
output directory, all floats with 17 significant digits and no timestamps,
so identical configs produce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import noise
from .engine import (
    HyperParams,
    RunOutput,
    check_stepsize_conditions,
    run,
)
from .graphs import (
    GraphValidationError,
    MixingMatrix,
    build_graph,
    build_mixing_matrix,
    load_edge_list,
    mixing_from_matrix,
)
from .problems import (
    ProblemInstance,
    make_lasso_problem,
    make_piecewise_cubic_problem,
    make_quadratic_consensus_problem,
    objective_on_grid,
)

TRACE_COLUMNS = ("run_id", "seed", "t", "theta_sq", "delta_sq_mean", "phi_hat",
                 "upsilon_hat", "eps_hat", "gap_mean", "U_bar", "sfo_calls")
TRAJECTORY_COLUMNS = ("run_id", "seed", "t", "node", "coord", "value")
UFUNC_COLUMNS = ("x", "U")

PROBLEM_NAMES = ("piecewise_cubic_3node", "quadratic_consensus", "lasso_least_squares")


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


def _fmt(v: float) -> str:
    return f"{v:.17g}"


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    problem: dict
    topology: dict
    mixing: dict
    hyper: dict
    x0: object
    seed: int
    replicates: int
    trace_every: int
    output_dir: str

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        required = ("problem", "topology", "mixing", "hyper", "x0", "seed",
                    "replicates", "trace_every", "output_dir")
        for key in required:
            if key not in raw:
                raise ConfigError(f"missing field {key!r}")
        unknown = set(raw) - set(required)
        if unknown:
            raise ConfigError(f"unknown fields {sorted(unknown)}")
        cfg = cls(**{k: raw[k] for k in required})
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        if not isinstance(self.problem, dict) or "name" not in self.problem:
            raise ConfigError("field 'problem' must be an object with a 'name'")
        if self.problem["name"] not in PROBLEM_NAMES:
            raise ConfigError(
                f"field 'problem.name': unknown problem {self.problem['name']!r}, "
                f"expected one of {PROBLEM_NAMES}"
            )
        if not isinstance(self.topology, dict) or "kind" not in self.topology:
            raise ConfigError("field 'topology' must be an object with a 'kind'")
        if not isinstance(self.mixing, dict) or "scheme" not in self.mixing:
            raise ConfigError("field 'mixing' must be an object with a 'scheme'")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("field 'seed' must be a nonnegative integer")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError("field 'replicates' must be a positive integer")
        if not isinstance(self.trace_every, int) or self.trace_every < 1:
            raise ConfigError("field 'trace_every' must be a positive integer")
        # raise early on anything structurally wrong
        self.resolve_problem()
        self.resolve_mixing()
        self.resolve_hyper()
        self.resolve_x0(self.seed, probe=True)

    # -- resolution ---------------------------------------------------------

    def resolve_problem(self) -> ProblemInstance:
        p = dict(self.problem)
        name = p.pop("name")
        n = int(self.topology.get("n", 0))
        if name == "piecewise_cubic_3node":
            box = p.pop("box_bound", None)
            if p:
                raise ConfigError(f"field 'problem': unknown parameters {sorted(p)}")
            if n != 3:
                raise ConfigError("field 'topology.n': piecewise_cubic_3node needs n = 3")
            return make_piecewise_cubic_problem(box_bound=box)
        if name == "quadratic_consensus":
            kwargs = dict(
                n=n,
                d=int(p.pop("d", 1)),
                seed=int(p.pop("problem_seed", 0)),
                noise_std=float(p.pop("noise_std", 0.0)),
                eig_range=tuple(p.pop("eig_range", (0.5, 2.0))),
                center_scale=float(p.pop("center_scale", 1.0)),
            )
            if p:
                raise ConfigError(f"field 'problem': unknown parameters {sorted(p)}")
            return make_quadratic_consensus_problem(**kwargs)
        kwargs = dict(
            n=n,
            d=int(p.pop("d", 2)),
            seed=int(p.pop("problem_seed", 0)),
            samples_per_node=p.pop("samples_per_node", None),
            l1_weight=float(p.pop("l1_weight", 0.1)),
            box_bound=p.pop("box_bound", None),
            noise_std=float(p.pop("noise_std", 0.0)),
        )
        if p:
            raise ConfigError(f"field 'problem': unknown parameters {sorted(p)}")
        return make_lasso_problem(**kwargs)

    def resolve_mixing(self) -> MixingMatrix:
        t = dict(self.topology)
        m = dict(self.mixing)
        scheme = m.pop("scheme")
        try:
            if scheme == "custom":
                matrix = m.pop("matrix", None)
                if m:
                    raise ConfigError(f"field 'mixing': unknown parameters {sorted(m)}")
                if matrix is None:
                    raise ConfigError("field 'mixing.matrix': required for scheme 'custom'")
                return mixing_from_matrix(np.asarray(matrix, dtype=float))
            laziness = float(m.pop("laziness", 0.5))
            if m:
                raise ConfigError(f"field 'mixing': unknown parameters {sorted(m)}")
            kind = t.pop("kind")
            n = int(t.pop("n"))
            if kind == "custom":
                edge_file = t.pop("edge_file", None)
                edges = t.pop("edges", None)
                if edge_file is not None:
                    g = load_edge_list(edge_file)
                    if g.n != n:
                        raise ConfigError(
                            f"field 'topology.n': edge file declares {g.n} nodes, config says {n}"
                        )
                elif edges is not None:
                    g = build_graph("custom", n, [tuple(e) for e in edges])
                else:
                    raise ConfigError("field 'topology': custom kind needs 'edges' or 'edge_file'")
            else:
                g = build_graph(kind, n)
            if t:
                raise ConfigError(f"field 'topology': unknown parameters {sorted(t)}")
            return build_mixing_matrix(g, scheme=scheme, laziness=laziness)
        except GraphValidationError as exc:
            raise ConfigError(f"field 'topology'/'mixing': {exc}") from exc

    def resolve_hyper(self) -> HyperParams:
        h = dict(self.hyper)
        schedule = h.get("schedule", "fixed")
        try:
            if schedule == "corollary1":
                return HyperParams.corollary1(T=int(h["T"]), mu=float(h["mu"]))
            return HyperParams(
                alpha=float(h["alpha"]),
                beta=float(h["beta"]),
                mu=float(h["mu"]),
                b0=int(h.get("b0", 1)),
                T=int(h["T"]),
                schedule="fixed",
            )
        except KeyError as exc:
            raise ConfigError(f"field 'hyper.{exc.args[0]}': required") from exc
        except ValueError as exc:
            raise ConfigError(f"field 'hyper': {exc}") from exc

    def resolve_x0(self, seed: int, probe: bool = False) -> np.ndarray:
        p = self.resolve_problem()
        if isinstance(self.x0, str):
            if self.x0 == "zeros":
                return np.zeros(p.d)
            m = re.fullmatch(r"uniform\(\s*(-?[\d.eE+-]+)\s*,\s*(-?[\d.eE+-]+)\s*\)", self.x0)
            if m:
                lo, hi = float(m.group(1)), float(m.group(2))
                if probe:
                    return np.zeros(p.d)
                return noise.stream(seed, noise.TAG_X0).uniform(lo, hi, size=p.d)
            raise ConfigError(f"field 'x0': unknown rule {self.x0!r}")
        arr = np.asarray(self.x0, dtype=float)
        if arr.shape != (p.d,):
            raise ConfigError(f"field 'x0': expected {p.d} coordinates, got shape {arr.shape}")
        return arr

    # -- hashing / echo ------------------------------------------------------

    def canonical_dict(self) -> dict:
        return {
            "problem": self.problem,
            "topology": self.topology,
            "mixing": self.mixing,
            "hyper": self.hyper,
            "x0": self.x0,
            "seed": self.seed,
            "replicates": self.replicates,
            "trace_every": self.trace_every,
            "output_dir": self.output_dir,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def aggregation_key(self) -> str:
        d = self.canonical_dict()
        for k in ("seed", "replicates", "output_dir"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# execution

def _one_replicate(cfg: RunConfig, rep: int) -> tuple[str, RunOutput]:
    p = cfg.resolve_problem()
    w = cfg.resolve_mixing()
    hp = cfg.resolve_hyper()
    seed = cfg.seed + rep
    x0 = cfg.resolve_x0(seed)
    out = run(p, hp, w, x0, seed, trace_every=cfg.trace_every, record_trajectory=True)
    out.config_key = cfg.aggregation_key()
    return f"rep{rep:03d}", out


def run_replicates(cfg: RunConfig, workers: int = 1) -> list[tuple[str, RunOutput]]:
    """Execute all replicates; merge order is deterministic by replicate index."""
    if workers <= 1 or cfg.replicates == 1:
        return [_one_replicate(cfg, r) for r in range(cfg.replicates)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_one_replicate, cfg, r) for r in range(cfg.replicates)]
        return [f.result() for f in futures]


def write_trace_csv(path, rows: list[tuple[str, int, object]]) -> None:
    """rows: (run_id, seed, IterationTrace)"""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRACE_COLUMNS)
        for run_id, seed, tr in rows:
            wr.writerow([
                run_id, seed, tr.t, _fmt(tr.theta_sq), _fmt(tr.delta_sq_mean),
                _fmt(tr.phi_hat), _fmt(tr.upsilon_hat), _fmt(tr.eps_hat),
                _fmt(tr.gap_mean), _fmt(tr.u_bar), tr.sfo_calls,
            ])


def write_trajectory_csv(path, rows: list[tuple[str, int, int, int, int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRAJECTORY_COLUMNS)
        for run_id, seed, t, node, coord, value in rows:
            wr.writerow([run_id, seed, t, node, coord, _fmt(value)])


def _trace_rows(results: list[tuple[str, RunOutput]]):
    return [(rid, out.seed, tr) for rid, out in results for tr in out.trace]


def _trajectory_rows(results: list[tuple[str, RunOutput]]):
    rows = []
    for rid, out in results:
        for t, x in out.trajectory:
            for node in range(x.shape[0]):
                for coord in range(x.shape[1]):
                    rows.append((rid, out.seed, t, node, coord, float(x[node, coord])))
    return rows


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size < 2:
        return float(a.mean()), 0.0
    return float(a.mean()), float(a.std(ddof=1) / np.sqrt(a.size))


def _summary(cfg: RunConfig, results: list[tuple[str, RunOutput]]) -> dict:
    p = cfg.resolve_problem()
    w = cfg.resolve_mixing()
    hp = cfg.resolve_hyper()
    report = check_stepsize_conditions(hp, w.lambda_w, p.global_L, p.n)
    final_gaps = [out.trace[-1].gap_mean for _rid, out in results if out.trace]
    sel_gaps = [out.selected.gap for _rid, out in results]
    fg_mean, fg_se = _mean_stderr(final_gaps) if final_gaps else (float("nan"), 0.0)
    sg_mean, sg_se = _mean_stderr(sel_gaps)
    return {
        "config_hash": cfg.config_hash(),
        "aggregation_key": cfg.aggregation_key(),
        "replicates": cfg.replicates,
        "lambda_w": w.lambda_w,
        "problem_L": p.global_L,
        "sigma_bar_sq": p.sigma_bar_sq,
        "admissibility": {
            "admissible": report.admissible,
            "alpha_max": report.alpha_max,
            "mu_min": report.mu_min,
            "violations": list(report.violations),
        },
        "final_gap_mean": fg_mean,
        "final_gap_stderr": fg_se,
        "selected_gap_mean": sg_mean,
        "selected_gap_stderr": sg_se,
        # average subproblem progress, per-node-mean and stacked conventions
        "avg_delta_sq_mean": _mean_stderr(
            [float(np.mean([tr.delta_sq_mean for tr in out.trace]))
             for _rid, out in results if out.trace])[0] if results[0][1].trace else float("nan"),
        "avg_delta_sq_stacked": _mean_stderr(
            [float(np.mean([tr.delta_sq_mean * p.n for tr in out.trace]))
             for _rid, out in results if out.trace])[0] if results[0][1].trace else float("nan"),
        "selected_outputs": [
            {
                "run_id": rid,
                "seed": out.seed,
                "node": out.selected.node,
                "t": out.selected.t,
                "x": [float(v) for v in out.selected.x_hat],
                "gap": out.selected.gap,
            }
            for rid, out in results
        ],
        "sfo_calls_paired": results[0][1].stats.sfo_paired,
        "sfo_calls_single": results[0][1].stats.sfo_single,
        "max_tracking_rel": max(out.stats.max_tracking_rel for _rid, out in results),
    }


def cli_run(cfg: RunConfig, workers: int = 1) -> int:
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    results = run_replicates(cfg, workers=workers)
    write_trace_csv(outdir / "trace.csv", _trace_rows(results))
    write_trajectory_csv(outdir / "trajectory.csv", _trajectory_rows(results))
    (outdir / "summary.json").write_text(json.dumps(_summary(cfg, results), indent=2) + "\n")
    (outdir / "config_echo.json").write_text(
        json.dumps(cfg.canonical_dict(), sort_keys=True, indent=2) + "\n"
    )
    return 0


# ---------------------------------------------------------------------------
# presets

FIG_HYPER = {"alpha": 0.8, "beta": 0.16, "mu": 5000.0, "b0": 1, "T": 2000, "schedule": "fixed"}
FIG1_INITS = (-3.5, -1.5, 0.0, 1.5, 3.5)
PRESET_REPLICATES = 20
PRESET_TRACE_EVERY = 10


def _cubic_config(out: str, x0, seed: int, box_bound=None, topology=None, mixing=None,
                  replicates: int = PRESET_REPLICATES) -> RunConfig:
    problem = {"name": "piecewise_cubic_3node"}
    if box_bound is not None:
        problem["box_bound"] = box_bound
    return RunConfig.from_dict({
        "problem": problem,
        "topology": topology or {"kind": "complete", "n": 3},
        "mixing": mixing or {"scheme": "lazy-uniform", "laziness": 0.5},
        "hyper": dict(FIG_HYPER),
        "x0": x0,
        "seed": seed,
        "replicates": replicates,
        "trace_every": PRESET_TRACE_EVERY,
        "output_dir": out,
    })


def preset_fig1(outdir: Path, replicates: int = PRESET_REPLICATES) -> dict:
    """Local-variable evolution from several initializations, unconstrained."""
    all_results = []
    configs = []
    for k, x0 in enumerate(FIG1_INITS):
        cfg = _cubic_config(str(outdir), [x0], seed=1000 * (k + 1), replicates=replicates)
        configs.append(cfg.canonical_dict())
        for rid, out in run_replicates(cfg):
            all_results.append((f"init{k}_x0={x0:g}_{rid}", out, cfg))
    write_trace_csv(outdir / "trace.csv",
                    [(rid, out.seed, tr) for rid, out, _c in all_results for tr in out.trace])
    write_trajectory_csv(outdir / "trajectory.csv",
                         _trajectory_rows([(rid, out) for rid, out, _c in all_results]))
    summary = {
        "preset": "fig1",
        "inits": list(FIG1_INITS),
        "replicates": replicates,
        "final_mean_iterate": [
            {
                "run_id": rid,
                "seed": out.seed,
                "x_bar_final": [float(v) for v in out.trajectory[-1][1].mean(axis=0)],
            }
            for rid, out, _c in all_results
        ],
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (outdir / "config_echo.json").write_text(
        json.dumps({"preset": "fig1", "configs": configs}, sort_keys=True, indent=2) + "\n"
    )
    return summary


def preset_fig2(outdir: Path, replicates: int = PRESET_REPLICATES) -> dict:
    """Constrained evolution: box |x| <= 2.25, all nodes started at 0."""
    cfg = _cubic_config(str(outdir), "zeros", seed=4000, box_bound=2.25,
                        replicates=replicates)
    results = run_replicates(cfg)
    write_trace_csv(outdir / "trace.csv", _trace_rows(results))
    write_trajectory_csv(outdir / "trajectory.csv", _trajectory_rows(results))
    summary = _summary(cfg, results)
    summary["preset"] = "fig2"
    summary["box_bound"] = 2.25
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (outdir / "config_echo.json").write_text(
        json.dumps({"preset": "fig2", "configs": [cfg.canonical_dict()]},
                   sort_keys=True, indent=2) + "\n"
    )
    return summary


def preset_fig3(outdir: Path, replicates: int = PRESET_REPLICATES) -> dict:
    """Consensus residual on the complete graph versus the 3-node tree.

    Started mid-basin (x0 = 1.5) so the disagreement signal at moderate t is
    dominated by gradient heterogeneity rather than thin noise tails.
    """
    nets = {
        "complete": ({"kind": "complete", "n": 3}, {"scheme": "lazy-uniform", "laziness": 0.5}),
        "tree": ({"kind": "path", "n": 3}, {"scheme": "metropolis"}),
    }
    configs = []
    lambda_w = {}
    for tag, (topology, mixing) in nets.items():
        cfg = _cubic_config(str(outdir), [1.5], seed=5000, topology=topology,
                            mixing=mixing, replicates=replicates)
        configs.append(cfg.canonical_dict())
        lambda_w[tag] = cfg.resolve_mixing().lambda_w
        results = run_replicates(cfg)
        write_trace_csv(outdir / f"trace_topology={tag}.csv", _trace_rows(results))
    summary = {"preset": "fig3", "replicates": replicates, "lambda_w": lambda_w}
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (outdir / "config_echo.json").write_text(
        json.dumps({"preset": "fig3", "configs": configs}, sort_keys=True, indent=2) + "\n"
    )
    return summary


def preset_fig4(outdir: Path) -> dict:
    """Dense tabulation of the noise-free objective over [-4, 4]."""
    p = make_piecewise_cubic_problem()
    xs = np.arange(-400, 401) * 0.01
    us = objective_on_grid(p, xs)
    with open(outdir / "ufunc.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(UFUNC_COLUMNS)
        for x, u in zip(xs, us):
            wr.writerow([_fmt(float(x)), _fmt(float(u))])
    return {"preset": "fig4", "rows": len(xs)}


PRESETS = {"fig1": preset_fig1, "fig2": preset_fig2, "fig3": preset_fig3, "fig4": preset_fig4}


def cli_preset(name: str, out: str) -> int:
    if name not in PRESETS:
        print(f"error: unknown preset {name!r}, expected one of {sorted(PRESETS)}",
              file=sys.stderr)
        return 2
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    PRESETS[name](outdir)
    return 0


# ---------------------------------------------------------------------------
# check

def cli_check(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    p = cfg.resolve_problem()
    w = cfg.resolve_mixing()
    hp = cfg.resolve_hyper()
    rows = np.abs(w.w.sum(axis=1) - 1.0).max()
    cols = np.abs(w.w.sum(axis=0) - 1.0).max()
    report = check_stepsize_conditions(hp, w.lambda_w, p.global_L, p.n)
    print(f"mixing: n={w.n}  max row-sum dev={rows:.3e}  max col-sum dev={cols:.3e}", file=stream)
    print(f"mixing: lambda_w={w.lambda_w:.12g}", file=stream)
    if w.lambda_w >= 1.0 - 1e-12:
        print("warning: lambda_w >= 1, no consensus contraction", file=stream)
    print(f"problem: n={p.n}  d={p.d}  L={p.global_L:.12g}  sigma_bar_sq={p.sigma_bar_sq:.12g}",
          file=stream)
    print(f"conditions: mu_min={report.mu_min:.12g}  alpha_max={report.alpha_max:.12g}",
          file=stream)
    if report.admissible:
        print("verdict: admissible", file=stream)
    else:
        print(f"verdict: inadmissible ({'; '.join(report.violations)})", file=stream)
    return 0


# ---------------------------------------------------------------------------
# entry point

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dmssca",
                                     description="decentralized stochastic SCA experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--replicates", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=1)

    p_preset = sub.add_parser("preset", help="run a built-in experiment preset")
    p_preset.add_argument("--name", required=True)
    p_preset.add_argument("--out", required=True)

    p_check = sub.add_parser("check", help="validate mixing and step-size conditions")
    p_check.add_argument("--config", required=True)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "run":
            cfg = load_config(args.config)
            raw = cfg.canonical_dict()
            if args.seed is not None:
                raw["seed"] = args.seed
            if args.out is not None:
                raw["output_dir"] = args.out
            if args.replicates is not None:
                raw["replicates"] = args.replicates
            cfg = RunConfig.from_dict(raw)
            return cli_run(cfg, workers=args.workers)
        if args.command == "preset":
            return cli_preset(args.name, args.out)
        cfg = load_config(args.config)
        return cli_check(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
