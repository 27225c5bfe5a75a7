"""Experiment runner: scenario files, sweeps, CSV outputs, assumption checks.

A scenario JSON document fully determines a reproduction run: the instance
(builtin two-queue or a file), the controllers, the V grid, seeds, horizon,
and the convergence-radius policy. Sweeps write one ``summary.csv`` row per
(controller, V, seed) run plus an ``oracle.csv`` row per V, optional per-run
trace files, and a ``manifest.json``. ``plotdata`` aggregates a summary into
per-figure mean/stderr tables. All CSVs are comma-delimited, UTF-8, LF,
header row first; outputs are byte-identical across repeated invocations.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dual
from .controllers import KINDS, ControllerConfig
from .model import InstanceError, NetworkInstance, build_two_queue_example, load_instance_file
from .sim import RunResult, SimConfig, run

__all__ = ["Scenario", "ScenarioError", "run_scenario", "emit_plotdata", "main"]

OUT_DIR_ENV = "OLACSIM_OUT"

SUMMARY_COLUMNS_BASE = [
    "controller", "V", "seed", "horizon", "avg_cost", "avg_backlog", "mean_delay",
]
SUMMARY_COLUMNS_TAIL = ["T_zeta_first", "T_zeta_sustained", "dropped_total", "T_l", "solver_flagged_slots"]

ORACLE_COLUMNS_BASE = ["V", "f_av_star", "g_star"]
ORACLE_COLUMNS_TAIL = ["eta_0", "rho_hat", "D_p", "eta", "B", "f_max", "min_perturbed_slack"]


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    """Validated scenario document."""

    instance: NetworkInstance
    instance_desc: dict
    controllers: list[ControllerConfig]
    v_values: list[float]
    seeds: list[int]
    horizon: int
    zeta_policy: str = "auto_Dp"            # or "absolute"
    zeta_value: float | None = None
    out_dir: str | None = None
    trace: bool = False
    metric_sample_period: int = 100
    assumption_check: bool = False
    perturbation_count: int = 100
    epsilon_s: float = 0.05
    workers: int = 1
    rho_samples: int = 512
    rho_seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".") -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario document must be an object")
        try:
            inst_desc = doc["instance"]
            controllers_raw = doc["controllers"]
            v_values = [float(v) for v in doc["V_values"]]
            seeds = [int(s) for s in doc["seeds"]]
            horizon = int(doc["horizon"])
        except KeyError as exc:
            raise ScenarioError(f"missing scenario field {exc}") from exc
        if not controllers_raw or not v_values or not seeds:
            raise ScenarioError("controllers, V_values and seeds must be non-empty")

        if "builtin" in inst_desc:
            if inst_desc["builtin"] != "two_queue":
                raise ScenarioError(f"unknown builtin instance {inst_desc['builtin']!r}")
            channel = inst_desc.get("channel_dist", [0.25, 0.25, 0.25, 0.25])
            instance = build_two_queue_example(channel)
        elif "file" in inst_desc:
            path = inst_desc["file"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            instance = load_instance_file(path)
        else:
            raise ScenarioError("instance must give 'builtin' or 'file'")

        controllers = []
        for c in controllers_raw:
            if not isinstance(c, dict) or "kind" not in c:
                raise ScenarioError("each controller needs a 'kind'")
            if c["kind"] not in KINDS:
                raise ScenarioError(f"unknown controller kind {c['kind']!r}")
            kwargs = {"kind": c["kind"], "V": 1.0}
            for key in ("c", "relearn_period", "theta_log_base"):
                if key in c:
                    kwargs[key] = c[key]
            if "theta" in c and c["theta"] is not None:
                kwargs["theta"] = np.asarray(c["theta"], dtype=float)
            if "discipline" in c:
                kwargs["discipline"] = c["discipline"]
            if "prior" in c and c["prior"] is not None:
                kwargs["prior"] = np.asarray(c["prior"], dtype=float)
            controllers.append(kwargs)

        zeta = doc.get("zeta", {"policy": "auto_Dp"})
        policy = zeta.get("policy", "auto_Dp")
        if policy not in ("auto_Dp", "absolute"):
            raise ScenarioError(f"unknown zeta policy {policy!r}")
        zeta_value = float(zeta["value"]) if policy == "absolute" else None

        return cls(
            instance=instance,
            instance_desc=inst_desc,
            controllers=controllers,
            v_values=v_values,
            seeds=seeds,
            horizon=horizon,
            zeta_policy=policy,
            zeta_value=zeta_value,
            out_dir=doc.get("out_dir"),
            trace=bool(doc.get("trace", False)),
            metric_sample_period=int(doc.get("metric_sample_period", 100)),
            assumption_check=bool(doc.get("assumption_check", False)),
            perturbation_count=int(doc.get("perturbation_count", 100)),
            epsilon_s=float(doc.get("epsilon_s", 0.05)),
            workers=int(doc.get("workers", 1)),
            rho_samples=int(doc.get("rho_samples", 512)),
            rho_seed=int(doc.get("rho_seed", 0)),
        )

    @classmethod
    def from_file(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioError(
                    f"parse error in {path} at line {exc.lineno} column {exc.colno}: {exc.msg}"
                ) from exc
        return cls.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def _fmt(value) -> str:
    """Deterministic CSV cell: shortest round-trip floats, empty for None."""
    if value is None:
        return ""
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _controller_label(kwargs: dict) -> str:
    return kwargs["kind"]


def _execute_run(args):
    """Worker entry: one (controller, V, seed) simulation."""
    instance, ctrl_kwargs, v, seed, horizon, zeta, period, gamma_star = args
    ctrl = ControllerConfig(**{**ctrl_kwargs, "V": v})
    cfg = SimConfig(horizon=horizon, seed=seed, controller=ctrl, zeta=zeta, metric_sample_period=period)
    return run(instance, cfg, gamma_star)


def _perturbed_distributions(pi: np.ndarray, count: int, eps: float, seed: int):
    """Random valid distributions within L2 distance eps of pi."""
    rng = np.random.default_rng(seed)
    out = []
    m = pi.size
    while len(out) < count:
        direction = rng.normal(size=m)
        direction -= direction.mean()
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            continue
        cand = pi + (eps * rng.random()) * direction / norm
        cand = np.maximum(cand, 0.0)
        s = cand.sum()
        if s <= 0:
            continue
        cand /= s
        if np.linalg.norm(cand - pi) <= eps:
            out.append(cand)
    return out


def _summary_columns(r: int) -> list[str]:
    cols = list(SUMMARY_COLUMNS_BASE)
    cols += [f"delivered_rate_{j + 1}" for j in range(r)]
    cols += [f"dropped_{j + 1}" for j in range(r)]
    cols += SUMMARY_COLUMNS_TAIL
    return cols


def _summary_row(label, v, seed, horizon, res: RunResult, r: int):
    row = [label, v, seed, horizon, res.avg_cost, res.avg_backlog, res.delay.mean_delay]
    row += [res.delay.delivered_rate[j] for j in range(r)]
    row += [res.dropped[j] for j in range(r)]
    row += [
        res.t_zeta_first,
        res.t_zeta_sustained,
        float(res.dropped.sum()),
        res.metadata.get("T_l"),
        res.solver_flagged_slots,
    ]
    return row


def run_scenario(scenario: Scenario, out_dir=None, workers=None, trace=None) -> dict:
    """Execute the sweep; returns the manifest dict (also written to disk).

    Oracles (gamma*, f*, eta_0, rho_hat, D_p) are computed once per V in the
    parent process; runs execute in a process pool when workers > 1; a single
    collector writes all outputs sorted by (controller, V, seed).
    """
    out_dir = out_dir or scenario.out_dir or os.environ.get(OUT_DIR_ENV, "out")
    workers = workers if workers is not None else scenario.workers
    trace = scenario.trace if trace is None else trace
    os.makedirs(out_dir, exist_ok=True)
    instance = scenario.instance
    pi = instance.probabilities
    r = instance.r

    analyses: dict[float, dual.InstanceAnalysis] = {}
    oracle_rows = []
    for v in sorted(set(scenario.v_values)):
        ana = dual.compute_analysis(
            instance, pi, v, rho_samples=scenario.rho_samples, rho_seed=scenario.rho_seed
        )
        analyses[v] = ana
        min_slack = None
        if scenario.assumption_check:
            perturbed = _perturbed_distributions(
                pi, scenario.perturbation_count, scenario.epsilon_s, scenario.rho_seed
            )
            min_slack = min(dual.max_slack(instance, p) for p in perturbed) if perturbed else None
        row = [v, ana.f_av_star, ana.g_star]
        row += [ana.gamma_star[j] for j in range(r)]
        row += [ana.eta_0, ana.constants.rho_hat, ana.constants.D_p, ana.constants.eta,
                ana.constants.B, ana.constants.f_max, min_slack]
        oracle_rows.append(row)
    oracle_header = ORACLE_COLUMNS_BASE + [f"gamma_star_{j + 1}" for j in range(r)] + ORACLE_COLUMNS_TAIL
    _write_csv(os.path.join(out_dir, "oracle.csv"), oracle_header, oracle_rows)

    jobs = []
    for ctrl_kwargs in scenario.controllers:
        for v in scenario.v_values:
            zeta = analyses[v].constants.D_p if scenario.zeta_policy == "auto_Dp" else scenario.zeta_value
            if zeta is not None and math.isnan(zeta):
                zeta = None
            for seed in scenario.seeds:
                period = 1 if trace else scenario.metric_sample_period
                jobs.append(
                    (instance, ctrl_kwargs, v, seed, scenario.horizon, zeta, period, analyses[v].gamma_star)
                )

    manifest = {"runs": [], "failed": 0, "out_dir": os.path.abspath(out_dir)}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_execute_run, jobs, chunksize=1))
    else:
        outcomes = [_execute_run(job) for job in jobs]

    summary_rows = []
    for job, res in zip(jobs, outcomes):
        _, ctrl_kwargs, v, seed, horizon, zeta, _, _ = job
        label = _controller_label(ctrl_kwargs)
        summary_rows.append(_summary_row(label, v, seed, horizon, res, r))
        manifest["runs"].append({"controller": label, "V": v, "seed": seed, "status": "ok"})
        if trace:
            trace_path = os.path.join(out_dir, f"trace_{label}_V{v:g}_seed{seed}.csv")
            header = ["slot"] + [f"q_{j + 1}" for j in range(r)] + ["dist_gamma", "dist_beta", "inst_cost"]
            rows = []
            for k in range(len(res.trace_slots)):
                row = [int(res.trace_slots[k])]
                row += [res.queue_trace[k][j] for j in range(r)]
                row += [res.gamma_trace[k],
                        res.beta_trace[k] if res.beta_trace is not None else None,
                        res.cost_trace[k]]
                rows.append(row)
            _write_csv(trace_path, header, rows)

    summary_rows.sort(key=lambda row: (row[0], row[1], row[2]))
    _write_csv(os.path.join(out_dir, "summary.csv"), _summary_columns(r), summary_rows)
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def emit_plotdata(summary_path, out_dir=None) -> list[str]:
    """Aggregate a summary.csv into per-figure mean/stderr tables."""
    out_dir = out_dir or os.path.dirname(os.path.abspath(summary_path)) or "."
    with open(summary_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"summary {summary_path} has no data rows")

    groups: dict[tuple[str, float], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["controller"], float(row["V"])), []).append(row)

    def stats(group, key):
        vals = [float(g[key]) for g in group if g[key] not in ("", "nan")]
        if not vals:
            return None, None
        mean = sum(vals) / len(vals)
        if len(vals) > 1:
            var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
            stderr = math.sqrt(var / len(vals))
        else:
            stderr = 0.0
        return mean, stderr

    written = []

    def emit(name, key):
        out_rows = []
        for (ctrl, v) in sorted(groups):
            group = groups[(ctrl, v)]
            mean, stderr = stats(group, key)
            out_rows.append([ctrl, v, len(group), mean, stderr])
        path = os.path.join(out_dir, name)
        _write_csv(path, ["controller", "V", "n_runs", "mean", "stderr"], out_rows)
        written.append(path)

    emit("fig_power_vs_V.csv", "avg_cost")
    emit("fig_delay_vs_V.csv", "mean_delay")
    emit("fig_convergence_vs_V.csv", "T_zeta_first")

    # queue trace analogue: lowest-seed trace file per (controller, V), if present
    trace_rows = []
    src_dir = os.path.dirname(os.path.abspath(summary_path))
    for (ctrl, v) in sorted(groups):
        seeds = sorted(int(g["seed"]) for g in groups[(ctrl, v)])
        path = os.path.join(src_dir, f"trace_{ctrl}_V{v:g}_seed{seeds[0]}.csv")
        if not os.path.exists(path):
            continue
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for trow in csv.DictReader(fh):
                out = [ctrl, v, seeds[0], int(trow["slot"])]
                qcols = [k for k in trow if k.startswith("q_")]
                out += [float(trow[k]) for k in sorted(qcols, key=lambda s: int(s[2:]))]
                out.append(float(trow["dist_gamma"]))
                trace_rows.append(out)
    qcount = max((len(rw) - 5 for rw in trace_rows), default=0)
    header = ["controller", "V", "seed", "slot"] + [f"q_{j + 1}" for j in range(qcount)] + ["dist_gamma"]
    path = os.path.join(out_dir, "fig_queue_trace.csv")
    _write_csv(path, header, trace_rows)
    written.append(path)
    return written


def _cmd_run(args) -> int:
    try:
        scenario = Scenario.from_file(args.scenario)
    except (ScenarioError, InstanceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run_scenario(scenario, out_dir=args.out, workers=args.workers, trace=args.trace or None)
    except Exception as exc:  # partial outputs retained with manifest
        print(f"error: scenario failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {manifest['out_dir']}/summary.csv ({len(manifest['runs'])} runs)")
    return 0


def _load_cli_instance(token: str, channel_dist) -> NetworkInstance:
    if token == "two_queue":
        return build_two_queue_example(channel_dist or [0.25, 0.25, 0.25, 0.25])
    return load_instance_file(token)


def _cmd_oracle(args) -> int:
    try:
        channel = [float(x) for x in args.channel_dist.split(",")] if args.channel_dist else None
        instance = _load_cli_instance(args.instance, channel)
    except (InstanceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    pi = instance.probabilities
    ana = dual.compute_analysis(instance, pi, args.V)
    print(f"V            {args.V:g}")
    print(f"f_av_star    {ana.f_av_star!r}")
    print(f"g_star       {ana.g_star!r}")
    print(f"gamma_star   {ana.gamma_star.tolist()!r}")
    print(f"eta_0        {ana.eta_0!r}")
    print(f"rho_hat      {ana.constants.rho_hat!r}")
    print(f"eta          {ana.constants.eta!r}")
    print(f"D_p          {ana.constants.D_p!r}")
    print(f"xi           {ana.xi!r}")
    if ana.constants.rho_hat <= 0:
        print("warning: polyhedral decay not numerically confirmed (rho_hat <= 0)")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        header = ORACLE_COLUMNS_BASE + [f"gamma_star_{j + 1}" for j in range(instance.r)] + ORACLE_COLUMNS_TAIL
        row = [args.V, ana.f_av_star, ana.g_star]
        row += [ana.gamma_star[j] for j in range(instance.r)]
        row += [ana.eta_0, ana.constants.rho_hat, ana.constants.D_p, ana.constants.eta,
                ana.constants.B, ana.constants.f_max, None]
        _write_csv(os.path.join(args.out, "oracle.csv"), header, [row])
    return 0


def _cmd_plotdata(args) -> int:
    try:
        written = emit_plotdata(args.summary, out_dir=args.out)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="olacsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario sweep")
    p_run.add_argument("scenario", help="scenario JSON file")
    p_run.add_argument("--out", default=None, help=f"output directory (default ${OUT_DIR_ENV} or ./out)")
    p_run.add_argument("--workers", type=int, default=None, help="parallel run workers")
    p_run.add_argument("--trace", action="store_true", help="write per-run trace CSVs")
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser("oracle", help="solve the exact oracles for an instance")
    p_oracle.add_argument("instance", help="instance JSON file, or 'two_queue'")
    p_oracle.add_argument("--V", type=float, required=True)
    p_oracle.add_argument("--channel-dist", default=None, help="comma list for the builtin instance")
    p_oracle.add_argument("--out", default=None, help="also write oracle.csv here")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_plot = sub.add_parser("plotdata", help="aggregate a summary.csv into figure tables")
    p_plot.add_argument("summary", help="summary.csv from a sweep")
    p_plot.add_argument("--out", default=None, help="output directory (default: alongside summary)")
    p_plot.set_defaults(func=_cmd_plotdata)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
