"""Command-line front end.

Exit codes: 0 success, 1 invalid arguments/config/feeder, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .attack import apply_gsa
from .config import ConfigError, ScenarioConfig, check_config, load_config
from .correct import CorrectionObjective, golden_section_baseline, pso_correct
from .estimator import Workspace, estimate_iterative
from .feeder import FeederError, load_feeder
from .identify import Identifier, check_delta_theta, sweep_objective
from .measurement import PMU_VOLTAGE, PlacementError, build_layout, synthesize
from .metrics import run_montecarlo
from .powerflow import solve

COMMANDS = ("powerflow", "estimate", "attack", "identify", "sweep", "correct", "montecarlo", "validate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON file")
    common.add_argument("--feeder", help="feeder name (ieee34, ieee34_dg, ieee123) or JSON path")
    common.add_argument("--seed", type=int, help="base random seed (overrides the config)")
    common.add_argument("--trials", type=int, help="Monte Carlo trial count")
    common.add_argument("--delta-theta", type=float, help="probing angle, rad")
    common.add_argument("--pmu", type=int, help="PMU id for sweep")
    common.add_argument("--grid-deg", type=float, default=1.0, help="sweep grid step, degrees")
    common.add_argument("--baseline", choices=["golden"], help="use the golden-section baseline in correct")
    common.add_argument("--jobs", type=int, help="concurrent trials (default: all CPUs)")
    common.add_argument("--output-dir", help="directory for CSV/JSON outputs")
    common.add_argument("--no-timestamp", action="store_true", help="omit timestamp and runtime fields")
    parser = _Parser(prog="pmu-gsa", description="PMU GPS-spoofing identification and correction")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "powerflow": "solve the feeder and print bus voltages",
        "estimate": "state estimate from one synthesized measurement set",
        "attack": "show PMU phasors before and after the configured spoofing",
        "identify": "probe every PMU and print J ratios and categories",
        "sweep": "objective curve of one PMU's test dataset (CSV)",
        "correct": "estimate spoof angles (PSO, or --baseline golden)",
        "montecarlo": "seeded trials with aggregate metrics",
        "validate": "check a config and its feeder",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _scenario(args) -> ScenarioConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    changes = {}
    if args.feeder:
        changes["feeder"] = args.feeder
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        changes["trials"] = args.trials
    if args.delta_theta is not None:
        check_delta_theta(args.delta_theta)
        changes["delta_theta"] = args.delta_theta
    if args.output_dir:
        changes["output_dir"] = args.output_dir
    return cfg.replace(**changes) if changes else cfg


class _Context:
    """Model, truth and one synthesized (and spoofed) measurement set for a scenario."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.model, self.placement = check_config(cfg)
        self.truth = solve(self.model)
        self.ws = Workspace(self.model, build_layout(self.model, self.placement))
        self.z = synthesize(self.model, self.truth, self.placement, cfg.noise, rng_seed=cfg.seed,
                            layout=self.ws.layout)
        self.profile = cfg.profile()
        self.z_spf = apply_gsa(self.z, self.profile)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _voltage_rows(model, v, ref=None):
    rows = []
    for bi, bus in enumerate(model.buses):
        for f in range(3):
            if not bus.phases[f]:
                continue
            row = [bus.id, "abc"[f], _fmt(abs(v[bi, f])), _fmt(np.degrees(np.angle(v[bi, f])))]
            if ref is not None:
                row += [_fmt(abs(ref[bi, f])), _fmt(np.degrees(np.angle(ref[bi, f])))]
            rows.append(row)
    return rows


def cmd_powerflow(args, out):
    if args.feeder:
        model = load_feeder(args.feeder)
    else:
        model = _scenario(args).model()
    st = solve(model)
    out.write(_csv(_voltage_rows(model, st.bus_voltage), ["bus", "phase", "v_pu", "angle_deg"]))
    print(f"# converged in {st.iterations} sweeps, last change {st.mismatch:.2e}", file=sys.stderr)


def cmd_estimate(args, out):
    ctx = _Context(_scenario(args))
    res = estimate_iterative(ctx.model, ctx.z_spf, ctx.ws.full_bundle(ctx.z_spf))
    out.write(_csv(_voltage_rows(ctx.model, res.bus_voltage, ctx.truth.bus_voltage),
                   ["bus", "phase", "v_est_pu", "angle_est_deg", "v_true_pu", "angle_true_deg"]))
    err = np.max(np.abs(res.bus_voltage - ctx.truth.bus_voltage))
    print(f"# J={res.J:.6g} iterations={res.iterations} max|V_est-V_true|={err:.3e}", file=sys.stderr)


def cmd_attack(args, out):
    ctx = _Context(_scenario(args))
    lay = ctx.z.layout
    rows = []
    for r in lay.pair_re:
        kind = "V" if lay.kind[r] == PMU_VOLTAGE else "I"
        a = complex(ctx.z.values[r], ctx.z.values[r + 1])
        b = complex(ctx.z_spf.values[r], ctx.z_spf.values[r + 1])
        rows.append([lay.pmu[r], kind, lay.location[r], "abc"[lay.phase[r]], _fmt(abs(a)),
                     _fmt(np.degrees(np.angle(a))), _fmt(np.degrees(np.angle(b))),
                     _fmt(ctx.profile[int(lay.pmu[r])] / np.pi)])
    out.write(_csv(rows, ["pmu", "quantity", "location", "phase", "magnitude", "angle_deg",
                          "spoofed_angle_deg", "theta_pi"]))


def cmd_identify(args, out):
    ctx = _Context(_scenario(args))
    ident = Identifier(ctx.model, ctx.placement, ctx.ws, ctx.cfg.linearization)
    res = ident.identify(ctx.z_spf, ctx.cfg.delta_theta)
    rows = [[v.pmu, _fmt(v.J), _fmt(v.ratio_plus), _fmt(v.ratio_minus), v.category.value,
             int(v.attacked), int(v.low_confidence)] for v in res.verdicts]
    out.write(_csv(rows, ["pmu", "J", "J_plus_ratio", "J_minus_ratio", "category", "attacked",
                          "low_confidence"]))
    print(f"# P1={sorted(res.P1)} P2={sorted(res.P2)} P3={sorted(res.P3)}", file=sys.stderr)


def cmd_sweep(args, out):
    cfg = _scenario(args)
    if args.pmu is None:
        raise ConfigError("--pmu is required for sweep")
    if not args.grid_deg > 0:
        raise ConfigError("--grid-deg must be positive")
    ctx = _Context(cfg)
    if not 2 <= args.pmu <= ctx.placement.n_pmu:
        raise ConfigError(f"--pmu must be in 2..{ctx.placement.n_pmu}")
    ident = Identifier(ctx.model, ctx.placement, ctx.ws, cfg.linearization)
    ds = ident.test_dataset(ctx.z_spf, args.pmu)
    n = int(round(360 / args.grid_deg))
    grid = np.linspace(-np.pi, np.pi, n + 1)
    curve = sweep_objective(ds, ident.linearized_values(ctx.z_spf)[ds.rows], grid)
    out.write(_csv([[_fmt(t), _fmt(t / np.pi), _fmt(j)] for t, j in curve], ["theta_rad", "theta_pi", "J"]))


def cmd_correct(args, out):
    ctx = _Context(_scenario(args))
    obj = CorrectionObjective(ctx.model, ctx.placement, ctx.z_spf, ctx.ws)
    if args.baseline == "golden":
        b = golden_section_baseline(ctx.z_spf, ctx.model, ctx.placement, objective=obj)
        theta, J, evals, extra = b.theta_hat, b.J_corr, b.objective_evaluations, f"best_pmu={b.best_pmu}"
    else:
        ident = Identifier(ctx.model, ctx.placement, ctx.ws, ctx.cfg.linearization)
        res = ident.identify(ctx.z_spf, ctx.cfg.delta_theta)
        params = replace(ctx.cfg.pso, seed=ctx.cfg.seed)
        cr = pso_correct(ctx.z_spf, res, params, ctx.model, ctx.placement, objective=obj)
        theta, J, evals = cr.theta_hat.as_array(), cr.J_corr, cr.objective_evaluations
        extra = f"converged={cr.converged} iterations={cr.iterations}"
    rows = [[i + 1, _fmt(t / np.pi), _fmt(t), _fmt(ctx.profile.canonical()[i])] for i, t in enumerate(theta)]
    out.write(_csv(rows, ["pmu", "theta_hat_pi", "theta_hat_rad", "theta_true_rad"]))
    print(f"# J_corr={J:.6g} evaluations={evals} {extra}", file=sys.stderr)


def cmd_montecarlo(args, out):
    cfg = _scenario(args)
    check_config(cfg)
    t0 = time.perf_counter()
    records, agg = run_montecarlo(cfg, jobs=args.jobs)
    runtime = time.perf_counter() - t0
    doc = {"scenario": cfg.name, "feeder": cfg.feeder, "psi": list(cfg.psi), "seed": cfg.seed,
           "delta_theta": cfg.delta_theta, **agg.summary()}
    if not args.no_timestamp:
        doc["runtime_s"] = round(runtime, 3)
        doc["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    trial_rows = []
    for r in records:
        for i in range(2, len(r.psi) + 1):
            cat = r.categories.get(i)
            th = r.theta_hat[i - 1] if r.theta_hat is not None else float("nan")
            trial_rows.append([r.trial, i, cat.value if cat else "", _fmt(r.psi[i - 1]), _fmt(th), r.error or ""])
    (outdir / "trials.csv").write_text(_csv(trial_rows, ["trial", "pmu", "verdict", "theta_true_rad",
                                                         "theta_hat_rad", "error"]))
    model = cfg.model()
    rm_rows = []
    for label, r in (("corrected", agg.rmse_corrected), ("spoofed", agg.rmse_spoofed)):
        if r is None:
            continue
        for bi, bus in enumerate(model.buses):
            for f in range(3):
                if bus.phases[f]:
                    rm_rows.append([label, bus.id, "abc"[f], _fmt(r.delta_v[bi, f]), _fmt(r.delta_theta[bi, f])])
    (outdir / "rmse.csv").write_text(_csv(rm_rows, ["estimate", "bus", "phase", "delta_v", "delta_theta_rad"]))
    text = json.dumps(doc, indent=2)
    (outdir / "aggregate.json").write_text(text + "\n")
    out.write(text + "\n")


def cmd_validate(args, out):
    if args.config:
        cfg = _scenario(args)
        model, placement = check_config(cfg)
        out.write(f"ok: {cfg.name} on {model.name} ({len(model.buses)} buses, {placement.n_pmu} PMUs)\n")
    elif args.feeder:
        model = load_feeder(args.feeder)
        out.write(f"ok: {model.name} ({len(model.buses)} buses, {len(model.branches)} branches)\n")
    else:
        raise ConfigError("validate needs --config or --feeder")


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def main(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:           # --help
        return int(exc.code or 0)
    try:
        HANDLERS[args.command](args, out)
    except (ConfigError, FeederError, PlacementError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
