"""Command-line interface.

Subcommands: ``run`` (one simulation), ``sweep`` (a named replicated
experiment), ``analyze`` (anova / ols / surface / power on saved runs.csv
files) and ``graph-stats``. All numeric output is formatted to 6
significant digits. Exit status 0 means the requested outputs were
written; validation problems exit with status 2 and a message naming the
offending field.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import engine, experiments, network, stats
from .errors import (ParameterError, RecordParseError, SingularDesignError,
                     StateError, SweepError)

_USER_ERRORS = (ParameterError, StateError, SweepError, RecordParseError,
                SingularDesignError, OSError, json.JSONDecodeError)


# ---------------------------------------------------------------------------
# shared helpers

def _round6(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.6g}")
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    return obj


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round6(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)


_PARAM_NAMES = {f.name for f in fields(engine.SimParams)}


def _param_kwargs(cfg: dict) -> dict:
    unknown = sorted(set(cfg) - _PARAM_NAMES)
    if unknown:
        raise ParameterError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = dict(cfg)
    if "defender_basis" in kwargs:
        try:
            kwargs["defender_basis"] = engine.DefenderBasis(kwargs["defender_basis"])
        except ValueError:
            raise ParameterError(
                f"defender_basis must be one of "
                f"{[b.value for b in engine.DefenderBasis]}, "
                f"got {kwargs['defender_basis']!r}") from None
    return kwargs


def _load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ParameterError("config file must hold a JSON object")
    return cfg


def _params_payload(params: engine.SimParams) -> dict:
    d = asdict(params)
    d["defender_basis"] = engine.DefenderBasis(params.defender_basis).value
    return d


def _load_records(paths) -> list:
    records = []
    for p in paths:
        records.extend(experiments.read_records_csv(p))
    if not records:
        raise ParameterError("no records found in the given runs files")
    return records


def _outcome_attr(name: str) -> str:
    return {"majority": "bad_majority_tick", "all_bad": "all_bad_tick"}[name]


# ---------------------------------------------------------------------------
# run

def cmd_run(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    kwargs = _param_kwargs(cfg)
    if args.seed is not None:
        kwargs["seed"] = args.seed
    params = engine.SimParams(**kwargs)
    state = engine.init_simulation(params)
    history = []
    while not state.terminated:
        history.append(engine.step(state))
    outcome = state.outcome()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    payload = {
        "params": _params_payload(params),
        "outcome": {
            "bad_majority_tick": outcome.bad_majority_tick,
            "all_bad_tick": outcome.all_bad_tick,
            "ticks_run": outcome.ticks_run,
            "final_good_humans": outcome.final_good_humans,
            "final_bad_humans": outcome.final_bad_humans,
        },
    }
    _write_json(outdir / "outcome.json", payload)
    if args.timeseries:
        cols = [f.name for f in fields(engine.TickStats)]
        with open(outdir / "timeseries.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for ts in history:
                writer.writerow([getattr(ts, c) for c in cols])
    if not args.quiet:
        print(f"run: majority={_fmt(outcome.bad_majority_tick)} "
              f"all_bad={_fmt(outcome.all_bad_tick)} ticks={outcome.ticks_run} "
              f"-> {outdir}")
    return 0


# ---------------------------------------------------------------------------
# sweep

def cmd_sweep(args) -> int:
    overrides = _param_kwargs(_load_config(args.config)) if args.config else None
    spec = experiments.build_experiment(
        args.experiment, replications=args.replications,
        base_seed=args.base_seed, overrides=overrides)
    records = experiments.run_sweep(spec, parallelism=args.jobs)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    experiments.write_records_csv(records, outdir / "runs.csv")
    experiments.write_summary_csv(experiments.summarize(records), outdir / "summary.csv")
    meta = {
        "experiment_id": spec.experiment_id,
        "conditions": len(spec.conditions),
        "replications": spec.replications,
        "base_seed": spec.base_seed,
        "total_runs": spec.total_runs,
        "note": spec.note,
    }
    _write_json(outdir / "sweep_meta.json", meta)
    if not args.quiet:
        print(f"{spec.experiment_id}: {len(records)} runs -> {outdir}")
    return 0


# ---------------------------------------------------------------------------
# analyze anova

_DEFENDER_AXIS = {
    "E1": ("bad_bot", "alpha1"),
    "E2": ("info_correction_bot", "alpha2"),
    "E3": ("good_bot", "alpha3"),
}


def _anova_rows(records, outcome_attr):
    labels, props, values, dropped = [], [], [], 0
    for rec in records:
        if rec.experiment_id not in _DEFENDER_AXIS:
            raise ParameterError(
                f"anova expects single-axis sweeps (E1/E2/E3), got "
                f"{rec.experiment_id!r}")
        y = getattr(rec, outcome_attr)
        if y is None:
            dropped += 1
            continue
        kind, attr = _DEFENDER_AXIS[rec.experiment_id]
        labels.append(kind)
        props.append(getattr(rec, attr))
        values.append(float(y))
    if not values:
        raise ParameterError("every record lacks the requested outcome")
    return labels, props, values, dropped


def _table_payload(table: stats.AnovaTable) -> list:
    rows = []
    for r in table.rows:
        rows.append({
            "term": r.term, "df": r.df, "ss": r.ss, "ms": r.ms,
            "f": r.f, "p": r.p,
            "eta_squared": None if r.term == "Residual" else table.eta_squared(r.term),
        })
    return rows


def cmd_analyze_anova(args) -> int:
    records = _load_records(args.runs)
    labels, props, values, dropped = _anova_rows(records, _outcome_attr(args.outcome))
    thin_levels: list = []
    if len(set(labels)) >= 2:
        table = stats.anova_factor_covariate(
            values, labels, props, factor_name="bot_type", covariate_name="proportion")
    else:
        # proportion levels become the factor; levels left with fewer than
        # 2 converged runs cannot contribute a variance estimate
        counts: dict = {}
        for p in props:
            counts[p] = counts.get(p, 0) + 1
        thin_levels = sorted(lv for lv, c in counts.items() if c < 2)
        if thin_levels:
            keep = [i for i, p in enumerate(props) if counts[p] >= 2]
            props = [props[i] for i in keep]
            values = [values[i] for i in keep]
        table = stats.anova_oneway(values, props, term="proportion_level")
    payload = {
        "outcome": args.outcome,
        "n_used": len(values),
        "n_dropped_unconverged": dropped,
        "dropped_thin_levels": thin_levels,
        "ss_total": table.ss_total,
        "rows": _table_payload(table),
    }
    if args.out:
        _write_json(args.out, payload)
    if not args.quiet:
        print(f"anova on {args.outcome} (n={len(values)}, dropped={dropped})")
        if thin_levels:
            print(f"  note: level(s) with <2 converged runs dropped: {thin_levels}")
        for r in payload["rows"]:
            print(f"  {r['term']:<24} df={r['df']:<4} ss={_fmt(r['ss'])} "
                  f"F={_fmt(r['f'])} p={_fmt(r['p'])} eta2={_fmt(r['eta_squared'])}")
    return 0


# ---------------------------------------------------------------------------
# analyze ols

_OLS_TERMS = (
    "const", "prop_bad", "prop_good", "prop_ic",
    "bad_present", "good_present", "ic_present",
    "bad_x_good_present", "bad_x_ic_present",
    "bad_x_prop_good", "bad_x_prop_ic",
)


def _ols_design(records, outcome_attr):
    rows, y, dropped = [], [], 0
    for rec in records:
        out = getattr(rec, outcome_attr)
        if out is None:
            dropped += 1
            continue
        pb, pg, pi = rec.alpha1, rec.alpha3, rec.alpha2
        bp, gp, ip = float(pb > 0), float(pg > 0), float(pi > 0)
        rows.append([1.0, pb, pg, pi, bp, gp, ip,
                     pb * gp, pb * ip, pb * pg, pb * pi])
        y.append(float(out))
    if len(rows) < 3:
        raise ParameterError("too few converged records for a regression")
    return np.asarray(rows), np.asarray(y), dropped


def cmd_analyze_ols(args) -> int:
    records = _load_records(args.runs)
    X, y, dropped = _ols_design(records, _outcome_attr(args.outcome))
    keep = [j for j in range(X.shape[1])
            if j == 0 or np.ptp(X[:, j]) > 0.0]
    dropped_terms = [_OLS_TERMS[j] for j in range(X.shape[1]) if j not in keep]
    # sweep designs that pin a ratio can also leave columns collinear;
    # drop whichever column the fit names until the design has full rank
    while True:
        names = [_OLS_TERMS[j] for j in keep]
        try:
            fit = stats.ols_fit(X[:, keep], y, names=names)
            break
        except SingularDesignError as exc:
            dropped_terms.append(exc.column)
            keep = [j for j in keep if _OLS_TERMS[j] != exc.column]
            if len(keep) <= 1:
                raise
    df_model = len(names) - 1
    f_overall = ((fit.sst - fit.ssr) / df_model) / fit.sigma2 if df_model > 0 else None
    p_overall = stats.f_sf(f_overall, df_model, fit.df_resid) if f_overall else None
    payload = {
        "outcome": args.outcome,
        "n_used": int(fit.nobs),
        "n_dropped_unconverged": dropped,
        "dropped_terms": dropped_terms,
        "r_squared": fit.r_squared,
        "adj_r_squared": fit.adj_r_squared,
        "f_overall": f_overall,
        "df_model": df_model,
        "df_resid": fit.df_resid,
        "p_overall": p_overall,
        "coefficients": [
            {"term": n, "coef": c, "se": s, "t": t, "p": p}
            for n, c, s, t, p in zip(fit.names, fit.coef, fit.se,
                                     fit.tvalues, fit.pvalues)
        ],
    }
    if args.out:
        _write_json(args.out, payload)
    if not args.quiet:
        print(f"ols on {args.outcome}: n={fit.nobs} dropped={dropped} "
              f"R2={_fmt(fit.r_squared)} adjR2={_fmt(fit.adj_r_squared)} "
              f"F({df_model},{fit.df_resid})={_fmt(f_overall)} p={_fmt(p_overall)}")
        if dropped_terms:
            print(f"  note: unidentifiable column(s) dropped: {', '.join(dropped_terms)}")
        for c in payload["coefficients"]:
            print(f"  {c['term']:<20} coef={_fmt(c['coef'])} se={_fmt(c['se'])} "
                  f"t={_fmt(c['t'])} p={_fmt(c['p'])}")
    return 0


# ---------------------------------------------------------------------------
# analyze surface

def _surface_points(records, outcome_attr):
    """Condition means of the outcome over the (alpha1, defender-axis) grid."""
    has_a2 = any(r.alpha2 > 0 for r in records)
    has_a3 = any(r.alpha3 > 0 for r in records)
    if has_a2 == has_a3:
        raise ParameterError(
            "surface needs exactly one defender axis in the data "
            "(alpha2 or alpha3, not both or neither)")
    axis = "alpha2" if has_a2 else "alpha3"
    by_cond: dict = {}
    for rec in records:
        by_cond.setdefault((rec.alpha1, getattr(rec, axis)), []).append(
            getattr(rec, outcome_attr))
    b, d, z, dropped = [], [], [], 0
    for (a1, ax) in sorted(by_cond):
        vals = [v for v in by_cond[(a1, ax)] if v is not None]
        if not vals:
            dropped += 1
            continue
        b.append(a1)
        d.append(ax)
        z.append(sum(vals) / len(vals))
    if len(z) < 8:
        raise ParameterError(
            f"only {len(z)} conditions have converged outcomes; "
            "too few for a quadratic surface")
    return axis, np.asarray(b), np.asarray(d), np.asarray(z), dropped


def cmd_analyze_surface(args) -> int:
    records = _load_records(args.runs)
    axis, b, d, z, dropped = _surface_points(records, _outcome_attr(args.outcome))
    surf = stats.fit_quadratic_surface(b, d, z)
    b_range = tuple(args.b_range) if args.b_range else (float(b.min()), float(b.max()))
    d_range = tuple(args.d_range) if args.d_range else (float(d.min()), float(d.max()))
    box = stats.surface_extrema_on_box(surf, b_range, d_range)
    try:
        sp = stats.surface_stationary_point(surf)
        stationary = {"b": sp.b, "d": sp.d, "value": sp.value, "kind": sp.kind}
    except StateError:
        stationary = None
    payload = {
        "outcome": args.outcome,
        "defender_axis": axis,
        "n_conditions": len(z),
        "n_conditions_dropped": dropped,
        "coefficients": dict(zip(stats.SURFACE_TERMS, surf.beta)),
        "stationary_point": stationary,
        "box": {"b_range": list(b_range), "d_range": list(d_range)},
        "box_min": dict(zip(("b", "d", "value"), box.min_point)),
        "box_max": dict(zip(("b", "d", "value"), box.max_point)),
        "r_squared": surf.fit.r_squared,
    }
    if args.out:
        _write_json(args.out, payload)
    if args.grid_out:
        step = args.grid_step
        bs = np.arange(b_range[0], b_range[1] + step / 2, step)
        ds = np.arange(d_range[0], d_range[1] + step / 2, step)
        with open(args.grid_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["b", "d", "fitted"])
            for bv in bs:
                for dv in ds:
                    writer.writerow([experiments.format_float(float(bv)),
                                     experiments.format_float(float(dv)),
                                     experiments.format_float(surf.value(bv, dv))])
    if not args.quiet:
        coefs = " ".join(f"{n}={_fmt(v)}" for n, v in
                         zip(stats.SURFACE_TERMS, surf.beta))
        print(f"surface on {args.outcome} over (alpha1, {axis}): "
              f"n_cond={len(z)} dropped={dropped}")
        print(f"  {coefs}")
        if stationary:
            print(f"  stationary: b={_fmt(stationary['b'])} d={_fmt(stationary['d'])} "
                  f"value={_fmt(stationary['value'])} kind={stationary['kind']}")
        else:
            print("  stationary: degenerate (singular Hessian)")
        lo, hi = payload["box_min"], payload["box_max"]
        print(f"  box min: b={_fmt(lo['b'])} d={_fmt(lo['d'])} value={_fmt(lo['value'])}"
              f"  box max: b={_fmt(hi['b'])} d={_fmt(hi['d'])} value={_fmt(hi['value'])}")
    return 0


# ---------------------------------------------------------------------------
# analyze power

def cmd_analyze_power(args) -> int:
    if (args.eta2 is None) == (args.effect_f is None):
        raise ParameterError("give exactly one of --eta2 or --f")
    effect_f = args.effect_f if args.effect_f is not None \
        else stats.cohens_f_from_eta2(args.eta2)
    sol = stats.anova_power_required_n(effect_f, args.groups, args.alpha, args.power)
    payload = {
        "effect_f": effect_f,
        "eta_squared": args.eta2,
        "groups": args.groups,
        "alpha": args.alpha,
        "target_power": args.power,
        "required_n_per_group": sol.required_n,
        "achieved_power": sol.achieved_power,
    }
    if args.mc_trials:
        payload["mc_rejection_rate"] = stats.mc_power_rejection_rate(
            effect_f, args.groups, sol.required_n, args.alpha,
            trials=args.mc_trials, seed=args.mc_seed)
    if args.out:
        _write_json(args.out, payload)
    if not args.quiet:
        line = (f"power: f={_fmt(effect_f)} k={args.groups} alpha={_fmt(args.alpha)} "
                f"target={_fmt(args.power)} -> n={_fmt(sol.required_n)} "
                f"(achieved {_fmt(sol.achieved_power)})")
        if "mc_rejection_rate" in payload:
            line += f" mc={_fmt(payload['mc_rejection_rate'])}"
        print(line)
    return 0


# ---------------------------------------------------------------------------
# graph-stats

def cmd_graph_stats(args) -> int:
    rng = np.random.Generator(np.random.PCG64(args.seed))
    if args.kind == "ws":
        net = network.generate_small_world(
            network.SmallWorldSpec(n=args.n, k=args.k, beta=args.beta), rng)
    else:
        net = network.generate_erdos_renyi(args.n, args.p, rng)
    comp = network.largest_component(net)
    payload = {
        "kind": args.kind,
        "nodes": net.node_count,
        "edges": net.edge_count,
        "mean_degree": float(net.degrees.mean()),
        "min_degree": int(net.degrees.min()),
        "clustering_coefficient": network.clustering_coefficient(net),
        "largest_component_size": int(comp.size),
        "mean_path_length": network.mean_path_length(net),
    }
    if args.dump_edges:
        network.dump_edge_list(net, args.dump_edges)
    if args.out:
        _write_json(args.out, payload)
    if not args.quiet:
        print(" ".join(f"{k}={_fmt(v)}" for k, v in payload.items()))
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="misinfosim",
        description="Agent-based simulator of competing information bots "
                    "on a small-world network, with sweep and analysis tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation")
    p_run.add_argument("--config", help="JSON file of simulation parameters")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default="run_out", help="output directory")
    p_run.add_argument("--timeseries", action="store_true",
                       help="also write per-tick counters")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a named replicated experiment")
    p_sweep.add_argument("--experiment", required=True,
                         help="one of %s (bare 1..5 also accepted)"
                              % ", ".join(experiments.EXPERIMENT_IDS))
    p_sweep.add_argument("--out", default="sweep_out", help="output directory")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--replications", type=int,
                         default=experiments.DEFAULT_REPLICATIONS)
    p_sweep.add_argument("--base-seed", type=int,
                         default=experiments.DEFAULT_BASE_SEED)
    p_sweep.add_argument("--config",
                         help="JSON overrides applied to every condition")
    p_sweep.add_argument("--quiet", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_an = sub.add_parser("analyze", help="statistics over saved runs.csv files")
    an_sub = p_an.add_subparsers(dest="analysis", required=True)

    pa = an_sub.add_parser("anova", help="bot-type/proportion ANOVA")
    pa.add_argument("--runs", nargs="+", required=True)
    pa.add_argument("--outcome", choices=("majority", "all_bad"), default="majority")
    pa.add_argument("--out", help="write the table as JSON here")
    pa.add_argument("--quiet", action="store_true")
    pa.set_defaults(func=cmd_analyze_anova)

    po = an_sub.add_parser("ols", help="pooled linear model of the outcome")
    po.add_argument("--runs", nargs="+", required=True)
    po.add_argument("--outcome", choices=("majority", "all_bad"), default="majority")
    po.add_argument("--out")
    po.add_argument("--quiet", action="store_true")
    po.set_defaults(func=cmd_analyze_ols)

    ps = an_sub.add_parser("surface", help="quadratic response surface on a grid sweep")
    ps.add_argument("--runs", nargs="+", required=True)
    ps.add_argument("--outcome", choices=("majority", "all_bad"), default="majority")
    ps.add_argument("--b-range", nargs=2, type=float, metavar=("LO", "HI"))
    ps.add_argument("--d-range", nargs=2, type=float, metavar=("LO", "HI"))
    ps.add_argument("--grid-out", help="CSV of fitted values on a mesh")
    ps.add_argument("--grid-step", type=float, default=0.05)
    ps.add_argument("--out")
    ps.add_argument("--quiet", action="store_true")
    ps.set_defaults(func=cmd_analyze_surface)

    pp = an_sub.add_parser("power", help="required n for the k-group F test")
    pp.add_argument("--eta2", type=float, default=None)
    pp.add_argument("--f", dest="effect_f", type=float, default=None)
    pp.add_argument("--groups", type=int, required=True)
    pp.add_argument("--alpha", type=float, default=0.05)
    pp.add_argument("--power", type=float, default=0.8)
    pp.add_argument("--mc-trials", type=int, default=0,
                    help="also report a Monte-Carlo rejection rate")
    pp.add_argument("--mc-seed", type=int, default=0)
    pp.add_argument("--out")
    pp.add_argument("--quiet", action="store_true")
    pp.set_defaults(func=cmd_analyze_power)

    pg = sub.add_parser("graph-stats", help="metrics of a generated network")
    pg.add_argument("--kind", choices=("ws", "er"), default="ws")
    pg.add_argument("--n", type=int, default=1000)
    pg.add_argument("--k", type=int, default=10)
    pg.add_argument("--beta", type=float, default=0.05)
    pg.add_argument("--p", type=float, default=0.01,
                    help="edge probability for --kind er")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--dump-edges", help="write a sorted edge list here")
    pg.add_argument("--out")
    pg.add_argument("--quiet", action="store_true")
    pg.set_defaults(func=cmd_graph_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
