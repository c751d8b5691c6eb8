"""Command-line front end.

Every run writes ``resolved_config.yaml`` next to its artifacts; feeding that
file back with ``--config`` reproduces the artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import analytic
from .channel import Lognormal, Rayleigh
from .config import ConfigError, RunConfig, dump_config, load_config
from .geometry import InfeasibleGeometryError
from .mechanism import BisectionError, NotRegularError, check_regularity
from .simulate import aggregate, critical_reward, run_trials, utility_gap, write_aggregate_csv

OUTPUT_ENV = "WPTRELAY_OUTPUT_DIR"
DEFAULT_OUTPUT = "wptrelay-out"

EXIT_OK, EXIT_CONFIG, EXIT_GEOMETRY, EXIT_NUMERIC = 0, 2, 3, 4


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_simulate(cfg: RunConfig, out: Path, with_analytic: bool = False) -> None:
    env, params = cfg.environment(), cfg.system_params()
    stats = [aggregate(run_trials(env, params, n, cfg.trials, cfg.seed, cfg.workers)) for n in cfg.n]
    extra = None
    if with_analytic:
        extra = {}
        for n in cfg.n:
            b = analytic.outage_breakdown(env, params, n, cfg.grid_cell_m)
            extra[n] = {"baseline": b.p_out_star, "vickrey": b.p_out_star, "myerson": b.p_out_myerson}
    write_aggregate_csv(out / "simulate.csv", stats, extra)


def cmd_analytic(cfg: RunConfig, out: Path) -> None:
    env, params = cfg.environment(), cfg.system_params()
    terms = analytic.spatial_terms(env, params, cfg.grid_cell_m)
    per_n = []
    for n in cfg.n:
        b = analytic.outage_breakdown(env, params, n, cfg.grid_cell_m)
        per_n.append({"n": n, "p_out_star": b.p_out_star, "p_out_myerson_gap": b.p_out_myerson_gap,
                      "p_out_myerson": b.p_out_myerson})
    _write_json(out / "analytic.json", {
        "p_out_source": analytic.source_outage_prob(env, params),
        "p_out_candidate": terms.p_out_candidate,
        "p_out_candidate_error": terms.p_out_candidate_error,
        "gap_mass": terms.gap_mass,
        "gap_mass_error": terms.gap_mass_error,
        "grid_cell_m": cfg.grid_cell_m,
        "per_n": per_n,
    })


def cmd_heatmap(cfg: RunConfig, out: Path) -> None:
    hm = analytic.outage_heatmap(cfg.environment(), cfg.system_params(), cfg.heatmap_resolution_m)
    hm.to_csv(out / "heatmap.csv")


def cmd_critical_c(cfg: RunConfig, out: Path) -> None:
    env, params = cfg.environment(), cfg.system_params()
    rows, grid_rows = [], []
    for n in cfg.n:
        res = run_trials(env, params, n, cfg.trials, cfg.seed, cfg.workers)
        agg = aggregate(res)
        cr = critical_reward(agg["vickrey"], agg["myerson"], params)
        rows.append([n, cr.c_star, int(cr.valid), agg["vickrey"].outage_rate, agg["myerson"].outage_rate,
                     agg["vickrey"].mean_src_energy_all, agg["myerson"].mean_src_energy_all])
        for c in cfg.c_grid_mws:
            mean, se = utility_gap(res, c)
            grid_rows.append([n, c, mean, se])
    with open(out / "critical_c.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "c_star_mWs", "valid", "outage_vickrey", "outage_myerson",
                    "mean_src_energy_all_vickrey_mWs", "mean_src_energy_all_myerson_mWs"])
        w.writerows([[repr(x) if isinstance(x, float) else x for x in r] for r in rows])
    if grid_rows:
        with open(out / "utility_gap.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "reward_c_mWs", "mean_u_myerson_minus_vickrey", "se"])
            w.writerows([[r[0]] + [repr(float(x)) for x in r[1:]] for r in grid_rows])


def regularity_report(cfg: RunConfig, c_const: float = 1.0, points: int = 2001) -> dict:
    """Minimum slope of each virtual valuation over ``regularity_decades`` decades around ``c_const``."""
    half = cfg.regularity_decades / 2.0
    grid = np.logspace(-half, half, points) * c_const
    los, nlos = cfg.fading_models()
    models = {"los": los, "nlos": nlos}
    report = {}
    for name, model in models.items():
        if isinstance(model, Lognormal):
            desc, bound = {"family": "lognormal", "sigma_db": model.sigma_db}, 0.0
        elif isinstance(model, Rayleigh):
            desc, bound = {"family": "rayleigh", "psi": model.psi}, 1.0
        else:
            report[name] = {"family": type(model).__name__.lower(), "regular": None,
                            "note": "no virtual valuation for this family"}
            continue
        slope = check_regularity(model, c_const, grid)
        report[name] = {**desc, "min_slope": slope, "bound": bound,
                        "passes": bool(slope >= bound if bound > 0 else slope > 0)}
    return {"decades": cfg.regularity_decades, "grid_points": points, "models": report}


def cmd_check_regularity(cfg: RunConfig, out: Path) -> None:
    rep = regularity_report(cfg)
    _write_json(out / "regularity.json", rep)
    for name, r in rep["models"].items():
        if "min_slope" in r:
            print(f"{name}: {r['family']} min slope {r['min_slope']:.6g} (bound {r['bound']:g})")
        else:
            print(f"{name}: {r['family']} {r['note']}")


COMMANDS = {
    "simulate": cmd_simulate,
    "analytic": cmd_analytic,
    "heatmap": cmd_heatmap,
    "critical-c": cmd_critical_c,
    "check-regularity": cmd_check_regularity,
}


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        # values use YAML scalar syntax, e.g. --set p_max_mw=50
        out[k.strip()] = yaml.safe_load(v)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wptrelay", description="WPT relay auction simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML file with unit-suffixed keys")
        s.add_argument("--n", help="comma-separated candidate counts")
        s.add_argument("--trials", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        s.add_argument("--fading", choices=("lognormal", "rayleigh", "rician"))
        s.add_argument("--cell", type=float, help="integration grid cell, m")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        if name == "simulate":
            s.add_argument("--analytic", action="store_true", help="add analytic outage column")
    return p


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = _parse_set(args.set)
        for key, val in (("n", args.n), ("trials", args.trials), ("seed", args.seed),
                         ("workers", args.workers), ("output_dir", args.out),
                         ("fading", args.fading), ("grid_cell_m", args.cell)):
            if val is not None:
                overrides[key] = val
        cfg = load_config(args.config, overrides)
        out = _output_dir(cfg)
        dump_config(cfg, out / "resolved_config.yaml")
        if args.command == "simulate":
            cmd_simulate(cfg, out, args.analytic)
        else:
            COMMANDS[args.command](cfg, out)
    except InfeasibleGeometryError as exc:
        print(f"error: infeasible geometry: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BisectionError, NotRegularError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
