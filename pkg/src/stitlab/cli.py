"""Command-line front end.

Subcommands: ``tables`` (analytic tables with error bounds), ``simulate``
(seeded constructions with JSON/OBJ export), ``compare`` (simulation
versus analytic verification report) and ``sample-segment`` (the direct
segment-law sampler against the quadrature pmfs).

Exit codes: 0 success, 2 analytic failure, 3 construction cap exceeded,
4 verification failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analytic, io as stit_io
from .combinatorics import build_structure
from .directions import direction_preset
from .engine import (ConstructionCapExceeded, calibrate_time,
                     run_construction)
from .estimators import aggregate_replicates, replicate_statistics
from .geometry import make_window
from .quadrature import QuadratureConfig, QuadratureError
from .report import build_verification_report, report_rows_for_output

EXIT_OK = 0
EXIT_ANALYTIC = 2
EXIT_CAP = 3
EXIT_VERIFICATION = 4


def _load_config_file(path: str) -> dict:
    import tomli
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    return data.get("stitlab", data)


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="TOML config file (flags win)")
    parser.add_argument("--seed", type=int, default=20260808)
    parser.add_argument("--window-side", type=float, default=1.0)
    parser.add_argument("--time", type=float, default=None)
    parser.add_argument("--target-cells", type=int, default=None)
    parser.add_argument("--replicates", type=int, default=8)
    parser.add_argument("--margin", type=float, default=0.15)
    parser.add_argument("--direction-dist", default="isotropic",
                        choices=("isotropic", "aniso-z2"))
    parser.add_argument("--series-terms", type=int, default=10000)
    parser.add_argument("--quad-abs-tol", type=float, default=1e-12)
    parser.add_argument("--cell-cap", type=int, default=1_000_000)
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--out", default=None)
    parser.add_argument("--format", default="csv", choices=("csv", "json"))
    parser.add_argument("--export-obj", action="store_true")


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser,
                       argv: list[str]):
    if not args.config:
        return args
    file_values = _load_config_file(args.config)
    passed = {a.lstrip("-").split("=")[0].replace("-", "_")
              for a in argv if a.startswith("--")}
    for key, value in file_values.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and attr not in passed:
            setattr(args, attr, value)
    return args


def _resolve_time(args) -> float:
    if (args.time is None) == (args.target_cells is None):
        raise SystemExit("exactly one of --time / --target-cells is required")
    if args.time is not None:
        return float(args.time)
    window = make_window(args.window_side)
    dist = direction_preset(args.direction_dist)
    t = calibrate_time(window, dist, args.target_cells, args.seed,
                       cell_cap=args.cell_cap)
    print(f"calibrated time horizon: t = {t:.6g} "
          f"(target {args.target_cells} cells)")
    return t


def _config_dict(args, command: str, t: float | None = None) -> dict:
    cfg = {
        "command": command,
        "seed": args.seed,
        "window_side": args.window_side,
        "replicates": args.replicates,
        "margin": args.margin,
        "direction_dist": args.direction_dist,
        "series_terms": args.series_terms,
        "quad_abs_tol": args.quad_abs_tol,
    }
    if t is not None:
        cfg["time"] = t
    return cfg


# ---------------------------------------------------------------------------
# replicate execution
# ---------------------------------------------------------------------------

_WORKER_ARGS = None


def _worker_init(window_side, direction, t, seed, cell_cap, margin):
    global _WORKER_ARGS
    _WORKER_ARGS = (window_side, direction, t, seed, cell_cap, margin)


def _run_replicate(stream: int):
    window_side, direction, t, seed, cell_cap, margin = _WORKER_ARGS
    window = make_window(window_side)
    dist = direction_preset(direction)
    result = run_construction(window, dist, t, seed, stream=stream,
                              cell_cap=cell_cap, window_side=window_side)
    structure = build_structure(result)
    stats = replicate_statistics(structure, margin)
    stats.counters["final_cells"] = len(result.final_cells)
    return stream, stats


def run_replicate_batch(args, t: float, streams: list[int]):
    """Replicate statistics for the given streams, deterministically
    ordered regardless of scheduling."""
    init = (args.window_side, args.direction_dist, t, args.seed,
            args.cell_cap, args.margin)
    if args.jobs <= 1 or len(streams) == 1:
        _worker_init(*init)
        results = [_run_replicate(s) for s in streams]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs,
                                 initializer=_worker_init,
                                 initargs=init) as pool:
            results = list(pool.map(_run_replicate, streams))
    results.sort(key=lambda pair: pair[0])
    return [stats for _, stats in results]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_tables(args) -> int:
    try:
        quad_cfg = QuadratureConfig(abs_tol=args.quad_abs_tol)
        series_cfg = analytic.SeriesConfig(n_max=args.series_terms)
        series = analytic.segment_series(series_cfg.n_max)
        rows = []

        def add(name, value, bound=0.0, note=""):
            rows.append({"quantity": name, "value": f"{value:.9f}",
                         "error_bound": f"{bound:.3e}",
                         "n_max": series_cfg.n_max, "notes": note})

        p0, p0_err = analytic.p_n(0, quad_cfg)
        add("p_0", p0, p0_err, "closed form available")
        any_t, any_t_err = analytic.prob_any_t(quad_cfg)
        add("P(nu_T>=1)", any_t, any_t_err, "closed form available")
        mu_int, mu_err = analytic.mu_vt_p11_integral(quad_cfg)
        add("mu_V[T],E[P1,1] (published)", mu_int, mu_err, "closed form")
        pt = analytic.p_t_overall(quad_cfg, series)
        add("p_T", pt["p_t"], pt["error_bound"], "two analytic routes agree")
        add("p_X", pt["p_x"], pt["error_bound"], "")
        for n in (1, 2, 20):
            add(f"p_T|{n}", analytic.p_t_given_n(n, series))

        edge = analytic.epsilon_edge_types(series_cfg, series)
        p1 = analytic.epsilon_p1(series_cfg, series)
        z1 = analytic.epsilon_z1(series_cfg, series)
        for variant in ("independent-types", "joint-exact"):
            tail = edge[variant].tail_deficit
            for cls, val in edge[variant].values.items():
                add(f"eps_E[{cls}] ({variant})", val, tail)
            for cls, val in z1[variant].values.items():
                add(f"eps_E[{cls}] ({variant})", val, tail)
            for assign in ("as-printed", "figure-consistent"):
                for cls, val in p1[f"{assign}/{variant}"].values.items():
                    add(f"eps_E[{cls}] ({assign}/{variant})", val, tail)

        nuxx = analytic.nu_exx_pmf(5, series_cfg, series)
        for n in range(6):
            add(f"P(nu_XX={n}) (independent-pairs)", nuxx.values[n],
                nuxx.error_bounds[n])
        nuxx_x = analytic.nu_exx_pmf_exact(5)
        for n in range(6):
            add(f"P(nu_XX={n}) (joint-exact)", nuxx_x.values[n],
                nuxx_x.error_bounds[n])

        eps_printed = dict(edge["independent-types"].values)
        eps_printed.update(p1["as-printed/independent-types"].values)
        eps_printed.update(z1["independent-types"].values)
        derived = analytic.derived_tables(eps_printed, series)
        for name, value in derived.items():
            add(f"{name} (published tables)", value,
                edge["independent-types"].tail_deficit)

        tail = series.edge_deficit
        add("series tail deficit (pmf)", series.pmf_deficit)
        add("series tail deficit (edge-weighted)", tail)

        config = _config_dict(args, "tables")
        _write_rows(rows, args, config,
                    ["quantity", "value", "error_bound", "n_max", "notes"])
        print(f"wrote {len(rows)} analytic table rows")
        return EXIT_OK
    except (QuadratureError, RuntimeError, ValueError) as exc:
        print(f"analytic failure: {exc}", file=sys.stderr)
        return EXIT_ANALYTIC


def cmd_simulate(args) -> int:
    try:
        t = _resolve_time(args)
        window = make_window(args.window_side)
        dist = direction_preset(args.direction_dist)
        totals = {"cells": 0, "polygons": 0, "T": 0, "X": 0}
        for rep in range(args.replicates):
            result = run_construction(window, dist, t, args.seed, stream=rep,
                                      cell_cap=args.cell_cap,
                                      window_side=args.window_side)
            structure = build_structure(result)
            n_t = sum(1 for v in structure.vertices if v.kind == "T")
            n_x = len(structure.vertices) - n_t
            totals["cells"] += len(result.final_cells)
            totals["polygons"] += len(result.polygons)
            totals["T"] += n_t
            totals["X"] += n_x
            print(f"replicate {rep}: {len(result.final_cells)} cells, "
                  f"{len(result.polygons)} polygons, "
                  f"{n_t} T-vertices, {n_x} X-vertices")
            if args.out:
                base = f"{args.out}_rep{rep:03d}"
                stit_io.write_construction_json(result, base + ".json")
                if args.export_obj:
                    stit_io.write_obj(result, base + ".obj")
        n = args.replicates
        print(f"mean cells {totals['cells'] / n:.1f}, "
              f"mean polygons {totals['polygons'] / n:.1f}, "
              f"mean T {totals['T'] / n:.1f}, mean X {totals['X'] / n:.1f}")
        return EXIT_OK
    except ConstructionCapExceeded as exc:
        print(f"construction cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP


def cmd_compare(args) -> int:
    try:
        t = _resolve_time(args)
        if args.replicates < 50:
            print(f"warning: {args.replicates} replicates; "
                  "50 or more are recommended for 3-SE verification")
        per_rep = run_replicate_batch(args, t, list(range(args.replicates)))
    except ConstructionCapExceeded as exc:
        print(f"construction cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    try:
        report = aggregate_replicates(per_rep, args.margin)
        series_cfg = analytic.SeriesConfig(n_max=args.series_terms)
        verification = build_verification_report(report, series_cfg=series_cfg)
    except (QuadratureError, RuntimeError) as exc:
        print(f"analytic failure: {exc}", file=sys.stderr)
        return EXIT_ANALYTIC

    rows = report_rows_for_output(verification)
    config = _config_dict(args, "compare", t)
    _write_rows(rows, args, config,
                ["quantity", "analytic", "simulated", "se", "n", "z",
                 "gating", "flag", "note"])
    n_gate = sum(1 for r in verification.rows if r.gating)
    print(f"verification: {n_gate} gating rows, "
          f"{len(verification.gating_failures)} failures")
    for adj in verification.adjudications:
        print(f"adjudication: {adj.question} -> {adj.verdict}")
    for row in verification.gating_failures:
        print(f"  FAILED {row.name}: analytic {row.analytic:.6f} "
              f"vs simulated {row.simulated:.6f} (z = {row.z:+.1f})")
    return EXIT_OK if verification.passed else EXIT_VERIFICATION


def cmd_sample_segment(args) -> int:
    try:
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=args.seed, spawn_key=(0,))))
        t = args.time if args.time is not None else 1.0
        n = args.replicates * 125_000
        draws = analytic.sample_typical_segment(t, rng, size=n)
        nu_l, nu_r = draws["nu_l"], draws["nu_r"]
        nu_t = nu_l + nu_r
        rows = []
        max_dev = 0.0
        for m in range(6):
            emp = float((nu_t == m).mean())
            se = math.sqrt(max(emp * (1 - emp), 1e-12) / n)
            ana, _ = analytic.t_count_marginal(m)
            z = (emp - ana) / se
            max_dev = max(max_dev, abs(z))
            rows.append({"quantity": f"P(nu_T={m})",
                         "empirical": f"{emp:.6f}", "analytic": f"{ana:.6f}",
                         "z": f"{z:+.2f}"})
        for l in range(3):
            for r in range(3):
                emp = float(((nu_l == l) & (nu_r == r)).mean())
                se = math.sqrt(max(emp * (1 - emp), 1e-12) / n)
                ana, _ = analytic.p_lr(l, r)
                z = (emp - ana) / se
                max_dev = max(max_dev, abs(z))
                rows.append({"quantity": f"P(nu_L={l},nu_R={r})",
                             "empirical": f"{emp:.6f}",
                             "analytic": f"{ana:.6f}", "z": f"{z:+.2f}"})
        total_t = int(nu_t.sum())
        p_l_t = float(nu_l.sum()) / total_t
        se = math.sqrt(0.25 / total_t)
        z = (p_l_t - 0.5) / se
        max_dev = max(max_dev, abs(z))
        rows.append({"quantity": "p_L|T", "empirical": f"{p_l_t:.6f}",
                     "analytic": "0.500000", "z": f"{z:+.2f}"})
        mean_nu_t = float(nu_t.mean())
        rows.append({"quantity": "E[nu_T]", "empirical": f"{mean_nu_t:.6f}",
                     "analytic": "1.000000",
                     "z": f"{(mean_nu_t - 1.0) / (nu_t.std() / math.sqrt(n)):+.2f}"})
        config = _config_dict(args, "sample-segment", t)
        config["draws"] = n
        _write_rows(rows, args, config,
                    ["quantity", "empirical", "analytic", "z"])
        print(f"{n} segment draws; worst |z| = {max_dev:.2f}")
        return EXIT_OK if max_dev < 5.0 else EXIT_VERIFICATION
    except (QuadratureError, RuntimeError) as exc:
        print(f"analytic failure: {exc}", file=sys.stderr)
        return EXIT_ANALYTIC


def _write_rows(rows, args, config, columns):
    if not args.out:
        width = max(len(r[columns[0]]) for r in rows) + 2
        for r in rows:
            print("".join(str(r.get(c, "")).ljust(width if i == 0 else 14)
                          for i, c in enumerate(columns)))
        return
    if args.format == "json":
        stit_io.write_table_json(rows, args.out, config)
    else:
        stit_io.write_table_csv(rows, args.out, config, columns)
    print(f"wrote {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stitlab",
        description="Spatial STIT tessellation laboratory: analytic tables, "
                    "seeded simulation, and cross-validation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("tables", cmd_tables), ("simulate", cmd_simulate),
                     ("compare", cmd_compare),
                     ("sample-segment", cmd_sample_segment)):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config_file(args, parser, argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
