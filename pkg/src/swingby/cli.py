"""Command-line front end.

Subcommands: ``search`` runs the evolutionary-branching search on a
problem file and exports the archive; ``grid`` writes transfer-cost
porkchop grids; ``characterize`` merges archives over repeated seeded
runs into a launch-date scatter; ``baseline`` runs the Latin-hypercube
multistart. Exit codes: 0 success, 2 validation failure, 3 runtime
failure. All randomized commands take --seed and are bit-reproducible
for a fixed seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .baseline import multistart
from .ephemeris import CatalogError, load_catalog
from .model import MgaProblem, ProblemError, grid_scan, load_problem
from .optimizer import SearchParams, SolutionArchive, run_search

_PARAM_KEYS = ("n_pop", "n_e", "sigma", "max_evals", "branch_levels",
               "crowding_threshold", "seed", "theta", "eps_radius",
               "node_evals")


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_atomic(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_inputs(args) -> tuple[MgaProblem, SearchParams]:
    catalog = None
    if getattr(args, "catalog", None):
        catalog = load_catalog(Path(args.catalog))
    problem = load_problem(args.problem, catalog=catalog)
    merged = {k: v for k, v in problem.optimizer_defaults.items()
              if k in _PARAM_KEYS}
    overrides = {
        "seed": args.seed,
        "max_evals": getattr(args, "max_evals", None),
        "n_pop": getattr(args, "pop", None),
        "n_e": getattr(args, "filter", None),
        "branch_levels": getattr(args, "branch_levels", None),
        "sigma": getattr(args, "sigma", None),
        "node_evals": getattr(args, "node_evals", None),
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    params = SearchParams(**merged)
    if getattr(args, "no_polish", False):
        params.polish = False
    params.validate(problem.n_vars)
    return problem, params


def _archive_payload(problem: MgaProblem, archive: SolutionArchive) -> dict:
    entries = []
    for f, y in archive.entries:
        entries.append({
            "y": [float(v) for v in y],
            "f_kms": float(f),
            "summary": problem.summarize(y, f),
        })
    return {"problem": problem.name, "count": len(entries),
            "entries": entries}


def _write_archive(problem: MgaProblem, archive: SolutionArchive,
                   out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    jpath = out_dir / "archive.json"
    cpath = out_dir / "archive.csv"
    payload = _archive_payload(problem, archive)
    _write_atomic(jpath, json.dumps(payload, indent=2))

    n_legs = problem.n_legs
    header = (["rank", "dv_total_kms", "t0_mjd2000", "launch_date",
               "vinf0_kms", "arrival_vinf_kms", "sequence"]
              + [f"tof{k + 1}_days" for k in range(n_legs)]
              + [f"dsm{k + 1}_kms" for k in range(n_legs)])
    with open(cpath, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rank, entry in enumerate(payload["entries"]):
            s = entry["summary"]
            tofs = [leg["tof_days"] for leg in s["legs"]]
            dsms = [leg["dsm_kms"] for leg in s["legs"]]
            row = [rank, repr(entry["f_kms"]), repr(s["t0_mjd2000"]),
                   s["launch_date"], repr(s["vinf0_kms"]),
                   repr(s["arrival_vinf_kms"]),
                   "-".join(str(b) for b in s["sequence"])]
            row += [repr(t) for t in tofs] + [""] * (n_legs - len(tofs))
            row += [repr(d) for d in dsms] + [""] * (n_legs - len(dsms))
            writer.writerow(row)
    return {"archive_json": str(jpath), "archive_csv": str(cpath)}


def _write_manifest(out_dir: Path, body: dict):
    body = dict(body)
    body["finished_utc"] = _utcnow()
    _write_atomic(out_dir / "manifest.json", json.dumps(body, indent=2))


def cmd_search(args) -> int:
    try:
        problem, params = _load_inputs(args)
    except (ProblemError, CatalogError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out_dir)
    started = _utcnow()
    result = run_search(problem, params)
    artifacts = _write_archive(problem, result.archive, out_dir)
    _write_manifest(out_dir, {
        "command": "search",
        "problem": str(args.problem),
        "params": vars(params) | {"node_evals": params.node_evals},
        "seed": params.seed,
        "started_utc": started,
        "evals_search": result.evals_search,
        "evals_polish": result.evals_polish,
        "nodes_explored": result.nodes_explored,
        "branchings": result.branchings,
        "archive_size": len(result.archive),
        "best_kms": result.archive.best_f,
        "artifacts": artifacts,
    })
    best = result.archive.best
    print(f"best total dv: {best[0]:.4f} km/s "
          f"({len(result.archive)} archived solutions)")
    return 0


def cmd_characterize(args) -> int:
    try:
        problem, params = _load_inputs(args)
        if args.runs < 1:
            raise ValueError("--runs must be at least 1")
    except (ProblemError, CatalogError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _utcnow()
    merged = SolutionArchive(problem.lower, problem.upper,
                             params.crowding_threshold,
                             capacity=params.archive_capacity * args.runs)
    evals = polish = 0
    for run in range(args.runs):
        run_params = SearchParams(**{**vars(params),
                                     "seed": params.seed + run})
        result = run_search(problem, run_params)
        merged.merge(result.archive)
        evals += result.evals_search
        polish += result.evals_polish

    spath = out_dir / "scatter.csv"
    n_legs = problem.n_legs
    with open(spath, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t0_mjd2000", "dv_total_kms", "sequence"]
                        + [f"tof{k + 1}_days" for k in range(n_legs)])
        for f, y in merged.entries:
            s = problem.summarize(y, f)
            writer.writerow([repr(s["t0_mjd2000"]), repr(float(f)),
                             "-".join(str(b) for b in s["sequence"])]
                            + [repr(leg["tof_days"]) for leg in s["legs"]])
    artifacts = _write_archive(problem, merged, out_dir)
    artifacts["scatter_csv"] = str(spath)
    _write_manifest(out_dir, {
        "command": "characterize",
        "problem": str(args.problem),
        "runs": args.runs,
        "seed": params.seed,
        "started_utc": started,
        "evals_search": evals,
        "evals_polish": polish,
        "archive_size": len(merged),
        "best_kms": merged.best_f,
        "artifacts": artifacts,
    })
    print(f"{len(merged)} merged minima; best {merged.best_f:.4f} km/s")
    return 0


def cmd_grid(args) -> int:
    try:
        catalog = load_catalog(Path(args.catalog)) if args.catalog else None
        if catalog is None:
            from .ephemeris import default_catalog
            catalog = default_catalog()
        if args.p1 not in catalog or args.p2 not in catalog:
            raise ProblemError(f"unknown body id {args.p1} or {args.p2}")
        if args.nt0 < 2 or args.ntof < 2:
            raise ProblemError("grid resolution must be at least 2")
    except (ProblemError, CatalogError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    t0s, tofs, cost = grid_scan(
        catalog, args.p1, args.p2, args.t0, args.tof, args.nt0, args.ntof,
        mode=args.mode, dv1_kms=args.dv1)
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t0_mjd2000", "tof_days", "dv_total_kms"])
        for i, t0 in enumerate(t0s):
            for j, tof in enumerate(tofs):
                writer.writerow([repr(float(t0)), repr(float(tof)),
                                 repr(float(cost[i, j]))])
    print(f"wrote {args.nt0 * args.ntof} cells to {out}")
    return 0


def cmd_baseline(args) -> int:
    try:
        problem, params = _load_inputs(args)
        if args.best > args.samples:
            raise ValueError("--best must not exceed --samples")
    except (ProblemError, CatalogError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _utcnow()
    report = multistart(problem, args.samples, args.best, args.runs,
                        seed=params.seed,
                        max_evals=args.max_evals,
                        crowding_threshold=params.crowding_threshold)
    archive = SolutionArchive(problem.lower, problem.upper,
                              params.crowding_threshold,
                              capacity=max(len(report.minima), 1))
    for f, y in report.minima:
        archive.offer(y, f)
    artifacts = _write_archive(problem, archive, out_dir)
    _write_manifest(out_dir, {
        "command": "baseline",
        "problem": str(args.problem),
        "samples": args.samples,
        "best": args.best,
        "runs": args.runs,
        "seed": params.seed,
        "started_utc": started,
        "evals": report.evaluations,
        "samples_drawn": report.samples_drawn,
        "minima": len(report.minima),
        "best_kms": report.best_f,
        "artifacts": artifacts,
    })
    print(f"multistart best {report.best_f:.4f} km/s "
          f"({len(report.minima)} minima, {report.evaluations} evals)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swingby",
        description="Multiple gravity-assist trajectory search")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--problem", required=True,
                       help="problem file path or shipped problem name")
        p.add_argument("--catalog", help="catalog file overriding the "
                                         "problem's reference")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=".")

    p = sub.add_parser("search", help="run the evolutionary search")
    common(p)
    p.add_argument("--max-evals", type=int, default=None)
    p.add_argument("--pop", type=int, default=None, help="population size")
    p.add_argument("--filter", type=int, default=None,
                   help="elite (perception) count")
    p.add_argument("--branch-levels", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--node-evals", type=int, default=None)
    p.add_argument("--no-polish", action="store_true")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("characterize",
                       help="merge archives over repeated seeded runs")
    common(p)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--max-evals", type=int, default=None)
    p.add_argument("--pop", type=int, default=None)
    p.add_argument("--filter", type=int, default=None)
    p.add_argument("--branch-levels", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("grid", help="transfer-cost grid (porkchop data)")
    p.add_argument("--p1", type=int, required=True)
    p.add_argument("--p2", type=int, required=True)
    p.add_argument("--t0", type=float, nargs=2, required=True,
                   metavar=("START", "END"))
    p.add_argument("--tof", type=float, nargs=2, required=True,
                   metavar=("MIN", "MAX"))
    p.add_argument("--nt0", type=int, default=100)
    p.add_argument("--ntof", type=int, default=60)
    p.add_argument("--mode", choices=("two", "three-optimal-eps"),
                   default="two")
    p.add_argument("--dv1", type=float, default=0.0,
                   help="departure burn along the planet velocity (km/s)")
    p.add_argument("--catalog")
    p.add_argument("--out", default="grid.csv")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("baseline", help="Latin-hypercube multistart")
    common(p)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--best", type=int, default=3)
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--max-evals", type=int, default=None,
                   help="total evaluation budget cap")
    p.set_defaults(func=cmd_baseline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (ProblemError, CatalogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
