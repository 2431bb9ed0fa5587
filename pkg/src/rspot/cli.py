"""Command-line front end.

Exit codes: 0 success, 1 input/validation error, 2 numerical failure.
Errors print a single line ``rspot: error[<kind>]: <reason>`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .distances import cbop_solution, coupling_matrix, surprisal_distance
from .errors import InputError, NumericalError
from .extended import DEFAULT_MU_FACTOR, build_extended, read_margins
from .graph import read_edge_list, validate_structure
from .rsp import build_system, edge_flows, optimal_policy
from .solver import SolverConfig, solve_margins

COMMANDS = ("validate", "rsp", "solve", "coupling", "distance")
EXTENSIONS = ("auto", "consistent", "unit")


def format_float(x) -> str:
    return format(float(x), ".17g")


def write_matrix_csv(path, matrix, labels, row_labels=None):
    """Dense CSV with a header of column node ids.

    With ``row_labels`` the first column holds the row node ids and the
    header starts with ``node``.
    """
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        head = [str(x) for x in labels]
        out.writerow(head if row_labels is None else ["node"] + head)
        for k, row in enumerate(np.asarray(matrix)):
            vals = [format_float(v) for v in row]
            out.writerow(vals if row_labels is None else [str(row_labels[k])] + vals)


def read_matrix_csv(path):
    """Return ``(matrix, column_labels, row_labels)``; row labels are None if absent."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    if head and head[0] == "node":
        body = rows[1:]
        return np.array([[float(v) for v in r[1:]] for r in body]), head[1:], [r[0] for r in body]
    return np.array([[float(v) for v in r] for r in rows[1:]]), head, None


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="rspot",
        description="Entropy-regularized optimal transport on graphs via margin-constrained RSP.",
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--graph", required=True, help="edge list TSV: src dst weight [cost]")
    ap.add_argument("--margins", help="margins TSV: node sigma_in sigma_out")
    ap.add_argument("--theta", type=float, default=1.0)
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--max-iter", type=int, default=10000)
    ap.add_argument("--mu-factor", type=float, default=DEFAULT_MU_FACTOR)
    ap.add_argument("--scheme", choices=("uniform", "degree", "invdeg"))
    ap.add_argument("--undirected", action="store_true", help="symmetrize A <- (A + A^T)/2")
    ap.add_argument(
        "--extension",
        choices=EXTENSIONS,
        default="auto",
        help="sink wiring: consistent killing probabilities, unit sink weights on outputs, "
        "or auto (consistent when the graph is strongly connected)",
    )
    ap.add_argument("--out", help="output directory")
    return ap


def _check_flags(args):
    if args.scheme is not None and args.command != "distance":
        raise InputError("--scheme is only valid with the distance command")
    if args.command in ("rsp", "solve", "coupling") and not args.margins:
        raise InputError(f"{args.command} requires --margins")
    if args.command == "distance" and args.margins:
        raise InputError("distance derives its margins from --scheme; drop --margins")
    if args.command != "validate" and not args.out:
        raise InputError(f"{args.command} requires --out")
    if not args.theta > 0:
        raise InputError("--theta must be positive")
    if not args.tol > 0 or args.max_iter < 1:
        raise InputError("--tol must be positive and --max-iter at least 1")
    if not args.mu_factor >= 1:
        raise InputError("--mu-factor must be at least 1")


def _load_graph(args):
    g = read_edge_list(args.graph)
    if args.undirected:
        reciprocal = np.allclose(g.costs[g.support] * g.adjacency[g.support], 1.0)
        g = g.symmetrized(reciprocal=reciprocal)
    return g


def _extend(g, m, args, report):
    mode = args.extension
    if mode == "auto":
        mode = "consistent" if report.strongly_connected else "unit"
    if mode == "consistent":
        return build_extended(g, m, "consistent", mu_factor=args.mu_factor)
    return build_extended(g, m, "user_weights", weights=(m.sigma_out > 0).astype(float))


def _ext_labels(ext):
    return [ext.label(k) for k in range(ext.node_count)]


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except NumericalError as exc:
        _fail("numerical", exc)
        return 2
    except (InputError, OSError, ValueError) as exc:
        _fail("input", exc)
        return 1


def _fail(kind, exc):
    msg = " ".join(str(exc).split())
    print(f"rspot: error[{kind}]: {msg}", file=sys.stderr)


def _run(args) -> int:
    _check_flags(args)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    g = _load_graph(args)
    structure = validate_structure(g)

    if args.command == "validate":
        report = {"graph": structure.to_dict(), "node_count": g.node_count}
        if args.margins:
            ext = _extend(g, read_margins(args.margins, g), args, structure)
            issues = ext.check_wiring()
            report["extended"] = {
                "provenance": ext.provenance,
                "wiring_ok": not issues,
                "issues": issues,
            }
        text = json.dumps(report, indent=2, sort_keys=True)
        print(text)
        if out is not None:
            write_json(out / "report.json", report)
        return 0

    cfg = SolverConfig(theta=args.theta, tol=args.tol, max_iter=args.max_iter)

    if args.command == "distance":
        sol = cbop_solution(g, args.theta, args.scheme or "uniform", cfg, args.mu_factor)
        coupling = coupling_matrix(sol)
        dist = surprisal_distance(coupling)
        write_matrix_csv(out / "distance.csv", dist.delta, dist.labels)
        write_matrix_csv(out / "coupling.csv", coupling.gamma, coupling.output_labels, coupling.input_labels)
        report = sol.report()
        report["scheme"] = args.scheme or "uniform"
        write_json(out / "report.json", report)
        return 0

    m = read_margins(args.margins, g)
    ext = _extend(g, m, args, structure)
    issues = ext.check_wiring()
    if issues:
        raise InputError("; ".join(issues))

    if args.command == "rsp":
        sys_ = build_system(ext.transitions, ext.costs, args.theta)
        flows = edge_flows(sys_)
        write_matrix_csv(out / "policy.csv", optimal_policy(sys_), _ext_labels(ext))
        write_json(
            out / "report.json",
            {
                "theta": args.theta,
                "partition": sys_.partition,
                "free_energy": flows.free_energy,
                "expected_cost": flows.expected_cost,
                "extended_graph": {"provenance": ext.provenance, "mu": ext.mu},
            },
        )
        return 0

    sol = solve_margins(ext, cfg)
    if args.command == "solve":
        write_matrix_csv(out / "policy.csv", sol.policy, _ext_labels(ext))
    else:
        coupling = coupling_matrix(sol)
        write_matrix_csv(out / "coupling.csv", coupling.gamma, coupling.output_labels, coupling.input_labels)
    write_json(out / "report.json", sol.report())
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
