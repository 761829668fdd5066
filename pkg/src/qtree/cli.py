"""Command-line entry point.

Subcommands cover the whole workflow: ``simulate`` samples measurement
records, ``decode`` turns records into Bloch vectors, ``estimate`` produces
the Z-hat table (with truncation to every smaller depth), ``pool`` computes
order-parameter curves, ``critical`` solves for the critical strength,
``scaling`` fits the front exponent, ``export-qasm`` writes OpenQASM files,
and ``plot`` renders curves plus estimates as SVG.  Every output embeds the
producing configuration; with --no-timestamp outputs are byte-reproducible.
Exit codes: 0 success, 2 usage error, 1 runtime error.
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import __version__, circuits, svgplot, theory
from .decoder import decode_batch
from .estimator import default_workers, estimate_Z, simulate_records, xs_by_depth
from .model import (
    MeasurementRecord,
    build_instance,
    derive_seed,
    load_instances,
    load_records,
    record_length,
    save_instances,
    save_records,
    truncate,
)
from .pool import curves_from_csv, curves_to_csv, parse_theta_grid, pool_run

_CIRCUIT_NS = 0xC1  # must match estimator's circuit-id stream namespace


def _config_line(args: argparse.Namespace, keys: list[str]) -> str:
    fields = {k: getattr(args, k.replace("-", "_")) for k in keys}
    parts = [f"qtree={__version__}"] + [f"{k}={fields[k]!r}" for k in keys]
    if not args.no_timestamp:
        parts.append(f"written={datetime.datetime.now(datetime.timezone.utc).isoformat()}")
    return " ".join(parts)


def _cmd_simulate(args: argparse.Namespace) -> int:
    instances, records = simulate_records(
        args.t, args.theta, args.n_circuits, args.n_shots, args.seed, args.backend
    )
    save_instances(args.out_instances, instances, args.seed)
    header = {
        "t": args.t, "theta": args.theta, "seed": args.seed,
        "n_circuits": args.n_circuits, "n_shots": args.n_shots,
        "backend": args.backend, "qtree": __version__,
    }
    save_records(args.out_records, records, header)
    print(f"wrote {len(records)} records for {len(instances)} circuits")
    return 0


def _cmd_decode(args: argparse.Namespace) -> int:
    instances, _ = load_instances(args.instances)
    records, _ = load_records(args.records)
    lines = [json.dumps({
        "format_version": 1, "kind": "bloch", "instances": args.instances,
        "records": args.records, "qtree": __version__,
    })]
    by_circuit: dict[int, list[tuple[int, MeasurementRecord]]] = {}
    for cid, shot, rec in records:
        by_circuit.setdefault(cid, []).append((shot, rec))
    for cid in sorted(by_circuit):
        shots = sorted(by_circuit[cid])
        m_w = np.stack([rec.weak for _, rec in shots])
        _, n_vec, z = decode_batch(instances[cid], m_w)
        for row, (shot, _) in enumerate(shots):
            lines.append(json.dumps({
                "circuit_id": cid, "shot": shot,
                "nx": n_vec[row, 0], "ny": n_vec[row, 1], "nz": n_vec[row, 2],
                "z": z[row],
            }))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"decoded {len(lines)} shots")
    return 0


def _cmd_estimate(args: argparse.Namespace) -> int:
    instances, _ = load_instances(args.instances)
    records, _ = load_records(args.records)
    xs = xs_by_depth(instances, records)
    theta = instances[0].theta
    rows = ["t,theta,z_hat,se,n_circuits,n_shots"]
    for tp in sorted(xs):
        res = estimate_Z(xs[tp], tp, theta)
        rows.append(
            f"{res.t},{res.theta!r},{res.z_hat!r},{res.se!r},"
            f"{res.n_circuits},{res.n_shots}"
        )
    cfg = _config_line(args, ["instances", "records"])
    with open(args.out, "w") as fh:
        fh.write(f"# {cfg}\n" + "\n".join(rows) + "\n")
    print(f"wrote {len(rows) - 1} rows to {args.out}")
    return 0


def _cmd_pool(args: argparse.Namespace) -> int:
    thetas = parse_theta_grid(args.theta_grid)
    workers = args.workers or default_workers()
    curves = pool_run(thetas, args.t_max, args.pool_size, args.seed, workers=workers)
    cfg = _config_line(args, ["theta-grid", "t-max", "pool-size", "seed"])
    with open(args.out, "w") as fh:
        fh.write(curves_to_csv(curves, cfg))
    print(f"wrote {thetas.size * args.t_max} rows to {args.out}")
    return 0


def _cmd_critical(args: argparse.Namespace) -> int:
    lo, hi = (float(v) for v in args.bracket.split(":"))
    res = theory.find_critical_point(
        lam=args.lam, n_samples=args.samples, tol=args.tol, seed=args.seed,
        bracket=(lo, hi),
    )
    print(f"theta_c = {res.theta_c:.4f} +- {res.ci_halfwidth:.4f} "
          f"(n = {res.n_samples} per evaluation)")
    if args.out:
        cfg = _config_line(args, ["samples", "tol", "seed", "lam"])
        with open(args.out, "w") as fh:
            fh.write(f"# {cfg}\ntheta_c,ci_halfwidth,n_samples\n"
                     f"{res.theta_c!r},{res.ci_halfwidth!r},{res.n_samples}\n")
    return 0


def _cmd_velocity(args: argparse.Namespace) -> int:
    lams = parse_theta_grid(args.lam_grid)  # same start:stop:count syntax
    rows = ["theta,lam,v,mc_error"]
    for lam in lams:
        v = theory.velocity(args.theta, float(lam), args.samples, args.seed)
        rows.append(f"{args.theta!r},{float(lam)!r},{v.v!r},{v.mc_error!r}")
        print(f"lam={lam:.3f}: v = {v.v:+.5f} +- {v.mc_error:.5f}")
    if args.out:
        cfg = _config_line(args, ["theta", "lam-grid", "samples", "seed"])
        with open(args.out, "w") as fh:
            fh.write(f"# {cfg}\n" + "\n".join(rows) + "\n")
    return 0


def _cmd_scaling(args: argparse.Namespace) -> int:
    curves = curves_from_csv(open(args.curves).read())
    i = int(np.argmin(np.abs(curves.thetas - args.theta)))
    if abs(curves.thetas[i] - args.theta) > 1e-9:
        print(f"note: using nearest grid theta {float(curves.thetas[i])!r}", file=sys.stderr)
    z_typ = curves.z_typ[i]
    keep = z_typ > 0.0
    fit = theory.scaling_fit(curves.ts[keep], np.log(z_typ[keep]), t_min=args.t_min)
    print(f"front exponent = {fit.slope:.4f} (intercept {fit.intercept:.4f}, "
          f"rms residual {fit.residual:.4f})")
    return 0


def _cmd_export_qasm(args: argparse.Namespace) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    count = 0
    for i in range(args.n_circuits):
        inst_seed = derive_seed(args.seed, _CIRCUIT_NS, i)
        inst = build_instance(args.t, args.theta, inst_seed)
        gc = circuits.build_gate_circuit(inst, l=args.l, variant=args.variant)
        circuits.validate_schedule(gc)
        path = os.path.join(args.out_dir, circuits.qasm_filename(inst_seed, args.t, args.theta))
        with open(path, "w") as fh:
            fh.write(circuits.export_qasm(gc))
        count += 1
    print(f"wrote {count} QASM files to {args.out_dir}")
    return 0


def _cmd_plot(args: argparse.Namespace) -> int:
    curves = curves_from_csv(open(args.curves).read())
    estimates = []
    if args.estimates:
        for line in open(args.estimates):
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("t,"):
                continue
            t, theta, z_hat, se = line.split(",")[:4]
            estimates.append({
                "t": int(t), "theta": float(theta),
                "z_hat": float(z_hat), "se": float(se),
            })
    svg = svgplot.render_curves(curves, estimates, title=args.title)
    cfg = _config_line(args, ["curves", "estimates"])
    svg = svg.replace("\n", f"\n<!-- {cfg} -->\n", 1)
    with open(args.out, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtree",
        description="Dynamical quantum-tree simulator and analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=f"qtree {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=0,
                       help="0 = QTREE_WORKERS env var or available parallelism")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit the timestamp field for byte-reproducible output")

    p = sub.add_parser("simulate", help="sample measurement records")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--n-circuits", type=int, default=100)
    p.add_argument("--n-shots", type=int, default=8)
    p.add_argument("--backend", choices=("branch", "statevector"), default="branch")
    p.add_argument("--out-instances", required=True)
    p.add_argument("--out-records", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("decode", help="records -> Bloch vectors")
    p.add_argument("--instances", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("estimate", help="records -> Z-hat table per depth")
    p.add_argument("--instances", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("pool", help="order-parameter curves via the pool method")
    p.add_argument("--theta-grid", required=True, help="start:stop:count (radians)")
    p.add_argument("--t-max", type=int, default=800)
    p.add_argument("--pool-size", type=int, default=1_000_000)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_pool)

    p = sub.add_parser("critical", help="solve for the critical strength")
    p.add_argument("--samples", type=int, default=10_000_000)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--bracket", default=f"{np.pi / 2}:{np.pi}",
                   help="lo:hi bisection bracket in radians")
    p.add_argument("--out", default=None)
    add_common(p)
    p.set_defaults(func=_cmd_critical)

    p = sub.add_parser("velocity", help="front-velocity scan over the tilt parameter")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--lam-grid", default="0.5:1.5:11", help="start:stop:count")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--out", default=None)
    add_common(p)
    p.set_defaults(func=_cmd_velocity)

    p = sub.add_parser("scaling", help="fit the critical front exponent")
    p.add_argument("--curves", required=True)
    p.add_argument("--theta", type=float, default=theory.THETA_C)
    p.add_argument("--t-min", type=int, default=20)
    add_common(p)
    p.set_defaults(func=_cmd_scaling)

    p = sub.add_parser("export-qasm", help="write OpenQASM 2.0 circuits")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--n-circuits", type=int, default=1)
    p.add_argument("--variant", choices=("standard", "native"), default="native")
    p.add_argument("--l", type=int, default=4)
    p.add_argument("--out-dir", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_export_qasm)

    p = sub.add_parser("plot", help="render curves + estimates to SVG")
    p.add_argument("--curves", required=True)
    p.add_argument("--estimates", default=None)
    p.add_argument("--title", default="order parameter")
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
