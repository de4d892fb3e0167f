"""Command-line interface.

Subcommands: solve (optimal schedule + certificate), queue (occupancy sweep
CSV), simulate (slotted network simulation to CSV), spp (separation policy
report), experiment (figure reproductions), verify (self-check matrix).
Exit code 0 only if all requested checks pass.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments
from .errors import FreshnetError
from .network import load_network
from .optimizer import peak_age_of, solve_general, solve_klink
from .simulator import (Distributed, RoundRobin, Sources, StationaryCentralized,
                        StationaryMarginal, UniformStationary, metrics_rows,
                        replicate)
from .spp import additive_gap_check, build_spp, multiplicative_bound_report


def _cmd_solve(args) -> int:
    net, family = load_network(args.net)
    policy, cert = solve_general(net, family, tol=args.tol, max_iter=args.max_iter)
    report = cert.report(policy, peak_age_of(policy.f, net))
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if cert.gap <= args.tol * max(cert.omega, 1e-300) else 1


def _cmd_queue(args) -> int:
    rows = experiments.queue_sweep(args.kind, args.gamma_f, out=args.out)
    if not args.out:
        _print_rows(rows)
    return 0


def _make_scheduler(spec: str, net, family):
    name, _, param = spec.partition(":")
    if name == "pi-c":
        if family.kind == "k-link":
            f, _ = solve_klink(net, family.K)
            return StationaryMarginal(f, family.K)
        policy, _ = solve_general(net, family)
        return StationaryCentralized(policy.sets, policy.x, net.n_links)
    if name == "uniform":
        return UniformStationary(family)
    if name == "round-robin":
        if family.kind == "k-link":
            return RoundRobin.by_channel_quality(net, family.K)
        return RoundRobin([list(m) for m in family.maximal().sets], net.n_links)
    if name == "distributed":
        vals = [float(v) for v in param.split(",")] if param else [0.25]
        p = np.full(net.n_links, vals[0]) if len(vals) == 1 else np.array(vals)
        return Distributed(p, family)
    raise FreshnetError(f"unknown scheduler {name!r}")


def _make_sources(spec: str, n: int) -> Sources:
    name, _, param = spec.partition(":")
    if name == "active":
        return Sources.active(n)
    vals = [float(v) for v in param.split(",")] if param else []
    if not vals:
        raise FreshnetError(f"{name} sources need a rate or period parameter")
    arr = np.full(n, vals[0]) if len(vals) == 1 else np.array(vals)
    if name == "bernoulli":
        return Sources.bernoulli(arr)
    if name == "periodic":
        return Sources.periodic(arr.astype(int))
    raise FreshnetError(f"unknown source kind {name!r}")


def _cmd_simulate(args) -> int:
    net, family = load_network(args.net)
    scheduler = _make_scheduler(args.scheduler, net, family)
    sources = _make_sources(args.sources, net.n_links)
    m = replicate(net, family, scheduler, sources, args.slots, args.warmup,
                  args.reps, base_seed=args.seed)
    rows = metrics_rows(m)
    if args.out:
        experiments.write_csv(args.out, rows, "simulate")
    else:
        _print_rows(rows)
    print(f"weighted peak {m.weighted_peak:.6f} +- {m.peak_hw:.6f}; "
          f"weighted average {m.weighted_average:.6f} +- {m.average_hw:.6f}",
          file=sys.stderr)
    return 0


def _cmd_spp(args) -> int:
    net, family = load_network(args.net)
    kwargs = dict(arrival_kind=args.arrival, metric=args.metric)
    if family.kind == "k-link":
        cfg = build_spp(net, K=family.K, **kwargs)
    else:
        cfg = build_spp(net, family=family, **kwargs)
    report = multiplicative_bound_report(cfg)
    if args.gap_check:
        report.update(additive_gap_check(cfg, family))
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if report.get("within_one_slot", True) else 1


def _cmd_experiment(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    name = args.name
    if name == "fig2":
        experiments.experiment_fig2(out=os.path.join(args.out, "fig2.csv"))
    elif name in ("fig3", "fig4"):
        K = 1 if name == "fig3" else 10
        experiments.experiment_fig3_4(
            K, horizon=args.slots, reps=args.reps, seed=args.seed,
            out=os.path.join(args.out, f"{name}.csv"))
    elif name == "fig6":
        experiments.experiment_fig6(out=os.path.join(args.out, "fig6.csv"))
    else:
        raise FreshnetError(f"unknown experiment {name!r}")
    print(f"wrote {args.out}/{name}.csv")
    return 0


def _cmd_verify(args) -> int:
    report = experiments.verify_all(seed=args.seed, horizon=args.slots,
                                    reps=args.reps)
    print(report.matrix())
    return 0 if report.all_passed else 1


def _print_rows(rows):
    fields = list(rows[0].keys())
    print(",".join(fields))
    for r in rows:
        print(",".join(str(r[k]) for k in fields))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="freshnet",
        description="Age-optimal scheduling, queue age calculus, and slotted "
                    "network simulation.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="peak-age-optimal schedule + certificate")
    ps.add_argument("--net", required=True, help="network JSON file")
    ps.add_argument("--tol", type=float, default=1e-8)
    ps.add_argument("--max-iter", type=int, default=100_000)
    ps.add_argument("--out", help="write the JSON report here")
    ps.set_defaults(func=_cmd_solve)

    pq = sub.add_parser("queue", help="occupancy sweep CSV for one arrival kind")
    pq.add_argument("--kind", choices=["bernoulli", "periodic"], required=True)
    pq.add_argument("--gamma-f", type=float, required=True, dest="gamma_f")
    pq.add_argument("--out")
    pq.set_defaults(func=_cmd_queue)

    pm = sub.add_parser("simulate", help="slotted simulation to CSV")
    pm.add_argument("--net", required=True)
    pm.add_argument("--scheduler", default="pi-c",
                    help="pi-c | uniform | round-robin | distributed:p[,p...]")
    pm.add_argument("--sources", default="active",
                    help="active | bernoulli:rate[,...] | periodic:D[,...]")
    pm.add_argument("--slots", type=int, default=1_000_000)
    pm.add_argument("--warmup", type=int, default=100_000)
    pm.add_argument("--reps", type=int, default=10)
    pm.add_argument("--seed", type=int, default=0)
    pm.add_argument("--out")
    pm.set_defaults(func=_cmd_simulate)

    pp = sub.add_parser("spp", help="separation-principle policy report")
    pp.add_argument("--net", required=True)
    pp.add_argument("--arrival", choices=["bernoulli", "periodic"],
                    default="bernoulli")
    pp.add_argument("--metric", choices=["peak", "ave"], default="peak")
    pp.add_argument("--gap-check", action="store_true",
                    help="also run the brute-force additive-gap oracle")
    pp.add_argument("--out")
    pp.set_defaults(func=_cmd_spp)

    pe = sub.add_parser("experiment", help="reproduce a numerical study")
    pe.add_argument("name", choices=["fig2", "fig3", "fig4", "fig6"])
    pe.add_argument("--out", default="results")
    pe.add_argument("--slots", type=int, default=1_000_000)
    pe.add_argument("--reps", type=int, default=10)
    pe.add_argument("--seed", type=int, default=0)
    pe.set_defaults(func=_cmd_experiment)

    pv = sub.add_parser("verify", help="run the property-check matrix")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--slots", type=int, default=300_000)
    pv.add_argument("--reps", type=int, default=6)
    pv.set_defaults(func=_cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FreshnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
