"""Command-line interface: simulate, estimate, estimand, replicate-tables.

Data files: network edge list ('n <count>' header, one 'i j' per line),
covariates CSV (id, x1..xp), outcomes CSV (id, y); the horizon is a flag.
Fit results and estimand records are emitted as JSON; the replication runner
emits CSV tables with figures alongside.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import estimands
from .data import Sample, read_covariates, read_outcomes, write_covariates, write_outcomes
from .estimator import FitOptions, fit
from .harness import SCENARIOS, ExperimentConfig, replicate_tables
from .likelihood import LikelihoodOptions, split_sample
from .net import make_block_network, make_homophilic_network, read_edge_list, write_edge_list
from .process import simulate
from .rates import Theta


def _parse_floats(s: str) -> list:
    return [float("inf") if v.strip() in ("inf", "Inf") else float(v) for v in s.split(",")]


def _load_sample(args) -> Sample:
    net = read_edge_list(args.network)
    X = read_covariates(args.covariates)
    y = read_outcomes(args.outcomes)
    return Sample(net=net, X=X, y=y, S=args.horizon)


def _identification_warning(sample: Sample) -> bool:
    """All-complete components with homogeneous covariates are not identified."""
    for members in sample.net.components:
        m = members.shape[0]
        sub = sample.net.adjacency[np.ix_(members, members)]
        if m > 1 and sub.sum() != m * (m - 1):
            return False
        Xc = sample.X[members]
        if not np.allclose(Xc, Xc[0]):
            return False
    return True


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    n = args.n_total
    X = np.column_stack([rng.uniform(-1, 1, n), rng.normal(0, 1, n)])
    if args.design == "block":
        net = make_block_network(n, args.group_size)
    else:
        ids = np.repeat(np.arange(n // args.group_size), args.group_size)
        net = make_homophilic_network(
            [X[ids == g] for g in range(n // args.group_size)], rng
        )
    theta = Theta(beta=np.asarray(_parse_floats(args.beta)), delta=args.delta)
    traj = simulate(net, X, theta, args.horizon, rng)
    os.makedirs(args.out_dir, exist_ok=True)
    write_edge_list(net, os.path.join(args.out_dir, "network.edges"))
    write_covariates(X, os.path.join(args.out_dir, "covariates.csv"))
    write_outcomes(traj.outcomes, os.path.join(args.out_dir, "outcomes.csv"))
    traj.to_csv(os.path.join(args.out_dir, "trajectory.csv"))
    print(f"wrote network/covariates/outcomes/trajectory to {args.out_dir}")
    return 0


def cmd_estimate(args) -> int:
    sample = _load_sample(args)
    if _identification_warning(sample):
        print(
            "warning: all components are complete graphs with homogeneous "
            "covariates; peer effects are not identified in this regime "
            "(stronger baseline rates are observationally equivalent)",
            file=sys.stderr,
        )
    opts = FitOptions(
        likelihood=LikelihoodOptions(
            enum_cap=args.enum_cap, sample_size=args.sample_size, seed=args.seed
        )
    )
    result = fit(sample, opts=opts)
    text = result.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if result.converged else 3


def cmd_estimand(args) -> int:
    sample = _load_sample(args)
    with open(args.theta) as fh:
        obj = json.load(fh)
    theta = Theta(beta=np.asarray(obj["beta"], dtype=float), delta=float(obj["delta"]))
    rng = np.random.default_rng(args.seed)
    record = {"kind": args.kind, "budget": args.budget, "seed": args.seed}

    if args.kind == "prob-delta":
        i = args.target
        xb = float(sample.X[i] @ theta.beta)
        lam = float(np.exp(xb))
        lam_plus = float(np.exp(xb + theta.delta))
        record["value"] = estimands.prob_delta_all_peers(lam, lam_plus, sample.S)
        record["mc_se"] = 0.0
    elif args.kind == "first-order-delta":
        lam = float(np.exp(sample.X[args.target] @ theta.beta))
        record["value"] = estimands.first_order_delta(lam, theta.delta, sample.S)
        record["mc_se"] = 0.0
    elif args.kind == "general-delta":
        tau_tilde = np.asarray(_parse_floats(args.tau_tilde))
        tau = np.asarray(_parse_floats(args.tau))
        est = estimands.general_delta(
            sample.net, sample.X, theta, sample.S, tau_tilde, tau,
            args.target, args.budget, rng,
        )
        record["value"], record["mc_se"] = est.value, est.mc_se
    elif args.kind == "time-to-fraction":
        est = estimands.expected_time_to_fraction(
            sample.net, sample.X, theta, args.q, args.budget, rng
        )
        record["value"], record["mc_se"] = est.value, est.mc_se
    elif args.kind == "order-posterior":
        comps = split_sample(sample)
        posts = []
        for k, comp in enumerate(comps):
            if comp.G == 0:
                continue
            perms, probs, first = estimands.order_posterior(comp, theta)
            posts.append(
                {
                    "component": k,
                    "orders": perms.tolist(),
                    "probabilities": probs.tolist(),
                    "first_mover": first.tolist(),
                }
            )
        record["value"] = posts
        record["mc_se"] = 0.0
    else:
        raise ValueError(f"unknown estimand kind {args.kind!r}")

    text = json.dumps(record)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _load_config(path) -> dict:
    cfg = {}
    with open(path) as fh:
        for lineno, ln in enumerate(fh, start=1):
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            if "=" not in ln:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {ln!r}")
            key, val = (s.strip() for s in ln.split("=", 1))
            cfg[key.replace("-", "_")] = val
    return cfg


def cmd_replicate_tables(args) -> int:
    overrides = _load_config(args.config) if args.config else {}
    base = ExperimentConfig()
    scalar_casts = {
        "n_total": int, "replications": int, "seed": int, "S": float,
        "horizon": float, "enum_cap": int, "sample_size": int,
    }
    for key, val in overrides.items():
        if key == "horizon":
            base = replace(base, S=float(val))
        elif key == "beta":
            base = replace(base, beta=tuple(_parse_floats(val)))
        elif key in scalar_casts:
            base = replace(base, **{key: scalar_casts[key](val)})
    if args.reps is not None:
        base = replace(base, replications=args.reps)
    if args.seed is not None:
        base = replace(base, seed=args.seed)

    def _sizes(flag, conf_key, default):
        if flag:
            return tuple(int(v) for v in flag.split(","))
        if conf_key in overrides:
            return tuple(int(v) for v in overrides[conf_key].split(","))
        return default

    table1_sizes = _sizes(args.table1_sizes, "table1_sizes", (5, 10, 20))
    table2_sizes = _sizes(args.table2_sizes, "table2_sizes", (5, 10))
    deltas = (
        tuple(_parse_floats(args.deltas)) if args.deltas
        else tuple(_parse_floats(overrides["deltas"])) if "deltas" in overrides
        else (-0.5, 0.0, 0.5)
    )
    scenarios = (
        tuple(args.scenarios.split(",")) if args.scenarios else SCENARIOS
    )
    written = replicate_tables(
        args.out_dir,
        base=base,
        table1_sizes=table1_sizes,
        table2_sizes=table2_sizes,
        deltas=deltas,
        scenarios=scenarios,
        figures=not args.no_figures,
    )
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peerhazard",
        description="Peer effects in irreversible adoption: simulation, "
        "estimation, estimands, and replication tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a dataset and write data files")
    p.add_argument("--design", choices=("block", "homophilic"), default="block")
    p.add_argument("--n-total", type=int, default=1000)
    p.add_argument("--group-size", type=int, default=5)
    p.add_argument("--beta", default="1,0.5")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit the MLE from data files")
    p.add_argument("--network", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--outcomes", required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--enum-cap", type=int, default=8)
    p.add_argument("--sample-size", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("estimand", help="counterfactual quantities at a theta")
    p.add_argument(
        "--kind",
        required=True,
        choices=(
            "prob-delta", "first-order-delta", "general-delta",
            "time-to-fraction", "order-posterior",
        ),
    )
    p.add_argument("--network", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--outcomes", required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--theta", required=True, help="JSON file with beta and delta")
    p.add_argument("--target", type=int, default=0)
    p.add_argument("--tau", help="comma list of forced times (inf allowed)")
    p.add_argument("--tau-tilde", help="comma list of forced times (inf allowed)")
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimand)

    p = sub.add_parser("replicate-tables", help="run the simulation studies")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--table1-sizes")
    p.add_argument("--table2-sizes")
    p.add_argument("--deltas")
    p.add_argument("--scenarios")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_replicate_tables)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
