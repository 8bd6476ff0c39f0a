"""Command-line interface.

Exit codes: 0 on success, 2 for invalid input (configs, rule files,
parameters), 3 when a size cap is exceeded.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import yaml

from .errors import CapExceeded, SpecError
from .forward import default_workers


def _parse_params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise SpecError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = yaml.safe_load(v)
    return out


def _grid(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise SpecError(f"bad time grid {text!r}") from None


def _emit(text, out):
    if out:
        d = os.path.dirname(out)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _spec_from_args(args, quantities):
    """Build an ExperimentSpec from a config file, overriding with CLI flags."""
    from .harness import ExperimentSpec, load_config

    if args.config:
        d = load_config(args.config)
    elif getattr(args, "rules", None):
        d = {"model": {"builder": "rule_file", "path": args.rules}}
        if args.initial:
            d["initial"] = yaml.safe_load(args.initial)
    else:
        raise SpecError("give a config file or --rules")
    d["quantities"] = quantities
    if getattr(args, "t", None):
        d["t_grid"] = _grid(args.t)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.replicas is not None:
        d["replicas"] = args.replicas
    return ExperimentSpec.from_dict(d)


def cmd_generate(args):
    from .generators import chung_lu, erdos_renyi, named_graph

    p = _parse_params(args.param)
    seed = args.seed or 0
    if args.kind == "erdos_renyi":
        g = erdos_renyi(args.n, float(p["lambda"]), seed)
    elif args.kind == "chung_lu":
        g = chung_lu(args.n, float(p["alpha"]), float(p["gamma"]), seed)
    else:
        g = named_graph(args.kind, args.n, seed=seed, **p)
    _emit(g.to_text(), args.out)


def cmd_model(args):
    from .harness import ExperimentSpec, build_model, load_config
    from .rates import format_rule_set

    d = load_config(args.config)
    d.setdefault("quantities", ["nimfa"])
    system, _ = build_model(ExperimentSpec.from_dict(d))
    _emit(format_rule_set(system), args.out)


def _table_text(header, rows):
    from .harness import csv_text
    return csv_text(header, rows)


def cmd_simulate(args):
    from .forward import estimate_marginals
    from .harness import MARGINAL_HEADER, build_model

    spec = _spec_from_args(args, ["marginals"])
    system, law = build_model(spec)
    est = estimate_marginals(system, law, spec.t_grid, spec.replicas, spec.seed, args.threads)
    _emit(_table_text(MARGINAL_HEADER, est.rows()), args.out)


def cmd_nimfa(args):
    from .harness import build_model
    from .nimfa import integrate_nimfa

    spec = _spec_from_args(args, ["nimfa"])
    system, law = build_model(spec)
    sol = integrate_nimfa(system, law, spec.t_grid, rtol=args.rtol, atol=args.atol)
    names = system.state_space.states
    rows = [(t, i, names[s], sol.z[k, i, s]) for k, t in enumerate(sol.t)
            for i in range(system.n_vertices) for s in range(len(names))]
    _emit(_table_text(["t", "vertex", "state", "z"], rows), args.out)


def cmd_oracle(args):
    from .harness import MARGINAL_HEADER, build_model
    from .oracle import exact_marginals

    spec = _spec_from_args(args, ["oracle"])
    system, law = build_model(spec)
    y = exact_marginals(system, law, spec.t_grid, cap=args.cap)
    names = system.state_space.states
    rows = [(i, names[s], t, y[k, i, s], 0.0, 0, 0) for k, t in enumerate(spec.t_grid)
            for i in range(system.n_vertices) for s in range(len(names))]
    _emit(_table_text(MARGINAL_HEADER, rows), args.out)


def cmd_backward(args):
    from .backward import estimate_blowup_functional, estimate_collision_prob, estimate_ghost_prob
    from .harness import build_model

    spec = _spec_from_args(args, ["collision"])
    system, _ = build_model(spec)
    rows = []
    if args.what == "collision":
        header = ["root", "partner", "t", "value", "std_error", "replicas", "truncation_fraction"]
        for t in spec.t_grid:
            r = estimate_collision_prob(system, args.i, args.j, t, spec.replicas, spec.seed)
            rows.append((args.i, args.j, t, r.value, r.std_error, r.replicas, r.truncation_fraction))
    elif args.what == "ghost":
        header = ["root", "t", "value", "std_error", "replicas", "truncation_fraction"]
        for t in spec.t_grid:
            r = estimate_ghost_prob(system, args.i, t, spec.replicas, spec.seed)
            rows.append((args.i, t, r.value, r.std_error, r.replicas, r.truncation_fraction))
    else:
        header = ["t", "value", "std_error", "replicas", "truncation_fraction"]
        for t in spec.t_grid:
            r = estimate_blowup_functional(system, np.arange(system.n_vertices), t, spec.replicas, spec.seed)
            rows.append((t, r.value, r.std_error, r.replicas, r.truncation_fraction))
    _emit(_table_text(header, rows), args.out)


def cmd_bounds(args):
    from .bounds import bound_table
    from .harness import build_model

    spec = _spec_from_args(args, ["bounds"])
    system, _ = build_model(spec)
    reports = bound_table(system, spec.t_grid, args.subset_size)
    if args.json:
        text = json.dumps([{"name": r.name, "value": r.value, "inputs": r.inputs} for r in reports],
                          indent=2, sort_keys=True) + "\n"
    else:
        lines = [f"{'bound':<22}{'t':>8}  {'value':>24}"]
        for r in reports:
            lines.append(f"{r.name:<22}{r.inputs.get('t', float('nan')):>8.4g}  {r.value:>24.17g}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)


def cmd_experiment(args):
    from .harness import PRESETS, ExperimentSpec, load_config, run_experiment

    if args.preset:
        if args.preset not in PRESETS:
            raise SpecError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        kwargs = {"output": args.out}
        if args.preset == "regular-scaling":
            if args.replicas is not None:
                kwargs["replicas"] = args.replicas
            if args.seed is not None:
                kwargs["seed"] = args.seed
            kwargs["workers"] = args.threads
        result = PRESETS[args.preset](**kwargs)
        header, rows = result[0], result[1]
        sys.stdout.write(_table_text(header, rows))
        if len(result) > 2:
            sys.stdout.write(f"slope,{result[2]!r}\n")
        return
    if not args.config:
        raise SpecError("give a config file or --preset")
    d = load_config(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.replicas is not None:
        d["replicas"] = args.replicas
    bundle = run_experiment(ExperimentSpec.from_dict(d), args.threads, args.out)
    sys.stdout.write(bundle.summary_csv())


def cmd_sweep(args):
    from .harness import load_config, sweep

    d = load_config(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.replicas is not None:
        d["replicas"] = args.replicas
    values = [yaml.safe_load(v) for v in args.values.split(",")]
    header, rows = sweep(d, args.parameter, values, args.threads, args.out)
    sys.stdout.write(_table_text(header, rows))


def build_parser():
    p = argparse.ArgumentParser(prog="hyperips", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, rules=True):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--replicas", type=int, default=None)
        sp.add_argument("--threads", type=int, default=default_workers())
        sp.add_argument("--out", default=None, help="output file or directory (default: stdout)")
        if config:
            sp.add_argument("config", nargs="?", help="experiment config (YAML or JSON)")
        if rules:
            sp.add_argument("--rules", help="rule-set file, instead of a config")
            sp.add_argument("--initial", help="initial law as an inline YAML mapping, e.g. '{kind: bernoulli, p: 0.5}'")
            sp.add_argument("--t", help="comma-separated time grid")

    g = sub.add_parser("generate", help="generate a graph and print its edge list")
    g.add_argument("--kind", required=True,
                   choices=["erdos_renyi", "chung_lu", "complete", "path", "directed_star_out", "random_regular"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--param", action="append", help="generator parameter key=value (repeatable)")
    common(g, config=False, rules=False)
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("model", help="build a model from a config and print its rule set")
    common(m, rules=False)
    m.set_defaults(func=cmd_model)

    s = sub.add_parser("simulate", help="Monte Carlo marginals")
    common(s)
    s.set_defaults(func=cmd_simulate)

    n = sub.add_parser("nimfa", help="integrate the mean-field equations")
    common(n)
    n.add_argument("--rtol", type=float, default=1e-8)
    n.add_argument("--atol", type=float, default=1e-10)
    n.set_defaults(func=cmd_nimfa)

    o = sub.add_parser("oracle", help="exact marginals from the master equation")
    common(o)
    o.add_argument("--cap", type=int, default=2 ** 20)
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("backward", help="information-set and branching estimators")
    common(b)
    b.add_argument("--what", choices=["collision", "ghost", "blowup"], default="collision")
    b.add_argument("--i", type=int, default=0)
    b.add_argument("--j", type=int, default=1)
    b.set_defaults(func=cmd_backward)

    bd = sub.add_parser("bounds", help="evaluate the closed-form bounds")
    common(bd)
    bd.add_argument("--json", action="store_true")
    bd.add_argument("--subset-size", type=int, default=None)
    bd.set_defaults(func=cmd_bounds)

    e = sub.add_parser("experiment", help="run a config or a preset")
    common(e, rules=False)
    e.add_argument("--preset", default=None)
    e.set_defaults(func=cmd_experiment)

    sw = sub.add_parser("sweep", help="run a config for several values of one parameter")
    common(sw, rules=False)
    sw.add_argument("--parameter", required=True, help="dotted config path, e.g. graph.n")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SpecError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
