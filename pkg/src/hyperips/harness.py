"""Config-driven experiments: graph -> model -> estimators -> CSV/JSON.

An experiment config is a YAML (or JSON) mapping; the schema is documented in
``docs/config.md``. All numbers in CSV outputs are written with 17 significant
digits, so reruns of the same config produce identical bytes. Wall-clock
times live only in ``manifest.json``.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import scipy
import yaml

from . import __version__
from .backward import estimate_blowup_functional, estimate_collision_prob, estimate_ghost_prob
from .bounds import bound_table, ghost_upper_bk, linf_lower_general, concentration_upper
from .errors import CapExceeded, SpecInvalid, StateSpaceTooLarge
from .forward import (
    edge_graph,
    estimate_marginals,
    run_replicas,
    homomorphism_density,
    sample_subpop_fraction,
    sample_triangle_density,
    variance_with_jackknife,
    TRIANGLE,
)
from .generators import Adjacency, chung_lu, erdos_renyi, named_graph, normalize_rates, triangle_hyperedges
from .models import (
    InitialLaw,
    build_joint_si_flip,
    build_linf_counterexample,
    build_sais,
    build_simplicial_sis,
    build_sis,
    build_triangle_flip,
)
from .nimfa import integrate_nimfa
from .oracle import DEFAULT_CAP, exact_marginals, n_configurations
from .rates import load_rule_set, pair_rate_matrix, spectral_norm
from .rng import split_seed

QUANTITIES = (
    "marginals",
    "subpop_variance",
    "collision",
    "blowup_functional",
    "ghost",
    "nimfa",
    "oracle",
    "bounds",
    "homdensity",
)


def fmt(x) -> str:
    """Format a CSV cell; floats get 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# config handling


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise SpecInvalid(f"cannot parse {path}: {exc}") from None
    except OSError as exc:
        raise SpecInvalid(f"cannot read {path}: {exc}") from None
    if not isinstance(data, dict):
        raise SpecInvalid("config must be a mapping")
    return data


@dataclass
class ExperimentSpec:
    """Validated experiment description (see ``docs/config.md``)."""

    model: dict
    quantities: list
    t_grid: list
    replicas: int = 1000
    seed: int = 0
    graph: dict | None = None
    graph2: dict | None = None
    initial: dict | None = None
    output: str | None = None
    name: str = "experiment"
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d) -> "ExperimentSpec":
        d = copy.deepcopy(d)
        known = {"model", "quantities", "t_grid", "replicas", "seed", "graph", "graph2", "initial",
                 "output", "name", "options"}
        extra = set(d) - known
        if extra:
            raise SpecInvalid(f"unknown config keys: {sorted(extra)}")
        if "model" not in d or not isinstance(d["model"], dict) or "builder" not in d["model"]:
            raise SpecInvalid("config needs a model block with a builder")
        q = d.get("quantities")
        if not q:
            raise SpecInvalid("quantities list is empty")
        bad = [x for x in q if x not in QUANTITIES]
        if bad:
            raise SpecInvalid(f"unknown quantities {bad}; choose from {QUANTITIES}")
        grid = d.get("t_grid", [1.0])
        try:
            grid = [float(x) for x in grid]
        except (TypeError, ValueError):
            raise SpecInvalid("t_grid must be a list of numbers") from None
        if not grid or any(x < 0 for x in grid) or any(b < a for a, b in zip(grid, grid[1:])):
            raise SpecInvalid("t_grid must be non-empty, nonnegative and non-decreasing")
        replicas = int(d.get("replicas", 1000))
        if replicas < 3:
            raise SpecInvalid("replicas must be at least 3")
        return cls(
            model=d["model"], quantities=list(q), t_grid=grid, replicas=replicas, seed=int(d.get("seed", 0)),
            graph=d.get("graph"), graph2=d.get("graph2"), initial=d.get("initial"), output=d.get("output"),
            name=str(d.get("name", "experiment")), options=d.get("options") or {},
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name, "model": self.model, "quantities": self.quantities, "t_grid": self.t_grid,
            "replicas": self.replicas, "seed": self.seed, "graph": self.graph, "graph2": self.graph2,
            "initial": self.initial, "output": self.output, "options": self.options,
        }


def build_graph(block) -> Adjacency:
    if block is None:
        raise SpecInvalid("this model needs a graph block")
    block = dict(block)
    gen = block.pop("generator", None)
    seed = int(block.pop("seed", 0))
    triangles = bool(block.pop("triangles", False))
    block.pop("scaling", None)
    try:
        if gen == "erdos_renyi":
            g = erdos_renyi(int(block["n"]), float(block["lambda"]), seed)
        elif gen == "chung_lu":
            g = chung_lu(int(block["n"]), float(block["alpha"]), float(block["gamma"]), seed)
        elif gen == "random_regular":
            g = named_graph("random_regular", int(block["n"]), d=int(block["d"]), seed=seed)
        elif gen in ("complete", "path", "directed_star_out"):
            g = named_graph(gen, int(block["n"]))
        elif gen == "edge_list":
            with open(block["path"]) as fh:
                g = Adjacency.from_text(fh.read())
        else:
            raise SpecInvalid(f"unknown graph generator {gen!r}")
    except KeyError as exc:
        raise SpecInvalid(f"graph block is missing parameter {exc}") from None
    return triangle_hyperedges(g) if triangles else g


def _weights(block, adjacency, qbar=None):
    scaling = (block or {}).get("scaling", "mean_degree")
    return normalize_rates(adjacency, qbar, scaling=scaling)


def build_model(spec: ExperimentSpec):
    """Return ``(system, initial_law)`` for the experiment's model, graph and initial blocks."""
    m = dict(spec.model)
    builder = m.pop("builder")
    law = None
    if builder in ("sis", "simplicial_sis", "sais", "linf_counterexample"):
        adj = build_graph(spec.graph)
        qbar = {int(k): float(v) for k, v in (m.get("qbar") or {}).items()} or None
        wm = _weights(spec.graph, adj, qbar)
    if builder == "sis":
        system = build_sis(wm.matrix(1) * float(m.get("beta", 1.0)), m.get("recovery", 0.0))
    elif builder == "simplicial_sis":
        system = build_simplicial_sis(wm, m.get("recovery", 0.0))
    elif builder == "sais":
        adj2 = build_graph(spec.graph2) if spec.graph2 else adj
        w2 = _weights(spec.graph2 or spec.graph, adj2).matrix(1)
        system = build_sais(wm.matrix(1), w2, float(m["betaS"]), float(m["betaA"]),
                            float(m["kappa"]), m.get("gamma", 0.0))
    elif builder == "linf_counterexample":
        system, law, _ = build_linf_counterexample({1: wm.matrix(1)})
    elif builder == "triangle_flip":
        system = build_triangle_flip(int(m["n"]), int(m.get("clique_size", 3)),
                                     max_vertices=int(m.get("max_vertices", 60)))
    elif builder == "joint_si_flip":
        system = build_joint_si_flip(int(m["n"]), max_vertices=int(m.get("max_vertices", 60)))
    elif builder == "rule_file":
        system = load_rule_set(m["path"])
    else:
        raise SpecInvalid(f"unknown model builder {builder!r}")
    if law is None:
        law = build_initial(spec.initial, system, builder)
    return system, law


def build_initial(block, system, builder=None) -> InitialLaw:
    ss, N = system.state_space, system.n_vertices
    if block is None:
        if builder == "triangle_flip":
            block = {"kind": "point", "state": "1"}
        else:
            raise SpecInvalid("config needs an initial block")
    kind = block.get("kind")
    if kind == "bernoulli":
        return InitialLaw.bernoulli(ss, N, block.get("p", 0.5), block.get("on", "I"), block.get("off", "S"))
    if kind == "iid":
        return InitialLaw.iid(ss, N, block["dist"])
    if kind == "point":
        if "states" in block:
            return InitialLaw.point(ss, [str(s) for s in block["states"]])
        return InitialLaw.point(ss, [str(block["state"])] * N)
    if kind == "probs":
        return InitialLaw(ss, np.asarray(block["probs"], dtype=float))
    if kind == "joint":
        # vertex agents infected with probability p, all edge agents present
        probs = np.zeros((N, ss.size))
        labels = system.labels or []
        p = float(block.get("p", 0.5))
        for a, lab in enumerate(labels):
            if lab[0] == "v":
                probs[a, ss.index("I")] = p
                probs[a, ss.index("S")] = 1 - p
            else:
                probs[a, ss.index("1")] = 1.0
        return InitialLaw(ss, probs)
    raise SpecInvalid(f"unknown initial law kind {kind!r}")


def _subset(spec, system):
    sub = spec.options.get("subset", "all")
    if sub == "all":
        return np.arange(system.n_vertices)
    if isinstance(sub, dict) and "first" in sub:
        return np.arange(int(sub["first"]))
    return np.asarray(sub, dtype=np.int64)


def _state(spec, system):
    s = spec.options.get("state")
    if s is None:
        names = system.state_space.states
        s = "I" if "I" in names else names[-1]
    return str(s)


def validate(spec: ExperimentSpec, system) -> None:
    """Check that every requested quantity applies to the built system."""
    M1 = system.max_order <= 1
    sym = M1 and pair_rate_matrix(system).symmetric
    for q in spec.quantities:
        if q == "blowup_functional" and not sym:
            raise SpecInvalid("blowup_functional needs an order-1 system with symmetric rates")
        if q == "homdensity" and not system.labels:
            raise SpecInvalid("homdensity needs an edge-agent (flip) system")
        if q == "oracle":
            cap = int(spec.options.get("oracle_cap", DEFAULT_CAP))
            if n_configurations(system) > cap:
                raise CapExceeded(f"quantity 'oracle': |S|^N = {n_configurations(system)} exceeds cap {cap}")


# ---------------------------------------------------------------------------
# running


@dataclass
class ResultBundle:
    """In-memory copy of every table written by :func:`run_experiment`."""

    tables: dict
    summary: list
    manifest: dict
    output: str | None

    def summary_csv(self) -> str:
        return csv_text(SUMMARY_HEADER, self.summary)


SUMMARY_HEADER = ["quantity", "name", "t", "value", "std_error"]
MARGINAL_HEADER = ["i", "state", "t", "value", "std_error", "replicas", "seed_base"]


def run_experiment(spec, workers=None, output=None) -> ResultBundle:
    """Compute every requested quantity and write the result bundle.

    Parameters
    ----------
    spec : ExperimentSpec or dict
    workers : int, optional
        Thread count for replica blocks; results do not depend on it.
    output : str, optional
        Directory for CSV/JSON files, overriding ``spec.output``. Nothing is
        written if both are None.
    """
    if not isinstance(spec, ExperimentSpec):
        spec = ExperimentSpec.from_dict(spec)
    start = time.time()
    system, law = build_model(spec)
    validate(spec, system)
    grid = np.asarray(spec.t_grid)
    tables, summary = {}, []
    truncation = {}
    names = system.state_space.states
    seed, R = spec.seed, spec.replicas
    # sub-seeds keep quantities independent of which others were requested
    sub = {q: split_seed(seed, k) for k, q in enumerate(QUANTITIES)}

    nimfa_sol = None
    if "nimfa" in spec.quantities or "homdensity" in spec.quantities:
        nimfa_sol = integrate_nimfa(system, law, grid)
    if "nimfa" in spec.quantities:
        rows = [(float(t), i, names[s], float(nimfa_sol.z[k, i, s]))
                for k, t in enumerate(grid) for i in range(system.n_vertices) for s in range(len(names))]
        tables["nimfa"] = (["t", "vertex", "state", "z"], rows)
        summary.append(("nimfa", "max_row_drift", float(grid[-1]), nimfa_sol.max_drift(), 0.0))

    mc = None
    if "marginals" in spec.quantities:
        mc = estimate_marginals(system, law, grid, R, sub["marginals"], workers)
        tables["marginals"] = (MARGINAL_HEADER, list(mc.rows()))

    exact = None
    if "oracle" in spec.quantities:
        try:
            exact = exact_marginals(system, law, grid, cap=int(spec.options.get("oracle_cap", DEFAULT_CAP)))
        except StateSpaceTooLarge as exc:
            raise CapExceeded(f"quantity 'oracle': {exc}") from None
        rows = [(i, names[s], float(t), float(exact[k, i, s]), 0.0, 0, 0)
                for k, t in enumerate(grid) for i in range(system.n_vertices) for s in range(len(names))]
        tables["oracle"] = (MARGINAL_HEADER, rows)

    if nimfa_sol is not None and (mc is not None or exact is not None):
        rows = []
        for ref_name, ref in (("oracle", exact), ("marginals", None if mc is None else mc.value)):
            if ref is None:
                continue
            for k, t in enumerate(grid):
                diff = ref[k] - nimfa_sol.z[k]
                linf = float(np.abs(diff).max())
                l1 = float(np.abs(diff).sum(axis=1).mean() / 2)
                rows.append((ref_name, float(t), linf, l1))
                summary.append(("nimfa_error", f"linf_vs_{ref_name}", float(t), linf, 0.0))
                summary.append(("nimfa_error", f"l1_vs_{ref_name}", float(t), l1, 0.0))
        tables["nimfa_error"] = (["reference", "t", "linf", "l1"], rows)

    if "subpop_variance" in spec.quantities:
        subset = _subset(spec, system)
        state = _state(spec, system)
        x = sample_subpop_fraction(system, law, subset, state, grid, R, sub["subpop_variance"], workers)
        norm = None
        if system.max_order <= 1:
            norm = spectral_norm(pair_rate_matrix(system).entries).value
        rows = []
        for k, t in enumerate(grid):
            var, se = variance_with_jackknife(x[k])
            bound = concentration_upper(norm, t, subset.size) if norm is not None else float("nan")
            rows.append((float(t), state, subset.size, float(x[k].mean()), var, se, R, sub["subpop_variance"], bound))
            summary.append(("subpop_variance", "variance", float(t), var, se))
        tables["subpop_variance"] = (["t", "state", "subset_size", "mean", "value", "std_error", "replicas",
                                      "seed_base", "concentration_upper"], rows)

    if "collision" in spec.quantities:
        pairs = spec.options.get("pairs", [[0, 1]])
        rows = []
        for (i, j) in pairs:
            for k, t in enumerate(grid):
                rep = estimate_collision_prob(system, int(i), int(j), float(t), R, split_seed(sub["collision"], k))
                rows.append((int(i), int(j), float(t), rep.value, rep.std_error, rep.replicas, rep.truncation_fraction))
                summary.append(("collision", f"{i}-{j}", float(t), rep.value, rep.std_error))
                truncation[f"collision {i}-{j} t={t}"] = rep.truncation_fraction
        tables["collision"] = (["root", "partner", "t", "value", "std_error", "replicas", "truncation_fraction"], rows)

    if "blowup_functional" in spec.quantities:
        subset = _subset(spec, system)
        rows = []
        for k, t in enumerate(grid):
            rep = estimate_blowup_functional(system, subset, float(t), R, split_seed(sub["blowup_functional"], k))
            rows.append((float(t), subset.size, rep.value, rep.std_error, rep.replicas, rep.truncation_fraction))
            summary.append(("blowup_functional", "value", float(t), rep.value, rep.std_error))
            truncation[f"blowup t={t}"] = rep.truncation_fraction
        tables["blowup_functional"] = (["t", "subset_size", "value", "std_error", "replicas", "truncation_fraction"], rows)

    if "ghost" in spec.quantities:
        roots = spec.options.get("roots", [0])
        sym = system.max_order <= 1 and pair_rate_matrix(system).symmetric
        rows = []
        for root in roots:
            for k, t in enumerate(grid):
                rep = estimate_ghost_prob(system, int(root), float(t), R, split_seed(sub["ghost"], k))
                bk = ghost_upper_bk(pair_rate_matrix(system).entries, int(root), float(t)) if sym else float("nan")
                rows.append((int(root), float(t), rep.value, rep.std_error, rep.replicas, rep.truncation_fraction, bk))
                summary.append(("ghost", f"root{root}", float(t), rep.value, rep.std_error))
                truncation[f"ghost root={root} t={t}"] = rep.truncation_fraction
        tables["ghost"] = (["root", "t", "value", "std_error", "replicas", "truncation_fraction", "ghost_upper_bk"], rows)

    if "homdensity" in spec.quantities:
        x = sample_triangle_density(system, law, grid, R, sub["homdensity"], workers)
        rows = []
        for k, t in enumerate(grid):
            mean = float(x[k].mean())
            se = float(x[k].std(ddof=1) / np.sqrt(R))
            var, vse = variance_with_jackknife(x[k])
            zt = homomorphism_density(edge_graph(system, nimfa_sol.z[k]), TRIANGLE).value
            rows.append((float(t), mean, se, var, vse, R, zt))
            summary.append(("homdensity", "triangle_mean", float(t), mean, se))
            summary.append(("homdensity", "triangle_variance", float(t), var, vse))
        tables["homdensity"] = (["t", "value", "std_error", "variance", "variance_std_error", "replicas",
                                 "nimfa_value"], rows)

    bounds_json = None
    if "bounds" in spec.quantities:
        m_size = _subset(spec, system).size
        reports = bound_table(system, [t for t in grid if t > 0] or [1.0], m_size)
        tables["bounds"] = (["name", "t", "value"], [(r.name, r.inputs.get("t", float("nan")), r.value) for r in reports])
        bounds_json = [{"name": r.name, "value": r.value, "inputs": r.inputs} for r in reports]
        summary.append(("bounds", "delta_max", float("nan"), system.delta_max, 0.0))
        summary.append(("bounds", "r_tilde_max", float("nan"), system.r_tilde_max, 0.0))
        if system.max_order <= 1:
            summary.append(("bounds", "norm2_R", float("nan"),
                            spectral_norm(pair_rate_matrix(system).entries).value, 0.0))

    manifest = {
        "name": spec.name,
        "spec": spec.to_dict(),
        "versions": {"hyperips": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "seed": spec.seed,
        "quantity_seeds": {q: sub[q] for q in spec.quantities},
        "replicas": spec.replicas,
        "n_vertices": system.n_vertices,
        "n_rules": system.n_rules,
        "truncation_fractions": truncation,
        "wall_time_seconds": time.time() - start,
    }
    out = output or spec.output
    if out:
        os.makedirs(out, exist_ok=True)
        for name, (header, rows) in tables.items():
            write_csv(os.path.join(out, f"{name}.csv"), header, rows)
        write_csv(os.path.join(out, "summary.csv"), SUMMARY_HEADER, summary)
        if bounds_json is not None:
            with open(os.path.join(out, "bounds.json"), "w") as fh:
                json.dump(bounds_json, fh, indent=2, sort_keys=True)
                fh.write("\n")
        with open(os.path.join(out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    return ResultBundle(tables, summary, manifest, out)


def _set_path(d, path, value):
    keys = path.split(".")
    cur = d
    for k in keys[:-1]:
        if not isinstance(cur, dict) or k not in cur or cur[k] is None:
            raise SpecInvalid(f"parameter path {path!r} does not exist in the template")
        cur = cur[k]
    if not isinstance(cur, dict) or keys[-1] not in cur:
        raise SpecInvalid(f"parameter path {path!r} does not exist in the template")
    cur[keys[-1]] = value


def sweep(spec_template, parameter, values, workers=None, output=None):
    """Run one experiment per value of a dotted config path.

    Run ``k`` uses base seed ``split_seed(seed, k)``. Returns the aggregated
    long-format rows ``(parameter, param_value, run_seed, quantity, name, t,
    value, std_error)`` and writes ``sweep.csv`` if an output directory is
    given.
    """
    base = spec_template.to_dict() if isinstance(spec_template, ExperimentSpec) else copy.deepcopy(spec_template)
    ExperimentSpec.from_dict(base)
    out = output or base.get("output")
    rows = []
    for k, value in enumerate(values):
        d = copy.deepcopy(base)
        _set_path(d, parameter, value)
        d["seed"] = split_seed(int(base.get("seed", 0)), k)
        d["output"] = os.path.join(out, f"run_{k:03d}") if out else None
        bundle = run_experiment(d, workers)
        for q, name, t, v, se in bundle.summary:
            rows.append((parameter, value, d["seed"], q, name, t, v, se))
    header = ["parameter", "param_value", "run_seed", "quantity", "name", "t", "value", "std_error"]
    if out:
        os.makedirs(out, exist_ok=True)
        write_csv(os.path.join(out, "sweep.csv"), header, rows)
    return header, rows


# ---------------------------------------------------------------------------
# presets


def preset_linf_counterexample(output=None, rates=(0.5, 1.0, 2.0)):
    """Measured worst-case NIMFA error next to its closed form, for several maximal influences."""
    from .nimfa import integrate_nimfa as _nimfa
    rows = []
    for r in rates:
        fam = {1: np.array([[0.0, r, 0.25 * r], [0.5 * r, 0.0, 0.0], [0.0, 0.75 * r, 0.0]])}
        system, law, (j, i) = build_linf_counterexample(fam)
        y = exact_marginals(system, law, [1.0])[0]
        z = _nimfa(system, law, [1.0]).z[0]
        measured = float(abs(y[i, 2] - z[i, 2]))
        rows.append((r, j, i, measured, linf_lower_general(r), measured - linf_lower_general(r)))
    header = ["r_tilde_max", "source", "target", "measured_error", "linf_lower_general", "difference"]
    if output:
        os.makedirs(output, exist_ok=True)
        write_csv(os.path.join(output, "linf_counterexample.csv"), header, rows)
    return header, rows


def regular_scaling_config(d=4, n=500, replicas=100_000, seed=2024):
    return {
        "name": "regular-scaling",
        "graph": {"generator": "random_regular", "n": n, "d": d, "seed": 11},
        "model": {"builder": "sis", "recovery": 0.0},
        "initial": {"kind": "bernoulli", "p": 0.5},
        "quantities": ["marginals", "nimfa", "bounds"],
        "t_grid": [1.0],
        "replicas": replicas,
        "seed": seed,
    }


def estimate_l1_error_si(system, law, t, replicas, seed, workers=None):
    """Average NIMFA error of an SI run at time ``t``.

    For SI dynamics the NIMFA infection probability dominates the true one at
    every vertex, so ``mean_i (z_iI - y_iI)`` equals the l1 error and is
    estimated without bias by ``mean(z_I) - mean_r(infected fraction)``.

    Returns
    -------
    signed, std_error, absolute : float
        The unbiased estimate and its standard error, plus the naive
        ``mean_i |z_iI - yhat_iI|`` (biased upward by Monte Carlo noise).
    """
    I = system.state_space.index("I")

    def observe(states):
        inf = states[0] == I
        return inf.sum(axis=0), inf.mean(axis=1)

    parts = run_replicas(system, law, [float(t)], replicas, seed, observe, workers)
    counts = sum(p[0] for p in parts)
    frac = np.concatenate([p[1] for p in parts])
    z = integrate_nimfa(system, law, [float(t)]).z[0, :, I]
    signed = float(z.mean() - frac.mean())
    se = float(frac.std(ddof=1) / np.sqrt(replicas))
    absolute = float(np.abs(z - counts / replicas).mean())
    return signed, se, absolute


def preset_regular_scaling(output=None, degrees=(4, 8, 16, 32), n=500, replicas=100_000, seed=2024, workers=None):
    """l1 NIMFA error of SI on random regular graphs versus degree, with a log-log slope fit."""
    from .bounds import l1_bounds
    rows = []
    for k, d in enumerate(degrees):
        spec = ExperimentSpec.from_dict(regular_scaling_config(d, n, replicas, split_seed(seed, k)))
        system, law = build_model(spec)
        signed, se, absolute = estimate_l1_error_si(system, law, 1.0, replicas, spec.seed, workers)
        b = l1_bounds(pair_rate_matrix(system).entries, 1.0)
        rows.append((d, signed, se, absolute, b.lower_graph, b.upper_delta))
    slope = float("nan")
    if len(rows) > 1:
        slope = float(np.polyfit(np.log([r[0] for r in rows]), np.log([max(r[1], 1e-300) for r in rows]), 1)[0])
    header = ["d", "l1_error", "std_error", "l1_error_absolute", "lower_graph", "upper_delta"]
    if output:
        os.makedirs(output, exist_ok=True)
        write_csv(os.path.join(output, "regular_scaling.csv"), header, rows)
        write_csv(os.path.join(output, "regular_scaling_slope.csv"), ["slope"], [(slope,)])
    return header, rows, slope


PRESETS = {
    "linf-counterexample": preset_linf_counterexample,
    "regular-scaling": preset_regular_scaling,
}
