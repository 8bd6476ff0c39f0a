"""Exact forward simulation and Monte Carlo estimators.

Every rule carries its own Poisson clock at its full rate and is applied only
if the target and base states match its label at the firing time; otherwise
the event is a phantom. Superposing the clocks gives a single clock of rate
``sum(rate)`` whose marks pick a rule with probability proportional to its
rate, which is what the engine samples. Replicas are advanced together as a
vectorized batch.
"""
from __future__ import annotations

import bisect
import os
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EmptySubset, MalformedRule, MotifTooLarge
from .rates import RateSystem
from .rng import blocks, stream


class EstimatorReport(NamedTuple):
    """Monte Carlo estimate of a scalar with its standard error."""

    value: float
    std_error: float
    replicas: int
    seed_base: int


class _Compiled:
    def __init__(self, system: RateSystem):
        self.cum = np.cumsum(system.rate)
        self.total = float(self.cum[-1]) if self.cum.size else 0.0
        self.n_rules = system.n_rules
        self.target = system.target
        self.src = system.from_state.astype(np.int8)
        self.dst = system.to_state.astype(np.int8)
        self.order = system.order
        self.base = system.base
        self.base_states = system.base_states.astype(np.int8)
        self.width = system.max_order

    def pick(self, u):
        r = np.searchsorted(self.cum, u * self.total, side="right")
        return np.minimum(r, self.n_rules - 1)

    def admissible(self, states, rows, r):
        ok = states[rows, self.target[r]] == self.src[r]
        for l in range(self.width):
            ok &= (self.order[r] <= l) | (states[rows, self.base[r, l]] == self.base_states[r, l])
        return ok

    def advance(self, states, dt, rng):
        """Advance every row of ``states`` in place by ``dt`` time units."""
        if self.total == 0.0 or dt <= 0:
            return
        counts = rng.poisson(self.total * dt, size=states.shape[0])
        order = np.argsort(-counts, kind="stable")
        sorted_counts = counts[order]
        k = 0
        while True:
            n_active = int(np.searchsorted(-sorted_counts, -k, side="left"))
            if n_active == 0:
                break
            rows = order[:n_active]
            r = self.pick(rng.random(n_active))
            ok = self.admissible(states, rows, r)
            states[rows[ok], self.target[r[ok]]] = self.dst[r[ok]]
            k += 1


_COMPILED = weakref.WeakKeyDictionary()


def _compiled(system):
    c = _COMPILED.get(system)
    if c is None:
        c = _COMPILED[system] = _Compiled(system)
    return c


def _law_probs(system, law):
    probs = np.asarray(getattr(law, "probs", law), dtype=float)
    if probs.shape != (system.n_vertices, system.n_states):
        raise MalformedRule(f"initial law must have shape {(system.n_vertices, system.n_states)}")
    return probs


def _sample_initial(probs, rng, size):
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    u = rng.random((size, probs.shape[0]))
    return (u[:, :, None] >= cum[None, :, :-1]).sum(axis=2).astype(np.int8)


def _simulate_block(system, probs, grid, seed, block, size):
    rng = stream(seed, block)
    eng = _compiled(system)
    states = _sample_initial(probs, rng, size)
    out = np.empty((grid.size, size, system.n_vertices), dtype=np.int8)
    t = 0.0
    for k, tk in enumerate(grid):
        eng.advance(states, tk - t, rng)
        t = tk
        out[k] = states
    return out


def default_workers():
    return os.cpu_count() or 1


def run_replicas(system, law, t_grid, replicas, seed, observe, workers=None):
    """Simulate ``replicas`` independent copies and reduce each block.

    Parameters
    ----------
    observe : callable
        ``observe(states)`` with ``states`` of shape ``(T, B, N)`` (int8 state
        indices at each grid time for a block of ``B`` replicas).

    Returns
    -------
    list
        ``observe`` outputs in block order. Block ``b`` always covers the
        same replicas and uses stream ``(seed, b)``, so results do not depend
        on ``workers``.
    """
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise MalformedRule("t_grid must be non-decreasing and nonnegative")
    probs = _law_probs(system, law)
    _compiled(system)
    jobs = list(blocks(int(replicas)))

    def one(job):
        b, size = job
        return observe(_simulate_block(system, probs, grid, seed, b, size))

    workers = workers or default_workers()
    if workers <= 1 or len(jobs) <= 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Event log of one forward run.

    ``times`` are strictly increasing; ``applied[k]`` tells whether rule
    ``rule_ids[k]`` changed the configuration. Phantom events are only present
    when the run kept them.
    """

    system: RateSystem
    initial: np.ndarray
    times: np.ndarray
    rule_ids: np.ndarray
    applied: np.ndarray
    horizon: float

    def state_at(self, t) -> np.ndarray:
        """Configuration at time ``t`` (right-continuous)."""
        if t < 0 or t > self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        k = bisect.bisect_right(self.times.tolist(), t) if self.times.size else 0
        sigma = self.initial.copy()
        for r in self.rule_ids[:k][self.applied[:k]]:
            sigma[self.system.target[r]] = self.system.to_state[r]
        return sigma

    def events(self):
        return list(zip(self.times.tolist(), self.rule_ids.tolist(), self.applied.tolist()))


def simulate_forward(system: RateSystem, initial_law, t_end, seed, keep_phantoms=False) -> Trajectory:
    """One exact trajectory on ``[0, t_end]``."""
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    rng = stream(seed, 0x7F)
    probs = _law_probs(system, initial_law)
    sigma0 = _sample_initial(probs, rng, 1)[0]
    eng = _compiled(system)
    n = int(rng.poisson(eng.total * t_end)) if eng.total > 0 else 0
    times = np.sort(rng.random(n)) * t_end
    rules = eng.pick(rng.random(n)) if n else np.zeros(0, dtype=np.int64)
    sigma = sigma0.astype(np.int64).tolist()
    tgt, src, dst = system.target.tolist(), system.from_state.tolist(), system.to_state.tolist()
    order, base, bst = system.order.tolist(), system.base.tolist(), system.base_states.tolist()
    applied = np.zeros(n, dtype=bool)
    for k, r in enumerate(rules.tolist()):
        if sigma[tgt[r]] != src[r]:
            continue
        b, s = base[r], bst[r]
        if all(sigma[b[l]] == s[l] for l in range(order[r])):
            sigma[tgt[r]] = dst[r]
            applied[k] = True
    if not keep_phantoms:
        times, rules, applied = times[applied], rules[applied], applied[applied]
    return Trajectory(system, sigma0.astype(np.int64), times, rules, applied, float(t_end))


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True, eq=False)
class MarginalEstimates:
    """Estimated marginals ``value[t, i, s]`` with binomial standard errors."""

    t: np.ndarray
    value: np.ndarray
    std_error: np.ndarray
    replicas: int
    seed_base: int
    state_space: object

    def report(self, k, i, s) -> EstimatorReport:
        if isinstance(s, str):
            s = self.state_space.index(s)
        return EstimatorReport(float(self.value[k, i, s]), float(self.std_error[k, i, s]), self.replicas, self.seed_base)

    def rows(self):
        """``(i, state, t, value, std_error, replicas, seed_base)`` in (t, i, s) order."""
        names = self.state_space.states
        for k, t in enumerate(self.t):
            for i in range(self.value.shape[1]):
                for s in range(self.value.shape[2]):
                    yield (i, names[s], float(t), float(self.value[k, i, s]), float(self.std_error[k, i, s]),
                           self.replicas, self.seed_base)


def _bernoulli_se(p, n):
    return np.sqrt(np.maximum(p * (1.0 - p), 0.0) / (n - 1))


def estimate_marginals(system, initial_law, t_grid, replicas, seed, workers=None) -> MarginalEstimates:
    """Monte Carlo marginals ``P(sigma_i(t) = s)`` on a time grid."""
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    S = system.n_states

    def observe(states):
        return np.stack([(states == s).sum(axis=1) for s in range(S)], axis=-1)

    parts = run_replicas(system, initial_law, t_grid, replicas, seed, observe, workers)
    counts = np.zeros_like(parts[0], dtype=np.int64)
    for p in parts:
        counts += p
    value = counts / replicas
    return MarginalEstimates(np.asarray(t_grid, dtype=float), value, _bernoulli_se(value, replicas),
                             int(replicas), int(seed), system.state_space)


def sample_subpop_fraction(system, initial_law, subset, s, t_grid, replicas, seed, workers=None):
    """Per-replica fraction of ``subset`` in state ``s``; shape ``(T, replicas)``."""
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if subset.size == 0:
        raise EmptySubset("subset must be nonempty")
    if isinstance(s, str):
        s = system.state_space.index(s)

    def observe(states):
        return (states[:, :, subset] == s).mean(axis=2)

    return np.concatenate(run_replicas(system, initial_law, t_grid, replicas, seed, observe, workers), axis=1)


def variance_with_jackknife(x):
    """Sample variance of ``x`` (ddof=1) and its delete-one jackknife standard error."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 samples")
    dev = x - x.mean()
    ss = float(dev @ dev)
    var = ss / (n - 1)
    loo = (ss - n / (n - 1) * dev * dev) / (n - 2)
    se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return var, float(se)


def estimate_subpop_variance(system, initial_law, subset_M, s, t, replicas, seed, workers=None) -> EstimatorReport:
    """Variance across replicas of the fraction of ``subset_M`` in state ``s`` at time ``t``."""
    x = sample_subpop_fraction(system, initial_law, subset_M, s, [float(t)], replicas, seed, workers)[0]
    var, se = variance_with_jackknife(x)
    return EstimatorReport(var, se, int(replicas), int(seed))


# ---------------------------------------------------------------------------
# homomorphism densities

MOTIF_CAP = 8


class HomDensity(NamedTuple):
    value: float
    std_error: float
    exact: bool


def _motif(motif):
    edges = [tuple(int(v) for v in e) for e in motif]
    k = max((max(e) for e in edges), default=-1) + 1
    return edges, k


def homomorphism_density(graph, motif, k=None, samples=200_000, seed=0, k_cap=MOTIF_CAP) -> HomDensity:
    """Density of homomorphisms of ``motif`` into ``graph``.

    Parameters
    ----------
    graph : array_like, shape (N, N)
        Symmetric adjacency (entries may be weights in [0, 1]).
    motif : sequence of pairs
        Edges of the motif on vertices ``0..k-1``.
    k : int, optional
        Number of motif vertices if some are isolated.
    samples, seed : int
        Map sampling for motifs with more than three vertices.
    """
    G = np.asarray(graph, dtype=float)
    edges, kk = _motif(motif)
    k = max(kk, k or 0)
    if k > k_cap:
        raise MotifTooLarge(f"motif has {k} vertices, cap is {k_cap}")
    if not edges:
        return HomDensity(1.0, 0.0, True)
    N = G.shape[0]
    if k <= 3:
        letters = "abc"
        spec = ",".join(letters[a] + letters[b] for a, b in edges) + "->"
        total = np.einsum(spec, *([G] * len(edges)), optimize=True)
        # isolated motif vertices contribute a factor N each
        used = {v for e in edges for v in e}
        total = float(total) * N ** (k - len(used))
        return HomDensity(total / N ** k, 0.0, True)
    rng = stream(seed, 0x40)
    maps = rng.integers(0, N, size=(samples, k))
    w = np.ones(samples)
    for a, b in edges:
        w *= G[maps[:, a], maps[:, b]]
    return HomDensity(float(w.mean()), float(w.std(ddof=1) / np.sqrt(samples)), False)


def edge_graph(system: RateSystem, values, present_state="1"):
    """Assemble the vertex-level adjacency encoded by edge agents.

    ``values`` is either a configuration (state indices per agent) or a
    per-agent array of probabilities of ``present_state``
    (``values.ndim == 2`` is read as NIMFA ``z``).
    """
    labels = system.labels
    if labels is None:
        raise MalformedRule("system carries no edge labels")
    pairs = []
    agents = []
    for a, lab in enumerate(labels):
        if len(lab) == 2 and not isinstance(lab[0], str):
            pairs.append(lab)
            agents.append(a)
        elif len(lab) == 3 and lab[0] == "e":
            pairs.append(lab[1:])
            agents.append(a)
    pairs = np.array(pairs, dtype=np.int64)
    agents = np.array(agents, dtype=np.int64)
    n = int(pairs.max()) + 1
    values = np.asarray(values)
    s = system.state_space.index(present_state)
    if values.ndim == 2:
        w = values[agents, s].astype(float)
    else:
        w = (values[agents] == s).astype(float)
    G = np.zeros((n, n))
    G[pairs[:, 0], pairs[:, 1]] = w
    G[pairs[:, 1], pairs[:, 0]] = w
    return G


TRIANGLE = ((0, 1), (1, 2), (2, 0))


def sample_triangle_density(system, initial_law, t_grid, replicas, seed, workers=None):
    """Per-replica triangle homomorphism density of a flip process; shape ``(T, replicas)``."""
    labels = system.labels
    pairs = np.array([lab for lab in labels], dtype=np.int64)
    n = int(pairs.max()) + 1
    one = system.state_space.index("1")

    def observe(states):
        T, B, _ = states.shape
        out = np.empty((T, B))
        G = np.zeros((n, n))
        for t in range(T):
            for b in range(B):
                w = (states[t, b] == one).astype(float)
                G[pairs[:, 0], pairs[:, 1]] = w
                G[pairs[:, 1], pairs[:, 0]] = w
                out[t, b] = float(np.sum((G @ G) * G)) / n ** 3
        return out

    return np.concatenate(run_replicas(system, initial_law, t_grid, replicas, seed, observe, workers), axis=1)
