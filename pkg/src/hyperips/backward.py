"""Backward constructions: information sets and the augmented branching structure.

Both samplers are scalar Python loops over small random structures, fed by
buffered uniforms from the deterministic per-block streams of :mod:`hyperips.rng`.
"""
from __future__ import annotations

import heapq
import weakref
from bisect import bisect_right
from dataclasses import dataclass
from math import log
from typing import NamedTuple

import numpy as np

from .errors import EmptySubset, OrderTooHigh, RequiresSymmetric
from .forward import EstimatorReport
from .rates import RateSystem, pair_rate_matrix
from .rng import UniformBuffer, blocks, stream

DEFAULT_POP_CAP = 100_000
DEFAULT_SIZE_CAP = 100_000


class BackwardReport(NamedTuple):
    """Estimate with the fraction of replicas that hit a size cap."""

    value: float
    std_error: float
    replicas: int
    seed_base: int
    truncation_fraction: float

    def as_estimator(self) -> EstimatorReport:
        return EstimatorReport(self.value, self.std_error, self.replicas, self.seed_base)


class _Tables:
    """Per-vertex lists of incoming groups with cumulative rates."""

    def __init__(self, system: RateSystem):
        N = system.n_vertices
        gorder = system.group_order.tolist()
        gbase = system.group_base.tolist()
        rbar = system.rbar.tolist()
        self.base = [tuple(gbase[g][:gorder[g]]) for g in range(len(rbar))]
        self.order = gorder
        # all groups (branching) and order >= 1 groups (information sets)
        self.groups = [[] for _ in range(N)]
        self.cum = [[] for _ in range(N)]
        self.rate = [0.0] * N
        self.info_groups = [[] for _ in range(N)]
        self.info_cum = [[] for _ in range(N)]
        self.info_rate = [0.0] * N
        for g, i in enumerate(system.group_target.tolist()):
            self.rate[i] += rbar[g]
            self.groups[i].append(g)
            self.cum[i].append(self.rate[i])
            if gorder[g] >= 1:
                self.info_rate[i] += rbar[g]
                self.info_groups[i].append(g)
                self.info_cum[i].append(self.info_rate[i])
        # labels within a group
        rules_of = [[] for _ in rbar]
        for r, g in enumerate(system.group.tolist()):
            rules_of[g].append(r)
        rate = system.rate.tolist()
        self.rules = rules_of
        self.rule_cum = []
        for g, rs in enumerate(rules_of):
            acc, c = 0.0, []
            for r in rs:
                acc += rate[r]
                c.append(acc)
            self.rule_cum.append(c)
        self.rbar = rbar
        self.src = system.from_state.tolist()
        self.dst = system.to_state.tolist()
        bst = system.base_states.tolist()
        order = system.order.tolist()
        self.rule_base_states = [tuple(bst[r][:order[r]]) for r in range(len(order))]


_TABLES = weakref.WeakKeyDictionary()


def _tables(system):
    t = _TABLES.get(system)
    if t is None:
        t = _TABLES[system] = _Tables(system)
    return t


def _pick(cum, total, u):
    k = bisect_right(cum, u * total)
    return k if k < len(cum) else len(cum) - 1


# ---------------------------------------------------------------------------
# information sets


@dataclass(frozen=True, eq=False)
class InfoSetSample:
    """One realization of the information set of ``root`` on ``[0, horizon]``.

    ``times[k]`` is the backward time at which the vertices ``added[k]``
    joined. No-op jumps are simulated but not logged.
    """

    root: int
    horizon: float
    times: tuple
    added: tuple
    truncated: bool

    def members_at(self, tau) -> frozenset:
        k = bisect_right(self.times, tau)
        out = {self.root}
        for group in self.added[:k]:
            out.update(group)
        return frozenset(out)

    @property
    def members(self) -> frozenset:
        return self.members_at(self.horizon)


def _info_set(tab, root, t, u, size_cap):
    members = [root]
    inset = {root}
    cum = [tab.info_rate[root]]
    rate = cum[0]
    time = 0.0
    times, added = [], []
    truncated = False
    while rate > 0.0:
        time += -log(u()) / rate
        if time > t:
            break
        k = members[_pick(cum, rate, u())]
        g = tab.info_groups[k][_pick(tab.info_cum[k], tab.info_rate[k], u())]
        new = [b for b in tab.base[g] if b not in inset]
        if not new:
            continue
        for b in new:
            inset.add(b)
            members.append(b)
            rate += tab.info_rate[b]
            cum.append(rate)
        times.append(time)
        added.append(tuple(new))
        if len(members) > size_cap:
            truncated = True
            break
    return inset, times, added, truncated


def sample_information_set(system: RateSystem, root, t, seed, size_cap=DEFAULT_SIZE_CAP) -> InfoSetSample:
    """Simulate the information set of ``root`` up to backward time ``t``.

    Each member ``k`` adds the base of each group targeting it at that group's
    total rate.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    u = UniformBuffer(stream(seed, 0x1F))
    _, times, added, trunc = _info_set(_tables(system), int(root), float(t), u, size_cap)
    return InfoSetSample(int(root), float(t), tuple(times), tuple(added), trunc)


def _bernoulli_report(hits, n, seed, truncated):
    p = hits / n
    se = np.sqrt(max(p * (1 - p), 0.0) / (n - 1))
    return BackwardReport(float(p), float(se), int(n), int(seed), truncated / n)


def estimate_collision_prob(system: RateSystem, i, j, t, replicas, seed, size_cap=DEFAULT_SIZE_CAP) -> BackwardReport:
    """Frequency with which independent information sets of ``i`` and ``j`` intersect.

    Truncated samples count as collisions. For ``i == j`` the value is 1.
    """
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    if i == j:
        return BackwardReport(1.0, 0.0, int(replicas), int(seed), 0.0)
    tab = _tables(system)
    hits = trunc = 0
    for b, size in blocks(int(replicas)):
        u = UniformBuffer(stream(seed, b))
        for _ in range(size):
            hi, _, _, ti = _info_set(tab, i, t, u, size_cap)
            hj, _, _, tj = _info_set(tab, j, t, u, size_cap)
            if ti or tj:
                trunc += 1
                hits += 1
            elif not hi.isdisjoint(hj):
                hits += 1
    return _bernoulli_report(hits, replicas, seed, trunc)


def _require_symmetric_pairs(system):
    if system.max_order > 1:
        raise OrderTooHigh("requires a system of order at most 1")
    if not pair_rate_matrix(system).symmetric:
        raise RequiresSymmetric("requires a symmetric pair rate matrix")


def estimate_blowup_functional(system: RateSystem, subset_M, t, replicas, seed, size_cap=DEFAULT_SIZE_CAP) -> BackwardReport:
    """Estimate ``(1/|M|) sum_{i in M} E|H_i(2t) & M| / |M|`` with roots drawn uniformly from ``M``.

    For symmetric pair rates this equals the average pairwise collision
    probability ``|M|^-2 sum_{i,j in M} P(H_i(t) & H_j(t) != {})``.
    """
    _require_symmetric_pairs(system)
    M = np.unique(np.asarray(subset_M, dtype=np.int64)).tolist()
    if not M:
        raise EmptySubset("subset must be nonempty")
    Mset = set(M)
    tab = _tables(system)
    vals = np.empty(int(replicas))
    trunc = 0
    n = 0
    for b, size in blocks(int(replicas)):
        u = UniformBuffer(stream(seed, b))
        for _ in range(size):
            root = M[min(int(u() * len(M)), len(M) - 1)]
            h, _, _, tr = _info_set(tab, root, 2.0 * t, u, size_cap)
            trunc += tr
            vals[n] = 1.0 if tr else len(h & Mset) / len(M)
            n += 1
    se = vals.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
    return BackwardReport(float(vals.mean()), float(se), n, int(seed), trunc / n)


# ---------------------------------------------------------------------------
# augmented branching structure


@dataclass(frozen=True, eq=False)
class BranchingSample:
    """One augmented branching structure rooted at ``(root, horizon)``.

    ``births`` lists ``(tau, vertex, copy)`` for every particle in creation
    order (backward time ``tau``, copy index starting at 1). ``coupled_sigma``
    is the original process's state at the root, ``coupled_sigma_tilde`` the
    state obtained by evaluating the whole tree with independent copies; both
    are state indices, or None when the sample was truncated.
    """

    root: int
    horizon: float
    births: tuple
    ghost: bool
    coupled_sigma: int | None
    coupled_sigma_tilde: int | None
    truncated: bool

    @property
    def n_particles(self) -> int:
        return len(self.births)


def _grow(tab, root, t0, u, pop_cap, stop_at_ghost):
    """Grow the particle tree; returns ``(vert, copy, birth, arrows, ghost, truncated)``.

    ``arrows[p]`` lists ``(tau, rule, children)`` in increasing backward time.
    """
    vert, copy, birth, arrows = [], [], [], []
    count = {}
    heap = []
    rate_of = tab.rate
    ghost = False

    def spawn(v, tau):
        nonlocal ghost
        p = len(vert)
        c = count.get(v, 0) + 1
        count[v] = c
        if c > 1:
            ghost = True
        vert.append(v)
        copy.append(c)
        birth.append(tau)
        arrows.append([])
        rate = rate_of[v]
        if rate > 0.0:
            s = tau
            while True:
                s -= log(u()) / rate
                if s > t0:
                    break
                heapq.heappush(heap, (s, p))
        return p

    spawn(root, 0.0)
    truncated = False
    while heap:
        if stop_at_ghost and ghost:
            break
        if len(vert) > pop_cap:
            truncated = True
            break
        s, p = heapq.heappop(heap)
        v = vert[p]
        g = tab.groups[v][_pick(tab.cum[v], rate_of[v], u())]
        if stop_at_ghost:
            rule = -1
        else:
            rule = tab.rules[g][_pick(tab.rule_cum[g], tab.rbar[g], u())]
        children = tuple(spawn(b, s) for b in tab.base[g])
        arrows[p].append((s, rule, children))
    return vert, copy, birth, arrows, ghost, truncated


def _evaluate(tab, law_cum, root_vertex, vert, copy, arrows, u):
    n = len(vert)
    S1 = len(law_cum[0]) - 1
    init = []
    for p in range(n):
        k = bisect_right(law_cum[vert[p]], u())
        init.append(k if k <= S1 else S1)
    src, dst, bst = tab.src, tab.dst, tab.rule_base_states
    # children are created after their parent, so reverse creation order is a valid post-order
    tilde = [0] * n
    for p in range(n - 1, -1, -1):
        st = init[p]
        for _, r, ch in reversed(arrows[p]):
            if st == src[r]:
                need = bst[r]
                if all(tilde[c] == need[l] for l, c in enumerate(ch)):
                    st = dst[r]
        tilde[p] = st
    # original process: replay the first copies' arrows in forward time order
    cur = {}
    events = []
    for p in range(n):
        if copy[p] == 1:
            cur[vert[p]] = init[p]
            for s, r, ch in arrows[p]:
                events.append((-s, p, r, ch))
    events.sort()
    for _, p, r, ch in events:
        v = vert[p]
        if cur[v] == src[r]:
            need = bst[r]
            if all(cur[vert[c]] == need[l] for l, c in enumerate(ch)):
                cur[v] = dst[r]
    return cur[root_vertex], tilde[0]


def _law_cum(system, law):
    probs = np.asarray(getattr(law, "probs", law), dtype=float)
    if probs.shape != (system.n_vertices, system.n_states):
        raise ValueError("initial law has the wrong shape")
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    # bisect_right over the first |S|-1 cut points, plus a sentinel
    return [row[:-1].tolist() + [2.0] for row in cum]


def sample_branching_structure(system: RateSystem, root, t0, seed, initial_law, pop_cap=DEFAULT_POP_CAP) -> BranchingSample:
    """Sample the augmented branching structure and both coupled root states."""
    if t0 < 0:
        raise ValueError("t0 must be nonnegative")
    tab = _tables(system)
    u = UniformBuffer(stream(seed, 0xB7))
    vert, copy, birth, arrows, ghost, truncated = _grow(tab, int(root), float(t0), u, pop_cap, False)
    births = tuple(zip(birth, vert, copy))
    if truncated:
        return BranchingSample(int(root), float(t0), births, True, None, None, True)
    sigma, tilde = _evaluate(tab, _law_cum(system, initial_law), int(root), vert, copy, arrows, u)
    return BranchingSample(int(root), float(t0), births, ghost, sigma, tilde, False)


@dataclass(frozen=True, eq=False)
class BranchingEstimate:
    """Tallies over many branching samples.

    ``counts[g, a, b]`` counts non-truncated samples with ghost flag ``g``,
    original state ``a`` and tree state ``b``.
    """

    counts: np.ndarray
    truncated: int
    replicas: int
    seed_base: int

    def _law(self, axis):
        marg = self.counts.sum(axis=(0, axis)) / self.replicas
        return marg, np.sqrt(np.maximum(marg * (1 - marg), 0.0) / (self.replicas - 1))

    def sigma_tilde_law(self):
        """Estimated law of the tree state and standard errors."""
        return self._law(1)

    def sigma_law(self):
        return self._law(2)

    def ghost_prob(self) -> EstimatorReport:
        p = (self.counts[1].sum() + self.truncated) / self.replicas
        return EstimatorReport(float(p), float(np.sqrt(p * (1 - p) / (self.replicas - 1))), self.replicas, self.seed_base)

    def mismatches_without_ghost(self) -> int:
        c = self.counts[0]
        return int(c.sum() - np.trace(c))


def estimate_branching(system: RateSystem, initial_law, root, t, replicas, seed, pop_cap=DEFAULT_POP_CAP) -> BranchingEstimate:
    """Joint tallies of ghost flag, original and tree root states."""
    tab = _tables(system)
    law_cum = _law_cum(system, initial_law)
    S = system.n_states
    counts = np.zeros((2, S, S), dtype=np.int64)
    truncated = 0
    for b, size in blocks(int(replicas)):
        u = UniformBuffer(stream(seed, b))
        for _ in range(size):
            vert, copy, _, arrows, ghost, trunc = _grow(tab, int(root), float(t), u, pop_cap, False)
            if trunc:
                truncated += 1
                continue
            sigma, tilde = _evaluate(tab, law_cum, int(root), vert, copy, arrows, u)
            counts[int(ghost), sigma, tilde] += 1
    return BranchingEstimate(counts, truncated, int(replicas), int(seed))


def estimate_ghost_prob(system: RateSystem, root, t, replicas, seed, pop_cap=DEFAULT_POP_CAP) -> BackwardReport:
    """Frequency of a repeated vertex in the branching structure (truncation counts as a ghost)."""
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    tab = _tables(system)
    hits = trunc = 0
    for b, size in blocks(int(replicas)):
        u = UniformBuffer(stream(seed, b))
        for _ in range(size):
            _, _, _, _, ghost, tr = _grow(tab, int(root), float(t), u, pop_cap, True)
            trunc += tr
            hits += ghost or tr
    return _bernoulli_report(hits, replicas, seed, trunc)
