"""Builders for the concrete interacting particle systems.

Every builder returns a validated :class:`~hyperips.rates.RateSystem`; the
counterexample builder also returns its initial law.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp

from .errors import MalformedRule, NegativeRate, TooLarge
from .generators import WeightMap
from .rates import RateSystem, StateSpace, build_rate_system_from_arrays, as_matrix

SI_STATES = StateSpace(("S", "I"))


@dataclass(frozen=True, eq=False)
class InitialLaw:
    """Independent per-vertex categorical initial distributions.

    ``probs[i, s]`` is the probability that vertex ``i`` starts in state ``s``.
    """

    state_space: StateSpace
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[1] != self.state_space.size:
            raise MalformedRule(f"initial law must have shape (N, {self.state_space.size})")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise MalformedRule("initial law rows must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_vertices(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def iid(cls, state_space, n, dist):
        """Same law at every vertex; ``dist`` maps state names to probabilities."""
        row = np.zeros(state_space.size)
        for s, p in dist.items():
            row[state_space.index(s)] = p
        return cls(state_space, np.tile(row, (n, 1)))

    @classmethod
    def bernoulli(cls, state_space, n, p, on="I", off="S"):
        """Each vertex independently ``on`` with probability ``p`` (scalar or per vertex), else ``off``."""
        probs = np.zeros((n, state_space.size))
        probs[:, state_space.index(on)] = p
        probs[:, state_space.index(off)] += 1.0 - np.asarray(p, dtype=float)
        return cls(state_space, probs)

    @classmethod
    def point(cls, state_space, states):
        """Deterministic configuration given as a sequence of state names."""
        probs = np.zeros((len(states), state_space.size))
        probs[np.arange(len(states)), [state_space.index(s) for s in states]] = 1.0
        return cls(state_space, probs)

    def sample(self, rng, size):
        """Draw ``size`` independent configurations as an int8 array ``(size, N)``."""
        cum = np.cumsum(self.probs, axis=1)
        cum[:, -1] = 1.0
        u = rng.random((size, self.n_vertices))
        return (u[:, :, None] >= cum[None, :, :-1]).sum(axis=2).astype(np.int8)


def _check_rates(values, what):
    values = np.asarray(values, dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise NegativeRate(f"{what} must be finite and nonnegative")
    return values


def _recovery_columns(recovery, n, src, dst):
    rec = _check_rates(np.broadcast_to(np.asarray(recovery, dtype=float), (n,)), "recovery rates")
    v = np.nonzero(rec > 0)[0]
    k = v.size
    return dict(
        order=np.zeros(k, dtype=np.int64),
        base=np.full((k, 1), -1, dtype=np.int64),
        base_states=np.full((k, 1), -1, dtype=np.int64),
        target=v,
        from_state=np.full(k, src),
        to_state=np.full(k, dst),
        rate=rec[v],
    )


def _pair_columns(R, base_state, src, dst, scale=1.0):
    R = sp.coo_matrix(as_matrix(R))
    keep = R.data != 0
    j, i, w = R.row[keep].astype(np.int64), R.col[keep].astype(np.int64), R.data[keep] * scale
    if np.any(j == i):
        raise MalformedRule("pair rate matrix must have a zero diagonal")
    _check_rates(w, "pair rates")
    k = w.size
    return dict(
        order=np.ones(k, dtype=np.int64),
        base=j[:, None],
        base_states=np.full((k, 1), base_state),
        target=i,
        from_state=np.full(k, src),
        to_state=np.full(k, dst),
        rate=w,
    )


def _stack(parts, width):
    out = {}
    for key in ("order", "target", "from_state", "to_state", "rate"):
        out[key] = np.concatenate([p[key] for p in parts]) if parts else np.zeros(0)
    for key in ("base", "base_states"):
        blocks = []
        for p in parts:
            a = p[key]
            if a.shape[1] < width:
                a = np.hstack([a, np.full((a.shape[0], width - a.shape[1]), -1, dtype=np.int64)])
            blocks.append(a)
        out[key] = np.vstack(blocks) if blocks else np.zeros((0, width), dtype=np.int64)
    return out


def _build(states, n, parts, labels=None):
    width = max([p["base"].shape[1] for p in parts], default=1)
    cols = _stack(parts, width)
    return build_rate_system_from_arrays(
        states, n, cols["order"], cols["base"], cols["base_states"], cols["target"],
        cols["from_state"], cols["to_state"], cols["rate"], labels=labels,
    )


def build_sis(R, recovery_rates=0.0) -> RateSystem:
    """SIS (or SI, with zero recovery) on the pair-rate matrix ``R[j, i]``.

    Infection rule ``(I, S) -> (I, I)`` from ``j`` to ``i`` at rate ``R[j, i]``;
    self rule ``I -> S`` at vertex ``i`` with rate ``recovery_rates[i]``.
    """
    A = as_matrix(R)
    n = A.shape[0]
    S, I = 0, 1
    parts = [_pair_columns(A, I, S, I), _recovery_columns(recovery_rates, n, I, S)]
    return _build(SI_STATES, n, parts)


def _weight_items(hyper_weights, order):
    """Accept a WeightMap, a matrix (order 1) or ``(bases, targets, w)`` triples."""
    if isinstance(hyper_weights, WeightMap):
        return hyper_weights.rates(order)
    item = hyper_weights[order]
    if order == 1 and not isinstance(item, tuple):
        R = sp.coo_matrix(as_matrix(item))
        keep = R.data != 0
        return R.row[keep][:, None].astype(np.int64), R.col[keep].astype(np.int64), R.data[keep]
    bases, targets, w = item
    return (np.asarray(bases, dtype=np.int64).reshape(-1, order),
            np.asarray(targets, dtype=np.int64).reshape(-1),
            np.asarray(w, dtype=float).reshape(-1))


def _orders(hyper_weights):
    if isinstance(hyper_weights, WeightMap):
        return sorted(hyper_weights.weights)
    return sorted(int(m) for m in hyper_weights)


def build_simplicial_sis(hyper_weights, recovery=0.0, n_vertices=None) -> RateSystem:
    """Simplicial SIS: a susceptible target is infected by a fully infected base.

    Parameters
    ----------
    hyper_weights : WeightMap or dict
        Per order ``m``, either a :class:`~hyperips.generators.WeightMap` or
        ``{m: (bases, targets, rates)}``; order 1 may also be a matrix.
    recovery : float or array
        Per-vertex ``I -> S`` rates.
    n_vertices : int, optional
        Needed when it cannot be inferred from a WeightMap or matrix.
    """
    if n_vertices is None:
        if isinstance(hyper_weights, WeightMap):
            n_vertices = hyper_weights.n
        elif 1 in hyper_weights and not isinstance(hyper_weights[1], tuple):
            n_vertices = as_matrix(hyper_weights[1]).shape[0]
        else:
            raise MalformedRule("n_vertices is required for triple-form weights")
    S, I = 0, 1
    parts = []
    for m in _orders(hyper_weights):
        if m < 1:
            raise MalformedRule("hyperweight orders start at 1")
        bases, targets, w = _weight_items(hyper_weights, m)
        _check_rates(w, f"order-{m} rates")
        keep = w != 0
        k = int(keep.sum())
        parts.append(dict(
            order=np.full(k, m, dtype=np.int64),
            base=bases[keep],
            base_states=np.full((k, m), I, dtype=np.int64),
            target=targets[keep],
            from_state=np.full(k, S),
            to_state=np.full(k, I),
            rate=w[keep],
        ))
    parts.append(_recovery_columns(recovery, n_vertices, I, S))
    return _build(SI_STATES, n_vertices, parts)


SAIS_STATES = StateSpace(("S", "A", "I"))


def build_sais(w1, w2, betaS, betaA, kappa, gamma) -> RateSystem:
    """Susceptible-alert-infected-susceptible dynamics on two layers.

    ``w1`` is the physical contact layer (infections), ``w2`` the information
    layer (infected neighbours make susceptibles alert).
    """
    _check_rates([betaS, betaA, kappa], "SAIS parameters")
    if not betaA < betaS:
        warnings.warn("SAIS with betaA >= betaS: alert vertices are not less susceptible", UserWarning)
    W1, W2 = as_matrix(w1), as_matrix(w2)
    n = W1.shape[0]
    if W2.shape != W1.shape:
        raise MalformedRule("both layers must have the same size")
    S, A, I = 0, 1, 2
    parts = [
        _pair_columns(W1, I, S, I, betaS),
        _pair_columns(W1, I, A, I, betaA),
        _pair_columns(W2, I, S, A, kappa),
        _recovery_columns(gamma, n, I, S),
    ]
    return _build(SAIS_STATES, n, parts)


FLIP_STATES = StateSpace(("0", "1"))


def edge_index(n):
    """Map vertex pairs to edge-agent ids: returns ``(pairs (E, 2), index (n, n))``."""
    i, j = np.triu_indices(n, k=1)
    idx = np.full((n, n), -1, dtype=np.int64)
    idx[i, j] = np.arange(i.size)
    idx[j, i] = np.arange(i.size)
    return np.column_stack([i, j]), idx


def build_triangle_flip(n_vertices, clique_size=3, q_labels=None, max_vertices=60) -> RateSystem:
    """Edge-flip process where edges are agents and each ``K_n`` is a hyperedge.

    Parameters
    ----------
    n_vertices : int
        Vertices of the underlying graph; the agents are its ``C(N, 2)`` edges.
    clique_size : int
        Size ``n`` of the vertex cliques; the rule order is ``C(n, 2) - 1``.
    q_labels : dict
        ``{(base_states, from, to): q}`` with states ``"0"``/``"1"`` and base
        states listed in increasing edge-agent order. Defaults to the triangle
        removal label ``((1, 1), 1 -> 0)`` with ``q = 1``. Each rule gets rate
        ``q / C(N - 2, n - 2)``.
    max_vertices : int
        Refuse to enumerate cliques for larger ``N``.

    Notes
    -----
    For ``n = 3`` the two base edges of a target play symmetric roles, so
    positional labels are unambiguous up to that symmetry. Larger cliques are
    supported but positional labels there depend on the edge numbering.
    """
    N, n = int(n_vertices), int(clique_size)
    if n < 2 or n > N:
        raise MalformedRule(f"clique size {n} must be in [2, N]")
    if N > max_vertices:
        raise TooLarge(f"flip process with N={N} exceeds max_vertices={max_vertices}")
    if n != 3:
        warnings.warn("flip processes with clique size other than 3 are experimental", UserWarning)
    if q_labels is None:
        q_labels = {(("1", "1"), "1", "0"): 1.0}
    m = comb(n, 2) - 1
    pairs, idx = edge_index(N)
    scale = 1.0 / comb(N - 2, n - 2)
    labels = []
    for (bst, src, dst), q in q_labels.items():
        if len(bst) != m:
            raise MalformedRule(f"label {bst} has {len(bst)} base states, need {m}")
        _check_rates([q], "flip rates")
        labels.append(([FLIP_STATES.index(s) for s in bst], FLIP_STATES.index(src), FLIP_STATES.index(dst), q * scale))

    if n == 3:
        # target edge (a, b) and every third vertex c: base {ac, bc}
        e = pairs.shape[0]
        a = np.repeat(pairs[:, 0], N)
        b = np.repeat(pairs[:, 1], N)
        c = np.tile(np.arange(N), e)
        keep = (c != a) & (c != b)
        a, b, c = a[keep], b[keep], c[keep]
        tgt = idx[a, b]
        base = np.sort(np.column_stack([idx[a, c], idx[b, c]]), axis=1)
    else:
        tgt_list, base_list = [], []
        for clique in combinations(range(N), n):
            edges = sorted(idx[u, v] for u, v in combinations(clique, 2))
            for t in edges:
                tgt_list.append(t)
                base_list.append([x for x in edges if x != t])
        tgt = np.array(tgt_list, dtype=np.int64)
        base = np.array(base_list, dtype=np.int64).reshape(-1, m)
    parts = []
    for bst, src, dst, rate in labels:
        k = tgt.size
        parts.append(dict(
            order=np.full(k, m, dtype=np.int64),
            base=base,
            base_states=np.tile(np.array(bst, dtype=np.int64), (k, 1)),
            target=tgt,
            from_state=np.full(k, src),
            to_state=np.full(k, dst),
            rate=np.full(k, rate),
        ))
    return _build(FLIP_STATES, pairs.shape[0], parts, labels=[tuple(p) for p in pairs.tolist()])


JOINT_STATES = StateSpace(("S", "I", "1", "0"))


def build_joint_si_flip(n_vertices, max_vertices=60) -> RateSystem:
    """SI on vertices spreading along edges that are deleted by triangle removal.

    Agents ``0..N-1`` are vertices (states ``S``/``I``), agents ``N..`` are the
    ``C(N, 2)`` edges (states ``1``/``0``). Vertex ``j`` infects ``i`` at rate
    ``1/(N-1)`` while edge ``ij`` is present; an edge of a triangle is deleted
    at rate ``1/(N-2)``. Vertex states never influence edges.
    """
    N = int(n_vertices)
    if N < 3:
        raise MalformedRule("joint SI/flip dynamics needs N >= 3")
    if N > max_vertices:
        raise TooLarge(f"N={N} exceeds max_vertices={max_vertices}")
    S, I, ONE, ZERO = 0, 1, 2, 3
    pairs, idx = edge_index(N)
    eidx = idx + N

    j, i = np.nonzero(~np.eye(N, dtype=bool))
    k = j.size
    infection = dict(
        order=np.full(k, 2, dtype=np.int64),
        base=np.column_stack([j, eidx[j, i]]),
        base_states=np.tile([I, ONE], (k, 1)),
        target=i,
        from_state=np.full(k, S),
        to_state=np.full(k, I),
        rate=np.full(k, 1.0 / (N - 1)),
    )
    e = pairs.shape[0]
    a = np.repeat(pairs[:, 0], N)
    b = np.repeat(pairs[:, 1], N)
    c = np.tile(np.arange(N), e)
    keep = (c != a) & (c != b)
    a, b, c = a[keep], b[keep], c[keep]
    k = a.size
    deletion = dict(
        order=np.full(k, 2, dtype=np.int64),
        base=np.sort(np.column_stack([eidx[a, c], eidx[b, c]]), axis=1),
        base_states=np.full((k, 2), ONE),
        target=eidx[a, b],
        from_state=np.full(k, ONE),
        to_state=np.full(k, ZERO),
        rate=np.full(k, 1.0 / (N - 2)),
    )
    labels = [("v", v) for v in range(N)] + [("e", int(x), int(y)) for x, y in pairs.tolist()]
    return _build(JOINT_STATES, N + e, [infection, deletion], labels=labels)


COUNTEREXAMPLE_STATES = StateSpace(("*", "S", "I"))


def build_linf_counterexample(rbar_family, n_vertices=None):
    """System whose NIMFA error at the maximal-influence pair is known in closed form.

    Parameters
    ----------
    rbar_family : dict or RateSystem
        Total rates ``{m: (bases, targets, rbar)}`` (order 1 may be a matrix),
        or any RateSystem whose group totals are reused. Order-0 entries are
        ignored.
    n_vertices : int, optional
        Required for the triple form.

    Returns
    -------
    system : RateSystem
        States ``*``, ``S``, ``I``. Each base targeting a vertex gets one rule
        ``S -> I`` requiring the marked vertex in ``*`` and all other base
        members in ``I``.
    law : InitialLaw
        Target surely ``S``; the maximal-influence source ``*`` or ``I`` with
        probability 1/2; everyone else surely ``I``.
    pair : tuple
        ``(j, i)``: source and target of the maximal influence.

    Notes
    -----
    With this law ``P(target in S at t) = (1 + exp(-r t)) / 2`` while the
    mean-field value is ``exp(-r t / 2)``, where ``r`` is the maximal
    influence.
    """
    if isinstance(rbar_family, RateSystem):
        n_vertices = rbar_family.n_vertices
        items = {m: rbar_family.rbar_items(m) for m in range(1, rbar_family.max_order + 1)}
    else:
        items = {}
        for m in sorted(int(k) for k in rbar_family):
            if m == 0:
                continue
            if n_vertices is None and m == 1 and not isinstance(rbar_family[1], tuple):
                n_vertices = as_matrix(rbar_family[1]).shape[0]
            items[m] = _weight_items(rbar_family, m)
        if n_vertices is None:
            raise MalformedRule("n_vertices is required for triple-form rates")
    N = int(n_vertices)

    # locate the maximal influence pair, smallest (j, i) on ties
    rows, cols, vals = [], [], []
    for m, (bases, targets, rbar) in items.items():
        _check_rates(rbar, "total rates")
        for l in range(m):
            rows.append(bases[:, l])
            cols.append(targets)
            vals.append(rbar)
    if not vals or sum(v.size for v in vals) == 0:
        raise MalformedRule("rate family has no interactions")
    rt = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)).tocsr()
    rt.sum_duplicates()
    rt = rt.tocoo()
    best = rt.data.max()
    cand = np.nonzero(rt.data == best)[0]
    order = np.lexsort((rt.col[cand], rt.row[cand]))
    j, i = int(rt.row[cand[order[0]]]), int(rt.col[cand[order[0]]])

    STAR, S, I = 0, 1, 2
    parts = []
    for m, (bases, targets, rbar) in items.items():
        keep = rbar > 0
        bases, targets, rbar = bases[keep], targets[keep], rbar[keep]
        k = rbar.size
        bst = np.full((k, m), I, dtype=np.int64)
        has_j = bases == j
        pos = np.where(has_j.any(axis=1), has_j.argmax(axis=1), 0)
        bst[np.arange(k), pos] = STAR
        parts.append(dict(
            order=np.full(k, m, dtype=np.int64),
            base=bases,
            base_states=bst,
            target=targets,
            from_state=np.full(k, S),
            to_state=np.full(k, I),
            rate=rbar,
        ))
    system = _build(COUNTEREXAMPLE_STATES, N, parts)
    probs = np.zeros((N, 3))
    probs[:, I] = 1.0
    probs[i] = (0.0, 1.0, 0.0)
    probs[j] = (0.5, 0.0, 0.5)
    return system, InitialLaw(COUNTEREXAMPLE_STATES, probs), (j, i)
