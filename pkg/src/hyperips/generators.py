"""Graph and hypergraph generators, plus weight normalization.

Vertex ids are 0-based everywhere. An :class:`Adjacency` stores pair edges as
ordered ``(j, i)`` rows meaning "j influences i"; undirected graphs carry both
orientations. Higher-order hyperedges are ``(sorted base, target)`` pairs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptyGraph, InfeasibleRegular, MalformedRule, ParameterDomain, SpecInvalid
from .rng import stream


def _sorted_unique_edges(edges):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0] == 0:
        return edges
    return np.unique(edges, axis=0)


@dataclass(frozen=True, eq=False)
class Adjacency:
    """Directed (hyper)graph indicator structure.

    Parameters
    ----------
    n : int
        Number of vertices.
    directed : bool
        Whether ``edges`` is allowed to be asymmetric.
    edges : ndarray, shape (E, 2)
        Rows ``(j, i)``, lexicographically sorted and unique.
    hyperedges : dict
        ``{m: (bases (E_m, m), targets (E_m,))}`` for orders ``m >= 2``.
    """

    n: int
    directed: bool
    edges: np.ndarray
    hyperedges: dict = field(default_factory=dict)

    def __post_init__(self):
        e = _sorted_unique_edges(self.edges)
        if e.size:
            if np.any(e[:, 0] == e[:, 1]):
                raise MalformedRule("self-loops are not allowed")
            if e.min() < 0 or e.max() >= self.n:
                raise MalformedRule("edge endpoint out of range")
        if not self.directed and e.size:
            rev = _sorted_unique_edges(e[:, ::-1])
            if rev.shape != e.shape or np.any(rev != e):
                raise MalformedRule("undirected adjacency must store both orientations")
        object.__setattr__(self, "edges", e)
        hyper = {}
        for m, (bases, targets) in sorted(self.hyperedges.items()):
            bases = np.asarray(bases, dtype=np.int64).reshape(-1, m)
            targets = np.asarray(targets, dtype=np.int64).reshape(-1)
            if bases.shape[0] != targets.shape[0]:
                raise MalformedRule("hyperedge bases and targets differ in length")
            if m < 2:
                raise MalformedRule("use edges for order-1 interactions")
            if bases.size and (np.any(np.diff(bases, axis=1) <= 0) or np.any(bases == targets[:, None])):
                raise MalformedRule("hyperedge bases must be strictly increasing and exclude the target")
            if bases.size and (bases.min() < 0 or bases.max() >= self.n or targets.min() < 0 or targets.max() >= self.n):
                raise MalformedRule("hyperedge vertex out of range")
            rows = np.unique(np.column_stack([bases, targets]), axis=0) if bases.size else np.zeros((0, m + 1), dtype=np.int64)
            hyper[m] = (rows[:, :m], rows[:, m])
        object.__setattr__(self, "hyperedges", hyper)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def matrix(self) -> sp.csr_matrix:
        """Sparse indicator matrix with ``A[j, i] = 1`` for every edge ``(j, i)``."""
        e = self.edges
        return sp.csr_matrix((np.ones(e.shape[0]), (e[:, 0], e[:, 1])), shape=(self.n, self.n))

    def in_degrees(self, order=1) -> np.ndarray:
        """Number of order-``m`` interactions targeting each vertex."""
        if order == 1:
            return np.bincount(self.edges[:, 1], minlength=self.n).astype(float)
        _, targets = self.hyperedges.get(order, (None, np.zeros(0, dtype=np.int64)))
        return np.bincount(targets, minlength=self.n).astype(float)

    def orders(self):
        out = [1] if self.n_edges else []
        return out + [m for m, (b, _) in self.hyperedges.items() if b.shape[0]]

    def to_text(self) -> str:
        lines = [f"n {self.n} directed {int(self.directed)}"]
        lines += [f"{j} {i}" for j, i in self.edges.tolist()]
        for m, (bases, targets) in self.hyperedges.items():
            for b, t in zip(bases.tolist(), targets.tolist()):
                lines.append(f"{m} | {','.join(map(str, b))} | {t}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Adjacency":
        header = None
        edges = []
        hyper = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if header is None:
                tok = line.split()
                if len(tok) != 4 or tok[0] != "n" or tok[2] != "directed":
                    raise MalformedRule(f"bad adjacency header {line!r}")
                header = (int(tok[1]), bool(int(tok[3])))
                continue
            if "|" in line:
                m, base, t = (p.strip() for p in line.split("|"))
                hyper.setdefault(int(m), ([], []))
                hyper[int(m)][0].append([int(b) for b in base.split(",")])
                hyper[int(m)][1].append(int(t))
            else:
                j, i = line.split()
                edges.append((int(j), int(i)))
        if header is None:
            raise MalformedRule("missing adjacency header")
        hyper = {m: (np.array(b, dtype=np.int64).reshape(-1, m), np.array(t)) for m, (b, t) in hyper.items()}
        return cls(header[0], header[1], np.array(edges, dtype=np.int64).reshape(-1, 2), hyper)


def _undirected(n, pairs):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return Adjacency(n, False, np.concatenate([pairs, pairs[:, ::-1]]))


def _pair_from_index(k, n):
    """Decode linear indices of the strict upper triangle (row-major) to ``(i, j)``, ``i < j``."""
    k = np.asarray(k, dtype=np.int64)
    rows = np.arange(n, dtype=np.int64)
    row_start = rows * n - rows * (rows + 1) // 2
    i = np.searchsorted(row_start, k, side="right") - 1
    j = k - row_start[i] + i + 1
    return i, j


def erdos_renyi(n, lam, seed) -> Adjacency:
    """Undirected G(n, min(lam/n, 1)).

    The edge count is drawn from its binomial law and the edge set uniformly
    given the count, which is the same distribution without touching all
    ``n(n-1)/2`` pairs.
    """
    if n < 2:
        raise ParameterDomain("erdos_renyi needs n >= 2")
    if lam < 0:
        raise ParameterDomain("lambda must be nonnegative")
    p = min(lam / n, 1.0)
    pairs_total = n * (n - 1) // 2
    rng = stream(seed, 0x45)
    if p >= 1.0:
        idx = np.arange(pairs_total)
    elif p <= 0.0:
        idx = np.zeros(0, dtype=np.int64)
    else:
        count = int(rng.binomial(pairs_total, p))
        idx = np.sort(rng.choice(pairs_total, size=count, replace=False))
    i, j = _pair_from_index(idx, n)
    return _undirected(n, np.column_stack([i, j]))


def chung_lu_probability(n, alpha, gamma, i, j):
    """Edge probability between 1-based vertices ``i`` and ``j`` (clamped to 1)."""
    k = np.arange(1, n + 1, dtype=float)
    norm = np.sum((n / k) ** gamma)
    p = n ** alpha * (n / np.asarray(i, dtype=float)) ** gamma * (n / np.asarray(j, dtype=float)) ** gamma / norm
    return np.minimum(p, 1.0)


def chung_lu(n, alpha, gamma, seed) -> Adjacency:
    """Undirected inhomogeneous random graph with power-law expected degrees.

    Requires ``0 < gamma < 1/3`` and ``gamma < alpha < 1 - 2 gamma``.
    """
    if not (0 < gamma < 1 / 3 and gamma < alpha < 1 - 2 * gamma):
        raise ParameterDomain(f"(alpha={alpha}, gamma={gamma}) outside 0<gamma<1/3, gamma<alpha<1-2gamma")
    if n < 2:
        raise ParameterDomain("chung_lu needs n >= 2")
    rng = stream(seed, 0xC1)
    k = np.arange(1, n + 1, dtype=float)
    w = (n / k) ** gamma
    scale = n ** alpha / w.sum()
    pairs = []
    for i in range(n - 1):
        p = np.minimum(scale * w[i] * w[i + 1:], 1.0)
        hit = np.nonzero(rng.random(n - 1 - i) < p)[0]
        if hit.size:
            pairs.append(np.column_stack([np.full(hit.size, i), hit + i + 1]))
    pairs = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
    return _undirected(n, pairs)


def random_regular(n, d, seed, max_restarts=1000) -> Adjacency:
    """Uniform-ish random d-regular simple graph by stub pairing.

    Stubs are paired at random; pairs forming loops or multi-edges are
    returned to the pool and re-paired. When no admissible pair remains the
    whole construction restarts (at most ``max_restarts`` times).
    """
    if d < 0 or d >= n:
        raise ParameterDomain(f"need 0 <= d < n, got d={d}, n={n}")
    if (n * d) % 2:
        raise InfeasibleRegular(f"n*d = {n * d} is odd")
    rng = stream(seed, 0x52)
    for _ in range(max_restarts):
        edges = _pair_stubs(n, d, rng)
        if edges is not None:
            return _undirected(n, edges)
    raise InfeasibleRegular(f"no simple {d}-regular graph found after {max_restarts} restarts")


def _pair_stubs(n, d, rng):
    stubs = np.repeat(np.arange(n), d)
    present = set()
    out = []
    for _ in range(100):
        if stubs.size == 0:
            return np.array(out, dtype=np.int64).reshape(-1, 2)
        rng.shuffle(stubs)
        a, b = stubs[0::2], stubs[1::2]
        left = []
        for u, v in zip(a.tolist(), b.tolist()):
            key = (u, v) if u < v else (v, u)
            if u == v or key in present:
                left += [u, v]
            else:
                present.add(key)
                out.append(key)
        stubs = np.array(left, dtype=np.int64)
        if stubs.size and not _admissible_pair_exists(stubs, present):
            return None
    return None


def _admissible_pair_exists(stubs, present):
    verts = np.unique(stubs).tolist()
    for x in range(len(verts)):
        for y in range(x + 1, len(verts)):
            if (verts[x], verts[y]) not in present:
                return True
    return False


def named_graph(kind, n, **params) -> Adjacency:
    """Deterministic named graphs, plus ``random_regular``.

    ``kind`` is one of ``complete``, ``directed_star_out`` (vertex 0 points to
    every other vertex), ``path`` and ``random_regular`` (params ``d``,
    ``seed``).
    """
    if kind == "complete":
        i, j = np.triu_indices(n, k=1)
        return _undirected(n, np.column_stack([i, j]))
    if kind == "directed_star_out":
        leaves = np.arange(1, n)
        return Adjacency(n, True, np.column_stack([np.zeros_like(leaves), leaves]))
    if kind == "path":
        v = np.arange(n - 1)
        return _undirected(n, np.column_stack([v, v + 1]))
    if kind == "random_regular":
        return random_regular(n, int(params["d"]), params.get("seed", 0))
    raise SpecInvalid(f"unknown graph kind {kind!r}")


def triangle_hyperedges(adjacency: Adjacency) -> Adjacency:
    """Add an order-2 hyperedge ``({a, b}, c)`` for every triangle ``{a, b, c}`` and target ``c``."""
    A = adjacency.matrix()
    A = ((A + A.T) > 0).astype(np.int8).tocsr()
    tri = []
    for a in range(adjacency.n):
        nb = A.indices[A.indptr[a]:A.indptr[a + 1]]
        nb = nb[nb > a]
        for x in range(nb.size):
            b = nb[x]
            nbb = set(A.indices[A.indptr[b]:A.indptr[b + 1]].tolist())
            for c in nb[x + 1:]:
                if c in nbb:
                    tri.append((a, b, c))
    tri = np.array(tri, dtype=np.int64).reshape(-1, 3)
    bases = np.concatenate([tri[:, [1, 2]], tri[:, [0, 2]], tri[:, [0, 1]]])
    targets = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
    hyper = dict(adjacency.hyperedges)
    hyper[2] = (bases, targets)
    return Adjacency(adjacency.n, adjacency.directed, adjacency.edges, hyper)


@dataclass(frozen=True, eq=False)
class WeightMap:
    """Normalized interaction weights per order.

    ``weights[m] = (bases (E, m), targets (E,), w (E,))`` with
    ``w = a / mean_in_degree[m]``; pair rates are ``qbar[m] * w``.
    """

    n: int
    weights: dict
    mean_in_degree: dict
    max_in_degree: dict
    qbar: dict

    def rates(self, order):
        bases, targets, w = self.weights[order]
        return bases, targets, self.qbar.get(order, 1.0) * w

    def matrix(self, order=1) -> sp.csr_matrix:
        """Pair-rate matrix ``R[j, i] = qbar * w`` of the order-1 layer."""
        if order not in self.weights:
            return sp.csr_matrix((self.n, self.n))
        bases, targets, r = self.rates(order)
        return sp.csr_matrix((r, (bases[:, 0], targets)), shape=(self.n, self.n))

    def upper_regularity(self) -> float:
        """Smallest ``K`` with ``d_i <= (K / qbar) * dbar`` for every order and vertex."""
        return max(
            (self.qbar.get(m, 1.0) * self.max_in_degree[m] / self.mean_in_degree[m] for m in self.weights),
            default=0.0,
        )


def normalize_rates(adjacency: Adjacency, qbar_per_order=None, scaling="mean_degree") -> WeightMap:
    """Divide indicators by the mean in-degree of their order.

    Parameters
    ----------
    adjacency : Adjacency
    qbar_per_order : dict, optional
        Rate multiplier per order; defaults to 1.
    scaling : {"mean_degree", "inverse_n"} or float
        ``mean_degree`` divides by the average in-degree; ``inverse_n`` divides
        by ``n`` (the ``lambda/N`` convention for Erdos-Renyi graphs); a number
        divides by that constant.
    """
    qbar = {int(k): float(v) for k, v in (qbar_per_order or {}).items()}
    n = adjacency.n
    weights, dbar, dmax = {}, {}, {}
    layers = {}
    if adjacency.n_edges:
        layers[1] = (adjacency.edges[:, :1], adjacency.edges[:, 1])
    for m, (bases, targets) in adjacency.hyperedges.items():
        if bases.shape[0]:
            layers[m] = (bases, targets)
    if not layers:
        raise EmptyGraph("adjacency has no interactions to normalize")
    for m, (bases, targets) in layers.items():
        deg = np.bincount(targets, minlength=n).astype(float)
        mean = deg.mean()
        if scaling == "mean_degree":
            denom = mean
        elif scaling == "inverse_n":
            denom = float(n)
        else:
            denom = float(scaling)
        if denom <= 0:
            raise EmptyGraph(f"order {m} normalizer is not positive")
        weights[m] = (bases, targets, np.full(targets.shape[0], 1.0 / denom))
        dbar[m] = mean
        dmax[m] = float(deg.max())
        qbar.setdefault(m, 1.0)
    return WeightMap(n, weights, dbar, dmax, qbar)
