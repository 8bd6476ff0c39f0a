"""State spaces, interaction rules and the derived rate quantities.

A rule of order ``m`` changes the state of a *target* vertex from ``from_state``
to ``to_state`` at a given rate, provided the ``m`` vertices of its *base* are
in the listed ``base_states``. Order-0 rules are self-interactions.

Rules are stored column-wise in a :class:`RateSystem` so that systems with
millions of rules (edge-flip processes on a few hundred vertices) stay cheap.
Bases are padded to the maximal order with ``-1``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import (
    DuplicateRule,
    MalformedRule,
    NegativeRate,
    NoConvergence,
    OrderTooHigh,
    StateNotInSpace,
)
from .ode import integrate


@dataclass(frozen=True)
class StateSpace:
    """Ordered finite set of state identifiers."""

    states: tuple

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        if not states:
            raise MalformedRule("state space must contain at least one state")
        if len(set(states)) != len(states):
            raise MalformedRule(f"duplicate state identifiers in {states}")
        for s in states:
            if not s or any(c in s for c in ",|#\n") or s != s.strip() or "->" in s:
                raise MalformedRule(f"state identifier {s!r} is not allowed")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "_lookup", {s: k for k, s in enumerate(states)})

    @property
    def size(self) -> int:
        return len(self.states)

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def index(self, state) -> int:
        try:
            return self._lookup[str(state)]
        except KeyError:
            raise StateNotInSpace(f"state {state!r} not in {self.states}") from None


@dataclass(frozen=True)
class InteractionRule:
    """One labelled rate ``r^(m)_{base, target; (base_states, from) -> (base_states, to)}``."""

    order: int
    base: tuple
    target: int
    base_states: tuple
    from_state: str
    to_state: str
    rate: float

    @classmethod
    def canonical(cls, base, target, base_states, from_state, to_state, rate):
        """Build a rule with the base sorted and ``base_states`` permuted to match."""
        base = tuple(int(b) for b in base)
        base_states = tuple(base_states)
        if len(base) != len(base_states):
            raise MalformedRule("base and base_states differ in length")
        perm = sorted(range(len(base)), key=base.__getitem__)
        return cls(
            len(base),
            tuple(base[p] for p in perm),
            int(target),
            tuple(base_states[p] for p in perm),
            from_state,
            to_state,
            float(rate),
        )


def _row_ids(cols, radices):
    """Dense integer ids for the distinct rows of stacked integer columns.

    Falls back to ``np.unique(axis=0)`` when the mixed-radix key would not fit
    into 63 bits.
    """
    n = cols[0].shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0
    total = 1.0
    for r in radices:
        total *= float(r)
    if total < 2.0 ** 62:
        key = np.zeros(n, dtype=np.int64)
        for c, r in zip(cols, radices):
            key = key * np.int64(r) + c.astype(np.int64)
        _, inv = np.unique(key, return_inverse=True)
    else:
        mat = np.stack([c.astype(np.int64) for c in cols], axis=1)
        _, inv = np.unique(mat, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv, int(inv.max()) + 1


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RateSystem:
    """Immutable, validated rule store with cached derived quantities.

    Rule columns (all of length ``n_rules``):

    ``order``, ``base`` (``n_rules x width``, padded with -1), ``base_states``
    (same shape, padded with -1), ``target``, ``from_state``, ``to_state``,
    ``rate``, and ``group`` (index of the rule's ``(base, target)`` pair).

    Group columns (one entry per distinct ``(base, target)``):

    ``group_order``, ``group_base``, ``group_target``, ``rbar`` (total rate of the
    pair summed over labels).

    Derived: ``delta`` (``(M+1) x N``, incoming total rate per order),
    ``delta_max`` (over orders >= 1), ``r_tilde`` (sparse ``N x N``, entry
    ``[j, i]`` is the total influence of ``j`` on ``i``), ``r_tilde_max``.
    """

    state_space: StateSpace
    n_vertices: int
    max_order: int
    order: np.ndarray
    base: np.ndarray
    base_states: np.ndarray
    target: np.ndarray
    from_state: np.ndarray
    to_state: np.ndarray
    rate: np.ndarray
    group: np.ndarray
    group_order: np.ndarray
    group_base: np.ndarray
    group_target: np.ndarray
    rbar: np.ndarray
    delta: np.ndarray
    delta_max: float
    r_tilde: sp.csr_matrix
    r_tilde_max: float
    labels: tuple | None = None
    _by_target: tuple = field(default=None, repr=False)
    _by_member: tuple = field(default=None, repr=False)

    @property
    def n_rules(self) -> int:
        return int(self.rate.shape[0])

    @property
    def n_states(self) -> int:
        return self.state_space.size

    @property
    def n_groups(self) -> int:
        return int(self.rbar.shape[0])

    @property
    def total_rate(self) -> float:
        return float(self.rate.sum())

    def rules_targeting(self, i) -> np.ndarray:
        """Rule ids whose target is vertex ``i``."""
        perm, offsets = self._by_target
        return perm[offsets[i]:offsets[i + 1]]

    def rules_with_member(self, j) -> np.ndarray:
        """Rule ids whose base contains vertex ``j``."""
        perm, offsets = self._by_member
        return perm[offsets[j]:offsets[j + 1]]

    def rule(self, r) -> InteractionRule:
        m = int(self.order[r])
        names = self.state_space.states
        return InteractionRule(
            m,
            tuple(int(b) for b in self.base[r, :m]),
            int(self.target[r]),
            tuple(names[s] for s in self.base_states[r, :m]),
            names[self.from_state[r]],
            names[self.to_state[r]],
            float(self.rate[r]),
        )

    def rules(self):
        for r in range(self.n_rules):
            yield self.rule(r)

    def rbar_items(self, order):
        """Return ``(bases, targets, rbar)`` for all groups of the given order."""
        mask = self.group_order == order
        return self.group_base[mask, :order], self.group_target[mask], self.rbar[mask]

    def with_labels(self, labels) -> "RateSystem":
        if labels is not None and len(labels) != self.n_vertices:
            raise MalformedRule("labels must have one entry per vertex")
        d = dict(self.__dict__)
        d["labels"] = None if labels is None else tuple(labels)
        return RateSystem(**d)


def build_rate_system(state_space, n_vertices, rules: Iterable[InteractionRule], labels=None):
    """Validate rules and build a :class:`RateSystem`.

    Bases must already be strictly increasing; use
    :meth:`InteractionRule.canonical` to sort them. Rules with rate 0 are
    dropped. Raises :class:`DuplicateRule` if the same ``(m, base, target,
    label)`` appears twice.
    """
    if not isinstance(state_space, StateSpace):
        state_space = StateSpace(tuple(state_space))
    rules = list(rules)
    width = max([r.order for r in rules], default=0)
    width = max(width, 1)
    n = len(rules)
    order = np.zeros(n, dtype=np.int64)
    base = np.full((n, width), -1, dtype=np.int64)
    base_states = np.full((n, width), -1, dtype=np.int64)
    target = np.zeros(n, dtype=np.int64)
    src = np.zeros(n, dtype=np.int64)
    dst = np.zeros(n, dtype=np.int64)
    rate = np.zeros(n, dtype=float)
    for k, r in enumerate(rules):
        m = int(r.order)
        if m < 0 or len(r.base) != m or len(r.base_states) != m:
            raise MalformedRule(f"rule {k}: order {m} does not match base {r.base} / states {r.base_states}")
        order[k] = m
        base[k, :m] = r.base
        base_states[k, :m] = [state_space.index(s) for s in r.base_states]
        target[k] = r.target
        src[k] = state_space.index(r.from_state)
        dst[k] = state_space.index(r.to_state)
        rate[k] = r.rate
    return build_rate_system_from_arrays(
        state_space, n_vertices, order, base, base_states, target, src, dst, rate, labels=labels
    )


def build_rate_system_from_arrays(
    state_space, n_vertices, order, base, base_states, target, from_state, to_state, rate, labels=None
):
    """Column-wise constructor used by the model builders.

    ``base`` and ``base_states`` are ``(n_rules, width)`` integer arrays padded
    with -1 beyond each rule's order; states are given as indices.
    """
    if not isinstance(state_space, StateSpace):
        state_space = StateSpace(tuple(state_space))
    N = int(n_vertices)
    if N < 1:
        raise MalformedRule("a system needs at least one vertex")
    S = state_space.size
    order = np.asarray(order, dtype=np.int64).reshape(-1)
    n = order.shape[0]
    base = np.asarray(base, dtype=np.int64).reshape(n, -1) if n else np.full((0, 1), -1, dtype=np.int64)
    base_states = np.asarray(base_states, dtype=np.int64).reshape(base.shape)
    target = np.asarray(target, dtype=np.int64).reshape(-1)
    from_state = np.asarray(from_state, dtype=np.int64).reshape(-1)
    to_state = np.asarray(to_state, dtype=np.int64).reshape(-1)
    rate = np.asarray(rate, dtype=float).reshape(-1)
    for name, a in (("target", target), ("from_state", from_state), ("to_state", to_state), ("rate", rate)):
        if a.shape[0] != n:
            raise MalformedRule(f"column {name} has length {a.shape[0]}, expected {n}")

    if n:
        if not np.all(np.isfinite(rate)):
            raise MalformedRule("rates must be finite")
        if np.any(rate < 0):
            raise NegativeRate("rates must be nonnegative")
        if np.any(order < 0) or np.any(order > base.shape[1]):
            raise MalformedRule("rule order out of range of the base width")
        if np.any((target < 0) | (target >= N)):
            raise MalformedRule("target vertex out of range")
        for name, a in (("from_state", from_state), ("to_state", to_state)):
            if np.any((a < 0) | (a >= S)):
                raise StateNotInSpace(f"{name} index out of range")
        if np.any(from_state == to_state):
            raise MalformedRule("from_state must differ from to_state")
        cols = np.arange(base.shape[1])[None, :]
        used = cols < order[:, None]
        if np.any(base[used] < 0) or np.any(base[used] >= N):
            raise MalformedRule("base vertex out of range")
        if np.any(base[~used] != -1) or np.any(base_states[~used] != -1):
            raise MalformedRule("base padding must be -1 beyond the rule order")
        if np.any((base_states[used] < 0) | (base_states[used] >= S)):
            raise StateNotInSpace("base state index out of range")
        if base.shape[1] > 1:
            inc = base[:, 1:] > base[:, :-1]
            if np.any(~inc & used[:, 1:]):
                raise MalformedRule("bases must be strictly increasing (sort them with InteractionRule.canonical)")
        if np.any(np.any((base == target[:, None]) & used, axis=1)):
            raise MalformedRule("target vertex appears in its own base")

        keep = rate > 0
        if not np.all(keep):
            order, base, base_states = order[keep], base[keep], base_states[keep]
            target, from_state, to_state, rate = target[keep], from_state[keep], to_state[keep], rate[keep]
            n = order.shape[0]

    M = int(order.max()) if n else 0
    width = max(M, 1)
    base = np.ascontiguousarray(base[:, :width]) if base.shape[1] >= width else base
    base_states = np.ascontiguousarray(base_states[:, :width])
    if base.shape[1] < width:
        raise MalformedRule("base width smaller than the maximal order")

    # groups: distinct (target, base) pairs; padding -1 -> 0 keeps orders distinct
    group_cols = [target] + [base[:, l] + 1 for l in range(width)]
    group, G = _row_ids(group_cols, [N] + [N + 1] * width)
    label_cols = [group] + [base_states[:, l] + 1 for l in range(width)] + [from_state, to_state]
    _, n_labels = _row_ids(label_cols, [max(G, 1)] + [S + 1] * width + [S, S])
    if n_labels != n:
        raise DuplicateRule("the same (order, base, target, label) appears more than once")

    first = np.full(G, -1, dtype=np.int64)
    if n:
        first[group[::-1]] = np.arange(n - 1, -1, -1)
    group_order = order[first] if n else np.zeros(0, dtype=np.int64)
    group_base = base[first] if n else np.zeros((0, width), dtype=np.int64)
    group_target = target[first] if n else np.zeros(0, dtype=np.int64)
    rbar = np.bincount(group, weights=rate, minlength=G) if n else np.zeros(0)

    delta = np.bincount(group_order * N + group_target, weights=rbar, minlength=(M + 1) * N).reshape(M + 1, N)
    delta_max = float(delta[1:].max()) if M >= 1 and G else 0.0

    gcols = np.arange(width)[None, :]
    gused = gcols < group_order[:, None]
    rows = group_base[gused]
    counts = gused.sum(axis=1)
    cols_ = np.repeat(group_target, counts)
    vals = np.repeat(rbar, counts)
    r_tilde = sp.csr_matrix((vals, (rows, cols_)), shape=(N, N))
    r_tilde.sum_duplicates()
    r_tilde_max = float(r_tilde.data.max()) if r_tilde.nnz else 0.0

    by_target_perm = np.argsort(target, kind="stable")
    by_target_off = np.searchsorted(target[by_target_perm], np.arange(N + 1))
    rule_ids = np.repeat(np.arange(n), order)
    members = base[np.arange(width)[None, :] < order[:, None]]
    mperm = np.argsort(members, kind="stable")
    by_member_perm = rule_ids[mperm]
    by_member_off = np.searchsorted(members[mperm], np.arange(N + 1))

    return RateSystem(
        state_space=state_space,
        n_vertices=N,
        max_order=M,
        order=_frozen(order),
        base=_frozen(base),
        base_states=_frozen(base_states),
        target=_frozen(target),
        from_state=_frozen(from_state),
        to_state=_frozen(to_state),
        rate=_frozen(rate),
        group=_frozen(group),
        group_order=_frozen(group_order),
        group_base=_frozen(group_base),
        group_target=_frozen(group_target),
        rbar=_frozen(rbar),
        delta=_frozen(delta),
        delta_max=delta_max,
        r_tilde=r_tilde,
        r_tilde_max=r_tilde_max,
        labels=None if labels is None else tuple(labels),
        _by_target=(_frozen(by_target_perm), _frozen(by_target_off)),
        _by_member=(_frozen(by_member_perm), _frozen(by_member_off)),
    )


def influence_max(system: RateSystem) -> float:
    """Largest one-vertex-on-another influence ``max_{j,i} r~_{ji}``."""
    return system.r_tilde_max


@dataclass(frozen=True, eq=False)
class PairRateMatrix:
    """Total pair rates ``R[j, i]`` of an order-1 system (zero diagonal)."""

    n: int
    entries: sp.csr_matrix
    symmetric: bool

    def toarray(self):
        return self.entries.toarray()


def _is_symmetric(R, atol=1e-12):
    if sp.issparse(R):
        diff = (R - R.T).tocsr()
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= atol
    return bool(np.allclose(R, R.T, rtol=0.0, atol=atol))


def pair_rate_matrix(system: RateSystem) -> PairRateMatrix:
    """Matrix of total pair rates; only defined for systems of order at most 1."""
    if system.max_order > 1:
        raise OrderTooHigh(f"pair rate matrix needs max order 1, system has {system.max_order}")
    N = system.n_vertices
    bases, targets, rbar = system.rbar_items(1)
    R = sp.csr_matrix((rbar, (bases[:, 0], targets)), shape=(N, N))
    R.sum_duplicates()
    return PairRateMatrix(N, R, _is_symmetric(R))


def as_matrix(R):
    """Accept a :class:`PairRateMatrix`, a sparse matrix or an array-like."""
    if isinstance(R, PairRateMatrix):
        return R.entries
    if sp.issparse(R):
        return R.tocsr()
    a = np.asarray(R, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    return a


def is_symmetric(R, atol=1e-12) -> bool:
    return _is_symmetric(as_matrix(R), atol)


class SpectralNorm(NamedTuple):
    value: float
    converged: bool
    iterations: int


def spectral_norm(R, tol=1e-10, max_iter=20000) -> SpectralNorm:
    """Largest singular value of ``R`` by power iteration on ``R^T R``.

    The start vector is the normalized all-ones vector. If it lies in the
    kernel, one deterministic perturbed start is tried before concluding
    that the norm is zero. A :class:`NoConvergence` warning is emitted when
    ``max_iter`` is reached; the best estimate is still returned.
    """
    A = as_matrix(R)
    n = A.shape[0]
    if n == 0:
        return SpectralNorm(0.0, True, 0)
    starts = [np.ones(n), 1.0 + np.arange(1, n + 1) / (n + 1.0) * np.where(np.arange(n) % 2, -1.0, 1.0)]
    for x in starts:
        x = x / np.linalg.norm(x)
        prev = None
        for k in range(1, max_iter + 1):
            y = A @ x
            w = A.T @ y
            lam = float(y @ y)
            nw = float(np.linalg.norm(w))
            if nw == 0.0:
                break
            est = np.sqrt(lam)
            x = w / nw
            if prev is not None and abs(est - prev) <= tol * est:
                # one more step's Rayleigh quotient is the reported value
                y = A @ x
                return SpectralNorm(float(np.linalg.norm(y)), True, k)
            prev = est
        else:
            warnings.warn(f"power iteration did not reach tol={tol} in {max_iter} steps", NoConvergence)
            return SpectralNorm(float(np.linalg.norm(A @ x)), False, max_iter)
    return SpectralNorm(0.0, True, 0)


def frobenius_theta(R) -> float:
    """Normalized squared Frobenius norm ``(1/N) sum_ij R_ij^2``."""
    A = as_matrix(R)
    n = A.shape[0]
    sq = A.multiply(A).sum() if sp.issparse(A) else float((A * A).sum())
    return float(sq) / n


def diag_R2_stats(R):
    """Return ``(mean, rms)`` of the diagonal of ``R @ R``.

    ``(R^2)_mm = sum_k R_mk R_km`` is computed without forming ``R^2``.
    """
    A = as_matrix(R)
    if sp.issparse(A):
        d = np.asarray(A.multiply(A.T).sum(axis=1)).reshape(-1)
    else:
        d = (A * A.T).sum(axis=1)
    return float(d.mean()), float(np.sqrt(np.mean(d * d)))


def expm_action(R, v, t, tol=1e-10):
    """Compute ``exp(R t) v`` by integrating ``u' = R u`` from ``u(0) = v``.

    ``v`` may be a vector or a matrix whose columns are propagated together.
    No dense exponential is formed.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    A = as_matrix(R)
    v = np.array(v, dtype=float)
    if t == 0:
        return v
    return integrate(lambda _t, u: A @ u, v, [float(t)], rtol=tol, atol=tol)[0]


# ---------------------------------------------------------------------------
# rule-set text format


def format_rule_set(system: RateSystem) -> str:
    """Serialize a system as line-oriented rule-set text."""
    names = system.state_space.states
    lines = [f"states: {','.join(names)}", f"vertices: {system.n_vertices}"]
    for r in range(system.n_rules):
        m = int(system.order[r])
        base = ",".join(str(int(b)) for b in system.base[r, :m])
        bst = ",".join(names[s] for s in system.base_states[r, :m])
        lines.append(
            f"{m} | {base} | {int(system.target[r])} | {bst} | "
            f"{names[system.from_state[r]]} -> {names[system.to_state[r]]} | {float(system.rate[r])!r}"
        )
    return "\n".join(lines) + "\n"


def parse_rule_set(text: str) -> RateSystem:
    """Parse rule-set text produced by :func:`format_rule_set` (or by hand).

    Whitespace is insignificant and ``#`` starts a comment. Vertex ids are
    0-based.
    """
    states = None
    n_vertices = None
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low.startswith("states:"):
            states = StateSpace(tuple(s.strip() for s in line.split(":", 1)[1].split(",") if s.strip()))
            continue
        if low.startswith("vertices:"):
            n_vertices = int(line.split(":", 1)[1])
            continue
        if states is None or n_vertices is None:
            raise MalformedRule(f"line {lineno}: rules must follow the states/vertices header")
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 6:
            raise MalformedRule(f"line {lineno}: expected 6 '|'-separated fields, got {len(parts)}")
        try:
            m = int(parts[0])
            base = tuple(int(b) for b in parts[1].split(",") if b.strip())
            target = int(parts[2])
            bst = tuple(s.strip() for s in parts[3].split(",") if s.strip())
            src, dst = (s.strip() for s in parts[4].split("->"))
            rate = float(parts[5])
        except ValueError as exc:
            raise MalformedRule(f"line {lineno}: {exc}") from None
        if len(base) != m or len(bst) != m:
            raise MalformedRule(f"line {lineno}: order {m} does not match base/base_states")
        rules.append(InteractionRule(m, base, target, bst, src, dst, rate))
    if states is None or n_vertices is None:
        raise MalformedRule("missing 'states:' or 'vertices:' header")
    return build_rate_system(states, n_vertices, rules)


def load_rule_set(path) -> RateSystem:
    with open(path) as fh:
        return parse_rule_set(fh.read())


def save_rule_set(system: RateSystem, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_rule_set(system))
