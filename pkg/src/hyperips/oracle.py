"""Exact master-equation solution for tiny systems.

Configurations are encoded in mixed radix with vertex 0 least significant:
``code = sum_v sigma_v * |S|**v``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import StateSpaceTooLarge
from .ode import integrate
from .rates import RateSystem

DEFAULT_CAP = 2 ** 20


def n_configurations(system: RateSystem) -> int:
    return system.n_states ** system.n_vertices


def _check_cap(system, cap):
    size = n_configurations(system)
    if size > cap:
        raise StateSpaceTooLarge(
            f"|S|^N = {system.n_states}^{system.n_vertices} = {size} exceeds cap {cap}"
        )
    return size


def digits(system: RateSystem, codes=None) -> np.ndarray:
    """Per-vertex states of each configuration code, shape ``(C, N)``."""
    S, N = system.n_states, system.n_vertices
    if codes is None:
        codes = np.arange(S ** N, dtype=np.int64)
    powers = S ** np.arange(N, dtype=np.int64)
    return ((codes[:, None] // powers[None, :]) % S).astype(np.int8)


def encode(system: RateSystem, sigma) -> int:
    sigma = np.asarray(sigma, dtype=np.int64)
    return int((sigma * system.n_states ** np.arange(system.n_vertices, dtype=np.int64)).sum())


def build_generator(system: RateSystem, cap=DEFAULT_CAP) -> sp.csr_matrix:
    """Sparse generator ``Q`` with ``Q[x, y]`` the jump rate from ``x`` to ``y``.

    Every rule contributes at every configuration matching its label; the
    diagonal is the negative row sum.
    """
    C = _check_cap(system, cap)
    S = system.n_states
    dig = digits(system)
    codes = np.arange(C, dtype=np.int64)
    rows, cols, vals = [], [], []
    # group rules sharing (target, from) to reuse the first mask
    key = system.target * S + system.from_state
    for k in np.unique(key):
        rules = np.nonzero(key == k)[0]
        tgt, src = divmod(int(k), S)
        base_mask = dig[:, tgt] == src
        for r in rules:
            mask = base_mask.copy()
            for l in range(int(system.order[r])):
                mask &= dig[:, system.base[r, l]] == system.base_states[r, l]
            hit = codes[mask]
            if hit.size == 0:
                continue
            rows.append(hit)
            cols.append(hit + (int(system.to_state[r]) - src) * S ** tgt)
            vals.append(np.full(hit.size, system.rate[r]))
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    out = np.bincount(rows, weights=vals, minlength=C)
    Q = sp.csr_matrix(
        (np.concatenate([vals, -out]), (np.concatenate([rows, codes]), np.concatenate([cols, codes]))),
        shape=(C, C),
    )
    Q.sum_duplicates()
    return Q


def initial_distribution(law) -> np.ndarray:
    """Product distribution of an :class:`~hyperips.models.InitialLaw` over all codes."""
    probs = np.asarray(getattr(law, "probs", law), dtype=float)
    p = probs[0].copy()
    for v in range(1, probs.shape[0]):
        p = np.kron(probs[v], p)
    return p


class MasterSolution:
    """Exact configuration distributions on a time grid.

    Attributes
    ----------
    t : ndarray, shape (T,)
    p : ndarray, shape (T, |S|**N)
    """

    def __init__(self, system, t, p):
        self.system = system
        self.t = np.asarray(t, dtype=float)
        self.p = p

    def _tensor(self, k):
        N, S = self.system.n_vertices, self.system.n_states
        # axis a of the reshaped tensor is vertex N-1-a
        return self.p[k].reshape((S,) * N)

    def marginals(self) -> np.ndarray:
        """``y[t, i, s]``: probability that vertex ``i`` is in state ``s``."""
        N, S = self.system.n_vertices, self.system.n_states
        out = np.empty((self.t.size, N, S))
        for k in range(self.t.size):
            ten = self._tensor(k)
            for v in range(N):
                ax = N - 1 - v
                out[k, v] = ten.sum(axis=tuple(a for a in range(N) if a != ax))
        return out

    def pair(self, k, i, j) -> np.ndarray:
        """Joint law of vertices ``(i, j)`` at grid index ``k``, shape ``(|S|, |S|)``."""
        N = self.system.n_vertices
        ten = self._tensor(k)
        if i == j:
            m = ten.sum(axis=tuple(a for a in range(N) if a != N - 1 - i))
            return np.diag(m)
        ai, aj = N - 1 - i, N - 1 - j
        joint = ten.sum(axis=tuple(a for a in range(N) if a not in (ai, aj)))
        return joint if ai < aj else joint.T

    def covariance(self, k, i, j, s, s2) -> float:
        joint = self.pair(k, i, j)
        return float(joint[s, s2] - joint[s, :].sum() * joint[:, s2].sum())


def solve_master(system: RateSystem, law, t_grid, rtol=1e-10, atol=1e-13, cap=DEFAULT_CAP) -> MasterSolution:
    """Integrate ``p' = p Q`` from the product initial law."""
    Q = build_generator(system, cap)
    QT = Q.T.tocsr()
    p0 = initial_distribution(law)
    p = integrate(lambda _t, x: QT @ x, p0, np.asarray(t_grid, dtype=float), rtol=rtol, atol=atol)
    return MasterSolution(system, t_grid, p)


def exact_marginals(system: RateSystem, law, t_grid, **kw) -> np.ndarray:
    """Exact marginals ``y[t, i, s]`` on the grid."""
    return solve_master(system, law, t_grid, **kw).marginals()


def exact_covariance(system: RateSystem, law, i, j, s, s2, t, **kw) -> float:
    """``Cov(1{sigma_i(t) = s}, 1{sigma_j(t) = s2})`` from the exact joint law.

    States may be given as names or indices.
    """
    ss = system.state_space
    s = ss.index(s) if isinstance(s, str) else int(s)
    s2 = ss.index(s2) if isinstance(s2, str) else int(s2)
    sol = solve_master(system, law, [float(t)], **kw)
    return sol.covariance(0, i, j, s, s2)
