"""Closed-form accuracy and concentration bounds.

Each evaluator returns a plain float; :func:`bound_table` wraps the headline
bounds of a system into :class:`BoundReport` records that echo their inputs.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from math import exp
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import RequiresSymmetric, RequiresUnweighted
from .rates import (
    RateSystem,
    as_matrix,
    diag_R2_stats,
    expm_action,
    frobenius_theta,
    is_symmetric,
    pair_rate_matrix,
    spectral_norm,
)

DENSE_LIMIT = 512


@dataclass(frozen=True)
class BoundReport:
    name: str
    value: float
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def concentration_upper(norm2_R, t, m_size) -> float:
    """Variance bound ``exp(2 ||R||_2 t) / |M|`` for a subpopulation average."""
    return exp(2.0 * norm2_R * t) / m_size


def collision_upper(delta_max, M, r_tilde_max, t) -> float:
    """Bound ``t e^{dMt} (1 + e^{dMt}) r~max`` on information-set collision probabilities."""
    g = exp(delta_max * M * t)
    return t * g * (1.0 + g) * r_tilde_max


def linf_upper(delta_max, M, r_tilde_max, t) -> float:
    """Uniform NIMFA error bound ``2 M t e^{2 M d t} r~max``."""
    return 2.0 * M * t * exp(2.0 * M * delta_max * t) * r_tilde_max


def linf_lower_general(r_tilde_max) -> float:
    """Worst-case NIMFA error at ``t = 1``: ``(1 - e^{-r/2})^2 / 2``."""
    return 0.5 * (1.0 - exp(-0.5 * r_tilde_max)) ** 2


class L1Bounds(NamedTuple):
    upper_delta: float
    upper_sigma: float
    lower_exp_delta: float
    lower_graph: float
    lower_theta: float


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def unweighted_scale(R):
    """Return ``1/dbar`` if every nonzero entry equals ``1/dbar`` with ``dbar = nnz/N``, else None."""
    A = as_matrix(R)
    vals = A.data if sp.issparse(A) else A[A != 0]
    vals = vals[vals != 0]
    n = A.shape[0]
    if vals.size == 0:
        return 0.0
    dbar = vals.size / n
    if np.allclose(vals, 1.0 / dbar, rtol=1e-12, atol=0):
        return 1.0 / dbar
    return None


def l1_bounds(R, t=1.0, require_unweighted=False) -> L1Bounds:
    """Average (l1) NIMFA error bounds for an order-1 system.

    Parameters
    ----------
    R : matrix
        Pair-rate matrix ``R[j, i]``; must be symmetric.
    t : float
        Time for the upper bounds. The lower bounds are only stated at
        ``t = 1`` and are NaN for any other ``t``.
    require_unweighted : bool
        Raise :class:`RequiresUnweighted` instead of returning NaN for
        ``lower_graph`` when ``R`` is not of the form ``A / dbar``.

    Returns
    -------
    L1Bounds
        ``upper_delta = 4 t^2 e^{3 dmax t} mean_m (R^2)_mm``,
        ``upper_sigma = 4 t^2 e^{3 ||R|| t} sqrt(mean_m (R^2)_mm^2)``,
        ``lower_exp_delta = mean over targets of sum_j e^{-(d_i + d_j)} R_ji^2 / 16``,
        ``lower_graph = e^{-8 ||R||^2} / (32 dbar)``,
        ``lower_theta = theta e^{-8 ||R||^3 / theta} / 32``.
    """
    A = as_matrix(R)
    if not is_symmetric(A):
        raise RequiresSymmetric("l1 bounds need a symmetric pair-rate matrix")
    n = A.shape[0]
    norm = spectral_norm(A).value
    delta = np.asarray(A.sum(axis=0)).reshape(-1)
    dmax = float(delta.max()) if n else 0.0
    mean_diag, rms_diag = diag_R2_stats(A)
    upper_delta = 4 * t * t * exp(3 * dmax * t) * mean_diag
    upper_sigma = 4 * t * t * exp(3 * norm * t) * rms_diag
    if t != 1.0:
        nan = float("nan")
        return L1Bounds(upper_delta, upper_sigma, nan, nan, nan)
    C = sp.coo_matrix(A)
    lower_exp = float(np.sum(np.exp(-(delta[C.row] + delta[C.col])) * C.data ** 2)) / (16 * n)
    scale = unweighted_scale(A)
    if scale is None:
        if require_unweighted:
            raise RequiresUnweighted("lower_graph needs R = A / dbar")
        lower_graph = float("nan")
    else:
        lower_graph = exp(-8 * norm ** 2) * scale / 32
    theta = frobenius_theta(A)
    lower_theta = exp(-8 * norm ** 3 / theta) * theta / 32 if theta > 0 else 0.0
    return L1Bounds(upper_delta, upper_sigma, lower_exp, lower_graph, lower_theta)


def ghost_upper_bk(R, root, t, tol=1e-10, dense_limit=DENSE_LIMIT) -> float:
    """Ghost probability bound ``sum_m (e^{Rt})_{im} (e^{2Rt} - I)_{mm}``.

    Dense exponentials are used up to ``dense_limit`` vertices; beyond that
    the row and the diagonal are assembled from matrix-exponential actions.
    """
    A = as_matrix(R)
    if not is_symmetric(A):
        raise RequiresSymmetric("the ghost bound needs a symmetric pair-rate matrix")
    n = A.shape[0]
    if t == 0:
        return 0.0
    if n <= dense_limit:
        D = _dense(A)
        row = scipy.linalg.expm(D * t)[root]
        diag = np.diag(scipy.linalg.expm(2 * D * t)) - 1.0
        return float(row @ diag)
    e = np.zeros(n)
    e[root] = 1.0
    # symmetric R: row i of e^{Rt} equals e^{Rt} e_i
    row = expm_action(A, e, t, tol)
    diag = np.empty(n)
    chunk = 64
    for start in range(0, n, chunk):
        cols = np.arange(start, min(n, start + chunk))
        E = np.zeros((n, cols.size))
        E[cols, np.arange(cols.size)] = 1.0
        diag[cols] = expm_action(A, E, 2 * t, tol)[cols, np.arange(cols.size)] - 1.0
    return float(row @ diag)


def cov_exp_bound(R, i, j, t) -> float:
    """Auxiliary covariance bound ``(e^{R^T t} e^{R t})_{ij}``."""
    D = _dense(as_matrix(R))
    E = scipy.linalg.expm(D * t)
    return float((E.T @ E)[i, j])


def system_quantities(system: RateSystem) -> dict:
    """Derived quantities every bound may need, computed once."""
    q = {
        "N": system.n_vertices,
        "M": system.max_order,
        "delta_max": system.delta_max,
        "r_tilde_max": system.r_tilde_max,
    }
    if system.max_order <= 1:
        P = pair_rate_matrix(system)
        q["norm2_R"] = spectral_norm(P.entries).value
        q["symmetric"] = P.symmetric
        q["theta"] = frobenius_theta(P.entries)
        nnz = P.entries.nnz
        q["dbar"] = nnz / system.n_vertices
    return q


def bound_table(system: RateSystem, t_values, m_size=None) -> list:
    """Headline bounds of ``system`` at each ``t`` as :class:`BoundReport` records."""
    q = system_quantities(system)
    M = max(q["M"], 1)
    out = []
    for t in t_values:
        t = float(t)
        base = {"t": t, "delta_max": q["delta_max"], "r_tilde_max": q["r_tilde_max"], "M": M}
        out.append(BoundReport("linf_upper", linf_upper(q["delta_max"], M, q["r_tilde_max"], t), dict(base)))
        out.append(BoundReport("collision_upper", collision_upper(q["delta_max"], M, q["r_tilde_max"], t), dict(base)))
        if "norm2_R" in q:
            size = m_size or q["N"]
            out.append(BoundReport("concentration_upper", concentration_upper(q["norm2_R"], t, size),
                                   {"t": t, "norm2_R": q["norm2_R"], "m_size": size}))
            if q["symmetric"]:
                R = pair_rate_matrix(system).entries
                l1 = l1_bounds(R, t)
                for name, value in l1._asdict().items():
                    if not np.isnan(value):
                        out.append(BoundReport(name, value, {"t": t, "delta_max": q["delta_max"],
                                                             "norm2_R": q["norm2_R"], "theta": q["theta"],
                                                             "dbar": q["dbar"]}))
    out.append(BoundReport("linf_lower_general", linf_lower_general(q["r_tilde_max"]),
                           {"t": 1.0, "r_tilde_max": q["r_tilde_max"]}))
    return out
