"""Quenched mean-field (NIMFA) equations for arbitrary rate systems.

Each vertex carries a probability vector ``z[i]`` over states. A rule from
``s'`` to ``s`` at target ``i`` moves mass at rate
``rate * z[i, s'] * prod_l z[base_l, base_state_l]``.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import MalformedRule, SimplexViolation
from .ode import integrate
from .rates import RateSystem

RENORM_THRESHOLD = 1e-12
CLAMP_LIMIT = 1e-9
ABORT_DRIFT = 1e-6


class _Tape:
    """Flat per-rule index arrays for the generic right-hand side."""

    def __init__(self, system: RateSystem):
        S = system.n_states
        self.size = system.n_vertices * S
        self.rate = np.asarray(system.rate, dtype=float)
        self.src = system.target * S + system.from_state
        self.dst = system.target * S + system.to_state
        self.factors = []
        for l in range(system.max_order):
            rules = np.nonzero(system.order > l)[0]
            flat = system.base[rules, l] * S + system.base_states[rules, l]
            full = rules.size == self.rate.size
            self.factors.append((None if full else rules, flat))

    def flows(self, zf):
        term = self.rate * zf[self.src]
        for rules, flat in self.factors:
            if rules is None:
                term = term * zf[flat]
            else:
                term[rules] *= zf[flat]
        return term

    def __call__(self, zf):
        term = self.flows(zf)
        return (np.bincount(self.dst, weights=term, minlength=self.size)
                - np.bincount(self.src, weights=term, minlength=self.size))


_TAPES = weakref.WeakKeyDictionary()


def _tape(system):
    tape = _TAPES.get(system)
    if tape is None:
        tape = _TAPES[system] = _Tape(system)
    return tape


def nimfa_rhs(system: RateSystem, z) -> np.ndarray:
    """Time derivative of the NIMFA state ``z`` (shape ``(N, |S|)``)."""
    z = np.asarray(z, dtype=float)
    if z.shape != (system.n_vertices, system.n_states):
        raise ValueError(f"z must have shape {(system.n_vertices, system.n_states)}")
    return _tape(system)(z.reshape(-1)).reshape(z.shape)


@dataclass(frozen=True, eq=False)
class SISParameters:
    """Pair-rate matrix and recovery rates of an SIS-shaped system."""

    R: sp.csr_matrix
    recovery: np.ndarray


def sis_parameters(system: RateSystem):
    """Return :class:`SISParameters` if ``system`` has exactly SIS form, else None.

    SIS form: states ``(S, I)``, order at most 1, pair rules ``(I, S) -> (I, I)``
    and self rules ``I -> S`` only.
    """
    if system.state_space.states != ("S", "I") or system.max_order > 1:
        return None
    o = system.order
    pair = o == 1
    if np.any(pair & ((system.base_states[:, 0] != 1) | (system.from_state != 0))):
        return None
    if np.any(~pair & (system.from_state != 1)):
        return None
    N = system.n_vertices
    R = sp.csr_matrix((system.rate[pair], (system.base[pair, 0], system.target[pair])), shape=(N, N))
    rec = np.bincount(system.target[~pair], weights=system.rate[~pair], minlength=N)
    return SISParameters(R, rec)


def sis_rhs(R, recovery, z_infected):
    """Classical SIS mean-field derivative ``-g z + (1 - z) R^T z``."""
    return -recovery * z_infected + (1.0 - z_infected) * (R.T @ z_infected)


@dataclass(frozen=True, eq=False)
class NimfaSolution:
    """NIMFA trajectory on a grid.

    Attributes
    ----------
    t : ndarray, shape (T,)
    z : ndarray, shape (T, N, |S|)
    max_renormalization : float
        Largest row-sum correction applied by the simplex monitor.
    repairs : int
        Number of accepted steps that needed a correction.
    """

    t: np.ndarray
    z: np.ndarray
    max_renormalization: float
    repairs: int
    state_space: object = None

    def max_drift(self) -> float:
        return float(np.abs(self.z.sum(axis=2) - 1.0).max()) if self.z.size else 0.0


class _SimplexMonitor:
    def __init__(self, shape):
        self.shape = shape
        self.max_fix = 0.0
        self.repairs = 0

    def __call__(self, y):
        z = y.reshape(self.shape)
        low = z.min()
        drift = float(np.abs(z.sum(axis=1) - 1.0).max())
        if drift > ABORT_DRIFT:
            raise SimplexViolation(f"row-sum drift {drift:.3g} exceeds {ABORT_DRIFT}")
        if low < -CLAMP_LIMIT:
            raise SimplexViolation(f"negative probability {low:.3g} below -{CLAMP_LIMIT}")
        if low >= 0 and drift <= RENORM_THRESHOLD:
            return y
        z = np.maximum(z, 0.0)
        sums = z.sum(axis=1, keepdims=True)
        self.max_fix = max(self.max_fix, drift, float(-low) if low < 0 else 0.0)
        self.repairs += 1
        return (z / sums).reshape(y.shape)


def integrate_nimfa(system: RateSystem, z0, t_grid, rtol=1e-8, atol=1e-10, fast_path=True) -> NimfaSolution:
    """Integrate the NIMFA system from ``z0`` at ``t = 0``.

    Parameters
    ----------
    system : RateSystem
    z0 : array_like or InitialLaw
        Initial per-vertex probability vectors, shape ``(N, |S|)``.
    t_grid : array_like
        Non-decreasing output times ``>= 0``.
    rtol, atol : float
        Integrator tolerances.
    fast_path : bool
        Use the closed SIS form when the system has it.
    """
    z0 = np.array(getattr(z0, "probs", z0), dtype=float)
    N, S = system.n_vertices, system.n_states
    if z0.shape != (N, S):
        raise MalformedRule(f"z0 must have shape {(N, S)}")
    if np.any(z0 < 0) or np.any(np.abs(z0.sum(axis=1) - 1) > 1e-9):
        raise MalformedRule("z0 rows must be probability vectors")
    grid = np.asarray(t_grid, dtype=float)
    sis = sis_parameters(system) if fast_path else None
    if sis is not None:
        def fun(_t, y):
            return sis_rhs(sis.R, sis.recovery, y)

        def clip(y):
            if y.min() >= 0 and y.max() <= 1:
                return y
            if y.min() < -CLAMP_LIMIT or y.max() > 1 + CLAMP_LIMIT:
                raise SimplexViolation("infected fraction left [0, 1]")
            return np.clip(y, 0.0, 1.0)

        zi = integrate(fun, z0[:, 1], grid, rtol=rtol, atol=atol, post_step=clip)
        z = np.stack([1.0 - zi, zi], axis=2)
        return NimfaSolution(grid, z, 0.0, 0, system.state_space)

    tape = _tape(system)
    monitor = _SimplexMonitor((N, S))
    y = integrate(lambda _t, y: tape(y), z0.reshape(-1), grid, rtol=rtol, atol=atol, post_step=monitor)
    return NimfaSolution(grid, y.reshape(grid.size, N, S), monitor.max_fix, monitor.repairs, system.state_space)
