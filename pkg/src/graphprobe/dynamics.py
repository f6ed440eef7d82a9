"""
Single-excitation continuous-time quantum walk on a graph.

Units are fixed so that the hopping energy and the reduced Planck constant
are both one; a time ``t`` is therefore the dimensionless ``gamma * t / hbar``.

Two propagators are provided:

* ``evolve_hermitian`` for ``H = gamma * A``. One symmetric eigendecomposition
  of ``A`` is reused for every requested time.
* ``evolve_nonhermitian`` for ``H = gamma * A - i * Gamma * |alpha><alpha|``,
  a leaky node modelling a parasitic channel. ``H`` is non-normal, so the
  propagator is a general complex matrix exponential (scaling and squaring
  with a Pade approximant) rather than a diagonalization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .errors import NumericalError, ParameterError
from .graph import Graph


class ShortTimeWarning(UserWarning):
    """The total evolution time leaves the short-time window tau < 1."""


@dataclass(frozen=True)
class Leak:
    """Imaginary self-loop of strength ``strength`` at node ``alpha``."""

    alpha: int
    strength: float

    def __post_init__(self):
        if self.strength < 0 or not np.isfinite(self.strength):
            raise ParameterError(f"leak strength must be finite and >= 0, got {self.strength!r}")


@dataclass(frozen=True)
class EffectiveHamiltonian:
    graph: Graph
    gamma: float = 1.0
    leak: Optional[Leak] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be > 0, got {self.gamma!r}")
        if self.leak is not None and not 0 <= self.leak.alpha < self.graph.n:
            raise ParameterError(f"leak node {self.leak.alpha} out of range for n={self.graph.n}")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def is_hermitian(self) -> bool:
        return self.leak is None or self.leak.strength == 0

    def matrix(self) -> np.ndarray:
        """Dense complex matrix of H."""
        h = self.gamma * self.graph.adjacency.astype(complex)
        if self.leak is not None:
            h[self.leak.alpha, self.leak.alpha] -= 1j * self.leak.strength
        return h


@dataclass(frozen=True)
class TimeGrid:
    """Sampling times ``t_k = k * dt`` for ``k = 1..steps``."""

    dt: float
    steps: int

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ParameterError(f"dt must be finite and > 0, got {self.dt!r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ParameterError(f"steps must be a positive integer, got {self.steps!r}")
        if self.tau >= 1:
            warnings.warn(
                f"total time tau={self.tau:g} is outside the short-time window (tau < 1)",
                ShortTimeWarning,
                stacklevel=3,
            )

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.steps + 1)

    @property
    def tau(self) -> float:
        return self.dt * self.steps


Times = Union[TimeGrid, Sequence[float], np.ndarray]


def _as_times(times: Times) -> np.ndarray:
    t = times.times if isinstance(times, TimeGrid) else np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1 or not np.all(np.isfinite(t)) or np.any(t < 0):
        raise ParameterError("times must be a 1-D sequence of finite non-negative values")
    return t


def _as_state(psi0, n: int) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (n,):
        raise ParameterError(f"initial state has shape {psi0.shape}, expected ({n},)")
    return psi0


def evolve_hermitian(h: EffectiveHamiltonian, psi0, times: Times) -> np.ndarray:
    """States ``exp(-i H t) psi0`` for every requested time.

    Returns
    -------
    ndarray, shape (len(times), n), complex
        Row ``k`` is the state at ``times[k]``. A time of exactly zero
        returns ``psi0`` unchanged.
    """
    if not h.is_hermitian:
        raise ParameterError("evolve_hermitian needs a Hamiltonian without an active leak")
    t = _as_times(times)
    psi0 = _as_state(psi0, h.n)
    w, v = h.graph.spectrum
    coeffs = v.T @ psi0
    phases = np.exp(-1j * h.gamma * np.outer(t, w))
    out = (phases * coeffs) @ v.T
    out[t == 0] = psi0
    return out


def propagator(h: EffectiveHamiltonian, t: float) -> np.ndarray:
    """Dense ``exp(-i H t)`` for a possibly non-Hermitian ``H``."""
    try:
        u = scipy.linalg.expm(-1j * t * h.matrix())
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"matrix exponential failed at t={t}: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise NumericalError(f"matrix exponential produced non-finite entries at t={t}")
    return u


def evolve_nonhermitian(h: EffectiveHamiltonian, psi0, times: Times) -> np.ndarray:
    """States ``exp(-i H_eff t) psi0`` for every requested time.

    Times are visited in increasing order and the state is carried forward
    by the propagator of each increment; on a uniform grid this needs a
    single matrix exponential.
    """
    t = _as_times(times)
    psi0 = _as_state(psi0, h.n)
    order = np.argsort(t, kind="stable")
    out = np.empty((t.size, h.n), dtype=complex)
    psi, t_prev = psi0, 0.0
    u, u_step = None, None
    for idx in order:
        step = float(t[idx] - t_prev)
        if step > 0:
            # grid increments k*dt - (k-1)*dt differ from dt only by roundoff
            if u_step is None or abs(step - u_step) > 1e-14 * max(1.0, step):
                u, u_step = propagator(h, step), step
            psi = u @ psi
            t_prev = float(t[idx])
        out[idx] = psi
    return out


def evolve(h: EffectiveHamiltonian, psi0, times: Times) -> np.ndarray:
    """Dispatch on the presence of a leak (a zero-strength leak still takes the general path)."""
    if h.leak is None:
        return evolve_hermitian(h, psi0, times)
    return evolve_nonhermitian(h, psi0, times)


def occupation(psi, i: int) -> float:
    """Probability ``|<i|psi>|^2`` of finding the excitation on node ``i``."""
    psi = np.asarray(psi)
    if not 0 <= i < psi.shape[-1]:
        raise ParameterError(f"node index {i} out of range for n={psi.shape[-1]}")
    return float(abs(psi[..., i]) ** 2)


def norm_squared(states: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(states) ** 2, axis=-1)
