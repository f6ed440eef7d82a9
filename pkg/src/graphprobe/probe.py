"""
Local probing: prepare an excitation on the monitored nodes, let it evolve
and record the occupation of those same nodes on a short time grid.

Features are laid out time-major::

    x = (p_{s1}(t1), ..., p_{sM}(t1), ..., p_{s1}(tT), ..., p_{sM}(tT))
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import EffectiveHamiltonian, TimeGrid, evolve
from .errors import ParameterError

DEFAULT_M = 5
DEFAULT_STEPS = 10
DEFAULT_DT = 0.05


@dataclass(frozen=True)
class ProbeConfig:
    """Monitored nodes, sampling grid and optional finite shot budget.

    ``shots=None`` means exact probabilities (the infinite-shot limit).
    """

    monitored: tuple = tuple(range(DEFAULT_M))
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(DEFAULT_DT, DEFAULT_STEPS))
    shots: Optional[int] = None

    def __post_init__(self):
        mon = tuple(int(i) for i in self.monitored)
        if not mon:
            raise ParameterError("at least one monitored node is required")
        if len(set(mon)) != len(mon):
            raise ParameterError(f"monitored nodes must be distinct, got {mon}")
        if min(mon) < 0:
            raise ParameterError(f"monitored nodes must be non-negative, got {mon}")
        if self.shots is not None and (int(self.shots) != self.shots or self.shots < 1):
            raise ParameterError(f"shots must be a positive integer, got {self.shots!r}")
        object.__setattr__(self, "monitored", mon)

    @property
    def m(self) -> int:
        return len(self.monitored)

    @property
    def dim(self) -> int:
        return self.m * self.grid.steps

    def to_dict(self) -> dict:
        return {
            "monitored": list(self.monitored),
            "dt": self.grid.dt,
            "steps": self.grid.steps,
            "shots": self.shots,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeConfig":
        return cls(tuple(d["monitored"]), TimeGrid(float(d["dt"]), int(d["steps"])), d.get("shots"))

    @classmethod
    def default(cls, m: int = DEFAULT_M, steps: int = DEFAULT_STEPS, dt: float = DEFAULT_DT,
                shots: Optional[int] = None) -> "ProbeConfig":
        """First ``m`` node labels, ``steps`` samples spaced by ``dt``."""
        return cls(tuple(range(m)), TimeGrid(dt, steps), shots)


def initial_state(monitored, n: int) -> np.ndarray:
    """Equal-amplitude, equal-phase superposition over the monitored nodes."""
    mon = [int(i) for i in monitored]
    if not mon:
        raise ParameterError("at least one monitored node is required")
    if len(set(mon)) != len(mon):
        raise ParameterError(f"monitored nodes must be distinct, got {mon}")
    if min(mon) < 0 or max(mon) >= n:
        raise ParameterError(f"monitored nodes {mon} out of range for n={n}")
    psi = np.zeros(n, dtype=complex)
    psi[mon] = 1.0 / np.sqrt(len(mon))
    return psi


def occupations(h: EffectiveHamiltonian, cfg: ProbeConfig) -> np.ndarray:
    """Exact occupations of every node, shape ``(steps, n)``."""
    psi0 = initial_state(cfg.monitored, h.n)
    return np.abs(evolve(h, psi0, cfg.grid)) ** 2


def extract_features(h: EffectiveHamiltonian, cfg: ProbeConfig,
                     rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Feature vector of length ``M*T`` for one Hamiltonian.

    With ``cfg.shots`` set, every entry is replaced by the success frequency
    of ``shots`` independent Bernoulli trials, which needs ``rng``.
    """
    if cfg.shots is not None and rng is None:
        raise ParameterError("finite-shot sampling requires an rng")
    if max(cfg.monitored) >= h.n:
        raise ParameterError(f"monitored nodes {cfg.monitored} out of range for n={h.n}")
    p = occupations(h, cfg)[:, list(cfg.monitored)].ravel()
    # clip roundoff so that p is a valid Bernoulli parameter
    p = np.clip(p, 0.0, 1.0)
    if cfg.shots is None:
        return p
    return rng.binomial(cfg.shots, p) / cfg.shots
