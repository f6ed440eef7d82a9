"""
Random graph ensembles, validity checks and ground-truth observables.

Graphs are undirected and simple. They are stored as a node count plus a
sorted tuple of ``(i, j)`` pairs with ``i < j``; the dense 0/1 adjacency
matrix is built lazily and cached.

The observables here are the regression targets of the readout. Spectral
moments are computed in exact integer arithmetic so that the targets carry
no floating-point ambiguity.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import EnsembleError, NumericalError, ParameterError

SUPPORTED_MOMENTS = (2, 3, 4)

# Reference size for the NetworkSize target (n / NETWORK_SIZE_REF).
NETWORK_SIZE_REF = 100

DEFAULT_MAX_ATTEMPTS = 10_000


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : iterable of (int, int)
        Unordered node pairs. Normalized to ``i < j``, deduplicated and
        sorted lexicographically.
    """

    n: int
    edges: tuple = field(default=())

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"node count must be a positive integer, got {self.n!r}")
        norm = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ParameterError(f"self-loop ({i},{i}) not allowed")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ParameterError(f"edge ({i},{j}) out of range for n={self.n}")
            norm.add((i, j) if i < j else (j, i))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    @classmethod
    def from_adjacency(cls, a) -> "Graph":
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ParameterError("adjacency must be a square matrix")
        if not np.array_equal(a, a.T):
            raise ParameterError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ParameterError("adjacency must have a zero diagonal")
        if not np.all((a == 0) | (a == 1)):
            raise ParameterError("adjacency entries must be 0 or 1")
        iu, ju = np.nonzero(np.triu(a, 1))
        return cls(a.shape[0], tuple(zip(iu.tolist(), ju.tolist())))

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Dense int64 adjacency matrix (read-only)."""
        a = np.zeros((self.n, self.n), dtype=np.int64)
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = 1
            a[e[:, 1], e[:, 0]] = 1
        a.setflags(write=False)
        return a

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and orthonormal eigenvectors of A."""
        try:
            w, v = np.linalg.eigh(self.adjacency.astype(float))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc
        w.setflags(write=False)
        v.setflags(write=False)
        return w, v

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> "Graph":
        return cls(int(d["n"]), tuple(tuple(e) for e in d["edges"]))

    def canonical_hash(self) -> str:
        """SHA-256 of the canonical JSON encoding (labelled, not isomorphism-invariant)."""
        blob = json.dumps(self.to_dict(), separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def path_graph(n: int) -> Graph:
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def cycle_graph(n: int) -> Graph:
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def star_graph(n: int) -> Graph:
    """Star on ``n`` nodes with hub 0."""
    return Graph(n, tuple((0, i) for i in range(1, n)))


# --------------------------------------------------------------------------
# Ensembles
# --------------------------------------------------------------------------

def gen_erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Sample G(n, p): every unordered pair is an edge independently with probability p."""
    if int(n) != n or n < 2:
        raise ParameterError(f"Erdos-Renyi needs n >= 2, got {n!r}")
    if not 0.0 < p < 1.0:
        raise ParameterError(f"Erdos-Renyi needs 0 < p < 1, got {p!r}")
    n = int(n)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return Graph(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())))


def gen_barabasi_albert(n: int, m_attach: int, rng: np.random.Generator) -> Graph:
    """Preferential-attachment graph.

    Seeding convention: the process starts from a star on ``m_attach + 1``
    nodes (``m_attach`` edges); each of the remaining ``n - m_attach - 1``
    nodes attaches to ``m_attach`` distinct existing nodes chosen with
    probability proportional to degree. The edge count is therefore exactly
    ``m_attach * (n - m_attach)``.
    """
    if int(m_attach) != m_attach or m_attach < 1 or m_attach >= n:
        raise ParameterError(f"Barabasi-Albert needs 1 <= m_attach < n, got m_attach={m_attach!r}, n={n!r}")
    n, m = int(n), int(m_attach)
    edges = [(0, i) for i in range(1, m + 1)]
    # each node appears once per incident edge
    stubs = [0] * m + list(range(1, m + 1))
    for new in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(stubs[int(rng.integers(len(stubs)))])
        for t in sorted(targets):
            edges.append((t, new))
            stubs.extend((t, new))
    return Graph(n, tuple(edges))


def gen_watts_strogatz(n: int, k_ring: int, p_rewire: float, rng: np.random.Generator) -> Graph:
    """Small-world graph: ring lattice with ``k_ring/2`` neighbours per side, then rewiring.

    Each lattice edge ``(i, i+j)`` is rewired with probability ``p_rewire`` to
    ``(i, w)`` with ``w`` uniform among nodes that are neither ``i`` nor
    already adjacent to ``i``.
    """
    if int(k_ring) != k_ring or k_ring < 2 or k_ring % 2 or k_ring >= n:
        raise ParameterError(f"Watts-Strogatz needs even 2 <= k_ring < n, got {k_ring!r}")
    if not 0.0 <= p_rewire <= 1.0:
        raise ParameterError(f"p_rewire must lie in [0, 1], got {p_rewire!r}")
    n, half = int(n), int(k_ring) // 2
    adj = [set() for _ in range(n)]
    for i in range(n):
        for j in range(1, half + 1):
            v = (i + j) % n
            adj[i].add(v)
            adj[v].add(i)
    for j in range(1, half + 1):
        for i in range(n):
            v = (i + j) % n
            if v not in adj[i] or rng.random() >= p_rewire:
                continue
            free = [w for w in range(n) if w != i and w not in adj[i]]
            if not free:
                continue
            w = free[int(rng.integers(len(free)))]
            adj[i].discard(v)
            adj[v].discard(i)
            adj[i].add(w)
            adj[w].add(i)
    return Graph(n, tuple((i, j) for i in range(n) for j in adj[i] if i < j))


def is_valid(g: Graph) -> bool:
    """True iff ``g`` is connected (which also rules out isolated nodes)."""
    if g.n == 1:
        return True
    if g.n_edges < g.n - 1:
        return False
    n_comp, _ = connected_components(g.adjacency, directed=False)
    return n_comp == 1


def _draw_until_valid(draw, max_attempts: int) -> tuple[Graph, int] | None:
    for attempt in range(1, max_attempts + 1):
        g = draw()
        if is_valid(g):
            return g, attempt
    return None


def sample_valid(n: int, p: float, rng: np.random.Generator,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> Graph:
    """Draw G(n, p) until a connected sample appears.

    Raises
    ------
    EnsembleError
        If ``max_attempts`` consecutive draws are all invalid, which means
        ``p`` is too small for connectivity at this ``n``.
    """
    return Cell(1, n, (p,)).sample_counted(rng, max_attempts)[0]


# --------------------------------------------------------------------------
# Observables
# --------------------------------------------------------------------------

class ObservableKind(str, enum.Enum):
    TR_A2 = "trA2"
    TR_A3 = "trA3"
    TR_A4 = "trA4"
    HUB_DENSITY = "hub"
    NETWORK_SIZE = "size"
    SPECTRAL_RATIO = "ratio"
    GAMMA = "gamma"

    @classmethod
    def parse(cls, s) -> "ObservableKind":
        if isinstance(s, cls):
            return s
        key = str(s).strip()
        for kind in cls:
            if key.lower() in (kind.value.lower(), kind.name.lower()):
                return kind
        raise ParameterError(f"unknown observable {s!r}; choose from {[k.value for k in cls]}")

    @property
    def moment(self) -> int | None:
        return {"trA2": 2, "trA3": 3, "trA4": 4}.get(self.value)


def trace_power(g: Graph, k: int) -> int:
    """Exact Tr(A^k) for k in {2, 3, 4}, i.e. the number of closed walks of length k."""
    if k not in SUPPORTED_MOMENTS:
        raise ParameterError(f"trace_power supports k in {SUPPORTED_MOMENTS}, got {k!r}")
    a = g.adjacency
    if k == 2:
        return int(a.sum())
    a2 = a @ a
    if k == 3:
        return int((a2 * a).sum())
    # Tr(A^4) = sum_ij (A^2)_ij (A^2)_ji, and A^2 is symmetric
    return int((a2 * a2).sum())


def complete_graph_moment(n: int, k: int) -> int:
    """Tr(A_c^k) for the complete graph K_n, from its spectrum {n-1, -1 (x n-1)}."""
    if int(n) != n or n < 2:
        raise ParameterError(f"complete_graph_moment needs n >= 2, got {n!r}")
    if k not in SUPPORTED_MOMENTS:
        raise ParameterError(f"complete_graph_moment supports k in {SUPPORTED_MOMENTS}, got {k!r}")
    n = int(n)
    return (n - 1) ** k + (n - 1) * (-1) ** k


def hub_density(g: Graph) -> float:
    """Fraction of nodes with degree strictly above mean + population std."""
    d = g.degrees.astype(float)
    return float(np.count_nonzero(d > d.mean() + d.std()) / g.n)


def spectral_ratio(g: Graph) -> float:
    """|lambda_min / lambda_max| of the adjacency matrix."""
    if g.n_edges == 0:
        raise ParameterError("spectral_ratio is undefined for a graph without edges")
    w, _ = g.spectrum
    return float(abs(w[0] / w[-1]))


def observable(g: Graph, kind) -> float:
    """Normalized regression target of ``g``.

    Spectral moments are divided by the same moment of K_n, the network
    size by ``NETWORK_SIZE_REF``; hub density and the spectral ratio already
    live in [0, 1] and are returned as is.
    """
    kind = ObservableKind.parse(kind)
    if kind is ObservableKind.GAMMA:
        raise ParameterError(
            "the leakage strength is a property of the intrusion deformation, "
            "not of the graph; use experiments.build_intrusion_dataset"
        )
    if kind.moment is not None:
        return trace_power(g, kind.moment) / complete_graph_moment(g.n, kind.moment)
    if kind is ObservableKind.HUB_DENSITY:
        return hub_density(g)
    if kind is ObservableKind.NETWORK_SIZE:
        return g.n / NETWORK_SIZE_REF
    return spectral_ratio(g)


# --------------------------------------------------------------------------
# Ensemble cells and the bracket notation
# --------------------------------------------------------------------------

ENSEMBLE_KINDS = ("er", "ba", "ws")


@dataclass(frozen=True)
class Cell:
    """``count`` graphs from one ensemble with fixed parameters.

    ``params`` holds ``(p,)`` for Erdos-Renyi, ``(m_attach,)`` for
    Barabasi-Albert and ``(k_ring, p_rewire)`` for Watts-Strogatz.
    """

    count: int
    n: int
    params: tuple
    kind: str = "er"

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ParameterError(f"unknown ensemble kind {self.kind!r}")
        if int(self.count) != self.count or self.count < 1:
            raise ParameterError(f"cell count must be a positive integer, got {self.count!r}")

    @property
    def p(self) -> float | None:
        return self.params[0] if self.kind == "er" else None

    def sample(self, rng: np.random.Generator, max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> Graph:
        return self.sample_counted(rng, max_attempts)[0]

    def sample_counted(self, rng: np.random.Generator,
                       max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> tuple[Graph, int]:
        """A valid sample and the number of draws it took."""
        if max_attempts < 1:
            raise ParameterError("max_attempts must be >= 1")
        draw = {
            "er": lambda: gen_erdos_renyi(self.n, self.params[0], rng),
            "ba": lambda: gen_barabasi_albert(self.n, *self.params, rng),
            "ws": lambda: gen_watts_strogatz(self.n, *self.params, rng),
        }[self.kind]
        got = _draw_until_valid(draw, max_attempts)
        if got is None:
            msg = f"no connected sample from {self.describe()} in {max_attempts} draws"
            if self.kind == "er":
                msg += (f"; p is likely below the connectivity threshold "
                        f"ln(n)/n={np.log(self.n) / self.n:.3g}")
            raise EnsembleError(msg)
        return got

    def to_dict(self) -> dict:
        if self.kind == "er":
            return {"n": self.n, "p": self.params[0]}
        if self.kind == "ba":
            return {"kind": "ba", "n": self.n, "m_attach": self.params[0]}
        return {"kind": "ws", "n": self.n, "k_ring": self.params[0], "p_rewire": self.params[1]}

    def describe(self) -> str:
        tag = {"er": "G", "ba": "BA", "ws": "WS"}[self.kind]
        return f"{tag}({','.join(_fmt(v) for v in (self.n, *self.params))})"


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class EnsembleSpec:
    """A dataset composition ``[m_1 G(n_1,p_1), ..., m_r G(n_r,p_r)]``."""

    cells: tuple

    def __post_init__(self):
        if not self.cells:
            raise ParameterError("an ensemble needs at least one cell")
        object.__setattr__(self, "cells", tuple(self.cells))

    @property
    def size(self) -> int:
        return sum(c.count for c in self.cells)

    def describe(self) -> str:
        body = ", ".join(f"{c.count} {c.describe()}" for c in self.cells)
        return f"[{body}]_{self.size}"

    @classmethod
    def parse(cls, text: str) -> "EnsembleSpec":
        return parse_ensemble(text)


def parse_ensemble(text: str) -> EnsembleSpec:
    """Parse the dataset mini-language.

    Terms are joined with ``+``. Each term is ``<m>x<Family>(<args>)`` where
    one argument may be a ``|``-separated list, optionally prefixed by its
    name, expanding into one cell per value::

        150xG(50,0.6)
        90xG(50,p=0.2|0.4|0.6|0.8)
        90xG(n=20|40|60|80,0.5)
        10xBA(50,2) + 10xWS(50,4,0.1)
    """
    cells = []
    for term in str(text).split("+"):
        term = term.strip().replace(" ", "")
        if not term:
            raise ParameterError(f"empty term in ensemble {text!r}")
        try:
            count_s, rest = term.split("x", 1)
            fam, args_s = rest.split("(", 1)
            if not args_s.endswith(")"):
                raise ValueError
            args = [a.split("=", 1)[-1] for a in args_s[:-1].split(",")]
            count = int(count_s)
        except ValueError:
            raise ParameterError(f"cannot parse ensemble term {term!r}; expected e.g. 150xG(50,0.6)") from None
        kind = {"G": "er", "ER": "er", "BA": "ba", "WS": "ws"}.get(fam.upper())
        arity = {"er": 2, "ba": 2, "ws": 3}.get(kind)
        if kind is None or len(args) != arity:
            raise ParameterError(f"bad family or arity in ensemble term {term!r}")
        lists = [i for i, a in enumerate(args) if "|" in a]
        if len(lists) > 1:
            raise ParameterError(f"at most one argument may vary per term: {term!r}")
        choices = args[lists[0]].split("|") if lists else [None]
        for choice in choices:
            vals = [choice if (lists and i == lists[0]) else a for i, a in enumerate(args)]
            try:
                n = int(vals[0])
                if kind == "er":
                    params = (float(vals[1]),)
                elif kind == "ba":
                    params = (int(vals[1]),)
                else:
                    params = (int(vals[1]), float(vals[2]))
            except ValueError:
                raise ParameterError(f"non-numeric argument in {term!r}") from None
            cells.append(Cell(count, n, params, kind))
    return EnsembleSpec(tuple(cells))


def round_robin(counts: Sequence[int]) -> Iterable[tuple[int, int]]:
    """Yield ``(cell, index)`` pairs interleaving cells in a fixed order."""
    for idx in range(max(counts)):
        for c, m in enumerate(counts):
            if idx < m:
                yield c, idx
