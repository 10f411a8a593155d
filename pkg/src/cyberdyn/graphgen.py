"""Network construction, validation, persistence, and structural measurement.

All generators are seeded and bit-reproducible. Graphs are immutable after
construction and safe to share across worker processes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Graph",
    "ExpectedDegreeSequence",
    "GraphFormatError",
    "GraphGenerationError",
    "gen_er",
    "gen_chung_lu",
    "gen_clustered",
    "powerlaw_degree_sequence",
    "truncated_powerlaw_moments",
    "dmin_for_fixed_variance",
    "min_node_expansion",
    "largest_component",
    "save_graph",
    "load_graph",
]

# Per-node retry budget when a generator produces an isolated node. The
# dynamics divide by deg(v), so isolated nodes are rejected outright.
_ISOLATED_RETRY_LIMIT = 50


class GraphFormatError(ValueError):
    """Raised when an edge-list file cannot be parsed or fails validation."""


class GraphGenerationError(RuntimeError):
    """Raised when a generator cannot produce a valid graph (e.g. a node
    stays isolated after the retry budget)."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph in CSR form.

    ``indices[indptr[v]:indptr[v+1]]`` is the sorted neighbor list of node v.
    ``cluster_of`` holds 1-based cluster ids when the graph is clustered.
    ``has_self_links`` marks graphs built with the opt-in self-link mode;
    such graphs cannot be saved in the edge-list format.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    degrees: np.ndarray
    cluster_of: Optional[np.ndarray] = None
    has_self_links: bool = False

    @cached_property
    def csr(self) -> sp.csr_matrix:
        """Adjacency matrix as a scipy CSR float matrix."""
        data = np.ones(len(self.indices), dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    @cached_property
    def inv_degrees(self) -> np.ndarray:
        return 1.0 / self.degrees.astype(np.float64)

    @property
    def num_edges(self) -> int:
        return int(len(self.indices)) // 2 if not self.has_self_links else -1

    @property
    def num_clusters(self) -> int:
        return 0 if self.cluster_of is None else int(self.cluster_of.max())

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def edge_array(self) -> np.ndarray:
        """All edges as an (m, 2) array with u < v (u <= v with self-links)."""
        u = np.repeat(np.arange(self.n), self.degrees)
        keep = u <= self.indices if self.has_self_links else u < self.indices
        return np.stack([u[keep], self.indices[keep]], axis=1)

    def structural_hash(self) -> str:
        """sha256 over the canonical edge-list serialization."""
        return hashlib.sha256(_serialize(self).encode()).hexdigest()

    def structurally_equal(self, other: "Graph") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and (
                (self.cluster_of is None and other.cluster_of is None)
                or (
                    self.cluster_of is not None
                    and other.cluster_of is not None
                    and np.array_equal(self.cluster_of, other.cluster_of)
                )
            )
        )

    # Keep pickles light: the cached CSR matrix is rebuilt on demand.
    def __getstate__(self):
        return {
            "n": self.n,
            "indptr": self.indptr,
            "indices": self.indices,
            "degrees": self.degrees,
            "cluster_of": self.cluster_of,
            "has_self_links": self.has_self_links,
        }

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)


def graph_from_edges(
    n: int,
    edges: np.ndarray,
    cluster_of: Optional[np.ndarray] = None,
    allow_self_links: bool = False,
) -> Graph:
    """Build a validated Graph from an (m, 2) array of undirected edges.

    Rejects out-of-range ids, duplicate edges, self-loops (unless allowed),
    and isolated nodes.
    """
    if n < 2:
        raise ValueError("graph needs at least 2 nodes")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValueError("edge endpoint out of range")
    self_mask = edges[:, 0] == edges[:, 1]
    if self_mask.any() and not allow_self_links:
        raise ValueError(f"self-loop at node {int(edges[self_mask][0, 0])}")

    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    key = lo * n + hi
    if len(np.unique(key)) != len(key):
        raise ValueError("duplicate edge in edge list")

    plain = ~self_mask
    u = np.concatenate([lo[plain], hi[plain], lo[self_mask]])
    v = np.concatenate([hi[plain], lo[plain], lo[self_mask]])
    order = np.lexsort((v, u))
    u, v = u[order], v[order]
    degrees = np.bincount(u, minlength=n)
    if (degrees == 0).any():
        bad = np.flatnonzero(degrees == 0)
        raise ValueError(f"isolated node(s): {bad[:10].tolist()}")
    indptr = np.concatenate([[0], np.cumsum(degrees)]).astype(np.int64)

    if cluster_of is not None:
        cluster_of = np.asarray(cluster_of, dtype=np.int64)
        if cluster_of.shape != (n,):
            raise ValueError("cluster_of must have one entry per node")
        if cluster_of.min() < 1:
            raise ValueError("cluster ids are 1-based")

    return Graph(
        n=n,
        indptr=indptr,
        indices=v,
        degrees=degrees,
        cluster_of=cluster_of,
        has_self_links=bool(self_mask.any()),
    )


# ---------------------------------------------------------------------------
# Expected-degree sequences


@dataclass(frozen=True, eq=False)
class ExpectedDegreeSequence:
    """Positive expected degrees d_1..d_n for the generalized random graph."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        object.__setattr__(self, "d", d)
        if d.ndim != 1 or len(d) < 2:
            raise ValueError("need at least 2 expected degrees")
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("expected degrees must be positive and finite")

    @property
    def n(self) -> int:
        return len(self.d)

    @property
    def d_min(self) -> float:
        return float(self.d.min())

    @property
    def d_max(self) -> float:
        return float(self.d.max())

    @property
    def total(self) -> float:
        return float(self.d.sum())

    @property
    def chung_lu_valid(self) -> bool:
        """Strict edge-probability validity: (d_max)^2 <= sum(d)."""
        return self.d_max**2 <= self.total

    def pair_probability(self, u: int, v: int) -> float:
        """Uncapped linking probability d_u * d_v / sum(d)."""
        return float(self.d[u] * self.d[v] / self.total)


def powerlaw_degree_sequence(
    n: int, gamma: float, d_min: float, d_max: float
) -> ExpectedDegreeSequence:
    """Expected degrees from the truncated density ~ k^-gamma on [d_min, d_max].

    Assignment is deterministic: the inverse CDF is evaluated on the midpoint
    quantile grid (i + 1/2)/n, i = 0..n-1, so the sequence is reproducible and
    its moments track the continuous density. Degrees come out ascending.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if d_min <= 0 or d_max < d_min:
        raise ValueError("need 0 < d_min <= d_max")
    if d_max == d_min:
        return ExpectedDegreeSequence(np.full(n, float(d_min)))
    q = (np.arange(n) + 0.5) / n
    if abs(gamma - 1.0) < 1e-12:
        d = d_min * (d_max / d_min) ** q
    else:
        e = 1.0 - gamma
        d = (d_min**e + q * (d_max**e - d_min**e)) ** (1.0 / e)
    return ExpectedDegreeSequence(d)


def truncated_powerlaw_moments(gamma: float, a: float, b: float) -> tuple[float, float]:
    """(mean, variance) of the density ~ k^-gamma on [a, b].

    The moment integrals have logarithmic branches at gamma in {1, 2, 3};
    those are taken analytically rather than by limits of the generic form.
    """
    if a <= 0 or b < a:
        raise ValueError("need 0 < a <= b")
    if b == a:
        return float(a), 0.0

    def power_integral(e: float) -> float:
        # integral of k^e over [a, b]
        if abs(e + 1.0) < 1e-12:
            return float(np.log(b / a))
        return float((b ** (e + 1) - a ** (e + 1)) / (e + 1))

    c = power_integral(-gamma)
    m1 = power_integral(1.0 - gamma) / c
    m2 = power_integral(2.0 - gamma) / c
    return m1, m2 - m1 * m1


def dmin_for_fixed_variance(dvar: float, r: float, gamma: float) -> float:
    """Smallest expected degree d_min such that the truncated power-law
    sequence on [d_min, r*d_min] has variance dvar.

    The variance is inverted numerically (bisection against the moment
    integrals); no closed form is trusted. Raises ValueError when the support
    is too degenerate for a positive-variance solution to be resolvable.
    """
    if dvar <= 0:
        raise ValueError("dvar must be positive")
    if r <= 1:
        raise ValueError("r must exceed 1")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    _, unit_var = truncated_powerlaw_moments(gamma, 1.0, r)
    if not np.isfinite(unit_var) or unit_var <= 1e-18:
        raise ValueError("support ratio r is too close to 1: variance degenerates")

    def variance_at(a: float) -> float:
        return truncated_powerlaw_moments(gamma, a, r * a)[1]

    lo = np.sqrt(dvar / unit_var) / 4.0
    hi = lo * 16.0
    f_lo, f_hi = variance_at(lo) - dvar, variance_at(hi) - dvar
    if f_lo > 0 or f_hi < 0:
        raise ValueError("could not bracket the requested variance")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if variance_at(mid) - dvar <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Generators


def _retry_isolated(
    n: int,
    adj: list[set],
    rng: np.random.Generator,
    row_probs,
) -> None:
    """Resample the coin row of each isolated node until it gains an edge.

    ``row_probs(u)`` returns the per-partner linking probabilities of node u
    (length n, entry u ignored). Raises GraphGenerationError when a node
    exhausts the retry budget.
    """
    for u in range(n):
        if adj[u]:
            continue
        probs = row_probs(u)
        for _ in range(_ISOLATED_RETRY_LIMIT):
            coins = rng.random(n) < probs
            coins[u] = False
            hits = np.flatnonzero(coins)
            if hits.size:
                for w in hits:
                    adj[u].add(int(w))
                    adj[int(w)].add(u)
                break
        else:
            raise GraphGenerationError(
                f"node {u} remained isolated after {_ISOLATED_RETRY_LIMIT} retries"
            )


def _adj_to_graph(n, adj, cluster_of=None, self_loops=None) -> Graph:
    edges = [(u, w) for u in range(n) for w in adj[u] if u < w]
    if self_loops:
        edges.extend((u, u) for u in sorted(self_loops))
    return graph_from_edges(
        n, np.array(edges, dtype=np.int64), cluster_of, allow_self_links=bool(self_loops)
    )


def gen_er(n: int, p: float, seed=None) -> Graph:
    """Erdos-Renyi G(n, p): every unordered pair linked independently with
    probability p. Deterministic for a fixed seed."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not (0 < p <= 1):
        raise ValueError("p must be in (0, 1]")
    rng = np.random.default_rng(seed)
    adj: list[set] = [set() for _ in range(n)]
    for u in range(n - 1):
        coins = rng.random(n - u - 1) < p
        for w in np.flatnonzero(coins):
            v = u + 1 + int(w)
            adj[u].add(v)
            adj[v].add(u)
    _retry_isolated(n, adj, rng, lambda u: np.full(n, p))
    return _adj_to_graph(n, adj)


def gen_chung_lu(
    d,
    allow_self_links: bool = False,
    seed=None,
    on_invalid: str = "cap",
) -> Graph:
    """Generalized random graph: pair (u, v) linked with probability
    d_u * d_v / sum(d), independently.

    Self-pairs are skipped unless ``allow_self_links`` is set; realized
    self-links then appear in the adjacency and the graph is flagged.
    Pair probabilities exceeding 1 are capped by default ("cap"); pass
    on_invalid="error" to reject such sequences instead.
    """
    if not isinstance(d, ExpectedDegreeSequence):
        d = ExpectedDegreeSequence(np.asarray(d, dtype=np.float64))
    if on_invalid not in ("cap", "error"):
        raise ValueError("on_invalid must be 'cap' or 'error'")
    n, w, total = d.n, d.d, d.total
    if on_invalid == "error":
        top = np.sort(w)[-2:]
        worst = d.d_max**2 if allow_self_links else top[0] * top[1]
        if worst > total:
            raise ValueError(
                "edge-probability validity violated: largest pair probability "
                f"{worst / total:.4f} exceeds 1"
            )
    rng = np.random.default_rng(seed)
    adj: list[set] = [set() for _ in range(n)]
    self_loops: set[int] = set()
    for u in range(n):
        probs = np.minimum(w[u] * w[u + 1 :] / total, 1.0)
        for k in np.flatnonzero(rng.random(n - u - 1) < probs):
            v = u + 1 + int(k)
            adj[u].add(v)
            adj[v].add(u)
        if allow_self_links and rng.random() < min(w[u] * w[u] / total, 1.0):
            self_loops.add(u)

    def row_probs(u):
        probs = np.minimum(w[u] * w / total, 1.0)
        probs[u] = 0.0
        return probs

    # Self-loops keep a node non-isolated only in self-link mode.
    for u in self_loops:
        adj[u].add(u)
    _retry_isolated(n, adj, rng, row_probs)
    for u in self_loops:
        adj[u].discard(u)
    return _adj_to_graph(n, adj, self_loops=self_loops)


def gen_clustered(
    sizes: Sequence[int], p_in: float, p_out: float = 0.0, seed=None
) -> Graph:
    """Planted-partition graph: intra-cluster pairs linked with p_in,
    inter-cluster pairs with p_out. Populates 1-based cluster labels."""
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes) or not sizes:
        raise ValueError("cluster sizes must be positive")
    if not (0 <= p_out < p_in <= 1):
        raise ValueError("need p_in > p_out >= 0 and p_in <= 1")
    n = sum(sizes)
    if n < 2:
        raise ValueError("graph needs at least 2 nodes")
    cluster_of = np.repeat(np.arange(1, len(sizes) + 1), sizes)
    rng = np.random.default_rng(seed)
    adj: list[set] = [set() for _ in range(n)]
    for u in range(n - 1):
        same = cluster_of[u + 1 :] == cluster_of[u]
        probs = np.where(same, p_in, p_out)
        for k in np.flatnonzero(rng.random(n - u - 1) < probs):
            v = u + 1 + int(k)
            adj[u].add(v)
            adj[v].add(u)

    def row_probs(u):
        probs = np.where(cluster_of == cluster_of[u], p_in, p_out)
        probs[u] = 0.0
        return probs

    _retry_isolated(n, adj, rng, row_probs)
    return _adj_to_graph(n, adj, cluster_of=cluster_of)


# ---------------------------------------------------------------------------
# Structural measurement


def min_node_expansion(g: Graph) -> dict[int, Fraction]:
    """Minimum node expansion per cluster: beta_k is the worst-case fraction
    of a cluster member's neighbors that lie inside its own cluster.

    Returned values are exact rationals.
    """
    if g.cluster_of is None:
        raise ValueError("graph has no cluster labels")
    betas: dict[int, Fraction] = {}
    for v in range(g.n):
        k = int(g.cluster_of[v])
        nbrs = g.neighbors(v)
        internal = int(np.count_nonzero(g.cluster_of[nbrs] == k))
        frac = Fraction(internal, int(g.degrees[v]))
        if k not in betas or frac < betas[k]:
            betas[k] = frac
    return betas


def largest_component(g: Graph) -> Graph:
    """Restrict the graph to its largest connected component, relabeling
    nodes to 0..m-1 in original-id order.

    Sparse heavy-tailed graphs routinely carry tiny disconnected components;
    a component that starts unanimously in one color can never be flipped by
    the dynamics, so absorption-based experiments run on the giant component.
    """
    n_comp, labels = connected_components(g.csr, directed=False)
    if n_comp == 1:
        return g
    keep = labels == np.bincount(labels).argmax()
    idx = np.flatnonzero(keep)
    remap = -np.ones(g.n, dtype=np.int64)
    remap[idx] = np.arange(idx.size)
    edges = g.edge_array()
    mask = keep[edges[:, 0]]  # components are closed: one endpoint decides
    kept = edges[mask]
    cluster_of = g.cluster_of[idx] if g.cluster_of is not None else None
    return graph_from_edges(
        int(idx.size),
        np.stack([remap[kept[:, 0]], remap[kept[:, 1]]], axis=1),
        cluster_of,
        allow_self_links=g.has_self_links,
    )


# ---------------------------------------------------------------------------
# Persistence

_FORMAT_DOC = """Edge-list text format:
    n=<count> k=<clusters>      header (k=0 when unclustered)
    c <node> <cluster>          one per node when k > 0
    e <u> <v>                   one per edge, u < v, 0-based ids
Lines are LF-terminated. Symmetry is implicit; self-loops are rejected.
"""


def _serialize(g: Graph) -> str:
    if g.has_self_links:
        raise ValueError("graphs with self-links cannot be serialized")
    lines = [f"n={g.n} k={g.num_clusters}"]
    if g.cluster_of is not None:
        lines.extend(f"c {v} {int(g.cluster_of[v])}" for v in range(g.n))
    lines.extend(f"e {u} {v}" for u, v in g.edge_array())
    return "\n".join(lines) + "\n"


def save_graph(g: Graph, path) -> None:
    """Write the graph in the documented edge-list format."""
    with open(path, "w", newline="\n") as fh:
        fh.write(_serialize(g))


def load_graph(path) -> Graph:
    """Read an edge-list file, validating structure; errors name the line."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise GraphFormatError("line 1: empty file")
    header = lines[0].split()
    try:
        if len(header) != 2:
            raise ValueError
        n = int(header[0].removeprefix("n="))
        k = int(header[1].removeprefix("k="))
        if header[0][:2] != "n=" or header[1][:2] != "k=":
            raise ValueError
    except ValueError:
        raise GraphFormatError(f"line 1: malformed header {lines[0]!r}") from None
    cluster_of = np.zeros(n, dtype=np.int64) if k > 0 else None
    edges = []
    seen = set()
    for idx, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "c" and len(parts) == 3:
            try:
                v, c = int(parts[1]), int(parts[2])
            except ValueError:
                raise GraphFormatError(f"line {idx}: malformed cluster line") from None
            if cluster_of is None or not (0 <= v < n) or not (1 <= c <= k):
                raise GraphFormatError(f"line {idx}: cluster line out of range")
            cluster_of[v] = c
        elif parts[0] == "e" and len(parts) == 3:
            try:
                u, v = int(parts[1]), int(parts[2])
            except ValueError:
                raise GraphFormatError(f"line {idx}: malformed edge line") from None
            if u == v:
                raise GraphFormatError(f"line {idx}: self-loop {u}")
            if not (u < v):
                raise GraphFormatError(f"line {idx}: edge must satisfy u < v")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"line {idx}: edge endpoint out of range")
            if (u, v) in seen:
                raise GraphFormatError(f"line {idx}: duplicate edge {u} {v}")
            seen.add((u, v))
            edges.append((u, v))
        else:
            raise GraphFormatError(f"line {idx}: unrecognized line {line!r}")
    if cluster_of is not None and (cluster_of == 0).any():
        missing = int(np.flatnonzero(cluster_of == 0)[0])
        raise GraphFormatError(f"node {missing} has no cluster line")
    try:
        return graph_from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2), cluster_of)
    except ValueError as exc:
        raise GraphFormatError(str(exc)) from None
