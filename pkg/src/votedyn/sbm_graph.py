"""Two-community stochastic block model graphs and degree statistics.

Vertices 0..n-1 form community 1 and n..2n-1 form community 2. Each
intra-community pair is an edge independently with probability p, each
cross-community pair with probability q, where 0 <= q <= p <= 1.

Randomness comes from numpy's Philox generator (counter based, 64-bit words)
keyed directly by the seed, so identical seeds give identical graphs on every
platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

__all__ = [
    "Graph",
    "DegreeStats",
    "generate_sbm",
    "degree_stats",
    "connectivity_report",
    "deg_in_set",
    "graph_from_edges",
    "save_graph",
    "load_graph",
]

# pair-independent sampling below this community size, geometric skipping above
DENSE_LIMIT = 2000


@dataclass
class Graph:
    """Immutable adjacency in compressed form: sorted neighbor lists per vertex.

    Attributes
    ----------
    n : int
        Vertices per community; the graph has 2n vertices.
    offsets : ndarray of int64, shape (2n+1,)
        Neighbor-list boundaries; neighbors of v are
        ``neighbors[offsets[v]:offsets[v+1]]``, sorted ascending.
    neighbors : ndarray of int64
        Concatenated neighbor lists.
    p, q : float
        Edge probabilities recorded at generation time.
    seed : int
        Generation seed recorded for serialization.
    """

    n: int
    offsets: np.ndarray
    neighbors: np.ndarray
    p: float
    q: float
    seed: int = 0
    _degrees: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.offsets.setflags(write=False)
        self.neighbors.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return 2 * self.n

    @property
    def num_edges(self) -> int:
        return int(self.neighbors.size) // 2

    @property
    def degrees(self) -> np.ndarray:
        if self._degrees is None:
            object.__setattr__(self, "_degrees", np.diff(self.offsets))
        return self._degrees

    def neighbors_of(self, v: int) -> np.ndarray:
        return self.neighbors[self.offsets[v] : self.offsets[v + 1]]

    def community(self, v: int) -> int:
        return 1 if v < self.n else 2


@dataclass
class DegreeStats:
    """Degree summary; normalized_dev is the empirical constant in front of
    sqrt(n p log n) for the worst deviation of deg(v) from n(p+q)."""

    min_deg: int
    max_deg: int
    mean_deg: float
    max_abs_dev: float
    normalized_dev: float


def _unrank_intra(k: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    # invert the lexicographic pair index: pairs (i,j), i<j<size, index
    # base(i) = i(2*size-1-i)/2, then j = i+1+(k-base(i))
    kk = k.astype(np.float64)
    b = 2 * size - 1
    i = np.floor((b - np.sqrt(b * b - 8.0 * kk)) / 2.0).astype(np.int64)
    # float sqrt can land one off at block boundaries; fix with integer math
    base = i * (2 * size - 1 - i) // 2
    too_far = base > k
    i[too_far] -= 1
    base_next = (i + 1) * (2 * size - 2 - i) // 2
    behind = base_next <= k
    i[behind] += 1
    base = i * (2 * size - 1 - i) // 2
    j = k - base + i + 1
    return i, j


def _pair_indices_dense(rng: np.random.Generator, m: int, prob: float) -> np.ndarray:
    if m == 0 or prob <= 0.0:
        return np.empty(0, dtype=np.int64)
    return np.nonzero(rng.random(m) < prob)[0].astype(np.int64)


def _pair_indices_geometric(rng: np.random.Generator, m: int, prob: float) -> np.ndarray:
    if m == 0 or prob <= 0.0:
        return np.empty(0, dtype=np.int64)
    if prob >= 1.0:
        return np.arange(m, dtype=np.int64)
    log_skip = math.log1p(-prob)
    chunks = []
    pos = -1
    while pos < m:
        want = int((m - pos) * prob * 1.1) + 64
        u = rng.random(want)
        gaps = np.floor(np.log1p(-u) / log_skip).astype(np.int64) + 1
        hits = pos + np.cumsum(gaps)
        pos = int(hits[-1])
        chunks.append(hits[hits < m])
    return np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)


def _build_graph(n: int, src_u: np.ndarray, src_v: np.ndarray, p: float, q: float, seed: int) -> Graph:
    nv = 2 * n
    src = np.concatenate([src_u, src_v])
    dst = np.concatenate([src_v, src_u])
    order = np.lexsort((dst, src))
    src = src[order]
    dst = dst[order]
    offsets = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=nv), out=offsets[1:])
    return Graph(n=n, offsets=offsets, neighbors=dst.astype(np.int64), p=p, q=q, seed=seed)


def generate_sbm(n: int, p: float, q: float, seed: int, method: str = "auto") -> Graph:
    """Sample G(2n, p, q) deterministically from the seed.

    Blocks are drawn in a fixed order (community 1 pairs, community 2 pairs,
    cross pairs) from one Philox stream. `method` selects the sampling path:
    "dense" draws a uniform per pair, "sparse" uses geometric skipping, and
    "auto" picks dense for n <= 2000. Both paths sample the same distribution
    (each path consumes the stream differently, so graphs differ per seed).
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if q > p:
        raise ValueError("q must not exceed p")
    if not (0.0 <= q and p <= 1.0):
        raise ValueError("edge probabilities must satisfy 0 <= q <= p <= 1")
    if method not in ("auto", "dense", "sparse"):
        raise ValueError(f"unknown generation method: {method!r}")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "sparse"
    draw = _pair_indices_dense if method == "dense" else _pair_indices_geometric

    rng = np.random.Generator(np.random.Philox(key=seed))
    m_intra = n * (n - 1) // 2
    us, vs = [], []

    for base in (0, n):
        k = draw(rng, m_intra, p)
        i, j = _unrank_intra(k, n)
        us.append(i + base)
        vs.append(j + base)

    k = draw(rng, n * n, q)
    us.append(k // n)
    vs.append(n + k % n)

    return _build_graph(n, np.concatenate(us), np.concatenate(vs), p, q, seed)


def degree_stats(g: Graph) -> DegreeStats:
    """Exact scan of all degrees against the target n(p+q)."""
    deg = g.degrees
    expect = g.n * (g.p + g.q)
    max_abs_dev = float(np.max(np.abs(deg - expect))) if deg.size else 0.0
    denom = math.sqrt(g.n * g.p * math.log(g.n)) if g.n > 1 and g.p > 0 else 0.0
    if denom > 0:
        normalized = max_abs_dev / denom
    else:
        normalized = 0.0 if max_abs_dev == 0 else math.inf
    return DegreeStats(
        min_deg=int(deg.min()) if deg.size else 0,
        max_deg=int(deg.max()) if deg.size else 0,
        mean_deg=float(deg.mean()) if deg.size else 0.0,
        max_abs_dev=max_abs_dev,
        normalized_dev=normalized,
    )


def _neighbor_block(g: Graph, verts: np.ndarray) -> np.ndarray:
    # gather the concatenated neighbor lists of `verts` without a python loop
    starts = g.offsets[verts]
    counts = g.offsets[verts + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    out_base = np.concatenate(([0], np.cumsum(counts)[:-1]))
    idx = np.arange(total) - np.repeat(out_base, counts) + np.repeat(starts, counts)
    return g.neighbors[idx]


def connectivity_report(g: Graph) -> dict:
    """BFS sweep: {'connected': bool, 'bipartite': bool} via 2-coloring."""
    nv = g.num_vertices
    dist = np.full(nv, -1, dtype=np.int64)
    components = 0
    for start in range(nv):
        if dist[start] >= 0:
            continue
        components += 1
        dist[start] = 0
        frontier = np.array([start], dtype=np.int64)
        level = 0
        while frontier.size:
            level += 1
            nbrs = _neighbor_block(g, frontier)
            nbrs = np.unique(nbrs)
            nbrs = nbrs[dist[nbrs] < 0]
            dist[nbrs] = level
            frontier = nbrs
    color = dist % 2
    src = np.repeat(np.arange(nv), g.degrees)
    bipartite = not bool(np.any(color[src] == color[g.neighbors]))
    return {"connected": components == 1, "bipartite": bipartite}


def deg_in_set(g: Graph, v: int, s) -> int:
    """Count neighbors of v holding opinion 1; s is an OpinionState or a
    boolean membership mask over the 2n vertices."""
    member = getattr(s, "member", s)
    return int(np.count_nonzero(member[g.neighbors_of(v)]))


def graph_from_edges(n: int, edges, p: float = 0.0, q: float = 0.0, seed: int = 0) -> Graph:
    """Build a validated Graph from an iterable of undirected (u, v) pairs."""
    nv = 2 * n
    arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if arr.size:
        if arr.min() < 0 or arr.max() >= nv:
            raise ValueError("edge endpoint out of range")
        if np.any(arr[:, 0] == arr[:, 1]):
            raise ValueError("self loops are not allowed")
        canon = np.sort(arr, axis=1)
        keys = canon[:, 0] * nv + canon[:, 1]
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate edges are not allowed")
    return _build_graph(n, arr[:, 0], arr[:, 1], p, q, seed)


def save_graph(g: Graph, dest) -> None:
    """Edge-list text format: header `sbm n p q seed`, one `u v` line per
    undirected edge with u < v. dest is a path or an open text handle."""
    if hasattr(dest, "write"):
        _write_graph(g, dest)
        return
    with open(dest, "w", encoding="ascii") as fh:
        _write_graph(g, fh)


def _write_graph(g: Graph, fh) -> None:
    fh.write(f"sbm {g.n} {g.p!r} {g.q!r} {g.seed}\n")
    src = np.repeat(np.arange(g.num_vertices), g.degrees)
    keep = src < g.neighbors
    for u, v in zip(src[keep], g.neighbors[keep]):
        fh.write(f"{u} {v}\n")


def load_graph(source) -> Graph:
    """Parse and validate the edge-list format written by save_graph.
    source is a path or an open text handle."""
    if hasattr(source, "read"):
        return _read_graph(source)
    with open(source, "r", encoding="ascii") as fh:
        return _read_graph(fh)


def _read_graph(fh) -> Graph:
    header = fh.readline().split()
    if len(header) != 5 or header[0] != "sbm":
        raise ValueError("bad header: expected `sbm n p q seed`")
    n = int(header[1])
    p = float(header[2])
    q = float(header[3])
    seed = int(header[4])
    if n < 1 or not (0.0 <= q <= p <= 1.0):
        raise ValueError("header violates 0 <= q <= p <= 1, n >= 1")
    edges = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        a, b = line.split()
        edges.append((int(a), int(b)))
    return graph_from_edges(n, edges, p=p, q=q, seed=seed)
