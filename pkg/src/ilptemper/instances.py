"""Benchmark instance generators: random graphs, MVC, MIS and set cover.

All generators are pure functions of their arguments and a numpy
``Generator`` (or an integer seed).
"""

from dataclasses import dataclass

import numpy as np

from .core import build_instance
from .errors import ConfigInvalid, DensityTooLow, InvalidAffinity


@dataclass(frozen=True)
class Graph:
    n_nodes: int
    edges: np.ndarray  # (E, 2) int64, u < v, sorted, unique

    @property
    def n_edges(self):
        return int(self.edges.shape[0])

    def degrees(self):
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)


@dataclass(frozen=True)
class GraphSpec:
    model: str  # "ba" or "er"
    n_nodes: int
    affinity: int = 0
    edge_prob: float = 0.0
    seed: int = 0

    def build(self, rng=None):
        rng = _rng(self.seed if rng is None else rng)
        if self.model == "ba":
            return gen_ba_graph(self.n_nodes, self.affinity, rng)
        if self.model == "er":
            return gen_er_graph(self.n_nodes, self.edge_prob, rng)
        raise ConfigInvalid(f"unknown graph model {self.model!r}")


def _rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def make_graph(n_nodes, pairs):
    """Normalize an edge list: drop self-loops and duplicates, orient u < v."""
    e = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    e = np.unique(e, axis=0) if e.size else np.zeros((0, 2), dtype=np.int64)
    if e.size and (e.min() < 0 or e.max() >= n_nodes):
        raise ConfigInvalid("edge endpoint outside the node range")
    return Graph(int(n_nodes), e)


def gen_ba_graph(n, affinity, rng=None):
    """Barabási–Albert preferential attachment.

    The first ``affinity`` nodes start edgeless; every later node links to
    ``affinity`` distinct earlier nodes drawn proportionally to degree
    (uniformly while all degrees are zero), giving exactly
    ``affinity * (n - affinity)`` edges.
    """
    if not 1 <= affinity < n:
        raise InvalidAffinity(f"need 1 <= affinity < n, got affinity={affinity}, n={n}")
    rng = _rng(rng)
    edges = np.empty((affinity * (n - affinity), 2), dtype=np.int64)
    # every endpoint of every edge, so uniform draws from it are degree-proportional
    endpoints = np.empty(2 * edges.shape[0], dtype=np.int64)
    n_end = 0
    k = 0
    for v in range(affinity, n):
        if n_end == 0:
            targets = rng.choice(v, size=affinity, replace=False)
        else:
            chosen = set()
            while len(chosen) < affinity:
                draws = endpoints[rng.integers(0, n_end, size=affinity - len(chosen))]
                for d in draws:
                    if len(chosen) < affinity:
                        chosen.add(int(d))
            targets = np.fromiter(chosen, dtype=np.int64, count=affinity)
        targets.sort()
        edges[k:k + affinity, 0] = targets
        edges[k:k + affinity, 1] = v
        endpoints[n_end:n_end + affinity] = targets
        endpoints[n_end + affinity:n_end + 2 * affinity] = v
        n_end += 2 * affinity
        k += affinity
    return make_graph(n, edges)


def gen_er_graph(n, p, rng=None):
    """Erdős–Rényi G(n, p): each unordered pair independently with probability p."""
    if not 0 <= p <= 1:
        raise ConfigInvalid(f"edge probability must lie in [0, 1], got {p}")
    rng = _rng(rng)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return Graph(int(n), np.column_stack((iu[keep], ju[keep])).astype(np.int64))


def er_probability(n, avg_degree):
    """Edge probability giving the requested expected degree."""
    return min(1.0, avg_degree / (n - 1)) if n > 1 else 0.0


def gen_mvc(g, name=None, metadata=None):
    """Minimum vertex cover: min sum x  s.t.  -x_u - x_v <= -1 per edge."""
    E = g.n_edges
    rows = np.repeat(np.arange(E, dtype=np.int64), 2)
    cols = g.edges.reshape(-1)
    vals = np.full(2 * E, -1.0)
    return build_instance(g.n_nodes, E, np.ones(g.n_nodes), (rows, cols, vals),
                          np.full(E, -1.0), name=name or f"mvc-{g.n_nodes}",
                          metadata=metadata)


def gen_mis(g, name=None, metadata=None):
    """Maximum independent set: min -sum x  s.t.  x_u + x_v <= 1 per edge."""
    E = g.n_edges
    rows = np.repeat(np.arange(E, dtype=np.int64), 2)
    cols = g.edges.reshape(-1)
    vals = np.ones(2 * E)
    return build_instance(g.n_nodes, E, -np.ones(g.n_nodes), (rows, cols, vals),
                          np.ones(E), name=name or f"mis-{g.n_nodes}", metadata=metadata)


@dataclass(frozen=True)
class ScSpec:
    n_vars: int
    n_rows: int
    density: float
    seed: int = 0

    @property
    def per_row(self):
        return int(round(self.density * self.n_vars))


def gen_sc(spec, rng=None, name=None):
    """Set cover: each element is covered by ``round(density * n_vars)``
    distinct sets chosen uniformly; rows are ``-sum x_i <= -1``."""
    if not 0 < spec.density <= 1:
        raise DensityTooLow(f"density must lie in (0, 1], got {spec.density}")
    k = spec.per_row
    if k < 1:
        raise DensityTooLow(f"density {spec.density} covers no column of {spec.n_vars}")
    rng = _rng(spec.seed if rng is None else rng)
    cols = np.empty((spec.n_rows, k), dtype=np.int64)
    for r in range(spec.n_rows):
        cols[r] = rng.choice(spec.n_vars, size=k, replace=False)
    rows = np.repeat(np.arange(spec.n_rows, dtype=np.int64), k)
    meta = {"generator": "sc", "n_vars": str(spec.n_vars), "n_rows": str(spec.n_rows),
            "density": repr(spec.density), "seed": str(spec.seed)}
    return build_instance(spec.n_vars, spec.n_rows, np.ones(spec.n_vars),
                          (rows, cols.reshape(-1), np.full(rows.size, -1.0)),
                          np.full(spec.n_rows, -1.0),
                          name=name or f"sc-{spec.n_vars}", metadata=meta)


# name -> (problem, keyword arguments of generate())
PRESETS = {
    "mvc1000": ("mvc", {"n": 1000, "affinity": 70}),
    "mvc2000": ("mvc", {"n": 2000, "affinity": 70}),
    "mis1500": ("mis", {"n": 1500, "avg_degree": 5.0}),
    "mis3000": ("mis", {"n": 3000, "avg_degree": 5.0}),
    "sc2000": ("sc", {"n": 2000, "rows": 5000, "density": 0.05}),
    "sc4000": ("sc", {"n": 4000, "rows": 5000, "density": 0.05}),
    # shifted distributions
    "mvc1000-ood": ("mvc", {"n": 1000, "affinity": 5}),
    "mvc2000-ood": ("mvc", {"n": 2000, "affinity": 5}),
    "mis1500-ood": ("mis", {"n": 1500, "affinity": 3}),
    "mis3000-ood": ("mis", {"n": 3000, "affinity": 3}),
    "sc2000-ood": ("sc", {"n": 2000, "rows": 5000, "density": 0.5}),
    "sc4000-ood": ("sc", {"n": 4000, "rows": 5000, "density": 0.5}),
}


def generate(problem, n, seed=0, affinity=None, p=None, avg_degree=None,
             rows=None, density=None, name=None):
    """One-stop generator used by the command line and experiment specs.

    Graph problems use a BA graph when ``affinity`` is given and an ER graph
    otherwise (``p`` or ``avg_degree``).
    """
    rng = np.random.default_rng(seed)
    if problem in ("mvc", "mis"):
        meta = {"generator": problem, "n": str(n), "seed": str(seed)}
        if affinity is not None:
            g = gen_ba_graph(n, affinity, rng)
            meta.update(graph="ba", affinity=str(affinity))
        else:
            if p is None:
                if avg_degree is None:
                    raise ConfigInvalid("ER graphs need p or avg_degree")
                p = er_probability(n, avg_degree)
            g = gen_er_graph(n, p, rng)
            meta.update(graph="er", p=repr(p))
        build = gen_mvc if problem == "mvc" else gen_mis
        return build(g, name=name or f"{problem}-{n}-s{seed}", metadata=meta)
    if problem == "sc":
        if rows is None or density is None:
            raise ConfigInvalid("set cover needs rows and density")
        return gen_sc(ScSpec(n, rows, density, seed), rng, name=name or f"sc-{n}-s{seed}")
    raise ConfigInvalid(f"unknown problem {problem!r}")


def generate_preset(preset, seed=0, name=None):
    try:
        problem, kw = PRESETS[preset]
    except KeyError:
        raise ConfigInvalid(f"unknown preset {preset!r}; have {sorted(PRESETS)}") from None
    return generate(problem, seed=seed, name=name or f"{preset}-s{seed}", **kw)
