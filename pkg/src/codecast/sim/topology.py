"""Network topologies: random regular graphs, delay models, a text file format.

File format: first line ``n``, then one ``u v delay_ms`` line per undirected
edge.  Blank lines and ``#`` comments are ignored.
"""

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from ..errors import ConfigError


@dataclass
class Topology:
    n: int
    edges: list  # [(u, v)] with u < v, sorted
    delays: list = None  # one-way latency in ms, parallel to edges
    _adj: dict = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.delays is None:
            self.delays = [0.0] * len(self.edges)
        self.validate()

    def validate(self):
        if self.n < 1:
            raise ConfigError("topology needs at least one node")
        if len(self.delays) != len(self.edges):
            raise ConfigError("topology: one delay per edge required")
        seen = set()
        for (u, v), d in zip(self.edges, self.delays):
            if u == v:
                raise ConfigError(f"topology: self-loop at {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ConfigError(f"topology: edge ({u}, {v}) out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ConfigError(f"topology: parallel edge {key}")
            seen.add(key)
            if not (d >= 0 and math.isfinite(d)):
                raise ConfigError(f"topology: bad delay {d} on {key}")
        if not self.is_connected():
            raise ConfigError("topology is not connected")

    def adjacency(self):
        """node -> {neighbor: delay in seconds}."""
        if self._adj is None:
            adj = {i: {} for i in range(self.n)}
            for (u, v), d in zip(self.edges, self.delays):
                adj[u][v] = d / 1000.0
                adj[v][u] = d / 1000.0
            self._adj = adj
        return self._adj

    def degree(self, node):
        return len(self.adjacency()[node])

    def is_connected(self):
        adj = {i: [] for i in range(self.n)}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        stack = [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    def with_delays(self, delays):
        return Topology(self.n, list(self.edges), list(delays))

    def add_hub(self, count, delay_ms=0.0):
        """Append ``count`` nodes adjacent to every existing node."""
        edges = list(self.edges)
        delays = list(self.delays)
        base = self.n
        for a in range(count):
            for v in range(base):
                edges.append((v, base + a))
                delays.append(delay_ms)
        return Topology(base + count, edges, delays)

    def to_text(self):
        lines = [str(self.n)]
        lines += [f"{u} {v} {d!r}" for (u, v), d in zip(self.edges, self.delays)]
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_text())


def parse_topology(text):
    rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows:
        raise ConfigError("empty topology file")
    try:
        n = int(rows[0])
        edges, delays = [], []
        for r in rows[1:]:
            u, v, d = r.split()
            u, v = int(u), int(v)
            edges.append((min(u, v), max(u, v)))
            delays.append(float(d))
    except ValueError as e:
        raise ConfigError(f"malformed topology file: {e}") from None
    return Topology(n, edges, delays)


def load_topology(path):
    with open(path) as f:
        return parse_topology(f.read())


def random_regular_topology(n, degree, seed=0, delay_ms=0.0, max_tries=100):
    """Connected random regular graph; resamples until connected."""
    if degree < 1 or degree >= n or (n * degree) % 2:
        raise ConfigError(f"no {degree}-regular graph on {n} nodes (need n*degree even, degree < n)")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        g = nx.random_regular_graph(degree, n, seed=int(rng.integers(2**31)))
        if nx.is_connected(g):
            edges = sorted((min(u, v), max(u, v)) for u, v in g.edges())
            return Topology(n, edges, [delay_ms] * len(edges))
    raise ConfigError(f"could not draw a connected {degree}-regular graph on {n} nodes")


def lognormal_delays(topology, mu=math.log(70.0), sigma=0.5, seed=0):
    """Independent log-normal one-way delays (ms) per edge."""
    rng = np.random.default_rng(seed)
    if sigma == 0:
        # exp(log(70)) is 70.00000000000003; keep delays at nanosecond resolution
        delays = [round(math.exp(mu), 9)] * len(topology.edges)
    else:
        delays = rng.lognormal(mu, sigma, size=len(topology.edges)).tolist()
    return topology.with_delays(delays)
