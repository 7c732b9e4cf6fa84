"""Second-order biased random walks over each layer.

A walk of length ``l`` visits ``l + 1`` nodes.  The step distribution from
``cur`` given the previous node ``prev`` multiplies each edge weight
w(cur, x) by a bias factor:

* ``1/p``  if x == prev          (return),
* ``1``    if x is adjacent to prev   (stay close),
* ``1/q``  otherwise             (move outward).

With p = q = 1 this reduces to weight-proportional first-order walking.
Sampling uses alias tables for O(1) categorical draws; tables are built
lazily per (prev, cur) pair and cached up to a size budget, since full
precomputation costs O(sum of squared degrees).

Every walk draws from its own random stream keyed by (seed, layer, start
node, repetition), so any execution order -- including parallel workers --
produces the same corpus as a sequential run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .graph import Layer, MultiLayerNetwork

DEFAULT_ALIAS_CACHE = 2_000_000  # cached alias-table entries per walker


@dataclass(frozen=True)
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 80
    p: float = 1.0
    q: float = 1.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be >= 1")
        if self.walk_length < 1:
            raise ValueError("walk_length must be >= 1")
        if not (self.p > 0 and self.q > 0):
            raise ValueError("p and q must be positive")


class AliasTable:
    """Constant-time sampling from a categorical distribution.

    Standard two-column construction: outcome k is drawn by picking a column
    uniformly and then either keeping it (probability ``prob[k]``) or taking
    its alias.
    """

    __slots__ = ("prob", "alias", "n")

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("weights must be a nonempty 1-D array")
        if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise ValueError("weights must be finite, nonnegative, not all zero")
        n = len(w)
        scaled = w * (n / w.sum())
        prob = np.empty(n, dtype=np.float64)
        alias = np.zeros(n, dtype=np.int64)
        small = [k for k in range(n) if scaled[k] < 1.0]
        large = [k for k in range(n) if scaled[k] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = scaled[g] - (1.0 - scaled[s])
            (small if scaled[g] < 1.0 else large).append(g)
        for k in large:
            prob[k] = 1.0
        for k in small:
            prob[k] = 1.0  # numerical leftovers
        self.prob = prob
        self.alias = alias
        self.n = n

    def sample(self, gen: np.random.Generator) -> int:
        k = int(gen.integers(self.n))
        return k if gen.random() < self.prob[k] else int(self.alias[k])

    def sample_many(self, gen: np.random.Generator, size) -> np.ndarray:
        k = gen.integers(self.n, size=size)
        keep = gen.random(size=size) < self.prob[k]
        return np.where(keep, k, self.alias[k])

    def outcome_probabilities(self) -> np.ndarray:
        """Exact distribution the table encodes (for verification)."""
        out = self.prob.copy()
        for k in range(self.n):
            if self.prob[k] < 1.0:
                out[self.alias[k]] += 1.0 - self.prob[k]
        return out / self.n


def transition_weights(layer: Layer, prev: int, cur: int,
                       p: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Neighbors of ``cur`` and their unnormalized second-order weights."""
    nbrs, ws = layer.neighbors(cur)
    if len(nbrs) == 0:
        raise ValueError(f"node {cur} is isolated in layer {layer.name!r}")
    prev_nbrs, _ = layer.neighbors(prev)
    adjacent = np.isin(nbrs, prev_nbrs)
    factor = np.where(nbrs == prev, 1.0 / p, np.where(adjacent, 1.0, 1.0 / q))
    return nbrs, ws * factor


def build_transition(layer: Layer, prev: int, cur: int, config: WalkConfig) -> AliasTable:
    """Alias table over ``cur``'s neighbors (same order as
    ``layer.neighbors(cur)``) with the second-order bias applied."""
    _, weights = transition_weights(layer, prev, cur, config.p, config.q)
    return AliasTable(weights)


class BiasedWalker:
    """Walk generator for one layer with lazy alias-table caching."""

    def __init__(self, layer: Layer, p: float = 1.0, q: float = 1.0,
                 cache_entries: int = DEFAULT_ALIAS_CACHE):
        self.layer = layer
        self.p = p
        self.q = q
        self._first: dict[int, AliasTable] = {}
        self._second: dict[tuple[int, int], AliasTable] = {}
        self._budget = cache_entries

    def _first_table(self, u: int) -> AliasTable:
        tbl = self._first.get(u)
        if tbl is None:
            _, ws = self.layer.neighbors(u)
            tbl = AliasTable(ws)
            self._first[u] = tbl
        return tbl

    def _second_table(self, prev: int, cur: int) -> AliasTable:
        key = (prev, cur)
        tbl = self._second.get(key)
        if tbl is None:
            _, weights = transition_weights(self.layer, prev, cur, self.p, self.q)
            tbl = AliasTable(weights)
            if self._budget > 0:
                self._second[key] = tbl
                self._budget -= tbl.n
        return tbl

    def walk(self, start: int, length: int, gen: np.random.Generator) -> np.ndarray:
        """One walk of ``length`` steps from ``start``; isolated starts give
        the singleton walk [start]."""
        nbrs, _ = self.layer.neighbors(start)
        if len(nbrs) == 0:
            return np.array([start], dtype=np.int64)
        out = np.empty(length + 1, dtype=np.int64)
        out[0] = start
        out[1] = nbrs[self._first_table(start).sample(gen)]
        for t in range(2, length + 1):
            prev, cur = out[t - 2], out[t - 1]
            cur_nbrs, _ = self.layer.neighbors(cur)
            out[t] = cur_nbrs[self._second_table(int(prev), int(cur)).sample(gen)]
        return out


@dataclass
class WalkCorpus:
    """Sampled walks per layer; ``walks[i]`` belongs to layer i."""

    walks: list[list[np.ndarray]]

    @property
    def n_layers(self) -> int:
        return len(self.walks)

    def layer_walks(self, layer_id: int) -> list[np.ndarray]:
        return self.walks[layer_id]


def _layer_walks(layer: Layer, config: WalkConfig) -> list[np.ndarray]:
    walker = BiasedWalker(layer, config.p, config.q)
    starts = layer.node_ids
    walks_by_key: dict[tuple[int, int], np.ndarray] = {}

    def run(args):
        rep, u = args
        gen = rng.stream(config.seed, rng.WALK, layer.layer_id, int(u), rep)
        walks_by_key[(rep, int(u))] = walker.walk(int(u), config.walk_length, gen)

    jobs = []
    orders = []
    for rep in range(config.walks_per_node):
        order_gen = rng.stream(config.seed, rng.WALK_ORDER, layer.layer_id, rep)
        order = starts[order_gen.permutation(len(starts))] if len(starts) else starts
        orders.append(order)
        jobs.extend((rep, int(u)) for u in order)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(run, jobs))
    else:
        for job in jobs:
            run(job)

    # corpus order follows the per-repetition visitation order
    out = []
    for rep in range(config.walks_per_node):
        for u in orders[rep]:
            out.append(walks_by_key[(rep, int(u))])
    return out


def simulate_walks(network: MultiLayerNetwork, config: WalkConfig) -> WalkCorpus:
    """Phase one: ``walks_per_node`` walks from every node of every layer.

    Start-node visitation order is shuffled per repetition; the corpus is a
    pure function of (seed, network, config) regardless of worker count.
    """
    return WalkCorpus([_layer_walks(layer, config) for layer in network.layers])
