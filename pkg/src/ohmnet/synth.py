"""Synthetic multi-layer benchmark with planted communities and a known
hierarchy, so comparative claims are testable at desk scale.

Community assignments are generated top-down along the hierarchy: the root
draws an assignment for the shared node universe and every child re-randomizes
a ``divergence`` fraction of it.  Sibling layers therefore agree on most
nodes, and agreement decays with hierarchy distance -- exactly the structure
the coupled trainer and the transfer weighting are meant to exploit.  Each
layer is a planted-partition graph on its leaf's assignment, and the labels
name each node's community per layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .graph import Hierarchy, HierarchyElement, Layer, MultiLayerNetwork, NameIndex
from .io import LabelSet


@dataclass(frozen=True)
class SynthConfig:
    nodes_per_layer: int = 200
    layers: int = 4
    hierarchy_depth: int = 2
    communities: int = 4
    p_in: float = 0.1
    p_out: float = 0.01
    divergence: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.nodes_per_layer < 2:
            raise ValueError("nodes_per_layer must be >= 2")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.hierarchy_depth < 1:
            raise ValueError("hierarchy_depth must be >= 1")
        if self.communities < 2:
            raise ValueError("communities must be >= 2")
        if not (0.0 <= self.p_out < self.p_in <= 1.0):
            raise ValueError("need 0 <= p_out < p_in <= 1")
        if not (0.0 <= self.divergence <= 1.0):
            raise ValueError("divergence must be in [0, 1]")


def _branching(config: SynthConfig) -> int:
    """Balanced tree branching factor b with b**depth == layers."""
    b = round(config.layers ** (1.0 / config.hierarchy_depth))
    for candidate in (b - 1, b, b + 1):
        if candidate >= 1 and candidate ** config.hierarchy_depth == config.layers:
            if candidate == 1 and config.hierarchy_depth > 1:
                break
            return candidate
    raise ValueError(
        f"cannot build a balanced depth-{config.hierarchy_depth} hierarchy "
        f"with {config.layers} leaves (need layers = b ** depth)")


def _build_hierarchy(config: SynthConfig) -> Hierarchy:
    b = _branching(config)
    parents: list[int | None] = [None]
    names = ["root"]
    level = [0]
    for depth in range(1, config.hierarchy_depth + 1):
        nxt = []
        for parent in level:
            for _ in range(b):
                idx = len(parents)
                parents.append(parent)
                names.append("")
                nxt.append(idx)
        level = nxt
    # leaves are the last level, named after their layers
    for j, idx in enumerate(level):
        names[idx] = f"layer{j}"
    internal_counter = 0
    for idx in range(len(parents)):
        if not names[idx]:
            names[idx] = f"group{internal_counter}"
            internal_counter += 1
    children: dict[int, list[int]] = {i: [] for i in range(len(parents))}
    for i, p in enumerate(parents):
        if p is not None:
            children[p].append(i)
    bindings = {idx: j for j, idx in enumerate(level)}
    elements = [HierarchyElement(names[i], parents[i], tuple(sorted(children[i])),
                                 bindings.get(i)) for i in range(len(parents))]
    return Hierarchy(elements)


def _mutate(assign: np.ndarray, fraction: float, communities: int,
            gen: np.random.Generator) -> np.ndarray:
    """Re-randomize a fixed fraction of the assignment (new draws may repeat
    the old community)."""
    out = assign.copy()
    n_flip = int(round(fraction * len(assign)))
    if n_flip:
        which = gen.choice(len(assign), size=n_flip, replace=False)
        out[which] = gen.integers(0, communities, size=n_flip)
    return out


def _layer_edges(assign: np.ndarray, p_in: float, p_out: float,
                 gen: np.random.Generator) -> dict[tuple[int, int], float]:
    n = len(assign)
    same = assign[:, None] == assign[None, :]
    prob = np.where(same, p_in, p_out)
    draw = gen.random((n, n))
    hit = np.triu(draw < prob, k=1)
    us, vs = np.nonzero(hit)
    edges = {(int(u), int(v)): 1.0 for u, v in zip(us, vs)}
    # keep every node connected so edge-list round-trips lose nothing:
    # an isolated node gets one edge to a random same-community partner
    degree = np.zeros(n, dtype=np.int64)
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1
    for u in np.nonzero(degree == 0)[0]:
        mates = np.nonzero(assign == assign[u])[0]
        mates = mates[mates != u]
        pool = mates if len(mates) else np.array([x for x in range(n) if x != u])
        v = int(pool[gen.integers(len(pool))])
        key = (u, v) if u < v else (v, u)
        if key not in edges:
            edges[key] = 1.0
            degree[u] += 1
            degree[v] += 1
    return edges


def generate(config: SynthConfig) -> tuple[MultiLayerNetwork, Hierarchy, LabelSet]:
    """Benchmark instance: network, hierarchy, and community labels.

    Deterministic per seed; every layer spans the full node universe.
    """
    hierarchy = _build_hierarchy(config)
    n = config.nodes_per_layer
    width = max(3, len(str(n - 1)))
    names = NameIndex(f"n{idx:0{width}d}" for idx in range(n))

    root = hierarchy.root
    assigns: dict[int, np.ndarray] = {
        root: rng.stream(config.seed, rng.SYNTH, 0).integers(0, config.communities, size=n)
    }
    order = sorted(range(len(hierarchy)), key=hierarchy.depth)
    for i in order:
        if i == root:
            continue
        parent_assign = assigns[hierarchy.elements[i].parent]
        gen = rng.stream(config.seed, rng.SYNTH, 1, i)
        assigns[i] = _mutate(parent_assign, config.divergence, config.communities, gen)

    layers = []
    label_rows = []
    for i, e in enumerate(hierarchy.elements):
        if e.leaf_binding is None:
            continue
        layer_id = e.leaf_binding
        gen = rng.stream(config.seed, rng.SYNTH, 2, layer_id)
        edges = _layer_edges(assigns[i], config.p_in, config.p_out, gen)
        layers.append(Layer.from_edges(layer_id, e.name, edges, extra_nodes=range(n)))
        label_rows.extend((u, layer_id, f"c{assigns[i][u]}") for u in range(n))
    layers.sort(key=lambda layer: layer.layer_id)

    network = MultiLayerNetwork(names, layers)
    return network, hierarchy, LabelSet(label_rows)


def community_assignments(labels: LabelSet, layer_id: int, n: int) -> np.ndarray:
    """Recover the planted assignment of one layer from the labels."""
    out = np.full(n, -1, dtype=np.int64)
    for u, lid, fn in labels.rows:
        if lid == layer_id:
            out[u] = int(fn[1:])
    return out
