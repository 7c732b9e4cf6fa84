"""In-memory model of a multi-layer network and its layer hierarchy.

A multi-layer network is a set of weighted undirected graphs (layers) over a
shared node universe; the hierarchy is a rooted tree whose leaves are bound
one-to-one to layers.  Everything here is immutable after construction and
safe for concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


class NameIndex:
    """Bijective mapping between external node names and dense integer ids."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        """Return the id of ``name``, assigning the next free id if new."""
        i = self._ids.get(name)
        if i is None:
            i = len(self._names)
            self._ids[name] = i
            self._names.append(name)
        return i

    def id(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise KeyError(f"unknown node name: {name!r}") from None

    def name(self, i: int) -> str:
        return self._names[i]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)


def merge_edges(triples: Iterable[tuple[int, int, float]]) -> dict[tuple[int, int], float]:
    """Canonicalize (u, v, w) triples: orient u < v and sum duplicate weights.

    Self-loops and non-positive weights are rejected.
    """
    merged: dict[tuple[int, int], float] = {}
    for u, v, w in triples:
        if u == v:
            raise ValueError(f"self-loop on node id {u}")
        if not w > 0:
            raise ValueError(f"non-positive edge weight {w} on ({u}, {v})")
        key = (u, v) if u < v else (v, u)
        merged[key] = merged.get(key, 0.0) + float(w)
    return merged


class Layer:
    """One weighted undirected layer, adjacency stored per node.

    ``nodes`` may include isolated nodes (no incident edges); edge endpoints
    must all be members of ``nodes``.
    """

    def __init__(self, layer_id: int, name: str,
                 nodes: Iterable[int],
                 adjacency: Mapping[int, tuple[np.ndarray, np.ndarray]]):
        self.layer_id = int(layer_id)
        self.name = name
        self.node_ids = np.array(sorted(set(int(n) for n in nodes)), dtype=np.int64)
        self._node_set = frozenset(self.node_ids.tolist())
        self._adj = dict(adjacency)

    @classmethod
    def from_edges(cls, layer_id: int, name: str,
                   edges: Mapping[tuple[int, int], float],
                   extra_nodes: Iterable[int] = ()) -> "Layer":
        """Build a layer from canonical (u < v) -> weight edges."""
        nbrs: dict[int, list[tuple[int, float]]] = {}
        nodes = set(int(n) for n in extra_nodes)
        for (u, v), w in edges.items():
            nbrs.setdefault(u, []).append((v, w))
            nbrs.setdefault(v, []).append((u, w))
            nodes.add(u)
            nodes.add(v)
        adjacency = {}
        for u, lst in nbrs.items():
            lst.sort()
            ids = np.array([x for x, _ in lst], dtype=np.int64)
            ws = np.array([w for _, w in lst], dtype=np.float64)
            adjacency[u] = (ids, ws)
        return cls(layer_id, name, nodes, adjacency)

    _EMPTY = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))

    def neighbors(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """Sorted neighbor ids and matching weights (empty if isolated)."""
        return self._adj.get(u, self._EMPTY)

    def degree(self, u: int) -> int:
        return len(self._adj.get(u, self._EMPTY)[0])

    def has_node(self, u: int) -> bool:
        return u in self._node_set

    def has_edge(self, u: int, v: int) -> bool:
        ids, _ = self.neighbors(u)
        k = np.searchsorted(ids, v)
        return k < len(ids) and ids[k] == v

    def edge_weight(self, u: int, v: int) -> float:
        ids, ws = self.neighbors(u)
        k = np.searchsorted(ids, v)
        if k < len(ids) and ids[k] == v:
            return float(ws[k])
        return 0.0

    def edges(self) -> Iterator[tuple[int, int, float]]:
        """Yield each undirected edge once, as (u, v, w) with u < v."""
        for u in self.node_ids.tolist():
            ids, ws = self.neighbors(u)
            for v, w in zip(ids.tolist(), ws.tolist()):
                if u < v:
                    yield u, v, float(w)

    def n_edges(self) -> int:
        return sum(len(ids) for ids, _ in self._adj.values()) // 2

    def total_weight(self) -> float:
        """Sum of undirected edge weights."""
        return sum(float(ws.sum()) for _, ws in self._adj.values()) / 2.0

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def __repr__(self) -> str:
        return f"Layer({self.layer_id}, {self.name!r}, nodes={self.n_nodes}, edges={self.n_edges()})"


class MultiLayerNetwork:
    """K layers over a shared node universe (the union of layer node sets)."""

    def __init__(self, names: NameIndex, layers: Sequence[Layer]):
        self.names = names
        self.layers = list(layers)
        self._by_name = {layer.name: layer for layer in self.layers}

    @classmethod
    def build(cls, entries: Sequence[tuple[str, Iterable[tuple[str, str, float]]]]) -> "MultiLayerNetwork":
        """Assemble a network from (layer_name, [(u_name, v_name, w), ...]) entries.

        Duplicate edges merge by weight summation; node names are interned
        into a shared index in order of first appearance.
        """
        names = NameIndex()
        layers = []
        for layer_id, (layer_name, triples) in enumerate(entries):
            indexed = ((names.add(u), names.add(v), w) for u, v, w in triples)
            layers.append(Layer.from_edges(layer_id, layer_name, merge_edges(indexed)))
        return cls(names, layers)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_nodes(self) -> int:
        """Size of the node universe."""
        return len(self.names)

    def layer(self, layer_id: int) -> Layer:
        return self.layers[layer_id]

    def layer_by_name(self, name: str) -> Layer:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown layer name: {name!r}") from None

    def layer_names(self) -> list[str]:
        return [layer.name for layer in self.layers]

    def __repr__(self) -> str:
        return f"MultiLayerNetwork(layers={self.n_layers}, nodes={self.n_nodes})"


@dataclass(frozen=True)
class HierarchyElement:
    name: str
    parent: int | None
    children: tuple[int, ...] = ()
    leaf_binding: int | None = None  # layer_id for bound leaves


class Hierarchy:
    """Rooted tree over elements; leaves bind 1:1 to network layers.

    Construction is lenient so that malformed structures can still be passed
    to :func:`validate`; the tree-walking queries assume a valid tree.
    """

    def __init__(self, elements: Sequence[HierarchyElement]):
        self.elements = list(elements)
        self._by_name = {e.name: i for i, e in enumerate(self.elements)}

    def __len__(self) -> int:
        return len(self.elements)

    def index_of(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown hierarchy element: {name!r}") from None

    def _check(self, i: int) -> None:
        if not (0 <= i < len(self.elements)):
            raise ValueError(f"unknown hierarchy element index: {i}")

    def is_leaf(self, i: int) -> bool:
        self._check(i)
        return not self.elements[i].children

    def roots(self) -> list[int]:
        return [i for i, e in enumerate(self.elements) if e.parent is None]

    @property
    def root(self) -> int:
        roots = self.roots()
        if len(roots) != 1:
            raise ValueError(f"hierarchy has {len(roots)} roots, expected exactly one")
        return roots[0]

    def leaves(self) -> list[int]:
        return [i for i in range(len(self.elements)) if self.is_leaf(i)]

    def bound_leaves(self) -> list[tuple[int, int]]:
        """(element index, layer_id) pairs for elements carrying a binding."""
        return [(i, e.leaf_binding) for i, e in enumerate(self.elements)
                if e.leaf_binding is not None]

    def element_for_layer(self, layer_id: int) -> int:
        for i, e in enumerate(self.elements):
            if e.leaf_binding == layer_id:
                return i
        raise ValueError(f"no hierarchy element bound to layer {layer_id}")

    def depth(self, i: int) -> int:
        """Edges between element i and the root."""
        self._check(i)
        d = 0
        cur = i
        while self.elements[cur].parent is not None:
            cur = self.elements[cur].parent
            d += 1
            if d > len(self.elements):
                raise ValueError("parent pointers contain a cycle")
        return d

    def subtree_leaves(self, i: int) -> list[int]:
        """Leaf elements of the subtree rooted at i (i itself if a leaf)."""
        self._check(i)
        out, stack = [], [i]
        while stack:
            j = stack.pop()
            kids = self.elements[j].children
            if not kids:
                out.append(j)
            else:
                stack.extend(kids)
        return sorted(out)

    def names(self) -> list[str]:
        return [e.name for e in self.elements]


def tree_distance(hierarchy: Hierarchy, a: int, b: int) -> int:
    """Number of edges on the unique path between elements a and b."""
    hierarchy._check(a)
    hierarchy._check(b)
    da, db = hierarchy.depth(a), hierarchy.depth(b)
    x, y = a, b
    for _ in range(da - db):
        x = hierarchy.elements[x].parent
    for _ in range(db - da):
        y = hierarchy.elements[y].parent
    dist = abs(da - db)
    while x != y:
        x = hierarchy.elements[x].parent
        y = hierarchy.elements[y].parent
        dist += 2
    return dist


def subtree_scope(hierarchy: Hierarchy, network: MultiLayerNetwork, i: int) -> np.ndarray:
    """Node ids covered by element i: the union of the node sets of all
    layers bound in the subtree rooted at i (sorted array)."""
    ids: set[int] = set()
    for leaf in hierarchy.subtree_leaves(i):
        binding = hierarchy.elements[leaf].leaf_binding
        if binding is not None:
            ids.update(network.layer(binding).node_ids.tolist())
    return np.array(sorted(ids), dtype=np.int64)


def all_scopes(hierarchy: Hierarchy, network: MultiLayerNetwork) -> list[np.ndarray]:
    """Scopes for every element, computed bottom-up in one pass."""
    order = sorted(range(len(hierarchy)), key=hierarchy.depth, reverse=True)
    scopes: list[np.ndarray | None] = [None] * len(hierarchy)
    for i in order:
        e = hierarchy.elements[i]
        ids: set[int] = set()
        if e.leaf_binding is not None:
            ids.update(network.layer(e.leaf_binding).node_ids.tolist())
        for c in e.children:
            ids.update(scopes[c].tolist())
        scopes[i] = np.array(sorted(ids), dtype=np.int64)
    return scopes


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def add(self, kind: str, message: str) -> None:
        self.violations.append(Violation(kind, message))

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


def validate(network: MultiLayerNetwork, hierarchy: Hierarchy) -> ValidationReport:
    """Cross-check a loaded network and hierarchy; returns a report rather
    than raising, with one entry per violation found."""
    report = ValidationReport()

    roots = hierarchy.roots()
    if len(roots) == 0:
        report.add("no-root", "every element has a parent (cycle among all elements)")
    elif len(roots) > 1:
        names = ", ".join(hierarchy.elements[r].name for r in roots)
        report.add("multiple-roots", f"elements without parent: {names}")

    # parent/children consistency and cycle detection
    n = len(hierarchy)
    for i, e in enumerate(hierarchy.elements):
        if e.parent is not None:
            p = hierarchy.elements[e.parent]
            if i not in p.children:
                report.add("parent-child-mismatch",
                           f"{e.name} lists parent {p.name} but is not among its children")
        for c in e.children:
            if hierarchy.elements[c].parent != i:
                report.add("parent-child-mismatch",
                           f"{hierarchy.elements[c].name} is a child of {e.name} "
                           "but points to a different parent")
    for i in range(n):
        cur, steps = i, 0
        while hierarchy.elements[cur].parent is not None:
            cur = hierarchy.elements[cur].parent
            steps += 1
            if steps > n:
                report.add("cycle", f"parent chain from {hierarchy.elements[i].name} never reaches a root")
                break

    # bindings: exactly the leaves, bijectively onto layers
    seen_layers: dict[int, str] = {}
    for i, e in enumerate(hierarchy.elements):
        if e.leaf_binding is not None:
            if e.children:
                report.add("non-leaf-binding",
                           f"internal element {e.name} is bound to a layer")
            if not (0 <= e.leaf_binding < network.n_layers):
                report.add("dangling-binding",
                           f"{e.name} bound to nonexistent layer id {e.leaf_binding}")
            elif e.leaf_binding in seen_layers:
                report.add("duplicate-binding",
                           f"layer {e.leaf_binding} bound to both "
                           f"{seen_layers[e.leaf_binding]} and {e.name}")
            else:
                seen_layers[e.leaf_binding] = e.name
        elif not e.children:
            report.add("unbound-leaf", f"leaf element {e.name} is not bound to any layer")
    for layer in network.layers:
        if layer.layer_id not in seen_layers:
            report.add("dangling-binding", f"layer {layer.name} has no hierarchy leaf")

    # per-layer structural checks
    for layer in network.layers:
        for u in layer.node_ids.tolist():
            if not (0 <= u < network.n_nodes):
                report.add("unknown-node", f"layer {layer.name} contains id {u} outside the universe")
        for u, (ids, ws) in layer._adj.items():
            if not layer.has_node(u):
                report.add("orphan-node", f"layer {layer.name}: adjacency for id {u} not in node set")
            for v, w in zip(ids.tolist(), ws.tolist()):
                if not layer.has_node(v):
                    report.add("orphan-node", f"layer {layer.name}: edge endpoint {v} not in node set")
                if u == v:
                    report.add("self-loop", f"layer {layer.name}: self-loop on id {u}")
                if not w > 0:
                    report.add("nonpositive-weight", f"layer {layer.name}: weight {w} on ({u}, {v})")
                if layer.edge_weight(v, u) != w:
                    report.add("asymmetric-edge",
                               f"layer {layer.name}: ({u}, {v}) weight {w} != reverse "
                               f"{layer.edge_weight(v, u)}")
    return report


def collapse_layers(network: MultiLayerNetwork) -> Layer:
    """Aggregate all layers into one graph on the shared universe.

    An edge present in several layers appears once with the sum of its
    per-layer weights, so total edge weight is conserved.
    """
    merged: dict[tuple[int, int], float] = {}
    nodes: set[int] = set()
    for layer in network.layers:
        nodes.update(layer.node_ids.tolist())
        for u, v, w in layer.edges():
            merged[(u, v)] = merged.get((u, v), 0.0) + w
    return Layer.from_edges(0, "collapsed", merged, extra_nodes=nodes)


def collapsed_network(network: MultiLayerNetwork) -> MultiLayerNetwork:
    """Wrap :func:`collapse_layers` output as a one-layer network sharing the
    original name index."""
    return MultiLayerNetwork(network.names, [collapse_layers(network)])


def single_element_hierarchy(layer_name: str, layer_id: int = 0) -> Hierarchy:
    """Trivial hierarchy whose root is itself the (only) bound leaf."""
    return Hierarchy([HierarchyElement(layer_name, None, (), layer_id)])
