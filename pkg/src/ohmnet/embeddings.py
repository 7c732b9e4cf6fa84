"""Embedding tables: one vector table per hierarchy element.

Leaf elements carry an input table over their layer's nodes plus a context
(output-side) table of identical shape; internal elements carry input tables
over their subtree scope only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ElementTable:
    """Vectors for one hierarchy element, rows keyed by global node id."""

    def __init__(self, ids: np.ndarray, vectors: np.ndarray):
        ids = np.asarray(ids, dtype=np.int64)
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or len(ids) != vectors.shape[0]:
            raise ValueError("ids and vectors row counts differ")
        if len(ids) > 1 and not np.all(np.diff(ids) > 0):
            raise ValueError("ids must be strictly increasing")
        self.ids = ids
        self.vectors = vectors

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row(self, node_id: int) -> int:
        k = int(np.searchsorted(self.ids, node_id))
        if k >= self.n or self.ids[k] != node_id:
            raise KeyError(f"node id {node_id} not in table")
        return k

    def has(self, node_id: int) -> bool:
        k = np.searchsorted(self.ids, node_id)
        return k < self.n and self.ids[k] == node_id

    def vector(self, node_id: int) -> np.ndarray:
        return self.vectors[self.row(node_id)]

    def rows_for(self, node_ids: np.ndarray) -> np.ndarray:
        """Row indices for the given ids; raises if any id is absent."""
        pos = np.searchsorted(self.ids, node_ids)
        if np.any(pos >= self.n) or np.any(self.ids[np.minimum(pos, self.n - 1)] != node_ids):
            missing = np.asarray(node_ids)[(pos >= self.n) | (self.ids[np.minimum(pos, self.n - 1)] != node_ids)]
            raise KeyError(f"node ids not in table: {missing[:5].tolist()}...")
        return pos

    def position_map(self, universe_size: int) -> np.ndarray:
        """Dense id -> row array, -1 where absent."""
        out = np.full(universe_size, -1, dtype=np.int64)
        out[self.ids] = np.arange(self.n, dtype=np.int64)
        return out

    def copy(self) -> "ElementTable":
        return ElementTable(self.ids.copy(), self.vectors.copy())


@dataclass
class EmbeddingSet:
    """All element tables of one training run.

    ``tables[i]`` is the input table of element i (hierarchy element order);
    ``context[i]`` exists for leaf elements only.  ``node_names`` is the node
    universe in id order, so tables stay interpretable without the network.
    """

    dim: int
    node_names: list[str]
    element_names: list[str]
    tables: list[ElementTable]
    context: dict[int, ElementTable] = field(default_factory=dict)

    def table(self, element_name: str) -> ElementTable:
        try:
            i = self.element_names.index(element_name)
        except ValueError:
            raise KeyError(f"no table for element {element_name!r}") from None
        return self.tables[i]

    def finite(self) -> bool:
        """True when every stored vector entry is finite."""
        for t in self.tables:
            if not np.all(np.isfinite(t.vectors)):
                return False
        for t in self.context.values():
            if not np.all(np.isfinite(t.vectors)):
                return False
        return True

    def leaf_tables(self, layer_names: list[str]) -> dict[int, ElementTable]:
        """Map layer_id -> input table via the leaf-name == layer-name rule."""
        return {lid: self.table(name) for lid, name in enumerate(layer_names)}
