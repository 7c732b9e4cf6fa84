"""Readers and writers for all on-disk artifacts.

Text formats throughout:

* layer manifest -- ``name path`` per line, paths relative to the manifest;
* edge list -- ``u v [w]`` per line, ``#`` comments, symmetrized, duplicate
  weights summed;
* hierarchy -- ``child parent`` per line; the one name never appearing as a
  child is the root; leaves bind to layers by name;
* labels -- ``node layer function_id`` per line;
* embeddings -- one file per hierarchy element, header ``N d`` then
  ``name v1 .. vd`` rows, round-trip exact for float64;
* walk corpus -- one walk per line, space-separated node names.

Readers reject malformed input with the offending line number; nothing is
silently repaired.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import ElementTable, EmbeddingSet
from .graph import (Hierarchy, HierarchyElement, Layer, MultiLayerNetwork,
                    NameIndex, merge_edges)


class FormatError(ValueError):
    """Malformed input file; message carries path and line number."""

    @classmethod
    def at(cls, path, lineno: int, message: str) -> "FormatError":
        return cls(f"{path}:{lineno}: {message}")


def _data_lines(path):
    """Yield (lineno, stripped_line) skipping blanks and # comments."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


@dataclass(frozen=True)
class LayerManifest:
    """Ordered (layer_name, edgelist_path) entries."""

    entries: tuple[tuple[str, str], ...]

    def names(self) -> list[str]:
        return [name for name, _ in self.entries]


def read_manifest(path) -> LayerManifest:
    base = Path(path).parent
    entries = []
    seen = set()
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise FormatError.at(path, lineno, f"expected 'name path', got {line!r}")
        name, rel = parts
        if name in seen:
            raise FormatError.at(path, lineno, f"duplicate layer name {name!r}")
        seen.add(name)
        entries.append((name, str(base / rel)))
    if not entries:
        raise FormatError(f"{path}: manifest lists no layers")
    return LayerManifest(tuple(entries))


def read_edgelist(path, *, layer_id: int = 0, name: str | None = None,
                  index: NameIndex | None = None) -> Layer:
    """Parse one edge list into a Layer.

    ``index`` (created if omitted) maps names to ids and is extended in
    place, so successive calls share one node universe.  Missing weights
    default to 1.0; duplicate edges merge by weight summation.
    """
    if index is None:
        index = NameIndex()
    triples = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) not in (2, 3):
            raise FormatError.at(path, lineno, f"expected 'u v [w]', got {line!r}")
        u_name, v_name = parts[0], parts[1]
        if u_name == v_name:
            raise FormatError.at(path, lineno, f"self-loop on {u_name!r}")
        if len(parts) == 3:
            try:
                w = float(parts[2])
            except ValueError:
                raise FormatError.at(path, lineno, f"bad weight {parts[2]!r}") from None
            if not np.isfinite(w) or w <= 0:
                raise FormatError.at(path, lineno, f"weight must be positive, got {parts[2]}")
        else:
            w = 1.0
        triples.append((index.add(u_name), index.add(v_name), w))
    return Layer.from_edges(layer_id, name if name is not None else Path(path).stem,
                            merge_edges(triples))


def load_network(manifest_path) -> MultiLayerNetwork:
    """Read the manifest and every referenced edge list into one network."""
    manifest = read_manifest(manifest_path)
    index = NameIndex()
    layers = []
    for layer_id, (name, edge_path) in enumerate(manifest.entries):
        layers.append(read_edgelist(edge_path, layer_id=layer_id, name=name, index=index))
    return MultiLayerNetwork(index, layers)


def read_hierarchy(path, layer_names) -> Hierarchy:
    """Parse ``child parent`` lines into a Hierarchy.

    Elements are indexed in order of first mention.  Every name in
    ``layer_names`` must match an element, which receives the layer binding.
    """
    order: list[str] = []
    pos: dict[str, int] = {}

    def intern(name: str) -> int:
        if name not in pos:
            pos[name] = len(order)
            order.append(name)
        return pos[name]

    parent: dict[int, int] = {}
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise FormatError.at(path, lineno, f"expected 'child parent', got {line!r}")
        c, p = intern(parts[0]), intern(parts[1])
        if c == p:
            raise FormatError.at(path, lineno, f"element {parts[0]!r} is its own parent")
        if c in parent:
            raise FormatError.at(path, lineno, f"duplicate child line for {parts[0]!r}")
        parent[c] = p

    if not order:
        raise FormatError(f"{path}: hierarchy file is empty")

    roots = [i for i in range(len(order)) if i not in parent]
    if len(roots) == 0:
        raise FormatError(f"{path}: no root (every element appears as a child; cycle)")
    if len(roots) > 1:
        raise FormatError(f"{path}: multiple roots: {', '.join(order[r] for r in roots)}")

    # cycle check: walk each parent chain with a step bound
    n = len(order)
    for i in range(n):
        cur, steps = i, 0
        while cur in parent:
            cur = parent[cur]
            steps += 1
            if steps > n:
                raise FormatError(f"{path}: cycle in parent chain starting at {order[i]!r}")

    children: dict[int, list[int]] = {i: [] for i in range(n)}
    for c, p in parent.items():
        children[p].append(c)

    binding: dict[int, int] = {}
    for layer_id, lname in enumerate(layer_names):
        if lname not in pos:
            raise FormatError(f"{path}: layer {lname!r} has no matching hierarchy element")
        binding[pos[lname]] = layer_id

    elements = [HierarchyElement(name=order[i],
                                 parent=parent.get(i),
                                 children=tuple(sorted(children[i])),
                                 leaf_binding=binding.get(i))
                for i in range(n)]
    return Hierarchy(elements)


@dataclass
class LabelSet:
    """(node, layer, function) annotations; one node may carry many labels."""

    rows: list[tuple[int, int, str]]

    def __len__(self) -> int:
        return len(self.rows)

    def functions(self) -> list[str]:
        return sorted({f for _, _, f in self.rows})

    def positives(self, layer_id: int, function: str) -> np.ndarray:
        ids = sorted({u for u, lid, f in self.rows if lid == layer_id and f == function})
        return np.array(ids, dtype=np.int64)

    def universe(self, layer_id: int) -> np.ndarray:
        """Nodes carrying at least one label in the layer."""
        ids = sorted({u for u, lid, _ in self.rows if lid == layer_id})
        return np.array(ids, dtype=np.int64)

    def layers_with(self, function: str) -> list[int]:
        return sorted({lid for _, lid, f in self.rows if f == function})

    def labeled_nodes(self) -> np.ndarray:
        """All nodes carrying any label in any layer."""
        ids = sorted({u for u, _, _ in self.rows})
        return np.array(ids, dtype=np.int64)

    def functions_in_layer(self, layer_id: int) -> list[str]:
        return sorted({f for _, lid, f in self.rows if lid == layer_id})

    def restrict_layers(self, layer_ids) -> "LabelSet":
        keep = set(layer_ids)
        return LabelSet([r for r in self.rows if r[1] in keep])


def read_labels(path, network: MultiLayerNetwork) -> LabelSet:
    """Parse ``node layer function_id`` lines; every node must exist in the
    named layer."""
    rows = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 3:
            raise FormatError.at(path, lineno, f"expected 'node layer function', got {line!r}")
        node_name, layer_name, function = parts
        try:
            layer = network.layer_by_name(layer_name)
        except KeyError:
            raise FormatError.at(path, lineno, f"unknown layer {layer_name!r}") from None
        if node_name not in network.names:
            raise FormatError.at(path, lineno, f"unknown node {node_name!r}")
        node_id = network.names.id(node_name)
        if not layer.has_node(node_id):
            raise FormatError.at(path, lineno,
                                 f"node {node_name!r} not present in layer {layer_name!r}")
        rows.append((node_id, layer.layer_id, function))
    return LabelSet(rows)


def write_labels(labels: LabelSet, network: MultiLayerNetwork, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node_id, layer_id, function in labels.rows:
            fh.write(f"{network.names.name(node_id)} {network.layer(layer_id).name} {function}\n")


# ---------------------------------------------------------------------------
# embeddings

_ELEMENTS_FILE = "elements.txt"
_NODES_FILE = "nodes.txt"
_TABLE_SUFFIX = ".emb"
_CONTEXT_SUFFIX = ".ctx"


def _format_row(name: str, vec: np.ndarray) -> str:
    # repr() of a Python float is the shortest string that parses back exactly
    return name + " " + " ".join(repr(x) for x in vec.tolist())


def _write_table(path, names: list[str], table: ElementTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{table.n} {table.dim}\n")
        for k in range(table.n):
            fh.write(_format_row(names[table.ids[k]], table.vectors[k]) + "\n")


def _read_table(path, name_to_id: dict[str, int], dim_expected: int | None) -> ElementTable:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError.at(path, 1, "expected header 'count dim'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise FormatError.at(path, 1, f"bad header {header!r}") from None
        if dim_expected is not None and dim != dim_expected:
            raise FormatError.at(path, 1, f"dimension {dim} != {dim_expected} used elsewhere")
        ids, vecs, seen = [], [], set()
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise FormatError.at(path, lineno,
                                     f"expected name plus {dim} values, got {len(parts) - 1}")
            if parts[0] in seen:
                raise FormatError.at(path, lineno, f"duplicate node {parts[0]!r}")
            seen.add(parts[0])
            if parts[0] not in name_to_id:
                raise FormatError.at(path, lineno, f"node {parts[0]!r} missing from {_NODES_FILE}")
            ids.append(name_to_id[parts[0]])
            vecs.append([float(x) for x in parts[1:]])
    if len(ids) != count:
        raise FormatError(f"{path}: header says {count} rows, found {len(ids)}")
    order = np.argsort(ids)
    ids_arr = np.array(ids, dtype=np.int64)[order]
    mat = np.array(vecs, dtype=np.float64).reshape(len(ids), dim)[order] if ids else \
        np.zeros((0, dim), dtype=np.float64)
    return ElementTable(ids_arr, mat)


def write_embeddings(emb: EmbeddingSet, dirpath) -> None:
    """One file per hierarchy element (plus ``.ctx`` context tables for
    leaves); ``elements.txt`` and ``nodes.txt`` pin the orderings so that
    :func:`read_embeddings` restores the set exactly."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    (d / _ELEMENTS_FILE).write_text("".join(n + "\n" for n in emb.element_names), encoding="utf-8")
    (d / _NODES_FILE).write_text("".join(n + "\n" for n in emb.node_names), encoding="utf-8")
    for i, name in enumerate(emb.element_names):
        _write_table(d / (name + _TABLE_SUFFIX), emb.node_names, emb.tables[i])
        if i in emb.context:
            _write_table(d / (name + _CONTEXT_SUFFIX), emb.node_names, emb.context[i])


def read_embeddings(dirpath) -> EmbeddingSet:
    d = Path(dirpath)
    elements_path = d / _ELEMENTS_FILE
    if not elements_path.exists():
        raise FormatError(f"{dirpath}: missing {_ELEMENTS_FILE}")
    element_names = elements_path.read_text(encoding="utf-8").split()
    node_names = (d / _NODES_FILE).read_text(encoding="utf-8").split()
    name_to_id = {n: i for i, n in enumerate(node_names)}
    tables, context = [], {}
    dim: int | None = None
    for i, name in enumerate(element_names):
        table = _read_table(d / (name + _TABLE_SUFFIX), name_to_id, dim)
        dim = table.dim
        tables.append(table)
        ctx_path = d / (name + _CONTEXT_SUFFIX)
        if ctx_path.exists():
            context[i] = _read_table(ctx_path, name_to_id, dim)
    if dim is None:
        raise FormatError(f"{dirpath}: no element tables found")
    return EmbeddingSet(dim=dim, node_names=node_names, element_names=element_names,
                        tables=tables, context=context)


# ---------------------------------------------------------------------------
# walk corpus

def walk_file_name(layer_name: str) -> str:
    return f"walks_{layer_name}.txt"


def write_walks(walks: list[np.ndarray], network: MultiLayerNetwork, path) -> None:
    """One walk per line, space-separated node names."""
    with open(path, "w", encoding="utf-8") as fh:
        for walk in walks:
            fh.write(" ".join(network.names.name(int(u)) for u in walk) + "\n")


def read_walks(path, network: MultiLayerNetwork) -> list[np.ndarray]:
    walks = []
    for lineno, line in _data_lines(path):
        ids = []
        for tok in line.split():
            if tok not in network.names:
                raise FormatError.at(path, lineno, f"unknown node {tok!r}")
            ids.append(network.names.id(tok))
        walks.append(np.array(ids, dtype=np.int64))
    return walks


def write_manifest_files(network: MultiLayerNetwork, dirpath, manifest_name="layers.txt") -> Path:
    """Write every layer's edge list plus the manifest; returns manifest path."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for layer in network.layers:
        fname = f"{layer.name}.edges"
        with open(d / fname, "w", encoding="utf-8") as fh:
            for u, v, w in layer.edges():
                fh.write(f"{network.names.name(u)} {network.names.name(v)} {w!r}\n")
        lines.append(f"{layer.name} {fname}")
    manifest_path = d / manifest_name
    manifest_path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return manifest_path


def write_hierarchy(hierarchy: Hierarchy, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in hierarchy.elements:
            if e.parent is not None:
                fh.write(f"{e.name} {hierarchy.elements[e.parent].name}\n")
