import numpy as np
import pytest

from ohmnet.graph import Hierarchy, HierarchyElement, MultiLayerNetwork


def build_hierarchy(parent_pairs, bindings):
    """Hierarchy from (child, parent) name pairs plus {name: layer_id}.

    Elements are indexed in order of first mention, like the file reader.
    """
    order, pos = [], {}

    def intern(name):
        if name not in pos:
            pos[name] = len(order)
            order.append(name)
        return pos[name]

    parent = {}
    for child, par in parent_pairs:
        parent[intern(child)] = intern(par)
    children = {i: [] for i in range(len(order))}
    for c, p in parent.items():
        children[p].append(c)
    elements = [HierarchyElement(order[i], parent.get(i), tuple(sorted(children[i])),
                                 bindings.get(order[i]))
                for i in range(len(order))]
    return Hierarchy(elements)


@pytest.fixture
def two_layer_net():
    """Two small layers sharing node b; layerA: a-b, layerB: b-c."""
    return MultiLayerNetwork.build([
        ("layerA", [("a", "b", 1.0)]),
        ("layerB", [("b", "c", 2.0)]),
    ])


@pytest.fixture
def two_layer_hier():
    return build_hierarchy([("layerA", "root"), ("layerB", "root")],
                           {"layerA": 0, "layerB": 1})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
