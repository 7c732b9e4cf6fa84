"""End-to-end walkthrough: build a multi-layer network, sample walks, train
coupled embeddings, and look at the tables the hierarchy produces.

Run:  python demos/01_pipeline.py
"""

import numpy as np

from ohmnet import (SynthConfig, TrainConfig, WalkConfig, generate,
                    simulate_walks, train, validate)

# A small planted-community benchmark: four layers over one universe of 150
# nodes, organized root -> {group0: [layer0, layer1], group1: [layer2, layer3]}.
# Sibling layers agree on 80% of community assignments.
net, hierarchy, labels = generate(SynthConfig(nodes_per_layer=150, layers=4,
                                              communities=4, divergence=0.2,
                                              seed=7))
print(f"network: {net.n_layers} layers, {net.n_nodes} nodes")
for layer in net.layers:
    print(f"  {layer.name}: {layer.n_edges()} edges")
print(f"hierarchy: {len(hierarchy)} elements, "
      f"root = {hierarchy.elements[hierarchy.root].name}")

report = validate(net, hierarchy)
print(f"validation: {'clean' if report.ok else report}")

# Phase one: biased random walks per layer. p and q shape the neighborhoods
# (p penalizes backtracking, q penalizes wandering off).
corpus = simulate_walks(net, WalkConfig(walks_per_node=5, walk_length=20,
                                        p=1.0, q=0.5, seed=7))
print(f"\nwalk corpus: {sum(len(w) for w in corpus.walks)} walks "
      f"({len(corpus.walks[0])} per layer)")

# Phase two: alternating optimization. Leaves get skip-gram epochs with a
# pull toward their parent's vectors; internal elements are closed-form
# averages of parent and children.
cfg = TrainConfig(dim=32, lam=0.3, window=5, negatives=5, outer_iters=6, seed=7)
emb = train(net, hierarchy, corpus, cfg)

print(f"\ntrained {len(emb.element_names)} tables at d={emb.dim}:")
for name in emb.element_names:
    table = emb.table(name)
    print(f"  {name:8s} covers {table.n} nodes")

# The same node exists at multiple scales: per layer, per group, globally.
node = net.names.name(0)
print(f"\nnode {node} across scales (first 4 coordinates):")
for name in ("layer0", "group0", "root"):
    vec = emb.table(name).vector(0)
    print(f"  {name:8s} {np.round(vec[:4], 3)}")

# Coupled leaves stay close to their parent; unrelated layers drift apart.
leaf = emb.table("layer0").vectors
parent_tbl = emb.table("group0")
parent = parent_tbl.vectors[parent_tbl.rows_for(emb.table('layer0').ids)]
print(f"\nmean distance layer0 -> group0: "
      f"{np.linalg.norm(leaf - parent, axis=1).mean():.3f}")
other = emb.table("layer3").vectors
print(f"mean distance layer0 -> layer3: "
      f"{np.linalg.norm(leaf - other, axis=1).mean():.3f}")
