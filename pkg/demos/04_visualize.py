"""Project trained embeddings to 2-D and color nodes by planted community.

The built-in projection is the top-2 principal components; the raw vectors
are also written out for external non-linear tools.  With matplotlib
installed the script saves scatter plots per layer into demos/out/.

Run:  python demos/04_visualize.py
"""

from pathlib import Path

from ohmnet import (SynthConfig, TrainConfig, WalkConfig, generate,
                    project_2d, simulate_walks, train)
from ohmnet.synth import community_assignments

SEED = 11
OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

net, hierarchy, labels = generate(SynthConfig(nodes_per_layer=150, layers=4,
                                              communities=4, seed=SEED))
corpus = simulate_walks(net, WalkConfig(walks_per_node=5, walk_length=20, seed=SEED))
emb = train(net, hierarchy, corpus,
            TrainConfig(dim=32, lam=0.3, window=5, outer_iters=5, seed=SEED))

coords_by_layer = {}
for layer in net.layers:
    table = emb.table(layer.name)
    coords = project_2d(table)
    coords_by_layer[layer.name] = coords
    path = OUT / f"coords_{layer.name}.tsv"
    with open(path, "w", encoding="utf-8") as fh:
        for k in range(table.n):
            fh.write(f"{net.names.name(int(table.ids[k]))} "
                     f"{coords[k, 0]!r} {coords[k, 1]!r}\n")
    spread = coords.std(axis=0)
    print(f"{layer.name}: wrote {path.name}; component spreads "
          f"{spread[0]:.3f} / {spread[1]:.3f}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed; skipping plots (coords files written)")
else:
    fig, axes = plt.subplots(1, net.n_layers, figsize=(4 * net.n_layers, 4))
    for ax, layer in zip(axes, net.layers):
        coords = coords_by_layer[layer.name]
        assign = community_assignments(labels, layer.layer_id, net.n_nodes)
        table = emb.table(layer.name)
        ax.scatter(coords[:, 0], coords[:, 1], c=assign[table.ids],
                   cmap="tab10", s=12)
        ax.set_title(layer.name)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.suptitle("2-D projections, colored by planted community")
    fig.tight_layout()
    fig.savefig(OUT / "projections.png", dpi=120)
    print(f"saved {OUT / 'projections.png'}")
