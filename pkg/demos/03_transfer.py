"""Transferring functions to a layer that has no annotations.

We hide layer0's labels entirely, train one classifier per source layer and
function, apply them to layer0's embeddings, and combine the scores with
weights that decay with hierarchy distance.  The sibling layer (distance 2)
should dominate the two cousins (distance 4), so hierarchy weighting beats
uniform averaging; training on layer0's own labels (no transfer) remains the
upper bound.

Run:  python demos/03_transfer.py
"""

from ohmnet import (ClassifierConfig, EvalConfig, SynthConfig, TrainConfig,
                    WalkConfig, cross_validate, generate, simulate_walks,
                    train, transfer_predict, transfer_weights, tree_distance)

SEED = 4
TARGET = 0

net, hierarchy, labels = generate(SynthConfig(seed=SEED))
corpus = simulate_walks(net, WalkConfig(walks_per_node=3, walk_length=20, seed=SEED))
emb = train(net, hierarchy, corpus,
            TrainConfig(dim=32, lam=0.5, window=5, negatives=5, outer_iters=5,
                        seed=SEED))
eval_cfg = EvalConfig(folds=5, min_annotated=15, seed=SEED,
                      classifier=ClassifierConfig(epochs=25))

target_elem = hierarchy.element_for_layer(TARGET)
print(f"target: {net.layer(TARGET).name}")
print("source layers and their hierarchy distances:")
dists = []
for lid in range(net.n_layers):
    if lid == TARGET:
        continue
    d = tree_distance(hierarchy, hierarchy.element_for_layer(lid), target_elem)
    dists.append(d)
    print(f"  {net.layer(lid).name}: distance {d}")
print(f"exp weights: {[round(float(w), 3) for w in transfer_weights(dists, 'exp')]}")
print(f"uniform    : {[round(float(w), 3) for w in transfer_weights(dists, 'uniform')]}")

print("\nscoring layer0 with classifiers trained only on the other layers...")
for scheme in ("exp", "inverse", "uniform"):
    report = transfer_predict(emb, labels, TARGET, hierarchy, net,
                              weighting=scheme, config=eval_cfg)
    print(f"  weighting={scheme:8s} mean AUROC {report.mean_auroc():.3f} "
          f"over {len(report.rows)} functions")

non_transfer = cross_validate(emb, labels.restrict_layers([TARGET]), net,
                              config=eval_cfg)
print(f"\nnon-transfer upper bound (cross-validated on layer0's own labels): "
      f"{non_transfer.mean_auroc():.3f}")
