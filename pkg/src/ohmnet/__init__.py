"""Hierarchy-coupled node embeddings for multi-layer networks.

The package learns one low-dimensional vector table per element of a layer
hierarchy: leaf tables are trained on per-layer random-walk neighborhoods
(skip-gram with negative sampling) while a quadratic parent-pull couples
tables along the tree; internal tables are updated in closed form.  The
learned tables feed multi-label node classification, cross-layer transfer,
and 2-D projection.
"""

__version__ = "0.1.0"

from .embeddings import ElementTable, EmbeddingSet
from .graph import (Hierarchy, HierarchyElement, Layer, MultiLayerNetwork,
                    NameIndex, ValidationReport, collapse_layers,
                    collapsed_network, single_element_hierarchy, subtree_scope,
                    tree_distance, validate)
from .io import (FormatError, LabelSet, LayerManifest, load_network,
                 read_edgelist, read_embeddings, read_hierarchy, read_labels,
                 read_manifest, read_walks, write_embeddings, write_walks)
from .evaluation import (ClassifierConfig, EvalConfig, EvalReport,
                         LinearClassifier, auprc, auroc, cross_validate,
                         modified_huber_loss, project_2d, train_classifier,
                         transfer_predict, transfer_weights)
from .synth import SynthConfig, generate
from .training import (TrainConfig, TrainingDiverged, init_embeddings,
                       internal_update, leaf_epoch, pair_gradients,
                       pair_objective, regularizer_total, regularizer_value,
                       skipgram_pair_update, train, train_independent,
                       train_single_layer)
from .walks import (AliasTable, BiasedWalker, WalkConfig, WalkCorpus,
                    build_transition, simulate_walks, transition_weights)

__all__ = [name for name in dir() if not name.startswith("_")]
