"""Downstream tasks: multi-label node classification, cross-layer transfer,
and 2-D projection of embedding tables.

Classification is one-vs-all per (layer, function) with a linear model
trained by SGD on the modified Huber loss plus an elastic-net penalty.
Cross-validation folds are assigned per node (not per (node, layer) pair),
so a held-out node is held out in every layer simultaneously.  Transfer scores a label-free target
layer with classifiers trained on the other layers, averaged with weights
that decay with hierarchy distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import rng
from ._sgd import HAVE_NUMBA, njit
from .embeddings import ElementTable, EmbeddingSet
from .graph import Hierarchy, MultiLayerNetwork, tree_distance
from .io import LabelSet


# ---------------------------------------------------------------------------
# modified Huber loss

def modified_huber_loss(z):
    """Pointwise loss at margin z = y * (w.x + b):
    ``max(0, 1 - z)^2`` for z >= -1, ``-4 z`` below."""
    z = np.asarray(z, dtype=np.float64)
    quad = np.maximum(0.0, 1.0 - z) ** 2
    return np.where(z >= -1.0, quad, -4.0 * z)


def modified_huber_dloss(z):
    """Derivative with respect to z (continuous everywhere; the two branch
    derivatives agree at z = -1)."""
    z = np.asarray(z, dtype=np.float64)
    mid = -2.0 * np.maximum(0.0, 1.0 - z)
    return np.where(z >= -1.0, np.where(z >= 1.0, 0.0, mid), -4.0)


@dataclass(frozen=True)
class ClassifierConfig:
    strength: float = 1e-4
    l1_ratio: float = 0.15
    epochs: int = 40
    eta0: float = 0.5
    seed: int = 0


def _fit_sgd_impl(X, y, strength, l1_ratio, epochs, eta0, perms):
    """Prox-SGD: gradient step on loss + L2 part, soft-threshold for the L1
    part, tail-averaged over the last half of the schedule."""
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    avg_w = np.zeros(d)
    avg_b = 0.0
    n_avg = 0
    total = n * epochs
    l2 = strength * (1.0 - l1_ratio)
    step = 0
    for ep in range(epochs):
        for t in range(n):
            i = perms[ep, t]
            eta = eta0 * max(0.01, 1.0 - step / total)
            z = 0.0
            for k in range(d):
                z += w[k] * X[i, k]
            z = (z + b) * y[i]
            if z >= 1.0:
                dz = 0.0
            elif z >= -1.0:
                dz = -2.0 * (1.0 - z)
            else:
                dz = -4.0
            coef = dz * y[i]
            shrink = 1.0 - eta * l2
            l1 = eta * strength * l1_ratio
            for k in range(d):
                wk = w[k] * shrink - eta * coef * X[i, k]
                if wk > l1:
                    wk -= l1
                elif wk < -l1:
                    wk += l1
                else:
                    wk = 0.0
                w[k] = wk
            b -= eta * coef
            step += 1
            if 2 * step > total:
                for k in range(d):
                    avg_w[k] += w[k]
                avg_b += b
                n_avg += 1
    if n_avg > 0:
        for k in range(d):
            avg_w[k] /= n_avg
        avg_b /= n_avg
        return avg_w, avg_b
    return w, b


_fit_sgd = njit(cache=True)(_fit_sgd_impl) if HAVE_NUMBA else _fit_sgd_impl


@dataclass
class LinearClassifier:
    weights: np.ndarray
    bias: float

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0).astype(np.int64)

    def predict_proba(self, X) -> np.ndarray:
        """Probability estimate from the clipped margin, the standard
        calibration for this loss."""
        return (np.clip(self.decision_function(X), -1.0, 1.0) + 1.0) / 2.0


def train_classifier(X, y, config: ClassifierConfig = ClassifierConfig(),
                     gen: np.random.Generator | None = None) -> LinearClassifier:
    """One-vs-all linear classifier; ``y`` holds two classes as {0, 1} or
    {-1, +1}."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    signs = np.where(y > 0, 1.0, -1.0)
    if len(np.unique(signs)) < 2:
        raise ValueError("training data contains a single class")
    if gen is None:
        gen = rng.stream(config.seed, rng.CLASSIFIER)
    perms = np.stack([gen.permutation(len(y)) for _ in range(config.epochs)])
    w, b = _fit_sgd(X, signs, config.strength, config.l1_ratio,
                    config.epochs, config.eta0, perms)
    if not (np.all(np.isfinite(w)) and np.isfinite(b)):
        raise RuntimeError("classifier training diverged; lower eta0")
    return LinearClassifier(np.asarray(w), float(b))


# ---------------------------------------------------------------------------
# ranking metrics

def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midrank tie handling: the probability that a
    random positive outscores a random negative."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs at least one positive and one negative")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Area under the precision-recall curve by step-wise interpolation,
    evaluating tied scores as one group."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise ValueError("AUPRC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    tp = np.cumsum(labels[order])
    k = np.arange(1, len(s) + 1)
    # last index of each tie group
    group_end = np.append(s[1:] != s[:-1], True)
    tp_g = tp[group_end]
    k_g = k[group_end]
    precision = tp_g / k_g
    recall = tp_g / n_pos
    return float(np.sum(np.diff(np.concatenate(([0.0], recall))) * precision))


def _median_hiqd(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return float("nan"), float("nan")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return float(med), float((q3 - q1) / 2.0)


# ---------------------------------------------------------------------------
# reports

@dataclass
class ReportRow:
    layer: str
    function: str
    auroc: float
    auprc: float
    n_used: int = 0
    n_skipped: int = 0


@dataclass
class EvalReport:
    rows: list[ReportRow]
    meta: dict = field(default_factory=dict)

    def aggregates(self) -> dict:
        """Two aggregations, both median and half-interquartile distance:
        over all (layer, function) pairs, and over functions (per-function
        layer means first)."""
        out = {}
        for metric in ("auroc", "auprc"):
            vals = [getattr(r, metric) for r in self.rows]
            med, hiqd = _median_hiqd(vals)
            out.setdefault("pairs", {})[metric] = (med, hiqd)
            by_fn: dict[str, list[float]] = {}
            for r in self.rows:
                by_fn.setdefault(r.function, []).append(getattr(r, metric))
            med, hiqd = _median_hiqd([float(np.mean(v)) for v in by_fn.values()])
            out.setdefault("functions", {})[metric] = (med, hiqd)
        return out

    def mean_auroc(self) -> float:
        return float(np.mean([r.auroc for r in self.rows])) if self.rows else float("nan")

    def mean_auprc(self) -> float:
        return float(np.mean([r.auprc for r in self.rows])) if self.rows else float("nan")

    def to_tsv(self) -> str:
        lines = []
        for key, val in sorted(self.meta.items()):
            lines.append(f"# {key}: {val}")
        lines.append("# layer\tfunction\tauroc\tauprc\tused\tskipped")
        for r in self.rows:
            lines.append(f"{r.layer}\t{r.function}\t{r.auroc:.6f}\t{r.auprc:.6f}"
                         f"\t{r.n_used}\t{r.n_skipped}")
        agg = self.aggregates()
        for scope in ("pairs", "functions"):
            a_med, a_hiqd = agg[scope]["auroc"]
            p_med, p_hiqd = agg[scope]["auprc"]
            lines.append(f"# aggregate[{scope}]\tauroc\t{a_med:.6f}±{a_hiqd:.6f}"
                         f"\tauprc\t{p_med:.6f}±{p_hiqd:.6f}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EvalConfig:
    folds: int = 10
    min_annotated: int = 15
    seed: int = 0
    classifier: ClassifierConfig = ClassifierConfig()


def _resolve_features(features, network: MultiLayerNetwork) -> dict[int, ElementTable]:
    """Accept an EmbeddingSet (leaf tables matched to layers by name) or an
    explicit layer_id -> table mapping."""
    if isinstance(features, EmbeddingSet):
        return features.leaf_tables(network.layer_names())
    return dict(features)


def cross_validate(features, labels: LabelSet, network: MultiLayerNetwork, *,
                   config: EvalConfig = EvalConfig()) -> EvalReport:
    """Node-level k-fold evaluation of one-vs-all classifiers.

    Folds partition the labeled nodes across all layers jointly; for every
    (layer, function) with at least ``min_annotated`` positives, each fold
    trains on the remaining nodes' layer embeddings and scores the held-out
    ones.  Folds whose training or test split is single-class are skipped
    and counted.
    """
    tables = _resolve_features(features, network)
    annotated = labels.labeled_nodes()
    if len(annotated) == 0:
        return EvalReport([], {"note": "empty label set"})
    gen = rng.stream(config.seed, rng.FOLDS)
    shuffled = annotated[gen.permutation(len(annotated))]
    fold_of = {int(u): k % config.folds for k, u in enumerate(shuffled)}

    rows = []
    dropped = 0
    layer_ids = sorted({lid for _, lid, _ in labels.rows})
    for layer_id in layer_ids:
        table = tables[layer_id]
        universe = labels.universe(layer_id)
        X = table.vectors[table.rows_for(universe)]
        folds = np.array([fold_of[int(u)] for u in universe])
        for fn_idx, function in enumerate(labels.functions_in_layer(layer_id)):
            positives = labels.positives(layer_id, function)
            if len(positives) < config.min_annotated:
                continue
            y = np.isin(universe, positives)
            aurocs, auprcs, skipped = [], [], 0
            for k in range(config.folds):
                test = folds == k
                train = ~test
                if (y[train].sum() in (0, train.sum())) or (y[test].sum() in (0, test.sum())):
                    skipped += 1
                    continue
                clf_gen = rng.stream(config.seed, rng.CLASSIFIER, layer_id, fn_idx, k)
                clf = train_classifier(X[train], y[train], config.classifier, gen=clf_gen)
                s = clf.decision_function(X[test])
                aurocs.append(auroc(s, y[test]))
                auprcs.append(auprc(s, y[test]))
            if aurocs:
                rows.append(ReportRow(network.layer(layer_id).name, function,
                                      float(np.mean(aurocs)), float(np.mean(auprcs)),
                                      n_used=len(aurocs), n_skipped=skipped))
            else:
                dropped += 1
    meta = {"task": "cross-validation", "folds": config.folds}
    if dropped:
        meta["dropped_rows"] = dropped
    return EvalReport(rows, meta)


# ---------------------------------------------------------------------------
# transfer to an unannotated layer

def transfer_weights(distances, scheme: str = "exp") -> np.ndarray:
    """Positive weights over source layers, normalized to sum 1.

    ``exp``: proportional to exp(-distance); ``inverse``: proportional to
    1/(1 + distance); ``uniform``: equal.  Both decaying schemes are
    heuristic stand-ins for hierarchy-informed weighting and reports label
    them as such.
    """
    d = np.asarray(distances, dtype=np.float64)
    if scheme == "exp":
        w = np.exp(-d)
    elif scheme == "inverse":
        w = 1.0 / (1.0 + d)
    elif scheme == "uniform":
        w = np.ones_like(d)
    else:
        raise ValueError(f"unknown weighting scheme {scheme!r}")
    return w / w.sum()


def transfer_predict(features, labels: LabelSet, target_layer_id: int,
                     hierarchy: Hierarchy, network: MultiLayerNetwork, *,
                     weighting: str = "exp",
                     config: EvalConfig = EvalConfig()) -> EvalReport:
    """Score the target layer using only classifiers trained on other layers.

    The target's annotations are excluded from training entirely; for every
    function, one classifier per annotated source layer is applied to the
    target layer's embeddings and the per-source probability estimates are
    combined with hierarchy-distance weights.  The held-back target labels
    serve as ground truth.
    """
    tables = _resolve_features(features, network)
    target_elem = hierarchy.element_for_layer(target_layer_id)
    target_table = tables[target_layer_id]
    target_universe = labels.universe(target_layer_id)
    if len(target_universe) == 0:
        return EvalReport([], {"note": "target layer has no labels to score against"})
    Xt = target_table.vectors[target_table.rows_for(target_universe)]
    source_labels = labels.restrict_layers(
        [lid for lid in range(network.n_layers) if lid != target_layer_id])

    rows = []
    skipped_fns = 0
    for fn_idx, function in enumerate(labels.functions_in_layer(target_layer_id)):
        y = np.isin(target_universe, labels.positives(target_layer_id, function))
        if y.sum() == 0 or y.sum() == len(y):
            skipped_fns += 1
            continue
        sources = []
        for lid in source_labels.layers_with(function):
            pos = source_labels.positives(lid, function)
            uni = source_labels.universe(lid)
            if len(pos) >= config.min_annotated and 0 < len(pos) < len(uni):
                sources.append(lid)
        if not sources:
            skipped_fns += 1
            continue
        dists = [tree_distance(hierarchy, hierarchy.element_for_layer(s), target_elem)
                 for s in sources]
        weights = transfer_weights(dists, weighting)
        combined = np.zeros(len(target_universe))
        for w, lid in zip(weights, sources):
            table = tables[lid]
            uni = source_labels.universe(lid)
            Xs = table.vectors[table.rows_for(uni)]
            ys = np.isin(uni, source_labels.positives(lid, function))
            clf_gen = rng.stream(config.seed, rng.CLASSIFIER, lid, fn_idx)
            clf = train_classifier(Xs, ys, config.classifier, gen=clf_gen)
            combined += w * clf.predict_proba(Xt)
        rows.append(ReportRow(network.layer(target_layer_id).name, function,
                              auroc(combined, y), auprc(combined, y),
                              n_used=len(sources), n_skipped=0))
    meta = {"task": "transfer", "target": network.layer(target_layer_id).name,
            "weighting": weighting,
            "weighting_note": "distance-decay weighting is a documented heuristic"}
    if skipped_fns:
        meta["skipped_functions"] = skipped_fns
    return EvalReport(rows, meta)


# ---------------------------------------------------------------------------
# 2-D projection

def project_2d(table) -> np.ndarray:
    """Top-2 principal components of the centered table (n x 2 scores).

    Component signs follow the largest-magnitude loading so output is
    deterministic; the x column always carries at least as much variance as
    the y column.  Raw vectors should be exported alongside for external
    non-linear embedding tools.
    """
    X = table.vectors if isinstance(table, ElementTable) else np.asarray(table, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a nonempty 2-D table")
    if X.shape[1] < 2:
        raise ValueError("need at least 2 feature dimensions to project")
    Xc = X - X.mean(axis=0)
    u, s, vt = np.linalg.svd(Xc, full_matrices=False)
    for j in range(2):
        pivot = np.argmax(np.abs(vt[j]))
        if vt[j, pivot] < 0:
            u[:, j] = -u[:, j]
    return u[:, :2] * s[:2]
