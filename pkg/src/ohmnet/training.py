"""Joint training of per-layer skip-gram objectives with hierarchical coupling.

The optimized objective is the sum over layers of skip-gram neighborhood
log-likelihoods (negative-sampling surrogate) minus ``lam`` times the sum
over hierarchy elements of quadratic parent-pull penalties
``0.5 * ||f_i(u) - f_parent(i)(u)||^2``.

Training alternates over hierarchy elements: each bound leaf receives one
stochastic-gradient epoch over its walk-derived (center, context) pairs, and
each internal element receives its exact coordinate minimizer -- the average
of the parent vector and the vectors of all children containing the node.

Two execution contracts:

* ``sequential`` -- single worker, fixed streams, bit-reproducible; the
  reference mode for every equality-based test;
* ``parallel`` -- lock-free pair updates racing benignly on shared tables
  (results nondeterministic); the internal sweep stays race-free because
  each node's row has a single owner.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from ._sgd import extract_pairs, set_threads, sgns_epoch, sgns_epoch_hogwild
from .embeddings import ElementTable, EmbeddingSet
from .graph import Hierarchy, MultiLayerNetwork, validate
from .walks import AliasTable, WalkCorpus

# Per-step parent-pull coefficient min(lam * alpha, REG_CAP): capping at 1
# makes the pull land exactly on the parent instead of overshooting, so the
# distance to the parent contracts monotonically for any lam.
REG_CAP = 1.0

ALPHA_FLOOR_FRACTION = 1e-4

_STATE_FILE = "train_state.json"


class TrainingDiverged(RuntimeError):
    """Non-finite values appeared in an embedding table."""


class ValidationFailed(ValueError):
    """Inputs rejected by :func:`ohmnet.graph.validate`."""


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 128
    lam: float = 0.1
    negatives: int = 5
    window: int = 10
    alpha0: float = 0.025
    outer_iters: int = 10
    tol: float = 1e-3
    seed: int = 0
    mode: str = "sequential"
    workers: int = 4
    noise_exponent: float = 0.75

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if self.outer_iters < 1:
            raise ValueError("outer_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.mode not in ("sequential", "parallel"):
            raise ValueError("mode must be 'sequential' or 'parallel'")


# ---------------------------------------------------------------------------
# per-pair objective and gradients (oracle-facing reference implementation)

def log_sigmoid(z):
    return -np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def pair_objective(center, context, negatives, lam: float = 0.0, parent=None) -> float:
    """Value of the per-pair objective being ascended.

    ``log sigma(center . context) + sum_k log sigma(-center . neg_k)
    - lam * 0.5 * ||center - parent||^2``.
    """
    center = np.asarray(center, dtype=np.float64)
    negatives = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    val = float(log_sigmoid(center @ np.asarray(context, dtype=np.float64)))
    val += float(log_sigmoid(-(negatives @ center)).sum())
    if lam > 0.0:
        diff = center - np.asarray(parent, dtype=np.float64)
        val -= lam * 0.5 * float(diff @ diff)
    return val


def full_softmax_distribution(center, candidates) -> np.ndarray:
    """Exact next-node likelihood: softmax of dot products of the center's
    vector with every candidate vector.

    Only usable at tiny scales; the trainer optimizes the negative-sampling
    surrogate of this likelihood instead.
    """
    z = np.asarray(candidates, dtype=np.float64) @ np.asarray(center, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def pair_gradients(center, context, negatives, lam: float = 0.0, parent=None):
    """Analytic gradients of :func:`pair_objective` with respect to every
    participating vector: (center, context, negatives, parent)."""
    center = np.asarray(center, dtype=np.float64)
    context = np.asarray(context, dtype=np.float64)
    negatives = np.atleast_2d(np.asarray(negatives, dtype=np.float64))

    def sigma(z):
        return 1.0 / (1.0 + np.exp(-z))

    g_ctx_coef = sigma(-(center @ context))           # 1 - sigma(z_pos)
    g_neg_coef = sigma(negatives @ center)            # sigma(z_neg), shape (k,)
    g_center = g_ctx_coef * context - g_neg_coef @ negatives
    g_context = g_ctx_coef * center
    g_negatives = -np.outer(g_neg_coef, center)
    if lam > 0.0:
        parent = np.asarray(parent, dtype=np.float64)
        g_center = g_center - lam * (center - parent)
        g_parent = lam * (center - parent)
    else:
        g_parent = np.zeros_like(center)
    return g_center, g_context, g_negatives, g_parent


def skipgram_pair_update(table: ElementTable, context_table: ElementTable,
                         u: int, v: int, negatives, alpha: float) -> None:
    """Apply one ascent step for the pair (u, v) with the given negative
    node ids, mutating the tables in place.

    Output-side vectors are updated with the pre-step center vector; the
    center then receives the accumulated gradient (the same ordering the
    epoch kernel uses).  The parent-pull term is applied separately by
    :func:`leaf_epoch`, not here.
    """
    u_row = table.row(u)
    v_row = context_table.row(v)
    neg_rows = [context_table.row(int(m)) for m in np.atleast_1d(negatives)]
    center = table.vectors[u_row].copy()
    g_center, g_context, g_negatives, _ = pair_gradients(
        center, context_table.vectors[v_row], context_table.vectors[neg_rows])
    context_table.vectors[v_row] += alpha * g_context
    for k, m_row in enumerate(neg_rows):
        context_table.vectors[m_row] += alpha * g_negatives[k]
    table.vectors[u_row] += alpha * g_center


# ---------------------------------------------------------------------------
# regularizer queries

def regularizer_value(emb: EmbeddingSet, hierarchy: Hierarchy, u: int, i: int) -> float:
    """Parent-pull penalty for node u at element i:
    ``0.5 * ||f_i(u) - f_parent(i)(u)||^2`` (0 at the root, which has no
    parent)."""
    parent = hierarchy.elements[i].parent
    if parent is None:
        return 0.0
    diff = emb.tables[i].vector(u) - emb.tables[parent].vector(u)
    return 0.5 * float(diff @ diff)


def regularizer_total(emb: EmbeddingSet, hierarchy: Hierarchy, i: int) -> float:
    """Sum of per-node penalties over element i's scope."""
    parent = hierarchy.elements[i].parent
    if parent is None:
        return 0.0
    tbl = emb.tables[i]
    prows = emb.tables[parent].rows_for(tbl.ids)
    diff = tbl.vectors - emb.tables[parent].vectors[prows]
    return 0.5 * float(np.sum(diff * diff))


def coupling_objective(emb: EmbeddingSet, hierarchy: Hierarchy) -> float:
    """Sum of :func:`regularizer_total` over all elements (the quantity the
    internal sweep minimizes with leaves held fixed)."""
    return sum(regularizer_total(emb, hierarchy, i) for i in range(len(hierarchy)))


# ---------------------------------------------------------------------------
# initialization

def init_embeddings(network: MultiLayerNetwork, hierarchy: Hierarchy,
                    config: TrainConfig) -> EmbeddingSet:
    """Fresh tables: input vectors uniform in [-0.5/d, 0.5/d] per coordinate,
    context vectors zero; deterministic per seed.

    Leaf streams are keyed by layer id so an independent single-layer run
    reproduces the same initial table.
    """
    from .graph import all_scopes

    d = config.dim
    scopes = all_scopes(hierarchy, network)
    tables, context = [], {}
    for i, e in enumerate(hierarchy.elements):
        ids = scopes[i]
        if e.leaf_binding is not None:
            gen = rng.stream(config.seed, rng.INIT, 0, e.leaf_binding)
        else:
            gen = rng.stream(config.seed, rng.INIT, 1, i)
        vecs = (gen.random((len(ids), d)) - 0.5) / d
        tables.append(ElementTable(ids, vecs))
        if e.leaf_binding is not None:
            context[i] = ElementTable(ids, np.zeros((len(ids), d)))
    return EmbeddingSet(dim=d, node_names=network.names.names,
                        element_names=hierarchy.names(), tables=tables, context=context)


# ---------------------------------------------------------------------------
# leaf epochs

class _LeafRuntime:
    """Cached per-layer buffers: pair list, noise table, parent row map."""

    def __init__(self, layer_id: int, fin: np.ndarray, fout: np.ndarray,
                 ids: np.ndarray, universe: int, walks, config: TrainConfig,
                 parent_vecs: np.ndarray | None = None,
                 parent_rows: np.ndarray | None = None):
        self.layer_id = layer_id
        self.fin = fin
        self.fout = fout
        self.config = config
        n = len(ids)
        row_of = np.full(universe, -1, dtype=np.int64)
        row_of[ids] = np.arange(n, dtype=np.int64)
        if walks:
            flat = row_of[np.concatenate(walks)]
            if np.any(flat < 0):
                raise ValueError("walk visits a node outside the layer's scope")
            offsets = np.zeros(len(walks) + 1, dtype=np.int64)
            np.cumsum([len(w) for w in walks], out=offsets[1:])
            self.pairs = extract_pairs(flat, offsets, config.window)
            counts = np.bincount(flat, minlength=n).astype(np.float64)
        else:
            self.pairs = np.empty((0, 2), dtype=np.int64)
            counts = np.zeros(n)
        self.noise = AliasTable(counts ** config.noise_exponent) if counts.sum() > 0 else None
        self.total_pairs = len(self.pairs) * config.outer_iters
        touched = np.zeros(n, dtype=bool)
        if len(self.pairs):
            touched[self.pairs[:, 0]] = True
        self.untouched_rows = np.where(~touched)[0]
        self.parent_vecs = parent_vecs
        self.parent_rows = parent_rows
        self._dummy = np.zeros((1, fin.shape[1]), dtype=np.float64)
        self._dummy_rows = np.zeros(max(n, 1), dtype=np.int64)

    def run_epoch(self, outer_iter: int, lam: float) -> None:
        cfg = self.config
        n_pairs = len(self.pairs)
        # step size if this epoch applies only the parent pull (no pairs)
        alpha_end = max(cfg.alpha0 * (1.0 - outer_iter / cfg.outer_iters),
                        cfg.alpha0 * ALPHA_FLOOR_FRACTION)
        if n_pairs:
            gen = rng.stream(cfg.seed, rng.SGD, self.layer_id, outer_iter)
            order = gen.permutation(n_pairs)
            pairs = self.pairs[order]
            negs = self.noise.sample_many(gen, (n_pairs, cfg.negatives))
            done = outer_iter * n_pairs
            alphas = cfg.alpha0 * (1.0 - (done + np.arange(n_pairs)) / self.total_pairs)
            np.maximum(alphas, cfg.alpha0 * ALPHA_FLOOR_FRACTION, out=alphas)
            use_reg = lam > 0.0 and self.parent_vecs is not None
            kernel = sgns_epoch if cfg.mode == "sequential" else sgns_epoch_hogwild
            if cfg.mode == "parallel":
                set_threads(cfg.workers)
            kernel(self.fin, self.fout, pairs, negs, alphas,
                   lam if use_reg else 0.0, REG_CAP,
                   self.parent_vecs if use_reg else self._dummy,
                   self.parent_rows if use_reg else self._dummy_rows)
            alpha_end = float(alphas[-1])
        if lam > 0.0 and self.parent_vecs is not None and len(self.untouched_rows):
            # nodes with no center occurrence this epoch still feel the pull
            c = min(lam * alpha_end, REG_CAP)
            rows = self.untouched_rows
            self.fin[rows] += c * (self.parent_vecs[self.parent_rows[rows]] - self.fin[rows])
        if not np.all(np.isfinite(self.fin)) or not np.all(np.isfinite(self.fout)):
            raise TrainingDiverged(
                f"non-finite values in layer {self.layer_id} after epoch {outer_iter}; "
                "reduce alpha0 or lam")


def _leaf_runtime(emb: EmbeddingSet, network: MultiLayerNetwork, hierarchy: Hierarchy,
                  corpus: WalkCorpus, i: int, config: TrainConfig) -> _LeafRuntime:
    e = hierarchy.elements[i]
    if e.leaf_binding is None:
        raise ValueError(f"element {e.name!r} is not bound to a layer")
    tbl = emb.tables[i]
    parent_vecs = parent_rows = None
    if e.parent is not None:
        parent_tbl = emb.tables[e.parent]
        parent_vecs = parent_tbl.vectors
        parent_rows = parent_tbl.rows_for(tbl.ids)
    return _LeafRuntime(e.leaf_binding, tbl.vectors, emb.context[i].vectors, tbl.ids,
                        network.n_nodes, corpus.layer_walks(e.leaf_binding), config,
                        parent_vecs, parent_rows)


def leaf_epoch(emb: EmbeddingSet, network: MultiLayerNetwork, hierarchy: Hierarchy,
               corpus: WalkCorpus, i: int, config: TrainConfig,
               outer_iter: int = 0) -> None:
    """One stochastic-gradient epoch over leaf element i's pairs, in place.

    Pairs are shuffled per epoch; the step size decays linearly across the
    whole schedule (``outer_iters`` epochs) down to ``alpha0 * 1e-4``.  Each
    center update also receives the parent-pull gradient
    ``-lam * alpha * (f_i(u) - f_parent(u))``; scope nodes that never occur
    as a center get one end-of-epoch pull so they track the parent too.
    """
    _leaf_runtime(emb, network, hierarchy, corpus, i, config).run_epoch(outer_iter, config.lam)


# ---------------------------------------------------------------------------
# closed-form updates for internal elements

def internal_update(emb: EmbeddingSet, hierarchy: Hierarchy, i: int) -> float:
    """Exact coordinate minimizer for internal element i, applied in place.

    For every node u in scope(i): the average of the parent vector (dropped
    at the root) and the vectors of all children whose scope contains u.
    Returns the maximum per-coordinate change.
    """
    e = hierarchy.elements[i]
    if not e.children:
        raise ValueError(f"element {e.name!r} is a leaf; internal_update needs children")
    tbl = emb.tables[i]
    if tbl.n == 0:
        return 0.0
    acc = np.zeros_like(tbl.vectors)
    cnt = np.zeros(tbl.n, dtype=np.float64)
    if e.parent is not None:
        prows = emb.tables[e.parent].rows_for(tbl.ids)
        acc += emb.tables[e.parent].vectors[prows]
        cnt += 1.0
    for c in e.children:
        child = emb.tables[c]
        if child.n == 0:
            continue
        rows = tbl.rows_for(child.ids)
        acc[rows] += child.vectors
        cnt[rows] += 1.0
    present = cnt > 0
    new = np.where(present[:, None], acc / np.maximum(cnt, 1.0)[:, None], tbl.vectors)
    delta = float(np.max(np.abs(new - tbl.vectors)))
    tbl.vectors[:] = new
    return delta


def element_schedule(hierarchy: Hierarchy) -> list[int]:
    """Deterministic order for one outer iteration: bound leaves by layer id,
    then internal elements deepest first (so each sweep propagates leaf
    information up to the root)."""
    leaves = sorted((e.leaf_binding, i) for i, e in enumerate(hierarchy.elements)
                    if e.leaf_binding is not None)
    internal = [i for i in range(len(hierarchy)) if hierarchy.elements[i].children]
    internal.sort(key=lambda i: (-hierarchy.depth(i), i))
    return [i for _, i in leaves] + internal


# ---------------------------------------------------------------------------
# full training loop

class Trainer:
    """Holds the mutable state of one training run."""

    def __init__(self, network: MultiLayerNetwork, hierarchy: Hierarchy,
                 corpus: WalkCorpus, config: TrainConfig,
                 emb: EmbeddingSet | None = None):
        report = validate(network, hierarchy)
        if not report.ok:
            raise ValidationFailed(f"invalid inputs:\n{report}")
        if corpus.n_layers != network.n_layers:
            raise ValueError(f"corpus covers {corpus.n_layers} layers, "
                             f"network has {network.n_layers}")
        self.network = network
        self.hierarchy = hierarchy
        self.config = config
        self.emb = emb if emb is not None else init_embeddings(network, hierarchy, config)
        self.schedule = element_schedule(hierarchy)
        self._runtimes = {i: _leaf_runtime(self.emb, network, hierarchy, corpus, i, config)
                          for i, e in enumerate(hierarchy.elements)
                          if e.leaf_binding is not None}

    def outer_iteration(self, it: int) -> float:
        """Run one sweep over all elements; returns the max per-coordinate
        change across internal tables."""
        max_delta = 0.0
        for i in self.schedule:
            if i in self._runtimes:
                self._runtimes[i].run_epoch(it, self.config.lam)
            else:
                max_delta = max(max_delta, internal_update(self.emb, self.hierarchy, i))
        return max_delta

    def run(self, checkpoint_dir=None, start_iter: int = 0) -> EmbeddingSet:
        has_internal = any(e.children for e in self.hierarchy.elements)
        for it in range(start_iter, self.config.outer_iters):
            delta = self.outer_iteration(it)
            if checkpoint_dir is not None:
                dump_checkpoint(self.emb, checkpoint_dir, completed=it + 1)
            if has_internal and delta < self.config.tol:
                break
        return self.emb


def dump_checkpoint(emb: EmbeddingSet, dirpath, completed: int) -> None:
    from .io import write_embeddings

    write_embeddings(emb, dirpath)
    Path(dirpath, _STATE_FILE).write_text(
        json.dumps({"completed_outer_iters": completed}), encoding="utf-8")


def load_checkpoint(dirpath) -> tuple[EmbeddingSet, int]:
    from .io import read_embeddings

    emb = read_embeddings(dirpath)
    state = json.loads(Path(dirpath, _STATE_FILE).read_text(encoding="utf-8"))
    return emb, int(state["completed_outer_iters"])


def train(network: MultiLayerNetwork, hierarchy: Hierarchy, corpus: WalkCorpus,
          config: TrainConfig, checkpoint_dir=None, resume_from=None) -> EmbeddingSet:
    """Train all element tables.

    Each outer iteration sweeps the element schedule (leaf epochs plus
    closed-form internal updates); training stops after ``outer_iters``
    iterations or as soon as the internal tables move less than ``tol`` in
    any coordinate.  With ``checkpoint_dir`` set, the full set is dumped
    after every outer iteration and :func:`train` can resume from it via
    ``resume_from`` (resumed runs reproduce uninterrupted ones exactly in
    sequential mode).
    """
    start_iter = 0
    emb = None
    if resume_from is not None:
        emb, start_iter = load_checkpoint(resume_from)
    trainer = Trainer(network, hierarchy, corpus, config, emb=emb)
    return trainer.run(checkpoint_dir=checkpoint_dir, start_iter=start_iter)


def train_single_layer(network: MultiLayerNetwork, layer_id: int, layer_walks,
                       config: TrainConfig) -> tuple[ElementTable, ElementTable]:
    """Baseline: skip-gram training of one layer with no coupling.

    Uses the same per-layer streams as :func:`train`, so a joint run with
    lam = 0 in sequential mode produces bit-identical leaf tables.
    """
    layer = network.layer(layer_id)
    ids = layer.node_ids
    gen = rng.stream(config.seed, rng.INIT, 0, layer_id)
    fin = (gen.random((len(ids), config.dim)) - 0.5) / config.dim
    fout = np.zeros_like(fin)
    runtime = _LeafRuntime(layer_id, fin, fout, ids, network.n_nodes, layer_walks, config)
    for it in range(config.outer_iters):
        runtime.run_epoch(it, 0.0)
    return ElementTable(ids, fin), ElementTable(ids, fout)


def train_independent(network: MultiLayerNetwork, corpus: WalkCorpus,
                      config: TrainConfig) -> EmbeddingSet:
    """All layers trained independently; the result carries one table per
    layer (element names = layer names) and no internal elements."""
    tables, context = [], {}
    for layer_id in range(network.n_layers):
        tbl, ctx = train_single_layer(network, layer_id, corpus.layer_walks(layer_id), config)
        tables.append(tbl)
        context[layer_id] = ctx
    return EmbeddingSet(dim=config.dim, node_names=network.names.names,
                        element_names=network.layer_names(), tables=tables, context=context)
