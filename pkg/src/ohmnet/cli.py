"""Command-line pipeline: synth -> walk -> train -> eval / transfer / project.

Every subcommand reads flags (environment overrides use the ``OHMNET_``
prefix, e.g. ``OHMNET_TRAIN_DIM``), optionally filled from a JSON config
file via ``--config`` (explicit flags win over the file, the file wins over
defaults), and writes a ``run_manifest.json`` next to its outputs recording
the resolved configuration and input digests.  Reruns of an identical
manifest in sequential mode produce identical outputs.
"""

from __future__ import annotations

import functools
import hashlib
import json
from pathlib import Path

import click
from click.core import ParameterSource

from . import __version__
from .embeddings import EmbeddingSet
from .evaluation import (EvalConfig, cross_validate, project_2d,
                         transfer_predict)
from .graph import (collapsed_network, single_element_hierarchy, validate)
from .io import (FormatError, load_network, read_embeddings, read_hierarchy,
                 read_labels, read_manifest, read_walks, walk_file_name,
                 write_embeddings, write_hierarchy, write_labels,
                 write_manifest_files, write_walks)
from .synth import SynthConfig, generate
from .training import (TrainConfig, TrainingDiverged, ValidationFailed, train,
                       train_independent)
from .walks import WalkConfig, WalkCorpus, simulate_walks

MANIFEST_NAME = "run_manifest.json"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


_LOCATION_KEYS = ("out", "checkpoint_dir")  # where results land, not what is computed


def _write_run_manifest(outdir, command: str, config: dict, inputs) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    data = {
        "command": command,
        "version": __version__,
        "seed": config.get("seed"),
        "config": {k: v for k, v in sorted(config.items()) if k not in _LOCATION_KEYS},
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    (outdir / MANIFEST_NAME).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")


def _apply_config(ctx: click.Context, params: dict) -> dict:
    """Fill parameters from the --config JSON file where the user gave no
    explicit flag or environment value."""
    config_path = params.pop("config", None)
    if not config_path:
        return params
    try:
        overrides = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"--config {config_path}: invalid JSON ({exc})")
    unknown = set(overrides) - set(params)
    if unknown:
        raise click.UsageError(f"--config {config_path}: unknown keys {sorted(unknown)}")
    out = dict(params)
    explicit = (ParameterSource.COMMANDLINE, ParameterSource.ENVIRONMENT)
    for key, val in overrides.items():
        if ctx.get_parameter_source(key) not in explicit:
            out[key] = val
    return out


def _fail_on(func):
    """Convert expected failures into exit code 1 with a stderr message."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (FormatError, ValidationFailed, TrainingDiverged, ValueError, KeyError) as exc:
            raise click.ClickException(str(exc))

    return wrapper


config_option = click.option("--config", type=click.Path(exists=True, dir_okay=False),
                             default=None, help="JSON file supplying defaults for any flag.")
seed_option = click.option("--seed", type=click.IntRange(min=0), default=0,
                           show_default=True, help="Master seed; all streams derive from it.")


@click.group(context_settings={"auto_envvar_prefix": "OHMNET",
                               "help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
def main():
    """Hierarchy-coupled node embeddings for multi-layer networks."""


# ---------------------------------------------------------------------------


@main.command()
@click.option("--out", type=click.Path(file_okay=False), required=True,
              help="Output directory for the generated dataset.")
@click.option("--nodes", type=click.IntRange(min=2), default=200, show_default=True,
              help="Nodes per layer (shared universe).")
@click.option("--layers", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--depth", type=click.IntRange(min=1), default=2, show_default=True,
              help="Hierarchy depth (layers must equal branching ** depth).")
@click.option("--communities", type=click.IntRange(min=2), default=4, show_default=True)
@click.option("--p-in", type=click.FloatRange(0, 1), default=0.1, show_default=True,
              help="Within-community edge probability.")
@click.option("--p-out", type=click.FloatRange(0, 1), default=0.01, show_default=True,
              help="Cross-community edge probability.")
@click.option("--divergence", type=click.FloatRange(0, 1), default=0.2, show_default=True,
              help="Fraction of assignments re-randomized per hierarchy edge.")
@seed_option
@config_option
@click.pass_context
@_fail_on
def synth(ctx, **params):
    """Generate a planted-partition multi-layer benchmark."""
    params = _apply_config(ctx, params)
    cfg = SynthConfig(nodes_per_layer=params["nodes"], layers=params["layers"],
                      hierarchy_depth=params["depth"], communities=params["communities"],
                      p_in=params["p_in"], p_out=params["p_out"],
                      divergence=params["divergence"], seed=params["seed"])
    network, hierarchy, labels = generate(cfg)
    out = Path(params["out"])
    write_manifest_files(network, out)
    write_hierarchy(hierarchy, out / "hierarchy.txt")
    write_labels(labels, network, out / "labels.txt")
    _write_run_manifest(out, "synth", params, [])
    click.echo(f"wrote {network.n_layers} layers, {network.n_nodes} nodes, "
               f"{len(labels)} labels to {out}")


@main.command()
@click.option("--layers", "layers_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Layer manifest (name path per line).")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--walks", type=click.IntRange(min=1), default=10, show_default=True,
              help="Walks started per node.")
@click.option("--length", type=click.IntRange(min=1), default=80, show_default=True,
              help="Steps per walk (a walk visits length+1 nodes).")
@click.option("--p", type=click.FloatRange(min=0, min_open=True), default=1.0,
              show_default=True, help="Return bias (1/p on backtracking steps).")
@click.option("--q", type=click.FloatRange(min=0, min_open=True), default=1.0,
              show_default=True, help="In-out bias (1/q on outward steps).")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@seed_option
@config_option
@click.pass_context
@_fail_on
def walk(ctx, **params):
    """Sample the walk corpus and dump it (one walk per line)."""
    params = _apply_config(ctx, params)
    network = load_network(params["layers_path"])
    cfg = WalkConfig(walks_per_node=params["walks"], walk_length=params["length"],
                     p=params["p"], q=params["q"], seed=params["seed"],
                     workers=params["workers"])
    corpus = simulate_walks(network, cfg)
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    for layer in network.layers:
        write_walks(corpus.layer_walks(layer.layer_id), network,
                    out / walk_file_name(layer.name))
    inputs = [params["layers_path"]] + [p for _, p in read_manifest(params["layers_path"]).entries]
    _write_run_manifest(out, "walk", params, inputs)
    total = sum(len(w) for w in corpus.walks)
    click.echo(f"wrote {total} walks to {out}")


def _load_corpus(corpus_dir, network) -> WalkCorpus:
    walks = []
    for layer in network.layers:
        path = Path(corpus_dir) / walk_file_name(layer.name)
        if not path.exists():
            raise FormatError(f"{path}: missing walk file for layer {layer.name!r}")
        walks.append(read_walks(path, network))
    return WalkCorpus(walks)


@main.command()
@click.option("--layers", "layers_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Layer manifest.")
@click.option("--hierarchy", "hierarchy_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="child-parent hierarchy file (not used by --independent).")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--dim", type=click.IntRange(min=1), default=128, show_default=True,
              help="Embedding dimensionality.")
@click.option("--lambda", "lam", type=click.FloatRange(min=0), default=0.1,
              show_default=True, help="Hierarchical coupling strength.")
@click.option("--negatives", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--window", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--alpha0", type=click.FloatRange(min=0, min_open=True), default=0.025,
              show_default=True, help="Initial SGD step size.")
@click.option("--outer-iters", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=1e-3,
              show_default=True, help="Stop when internal tables move less than this.")
@click.option("--walks", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--length", type=click.IntRange(min=1), default=80, show_default=True)
@click.option("--p", type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True)
@click.option("--q", type=click.FloatRange(min=0, min_open=True), default=1.0, show_default=True)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Reuse a dumped walk corpus instead of sampling.")
@click.option("--mode", type=click.Choice(["sequential", "parallel"]), default="sequential",
              show_default=True, help="sequential is bit-reproducible; parallel is lock-free.")
@click.option("--threads", type=click.IntRange(min=1), default=4, show_default=True,
              help="Worker cap in parallel mode.")
@click.option("--independent", is_flag=True, help="Baseline: train each layer separately.")
@click.option("--collapsed", is_flag=True,
              help="Baseline: train one table on the weight-summed union of layers.")
@click.option("--checkpoint-dir", type=click.Path(file_okay=False), default=None,
              help="Dump the embedding set here after every outer iteration.")
@seed_option
@config_option
@click.pass_context
@_fail_on
def train_cmd(ctx, **params):
    """Learn embeddings for every hierarchy element."""
    params = _apply_config(ctx, params)
    if params["independent"] and params["collapsed"]:
        raise click.UsageError("--independent and --collapsed are mutually exclusive")
    network = load_network(params["layers_path"])
    inputs = [params["layers_path"]] + [p for _, p in read_manifest(params["layers_path"]).entries]

    walk_cfg = WalkConfig(walks_per_node=params["walks"], walk_length=params["length"],
                          p=params["p"], q=params["q"], seed=params["seed"])
    train_cfg = TrainConfig(dim=params["dim"], lam=params["lam"],
                            negatives=params["negatives"], window=params["window"],
                            alpha0=params["alpha0"], outer_iters=params["outer_iters"],
                            tol=params["tol"], seed=params["seed"], mode=params["mode"],
                            workers=params["threads"])

    if params["collapsed"]:
        network = collapsed_network(network)
        hierarchy = single_element_hierarchy("collapsed")
    elif params["independent"]:
        hierarchy = None
    else:
        if not params["hierarchy_path"]:
            raise click.UsageError("--hierarchy is required unless --independent is given")
        hierarchy = read_hierarchy(params["hierarchy_path"], network.layer_names())
        inputs.append(params["hierarchy_path"])
        report = validate(network, hierarchy)
        if not report.ok:
            raise ValidationFailed(f"invalid inputs:\n{report}")

    if params["corpus_dir"] and not params["collapsed"]:
        corpus = _load_corpus(params["corpus_dir"], network)
    else:
        corpus = simulate_walks(network, walk_cfg)

    if params["independent"]:
        emb = train_independent(network, corpus, train_cfg)
    else:
        emb = train(network, hierarchy, corpus, train_cfg,
                    checkpoint_dir=params["checkpoint_dir"])
    out = Path(params["out"])
    write_embeddings(emb, out)
    _write_run_manifest(out, "train", params, inputs)
    click.echo(f"wrote {len(emb.element_names)} element tables (d={emb.dim}) to {out}")


main.add_command(train_cmd, name="train")


def _features_for(emb: EmbeddingSet, network, collapsed: bool):
    if collapsed:
        table = emb.table("collapsed")
        return {layer.layer_id: table for layer in network.layers}
    return emb


@main.command(name="eval")
@click.option("--embeddings", "emb_dir", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--layers", "layers_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--folds", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--min-annotated", type=click.IntRange(min=2), default=15, show_default=True,
              help="Skip functions with fewer positive annotations per layer.")
@click.option("--collapsed", is_flag=True,
              help="Score every layer with the single 'collapsed' table.")
@seed_option
@config_option
@click.pass_context
@_fail_on
def eval_cmd(ctx, **params):
    """Cross-validated multi-label function prediction."""
    params = _apply_config(ctx, params)
    network = load_network(params["layers_path"])
    labels = read_labels(params["labels_path"], network)
    emb = read_embeddings(params["emb_dir"])
    cfg = EvalConfig(folds=params["folds"], min_annotated=params["min_annotated"],
                     seed=params["seed"])
    report = cross_validate(_features_for(emb, network, params["collapsed"]),
                            labels, network, config=cfg)
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    _write_run_manifest(out, "eval", params,
                        [params["labels_path"], params["layers_path"]])
    agg = report.aggregates()["pairs"]
    click.echo(f"{len(report.rows)} (layer, function) rows; "
               f"auroc median {agg['auroc'][0]:.3f} ± {agg['auroc'][1]:.3f} -> {out / 'report.tsv'}")


@main.command()
@click.option("--embeddings", "emb_dir", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--layers", "layers_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--hierarchy", "hierarchy_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--target", required=True, help="Layer whose labels are hidden and predicted.")
@click.option("--weighting", type=click.Choice(["exp", "inverse", "uniform"]), default="exp",
              show_default=True, help="Source-layer weight decay with hierarchy distance.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--min-annotated", type=click.IntRange(min=2), default=15, show_default=True)
@seed_option
@config_option
@click.pass_context
@_fail_on
def transfer(ctx, **params):
    """Predict a target layer's functions from the other layers only."""
    params = _apply_config(ctx, params)
    network = load_network(params["layers_path"])
    labels = read_labels(params["labels_path"], network)
    hierarchy = read_hierarchy(params["hierarchy_path"], network.layer_names())
    emb = read_embeddings(params["emb_dir"])
    target_layer = network.layer_by_name(params["target"])
    cfg = EvalConfig(min_annotated=params["min_annotated"], seed=params["seed"])
    report = transfer_predict(emb, labels, target_layer.layer_id, hierarchy, network,
                              weighting=params["weighting"], config=cfg)
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "transfer_report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    _write_run_manifest(out, "transfer", params,
                        [params["labels_path"], params["layers_path"], params["hierarchy_path"]])
    click.echo(f"{len(report.rows)} functions transferred to {params['target']}; "
               f"mean auroc {report.mean_auroc():.3f} -> {out / 'transfer_report.tsv'}")


@main.command()
@click.option("--embeddings", "emb_dir", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--element", required=True, help="Hierarchy element whose table to project.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@config_option
@click.pass_context
@_fail_on
def project(ctx, **params):
    """Project one element's table to 2-D (plus a raw-vector dump)."""
    params = _apply_config(ctx, params)
    emb = read_embeddings(params["emb_dir"])
    table = emb.table(params["element"])
    coords = project_2d(table)
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "coords.tsv", "w", encoding="utf-8") as fh:
        for k in range(table.n):
            name = emb.node_names[table.ids[k]]
            fh.write(f"{name} {float(coords[k, 0])!r} {float(coords[k, 1])!r}\n")
    with open(out / "vectors.tsv", "w", encoding="utf-8") as fh:
        for k in range(table.n):
            name = emb.node_names[table.ids[k]]
            fh.write(name + " " + " ".join(repr(x) for x in table.vectors[k].tolist()) + "\n")
    _write_run_manifest(out, "project", params, [])
    click.echo(f"wrote {table.n} coordinates to {out / 'coords.tsv'}")


if __name__ == "__main__":
    main()
