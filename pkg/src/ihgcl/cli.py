"""``ihgcl`` command line: prepare | train | evaluate | ablate | export-edges."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .ablation import VARIANTS, ablation_config
from .bae import export_edge_weights
from .evaluation import evaluate
from .graphdata import (
    MANIFEST,
    DatasetError,
    InteractionMatrix,
    MetaPathError,
    MetaPathSpec,
    convert_hetrec_lastfm,
    dataset_fingerprint,
    load_hetero_graph,
    parse_metapath_arg,
    read_edge_file,
    select_model_subgraphs,
    split_interactions,
    subgraph_from_edges,
    write_edge_file,
)
from .trainer import (
    VIEWS,
    CheckpointError,
    ConfigError,
    TrainConfig,
    TrainingDiverged,
    build_model_data,
    embeddings,
    fit,
    load_checkpoint,
    save_checkpoint,
    stream,
)

logger = logging.getLogger("ihgcl")

RUN_MANIFEST = "run.json"
TRAIN_FILE = "train.tsv"
TEST_FILE = "test.tsv"
SUBGRAPH_FILES = {v: f"subgraph_{v}.tsv" for v in VIEWS}
CHECKPOINT = "checkpoint.bin"
TRAIN_LOG = "train_log.csv"
TRAIN_META = "train.json"
METRICS = "metrics.csv"


class CommandError(Exception):
    """Failure reported to the user with exit code 1."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(k) for k in text.split(",") if k.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("K values must be positive integers")
    return ks


# --- prepare ------------------------------------------------------------------

def _load_dataset(data_dir: Path, work: Path):
    if (data_dir / MANIFEST).is_file():
        return load_hetero_graph(data_dir), dataset_fingerprint(data_dir)
    if (data_dir / "user_artists.dat").is_file():
        converted = work / "dataset"
        graph = convert_hetrec_lastfm(data_dir, converted)
        return graph, dataset_fingerprint(converted)
    raise DatasetError(f"{data_dir}: neither {MANIFEST} nor a HetRec Last.fm release found")


def cmd_prepare(args) -> None:
    out = Path(args.out)
    users, items = parse_metapath_arg(args.meta_paths)
    out.mkdir(parents=True, exist_ok=True)
    graph, fingerprint = _load_dataset(Path(args.data_dir), out)
    subgraphs = select_model_subgraphs(graph, users, items)
    inter = graph.interactions()
    input_hash = hashlib.sha256(
        json.dumps([fingerprint, args.meta_paths, args.split_seed, args.holdout]).encode()
    ).hexdigest()
    manifest_path = out / RUN_MANIFEST
    if manifest_path.is_file():
        old = json.loads(manifest_path.read_text(encoding="utf-8"))
        if old.get("input_hash") != input_hash:
            raise CommandError(f"{out} exists and was prepared from different inputs")
        intact = all(_sha256(out / f) == h for f, h in old["files"].items() if (out / f).is_file())
        if intact and all((out / f).is_file() for f in old["files"]):
            print(f"{out}: split exists and matches the inputs; reusing it")
            return
    train, test = split_interactions(inter, args.holdout, stream(args.split_seed, "split"))
    write_edge_file(out / TRAIN_FILE, train.pairs)
    write_edge_file(out / TEST_FILE, test.pairs)
    views = {}
    for view, spec_text, sub in zip(VIEWS, (*users, *items), subgraphs):
        write_edge_file(out / SUBGRAPH_FILES[view], sub.edges)
        views[view] = {
            "meta_path": spec_text,
            "chain": [list(link) for link in sub.spec.chain],
            "endpoint_type": sub.spec.endpoint_type,
            "nodes": sub.size,
            "edges": sub.n_edges,
        }
    files = [TRAIN_FILE, TEST_FILE, *SUBGRAPH_FILES.values()]
    _write_json(manifest_path, {
        "data_dir": str(Path(args.data_dir).resolve()),
        "dataset_hash": fingerprint,
        "meta_paths": args.meta_paths,
        "split_seed": args.split_seed,
        "holdout": args.holdout,
        "n_users": inter.M,
        "n_items": inter.N,
        "views": views,
        "input_hash": input_hash,
        "files": {f: _sha256(out / f) for f in files},
    })
    print(f"prepared {out}: {len(train)} train / {len(test)} test interactions, "
          + ", ".join(f"{v}={views[v]['edges']} edges" for v in VIEWS))


def load_run(run_dir) -> tuple[dict, InteractionMatrix, InteractionMatrix, tuple]:
    run_dir = Path(run_dir)
    path = run_dir / RUN_MANIFEST
    if not path.is_file():
        raise CommandError(f"{run_dir}: missing {RUN_MANIFEST}; run 'ihgcl prepare' first")
    meta = json.loads(path.read_text(encoding="utf-8"))
    for f in meta["files"]:
        if not (run_dir / f).is_file():
            raise CommandError(f"{run_dir}: missing prepared file {f}")
    m, n = meta["n_users"], meta["n_items"]
    train = InteractionMatrix(m, n, read_edge_file(run_dir / TRAIN_FILE))
    test = InteractionMatrix(m, n, read_edge_file(run_dir / TEST_FILE))
    subs = []
    for view in VIEWS:
        v = meta["views"][view]
        spec = MetaPathSpec(v["meta_path"], tuple((a, bool(b)) for a, b in v["chain"]), v["endpoint_type"])
        subs.append(subgraph_from_edges(spec, v["nodes"], read_edge_file(run_dir / SUBGRAPH_FILES[view])))
    return meta, train, test, tuple(subs)


# --- train / ablate ------------------------------------------------------------

def _train(run_dir: Path, cfg: TrainConfig, out: Path, resume: bool, variant: str) -> tuple:
    meta, train, test, subs = load_run(run_dir)
    data = build_model_data(train, subs if cfg.model == "ihgcl" else (), cfg)
    ckpt = out / CHECKPOINT
    state = None
    if resume:
        if not ckpt.is_file():
            raise CommandError(f"--resume given but {ckpt} does not exist")
        state = load_checkpoint(ckpt, cfg, data)
    elif ckpt.exists():
        raise CommandError(f"{ckpt} exists; pass --resume to continue it or choose another --out")
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / TRAIN_META, {"run_dir": str(run_dir.resolve()), "variant": variant, "config": cfg.to_dict()})
    state = fit(data, cfg, state=state, log_path=out / TRAIN_LOG, checkpoint_path=ckpt)
    if not ckpt.exists():  # zero epochs requested
        save_checkpoint(ckpt, state, cfg)
    return state, data, test


def _config(args) -> TrainConfig:
    if not args.config:
        return TrainConfig()
    try:
        return TrainConfig.from_json(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        raise CommandError(f"cannot read config {args.config}: {exc}") from exc


def cmd_train(args) -> None:
    run_dir = Path(args.run_dir)
    out = Path(args.out) if args.out else run_dir / "model"
    state, _, _ = _train(run_dir, _config(args), out, args.resume, "full")
    print(f"trained {state.epoch} epochs; checkpoint {out / CHECKPOINT}")


def _write_metrics(path: Path, cfg: TrainConfig, params, data, test, ks, buckets, variant):
    d_user, d_item = embeddings(params, data, cfg)
    report = evaluate(d_user, d_item, test, data.observed(), ks, buckets)
    report.to_csv(path, variant)
    return report


def cmd_ablate(args) -> None:
    run_dir = Path(args.run_dir)
    cfg = ablation_config(args.variant, _config(args))
    out = Path(args.out) if args.out else run_dir / f"ablate_{args.variant}"
    state, data, test = _train(run_dir, cfg, out, args.resume, args.variant)
    report = _write_metrics(out / METRICS, cfg, state.final_params(), data, test, args.k, args.buckets, args.variant)
    print(f"{args.variant}: Recall@{max(args.k)} = {report.recall(max(args.k)):.6f} ({out / METRICS})")


# --- evaluate / export ---------------------------------------------------------

def _restore(checkpoint: Path):
    meta_path = checkpoint.parent / TRAIN_META
    if not meta_path.is_file():
        raise CommandError(f"missing {meta_path} next to the checkpoint")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    cfg = TrainConfig.from_dict(meta["config"])
    _, train, test, subs = load_run(meta["run_dir"])
    data = build_model_data(train, subs if cfg.model == "ihgcl" else (), cfg)
    state = load_checkpoint(checkpoint, cfg, data)
    return meta, cfg, data, test, state


def cmd_evaluate(args) -> None:
    checkpoint = Path(args.checkpoint)
    if not checkpoint.is_file():
        raise CommandError(f"missing checkpoint {checkpoint}")
    meta, cfg, data, test, state = _restore(checkpoint)
    out = Path(args.out) if args.out else checkpoint.parent / METRICS
    report = _write_metrics(out, cfg, state.final_params(), data, test, args.k, args.buckets, meta["variant"])
    for row in report.rows:
        print(f"{row.bucket}\tRecall@{row.k}={row.recall:.6f}\tNDCG@{row.k}={row.ndcg:.6f}\tusers={row.users}")


def cmd_export_edges(args) -> None:
    checkpoint = Path(args.checkpoint)
    if not checkpoint.is_file():
        raise CommandError(f"missing checkpoint {checkpoint}")
    _, cfg, data, _, state = _restore(checkpoint)
    if cfg.model != "ihgcl":
        raise CommandError("the checkpoint has no meta-path views")
    sub = data.subgraphs[VIEWS.index(args.view)]
    logits = state.final_params().get(f"logits_{args.view}")
    try:
        rows = export_edge_weights(sub, args.node, logits, cfg.bae.edge_threshold)
    except IndexError as exc:
        raise CommandError(str(exc)) from exc
    out = Path(args.out) if args.out else checkpoint.parent / f"edges_{args.view}_{args.node}.csv"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node_id,neighbor_id,pi,kept\n")
        for nbr, pi, kept in rows:
            fh.write(f"{args.node},{nbr},{pi:.6f},{int(kept)}\n")
    print(f"wrote {len(rows)} edges to {out}")


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ihgcl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="split interactions and compose meta-path subgraphs")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--meta-paths", required=True, help="two user and two item paths, e.g. UU,UATAU;AA,ATA")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--holdout", type=float, default=0.2, help="per-user test fraction")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    def training_args(p):
        p.add_argument("--run-dir", required=True)
        p.add_argument("--config", help="JSON document with TrainConfig fields")
        p.add_argument("--resume", action="store_true")
        p.add_argument("--out")

    p = sub.add_parser("train", help="train the model on a prepared run directory")
    training_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="write metrics.csv for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k", type=_parse_ks, default=(5, 10, 20))
    p.add_argument("--buckets", type=int, default=0, help="also report this many sparsity buckets")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and evaluate one ablation variant")
    training_args(p)
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--k", type=_parse_ks, default=(5, 10, 20))
    p.add_argument("--buckets", type=int, default=0)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-edges", help="learned retention probabilities around one node")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--node", type=int, required=True)
    p.add_argument("--view", choices=VIEWS, default="u1")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_edges)
    return parser


def _threads() -> int | None:
    raw = os.environ.get("IHGCL_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise CommandError(f"IHGCL_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise CommandError(f"IHGCL_THREADS must be a positive integer, got {raw!r}")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=_threads()):
            args.func(args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (CommandError, ConfigError, CheckpointError, DatasetError, MetaPathError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
