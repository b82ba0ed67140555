"""Joint optimisation of the IHGCL objective with Adam, plus checkpoints."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .bae import BAEConfig, ViewNoise, bae_forward, draw_view_noise, hard_operator, ib_loss, sample_edges
from .dcl import DCLConfig, contrast_batch, icl_loss, iicl_loss
from .evaluation import evaluate
from .graphdata import InteractionMatrix, MetaPathSubgraph, interaction_operator, split_interactions
from .mainview import EmbeddingTable, bpr_loss, propagate_main
from .ndmath import RowMask, SparseAdjacency, Tape, Var, scale, sum_squares

logger = logging.getLogger(__name__)

VIEWS = ("u1", "u2", "i1", "i2")
LOG_COLUMNS = ("epoch", "loss_total", "loss_bpr", "loss_ib", "loss_icl", "loss_iicl", "loss_l2")
MODELS = ("ihgcl", "lightgcn")
_STREAMS = {"split": 0, "init": 1, "mask": 2, "negatives": 3, "concrete": 4, "valid": 5}
# fields that do not change the trained trajectory and may differ on resume
_UNHASHED = {"epochs", "eval_every", "early_stop_patience"}


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, components: dict[str, float]):
        super().__init__(f"{message}: {components}")
        self.components = components


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    d: int = 64
    n_layers: int = 2
    batch_size: int = 4096
    epochs: int = 300
    lambda1: float = 0.1
    lambda2: float = 1e-4
    seed: int = 2024
    eval_every: int = 1
    early_stop_patience: int = 20
    valid_ratio: float = 0.1
    model: str = "ihgcl"
    use_bae: bool = True
    edge_sampling: bool = True
    batches_per_epoch: int = 0  # 0: ceil(train interactions / batch_size)
    bae: BAEConfig = field(default_factory=BAEConfig)
    dcl: DCLConfig = field(default_factory=DCLConfig)

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.d < 2 or self.d % 2:
            raise ConfigError("embedding size d must be even and >= 2")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if not 0.0 <= self.valid_ratio < 1.0:
            raise ConfigError("valid_ratio must lie in [0, 1)")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        nested = {"bae": BAEConfig, "dcl": DCLConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, sub_cls in nested.items():
            if key in raw and not isinstance(raw[key], sub_cls):
                sub_raw = dict(raw[key])
                sub_known = {f.name for f in fields(sub_cls)}
                bad = set(sub_raw) - sub_known
                if bad:
                    raise ConfigError(f"unknown {key} config keys: {sorted(bad)}")
                try:
                    raw[key] = sub_cls(**sub_raw)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
        try:
            return cls(**raw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> int:
        payload = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).digest()
        return int.from_bytes(digest[:8], "little")

    def with_updates(self, **kw) -> "TrainConfig":
        bae_kw = kw.pop("bae", None)
        dcl_kw = kw.pop("dcl", None)
        cfg = replace(self, **kw)
        if bae_kw:
            cfg = replace(cfg, bae=replace(cfg.bae, **bae_kw))
        if dcl_kw:
            cfg = replace(cfg, dcl=replace(cfg.dcl, **dcl_kw))
        return cfg


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent named random stream keyed by integers (epoch, batch, view...)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_STREAMS[name], *map(int, keys)))
    return np.random.Generator(np.random.PCG64(ss))


# --- data -------------------------------------------------------------------

@dataclass
class ModelData:
    train: InteractionMatrix
    subgraphs: tuple[MetaPathSubgraph, ...] = ()
    valid: InteractionMatrix | None = None
    main_adj: SparseAdjacency = field(init=False)

    def __post_init__(self):
        if self.subgraphs and len(self.subgraphs) != 4:
            raise ConfigError("expected four meta-path subgraphs (two user, two item)")
        for k, sub in enumerate(self.subgraphs):
            want = self.train.M if k < 2 else self.train.N
            if sub.size != want:
                raise ConfigError(f"subgraph {VIEWS[k]} has {sub.size} nodes, expected {want}")
        self.main_adj = interaction_operator(self.train)

    @property
    def n_users(self) -> int:
        return self.train.M

    def observed(self) -> InteractionMatrix:
        """Training plus validation interactions: the items excluded at test time."""
        if self.valid is None:
            return self.train
        return InteractionMatrix(self.train.M, self.train.N, np.concatenate([self.train.pairs, self.valid.pairs]))

    @property
    def n_items(self) -> int:
        return self.train.N


def build_model_data(
    train: InteractionMatrix, subgraphs, cfg: TrainConfig, valid: InteractionMatrix | None = None
) -> ModelData:
    """Model inputs; carve a validation fold out of ``train`` when early stopping is on."""
    if valid is None and cfg.valid_ratio > 0 and cfg.early_stop_patience > 0:
        train, valid = split_interactions(train, cfg.valid_ratio, stream(cfg.seed, "valid"))
        if len(valid) == 0:
            valid = None
    if cfg.model == "ihgcl" and len(subgraphs) != 4:
        raise ConfigError("the IHGCL model needs four meta-path subgraphs")
    return ModelData(train, tuple(subgraphs), valid)


# --- sampling -------------------------------------------------------------------

class BPRSampler:
    """Uniform user / positive / rejection-sampled negative triplets."""

    max_rounds = 100

    def __init__(self, inter: InteractionMatrix):
        self.inter = inter
        self.indptr, self.items = inter.user_items()
        deg = np.diff(self.indptr)
        self.users = np.flatnonzero((deg > 0) & (deg < inter.N))
        if len(self.users) == 0:
            raise ValueError("no user has both observed and unobserved items")
        self.keys = inter.pairs[:, 0] * inter.N + inter.pairs[:, 1]

    def _observed(self, users, items) -> np.ndarray:
        q = users * self.inter.N + items
        pos = np.searchsorted(self.keys, q)
        pos = np.minimum(pos, len(self.keys) - 1)
        return self.keys[pos] == q

    def sample(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size < 1:
            raise ValueError("batch size must be >= 1")
        users = self.users[rng.integers(0, len(self.users), size=batch_size)]
        deg = self.indptr[users + 1] - self.indptr[users]
        pos = self.items[self.indptr[users] + (rng.random(batch_size) * deg).astype(np.int64)]
        neg = rng.integers(0, self.inter.N, size=batch_size)
        bad = self._observed(users, neg)
        for _ in range(self.max_rounds):
            if not bad.any():
                break
            idx = np.flatnonzero(bad)
            neg[idx] = rng.integers(0, self.inter.N, size=len(idx))
            bad[idx] = self._observed(users[idx], neg[idx])
        else:
            if bad.any():
                raise RuntimeError("negative sampling did not converge")
        return np.stack([users, pos, neg], axis=1)


def sample_bpr_batch(inter: InteractionMatrix, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    return BPRSampler(inter).sample(batch_size, rng)


# --- parameters --------------------------------------------------------------

def init_params(data: ModelData, cfg: TrainConfig) -> dict[str, np.ndarray]:
    table = EmbeddingTable.init(data.n_users, data.n_items, cfg.d, stream(cfg.seed, "init"))
    params = {"user_emb": table.users, "item_emb": table.items}
    if cfg.model == "ihgcl":
        params["mask_token"] = table.mask_token
        if cfg.edge_sampling:
            for name, sub in zip(VIEWS, data.subgraphs):
                params[f"logits_{name}"] = np.zeros(sub.n_edges)
    return params


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# --- forward -------------------------------------------------------------------

Noise = list[list[ViewNoise]]


def draw_noise(data: ModelData, cfg: TrainConfig, epoch: int, batch: int) -> Noise | None:
    if cfg.model != "ihgcl":
        return None
    noise = []
    for k, sub in enumerate(data.subgraphs):
        mask_rng = stream(cfg.seed, "mask", epoch, batch, k)
        eps_rng = stream(cfg.seed, "concrete", epoch, batch, k)
        samples = []
        for _ in range(cfg.bae.sample_count):
            nz = draw_view_noise(sub, cfg.bae, mask_rng, edge_sampling=False)
            eps = np.clip(eps_rng.random(sub.n_edges), 1e-12, 1.0 - 1e-12) if cfg.edge_sampling else None
            samples.append(ViewNoise(nz.mask, nz.remask, eps))
        noise.append(samples)
    return noise


@dataclass
class Forward:
    tape: Tape
    loss: Var
    components: dict[str, float]
    leaves: dict[str, Var]
    terms: dict[str, Var]


def _views(data, cfg, leaves, noise, hard=False):
    """Per-view lists of BAE outputs (one per Monte-Carlo sample)."""
    outs = []
    token = leaves["mask_token"]
    for k, sub in enumerate(data.subgraphs):
        rows = leaves["user_emb"] if k < 2 else leaves["item_emb"]
        logits = leaves.get(f"logits_{VIEWS[k]}")
        samples = []
        for nz in noise[k]:
            if hard:
                adj = hard_operator(sub, logits.value, cfg.bae.edge_threshold) if logits is not None else sub.adjacency
                weights = None
            else:
                adj, weights = sample_edges(sub, logits, cfg.bae, nz.eps)
            samples.append(bae_forward(adj, rows, token, cfg.bae, nz, weights, plain=not cfg.use_bae))
        outs.append(samples)
    return outs


def forward(
    params: dict[str, np.ndarray],
    data: ModelData,
    cfg: TrainConfig,
    triplets: np.ndarray,
    noise: Noise | None,
) -> Forward:
    """Build the full objective on a fresh tape."""
    tape = Tape()
    leaves = {k: tape.leaf(v, k) for k, v in params.items()}
    main = propagate_main(data.main_adj, leaves["user_emb"], leaves["item_emb"], cfg.n_layers)
    eu, ei = main.user_emb, main.item_emb
    terms: dict[str, Var] = {}
    if cfg.model == "lightgcn":
        d_user, d_item = eu, ei
    else:
        outs = _views(data, cfg, leaves, noise)
        u1, u2, i1, i2 = (o[0].decoder_emb for o in outs)
        d_user, d_item = readout(eu, u1, u2), readout(ei, i1, i2)
    terms["bpr"] = bpr_loss(triplets, d_user, d_item)
    if cfg.model == "ihgcl":
        if cfg.lambda1 > 0:
            uib, _, _ = ib_loss([[o.s for o in outs[0]], [o.s for o in outs[1]]], eu, ei, triplets, cfg.bae.beta, "user")
            iib, _, _ = ib_loss([[o.s for o in outs[2]], [o.s for o in outs[3]]], ei, eu, triplets, cfg.bae.beta, "item")
            terms["ib"] = scale(uib + iib, cfg.lambda1)
        users_b, items_b = contrast_batch(triplets)
        if cfg.dcl.lambda_icl > 0:
            terms["icl"] = scale(icl_loss(u1, u2, i1, i2, users_b, items_b, cfg.dcl), cfg.dcl.lambda_icl)
        if cfg.dcl.lambda_iicl > 0:
            terms["iicl"] = scale(
                iicl_loss(eu, u1, u2, ei, i1, i2, users_b, items_b, cfg.dcl), cfg.dcl.lambda_iicl
            )
    if cfg.lambda2 > 0:
        l2 = None
        for name in sorted(leaves):
            sq = sum_squares(leaves[name])
            l2 = sq if l2 is None else l2 + sq
        terms["l2"] = scale(l2, cfg.lambda2)
    total = None
    for t in terms.values():
        total = t if total is None else total + t
    components = {f"loss_{k}": 0.0 for k in ("bpr", "ib", "icl", "iicl", "l2")}
    for k, t in terms.items():
        components[f"loss_{k}"] = float(t.value)
    components["loss_total"] = float(total.value)
    return Forward(tape, total, components, leaves, terms)


def readout(main: Var, view1: Var, view2: Var) -> Var:
    """Final user/item representation: main view plus both intent views, unweighted."""
    return main + view1 + view2


def embeddings(params: dict[str, np.ndarray], data: ModelData, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Inference representations: unmasked views over the hard-thresholded subgraphs."""
    tape = Tape()
    leaves = {k: tape.constant(v) for k, v in params.items()}
    main = propagate_main(data.main_adj, leaves["user_emb"], leaves["item_emb"], cfg.n_layers)
    if cfg.model == "lightgcn":
        return main.user_emb.value, main.item_emb.value
    noise = []
    for sub in data.subgraphs:
        empty = RowMask(sub.size, np.empty(0, dtype=np.int64))
        noise.append([ViewNoise(empty, empty, None)])
    outs = _views(data, cfg, leaves, noise, hard=True)
    u1, u2, i1, i2 = (o[0].decoder_emb for o in outs)
    return readout(main.user_emb, u1, u2).value, readout(main.item_emb, i1, i2).value


# --- training loop --------------------------------------------------------------

@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    adam: AdamState
    epoch: int = 0
    best_metric: float = -math.inf
    bad_evals: int = 0
    best_params: dict[str, np.ndarray] | None = None
    stopped: bool = False

    @classmethod
    def fresh(cls, data: ModelData, cfg: TrainConfig) -> "TrainState":
        params = init_params(data, cfg)
        return cls(params, AdamState.zeros_like(params))

    def final_params(self) -> dict[str, np.ndarray]:
        return self.best_params if self.best_params is not None else self.params


def n_batches(data: ModelData, cfg: TrainConfig) -> int:
    return cfg.batches_per_epoch or max(1, math.ceil(len(data.train) / cfg.batch_size))


def train_epoch(state: TrainState, data: ModelData, cfg: TrainConfig, sampler: BPRSampler | None = None) -> dict[str, float]:
    """One pass of ``n_batches`` Adam steps; returns batch-averaged loss components."""
    sampler = sampler or BPRSampler(data.train)
    epoch = state.epoch
    totals: dict[str, float] = {}
    nb = n_batches(data, cfg)
    for b in range(nb):
        triplets = sampler.sample(cfg.batch_size, stream(cfg.seed, "negatives", epoch, b))
        fw = forward(state.params, data, cfg, triplets, draw_noise(data, cfg, epoch, b))
        if not all(math.isfinite(v) for v in fw.components.values()):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch} batch {b}", fw.components)
        grads = fw.tape.gradients(fw.loss)
        adam_step(state.params, grads, state.adam, cfg.lr)
        for name, p in state.params.items():
            if not np.all(np.isfinite(p)):
                raise TrainingDiverged(f"non-finite parameter {name} at epoch {epoch}", fw.components)
        for k, v in fw.components.items():
            totals[k] = totals.get(k, 0.0) + v
    state.epoch += 1
    return {k: v / nb for k, v in totals.items()}


def validation_recall(state: TrainState, data: ModelData, cfg: TrainConfig, k: int = 20) -> float:
    d_user, d_item = embeddings(state.params, data, cfg)
    return evaluate(d_user, d_item, data.valid, data.train, ks=(k,)).recall(k)


def fit(
    data: ModelData,
    cfg: TrainConfig,
    state: TrainState | None = None,
    log_path=None,
    checkpoint_path=None,
    on_epoch: Callable[[int, dict[str, float]], None] | None = None,
) -> TrainState:
    """Train until ``cfg.epochs`` or early stopping; resumes from ``state`` if given."""
    state = state or TrainState.fresh(data, cfg)
    sampler = BPRSampler(data.train)
    if log_path is not None:
        _reset_log(Path(log_path), state.epoch)
    while state.epoch < cfg.epochs and not state.stopped:
        telemetry = train_epoch(state, data, cfg, sampler)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8", newline="") as fh:
                row = [str(state.epoch)] + [repr(telemetry[c]) for c in LOG_COLUMNS[1:]]
                fh.write(",".join(row) + "\n")
        if data.valid is not None and state.epoch % cfg.eval_every == 0:
            metric = validation_recall(state, data, cfg)
            telemetry["valid_recall@20"] = metric
            if metric > state.best_metric:
                state.best_metric = metric
                state.bad_evals = 0
                state.best_params = {k: v.copy() for k, v in state.params.items()}
            else:
                state.bad_evals += 1
                if cfg.early_stop_patience and state.bad_evals >= cfg.early_stop_patience:
                    state.stopped = True
        logger.info("epoch %d %s", state.epoch, telemetry)
        if on_epoch is not None:
            on_epoch(state.epoch, telemetry)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, state, cfg)
    return state


def _reset_log(path: Path, epoch: int) -> None:
    """Header plus the rows of epochs ``1..epoch``; rows written after the last checkpoint are dropped."""
    keep = []
    if epoch > 0 and path.is_file():
        with open(path, encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
        keep = [ln for ln in lines[1:] if ln and int(ln.split(",", 1)[0]) <= epoch]
        if len(keep) != epoch:
            raise CheckpointError(f"{path} holds {len(keep)} rows for a checkpoint at epoch {epoch}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        fh.writelines(ln + "\n" for ln in keep)


def read_train_log(path) -> list[dict[str, float]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# --- checkpoints ---------------------------------------------------------------

MAGIC = b"IHGCL1\0"
VERSION = 1


def _matrices(state: TrainState) -> list[tuple[str, np.ndarray]]:
    def as2d(a):
        a = np.asarray(a, dtype="<f8")
        return a.reshape(-1, 1) if a.ndim == 1 else a

    out = []
    for name in sorted(state.params):
        out.append((f"param/{name}", as2d(state.params[name])))
        out.append((f"adam_m/{name}", as2d(state.adam.m[name])))
        out.append((f"adam_v/{name}", as2d(state.adam.v[name])))
        if state.best_params is not None:
            out.append((f"best/{name}", as2d(state.best_params[name])))
    out.append(("meta/adam_step", np.array([[state.adam.step]], dtype="<f8")))
    out.append(("meta/best_metric", np.array([[state.best_metric]], dtype="<f8")))
    out.append(("meta/bad_evals", np.array([[state.bad_evals]], dtype="<f8")))
    out.append(("meta/stopped", np.array([[float(state.stopped)]], dtype="<f8")))
    return out


def save_checkpoint(path, state: TrainState, cfg: TrainConfig) -> None:
    mats = _matrices(state)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQII", VERSION, cfg.config_hash(), state.epoch, len(mats)))
        for name, mat in mats:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", *mat.shape))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())
    tmp.replace(path)


def read_checkpoint(path) -> tuple[int, int, dict[str, np.ndarray]]:
    """Raw contents: (config hash, epoch, name -> matrix)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad magic")
    off = len(MAGIC)
    version, chash, epoch, count = struct.unpack_from("<IQII", blob, off)
    off += struct.calcsize("<IQII")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    mats = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + n].decode("utf-8")
        off += n
        rows, cols = struct.unpack_from("<II", blob, off)
        off += 8
        size = rows * cols * 8
        mats[name] = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=off).reshape(rows, cols).astype(np.float64)
        off += size
    return chash, epoch, mats


def load_checkpoint(path, cfg: TrainConfig, data: ModelData | None = None) -> TrainState:
    chash, epoch, mats = read_checkpoint(path)
    if chash != cfg.config_hash():
        raise CheckpointError(f"{path}: config hash mismatch (checkpoint {chash:#x}, config {cfg.config_hash():#x})")
    names = sorted(k.split("/", 1)[1] for k in mats if k.startswith("param/"))
    like = init_params(data, cfg) if data is not None else None

    def shaped(name, mat):
        is_vector = like[name].ndim == 1 if like is not None else name.startswith("logits_")
        return mat.reshape(-1) if is_vector else mat

    params = {n: shaped(n, mats[f"param/{n}"]) for n in names}
    if like is not None:
        for n, p in like.items():
            if n not in params or params[n].shape != p.shape:
                raise CheckpointError(f"{path}: parameter {n} missing or mis-shaped")
    adam = AdamState(
        {n: shaped(n, mats[f"adam_m/{n}"]) for n in names},
        {n: shaped(n, mats[f"adam_v/{n}"]) for n in names},
        int(mats["meta/adam_step"][0, 0]),
    )
    best = None
    if f"best/{names[0]}" in mats:
        best = {n: shaped(n, mats[f"best/{n}"]) for n in names}
    return TrainState(
        params,
        adam,
        epoch=epoch,
        best_metric=float(mats["meta/best_metric"][0, 0]),
        bad_evals=int(mats["meta/bad_evals"][0, 0]),
        best_params=best,
        stopped=bool(mats["meta/stopped"][0, 0]),
    )


__all__ = [
    "AdamState",
    "BPRSampler",
    "CheckpointError",
    "ConfigError",
    "Forward",
    "LOG_COLUMNS",
    "ModelData",
    "TrainConfig",
    "TrainState",
    "TrainingDiverged",
    "adam_step",
    "build_model_data",
    "draw_noise",
    "embeddings",
    "fit",
    "forward",
    "init_params",
    "load_checkpoint",
    "read_checkpoint",
    "read_train_log",
    "readout",
    "sample_bpr_batch",
    "save_checkpoint",
    "stream",
    "train_epoch",
]
