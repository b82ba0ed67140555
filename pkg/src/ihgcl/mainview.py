"""LightGCN propagation on the user-item bipartite graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ndmath import (
    SparseAdjacency,
    Tape,
    Var,
    concat_rows,
    gather_rows,
    log_sigmoid,
    mean,
    row_dot,
    scale,
    split_rows,
    spmm,
)


def xavier_uniform(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    # same fan convention as torch.nn.init.xavier_uniform_ on an (n, d) weight
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class EmbeddingTable:
    users: np.ndarray
    items: np.ndarray
    mask_token: np.ndarray

    @classmethod
    def init(cls, n_users: int, n_items: int, dim: int, rng: np.random.Generator) -> "EmbeddingTable":
        return cls(
            xavier_uniform((n_users, dim), rng),
            xavier_uniform((n_items, dim), rng),
            xavier_uniform((1, dim), rng),
        )

    @property
    def d(self) -> int:
        return self.users.shape[1]


@dataclass
class MainViewOutput:
    user_emb: Var
    item_emb: Var
    layers: int


def layer_mean(layers: list[Var]) -> Var:
    """Readout over propagation depths 0..L."""
    total = layers[0]
    for layer in layers[1:]:
        total = total + layer
    return scale(total, 1.0 / len(layers))


def propagate(adj: SparseAdjacency, x: Var, n_layers: int, weights: Var | None = None) -> list[Var]:
    """Return ``[x, A x, A^2 x, ...]`` up to ``n_layers`` multiplies."""
    if n_layers < 0:
        raise ValueError("layer count must be >= 0")
    out = [x]
    for _ in range(n_layers):
        out.append(spmm(adj, out[-1], weights))
    return out


def propagate_main(adj: SparseAdjacency, users: Var, items: Var, n_layers: int) -> MainViewOutput:
    n_users = users.value.shape[0]
    if adj.shape != (n_users + items.value.shape[0],) * 2:
        raise ValueError(
            f"operator shape {adj.shape} does not match {n_users} users + {items.value.shape[0]} items"
        )
    e0 = concat_rows([users, items])
    readout = layer_mean(propagate(adj, e0, n_layers))
    u, i = split_rows(readout, n_users)
    return MainViewOutput(u, i, n_layers)


def propagate_main_array(adj: SparseAdjacency, users: np.ndarray, items: np.ndarray, n_layers: int):
    """Tape-free convenience wrapper returning plain arrays."""
    tape = Tape()
    out = propagate_main(adj, tape.constant(users), tape.constant(items), n_layers)
    return out.user_emb.value, out.item_emb.value


def bpr_loss(triplets: np.ndarray, d_user: Var, d_item: Var) -> Var:
    """Mean negative log-likelihood ``-log sigmoid(d_i.d_j - d_i.d_k)`` over triplets."""
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if len(triplets) == 0:
        raise ValueError("empty BPR batch")
    u = gather_rows(d_user, triplets[:, 0])
    pos = gather_rows(d_item, triplets[:, 1])
    neg = gather_rows(d_item, triplets[:, 2])
    margin = row_dot(u, pos) - row_dot(u, neg)
    return scale(mean(log_sigmoid(margin)), -1.0)
