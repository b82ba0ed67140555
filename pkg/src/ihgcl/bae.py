"""Bottlenecked autoencoder over one meta-path view.

Pipeline per view: mask rows -> encoder propagation -> re-mask -> decoder
propagation, with a concrete relaxation of per-edge retention and a
variational information-bottleneck penalty on the pooled view outputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphdata import MetaPathSubgraph, normalize_adjacency
from .mainview import bpr_loss, propagate
from .ndmath import (
    RowMask,
    SparseAdjacency,
    Var,
    elementwise_mul,
    gather_rows,
    log,
    mean_pool_rows,
    replace_rows,
    sample_mask,
    scale,
    sigmoid,
    sigmoid_array,
    softplus,
    split_halves,
    sum_all,
    sum_squares,
)

ETA_FLOOR = 1e-6


@dataclass(frozen=True)
class BAEConfig:
    p: float = 0.2
    encoder_layers: int = 1
    decoder_layers: int = 1
    beta: float = 0.01
    temperature: float = 1.0
    edge_threshold: float = 0.3
    sample_count: int = 1

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"mask ratio p must lie in [0, 1], got {self.p}")
        if self.encoder_layers < 0 or self.decoder_layers < 0:
            raise ValueError("encoder/decoder layer counts must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not 0.0 < self.edge_threshold < 1.0:
            raise ValueError("edge_threshold must lie in (0, 1)")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


@dataclass
class BAEOutput:
    encoder_emb: Var  # H
    decoder_emb: Var  # E_uu / E_ii
    s: Var  # H + E
    mask: RowMask
    remask: RowMask


@dataclass(frozen=True)
class ViewNoise:
    """Randomness consumed by one BAE pass, drawn up front so passes replay exactly."""

    mask: RowMask
    remask: RowMask
    eps: np.ndarray | None  # one uniform draw per undirected edge


def draw_view_noise(sub: MetaPathSubgraph, cfg: BAEConfig, rng: np.random.Generator, edge_sampling=True) -> ViewNoise:
    mask = sample_mask(sub.size, cfg.p, rng)
    remask = sample_mask(sub.size, cfg.p, rng)
    eps = None
    if edge_sampling:
        # open interval keeps logit(eps) finite
        eps = np.clip(rng.random(sub.n_edges), 1e-12, 1.0 - 1e-12)
    return ViewNoise(mask, remask, eps)


def relaxed_weights(logits: Var, eps: np.ndarray, temperature: float) -> Var:
    """Concrete relaxation ``sigmoid((logit(pi) + logit(eps)) / t)`` with ``pi = sigmoid(logits)``.

    ``logit(sigmoid(x)) = x``, so the edge logits enter directly.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    noise = logits.tape.constant(np.log(eps) - np.log1p(-eps))
    return sigmoid(scale(logits + noise, 1.0 / temperature))


def relaxed_weight_array(pi, eps, temperature: float) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    z = (np.log(pi) - np.log1p(-pi) + np.log(eps) - np.log1p(-eps)) / temperature
    return sigmoid_array(np.atleast_1d(z))


def sample_edges(
    sub: MetaPathSubgraph,
    logits: Var | None,
    cfg: BAEConfig,
    eps: np.ndarray | None = None,
    hard: bool = False,
) -> tuple[SparseAdjacency, Var | None]:
    """Effective operator for a view.

    Soft mode returns the normalised structural operator together with a
    per-entry weight variable (relaxed sample times normalised weight) for
    :func:`ndmath.spmm`. Hard mode keeps edges with ``pi >= edge_threshold`` and
    renormalises degrees; no weight variable is returned. With ``logits`` None
    edge sampling is off and the plain normalised operator is used.
    """
    if cfg.temperature <= 0:
        raise ValueError("temperature must be > 0")
    if logits is None:
        return sub.adjacency, None
    if hard:
        return hard_operator(sub, logits.value, cfg.edge_threshold), None
    if eps is None:
        raise ValueError("soft edge sampling needs uniform noise")
    w_edge = relaxed_weights(logits, eps, cfg.temperature)
    w_entry = gather_rows(w_edge, sub.entry_edge)
    norm = logits.tape.constant(sub.adjacency.data)
    return sub.adjacency, elementwise_mul(w_entry, norm)


def hard_operator(sub: MetaPathSubgraph, logits: np.ndarray, threshold: float) -> SparseAdjacency:
    pi = sigmoid_array(np.asarray(logits, dtype=np.float64))
    keep = pi >= threshold
    edges = sub.edges[keep]
    n = sub.size
    pairs = np.concatenate([edges, edges[:, ::-1]])
    return normalize_adjacency(pairs, shape=(n, n))


def bae_forward(
    adj: SparseAdjacency,
    rows: Var,
    token: Var,
    cfg: BAEConfig,
    noise: ViewNoise,
    weights: Var | None = None,
    plain: bool = False,
) -> BAEOutput:
    """Mask, encode, re-mask and decode ``rows`` over the view operator.

    ``plain`` swaps the autoencoder for an unmasked propagation of
    ``encoder_layers + decoder_layers`` steps (no re-masking).
    """
    n = rows.value.shape[0]
    if adj.shape != (n, n):
        raise ValueError(f"view operator {adj.shape} does not match {n} input rows")
    if plain:
        out = propagate(adj, rows, cfg.encoder_layers + cfg.decoder_layers, weights)[-1]
        empty = RowMask(n, np.empty(0, dtype=np.int64))
        return BAEOutput(out, out, out + out, empty, empty)
    x = replace_rows(rows, noise.mask, token) if len(noise.mask) else rows
    h = propagate(adj, x, cfg.encoder_layers, weights)[-1]
    h_in = replace_rows(h, noise.remask, token) if len(noise.remask) else h
    e = propagate(adj, h_in, cfg.decoder_layers, weights)[-1]
    return BAEOutput(h, e, e + h, noise.mask, noise.remask)


def bae_forward_sub(
    sub: MetaPathSubgraph,
    rows: Var,
    token: Var,
    cfg: BAEConfig,
    rng: np.random.Generator,
    logits: Var | None = None,
) -> BAEOutput:
    """Convenience wrapper drawing noise from ``rng`` and using soft edge weights."""
    noise = draw_view_noise(sub, cfg, rng, edge_sampling=logits is not None)
    adj, weights = sample_edges(sub, logits, cfg, noise.eps)
    return bae_forward(adj, rows, token, cfg, noise, weights)


# --- information bottleneck ---------------------------------------------------

def pooled_sets(s1: Var, s2: Var, main: Var) -> list[Var]:
    """Views pooled for one side: both S matrices and main + S1 + S2."""
    return [s1, s2, main + s1 + s2]


def pooled_distribution(views: list[Var]) -> tuple[Var, Var]:
    """Mean-pool the views; first half of the width is the mean, second half the scale."""
    pooled = mean_pool_rows(views)
    mu, raw = split_halves(pooled)
    eta = softplus(raw) + raw.tape.constant(np.full(raw.value.shape, ETA_FLOOR))
    return mu, eta


def gaussian_kl(mu: Var, eta: Var) -> Var:
    """KL(N(mu, diag(eta^2)) || N(0, I)), summed over dimensions, averaged over rows."""
    n = mu.value.shape[0]
    total = sum_squares(mu) + sum_squares(eta) - scale(sum_all(log(eta)), 2.0)
    const = mu.tape.constant(np.array(float(mu.value.size)))
    return scale(total - const, 0.5 / n)


def gaussian_kl_array(mu, sigma) -> float:
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    per_row = 0.5 * np.sum(mu**2 + sigma**2 - 1.0 - 2.0 * np.log(sigma), axis=-1)
    return float(np.mean(per_row))


def ib_loss(
    s_views: list[list[Var]],
    main_self: Var,
    main_other: Var,
    triplets: np.ndarray,
    beta: float,
    side: str,
) -> tuple[Var, Var, Var]:
    """Information-bottleneck loss for the user or item side.

    ``s_views[k]`` holds the Monte-Carlo samples of S for view ``k`` (two views).
    The likelihood term is the BPR likelihood on embeddings enhanced by each
    sampled S, averaged over views and samples; the compression term is the
    Gaussian KL of the pooled distribution to the standard normal prior, also
    averaged over samples. Returns ``(loss, nll, kl)``.
    """
    if side not in ("user", "item"):
        raise ValueError("side must be 'user' or 'item'")
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if len(triplets) == 0:
        raise ValueError("empty BPR batch")
    if len(s_views) != 2 or len(s_views[0]) != len(s_views[1]) or not s_views[0]:
        raise ValueError("need the same positive number of samples for both views")
    n_samples = len(s_views[0])
    nll_terms, kl_terms = [], []
    for n in range(n_samples):
        s1, s2 = s_views[0][n], s_views[1][n]
        for s in (s1, s2):
            enhanced = main_self + s
            if side == "user":
                nll_terms.append(bpr_loss(triplets, enhanced, main_other))
            else:
                nll_terms.append(bpr_loss(triplets, main_other, enhanced))
        mu, eta = pooled_distribution(pooled_sets(s1, s2, main_self))
        kl_terms.append(gaussian_kl(mu, eta))
    nll = scale(_sum(nll_terms), 1.0 / len(nll_terms))
    kl = scale(_sum(kl_terms), 1.0 / len(kl_terms))
    return nll + scale(kl, beta), nll, kl


def _sum(terms: list[Var]) -> Var:
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def export_edge_weights(sub: MetaPathSubgraph, node: int, logits: np.ndarray | None = None, threshold: float = 0.3):
    """``[(neighbor, pi, kept), ...]`` for every structural neighbour of ``node``."""
    if not 0 <= node < sub.size:
        raise IndexError(f"node {node} out of range for a {sub.size}-node subgraph")
    logits = sub.edge_logits if logits is None else np.asarray(logits, dtype=np.float64)
    start, stop = sub.adjacency.indptr[node], sub.adjacency.indptr[node + 1]
    nbrs = sub.adjacency.indices[start:stop]
    pi = sigmoid_array(logits[sub.entry_edge[start:stop]])
    return [(int(v), float(p), bool(p >= threshold)) for v, p in zip(nbrs, pi)]


__all__ = [
    "BAEConfig",
    "BAEOutput",
    "ViewNoise",
    "bae_forward",
    "bae_forward_sub",
    "draw_view_noise",
    "export_edge_weights",
    "gaussian_kl",
    "gaussian_kl_array",
    "hard_operator",
    "ib_loss",
    "pooled_distribution",
    "pooled_sets",
    "relaxed_weight_array",
    "relaxed_weights",
    "sample_edges",
]
