"""Dual contrastive losses between meta-path views."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ndmath import Var, gather_rows, logsumexp_rows, matmul_nt, row_dot, rowwise_l2_normalize, scale, sum_all


@dataclass(frozen=True)
class DCLConfig:
    tau_icl: float = 0.2
    tau_iicl: float = 0.2
    lambda_icl: float = 0.01
    lambda_iicl: float = 0.05
    # "sum" matches the per-batch sum; "mean" divides by the batch size
    reduction: str = "mean"

    def __post_init__(self):
        if self.tau_icl <= 0 or self.tau_iicl <= 0:
            raise ValueError("contrastive temperatures must be > 0")
        if self.lambda_icl < 0 or self.lambda_iicl < 0:
            raise ValueError("contrastive weights must be >= 0")
        if self.reduction not in ("sum", "mean"):
            raise ValueError("reduction must be 'sum' or 'mean'")


def info_nce(view_a: Var, view_b: Var, tau: float, reduction: str = "sum") -> Var:
    """In-batch InfoNCE with cosine similarity; row ``i`` of each view is a positive pair."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if view_a.value.shape != view_b.value.shape or view_a.value.shape[0] < 1:
        raise ValueError("views need equal, non-empty shapes")
    a = rowwise_l2_normalize(view_a)
    b = rowwise_l2_normalize(view_b)
    logits = scale(matmul_nt(a, b), 1.0 / tau)
    positive = scale(row_dot(a, b), 1.0 / tau)
    loss = sum_all(logsumexp_rows(logits) - positive)
    if reduction == "mean":
        loss = scale(loss, 1.0 / view_a.value.shape[0])
    return loss


def info_nce_reference(a: np.ndarray, b: np.ndarray, tau: float) -> float:
    """Double-loop InfoNCE used as an oracle."""
    def cos(x, y):
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0 or ny == 0:
            return 0.0
        return float(x @ y) / (nx * ny)

    total = 0.0
    for i in range(len(a)):
        denom = sum(np.exp(cos(a[i], b[j]) / tau) for j in range(len(b)))
        total -= np.log(np.exp(cos(a[i], b[i]) / tau) / denom)
    return total


def icl_loss(u1: Var, u2: Var, i1: Var, i2: Var, users, items, cfg: DCLConfig) -> Var:
    """Intent-intent contrast between the two decoder outputs of each side."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    user_term = info_nce(gather_rows(u1, users), gather_rows(u2, users), cfg.tau_icl, cfg.reduction)
    item_term = info_nce(gather_rows(i1, items), gather_rows(i2, items), cfg.tau_icl, cfg.reduction)
    return user_term + item_term


def iicl_loss(
    eu: Var, u1: Var, u2: Var, ei: Var, i1: Var, i2: Var, users, items, cfg: DCLConfig
) -> Var:
    """Intent-interaction contrast between main view + view 1 and main view + view 2."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    eu_b = gather_rows(eu, users)
    ei_b = gather_rows(ei, items)
    user_term = info_nce(
        eu_b + gather_rows(u1, users), eu_b + gather_rows(u2, users), cfg.tau_iicl, cfg.reduction
    )
    item_term = info_nce(
        ei_b + gather_rows(i1, items), ei_b + gather_rows(i2, items), cfg.tau_iicl, cfg.reduction
    )
    return user_term + item_term


def contrast_batch(triplets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique users and unique positive items of a BPR batch."""
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    return np.unique(triplets[:, 0]), np.unique(triplets[:, 1])


__all__ = ["DCLConfig", "contrast_batch", "icl_loss", "iicl_loss", "info_nce", "info_nce_reference"]
