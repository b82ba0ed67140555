"""Full-ranking top-K evaluation: Recall@K, NDCG@K and sparsity buckets."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .graphdata import InteractionMatrix

DEFAULT_KS = (5, 10, 20)


def rank_items(scores: np.ndarray, exclude=(), k: int = 20) -> np.ndarray:
    """Top-``k`` item indices by descending score; ties go to the smaller index."""
    scores = np.array(scores, dtype=np.float64, copy=True)
    exclude = np.asarray(exclude, dtype=np.int64)
    scores[exclude] = -np.inf
    n_candidates = scores.size - np.unique(exclude).size
    order = np.argsort(-scores, kind="stable")
    return order[: min(k, n_candidates)]


def topk_items(
    d_user: np.ndarray,
    d_item: np.ndarray,
    users: np.ndarray,
    exclude: InteractionMatrix | None,
    k: int,
    chunk: int = 512,
) -> np.ndarray:
    """Top-``k`` lists for ``users``, skipping each user's ``exclude`` items.

    Returns an ``(len(users), k)`` array; slots beyond a user's candidate count
    are filled with -1.
    """
    users = np.asarray(users, dtype=np.int64)
    out = np.full((len(users), k), -1, dtype=np.int64)
    if exclude is not None:
        indptr, items = exclude.user_items()
    for start in range(0, len(users), chunk):
        batch = users[start:start + chunk]
        scores = d_user[batch] @ d_item.T
        n_cand = np.full(len(batch), scores.shape[1])
        if exclude is not None:
            for r, u in enumerate(batch):
                seen = items[indptr[u]:indptr[u + 1]]
                scores[r, seen] = -np.inf
                n_cand[r] -= len(seen)
        order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
        for r in range(len(batch)):
            m = min(k, n_cand[r])
            out[start + r, :m] = order[r, :m]
    return out


def recall_at_k(topk, test_items, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    test = set(np.asarray(test_items).tolist())
    if not test:
        raise ValueError("empty test set")
    hits = sum(1 for i in np.asarray(topk)[:k].tolist() if i in test)
    return hits / len(test)


def ndcg_at_k(topk, test_items, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    test = set(np.asarray(test_items).tolist())
    if not test:
        raise ValueError("empty test set")
    dcg = sum(1.0 / np.log2(r + 2) for r, i in enumerate(np.asarray(topk)[:k].tolist()) if i in test)
    idcg = sum(1.0 / np.log2(r + 2) for r in range(min(len(test), k)))
    return dcg / idcg


def _batch_metrics(topk: np.ndarray, test_indptr, test_items, users, ks):
    """Per-user recall and ndcg arrays for every K, vectorised over users."""
    kmax = max(ks)
    n = len(users)
    hits = np.zeros((n, kmax), dtype=bool)
    n_test = np.empty(n, dtype=np.int64)
    for r, u in enumerate(users):
        t = test_items[test_indptr[u]:test_indptr[u + 1]]
        n_test[r] = len(t)
        hits[r] = np.isin(topk[r, :kmax], t) & (topk[r, :kmax] >= 0)
    discounts = 1.0 / np.log2(np.arange(2, kmax + 2))
    ideal = np.cumsum(discounts)
    out = {}
    for k in ks:
        h = hits[:, :k]
        recall = h.sum(axis=1) / n_test
        dcg = (h * discounts[:k]).sum(axis=1)
        idcg = ideal[np.minimum(n_test, k) - 1]
        out[k] = (recall, dcg / idcg)
    return out


def sparsity_buckets(counts: np.ndarray, n_buckets: int = 4) -> np.ndarray:
    """Assign users to ``n_buckets`` groups of roughly equal total interactions.

    Users are ordered by ascending count (ties by position); a user joins
    bucket ``floor(n_buckets * C / T)`` where ``C`` is the total count of the
    users before it and ``T`` the grand total.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if len(counts) < n_buckets:
        raise ValueError(f"{len(counts)} users cannot fill {n_buckets} buckets")
    order = np.argsort(counts, kind="stable")
    before = np.concatenate([[0], np.cumsum(counts[order])[:-1]])
    total = max(int(counts.sum()), 1)
    bucket_sorted = np.minimum(n_buckets - 1, (n_buckets * before) // total)
    out = np.empty(len(counts), dtype=np.int64)
    out[order] = bucket_sorted
    return out


@dataclass(frozen=True)
class EvalRow:
    bucket: str
    k: int
    recall: float
    ndcg: float
    users: int


@dataclass
class EvalReport:
    rows: list[EvalRow]
    bucket_bounds: dict[str, tuple[int, int]] = field(default_factory=dict)

    def get(self, k: int, bucket: str = "all") -> EvalRow:
        for row in self.rows:
            if row.k == k and row.bucket == bucket:
                return row
        raise KeyError((bucket, k))

    def recall(self, k: int = 20, bucket: str = "all") -> float:
        return self.get(k, bucket).recall

    def ndcg(self, k: int = 20, bucket: str = "all") -> float:
        return self.get(k, bucket).ndcg

    def to_csv(self, path, variant: str = "full"):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", "bucket", "K", "recall", "ndcg", "users"])
            for row in self.rows:
                w.writerow([variant, row.bucket, row.k, f"{row.recall:.6f}", f"{row.ndcg:.6f}", row.users])


def evaluate(
    d_user: np.ndarray,
    d_item: np.ndarray,
    test: InteractionMatrix,
    exclude: InteractionMatrix | None,
    ks=DEFAULT_KS,
    n_buckets: int = 0,
) -> EvalReport:
    """Average Recall/NDCG over users with a non-empty test set.

    With ``n_buckets > 0`` the report also holds per-sparsity-bucket rows,
    bucketing by each user's count in ``exclude`` (the training interactions).
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise ValueError("K values must be >= 1")
    t_indptr, t_items = test.user_items()
    users = np.flatnonzero(np.diff(t_indptr) > 0)
    if len(users) == 0:
        raise ValueError("no user has test interactions")
    topk = topk_items(d_user, d_item, users, exclude, max(ks))
    per_k = _batch_metrics(topk, t_indptr, t_items, users, ks)
    rows = [EvalRow("all", k, float(per_k[k][0].mean()), float(per_k[k][1].mean()), len(users)) for k in ks]
    bounds = {}
    if n_buckets:
        counts = exclude.degrees()[users] if exclude is not None else np.zeros(len(users), dtype=np.int64)
        bucket = sparsity_buckets(counts, n_buckets)
        for b in range(n_buckets):
            sel = bucket == b
            name = str(b)
            if sel.any():
                bounds[name] = (int(counts[sel].min()), int(counts[sel].max()))
            for k in ks:
                rec, nd = per_k[k]
                rows.append(EvalRow(
                    name, k,
                    float(rec[sel].mean()) if sel.any() else 0.0,
                    float(nd[sel].mean()) if sel.any() else 0.0,
                    int(sel.sum()),
                ))
    return EvalReport(rows, bounds)


def sparsity_report(d_user, d_item, test, exclude, ks=DEFAULT_KS, n_buckets: int = 4) -> EvalReport:
    report = evaluate(d_user, d_item, test, exclude, ks, n_buckets)
    return EvalReport([r for r in report.rows if r.bucket != "all"], report.bucket_bounds)


__all__ = [
    "DEFAULT_KS",
    "EvalReport",
    "EvalRow",
    "evaluate",
    "ndcg_at_k",
    "rank_items",
    "recall_at_k",
    "sparsity_buckets",
    "sparsity_report",
    "topk_items",
]
