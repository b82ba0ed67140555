"""Synthetic heterogeneous graphs with planted communities.

The schema mirrors the music-listening use case: users ``U``, artists ``A``
and tags ``T`` with relations ``U-A`` (interactions), ``U-U`` (friendship),
``A-A`` (similar artists) and ``A-T`` (tagging). Every node belongs to one of
``n_clusters`` communities and links are mostly drawn inside a community, so
the meta-path views carry real signal about held-out interactions.
"""
from __future__ import annotations

import numpy as np

from .graphdata import HeteroGraph, Relation


def _pairs_within(labels_a, labels_b, p_in, p_out, rng, exclude_diag=False):
    same = labels_a[:, None] == labels_b[None, :]
    prob = np.where(same, p_in, p_out)
    hit = rng.random(prob.shape) < prob
    if exclude_diag:
        hit = np.triu(hit, 1)
    return np.argwhere(hit).astype(np.int64)


def planted_hetero_graph(
    n_users: int = 60,
    n_items: int = 80,
    n_tags: int = 12,
    n_clusters: int = 3,
    p_interact: float = 0.25,
    p_noise: float = 0.02,
    p_friend: float = 0.2,
    p_similar: float = 0.15,
    seed: int = 0,
) -> HeteroGraph:
    """Random graph in the ``U/A/T`` schema; every user gets at least two interactions."""
    if min(n_users, n_items, n_tags) < n_clusters or n_clusters < 1:
        raise ValueError("every node type needs at least one node per cluster")
    rng = np.random.default_rng(seed)
    cu = np.arange(n_users) % n_clusters
    ca = np.arange(n_items) % n_clusters
    ct = np.arange(n_tags) % n_clusters

    ua = _pairs_within(cu, ca, p_interact, p_noise, rng)
    # guarantee two in-cluster interactions per user so any holdout leaves training data
    extra = []
    have = np.bincount(ua[:, 0], minlength=n_users)
    for u in np.flatnonzero(have < 2):
        pool = np.flatnonzero(ca == cu[u])
        for a in rng.choice(pool, size=min(2, len(pool)), replace=False):
            extra.append((u, a))
    if extra:
        ua = np.unique(np.concatenate([ua, np.array(extra, dtype=np.int64)]), axis=0)

    uu = _pairs_within(cu, cu, p_friend, p_noise / 4, rng, exclude_diag=True)
    aa = _pairs_within(ca, ca, p_similar, p_noise / 4, rng, exclude_diag=True)
    at = []
    for a in range(n_items):
        pool = np.flatnonzero(ct == ca[a])
        for t in rng.choice(pool, size=min(2, len(pool)), replace=False):
            at.append((a, t))
    at = np.unique(np.array(at, dtype=np.int64), axis=0)

    return HeteroGraph(
        {"U": n_users, "A": n_items, "T": n_tags},
        [
            Relation("U-A", "U", "A", ua, "user_artist.tsv"),
            Relation("U-U", "U", "U", uu, "user_user.tsv"),
            Relation("A-A", "A", "A", aa, "artist_artist.tsv"),
            Relation("A-T", "A", "T", at, "artist_tag.tsv"),
        ],
        user_type="U",
        item_type="A",
        interaction="U-A",
    )


DEFAULT_METAPATHS = "UU,UATAU;AA,ATA"

__all__ = ["DEFAULT_METAPATHS", "planted_hetero_graph"]
