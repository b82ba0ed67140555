"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line that the terminal summary prints at
the end of the run (see ``conftest.pytest_terminal_summary``). The Last.fm
criteria need a HetRec Last.fm 2k release (``user_artists.dat`` and friends)
in the directory named by ``IHGCL_LASTFM_DIR``; without it they fail.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.
"""
import itertools
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import central_difference, rel_error
from ihgcl.ablation import run_ablation
from ihgcl.bae import BAEConfig, bae_forward, draw_view_noise, ib_loss, sample_edges
from ihgcl.cli import load_run, main as cli_main
from ihgcl.dcl import DCLConfig, icl_loss, iicl_loss, info_nce
from ihgcl.evaluation import evaluate, ndcg_at_k, rank_items, recall_at_k
from ihgcl.graphdata import (
    HeteroGraph,
    InteractionMatrix,
    MetaPathSpec,
    MetaPathSubgraph,
    Relation,
    compose_metapath,
    interaction_operator,
    normalize_adjacency,
    parse_metapath,
)
from ihgcl.mainview import bpr_loss, propagate_main
from ihgcl.ndmath import Tape
from ihgcl.trainer import TrainConfig, build_model_data, embeddings, fit, load_checkpoint

RESULTS: list[str] = []

LASTFM_ENV = "IHGCL_LASTFM_DIR"
# HetRec Last.fm has no artist-artist relation, so the second item view goes through listeners.
LASTFM_METAPATHS = os.environ.get("IHGCL_LASTFM_METAPATHS", "UU,UATAU;AUA,ATA")
LIGHTGCN = dict(model="lightgcn", d=64, n_layers=2, lr=0.001, batch_size=4096,
                lambda1=0.0, dcl={"lambda_icl": 0.0, "lambda_iicl": 0.0})
GRID = [{"bae": {"p": p, "beta": beta}} for p in (0.1, 0.2) for beta in (0.01, 0.1)]
SEEDS = (2024, 2025, 2026)
_cache: dict = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {n}: {detail}"
    RESULTS.append(line)
    print(line)


def require(n: int, ok: bool, detail: str) -> None:
    record(n, ok, detail)
    assert ok, detail


# --- criterion 1: gradient checks ---------------------------------------------------

def _fd_bpr(rng):
    m, n = rng.integers(1, 5), rng.integers(2, 5)
    pairs = np.argwhere(rng.random((m, n)) < 0.5)
    if len(pairs) == 0:
        pairs = np.array([[0, 0]])
    adj = interaction_operator(InteractionMatrix(m, n, pairs))
    d = rng.integers(1, 5)
    u0, i0 = rng.normal(size=(m, d)), rng.normal(size=(n, d))
    trip = np.stack([rng.integers(0, m, 4), rng.integers(0, n, 4), rng.integers(0, n, 4)], axis=1)

    def loss(u, i):
        t = Tape()
        out = propagate_main(adj, t.leaf(u, "u"), t.leaf(i, "i"), 2)
        return t, bpr_loss(trip, out.user_emb, out.item_emb)

    t, out = loss(u0, i0)
    g = t.gradients(out)
    fd_u = central_difference(lambda x: float(loss(x, i0)[1].value), u0)
    fd_i = central_difference(lambda x: float(loss(u0, x)[1].value), i0)
    return rel_error(np.concatenate([g["u"].ravel(), g["i"].ravel()]), np.concatenate([fd_u.ravel(), fd_i.ravel()]))


def _fd_multi(rng, build, arrays):
    # one relative error over the whole gradient, so inputs with an exactly zero
    # gradient do not turn finite-difference roundoff into a large ratio
    t, out = build(*arrays)
    g = t.gradients(out)
    analytic, numeric = [], []
    for k, x in enumerate(arrays):
        def f(v, k=k):
            args = list(arrays)
            args[k] = v
            return float(build(*args)[1].value)
        analytic.append(g[f"x{k}"].ravel())
        numeric.append(central_difference(f, x).ravel())
    return rel_error(np.concatenate(analytic), np.concatenate(numeric))


def _fd_icl(rng):
    nu, ni, d = rng.integers(2, 5), rng.integers(2, 5), rng.integers(2, 5)
    cfg = DCLConfig(tau_icl=float(rng.uniform(0.1, 1.0)), reduction=str(rng.choice(["sum", "mean"])))
    arrays = [rng.normal(size=(nu, d)), rng.normal(size=(nu, d)), rng.normal(size=(ni, d)), rng.normal(size=(ni, d))]

    def build(*xs):
        t = Tape()
        leaves = [t.leaf(x, f"x{k}") for k, x in enumerate(xs)]
        return t, icl_loss(*leaves, np.arange(nu), np.arange(ni), cfg)

    return _fd_multi(rng, build, arrays)


def _fd_iicl(rng):
    nu, ni, d = rng.integers(2, 5), rng.integers(2, 5), rng.integers(2, 5)
    cfg = DCLConfig(tau_iicl=float(rng.uniform(0.1, 1.0)), reduction=str(rng.choice(["sum", "mean"])))
    arrays = [rng.normal(size=(nu, d)) for _ in range(3)] + [rng.normal(size=(ni, d)) for _ in range(3)]

    def build(*xs):
        t = Tape()
        leaves = [t.leaf(x, f"x{k}") for k, x in enumerate(xs)]
        return t, iicl_loss(*leaves, np.arange(nu), np.arange(ni), cfg)

    return _fd_multi(rng, build, arrays)


def _fd_ib(rng):
    n, d = rng.integers(3, 9), 2 * rng.integers(1, 3)  # pooled Gaussian splits the width in half
    a = np.triu((rng.random((n, n)) < 0.6).astype(float), 1)
    a[0, 1] = 1.0
    sub = MetaPathSubgraph(MetaPathSpec("XX", (), "X"), sp.csr_matrix(a + a.T))
    cfg = BAEConfig(p=float(rng.uniform(0.0, 0.5)), beta=float(rng.uniform(0.0, 1.0)),
                    temperature=float(rng.uniform(0.5, 1.5)))
    noise = [draw_view_noise(sub, cfg, rng) for _ in range(2)]
    other = rng.normal(size=(n, d))
    trip = np.stack([rng.integers(0, n, 3), rng.integers(0, n, 3), rng.integers(0, n, 3)], axis=1)
    side = str(rng.choice(["user", "item"]))
    arrays = [rng.normal(size=(n, d)), rng.normal(size=sub.n_edges), rng.normal(size=(1, d))]

    def build(emb, logits, token):
        t = Tape()
        rows, lg, tok = t.leaf(emb, "x0"), t.leaf(logits, "x1"), t.leaf(token, "x2")
        views = []
        for nz in noise:
            adj, w = sample_edges(sub, lg, cfg, nz.eps)
            views.append([bae_forward(adj, rows, tok, cfg, nz, w).s])
        return t, ib_loss(views, rows, t.constant(other), trip, cfg.beta, side)[0]

    return _fd_multi(rng, build, arrays)


def test_criterion_1_gradient_checks():
    start = time.perf_counter()
    worst = {}
    for name, check in [("BPR", _fd_bpr), ("ICL", _fd_icl), ("IICL", _fd_iicl), ("IB", _fd_ib)]:
        worst[name] = max(check(np.random.default_rng([1, k, len(name)])) for k in range(100))
    elapsed = time.perf_counter() - start
    ok = all(v < 1e-4 for v in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k} max rel err {v:.1e}" for k, v in worst.items())
    require(1, ok, f"finite-difference checks on 100 instances per loss ({detail}; {elapsed:.1f}s < 60s)")


# --- criterion 2: oracle equivalence ------------------------------------------------

def _naive_norm(dense):
    n = dense.shape[0]
    deg = dense.sum(axis=1)
    out = np.zeros_like(dense)
    for a in range(n):
        for b in range(n):
            if dense[a, b]:
                out[a, b] = 1.0 / np.sqrt(deg[a] * deg[b])
    return out


def _naive_paths(graph, rels):
    start_type = graph.relation(rels[0][0])
    n = graph.node_types[start_type.dst if rels[0][1] else start_type.src]
    links = []
    for name, rev in rels:
        e = graph.relation(name).edges
        links.append([(int(b), int(a)) if rev else (int(a), int(b)) for a, b in e])
    found = set()

    def walk(node, depth, origin):
        if depth == len(links):
            if node != origin:
                found.add((min(origin, node), max(origin, node)))
            return
        for a, b in links[depth]:
            if a == node:
                walk(b, depth + 1, origin)

    for s in range(n):
        walk(s, 0, s)
    return found


def _naive_nce(a, b, tau):
    total = 0.0
    for r in range(len(a)):
        sims = [float(a[r] @ b[c] / (np.linalg.norm(a[r]) * np.linalg.norm(b[c]))) / tau for c in range(len(b))]
        total += -sims[r] + np.log(sum(np.exp(s) for s in sims))
    return total


def _naive_rank(scores, exclude, k):
    cand = sorted((i for i in range(len(scores)) if i not in exclude), key=lambda i: (-scores[i], i))
    return cand[:k]


def _naive_ndcg(top, test, k):
    dcg = sum(1 / np.log2(r + 2) for r, i in enumerate(top[:k]) if i in test)
    return dcg / sum(1 / np.log2(r + 2) for r in range(min(k, len(test))))


def test_criterion_2_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    err = {"adjacency": 0.0, "meta-path": 0, "InfoNCE": 0.0, "Recall/NDCG": 0.0}

    for n in range(1, 21):
        for density in (0.1, 0.3, 0.6):
            a = np.triu((rng.random((n, n)) < density).astype(float), 1)
            dense = a + a.T
            got = normalize_adjacency(sp.csr_matrix(dense)).toarray()
            err["adjacency"] = max(err["adjacency"], float(np.max(np.abs(got - _naive_norm(dense)))))
        for m in range(1, n):
            pairs = np.argwhere(rng.random((m, n - m)) < 0.4)
            inter = InteractionMatrix(m, n - m, pairs)
            block = np.zeros((n, n))
            for u, i in pairs:
                block[u, m + i] = block[m + i, u] = 1
            got = interaction_operator(inter).toarray()
            err["adjacency"] = max(err["adjacency"], float(np.max(np.abs(got - _naive_norm(block)))))

    paths = [("IBI", [("I-B", False), ("I-B", True)]), ("IUI", [("U-I", True), ("U-I", False)]),
             ("UIBIU", [("U-I", False), ("I-B", False), ("I-B", True), ("U-I", True)])]
    for trial in range(200):
        nu, ni, nb = rng.integers(1, 6), rng.integers(1, 9), rng.integers(1, 6)
        g = HeteroGraph(
            {"U": int(nu), "I": int(ni), "B": int(nb)},
            [Relation("U-I", "U", "I", np.argwhere(rng.random((nu, ni)) < 0.4)),
             Relation("I-B", "I", "B", np.argwhere(rng.random((ni, nb)) < 0.4))],
        )
        for text, chain in paths:
            sub = compose_metapath(g, parse_metapath(g, text))
            mismatch = {(int(x), int(y)) for x, y in sub.edges} ^ _naive_paths(g, chain)
            err["meta-path"] += len(mismatch)

    for n in range(1, 9):
        for d in (1, 2, 4):
            for tau in (0.1, 0.2, 1.0):
                a, b = rng.normal(size=(n, d)), rng.normal(size=(n, d))
                t = Tape()
                got = float(info_nce(t.constant(a), t.constant(b), tau).value)
                err["InfoNCE"] = max(err["InfoNCE"], abs(got - _naive_nce(a, b, tau)))

    for n_items in range(1, 13):
        for _ in range(10):
            scores = rng.integers(-3, 4, size=n_items).astype(float)
            exclude = set(rng.choice(n_items, size=rng.integers(0, n_items), replace=False).tolist())
            remaining = [i for i in range(n_items) if i not in exclude]
            if not remaining:
                continue
            test = rng.choice(remaining, size=rng.integers(1, len(remaining) + 1), replace=False).tolist()
            for k in range(1, n_items + 1):
                top = rank_items(scores, sorted(exclude), k).tolist()
                ref = _naive_rank(scores, exclude, k)
                if top[: len(ref)] != ref:
                    err["Recall/NDCG"] = np.inf
                e1 = abs(recall_at_k(top, test, k) - len(set(ref) & set(test)) / len(test))
                e2 = abs(ndcg_at_k(top, test, k) - _naive_ndcg(ref, test, k))
                err["Recall/NDCG"] = max(err["Recall/NDCG"], e1, e2)
    for perm in itertools.permutations(range(5)):
        for size in (1, 2, 3):
            test = list(perm[:size][::-1])
            for k in (1, 3, 5):
                err["Recall/NDCG"] = max(err["Recall/NDCG"], abs(ndcg_at_k(list(perm), test, k)
                                                                  - _naive_ndcg(list(perm), test, k)))

    elapsed = time.perf_counter() - start
    ok = (err["adjacency"] <= 1e-10 and err["meta-path"] == 0 and err["InfoNCE"] <= 1e-10
          and err["Recall/NDCG"] <= 1e-10 and elapsed < 120)
    detail = (f"adjacency {err['adjacency']:.1e}, meta-path mismatched pairs {err['meta-path']}, "
              f"InfoNCE {err['InfoNCE']:.1e}, Recall/NDCG {err['Recall/NDCG']:.1e}; {elapsed:.1f}s < 120s")
    require(2, ok, f"brute-force oracles ({detail})")


# --- Last.fm criteria ---------------------------------------------------------------

def lastfm(n: int, tmp_path_factory):
    """Prepared Last.fm run loaded as (train, test, subgraphs); fails criterion ``n`` when absent."""
    raw = os.environ.get(LASTFM_ENV)
    if not raw or not (Path(raw) / "user_artists.dat").is_file():
        require(n, False, f"needs the HetRec Last.fm release; set {LASTFM_ENV} to the directory "
                          "holding user_artists.dat (currently "
                          f"{'unset' if not raw else repr(raw)})")
    if "run" not in _cache:
        out = tmp_path_factory.mktemp("lastfm")
        code = cli_main(["prepare", "--data-dir", raw, "--meta-paths", LASTFM_METAPATHS,
                         "--split-seed", "0", "--holdout", "0.2", "--out", str(out)])
        assert code == 0, "prepare failed on the Last.fm directory"
        _, train, test, subs = load_run(out)
        _cache["run"] = (train, test, subs)
    return _cache["run"]


def _test_recall(cfg, train, test, subs, k=20):
    data = build_model_data(train, subs if cfg.model == "ihgcl" else (), cfg)
    state = fit(data, cfg)
    du, di = embeddings(state.final_params(), data, cfg)
    return evaluate(du, di, test, data.observed(), ks=(k,)).recall(k), state


def _baseline(train, test, subs):
    if "lightgcn" not in _cache:
        start = time.perf_counter()
        recall, _ = _test_recall(TrainConfig.from_dict(LIGHTGCN), train, test, subs)
        _cache["lightgcn"] = (recall, time.perf_counter() - start)
    return _cache["lightgcn"]


def _selected(train, test, subs):
    """Grid point with the best validation Recall@20, plus its test recall."""
    if "selected" not in _cache:
        start = time.perf_counter()
        best = None
        for point in GRID:
            cfg = TrainConfig().with_updates(**point)
            recall, state = _test_recall(cfg, train, test, subs)
            if best is None or state.best_metric > best[1]:
                best = (cfg, state.best_metric, recall)
        _cache["selected"] = (best[0], best[2], time.perf_counter() - start)
    return _cache["selected"]


def test_criterion_3_determinism(tmp_path, tmp_path_factory):
    train, test, subs = lastfm(3, tmp_path_factory)
    cfg = TrainConfig(epochs=5, early_stop_patience=0)
    data = build_model_data(train, subs, cfg)
    fit(data, cfg, log_path=tmp_path / "a.csv")
    fit(data, cfg, log_path=tmp_path / "b.csv")
    same_log = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    full = fit(data, cfg)
    fit(data, cfg.with_updates(epochs=3), checkpoint_path=tmp_path / "ck.bin")
    resumed = fit(data, cfg, state=load_checkpoint(tmp_path / "ck.bin", cfg, data))
    metrics = [evaluate(*embeddings(s.final_params(), data, cfg), test, data.observed()) for s in (full, resumed)]
    same_metrics = [(r.recall, r.ndcg) for r in metrics[0].rows] == [(r.recall, r.ndcg) for r in metrics[1].rows]
    require(3, same_log and same_metrics,
            f"train_log.csv bit-identical across runs: {same_log}; 3+2 resumed metrics equal 5-epoch run: {same_metrics}")


def test_criterion_4_lightgcn_baseline(tmp_path_factory):
    train, test, subs = lastfm(4, tmp_path_factory)
    recall, seconds = _baseline(train, test, subs)
    require(4, recall >= 0.24 and seconds <= 1800,
            f"LightGCN Recall@20 = {recall:.4f} (need >= 0.24) in {seconds / 60:.1f} min (limit 30)")


def test_criterion_5_relative_improvement(tmp_path_factory):
    train, test, subs = lastfm(5, tmp_path_factory)
    base, _ = _baseline(train, test, subs)
    cfg, recall, seconds = _selected(train, test, subs)
    gain = recall / base - 1 if base > 0 else float("nan")
    require(5, gain >= 0.03 and seconds <= 7200,
            f"IHGCL Recall@20 = {recall:.4f} vs LightGCN {base:.4f}: {100 * gain:+.2f}% (need >= +3%), "
            f"selection took {seconds / 60:.1f} min (limit 120); selected {cfg.bae.p=}, {cfg.bae.beta=}")


def test_criterion_6_ablation_ordering(tmp_path_factory):
    train, test, subs = lastfm(6, tmp_path_factory)
    cfg, _, _ = _selected(train, test, subs)
    means = {}
    for variant in ("full", "wo_iicl", "wo_dcl"):
        vals = []
        for seed in SEEDS:
            scfg = cfg.with_updates(seed=seed)
            data = build_model_data(train, subs, scfg)
            report, _ = run_ablation(variant, scfg, data, test, ks=(20,))
            vals.append(report.recall(20))
        means[variant] = float(np.mean(vals))
    ok = means["full"] >= means["wo_iicl"] and means["full"] >= means["wo_dcl"]
    require(6, ok, "3-seed Recall@20 " + ", ".join(f"{k} {v:.4f}" for k, v in means.items()))


def test_criterion_7_iicl_sweep(tmp_path_factory):
    """Informative: recorded, never binding."""
    if not os.environ.get(LASTFM_ENV):
        record(7, False, f"informative; not run without {LASTFM_ENV}")
        pytest.xfail("informative criterion needs Last.fm")
    train, test, subs = lastfm(7, tmp_path_factory)
    cfg, _, _ = _selected(train, test, subs)
    sweep = {lam: _test_recall(cfg.with_updates(dcl={"lambda_iicl": lam}), train, test, subs)[0]
             for lam in (0.01, 0.02, 0.05, 0.1)}
    peak = max(sweep, key=sweep.get)
    record(7, peak <= 0.05, "informative; lambda_IICL sweep " + ", ".join(f"{k}: {v:.4f}" for k, v in sweep.items())
           + f"; peak at {peak}")


def test_criterion_8_stretch(tmp_path_factory):
    """Non-binding: recorded, never binding."""
    if not os.environ.get(LASTFM_ENV):
        record(8, False, f"non-binding stretch target; not run without {LASTFM_ENV}")
        pytest.xfail("stretch criterion needs Last.fm")
    train, test, subs = lastfm(8, tmp_path_factory)
    _, recall, _ = _selected(train, test, subs)
    record(8, abs(recall - 0.2824) <= 0.01, f"non-binding; Recall@20 {recall:.4f} vs target 0.2824 +- 0.01")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
