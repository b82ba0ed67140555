"""Heterogeneous edge-list datasets, interaction matrices and meta-path subgraphs."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .ndmath import SparseAdjacency

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
MAX_METAPATH_HOPS = 4


class DatasetError(ValueError):
    """Malformed dataset directory or edge file."""


class MetaPathError(ValueError):
    """Meta-path that does not fit the graph schema or model configuration."""


@dataclass(frozen=True)
class Relation:
    name: str
    src: str
    dst: str
    edges: np.ndarray  # (E, 2) int64, file order preserved
    file: str = ""

    def incidence(self, n_src: int, n_dst: int) -> sp.csr_matrix:
        data = np.ones(len(self.edges), dtype=np.float64)
        return sp.csr_matrix((data, (self.edges[:, 0], self.edges[:, 1])), shape=(n_src, n_dst))


@dataclass
class HeteroGraph:
    node_types: dict[str, int]
    relations: list[Relation]
    user_type: str = ""
    item_type: str = ""
    interaction: str = ""

    def __post_init__(self):
        if not self.node_types:
            raise DatasetError("graph needs at least one node type")
        names = list(self.node_types)
        if not self.user_type:
            self.user_type = names[0]
        if not self.item_type:
            self.item_type = names[1] if len(names) > 1 else names[0]
        for t in (self.user_type, self.item_type):
            if t not in self.node_types:
                raise DatasetError(f"unknown node type {t!r}")
        seen = set()
        for rel in self.relations:
            if rel.name in seen:
                raise DatasetError(f"duplicate relation name {rel.name!r}")
            seen.add(rel.name)
            _check_edges(rel, self.node_types)
        if not self.interaction:
            for rel in self.relations:
                if rel.src == self.user_type and rel.dst == self.item_type:
                    self.interaction = rel.name
                    break
        if self.interaction and self.interaction not in seen:
            raise DatasetError(f"unknown interaction relation {self.interaction!r}")

    @property
    def n_users(self) -> int:
        return self.node_types[self.user_type]

    @property
    def n_items(self) -> int:
        return self.node_types[self.item_type]

    def relation(self, name: str) -> Relation:
        for rel in self.relations:
            if rel.name == name:
                return rel
        raise KeyError(name)

    def is_heterogeneous(self) -> bool:
        return len(self.node_types) + len(self.relations) > 2

    def interactions(self) -> "InteractionMatrix":
        if not self.interaction:
            raise DatasetError("graph has no user-item relation")
        rel = self.relation(self.interaction)
        return InteractionMatrix(self.n_users, self.n_items, rel.edges)


def _check_edges(rel: Relation, node_types: dict[str, int], where: str = ""):
    for t in (rel.src, rel.dst):
        if t not in node_types:
            raise DatasetError(f"relation {rel.name!r} references unknown node type {t!r}")
    e = rel.edges
    if e.ndim != 2 or e.shape[1] != 2:
        raise DatasetError(f"relation {rel.name!r}: edges must be (E, 2)")
    if len(e) == 0:
        return
    loc = where or rel.name
    for col, t in ((0, rel.src), (1, rel.dst)):
        bad = np.flatnonzero((e[:, col] < 0) | (e[:, col] >= node_types[t]))
        if bad.size:
            k = int(bad[0])
            raise DatasetError(
                f"{loc}:{k + 1}: index {int(e[k, col])} out of range for type {t!r} "
                f"(count {node_types[t]})"
            )
    keys = e[:, 0] * node_types[rel.dst] + e[:, 1]
    order = np.argsort(keys, kind="stable")
    dup = np.flatnonzero(np.diff(keys[order]) == 0)
    if dup.size:
        k = int(order[dup[0] + 1])
        raise DatasetError(f"{loc}:{k + 1}: duplicate edge {int(e[k, 0])}\t{int(e[k, 1])}")


@dataclass(frozen=True)
class InteractionMatrix:
    """Binary user-item matrix kept as sorted unique pairs."""

    M: int
    N: int
    pairs: np.ndarray = field(repr=False)

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size:
            if pairs[:, 0].min() < 0 or pairs[:, 0].max() >= self.M:
                raise DatasetError("user index out of range")
            if pairs[:, 1].min() < 0 or pairs[:, 1].max() >= self.N:
                raise DatasetError("item index out of range")
        pairs = np.unique(pairs, axis=0) if pairs.size else pairs
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(len(self.pairs))
        return sp.csr_matrix((data, (self.pairs[:, 0], self.pairs[:, 1])), shape=(self.M, self.N))

    def user_items(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, items): items of user u are ``items[indptr[u]:indptr[u+1]]``."""
        counts = np.bincount(self.pairs[:, 0], minlength=self.M)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return indptr, self.pairs[:, 1].copy()

    def degrees(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 0], minlength=self.M)


def load_hetero_graph(data_dir) -> HeteroGraph:
    data_dir = Path(data_dir)
    path = data_dir / MANIFEST
    if not path.is_file():
        raise DatasetError(f"missing {MANIFEST} in {data_dir}")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    try:
        node_types = {str(k): int(v) for k, v in manifest["node_types"].items()}
        specs = manifest["relations"]
    except (KeyError, AttributeError, TypeError) as exc:
        raise DatasetError(f"{path}: malformed manifest ({exc})") from exc
    relations = []
    for spec in specs:
        rel_path = data_dir / spec["file"]
        edges = read_edge_file(rel_path)
        rel = Relation(spec["name"], spec["src"], spec["dst"], edges, spec["file"])
        _check_edges(rel, node_types, where=str(rel_path))
        relations.append(rel)
    return HeteroGraph(
        node_types,
        relations,
        user_type=manifest.get("user_type", ""),
        item_type=manifest.get("item_type", ""),
        interaction=manifest.get("interaction", ""),
    )


def read_edge_file(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"missing edge file {path}")
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected 'src<TAB>dst', got {line!r}")
            try:
                rows.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer index in {line!r}") from None
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def write_edge_file(path, edges: np.ndarray):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{a}\t{b}\n" for a, b in edges.tolist())


def save_hetero_graph(graph: HeteroGraph, data_dir):
    """Write the canonical on-disk form read by :func:`load_hetero_graph`."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    rel_specs = []
    for rel in graph.relations:
        fname = rel.file or f"{rel.name}.tsv"
        write_edge_file(data_dir / fname, rel.edges)
        rel_specs.append({"name": rel.name, "src": rel.src, "dst": rel.dst, "file": fname})
    manifest = {
        "node_types": graph.node_types,
        "relations": rel_specs,
        "user_type": graph.user_type,
        "item_type": graph.item_type,
        "interaction": graph.interaction,
    }
    with open(data_dir / MANIFEST, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(manifest, indent=2) + "\n")


def split_interactions(
    inter: InteractionMatrix, holdout: float, rng: np.random.Generator
) -> tuple[InteractionMatrix, InteractionMatrix]:
    """Per-user random holdout.

    Each user keeps ``round(holdout * n)`` of its ``n`` interactions for the
    second matrix, capped so that at least one stays in the first.
    """
    if not 0.0 <= holdout < 1.0:
        raise ValueError("holdout fraction must lie in [0, 1)")
    pairs = inter.pairs
    keys = rng.random(len(pairs))
    order = np.lexsort((keys, pairs[:, 0]))
    users = pairs[order, 0]
    counts = np.bincount(users, minlength=inter.M)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.arange(len(pairs)) - starts[users]
    n_out = np.minimum(np.rint(holdout * counts).astype(np.int64), np.maximum(counts - 1, 0))
    held = rank < n_out[users]
    chosen = order[held]
    mask = np.zeros(len(pairs), dtype=bool)
    mask[chosen] = True
    return (
        InteractionMatrix(inter.M, inter.N, pairs[~mask]),
        InteractionMatrix(inter.M, inter.N, pairs[mask]),
    )


# --- adjacency -------------------------------------------------------------

def bipartite_structure(inter: InteractionMatrix) -> sp.csr_matrix:
    """Square (M+N) block matrix [[0, R], [R^T, 0]]."""
    r = inter.to_csr()
    return sp.bmat([[None, r], [r.T, None]], format="csr", dtype=np.float64)


def normalize_adjacency(structure, shape: tuple[int, int] | None = None) -> SparseAdjacency:
    """Symmetric degree normalisation ``D^-1/2 A D^-1/2`` of a binary structure.

    ``structure`` is a square sparse/dense matrix (non-zeros are edges) or an
    ``(E, 2)`` array of index pairs together with ``shape``. Degree-zero rows
    stay zero.
    """
    if shape is not None:
        pairs = np.asarray(structure, dtype=np.int64).reshape(-1, 2)
        mat = sp.csr_matrix(
            (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=shape
        )
    else:
        mat = sp.csr_matrix(structure, dtype=np.float64)
    mat = mat.copy()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.data[:] = 1.0
    mat.sort_indices()
    if mat.shape[0] != mat.shape[1]:
        raise ValueError("adjacency must be square")
    deg = np.diff(mat.indptr).astype(np.float64)
    col_deg = np.bincount(mat.indices, minlength=mat.shape[1]).astype(np.float64)
    inv_r = np.zeros_like(deg)
    inv_r[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    inv_c = np.zeros_like(col_deg)
    inv_c[col_deg > 0] = 1.0 / np.sqrt(col_deg[col_deg > 0])
    rows = np.repeat(np.arange(mat.shape[0]), np.diff(mat.indptr))
    mat.data = inv_r[rows] * inv_c[mat.indices]
    return SparseAdjacency.from_scipy(mat)


def interaction_operator(inter: InteractionMatrix) -> SparseAdjacency:
    return normalize_adjacency(bipartite_structure(inter))


# --- meta-paths ------------------------------------------------------------

@dataclass(frozen=True)
class MetaPathSpec:
    name: str
    chain: tuple[tuple[str, bool], ...]  # (relation name, reversed?)
    endpoint_type: str

    @property
    def hops(self) -> int:
        return len(self.chain)


def _type_codes(graph: HeteroGraph) -> dict[str, str]:
    codes: dict[str, str] = {}
    for t in graph.node_types:
        code = t if len(t) == 1 else t[0].upper()
        if code in codes:
            raise MetaPathError(f"node types {codes[code]!r} and {t!r} share the code {code!r}")
        codes[code] = t
    return codes


def parse_metapath(graph: HeteroGraph, text: str) -> MetaPathSpec:
    """Parse a meta-path.

    Two notations are accepted: a comma-separated relation chain such as
    ``"U-M,M-U"`` (a token that is not a relation name but whose reversed
    ``a-b`` form is one means the relation traversed backwards; ``~name`` also
    reverses), or a compact type-code string such as ``"UMU"`` where every
    character is a node-type code (single-letter type name, or the upper-case
    initial of a longer one).
    """
    text = text.strip()
    if "," in text or text in {r.name for r in graph.relations} or text.startswith("~"):
        chain = [_resolve_token(graph, tok.strip()) for tok in text.split(",")]
    else:
        chain = _resolve_compact(graph, text)
    return _validated(graph, text, chain)


def _resolve_token(graph: HeteroGraph, tok: str) -> tuple[str, bool]:
    names = {r.name for r in graph.relations}
    if tok.startswith("~") and tok[1:] in names:
        return tok[1:], True
    if tok in names:
        return tok, False
    parts = tok.split("-")
    if len(parts) == 2 and f"{parts[1]}-{parts[0]}" in names:
        return f"{parts[1]}-{parts[0]}", True
    raise MetaPathError(f"unknown relation {tok!r}")


def _resolve_compact(graph: HeteroGraph, text: str) -> list[tuple[str, bool]]:
    codes = _type_codes(graph)
    try:
        types = [codes[c] for c in text]
    except KeyError as exc:
        raise MetaPathError(f"{text!r}: unknown node-type code {exc.args[0]!r}") from None
    if len(types) < 2:
        raise MetaPathError(f"{text!r}: a meta-path needs at least two node types")
    chain = []
    for a, b in zip(types, types[1:]):
        fwd = [r.name for r in graph.relations if r.src == a and r.dst == b]
        rev = [r.name for r in graph.relations if r.src == b and r.dst == a and a != b]
        options = [(n, False) for n in fwd] + [(n, True) for n in rev]
        if len(options) != 1:
            what = "no relation" if not options else "ambiguous relations"
            raise MetaPathError(f"{text!r}: {what} between {a!r} and {b!r}")
        chain.append(options[0])
    return chain


def _validated(graph: HeteroGraph, name: str, chain) -> MetaPathSpec:
    if not chain:
        raise MetaPathError("empty meta-path")
    if len(chain) > MAX_METAPATH_HOPS:
        raise MetaPathError(f"{name!r}: {len(chain)} hops exceeds the limit of {MAX_METAPATH_HOPS}")
    ends = []
    for rel_name, rev in chain:
        rel = graph.relation(rel_name)
        ends.append((rel.dst, rel.src) if rev else (rel.src, rel.dst))
    for k in range(1, len(ends)):
        if ends[k - 1][1] != ends[k][0]:
            raise MetaPathError(
                f"{name!r}: link {k} ends at {ends[k - 1][1]!r} but link {k + 1} starts at {ends[k][0]!r}"
            )
    if ends[0][0] != ends[-1][1]:
        raise MetaPathError(f"{name!r}: starts at {ends[0][0]!r} but ends at {ends[-1][1]!r}")
    return MetaPathSpec(name, tuple(chain), ends[0][0])


@dataclass
class MetaPathSubgraph:
    """Binary symmetric same-type adjacency plus one logit per undirected edge."""

    spec: MetaPathSpec
    structure: sp.csr_matrix
    adjacency: SparseAdjacency = field(init=False)
    entry_edge: np.ndarray = field(init=False)  # stored entry -> undirected edge id
    edges: np.ndarray = field(init=False)  # (n_edges, 2), x < y
    edge_logits: np.ndarray = field(init=False)

    def __post_init__(self):
        s = sp.csr_matrix(self.structure, dtype=np.float64)
        s.sort_indices()
        self.structure = s
        self.adjacency = normalize_adjacency(s)
        rows = self.adjacency.row_ids()
        cols = self.adjacency.indices
        upper = rows < cols
        self.edges = np.stack([rows[upper], cols[upper]], axis=1)
        n = self.size
        keys = self.edges[:, 0] * n + self.edges[:, 1]
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        self.entry_edge = np.searchsorted(keys, lo * n + hi).astype(np.int64)
        self.edge_logits = np.zeros(len(self.edges))

    @property
    def size(self) -> int:
        return self.structure.shape[0]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, node: int) -> np.ndarray:
        s = self.structure
        return s.indices[s.indptr[node]:s.indptr[node + 1]]


def _binarize(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    m.data[:] = 1.0
    return m


def compose_metapath(graph: HeteroGraph, spec: MetaPathSpec) -> MetaPathSubgraph:
    prod = None
    for rel_name, rev in spec.chain:
        rel = graph.relation(rel_name)
        inc = rel.incidence(graph.node_types[rel.src], graph.node_types[rel.dst])
        if rev:
            inc = inc.T.tocsr()
        prod = inc if prod is None else _binarize(prod @ inc)
    prod = _binarize(prod)
    sym = _binarize(prod + prod.T)
    sym.setdiag(0)
    sym = _binarize(sym)
    sym.sort_indices()
    return MetaPathSubgraph(spec, sym)


def select_model_subgraphs(
    graph: HeteroGraph, user_specs: Sequence, item_specs: Sequence
) -> tuple[MetaPathSubgraph, MetaPathSubgraph, MetaPathSubgraph, MetaPathSubgraph]:
    """Compose the two user-side and two item-side views in declared order."""
    if len(user_specs) != 2 or len(item_specs) != 2:
        raise MetaPathError(
            f"need exactly two user and two item meta-paths, got {len(user_specs)} and {len(item_specs)}"
        )
    if not graph.is_heterogeneous():
        raise MetaPathError("meta-path views need a heterogeneous graph (|types| + |relations| > 2)")
    specs = [parse_metapath(graph, s) if isinstance(s, str) else s for s in (*user_specs, *item_specs)]
    for k, spec in enumerate(specs):
        want = graph.user_type if k < 2 else graph.item_type
        if spec.endpoint_type != want:
            raise MetaPathError(f"{spec.name!r} connects {spec.endpoint_type!r} nodes, expected {want!r}")
    if specs[0].chain == specs[1].chain or specs[2].chain == specs[3].chain:
        logger.warning("identical meta-paths supplied for one side; its two views will coincide")
    return tuple(compose_metapath(graph, s) for s in specs)


def parse_metapath_arg(text: str) -> tuple[list[str], list[str]]:
    """``"UU,UATAU;AA,ATA"`` -> (["UU", "UATAU"], ["AA", "ATA"])."""
    if text.count(";") != 1:
        raise MetaPathError("meta-paths must look like 'U1,U2;I1,I2'")
    left, right = text.split(";")
    users = [s for s in left.split(",") if s]
    items = [s for s in right.split(",") if s]
    if len(users) != 2 or len(items) != 2:
        raise MetaPathError(f"need two user and two item meta-paths, got {len(users)} and {len(items)}")
    return users, items


def subgraph_from_edges(spec: MetaPathSpec, n: int, edges: np.ndarray) -> MetaPathSubgraph:
    """Rebuild a subgraph from its undirected edge list (x < y)."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    data = np.ones(2 * len(edges))
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    return MetaPathSubgraph(spec, _binarize(sp.csr_matrix((data, (rows, cols)), shape=(n, n))))


def convert_hetrec_lastfm(raw_dir, out_dir) -> HeteroGraph:
    """Convert the HetRec-2011 Last.fm release into the manifest layout.

    Node types: ``U`` (users), ``A`` (artists), ``T`` (tags). Relations:
    ``U-A`` from user_artists.dat (play counts binarised), ``U-U`` from
    user_friends.dat (each friendship kept once, as a < b), and ``A-T`` from the
    distinct (artist, tag) pairs in user_taggedartists.dat. Original ids are
    remapped to 0-based indices in ascending order; artists that only occur in
    the tagging file are appended after the listened-to ones.
    """
    raw_dir = Path(raw_dir)

    def read(name):
        with open(raw_dir / name, encoding="latin-1") as fh:
            next(fh)
            return [line.rstrip("\r\n").split("\t") for line in fh if line.strip()]

    ua = np.array([(int(r[0]), int(r[1])) for r in read("user_artists.dat")], dtype=np.int64)
    uu = np.array([(int(r[0]), int(r[1])) for r in read("user_friends.dat")], dtype=np.int64).reshape(-1, 2)
    uta = np.array([(int(r[1]), int(r[2])) for r in read("user_taggedartists.dat")], dtype=np.int64).reshape(-1, 2)

    users = np.unique(np.concatenate([ua[:, 0], uu.ravel()]))
    artists = np.unique(ua[:, 1])
    extra = np.setdiff1d(np.unique(uta[:, 0]), artists)
    artists = np.concatenate([artists, extra])
    tags = np.unique(uta[:, 1])
    a_index = {a: k for k, a in enumerate(artists.tolist())}
    u_map = lambda v: np.searchsorted(users, v)  # noqa: E731
    t_map = lambda v: np.searchsorted(tags, v)  # noqa: E731

    ua_e = np.unique(np.stack([u_map(ua[:, 0]), [a_index[a] for a in ua[:, 1].tolist()]], axis=1), axis=0)
    uu_m = np.stack([u_map(uu[:, 0]), u_map(uu[:, 1])], axis=1)
    uu_e = np.unique(np.sort(uu_m, axis=1), axis=0)
    uu_e = uu_e[uu_e[:, 0] != uu_e[:, 1]]
    at_e = np.unique(np.stack([[a_index[a] for a in uta[:, 0].tolist()], t_map(uta[:, 1])], axis=1), axis=0)

    graph = HeteroGraph(
        {"U": len(users), "A": len(artists), "T": len(tags)},
        [
            Relation("U-A", "U", "A", ua_e, "user_artist.tsv"),
            Relation("U-U", "U", "U", uu_e, "user_user.tsv"),
            Relation("A-T", "A", "T", at_e, "artist_tag.tsv"),
        ],
        user_type="U",
        item_type="A",
        interaction="U-A",
    )
    save_hetero_graph(graph, out_dir)
    return graph


def dataset_fingerprint(data_dir) -> str:
    """Content hash over the manifest and every file it references."""
    data_dir = Path(data_dir)
    h = hashlib.sha256()
    with open(data_dir / MANIFEST, "rb") as fh:
        manifest_bytes = fh.read()
    h.update(manifest_bytes)
    for spec in json.loads(manifest_bytes)["relations"]:
        h.update(spec["file"].encode())
        with open(data_dir / spec["file"], "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


__all__ = [
    "DatasetError",
    "HeteroGraph",
    "InteractionMatrix",
    "MetaPathError",
    "MetaPathSpec",
    "MetaPathSubgraph",
    "Relation",
    "bipartite_structure",
    "compose_metapath",
    "convert_hetrec_lastfm",
    "dataset_fingerprint",
    "interaction_operator",
    "load_hetero_graph",
    "normalize_adjacency",
    "parse_metapath",
    "parse_metapath_arg",
    "read_edge_file",
    "save_hetero_graph",
    "select_model_subgraphs",
    "split_interactions",
    "subgraph_from_edges",
    "write_edge_file",
]
