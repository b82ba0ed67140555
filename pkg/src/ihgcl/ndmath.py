"""Dense/sparse kernels and a small reverse-mode tape.

Only the operations the model needs are provided. Every value is a float64
``numpy`` array; elementwise ops require identical shapes (no broadcasting
beyond scalar scaling).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DomainError",
    "RowMask",
    "SparseAdjacency",
    "Tape",
    "Var",
    "add",
    "concat_rows",
    "dense_spmm",
    "elementwise_mul",
    "exp",
    "gather_rows",
    "log",
    "log_sigmoid",
    "logsumexp_rows",
    "matmul_nt",
    "mean",
    "mean_pool_rows",
    "replace_rows",
    "row_dot",
    "rowwise_l2_normalize",
    "sample_mask",
    "scale",
    "sigmoid",
    "softplus",
    "split_halves",
    "split_rows",
    "spmm",
    "sub",
    "sum_all",
    "sum_squares",
    "take_diag",
]

# rows of edge products handled at once in the sparse-weight adjoint
_EDGE_CHUNK = 1 << 18


class DomainError(ValueError):
    """Raised when an op is evaluated outside its mathematical domain."""


@dataclass(frozen=True)
class SparseAdjacency:
    """Compressed-sparse-row operator with non-negative finite weights."""

    rows: int
    cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        if self.indptr.shape != (self.rows + 1,):
            raise ValueError("indptr length must be rows + 1")
        if self.indices.shape != self.data.shape:
            raise ValueError("indices and data must have equal length")
        if self.data.size and (not np.all(np.isfinite(self.data)) or self.data.min() < 0):
            raise ValueError("adjacency weights must be finite and >= 0")

    @classmethod
    def from_scipy(cls, mat) -> "SparseAdjacency":
        csr = sp.csr_matrix(mat, dtype=np.float64)
        csr.sort_indices()
        return cls(
            csr.shape[0],
            csr.shape[1],
            csr.indptr.astype(np.int64),
            csr.indices.astype(np.int64),
            csr.data.astype(np.float64),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry, aligned with ``indices``."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.indptr))

    def with_data(self, data: np.ndarray) -> "SparseAdjacency":
        return SparseAdjacency(self.rows, self.cols, self.indptr, self.indices, np.asarray(data, dtype=np.float64))

    def to_scipy(self, data: np.ndarray | None = None) -> sp.csr_matrix:
        values = self.data if data is None else data
        return sp.csr_matrix((values, self.indices, self.indptr), shape=self.shape)

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()


@dataclass(frozen=True)
class RowMask:
    size: int
    masked: np.ndarray  # sorted row indices

    def as_bool(self) -> np.ndarray:
        out = np.zeros(self.size, dtype=bool)
        out[self.masked] = True
        return out

    def __len__(self) -> int:
        return int(self.masked.size)


def sample_mask(size: int, p: float, rng: np.random.Generator) -> RowMask:
    """Choose exactly ``round(p * size)`` distinct rows uniformly at random."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mask ratio must lie in [0, 1], got {p}")
    # Python's round() is half-to-even
    k = int(round(p * size))
    if k == 0:
        return RowMask(size, np.empty(0, dtype=np.int64))
    if k == size:
        return RowMask(size, np.arange(size, dtype=np.int64))
    chosen = rng.choice(size, size=k, replace=False)
    return RowMask(size, np.sort(chosen).astype(np.int64))


class Var:
    """A value recorded on a tape."""

    __slots__ = ("tape", "id", "value", "name")

    def __init__(self, tape: "Tape", node_id: int, value: np.ndarray, name: str | None = None):
        self.tape = tape
        self.id = node_id
        self.value = value
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other: "Var") -> "Var":
        return add(self, other)

    def __sub__(self, other: "Var") -> "Var":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return elementwise_mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Var":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        label = self.name or f"#{self.id}"
        return f"Var({label}, shape={self.value.shape})"


@dataclass
class _Node:
    kind: str
    inputs: tuple[int, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None


class Tape:
    """Append-only record of operations; ``backward`` replays it in reverse."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.values: list[np.ndarray] = []
        self.leaves: dict[str, Var] = {}

    def leaf(self, value, name: str | None = None) -> Var:
        arr = np.array(value, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in leaf {name!r}")
        var = self._push("leaf", (), arr, None, name)
        if name is not None:
            self.leaves[name] = var
        return var

    def constant(self, value) -> Var:
        return self._push("const", (), np.asarray(value, dtype=np.float64), None)

    def _push(self, kind, inputs, value, backward, name=None) -> Var:
        node_id = len(self.nodes)
        self.nodes.append(_Node(kind, tuple(v.id for v in inputs), backward))
        self.values.append(value)
        return Var(self, node_id, value, name)

    def record(self, kind: str, inputs: Sequence[Var], value: np.ndarray, backward) -> Var:
        for v in inputs:
            if v.tape is not self:
                raise ValueError("inputs belong to a different tape")
        return self._push(kind, inputs, value, backward)

    def backward(self, loss: Var) -> dict[int, np.ndarray]:
        """Gradients of scalar ``loss`` for every node id on the tape."""
        if loss.value.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
        for node_id in range(loss.id, -1, -1):
            g = grads.get(node_id)
            if g is None:
                continue
            node = self.nodes[node_id]
            if node.backward is None:
                continue
            for src, contrib in zip(node.inputs, node.backward(g)):
                if contrib is None:
                    continue
                if src in grads:
                    grads[src] = grads[src] + contrib
                else:
                    grads[src] = contrib
            if node.kind not in ("leaf", "const"):
                del grads[node_id]
        return grads

    def gradients(self, loss: Var) -> dict[str, np.ndarray]:
        """Gradients for named leaves; leaves off the loss path get zeros."""
        grads = self.backward(loss)
        return {
            name: grads.get(var.id, np.zeros_like(var.value)).copy()
            for name, var in self.leaves.items()
        }


def _same_shape(a: Var, b: Var, op: str):
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


def add(a: Var, b: Var) -> Var:
    _same_shape(a, b, "add")
    return a.tape.record("add", (a, b), a.value + b.value, lambda g: (g, g))


def sub(a: Var, b: Var) -> Var:
    _same_shape(a, b, "sub")
    return a.tape.record("sub", (a, b), a.value - b.value, lambda g: (g, -g))


def scale(a: Var, alpha: float) -> Var:
    return a.tape.record("scale", (a,), alpha * a.value, lambda g: (alpha * g,))


def elementwise_mul(a: Var, b: Var) -> Var:
    _same_shape(a, b, "elementwise_mul")
    av, bv = a.value, b.value
    return a.tape.record("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def exp(a: Var) -> Var:
    out = np.exp(a.value)
    return a.tape.record("exp", (a,), out, lambda g: (g * out,))


def log(a: Var) -> Var:
    x = a.value
    if np.any(x <= 0):
        raise DomainError("log of non-positive value")
    return a.tape.record("log", (a,), np.log(x), lambda g: (g / x,))


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus_array(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(a: Var) -> Var:
    s = sigmoid_array(a.value)
    return a.tape.record("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))


def log_sigmoid(a: Var) -> Var:
    x = a.value
    out = -softplus_array(-x)
    return a.tape.record("log_sigmoid", (a,), out, lambda g: (g * sigmoid_array(-x),))


def softplus(a: Var) -> Var:
    x = a.value
    return a.tape.record("softplus", (a,), softplus_array(x), lambda g: (g * sigmoid_array(x),))


def sum_all(a: Var) -> Var:
    shape = a.value.shape
    return a.tape.record("sum", (a,), np.array(a.value.sum()), lambda g: (np.full(shape, float(g)),))


def mean(a: Var) -> Var:
    shape, n = a.value.shape, a.value.size
    if n == 0:
        raise ValueError("mean of empty array")
    return a.tape.record("mean", (a,), np.array(a.value.mean()), lambda g: (np.full(shape, float(g) / n),))


def sum_squares(a: Var) -> Var:
    x = a.value
    return a.tape.record("sum_squares", (a,), np.array(np.sum(x * x)), lambda g: (2.0 * float(g) * x,))


def row_dot(a: Var, b: Var) -> Var:
    """Per-row inner products, shape ``(n,)``."""
    _same_shape(a, b, "row_dot")
    av, bv = a.value, b.value
    return a.tape.record(
        "row_dot", (a, b), np.einsum("ij,ij->i", av, bv), lambda g: (g[:, None] * bv, g[:, None] * av)
    )


def rowwise_l2_normalize(a: Var) -> Var:
    """Scale each row to unit norm; all-zero rows stay zero."""
    x = a.value
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    safe = np.where(norms > 0, norms, 1.0)
    y = x / safe[:, None]
    y[norms == 0] = 0.0

    def backward(g):
        # d(x/|x|) = (g - y (y.g)) / |x|
        proj = np.einsum("ij,ij->i", y, g)
        gx = (g - y * proj[:, None]) / safe[:, None]
        gx[norms == 0] = 0.0
        return (gx,)

    return a.tape.record("l2_normalize", (a,), y, backward)


def matmul_nt(a: Var, b: Var) -> Var:
    """``a @ b.T`` for two dense row blocks."""
    av, bv = a.value, b.value
    if av.shape[1] != bv.shape[1]:
        raise ValueError(f"matmul_nt: inner dims {av.shape[1]} vs {bv.shape[1]}")
    return a.tape.record("matmul_nt", (a, b), av @ bv.T, lambda g: (g @ bv, g.T @ av))


def take_diag(a: Var) -> Var:
    x = a.value
    if x.shape[0] != x.shape[1]:
        raise ValueError("take_diag needs a square matrix")
    n = x.shape[0]

    def backward(g):
        out = np.zeros((n, n))
        out[np.arange(n), np.arange(n)] = g
        return (out,)

    return a.tape.record("diag", (a,), np.diagonal(x).copy(), backward)


def logsumexp_rows(a: Var) -> Var:
    x = a.value
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    s = e.sum(axis=1, keepdims=True)
    out = (m + np.log(s))[:, 0]
    soft = e / s
    return a.tape.record("logsumexp", (a,), out, lambda g: (g[:, None] * soft,))


def gather_rows(a: Var, idx) -> Var:
    idx = np.asarray(idx, dtype=np.int64)
    shape = a.value.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return a.tape.record("gather", (a,), a.value[idx], backward)


def replace_rows(a: Var, mask: RowMask, token: Var) -> Var:
    """Rows listed in ``mask`` are overwritten by the single-row ``token``."""
    if token.value.shape != (1, a.value.shape[1]):
        raise ValueError("token must be a 1 x d row")
    if mask.size != a.value.shape[0]:
        raise ValueError("mask size does not match row count")
    rows = mask.masked
    out = a.value.copy()
    out[rows] = token.value[0]

    def backward(g):
        ga = g.copy()
        ga[rows] = 0.0
        gt = g[rows].sum(axis=0, keepdims=True)
        return ga, gt

    return a.tape.record("replace_rows", (a, token), out, backward)


def concat_rows(parts: Sequence[Var]) -> Var:
    sizes = [p.value.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)
    value = np.concatenate([p.value for p in parts], axis=0)
    return parts[0].tape.record(
        "concat_rows", parts, value, lambda g: [g[offsets[i]:offsets[i + 1]] for i in range(len(parts))]
    )


def _slice(a: Var, sl, kind: str) -> Var:
    shape = a.value.shape

    def backward(g):
        out = np.zeros(shape)
        out[sl] = g
        return (out,)

    return a.tape.record(kind, (a,), a.value[sl].copy(), backward)


def split_rows(a: Var, first: int) -> tuple[Var, Var]:
    return _slice(a, np.s_[:first], "rows_head"), _slice(a, np.s_[first:], "rows_tail")


def split_halves(a: Var) -> tuple[Var, Var]:
    """Split columns into two equal halves."""
    d = a.value.shape[1]
    if d % 2:
        raise ValueError(f"cannot halve odd width {d}")
    h = d // 2
    return _slice(a, np.s_[:, :h], "cols_head"), _slice(a, np.s_[:, h:], "cols_tail")


def mean_pool_rows(parts: Sequence[Var]) -> Var:
    """Elementwise mean of equally shaped matrices."""
    for p in parts[1:]:
        _same_shape(parts[0], p, "mean_pool_rows")
    k = len(parts)
    value = sum(p.value for p in parts) / k
    return parts[0].tape.record("mean_pool", parts, value, lambda g: [g / k] * k)


def dense_spmm(a: SparseAdjacency, x: np.ndarray, data: np.ndarray | None = None) -> np.ndarray:
    if a.cols != x.shape[0]:
        raise ValueError(f"spmm: operator has {a.cols} columns, input has {x.shape[0]} rows")
    return np.asarray(a.to_scipy(data) @ x)


def _edge_products(a: SparseAdjacency, g: np.ndarray, x: np.ndarray) -> np.ndarray:
    rows = a.row_ids()
    out = np.empty(a.nnz)
    for start in range(0, a.nnz, _EDGE_CHUNK):
        stop = min(start + _EDGE_CHUNK, a.nnz)
        out[start:stop] = np.einsum(
            "ij,ij->i", g[rows[start:stop]], x[a.indices[start:stop]]
        )
    return out


def spmm(a: SparseAdjacency, x: Var, weights: Var | None = None) -> Var:
    """Sparse-dense product ``a @ x``.

    If ``weights`` is given, it holds one value per stored entry and replaces
    ``a.data``; the product is then differentiable with respect to it as well.
    """
    if weights is None:
        value = dense_spmm(a, x.value)
        op_t = a.to_scipy().T.tocsr()
        return x.tape.record("spmm", (x,), value, lambda g: (np.asarray(op_t @ g),))
    if weights.value.shape != (a.nnz,):
        raise ValueError("weights must hold one value per stored entry")
    w = weights.value
    xv = x.value
    value = dense_spmm(a, xv, w)

    def backward(g):
        gx = np.asarray(a.to_scipy(w).T @ g)
        gw = _edge_products(a, g, xv)
        return gx, gw

    return x.tape.record("spmm_w", (x, weights), value, backward)
