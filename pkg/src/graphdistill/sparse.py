"""CSR adjacency storage, normalizations, and graph-structured autodiff ops.

SparseAdjacency keeps the canonical layout (row_ptr / col_idx / vals with
strictly ascending columns per row) so per-row summation order, and therefore
every floating-point result downstream, is deterministic. The products
themselves are delegated to scipy.sparse, which accumulates each output row
in stored (ascending) order; the dense-product oracle in the tests pins the
equivalence.

Three tape-aware ops live here because they are coupled to the structure:
spmm (aggregation for GCN/SAGE), edge_softmax (attention normalization over
each node's neighborhood), and weighted_spmm (attention-weighted
aggregation).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .autodiff import Array, Tensor, record_op


class SparseAdjacency:
    """Square CSR matrix over num_nodes nodes.

    Invariants (checked on construction): row_ptr non-decreasing with
    row_ptr[-1] == nnz, column indices in range and strictly ascending within
    each row.
    """

    __slots__ = ("num_nodes", "row_ptr", "col_idx", "vals", "_csr")

    def __init__(self, num_nodes: int, row_ptr, col_idx, vals):
        self.num_nodes = int(num_nodes)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(col_idx, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=np.float64)
        if self.row_ptr.shape != (self.num_nodes + 1,):
            raise ValueError("row_ptr must have num_nodes+1 entries")
        if np.any(np.diff(self.row_ptr) < 0) or self.row_ptr[0] != 0:
            raise ValueError("row_ptr must be non-decreasing from 0")
        if self.row_ptr[-1] != len(self.col_idx) or len(self.col_idx) != len(self.vals):
            raise ValueError("row_ptr[-1], col_idx and vals lengths disagree")
        if len(self.col_idx) and (self.col_idx.min() < 0 or self.col_idx.max() >= self.num_nodes):
            raise ValueError("column index out of range")
        for i in range(self.num_nodes):
            cols = self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]
            if len(cols) > 1 and np.any(np.diff(cols) <= 0):
                raise ValueError(f"columns in row {i} not strictly ascending")
        self._csr: sp.csr_matrix | None = None

    # -- construction -------------------------------------------------------

    @classmethod
    def from_edges(cls, num_nodes: int, edges, *, symmetrize: bool = True,
                   add_self_loops: bool = False) -> "SparseAdjacency":
        """Binary adjacency from an (E, 2) integer edge array. Duplicates are
        collapsed; symmetrize stores both directed arcs of each edge."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= num_nodes):
            raise ValueError("edge endpoint out of range")
        rows, cols = e[:, 0], e[:, 1]
        if symmetrize:
            rows, cols = np.concatenate([rows, cols]), np.concatenate([cols, rows])
        if add_self_loops:
            diag = np.arange(num_nodes, dtype=np.int64)
            rows, cols = np.concatenate([rows, diag]), np.concatenate([cols, diag])
        keys = np.unique(rows * num_nodes + cols)
        rows, cols = keys // num_nodes, keys % num_nodes
        row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=num_nodes), out=row_ptr[1:])
        return cls(num_nodes, row_ptr, cols, np.ones(len(cols)))

    def _scipy(self) -> sp.csr_matrix:
        if self._csr is None:
            self._csr = sp.csr_matrix((self.vals, self.col_idx, self.row_ptr),
                                      shape=(self.num_nodes, self.num_nodes))
        return self._csr

    # -- queries --------------------------------------------------------------

    @property
    def nnz(self) -> int:
        return len(self.col_idx)

    def row_counts(self) -> Array:
        return np.diff(self.row_ptr)

    def edge_arrays(self) -> tuple[Array, Array]:
        """(rows, cols) of every stored entry in CSR order."""
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.row_counts()), self.col_idx

    def to_dense(self) -> Array:
        return self._scipy().toarray()

    def is_symmetric(self) -> bool:
        a = self._scipy()
        return (a != a.T).nnz == 0

    def spmm_dense(self, x: Array) -> Array:
        return np.asarray(self._scipy() @ x)

    def spmm_t_dense(self, g: Array) -> Array:
        return np.asarray(self._scipy().T @ g)

    # -- derived matrices -----------------------------------------------------

    def with_self_loops(self) -> "SparseAdjacency":
        rows, cols = self.edge_arrays()
        diag = np.arange(self.num_nodes, dtype=np.int64)
        keys = np.unique(np.concatenate([rows, diag]) * self.num_nodes
                         + np.concatenate([cols, diag]))
        rows, cols = keys // self.num_nodes, keys % self.num_nodes
        row_ptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.num_nodes), out=row_ptr[1:])
        return SparseAdjacency(self.num_nodes, row_ptr, cols, np.ones(len(cols)))

    def normalized_rw(self) -> "SparseAdjacency":
        """Row-normalize: each nonempty row sums to 1 (the neighbor-mean
        operator). Empty rows stay empty, so isolated nodes aggregate zero."""
        deg = np.zeros(self.num_nodes)
        np.add.at(deg, np.repeat(np.arange(self.num_nodes), self.row_counts()), self.vals)
        rows, _ = self.edge_arrays()
        vals = self.vals / deg[rows]
        return SparseAdjacency(self.num_nodes, self.row_ptr, self.col_idx, vals)


def normalize_adjacency(a: SparseAdjacency) -> SparseAdjacency:
    """Symmetric GCN normalization: D^{-1/2} (A + I) D^{-1/2} with D the
    degree matrix of A + I. Input must be symmetric (undirected)."""
    if not a.is_symmetric():
        raise ValueError("normalize_adjacency needs a symmetric adjacency")
    ai = a.with_self_loops()
    deg = ai.row_counts().astype(np.float64)  # binary adjacency: degree == stored entries
    dinv = 1.0 / np.sqrt(deg)
    rows, cols = ai.edge_arrays()
    return SparseAdjacency(ai.num_nodes, ai.row_ptr, ai.col_idx, dinv[rows] * dinv[cols])


# ---------------------------------------------------------------------------
# tape-aware ops
# ---------------------------------------------------------------------------

def spmm(a: SparseAdjacency, x: Tensor) -> Tensor:
    """Sparse-dense product A @ X; gradient flows to X only (A is data)."""
    if x.data.shape[0] != a.num_nodes:
        raise ValueError(f"spmm: {a.num_nodes} nodes vs {x.data.shape[0]} feature rows")

    def vjp(g: Array):
        return (a.spmm_t_dense(g),)

    return record_op((x,), a.spmm_dense(x.data), vjp)


def edge_softmax(scores: Tensor, a: SparseAdjacency) -> Tensor:
    """Softmax over each row's stored edges: scores is (nnz, 1) in CSR order,
    the output sums to 1 within every row segment. Rows must be nonempty
    (attention graphs carry self-loops, so they are)."""
    counts = a.row_counts()
    if np.any(counts == 0):
        raise ValueError("edge_softmax: empty neighborhood (no self-loop?)")
    if scores.data.shape != (a.nnz, 1):
        raise ValueError(f"edge scores must be ({a.nnz}, 1), got {scores.data.shape}")
    starts = a.row_ptr[:-1]
    s = scores.data[:, 0]
    m = np.repeat(np.maximum.reduceat(s, starts), counts)
    e = np.exp(s - m)
    alpha = (e / np.repeat(np.add.reduceat(e, starts), counts))[:, None]

    def vjp(g: Array):
        ga = g * alpha
        seg = np.repeat(np.add.reduceat(ga[:, 0], starts), counts)[:, None]
        return (ga - alpha * seg,)

    return record_op((scores,), alpha, vjp)


def weighted_spmm(weights: Tensor, x: Tensor, a: SparseAdjacency) -> Tensor:
    """out[i] = sum over stored edges (i, j) of weights[e] * x[j]; the
    attention-weighted aggregation. Gradients flow to both weights and x."""
    if weights.data.shape != (a.nnz, 1):
        raise ValueError(f"edge weights must be ({a.nnz}, 1), got {weights.data.shape}")
    if x.data.shape[0] != a.num_nodes:
        raise ValueError("weighted_spmm feature rows do not match node count")
    rows, cols = a.edge_arrays()
    wd, xd = weights.data, x.data
    nw, nx = weights.requires_grad, x.requires_grad

    def make(w_arr: Array) -> sp.csr_matrix:
        return sp.csr_matrix((w_arr[:, 0], a.col_idx, a.row_ptr),
                             shape=(a.num_nodes, a.num_nodes))

    def vjp(g: Array):
        gw = (g[rows] * xd[cols]).sum(axis=1, keepdims=True) if nw else None
        gx = np.asarray(make(wd).T @ g) if nx else None
        return (gw, gx)

    return record_op((weights, x), np.asarray(make(wd) @ xd), vjp)
