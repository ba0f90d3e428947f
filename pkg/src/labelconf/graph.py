"""k-NN graph construction and symmetric degree normalization.

Edges carry inner-product similarities clamped at zero (negative weights
would break both the energy interpretation and the spectral bound that
makes the downstream linear system positive definite). The one-sided k-NN
relation is symmetrized by elementwise max, which preserves every selected
edge. Neighbor search is an exact scan, so results match a brute-force
oracle bit for bit; ties at the k-th similarity break toward the lower
index for cross-platform determinism.
"""

import csv

import numpy as np
import scipy.sparse as sparse

from .core import FeatureMatrix, SparseGraph
from .errors import DegenerateGraphError, InputError

__all__ = ["knn_adjacency", "normalize", "build_graph", "export_edges_csv"]


def _largest_k(values, k):
    """Indices of the k largest entries; boundary ties resolve to lower index."""
    cut = np.partition(values, values.size - k)[values.size - k]
    above = np.flatnonzero(values > cut)
    if above.size >= k:
        return above[:k]
    ties = np.flatnonzero(values == cut)
    return np.concatenate([above, ties[: k - above.size]])


def knn_adjacency(features, k, l2_normalize=False) -> sparse.csr_matrix:
    """Build the symmetric k-NN similarity matrix A.

    For each query j the k other points with largest inner product get
    A_ij = max(<v_i, v_j>, 0); the result is symmetrized by elementwise max
    and the diagonal stays zero. With l2_normalize the rows are scaled to
    unit norm first, making the similarity a cosine.

    Raises DegenerateGraphError naming the first node whose degree is zero
    after clamping.
    """
    if not isinstance(features, FeatureMatrix):
        features = FeatureMatrix(features)
    X = features.data
    n = X.shape[0]
    k = int(k)
    if k < 1 or k >= n:
        raise InputError(f"k must satisfy 1 <= k < n, got k={k} with n={n}")
    if l2_normalize:
        norms = np.linalg.norm(X, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise InputError(f"cannot L2-normalize zero feature row {zero[0]}")
        X = X / norms[:, None]

    rows = np.empty(n * k, dtype=np.int64)
    cols = np.empty(n * k, dtype=np.int64)
    vals = np.empty(n * k, dtype=np.float64)
    # Block the similarity computation so the dense slab stays ~32 MB; each
    # block holds one contiguous row per query for cache-friendly selection.
    block = int(max(1, min(n, (4 << 20) // max(n, 1))))
    pos = 0
    cut_pos = n - k
    for start in range(0, n, block):
        stop = min(n, start + block)
        width = stop - start
        sims = X[start:stop] @ X.T
        sims[np.arange(width), np.arange(start, stop)] = -np.inf  # exclude self
        order = np.argpartition(sims, cut_pos, axis=1)
        top = order[:, cut_pos:]
        lane = np.arange(width)
        cut = sims[lane, order[:, cut_pos]]
        # argpartition breaks ties arbitrarily; rebuild any query whose tie at
        # the cut value crosses the partition boundary, taking lowest indices
        ties_total = (sims == cut[:, None]).sum(axis=1)
        ties_in_top = (sims[lane[:, None], top] == cut[:, None]).sum(axis=1)
        for i in np.flatnonzero(ties_total > ties_in_top):
            top[i] = _largest_k(sims[i], k)
        block_rows = top.ravel()
        rows[pos : pos + k * width] = block_rows
        cols[pos : pos + k * width] = np.repeat(np.arange(start, stop), k)
        vals[pos : pos + k * width] = np.maximum(
            sims[np.repeat(lane, k), block_rows], 0.0
        )
        pos += k * width

    directed = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    adjacency = directed.maximum(directed.T)
    adjacency.eliminate_zeros()
    degrees = np.ravel(adjacency.sum(axis=1))
    dead = np.flatnonzero(degrees <= 0.0)
    if dead.size:
        raise DegenerateGraphError(
            f"node {dead[0]} has zero degree after similarity clamping", node=int(dead[0])
        )
    return adjacency


def normalize(adjacency) -> SparseGraph:
    """Degree-normalize a symmetric adjacency: D_i = sum_j A_ij and
    normalized_ij = A_ij / sqrt(D_i D_j).

    The per-entry divisor sqrt(D_i * D_j) is symmetric in exact float
    arithmetic, so the stored normalized values are bitwise symmetric.
    """
    A = sparse.csr_matrix(adjacency, dtype=np.float64)
    A.sum_duplicates()
    if A.shape[0] != A.shape[1]:
        raise InputError(f"adjacency must be square, got {A.shape}")
    if (A != A.T).nnz != 0:
        raise InputError("adjacency must be symmetric")
    if np.any(A.diagonal() != 0.0):
        raise InputError("adjacency must have a zero diagonal")
    if A.data.size and A.data.min() < 0:
        raise InputError("adjacency weights must be nonnegative")
    degrees = np.ravel(A.sum(axis=1))
    dead = np.flatnonzero(degrees <= 0.0)
    if dead.size:
        raise DegenerateGraphError(f"node {dead[0]} has zero degree", node=int(dead[0]))
    coo = A.tocoo()
    scaled = coo.data / np.sqrt(degrees[coo.row] * degrees[coo.col])
    normalized = sparse.coo_matrix((scaled, (coo.row, coo.col)), shape=A.shape).tocsr()
    return SparseGraph(adjacency=A, degrees=degrees, normalized=normalized)


def build_graph(features, k, l2_normalize=False) -> SparseGraph:
    """knn_adjacency followed by normalize."""
    return normalize(knn_adjacency(features, k, l2_normalize=l2_normalize))


def export_edges_csv(graph, path) -> None:
    """Dump the upper triangle of the adjacency as i,j,weight rows (debugging)."""
    adjacency = graph.adjacency if isinstance(graph, SparseGraph) else sparse.csr_matrix(graph)
    upper = sparse.triu(adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "weight"])
        for idx in order:
            writer.writerow([int(upper.row[idx]), int(upper.col[idx]), f"{upper.data[idx]:.17g}"])
