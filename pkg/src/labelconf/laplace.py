"""Label confidence from graph Laplacian energy minimization.

The refined label distribution minimizes a smoothness-plus-fidelity energy
over the k-NN graph:

    E(Y) = 1/2 * sum_{edges {i,j}} A_ij * || y_i/sqrt(D_i) - y_j/sqrt(D_j) ||^2
         + mu/2 * sum_i || y_i - t_i ||^2

where t_i are the given one-hot noisy labels and each unordered edge is
counted once. Setting the gradient to zero gives the linear system

    (I - (1+mu)^{-1} N) Y = mu (1+mu)^{-1} T,      N = D^{-1/2} A D^{-1/2}

which is solved per class column by unpreconditioned conjugate gradient;
the system matrix has spectrum in [mu/(1+mu), (2+mu)/(1+mu)], hence is
positive definite with condition number at most (2+mu)/mu. ``rhs_mode``
selects between the scaled right-hand side above ("stationary") and the
plain T ("paper convention"); the two solutions differ by the global scalar
mu/(1+mu) only, so confidences after row normalization are identical.

Confidence is the refined probability mass left on the given label:
w_i = Y[i, t_i] after row normalization.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

from .core import ConfidenceVector, FeatureMatrix, LabelDistribution, SparseGraph, one_hot
from .errors import ConvergenceError, InputError
from .graph import build_graph

__all__ = [
    "SolverConfig",
    "SolveStats",
    "laplacian_energy",
    "solve_labels",
    "row_normalize",
    "extract_confidence",
    "estimate",
]

_DEGENERATE_ROW_SUM = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Conjugate-gradient settings for the label solve.

    mu weighs the stay-near-given-labels term; tol is the relative residual
    target ||r|| / ||b|| per column; rhs_mode is "paper" (solve M Y = T) or
    "stationary" (solve M Y = mu/(1+mu) T, the exact energy minimizer).
    """

    mu: float = 1.0
    tol: float = 1e-8
    max_iter: int = 2000
    rhs_mode: str = "paper"

    def __post_init__(self):
        if self.mu <= 0:
            raise InputError(f"mu must be > 0, got {self.mu}")
        if self.tol <= 0:
            raise InputError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise InputError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.rhs_mode not in ("paper", "stationary"):
            raise InputError(f"rhs_mode must be paper or stationary, got {self.rhs_mode!r}")


@dataclass
class SolveStats:
    """Per-column conjugate-gradient diagnostics."""

    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def laplacian_energy(graph: SparseGraph, ybar, ytilde, mu) -> float:
    """Evaluate the smoothness-plus-fidelity energy at a label distribution.

    Each unordered edge contributes once; rows are scaled by 1/sqrt(degree)
    before differencing. This is the exact objective whose stationary point
    the "stationary" solve mode returns.
    """
    Y = np.asarray(getattr(ybar, "matrix", ybar), dtype=np.float64)
    T = np.asarray(getattr(ytilde, "matrix", ytilde), dtype=np.float64)
    if mu <= 0:
        raise InputError(f"mu must be > 0, got {mu}")
    if Y.shape != T.shape:
        raise InputError(f"label distributions disagree in shape: {Y.shape} vs {T.shape}")
    if Y.shape[0] != graph.n:
        raise InputError(f"label distribution has {Y.shape[0]} rows but graph has {graph.n} nodes")
    U = Y / np.sqrt(graph.degrees)[:, None]
    upper = sparse.triu(graph.adjacency, k=1).tocoo()
    diffs = U[upper.row] - U[upper.col]
    smoothness = 0.5 * float(np.dot(upper.data, np.einsum("ij,ij->i", diffs, diffs)))
    fidelity = 0.5 * mu * float(np.sum((Y - T) ** 2))
    return smoothness + fidelity


def _cg(matvec, b, tol, max_iter):
    """Unpreconditioned conjugate gradient to relative residual <= tol.

    Returns (solution, iterations, relative_residual); raises
    ConvergenceError carrying the final residual when max_iter is hit.
    """
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    for iteration in range(1, max_iter + 1):
        Ap = matvec(p)
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_next = float(r @ r)
        if np.sqrt(rs_next) <= tol * b_norm:
            return x, iteration, np.sqrt(rs_next) / b_norm
        p = r + (rs_next / rs) * p
        rs = rs_next
    raise ConvergenceError(
        f"conjugate gradient did not reach tol={tol} within {max_iter} iterations "
        f"(relative residual {np.sqrt(rs) / b_norm:.3e})",
        residual=np.sqrt(rs) / b_norm,
        iterations=max_iter,
    )


def solve_labels(graph: SparseGraph, ytilde, config: SolverConfig = None, threads=1):
    """Solve the label system column by column.

    Returns (LabelDistribution, SolveStats); the distribution is raw
    (pre-normalization). Columns are independent, so they may be solved
    concurrently when threads > 1.
    """
    if config is None:
        config = SolverConfig()
    T = np.asarray(getattr(ytilde, "matrix", ytilde), dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != graph.n:
        raise InputError(f"ytilde must be {graph.n} x C, got shape {T.shape}")
    scale = 1.0 / (1.0 + config.mu)
    rhs = T if config.rhs_mode == "paper" else (config.mu * scale) * T
    normalized = graph.normalized

    def matvec(x):
        return x - scale * (normalized @ x)

    columns = [rhs[:, c].copy() for c in range(T.shape[1])]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            solved = list(pool.map(lambda b: _cg(matvec, b, config.tol, config.max_iter), columns))
    else:
        solved = [_cg(matvec, b, config.tol, config.max_iter) for b in columns]

    stats = SolveStats()
    out = np.empty_like(T)
    for c, (x, iterations, residual) in enumerate(solved):
        out[:, c] = x
        stats.iterations.append(iterations)
        stats.residuals.append(residual)
    return LabelDistribution(out), stats


def row_normalize(ybar_raw):
    """Clamp negatives to zero and scale each row to sum one.

    Rows whose clamped sum is <= 1e-12 become uniform; the count of such
    degenerate rows is returned alongside the distribution.
    """
    Y = np.array(getattr(ybar_raw, "matrix", ybar_raw), dtype=np.float64)
    if Y.ndim != 2:
        raise InputError(f"expected a 2-D label distribution, got shape {Y.shape}")
    np.maximum(Y, 0.0, out=Y)
    sums = Y.sum(axis=1)
    degenerate = sums <= _DEGENERATE_ROW_SUM
    Y[degenerate] = 1.0 / Y.shape[1]
    sums[degenerate] = 1.0
    Y /= sums[:, None]
    return LabelDistribution(Y), int(degenerate.sum())


def extract_confidence(ybar: LabelDistribution, noisy_labels) -> ConfidenceVector:
    """Confidence is the refined probability on the given label, w_i = Y[i, t_i]."""
    Y = np.asarray(getattr(ybar, "matrix", ybar), dtype=np.float64)
    labels = np.asarray(noisy_labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != Y.shape[0]:
        raise InputError(f"labels shape {labels.shape} does not match {Y.shape[0]} rows")
    if labels.min() < 0 or labels.max() >= Y.shape[1]:
        raise InputError(f"labels must lie in [0, {Y.shape[1]})")
    return ConfidenceVector(Y[np.arange(Y.shape[0]), labels])


def estimate(
    features,
    noisy_labels,
    num_classes,
    k=10,
    mu=1.0,
    *,
    tol=1e-8,
    max_iter=2000,
    rhs_mode="paper",
    l2_normalize=False,
    threads=1,
    return_stats=False,
):
    """Full confidence pipeline: graph build, label solve, normalize, extract.

    With return_stats=True also returns a JSON-ready dict of solver and
    timing diagnostics.
    """
    if not isinstance(features, FeatureMatrix):
        features = FeatureMatrix(features)
    config = SolverConfig(mu=mu, tol=tol, max_iter=max_iter, rhs_mode=rhs_mode)
    ytilde = one_hot(noisy_labels, num_classes)

    t0 = time.perf_counter()
    graph = build_graph(features, k, l2_normalize=l2_normalize)
    t1 = time.perf_counter()
    raw, solve_stats = solve_labels(graph, ytilde, config, threads=threads)
    normalized, degenerate_rows = row_normalize(raw)
    confidence = extract_confidence(normalized, noisy_labels)
    t2 = time.perf_counter()

    if not return_stats:
        return confidence
    stats = {
        "n": features.n,
        "d": features.d,
        "k": int(k),
        "mu": float(mu),
        "rhs_mode": rhs_mode,
        "graph_seconds": t1 - t0,
        "solve_seconds": t2 - t1,
        "total_seconds": t2 - t0,
        "cg_iterations": list(solve_stats.iterations),
        "cg_residuals": [float(r) for r in solve_stats.residuals],
        "degenerate_rows": degenerate_rows,
    }
    return confidence, stats
