"""Graph storage, normalization algebra and synthetic generators.

Graphs are kept in CSR form (rows = source node, columns = destination node,
sorted by source then destination). Row ``v`` of every operator aggregates over
the nodes stored in that row. Self loops are never part of the raw edge list;
the normalization operators add them.
"""

import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import EigensolverError, GraphConstructionError
from .utils import segment_sum

logger = logging.getLogger(__name__)


def _check_csr(n_rows: int, n_cols: int, indptr: np.ndarray, indices: np.ndarray) -> None:
    if indptr.shape != (n_rows + 1,):
        raise GraphConstructionError(f"indptr has shape {indptr.shape}, expected ({n_rows + 1},)")
    if indptr[0] != 0 or np.any(np.diff(indptr) < 0):
        raise GraphConstructionError("CSR row offsets must start at 0 and be non-decreasing")
    if indptr[-1] != len(indices):
        raise GraphConstructionError(f"last row offset {indptr[-1]} != entry count {len(indices)}")
    if len(indices) and (indices.min() < 0 or indices.max() >= n_cols):
        raise GraphConstructionError(f"column index out of range [0, {n_cols})")


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR matrix with real values. Immutable; safe to share across threads."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        _check_csr(self.n_rows, self.n_cols, self.indptr, self.indices)
        if self.values.shape != self.indices.shape:
            raise GraphConstructionError(
                f"values shape {self.values.shape} does not match structure {self.indices.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise GraphConstructionError("sparse matrix values must be finite")

    @property
    def nnz(self) -> int:
        return len(self.indices)

    @cached_property
    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rows), np.diff(self.indptr))

    @cached_property
    def transpose_order(self) -> tuple[np.ndarray, np.ndarray]:
        """(permutation sorting entries by column, CSR offsets of the transpose)."""
        order = np.argsort(self.indices, kind="stable")
        counts = np.bincount(self.indices, minlength=self.n_cols)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return order, indptr

    def with_values(self, values: np.ndarray) -> "SparseMatrix":
        return SparseMatrix(self.n_rows, self.n_cols, self.indptr, self.indices, np.asarray(values, dtype=np.float64))

    def row_sums(self) -> np.ndarray:
        return segment_sum(self.values, self.indptr)

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        """Sparse @ dense in CSR summation order."""
        dense = np.asarray(dense, dtype=np.float64)
        return segment_sum(self.values[:, None] * dense[self.indices], self.indptr)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        out[self.row_ids, self.indices] = self.values
        return out

    def entries(self) -> Iterator[tuple[int, int, float]]:
        for r, c, v in zip(self.row_ids, self.indices, self.values):
            yield int(r), int(c), float(v)


@dataclass(frozen=True)
class AugmentedStructure:
    """CSR structure of Ã = A + I, with the position bookkeeping masks need."""

    indptr: np.ndarray
    indices: np.ndarray
    row_ids: np.ndarray
    self_loop: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class Graph:
    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    directed: bool = True
    name: str = field(default="graph", compare=False)

    def __post_init__(self):
        _check_csr(self.n_nodes, self.n_nodes, self.indptr, self.indices)
        if self.features.ndim != 2 or self.features.shape[0] != self.n_nodes:
            raise GraphConstructionError(
                f"feature matrix has shape {self.features.shape}, expected ({self.n_nodes}, C)"
            )
        if self.labels is not None and self.labels.shape != (self.n_nodes,):
            raise GraphConstructionError(f"labels have shape {self.labels.shape}, expected ({self.n_nodes},)")

    @property
    def n_edges(self) -> int:
        return len(self.indices)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr).astype(np.float64)

    @cached_property
    def adjacency(self) -> SparseMatrix:
        return SparseMatrix(self.n_nodes, self.n_nodes, self.indptr, self.indices, np.ones(self.n_edges))

    @cached_property
    def augmented(self) -> AugmentedStructure:
        """Ã's structure: every row gains its diagonal entry in sorted position."""
        rows = np.concatenate([self.adjacency.row_ids, np.arange(self.n_nodes)])
        cols = np.concatenate([self.indices, np.arange(self.n_nodes)])
        order = np.lexsort((cols, rows))
        rows, cols = rows[order], cols[order]
        counts = np.bincount(rows, minlength=self.n_nodes)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return AugmentedStructure(indptr=indptr, indices=cols, row_ids=rows, self_loop=rows == cols)

    @cached_property
    def operators(self) -> dict[str, SparseMatrix]:
        return {kind: aggregation_operator(self, kind) for kind in ("gcn", "sum", "mean")}

    def edges(self) -> list[tuple[int, int]]:
        return [(r, c) for r, c, _ in self.adjacency.entries()]

    def is_symmetric(self) -> bool:
        dense = self.adjacency.to_dense()
        return bool(np.array_equal(dense, dense.T))

    def with_features(self, features: np.ndarray) -> "Graph":
        return Graph(self.n_nodes, self.indptr, self.indices, np.asarray(features, dtype=np.float64),
                     self.labels, self.directed, self.name)


def _as_feature_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        matrix = features.astype(np.float64)
    else:
        rows = [list(r) for r in features]
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise GraphConstructionError(f"ragged feature matrix (row widths {sorted(widths)})")
        matrix = np.array(rows, dtype=np.float64).reshape(len(rows), widths.pop() if widths else 0)
    if matrix.ndim != 2:
        raise GraphConstructionError(f"features must be a 2-D matrix, got {matrix.ndim}-D")
    return matrix


def build_graph(
    edge_list: Iterable[tuple[int, int]],
    features,
    labels: Sequence[int] | np.ndarray | None = None,
    symmetrize: bool = False,
    name: str = "graph",
) -> Graph:
    """Canonical CSR graph from an edge list.

    Duplicate pairs collapse to one edge and self loops are dropped.
    With ``symmetrize`` every (u, v) also stores (v, u).
    """
    x = _as_feature_matrix(features)
    n = x.shape[0]
    pairs = np.array(list(edge_list), dtype=np.int64).reshape(-1, 2)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= n):
        bad = pairs[(pairs < 0).any(axis=1) | (pairs >= n).any(axis=1)][0]
        raise GraphConstructionError(f"edge {tuple(int(i) for i in bad)} out of range for {n} nodes")
    if symmetrize:
        pairs = np.concatenate([pairs, pairs[:, ::-1]])
    loops = pairs[:, 0] == pairs[:, 1]
    if loops.any():
        logger.debug(f"Dropped {int(loops.sum())} self loop(s) from raw edge list")
        pairs = pairs[~loops]
    pairs = np.unique(pairs, axis=0) if len(pairs) else pairs
    counts = np.bincount(pairs[:, 0], minlength=n) if len(pairs) else np.zeros(n, dtype=np.int64)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    y = None if labels is None else np.asarray(labels, dtype=np.int64)
    return Graph(n, indptr, pairs[:, 1].copy(), x, y, directed=not symmetrize, name=name)


def sym_normalized_adjacency(g: Graph) -> SparseMatrix:
    """D̃^{-1/2} Ã D̃^{-1/2} with Ã = A + I."""
    s = g.augmented
    deg = g.degrees + 1.0
    values = 1.0 / np.sqrt(deg[s.row_ids] * deg[s.indices])
    return SparseMatrix(g.n_nodes, g.n_nodes, s.indptr, s.indices, values)


def normalized_laplacian(g: Graph) -> SparseMatrix:
    """Δ̃ = I − D̃^{-1/2} Ã D̃^{-1/2}, on the same structure as Ã."""
    p = sym_normalized_adjacency(g)
    return p.with_values(g.augmented.self_loop.astype(np.float64) - p.values)


def aggregation_operator(g: Graph, kind: str) -> SparseMatrix:
    """Per-entry base weights on Ã's structure for one aggregation rule.

    gcn: D̃^{-1/2} Ã D̃^{-1/2}. sum: 1 on neighbor entries, 0 on the diagonal.
    mean: 1/deg on neighbor entries, 0 on the diagonal; isolated rows are all zero.
    """
    if kind == "gcn":
        return sym_normalized_adjacency(g)
    s = g.augmented
    if kind == "sum":
        values = (~s.self_loop).astype(np.float64)
    elif kind == "mean":
        deg = np.maximum(g.degrees, 1.0)
        values = np.where(s.self_loop, 0.0, 1.0 / deg[s.row_ids])
    else:
        raise ValueError(f"unknown aggregation kind: {kind}")
    return SparseMatrix(g.n_nodes, g.n_nodes, s.indptr, s.indices, values)


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a dense symmetric matrix.

    Returns eigenvalues in ascending order and the matching eigenvectors as columns.
    Converged when the off-diagonal Frobenius norm drops below ``tol``.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("jacobi_eigh expects a square symmetric matrix")
    v = np.eye(n)

    def off_norm() -> float:
        return float(np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0)))

    residual = off_norm()
    sweep = 0
    while residual >= tol:
        if sweep == max_sweeps:
            raise EigensolverError(sweep, residual)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        sweep += 1
        residual = off_norm()
        logger.debug(f"Jacobi sweep {sweep}: off-diagonal norm {residual:.3e}")
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals, kind="stable")
    return eigvals[order], v[:, order]


def random_geometric_graph(n: int, radius: float, seed: int) -> Graph:
    """Points uniform in the unit square, undirected edge iff distance < radius.

    Node features are the point coordinates.
    """
    if n < 1:
        raise GraphConstructionError("random geometric graph needs at least one node")
    if not 0 < radius <= np.sqrt(2.0):
        raise GraphConstructionError(f"radius must lie in (0, sqrt(2)], got {radius}")
    points = np.random.default_rng(seed).random((n, 2))
    diff = points[:, None, :] - points[None, :, :]
    close = np.sqrt(np.sum(diff * diff, axis=-1)) < radius
    np.fill_diagonal(close, False)
    src, dst = np.nonzero(close)
    return build_graph(zip(src.tolist(), dst.tolist()), points, symmetrize=True, name=f"rgg{n}")


def planted_partition_graph(
    n: int, n_classes: int, p_in: float, p_out: float, n_features: int, seed: int, feature_noise: float = 1.0
) -> Graph:
    """Undirected community graph with class-dependent Gaussian features, for offline runs."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    same = labels[:, None] == labels[None, :]
    probs = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    src, dst = np.nonzero(upper)
    centers = rng.normal(size=(n_classes, n_features))
    features = centers[labels] + feature_noise * rng.normal(size=(n, n_features))
    return build_graph(zip(src.tolist(), dst.tolist()), features, labels, symmetrize=True, name="synthetic")


def low_frequency_signal(g: Graph, k: int, seed: int) -> np.ndarray:
    """Unit-norm random combination of the k lowest-frequency eigenvectors of Δ̃ (N×1)."""
    if not 1 <= k <= g.n_nodes:
        raise ValueError(f"k must lie in [1, {g.n_nodes}], got {k}")
    _, vectors = jacobi_eigh(normalized_laplacian(g).to_dense())
    coefficients = np.random.default_rng(seed).standard_normal(k)
    signal = vectors[:, :k] @ coefficients
    return (signal / np.linalg.norm(signal))[:, None]
