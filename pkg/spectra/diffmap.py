"""
Diffusion maps over a similarity matrix.

The kernel exp(-(1 - S) / eps) is normalized into a Markov transition matrix
p = K / z. Its spectrum is computed through the symmetric conjugate
K / sqrt(z z^T), so eigenvalues are real and right eigenvectors come back
with unit weighted norm sum_l (z_l / sum z) psi_l^2 = 1. With that
normalization psi_0 is the constant 1 and the spectral form of the diffusion
distance equals the direct one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from sklearn.cluster import KMeans

from .exceptions import DiffusionError
from .similarity import SimilarityMatrix

logger = logging.getLogger(__name__)

NEAR_ONE_DELTA = 1e-3
GAP_THRESHOLD = 0.1
MIN_PERSISTENCE = 3
TIE_TOLERANCE = 1e-12


@dataclass
class DiffusionResult:
    epsilon: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    z: np.ndarray
    embedding: np.ndarray
    degeneracy_count: int
    gap: float

    @property
    def m(self) -> int:
        return len(self.eigenvalues)


@dataclass
class SweepResult:
    rows: list[DiffusionResult]
    sector_count: int = 1
    sector_range: tuple[float, float] | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.rows])


@dataclass
class ClusterAssignment:
    k: int
    labels: np.ndarray
    centers: np.ndarray
    inertia: float

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


def _values(s) -> np.ndarray:
    values = s.values if isinstance(s, SimilarityMatrix) else np.asarray(s, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise DiffusionError(f"similarity matrix must be square, got shape {values.shape}")
    return values


def build_kernel(s, epsilon: float) -> np.ndarray:
    if not epsilon > 0:
        raise DiffusionError(f"epsilon must be positive, got {epsilon}")
    values = _values(s)
    kernel = np.exp(-(1.0 - values) / epsilon)
    kernel = (kernel + kernel.T) / 2
    np.fill_diagonal(kernel, 1.0)
    return kernel


def transition_matrix(kernel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    kernel = np.asarray(kernel, dtype=np.float64)
    z = kernel.sum(axis=1)
    if np.any(z <= 0):
        raise DiffusionError(f"kernel has {int(np.sum(z <= 0))} rows without weight")
    return kernel / z[:, None], z


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def spectrum(p: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues (descending) and right eigenvectors (columns) of the
    row-stochastic ``p`` with degrees ``z``.
    """
    p = np.asarray(p, dtype=np.float64)
    weights = np.sqrt(np.asarray(z, dtype=np.float64) / np.sum(z))
    conjugate = weights[:, None] * p / weights[None, :]
    conjugate = (conjugate + conjugate.T) / 2
    try:
        eigenvalues, phi = linalg.eigh(conjugate)
    except linalg.LinAlgError as exc:
        raise DiffusionError(f"eigensolver failed: {exc}") from exc

    eigenvalues, phi = eigenvalues[::-1], phi[:, ::-1]
    vectors = _sign_fix(phi / weights[:, None])
    # within a tie group the values differ by at most TIE_TOLERANCE; keep them sorted
    order = _tie_order(eigenvalues, vectors)
    return eigenvalues, vectors[:, order]


def _tie_order(eigenvalues, vectors) -> list[int]:
    """Descending order; near-equal eigenvalues ordered by eigenvector, lexicographically descending."""
    order, start = [], 0
    m = len(eigenvalues)
    while start < m:
        stop = start + 1
        while stop < m and eigenvalues[start] - eigenvalues[stop] <= TIE_TOLERANCE:
            stop += 1
        group = range(start, stop)
        order.extend(sorted(group, key=lambda n: tuple(-np.round(vectors[:, n], 12))))
        start = stop
    return order


def _degeneracy(eigenvalues: np.ndarray, near_one_delta: float) -> tuple[int, float]:
    count = int(np.sum(eigenvalues > 1.0 - near_one_delta))
    count = max(count, 1)
    if count >= len(eigenvalues):
        return count, 0.0
    return count, float(eigenvalues[count - 1] - eigenvalues[count])


def diffusion_map(s, epsilon: float, near_one_delta: float = NEAR_ONE_DELTA, n_components: int = 3) -> DiffusionResult:
    p, z = transition_matrix(build_kernel(s, epsilon))
    eigenvalues, vectors = spectrum(p, z)
    count, gap = _degeneracy(eigenvalues, near_one_delta)
    embedding = vectors[:, 1:1 + n_components]
    return DiffusionResult(epsilon, eigenvalues, vectors, z, embedding, count, gap)


def diffusion_distance(p: np.ndarray, z: np.ndarray, t: int, l: int, l2: int, method: str = 'direct') -> float:
    """
    The 2t-step diffusion distance between samples ``l`` and ``l2``, either
    from the rows of p^t weighted by 1/z or from the spectrum.
    """
    if t < 1:
        raise DiffusionError("diffusion time must be at least 1")
    z = np.asarray(z, dtype=np.float64)
    if method == 'direct':
        rows = np.linalg.matrix_power(p, t)[[l, l2]]
        return float(np.sum((rows[0] - rows[1]) ** 2 / z))
    if method == 'spectral':
        eigenvalues, vectors = spectrum(p, z)
        delta = vectors[l, 1:] - vectors[l2, 1:]
        return float(np.sum(eigenvalues[1:] ** (2 * t) * delta ** 2) / np.sum(z))
    raise DiffusionError(f"unknown diffusion distance method {method!r}")


def default_epsilon_grid() -> np.ndarray:
    return np.logspace(-3, 0, 30)


def epsilon_sweep(
    s,
    eps_grid,
    near_one_delta: float = NEAR_ONE_DELTA,
    gap_threshold: float = GAP_THRESHOLD,
    min_persistence: int = MIN_PERSISTENCE,
    max_sectors: int | None = None,
    n_components: int = 3,
) -> SweepResult:
    """
    Diffusion maps over an increasing epsilon grid. The sector count is the
    largest degeneracy count (at least 2, at most ``max_sectors``) that holds
    with a gap above ``gap_threshold`` over ``min_persistence`` consecutive
    grid points; 1 when there is none.
    """
    grid = np.asarray(list(eps_grid), dtype=np.float64)
    if grid.size == 0:
        raise DiffusionError("empty epsilon grid")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DiffusionError("epsilon grid must be positive and strictly increasing")

    sweep = SweepResult([diffusion_map(s, eps, near_one_delta, n_components) for eps in grid])
    lambda_1 = np.array([r.eigenvalues[1] if r.m > 1 else 0.0 for r in sweep.rows])
    if np.any(np.diff(lambda_1) > 1e-9):
        sweep.warnings.append("lambda_1 increases along the epsilon grid")
        logger.warning("lambda_1 is not monotone over the epsilon grid")

    runs = _persistent_runs(sweep.rows, gap_threshold, min_persistence)
    candidates = [k for k in runs if k >= 2 and (max_sectors is None or k <= max_sectors)]
    if candidates:
        sweep.sector_count = max(candidates)
        first, last = runs[sweep.sector_count]
        sweep.sector_range = (float(grid[first]), float(grid[last]))
    logger.info("epsilon sweep over %d points: %d sectors", grid.size, sweep.sector_count)
    return sweep


def _persistent_runs(rows, gap_threshold, min_persistence) -> dict[int, tuple[int, int]]:
    """Longest qualifying run of grid indices per degeneracy count."""
    runs: dict[int, tuple[int, int]] = {}
    start = None
    for i, row in enumerate(rows + [None]):
        same = (
            start is not None and row is not None and row.gap > gap_threshold
            and row.degeneracy_count == rows[start].degeneracy_count
        )
        if same:
            continue
        if start is not None and i - start >= min_persistence:
            k = rows[start].degeneracy_count
            best = runs.get(k)
            if best is None or i - 1 - start > best[1] - best[0]:
                runs[k] = (start, i - 1)
        start = i if row is not None and row.gap > gap_threshold else None
    return runs


def kmeans_embed(result: DiffusionResult, k: int, n_restarts: int = 32, seed: int = 0) -> ClusterAssignment:
    """
    k-means on the leading non-trivial eigenvectors psi_1 .. psi_{k-1}
    (psi_1 alone for k = 1). Labels are renumbered by first appearance.
    """
    if k < 1:
        raise DiffusionError("k must be at least 1")
    if k > result.m:
        raise DiffusionError(f"cannot form {k} clusters from {result.m} samples")
    width = max(k - 1, 1)
    points = result.eigenvectors[:, 1:1 + width]
    if points.shape[1] == 0:
        points = np.zeros((result.m, 1))

    km = KMeans(n_clusters=k, init='k-means++', n_init=n_restarts, max_iter=300, tol=1e-6, random_state=seed)
    raw = km.fit_predict(points)
    _, first = np.unique(raw, return_index=True)
    seen = [int(c) for c in raw[np.sort(first)]]
    order = seen + [c for c in range(k) if c not in seen]
    mapping = np.empty(k, dtype=np.intp)
    mapping[order] = np.arange(k)
    labels = mapping[raw]
    centers = np.empty_like(km.cluster_centers_)
    centers[mapping] = km.cluster_centers_
    return ClusterAssignment(k, labels, centers, float(km.inertia_))


def label_agreement(labels_a, labels_b) -> float:
    """
    Fraction of samples on which two labelings agree under the best one-to-one
    matching of their label values.
    """
    labels_a, labels_b = np.asarray(labels_a), np.asarray(labels_b)
    if labels_a.shape != labels_b.shape:
        raise DiffusionError("labelings of different length")
    if labels_a.size == 0:
        return 1.0
    values_a, index_a = np.unique(labels_a, return_inverse=True)
    values_b, index_b = np.unique(labels_b, return_inverse=True)
    table = np.zeros((len(values_a), len(values_b)), dtype=np.int64)
    np.add.at(table, (index_a, index_b), 1)
    rows, cols = optimize.linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / labels_a.size)
