"""Hidden-feature symbolization: the third-decision pipeline.

A feature map is pooled to a 3x3 grid of per-channel means, rows that are
quiescent (strictly below the per-column training means in every component)
are dropped, the rest are standardized, projected to a low-dimensional
space, and snapped to the nearest of k cluster centroids.  The resulting
cluster indices ("symbols") index a symbol-vs-label count matrix from which
class probabilities are inferred by averaged softmax.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .domain import ClassTaxonomy, ToTConfig
from .errors import (
    AllQuiescent,
    DegenerateScale,
    DimensionMismatch,
    EmptyFeatureMap,
    EmptySymbols,
    RankDeficient,
    ValidationError,
)

log = logging.getLogger("tot.symbolizer")


@dataclass(frozen=True)
class FeatureMap:
    """Per-channel spatial activation tensor, shape (n, H, W)."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if not isinstance(v, np.ndarray) or v.ndim != 3 or min(v.shape) < 1:
            raise EmptyFeatureMap(f"expected (n, H, W) tensor, got {getattr(v, 'shape', None)}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("feature map contains non-finite values")

    @property
    def channels(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FeatureArray:
    """Pooled feature rows for one input: up to 9 rows of length n.

    ``cells[i]`` is the row-major 3x3 grid cell the row came from.
    """

    rows: np.ndarray
    cells: np.ndarray

    @property
    def n(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class FeatureTable:
    """Stacked pooled rows from many examples, with per-row provenance."""

    matrix: np.ndarray      # (R, n) float64
    example_ids: np.ndarray  # (R,) int64 index into the input example list
    cells: np.ndarray        # (R,) int64 grid cell of each row
    labels: np.ndarray       # (R,) int64 fine-class label of the source example

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SymbolVector:
    """Cluster indices of one input's surviving rows, in cell order."""

    symbols: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)


def coarse_pool(fm: FeatureMap) -> FeatureArray:
    """Mean-pool the spatial grid into at most 9 rows (3x3, row-major).

    Cell r spans rows floor(r*H/3) .. floor((r+1)*H/3)-1 (same for columns);
    empty cells (H or W < 3) are omitted.  Sums accumulate in float64 in
    row-major order and divide once.
    """
    values = np.ascontiguousarray(fm.values, dtype=np.float64)
    sums, counts = kernels.pool_cells(values)
    keep = counts > 0
    if not np.any(keep):
        raise EmptyFeatureMap("all 3x3 cells are empty")
    rows = sums[keep] / counts[keep][:, None]
    return FeatureArray(rows=rows, cells=np.flatnonzero(keep).astype(np.int64))


def build_feature_table(examples: list[tuple[FeatureArray, int]]) -> FeatureTable:
    """Stack pooled rows from (FeatureArray, label) pairs in input order."""
    if not examples:
        raise ValidationError("no examples to build a feature table from")
    n = examples[0][0].n
    mats, ex_ids, cells, labels = [], [], [], []
    for idx, (fa, label) in enumerate(examples):
        if fa.n != n:
            raise DimensionMismatch(
                f"example {idx} has n={fa.n}, expected n={n}"
            )
        mats.append(fa.rows)
        ex_ids.append(np.full(len(fa.rows), idx, dtype=np.int64))
        cells.append(fa.cells)
        labels.append(np.full(len(fa.rows), label, dtype=np.int64))
    return FeatureTable(
        matrix=np.concatenate(mats, axis=0),
        example_ids=np.concatenate(ex_ids),
        cells=np.concatenate(cells),
        labels=np.concatenate(labels),
    )


def quiescent_mask(matrix: np.ndarray, column_means: np.ndarray) -> np.ndarray:
    """True where a row is strictly below the column means in every component."""
    return np.all(matrix < column_means[None, :], axis=1)


def remove_quiescent(table: FeatureTable) -> tuple[FeatureTable, np.ndarray]:
    """Drop rows strictly below the per-column means in all components.

    Returns the filtered table and the column means used, which become the
    model's quiescence reference for test-time inputs.
    """
    if len(table) == 0:
        raise ValidationError("empty feature table")
    column_means = table.matrix.mean(axis=0)
    drop = quiescent_mask(table.matrix, column_means)
    keep = ~drop
    if not np.any(keep):
        raise AllQuiescent("quiescence filter removed every row")
    filtered = FeatureTable(
        matrix=table.matrix[keep],
        example_ids=table.example_ids[keep],
        cells=table.cells[keep],
        labels=table.labels[keep],
    )
    return filtered, column_means


def _standardize_matrix(
    matrix: np.ndarray, per_column: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if per_column:
        mu = matrix.mean(axis=0)
        sigma = matrix.std(axis=0)
        if np.any(sigma == 0):
            raise DegenerateScale("a column has zero standard deviation")
    else:
        mu = np.array([matrix.mean()])
        sigma = np.array([matrix.std()])
        if sigma[0] == 0:
            raise DegenerateScale("all table entries are equal")
    return (matrix - mu) / sigma, mu, sigma


def standardize(
    table: FeatureTable, per_column: bool = False
) -> tuple[FeatureTable, np.ndarray, np.ndarray]:
    """Shift and scale so the table has mean 0 and std 1 overall.

    Default is the scalar global (mu, sigma) over all entries; per-column
    standardization is available behind the flag.
    """
    if len(table) == 0:
        raise ValidationError("empty feature table")
    out, mu, sigma = _standardize_matrix(table.matrix, per_column)
    return replace(table, matrix=out), mu, sigma


class EmbeddingReducer:
    """Interface for pluggable dimensionality reducers.

    transform must be deterministic after fit and preserve row count.
    """

    dim: int

    def fit(self, matrix: np.ndarray) -> "EmbeddingReducer":
        raise NotImplementedError

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class PCAReducer(EmbeddingReducer):
    """Deterministic principal-component projection (the default reducer).

    Components are eigenvectors of the column covariance, sign-fixed so each
    component's largest-magnitude coordinate is positive.  With fewer
    distinct rows than dim, the trailing components carry zero variance.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValidationError("reducer dim must be >= 1")
        self.dim = dim
        self.means: np.ndarray | None = None
        self.components: np.ndarray | None = None  # (dim, n)

    def fit(self, matrix: np.ndarray) -> "PCAReducer":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] == 0:
            raise RankDeficient("reducer needs a nonempty 2D matrix")
        rows, n = matrix.shape
        if self.dim > n:
            raise DimensionMismatch(f"dim={self.dim} exceeds feature width n={n}")
        self.means = matrix.mean(axis=0)
        centered = matrix - self.means
        if rows > 1:
            cov = (centered.T @ centered) / (rows - 1)
        else:
            cov = np.zeros((n, n), dtype=np.float64)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals, kind="stable")[::-1][: self.dim]
        comps = eigvecs[:, order].T.copy()
        for i in range(comps.shape[0]):
            j = int(np.argmax(np.abs(comps[i])))
            if comps[i, j] < 0:
                comps[i] = -comps[i]
        self.components = comps
        return self

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        if self.components is None:
            raise ValidationError("reducer not fitted")
        matrix = np.asarray(matrix, dtype=np.float64)
        return (matrix - self.means) @ self.components.T

    @classmethod
    def from_arrays(cls, means: np.ndarray, components: np.ndarray) -> "PCAReducer":
        red = cls(dim=components.shape[0])
        red.means = np.asarray(means, dtype=np.float64)
        red.components = np.asarray(components, dtype=np.float64)
        return red


def fit_reducer(table: FeatureTable | np.ndarray, dim: int, seed: int = 0) -> PCAReducer:
    """Fit the default principal-component reducer.

    The seed is accepted for interface parity with stochastic reducers; the
    default reducer is fully deterministic.
    """
    matrix = table.matrix if isinstance(table, FeatureTable) else table
    return PCAReducer(dim).fit(matrix)


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray        # (k, d)
    labels: np.ndarray           # (N,)
    objective: float             # within-cluster sum of squares
    objective_trace: tuple[float, ...]  # one entry per Lloyd assignment


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    npts = points.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(npts)
    min_d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = min_d2.sum()
        if total <= 0:
            chosen[j] = rng.integers(npts)
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(min_d2), r, side="right"))
            chosen[j] = min(idx, npts - 1)
        d2 = ((points - points[chosen[j]]) ** 2).sum(axis=1)
        np.minimum(min_d2, d2, out=min_d2)
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centroids: np.ndarray, k: int) -> KMeansResult:
    npts = points.shape[0]
    trace: list[float] = []
    state: tuple[np.ndarray, np.ndarray, float] | None = None
    for _ in range(100):
        labels, sqd = kernels.assign_nearest(points, centroids)
        objective = float(sqd.sum())
        if trace and objective > trace[-1]:
            break  # fp guard: never let the trace increase
        trace.append(objective)
        state = (centroids, labels, objective)

        sums, counts = kernels.centroid_sums(points, labels, k)
        new_centroids = centroids.copy()
        nonempty = counts > 0
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty][:, None]
        empty = np.flatnonzero(~nonempty)
        if len(empty):
            far_order = np.argsort(-sqd, kind="stable")
            for slot, cluster in enumerate(empty):
                new_centroids[cluster] = points[far_order[slot % npts]]
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < 1e-4:
            break
    centroids, labels, objective = state
    return KMeansResult(
        centroids=centroids,
        labels=labels,
        objective=objective,
        objective_trace=tuple(trace),
    )


def fit_clusters(points: np.ndarray, k: int, seed: int, n_init: int = 10) -> KMeansResult:
    """Seeded k-means++ and Lloyd iterations, best of n_init restarts.

    Each run stops when the largest centroid shift drops below 1e-4 or after
    100 iterations.  Empty clusters are reseeded to the point currently
    farthest from its centroid.  Each run's objective trace never increases;
    if a floating-point wobble would increase it, the previous state is
    kept.  Restart sub-seeds derive from the seed, so the result is a pure
    function of (points, k, seed, n_init); ties keep the earliest run.
    With k >= #points, centroids duplicate points in index order.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValidationError("fit_clusters needs a nonempty 2D point matrix")
    if k < 1:
        raise ValidationError("k must be >= 1")
    if n_init < 1:
        raise ValidationError("n_init must be >= 1")
    npts = points.shape[0]

    if k >= npts:
        centroids = points[np.arange(k) % npts].copy()
        return _lloyd(points, centroids, k)

    best: KMeansResult | None = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        rng = np.random.default_rng(child)
        result = _lloyd(points, _kmeanspp_init(points, k, rng), k)
        if best is None or result.objective < best.objective:
            best = result
    return best


def stable_softmax(row: np.ndarray) -> np.ndarray:
    """Softmax with max-subtraction; finite for arbitrarily large counts."""
    row = np.asarray(row, dtype=np.float64)
    shifted = row - row.max()
    e = np.exp(shifted)
    return e / e.sum()


@dataclass
class SymbolModel:
    """Fitted symbolization artifacts; immutable in practice once built."""

    config: ToTConfig
    taxonomy: ClassTaxonomy
    column_means: np.ndarray   # (n,) quiescence reference
    std_mu: np.ndarray         # (1,) scalar mode or (n,) per-column mode
    std_sigma: np.ndarray
    reducer: PCAReducer
    centroids: np.ndarray      # (k, dim)
    cm: np.ndarray             # (k, cn) int64 counts

    def __post_init__(self):
        if np.any(self.std_sigma <= 0):
            raise ValidationError("standardization sigma must be positive")
        if self.centroids.shape[0] != self.config.k:
            raise ValidationError(
                f"centroid count {self.centroids.shape[0]} != k {self.config.k}"
            )
        if self.cm.shape != (self.config.k, self.taxonomy.cn):
            raise ValidationError(
                f"correlation map shape {self.cm.shape} != "
                f"({self.config.k}, {self.taxonomy.cn})"
            )

    @property
    def n(self) -> int:
        return len(self.column_means)


def assign_symbols(
    features: FeatureMap | FeatureArray | np.ndarray, model: SymbolModel
) -> SymbolVector:
    """Convert pooled rows to cluster indices using the fitted model.

    Applies the stored quiescence reference, standardization, and reducer,
    then snaps each surviving row to its nearest centroid (squared Euclidean,
    ties to the lowest index).
    """
    if isinstance(features, FeatureMap):
        features = coarse_pool(features)
    rows = features.rows if isinstance(features, FeatureArray) else np.asarray(features, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptySymbols("no feature rows to symbolize")
    if rows.shape[1] != model.n:
        raise DimensionMismatch(f"input n={rows.shape[1]}, model n={model.n}")
    keep = ~quiescent_mask(rows, model.column_means)
    if not np.any(keep):
        raise AllQuiescent("every input row is quiescent under the model means")
    standardized = (rows[keep] - model.std_mu) / model.std_sigma
    reduced = model.reducer.transform(standardized)
    labels, _ = kernels.assign_nearest(
        np.ascontiguousarray(reduced), np.ascontiguousarray(model.centroids)
    )
    return SymbolVector(symbols=tuple(int(s) for s in labels))


def build_correlation_map(
    assignments: list[tuple[SymbolVector, int]], k: int, cn: int
) -> np.ndarray:
    """Count (symbol, label) co-occurrences over all symbols of all examples."""
    cm = np.zeros((k, cn), dtype=np.int64)
    for vec, label in assignments:
        if not (0 <= label < cn):
            raise ValidationError(f"label {label} outside [0, {cn})")
        for s in vec:
            if not (0 <= s < k):
                raise ValidationError(f"symbol {s} outside [0, {k})")
            cm[s, label] += 1
    return cm


def class_probabilities(symbols: SymbolVector, cm: np.ndarray) -> np.ndarray:
    """Average the per-symbol softmax rows of the correlation map.

    Each symbol contributes softmax(CM[s, :]); the mean is over the symbols
    actually present, so the result always sums to 1.
    """
    syms = list(symbols)
    if not syms:
        raise EmptySymbols("cannot infer probabilities from zero symbols")
    acc = np.zeros(cm.shape[1], dtype=np.float64)
    for s in syms:
        acc += stable_softmax(cm[s])
    return acc / len(syms)


def top_predictions(p: np.ndarray, n: int) -> list[int]:
    """First min(n, cn) class ids by descending probability, ties by id."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    order = np.argsort(-p, kind="stable")
    return [int(i) for i in order[: min(n, len(p))]]


@dataclass(frozen=True)
class FitResult:
    model: SymbolModel
    rows_total: int
    rows_kept: int
    rows_removed: int
    objective: float


def fit(
    training: list[tuple[FeatureMap | FeatureArray, int]],
    taxonomy: ClassTaxonomy,
    config: ToTConfig,
) -> FitResult:
    """Run the full training pipeline and return the fitted model plus stats.

    pool -> table -> quiescence -> standardize -> reduce -> cluster ->
    training symbols -> correlation map.  Deterministic given config.seed.
    """
    pooled = [
        (coarse_pool(fm) if isinstance(fm, FeatureMap) else fm, label)
        for fm, label in training
    ]
    table = build_feature_table(pooled)
    if np.any(table.labels < 0) or np.any(table.labels >= taxonomy.cn):
        raise ValidationError("training labels outside the taxonomy")
    seen = set(int(x) for x in np.unique(table.labels))
    missing = [c for c in range(taxonomy.cn) if c not in seen]
    if missing:
        log.warning("no training examples for %d classes: %s", len(missing), missing[:10])

    filtered, column_means = remove_quiescent(table)
    std_table, mu, sigma = standardize(filtered, config.per_column_standardize)

    dim = min(config.reducer_dim, std_table.n)
    if dim != config.reducer_dim:
        log.warning(
            "reducer_dim %d exceeds feature width %d; using %d",
            config.reducer_dim, std_table.n, dim,
        )
        config = replace(config, reducer_dim=dim)
    reducer = fit_reducer(std_table, dim, config.seed)
    reduced = reducer.transform(std_table.matrix)

    km = fit_clusters(reduced, config.k, config.seed)

    cm = np.zeros((config.k, taxonomy.cn), dtype=np.int64)
    np.add.at(cm, (km.labels, std_table.labels), 1)

    model = SymbolModel(
        config=config,
        taxonomy=taxonomy,
        column_means=column_means,
        std_mu=mu,
        std_sigma=sigma,
        reducer=reducer,
        centroids=km.centroids,
        cm=cm,
    )
    return FitResult(
        model=model,
        rows_total=len(table),
        rows_kept=len(filtered),
        rows_removed=len(table) - len(filtered),
        objective=km.objective,
    )
