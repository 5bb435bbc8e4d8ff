"""Domain containers, statistics, and data generation.

Conventions used throughout the package:

* samples are columns; a data matrix is d x N,
* class labels are integers 1..C and label-sorted data is class contiguous
  with equal per-class counts n_c,
* a model holds C class dictionaries (d x k_c each) plus one shared
  dictionary (d x k0, possibly empty), concatenated as D = [D_1 .. D_C]
  and D_total = [D, D_shared],
* codes for the class dictionaries are K x N with K = C * k_c, codes for
  the shared dictionary are k0 x N.

All containers are frozen dataclasses holding read-only arrays.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    DimensionError,
    DomainError,
    ParameterError,
)


def _freeze(a, dtype=float):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def normalize_columns(M, warn=True):
    """Scale each column to unit Euclidean norm. Zero columns stay zero."""
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=0)
    zero = norms == 0
    if zero.any() and warn:
        warnings.warn(f"{int(zero.sum())} zero column(s) left unnormalized")
    safe = np.where(zero, 1.0, norms)
    return M / safe


@dataclass(frozen=True)
class Dataset:
    """Class-contiguous labeled sample matrix.

    ``permutation[j]`` is the column index in the original input that ended
    up at sorted position j (identity when the input was already sorted).
    """

    Y: np.ndarray
    labels: np.ndarray
    C: int
    n_c: int
    permutation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Y", _freeze(self.Y))
        object.__setattr__(self, "labels", _freeze(self.labels, dtype=int))
        object.__setattr__(self, "permutation", _freeze(self.permutation, dtype=int))

    @property
    def d(self):
        return self.Y.shape[0]

    @property
    def N(self):
        return self.Y.shape[1]

    def class_columns(self, c):
        """Column slice of class c (1-based)."""
        if not 1 <= c <= self.C:
            raise DomainError(f"class {c} outside 1..{self.C}")
        return slice((c - 1) * self.n_c, c * self.n_c)

    def class_block(self, c):
        return self.Y[:, self.class_columns(c)]

    @classmethod
    def from_arrays(cls, Y, labels):
        """Validate, sort columns by label, and wrap as a Dataset."""
        Y = np.asarray(Y, dtype=float)
        labels = np.asarray(labels)
        if Y.ndim != 2:
            raise DimensionError(f"expected 2-d sample matrix, got {Y.shape}")
        if labels.ndim != 1 or labels.shape[0] != Y.shape[1]:
            raise DimensionError(
                f"labels length {labels.shape} does not match {Y.shape[1]} columns"
            )
        if Y.size and not np.isfinite(Y).all():
            raise DataError("sample matrix contains NaN or Inf")
        if labels.size == 0:
            raise DomainError("dataset has no samples")
        if not np.issubdtype(labels.dtype, np.integer):
            flabels = np.asarray(labels, dtype=float)
            if not np.all(flabels == np.round(flabels)):
                raise DataError("labels must be integers")
            labels = flabels.astype(int)
        labels = labels.astype(int)
        C = int(labels.max())
        if labels.min() < 1:
            raise DataError("labels must be >= 1")
        counts = np.bincount(labels, minlength=C + 1)[1:]
        if (counts == 0).any():
            missing = int(np.nonzero(counts == 0)[0][0] + 1)
            raise DomainError(f"class {missing} has zero samples")
        if len(set(counts.tolist())) != 1:
            raise DomainError(f"unequal class sizes {counts.tolist()}")
        perm = np.argsort(labels, kind="stable")
        return cls(
            Y=Y[:, perm],
            labels=labels[perm],
            C=C,
            n_c=int(counts[0]),
            permutation=perm,
        )


@dataclass(frozen=True)
class DictionaryBundle:
    """C class dictionaries plus one shared dictionary.

    Class dictionary columns must have norm in (0, 1 + 1e-9]; shared
    dictionary columns may be zero but never exceed unit norm.
    """

    class_dicts: tuple
    shared_dict: np.ndarray
    D: np.ndarray = field(init=False, repr=False)
    D_total: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cds = tuple(_freeze(Dc) for Dc in self.class_dicts)
        if not cds:
            raise DimensionError("need at least one class dictionary")
        d, k_c = cds[0].shape
        for i, Dc in enumerate(cds):
            if Dc.ndim != 2 or Dc.shape != (d, k_c):
                raise DimensionError(
                    f"class dictionary {i + 1} has shape {Dc.shape}, expected {(d, k_c)}"
                )
            if not np.isfinite(Dc).all():
                raise DataError(f"class dictionary {i + 1} contains NaN or Inf")
            norms = np.linalg.norm(Dc, axis=0)
            if (norms <= 0).any() or (norms > 1 + 1e-9).any():
                raise DataError(
                    f"class dictionary {i + 1} column norms outside (0, 1]"
                )
        shared = _freeze(self.shared_dict)
        if shared.ndim != 2 or shared.shape[0] != d:
            raise DimensionError(
                f"shared dictionary shape {shared.shape} inconsistent with d={d}"
            )
        if shared.size and not np.isfinite(shared).all():
            raise DataError("shared dictionary contains NaN or Inf")
        if shared.size and (np.linalg.norm(shared, axis=0) > 1 + 1e-9).any():
            raise DataError("shared dictionary column norm exceeds 1")
        object.__setattr__(self, "class_dicts", cds)
        object.__setattr__(self, "shared_dict", shared)
        object.__setattr__(self, "D", _freeze(np.hstack(cds)))
        object.__setattr__(self, "D_total", _freeze(np.hstack(cds + (shared,))))

    @property
    def d(self):
        return self.class_dicts[0].shape[0]

    @property
    def C(self):
        return len(self.class_dicts)

    @property
    def k_c(self):
        return self.class_dicts[0].shape[1]

    @property
    def k0(self):
        return self.shared_dict.shape[1]

    @property
    def K(self):
        return self.C * self.k_c

    def class_dict(self, c):
        return self.class_dicts[c - 1]

    def row_block(self, i):
        """Row slice of the code matrix owned by class dictionary i (1-based)."""
        return slice((i - 1) * self.k_c, i * self.k_c)


@dataclass(frozen=True)
class CoefBundle:
    """Sparse codes: X (K x N) on the class dictionaries, X0 (k0 x N) on
    the shared dictionary. Columns follow the class-contiguous layout."""

    X: np.ndarray
    X0: np.ndarray
    k_c: int
    n_c: int

    def __post_init__(self):
        X = _freeze(self.X)
        X0 = _freeze(self.X0)
        if X.ndim != 2 or X0.ndim != 2:
            raise DimensionError("codes must be 2-d")
        if self.k_c < 1 or self.n_c < 1:
            raise ParameterError("k_c and n_c must be positive")
        if X.shape[0] % self.k_c != 0:
            raise DimensionError(f"{X.shape[0]} rows not divisible by k_c={self.k_c}")
        if X.shape[1] % self.n_c != 0:
            raise DimensionError(f"{X.shape[1]} cols not divisible by n_c={self.n_c}")
        if X0.shape[1] != X.shape[1]:
            raise DimensionError("X and X0 column counts differ")
        if X.shape[0] // self.k_c != X.shape[1] // self.n_c:
            raise DimensionError("class count from rows and columns disagree")
        if (X.size and not np.isfinite(X).all()) or (
            X0.size and not np.isfinite(X0).all()
        ):
            raise DataError("codes contain NaN or Inf")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "X0", X0)

    @property
    def K(self):
        return self.X.shape[0]

    @property
    def k0(self):
        return self.X0.shape[0]

    @property
    def N(self):
        return self.X.shape[1]

    @property
    def C(self):
        return self.K // self.k_c

    def class_columns(self, c):
        return slice((c - 1) * self.n_c, c * self.n_c)

    def row_block(self, i):
        return slice((i - 1) * self.k_c, i * self.k_c)

    def cols(self, c):
        """X_c, the codes of class-c samples (K x n_c)."""
        return self.X[:, self.class_columns(c)]

    def rows(self, i):
        """X^i, the rows owned by class dictionary i (k_c x N)."""
        return self.X[self.row_block(i), :]

    def block(self, i, c):
        """X_c^i, class-c columns restricted to dictionary-i rows."""
        return self.X[self.row_block(i), self.class_columns(c)]

    def shared_cols(self, c):
        return self.X0[:, self.class_columns(c)]

    def stacked(self):
        """[X; X0], codes on the total dictionary."""
        return np.vstack([self.X, self.X0])

    @classmethod
    def zeros(cls, C, k_c, k0, n_c):
        return cls(
            X=np.zeros((C * k_c, C * n_c)),
            X0=np.zeros((k0, C * n_c)),
            k_c=k_c,
            n_c=n_c,
        )


@dataclass(frozen=True)
class MeanStats:
    """Column means of the training codes.

    global_mean is the mean over all columns of X, class_means stacks the
    per-class means as columns (K x C), shared_mean is the mean of X0.
    """

    global_mean: np.ndarray
    class_means: np.ndarray
    shared_mean: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "global_mean", _freeze(self.global_mean))
        object.__setattr__(self, "class_means", _freeze(self.class_means))
        object.__setattr__(self, "shared_mean", _freeze(self.shared_mean))
        if self.class_means.ndim != 2:
            raise DimensionError("class_means must be K x C")
        if self.global_mean.shape != (self.class_means.shape[0],):
            raise DimensionError("global_mean length does not match class_means")

    @property
    def C(self):
        return self.class_means.shape[1]

    def class_mean(self, c):
        return self.class_means[:, c - 1]

    def tile_global(self, n):
        return np.tile(self.global_mean[:, None], (1, n))

    def tile_classwise(self, n_c):
        """[M_1 .. M_C]: class means tiled over their own columns, K x C*n_c."""
        return np.repeat(self.class_means, n_c, axis=1)

    def tile_shared(self, n):
        return np.tile(self.shared_mean[:, None], (1, n))


def mean_stats(coefs, labels):
    """Compute MeanStats from a CoefBundle and its column labels."""
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (coefs.N,):
        raise DimensionError(
            f"labels length {labels.shape} does not match {coefs.N} columns"
        )
    C = coefs.C
    class_means = np.empty((coefs.K, C))
    for c in range(1, C + 1):
        mask = labels == c
        if not mask.any():
            raise DomainError(f"class {c} has zero samples")
        class_means[:, c - 1] = coefs.X[:, mask].mean(axis=1)
    return MeanStats(
        global_mean=coefs.X.mean(axis=1),
        class_means=class_means,
        shared_mean=coefs.X0.mean(axis=1) if coefs.k0 else np.zeros(0),
    )


@dataclass(frozen=True)
class HyperParams:
    """Regularization weights and iteration budgets."""

    lambda1: float = 0.001
    lambda2: float = 0.01
    eta: float = 0.1
    w: float = 0.5
    outer_iters: int = 15
    fista_iters: int = 100
    admm_iters: int = 100
    fista_tol: float = 1e-6
    admm_rho: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.eta < 0:
            raise ParameterError("regularization weights must be >= 0")
        if not 0 <= self.w <= 1:
            raise ParameterError(f"w={self.w} outside [0, 1]")
        if min(self.outer_iters, self.fista_iters, self.admm_iters) < 1:
            raise ParameterError("iteration budgets must be positive")
        if self.fista_tol <= 0:
            raise ParameterError("fista_tol must be positive")
        if self.admm_rho <= 0:
            raise ParameterError("admm_rho must be positive")


@dataclass(frozen=True)
class IterationRecord:
    """One row of the training trace. Seconds are cumulative wall time."""

    iteration: int
    objective: float
    fidelity: float
    l1: float
    fisher: float
    nuclear: float
    seconds: float


@dataclass(frozen=True)
class LearnedModel:
    """Everything classification needs: dictionaries, code means, hypers."""

    dict_bundle: DictionaryBundle
    mean_stats: MeanStats
    hyper: HyperParams
    trace: tuple
    aborted: bool = False

    @property
    def d(self):
        return self.dict_bundle.d

    @property
    def C(self):
        return self.dict_bundle.C


def generate_synthetic(
    C,
    d,
    n_c,
    k_c,
    k0,
    shared_rank,
    noise_sigma,
    seed,
    class_scale=1.0,
    shared_scale=1.0,
):
    """Draw a planted-model dataset and return (Dataset, ground-truth bundle).

    Each class gets a random unit-column dictionary; the shared dictionary
    is a product of Gaussian factors so its rank is exactly shared_rank.
    Every sample is D_c a + D_shared b + noise where a is a per-sample
    sparse code with free signs and b rides on one dataset-level sparse
    base vector with small per-sample jitter (the shared component is
    supposed to look alike across samples). Labels come out contiguous.
    """
    if min(C, d, n_c, k_c) < 1 or k0 < 0:
        raise ParameterError("sizes must be positive (k0 may be zero)")
    if shared_rank < 0 or shared_rank > min(d, k0):
        raise ParameterError(
            f"shared_rank={shared_rank} must lie in [0, min(d={d}, k0={k0})]"
        )
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    rng = np.random.default_rng(seed)

    class_dicts = []
    for _ in range(C):
        Dc = rng.standard_normal((d, k_c))
        class_dicts.append(normalize_columns(Dc, warn=False))

    if k0 > 0 and shared_rank > 0:
        left = rng.standard_normal((d, shared_rank))
        right = rng.standard_normal((shared_rank, k0))
        shared = normalize_columns(left @ right, warn=False)
    else:
        shared = np.zeros((d, k0))

    if k0 > 0:
        s0 = max(1, int(round(0.6 * k0)))
        support = rng.choice(k0, size=s0, replace=False)
        base = rng.standard_normal(s0)
    Y = np.empty((d, C * n_c))
    labels = np.repeat(np.arange(1, C + 1), n_c)
    s_c = max(1, int(round(0.5 * k_c)))
    for c in range(C):
        block = np.zeros((d, n_c))
        for j in range(n_c):
            a = np.zeros(k_c)
            idx = rng.choice(k_c, size=s_c, replace=False)
            a[idx] = class_scale * rng.standard_normal(s_c)
            block[:, j] = class_dicts[c] @ a
            if k0 > 0:
                b = np.zeros(k0)
                b[support] = shared_scale * (base + 0.3 * rng.standard_normal(s0))
                block[:, j] += shared @ b
        Y[:, c * n_c : (c + 1) * n_c] = block
    if noise_sigma > 0:
        Y = Y + noise_sigma * rng.standard_normal(Y.shape)

    dataset = Dataset.from_arrays(Y, labels)
    truth = DictionaryBundle(class_dicts=tuple(class_dicts), shared_dict=shared)
    return dataset, truth


def random_projection_features(raw, target_dim, seed, matrix=None):
    """Project raw features to target_dim with a scaled Gaussian matrix,
    then unit-normalize each output column.

    ``matrix`` overrides the random projection (used by tests to pin the
    projection to a known value, e.g. the identity).
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
        raise DimensionError(f"raw feature matrix must be non-empty 2-d, got {raw.shape}")
    if target_dim < 1:
        raise ParameterError("target_dim must be positive")
    if target_dim > raw.shape[0]:
        warnings.warn(
            f"target_dim={target_dim} exceeds the raw dimension {raw.shape[0]}"
        )
    if matrix is None:
        rng = np.random.default_rng(seed)
        matrix = rng.standard_normal((target_dim, raw.shape[0])) / np.sqrt(target_dim)
    else:
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (target_dim, raw.shape[0]):
            raise DimensionError(
                f"projection matrix shape {matrix.shape} does not match "
                f"({target_dim}, {raw.shape[0]})"
            )
    return normalize_columns(matrix @ raw)
