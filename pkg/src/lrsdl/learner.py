"""Training loop: joint sparse coding plus dictionary updates.

The trainer alternates three blocks. First all coefficients are refreshed
with an accelerated proximal solve (either jointly over every class at
once, or class by class for the baseline coder). Then each class
dictionary is refit with rank-one column sweeps, and finally the shared
dictionary is refit under its nuclear-norm penalty. Every block is a
descent step on the same objective, so the traced objective value never
increases from one outer iteration to the next.
"""

import logging
import math
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .data import (
    CoefBundle,
    Dataset,
    DictionaryBundle,
    HyperParams,
    IterationRecord,
    LearnedModel,
    MeanStats,
    mean_stats,
    normalize_columns,
)
from .dictupdate import _class_problem, count_dead_atoms, odl_update, update_shared_dict
from .errors import DimensionError, NumericalError, ParameterError
from .gradients import (
    _check_shapes,
    _column_means,
    build_augmented_gram,
    fidelity_value,
    fisher_value,
    grad_fidelity,
    grad_fisher,
    grad_shared_codes,
    objective_terms,
    residual_matrices,
)
from .prox import SmoothObjective, fista, power_iteration_lipschitz

log = logging.getLogger(__name__)

POWER_ITERS = 100

_MEAN_MODES = ("through", "frozen")
_SWEEP_MODES = ("sequential", "jacobi")


@dataclass(frozen=True)
class TrainConfig:
    """Everything fit() needs besides the data itself."""

    hyper: HyperParams = field(default_factory=HyperParams)
    k_c: int = 10
    k0: int = 0
    mean_mode: str = "through"
    dict_sweep_mode: str = "sequential"
    trace_every: int = 1
    odl_sweeps: int = 2
    seq_passes: int = 3

    def __post_init__(self):
        if self.k_c < 1:
            raise ParameterError(f"k_c must be >= 1, got {self.k_c}")
        if self.k0 < 0:
            raise ParameterError(f"k0 must be >= 0, got {self.k0}")
        if self.mean_mode not in _MEAN_MODES:
            raise ParameterError(f"unknown mean_mode {self.mean_mode!r}")
        if self.dict_sweep_mode not in _SWEEP_MODES:
            raise ParameterError(f"unknown dict_sweep_mode {self.dict_sweep_mode!r}")
        if self.trace_every < 1:
            raise ParameterError("trace_every must be >= 1")
        if self.odl_sweeps < 1:
            raise ParameterError("odl_sweeps must be >= 1")
        if self.seq_passes < 1:
            raise ParameterError("seq_passes must be >= 1")


def initialize(data, config, seed):
    """Random-sample class dictionaries and an SVD-based shared dictionary.

    Class atoms are drawn from the class's own training columns (without
    replacement when k_c <= n_c) and renormalized. The shared dictionary
    starts from the top left-singular vectors of the full data matrix,
    which are unit-norm already.
    """
    k_c, k0 = config.k_c, config.k0
    if k0 > min(data.d, data.N):
        raise ParameterError(
            f"k0={k0} exceeds min(d, N)={min(data.d, data.N)}"
        )
    if k_c > data.n_c:
        log.warning(
            "k_c=%d exceeds the %d samples per class; sampling atoms with replacement",
            k_c,
            data.n_c,
        )
    rng = np.random.default_rng(seed)
    class_dicts = []
    for c in range(1, data.C + 1):
        block = data.class_block(c)
        idx = rng.choice(data.n_c, size=k_c, replace=k_c > data.n_c)
        atoms = block[:, idx].copy()
        norms = np.linalg.norm(atoms, axis=0)
        for j in np.flatnonzero(norms == 0.0):
            v = rng.standard_normal(data.d)
            atoms[:, j] = v / np.linalg.norm(v)
        norms = np.linalg.norm(atoms, axis=0)
        class_dicts.append(atoms / norms)
    if k0 > 0:
        U, _, _ = np.linalg.svd(data.Y, full_matrices=False)
        shared = np.ascontiguousarray(U[:, :k0])
    else:
        shared = np.zeros((data.d, 0))
    dicts = DictionaryBundle(class_dicts=tuple(class_dicts), shared_dict=shared)
    coefs = CoefBundle.zeros(data.C, k_c, k0, data.n_c)
    return dicts, coefs


def _fidelity_lipschitz(gram, K, seed):
    L = power_iteration_lipschitz(gram.apply, (K, 1), iters=POWER_ITERS, seed=seed)
    return L


def _solve_shared_codes(data, dicts, X, X0_warm, hyper):
    """Refit the shared coefficients with class coefficients held fixed.

    The mean-pull target m0 is frozen at the warm start, which keeps the
    subproblem a strict majorizer of the full objective in X0.
    """
    k0 = dicts.k0
    if k0 == 0:
        return X0_warm.copy()
    D0 = dicts.shared_dict
    tmp = CoefBundle(X=X, X0=X0_warm, k_c=dicts.k_c, n_c=data.n_c)
    Ybar, Ytilde = residual_matrices(data, dicts, tmp)
    Ysum = Ybar + Ytilde
    M0 = np.tile(X0_warm.mean(axis=1)[:, None], (1, data.N))
    lam2 = hyper.lambda2

    L = power_iteration_lipschitz(
        lambda v: 2.0 * (D0.T @ (D0 @ v)), (k0, 1), iters=POWER_ITERS, seed=hyper.seed
    )
    L = L + lam2

    def grad(W):
        return grad_shared_codes(D0, Ysum, W, M0, lam2)

    def value(W):
        fit_term = np.sum((0.5 * Ysum - D0 @ W) ** 2)
        return fit_term + 0.5 * lam2 * np.sum((W - M0) ** 2)

    obj = SmoothObjective(grad=grad, lipschitz=L, value=value)
    return fista(obj, hyper.lambda1, X0_warm, max_iter=hyper.fista_iters, tol=hyper.fista_tol)


def sparse_code_train(data, dicts, coefs, hyper, mean_mode="through"):
    """One coding round: refit all class coefficients jointly, then X0.

    mean_mode "through" differentiates the mean-separation term exactly
    (the column means are functions of the iterate); "frozen" fixes the
    means at the warm start, giving a majorize-minimize step. Both keep
    the full objective non-increasing.
    """
    if mean_mode not in _MEAN_MODES:
        raise ParameterError(f"unknown mean_mode {mean_mode!r}")
    _check_shapes(data, dicts, coefs)
    labels = data.labels
    n_c = data.n_c
    lam2 = hyper.lambda2

    shifted = data.Y - dicts.shared_dict @ coefs.X0
    gram = build_augmented_gram(dicts, shifted, n_c)
    L = _fidelity_lipschitz(gram, dicts.K, hyper.seed) + 2.0 * lam2

    if mean_mode == "through":

        def grad(X):
            return grad_fidelity(gram, X) + 0.5 * lam2 * grad_fisher(X, labels)

        def value(X):
            return fidelity_value(shifted, dicts, X, n_c) + 0.5 * lam2 * fisher_value(
                X, labels
            )

    else:
        gmean, cmeans = _column_means(coefs.X, labels)
        lin = 2.0 * gmean[:, None] - 4.0 * cmeans[:, labels - 1]

        def grad(X):
            return grad_fidelity(gram, X) + 0.5 * lam2 * (4.0 * X + lin)

        def value(X):
            quad = 2.0 * np.sum(X * X) + np.sum(lin * X)
            return fidelity_value(shifted, dicts, X, n_c) + 0.5 * lam2 * quad

    obj = SmoothObjective(grad=grad, lipschitz=L, value=value)
    Xnew = fista(obj, hyper.lambda1, coefs.X, max_iter=hyper.fista_iters, tol=hyper.fista_tol)
    X0new = _solve_shared_codes(data, dicts, Xnew, coefs.X0, hyper)
    return CoefBundle(X=Xnew, X0=X0new, k_c=dicts.k_c, n_c=n_c)


def _class_fidelity(shifted_block, dicts, W, c):
    """Fidelity restricted to class c's columns, W being those columns."""
    full = np.sum((shifted_block - dicts.D @ W) ** 2)
    own_recon = dicts.class_dict(c) @ W[_rows(dicts.k_c, c)]
    own = np.sum((shifted_block - own_recon) ** 2)
    cross = -np.sum(own_recon**2)
    for i in range(1, dicts.C + 1):
        Wi = dicts.class_dict(i) @ W[_rows(dicts.k_c, i)]
        cross += np.sum(Wi**2)
    return 0.5 * (full + own + cross)


def _rows(k_c, i):
    return slice((i - 1) * k_c, i * k_c)


def sparse_code_sequential(
    data, dicts, coefs, hyper, mean_mode="through", passes=3, per_solve_iters=None
):
    """Baseline coder: cycle class-by-class solves instead of one joint solve.

    Each class block gets fista_iters/passes iterations per visit so the
    total per-column iteration budget matches the joint coder. Cross-class
    coupling (the shared Gram off-diagonal and the mean terms) is only
    refreshed between visits, which is what the joint solver avoids.
    """
    if mean_mode not in _MEAN_MODES:
        raise ParameterError(f"unknown mean_mode {mean_mode!r}")
    if passes < 1:
        raise ParameterError("passes must be >= 1")
    _check_shapes(data, dicts, coefs)
    labels = data.labels
    n_c = data.n_c
    C = data.C
    lam2 = hyper.lambda2
    budget = per_solve_iters
    if budget is None:
        budget = max(1, math.ceil(hyper.fista_iters / passes))

    shifted = data.Y - dicts.shared_dict @ coefs.X0
    gram = build_augmented_gram(dicts, shifted, n_c)
    L = _fidelity_lipschitz(gram, dicts.K, hyper.seed) + 2.0 * lam2

    X = coefs.X.copy()
    _, cmeans = _column_means(X, labels)
    Xpatch = X.copy()

    for _ in range(passes):
        for c in range(1, C + 1):
            cols = coefs.class_columns(c)
            corr_c = gram.corr[:, cols]
            block_c = shifted[:, cols]

            if mean_mode == "through":
                other_sum = cmeans.sum(axis=1) - cmeans[:, c - 1]

                def grad(W, _corr=corr_c, _S=other_sum):
                    mc = W.mean(axis=1)
                    m = (mc + _S) / C
                    fisher = 4.0 * W + 2.0 * m[:, None] - 4.0 * mc[:, None]
                    return gram.apply(W) - _corr + 0.5 * lam2 * fisher

                def value(W, _cols=cols, _blk=block_c, _c=c):
                    Xpatch[:, _cols] = W
                    return _class_fidelity(_blk, dicts, W, _c) + 0.5 * lam2 * fisher_value(
                        Xpatch, labels
                    )

            else:
                gmean = X.mean(axis=1)
                lin_c = (2.0 * gmean - 4.0 * cmeans[:, c - 1])[:, None]

                def grad(W, _corr=corr_c, _lin=lin_c):
                    return gram.apply(W) - _corr + 0.5 * lam2 * (4.0 * W + _lin)

                def value(W, _blk=block_c, _lin=lin_c, _c=c):
                    quad = 2.0 * np.sum(W * W) + np.sum(_lin * W)
                    return _class_fidelity(_blk, dicts, W, _c) + 0.5 * lam2 * quad

            obj = SmoothObjective(grad=grad, lipschitz=L, value=value)
            Wnew = fista(obj, hyper.lambda1, X[:, cols], max_iter=budget, tol=hyper.fista_tol)
            X[:, cols] = Wnew
            Xpatch[:, cols] = Wnew
            cmeans[:, c - 1] = Wnew.mean(axis=1)

    X0new = _solve_shared_codes(data, dicts, X, coefs.X0, hyper)
    return CoefBundle(X=X, X0=X0new, k_c=dicts.k_c, n_c=n_c)


def _update_class_dicts(data, dicts, coefs, sweep_mode, sweeps):
    """One round of per-class dictionary refits.

    sequential mode folds each class's new dictionary into the residual
    before moving on (Gauss-Seidel); jacobi builds every subproblem from
    the same snapshot. Both leave column norms at <= 1.
    """
    shifted = data.Y - dicts.shared_dict @ coefs.X0
    R = shifted - dicts.D @ coefs.X
    dead = 0
    new_dicts = list(dicts.class_dicts)
    if sweep_mode == "sequential":
        for c in range(1, dicts.C + 1):
            prob = _class_problem(c, shifted, R, new_dicts[c - 1], coefs)
            dead += count_dead_atoms(prob)
            Dc = odl_update(prob, new_dicts[c - 1], sweeps=sweeps)
            R += (new_dicts[c - 1] - Dc) @ coefs.rows(c)
            new_dicts[c - 1] = Dc
    else:
        problems = [
            _class_problem(c, shifted, R, new_dicts[c - 1], coefs)
            for c in range(1, dicts.C + 1)
        ]
        for c, prob in enumerate(problems, start=1):
            dead += count_dead_atoms(prob)
            new_dicts[c - 1] = odl_update(prob, new_dicts[c - 1], sweeps=sweeps)
    if dead:
        log.debug("skipped %d dead atoms in dictionary sweep", dead)
    return DictionaryBundle(class_dicts=tuple(new_dicts), shared_dict=dicts.shared_dict)


def fit(data, config, coder="joint", iteration_callback=None):
    """Train a model. Feature columns are unit-normalized before anything else.

    Returns a LearnedModel whose trace holds one record per traced outer
    iteration (always including the last). A numerical failure mid-run
    aborts the loop and returns the last completed iterate with
    aborted=True instead of raising.
    """
    if coder not in ("joint", "sequential"):
        raise ParameterError(f"unknown coder {coder!r}")
    hyper = config.hyper
    Yn = normalize_columns(data.Y, warn=True)
    data = Dataset(
        Y=Yn, labels=data.labels, C=data.C, n_c=data.n_c, permutation=data.permutation
    )
    dicts, coefs = initialize(data, config, hyper.seed)

    records = []
    aborted = False
    start = perf_counter()
    for it in range(1, hyper.outer_iters + 1):
        prev = (dicts, coefs)
        try:
            if coder == "joint":
                coefs = sparse_code_train(data, dicts, coefs, hyper, config.mean_mode)
            else:
                coefs = sparse_code_sequential(
                    data, dicts, coefs, hyper, config.mean_mode, passes=config.seq_passes
                )
            dicts = _update_class_dicts(
                data, dicts, coefs, config.dict_sweep_mode, config.odl_sweeps
            )
            if config.k0 > 0:
                before = objective_terms(data, dicts, coefs, hyper).total
                Ybar, Ytilde = residual_matrices(data, dicts, coefs)
                shared = update_shared_dict(
                    Ybar, Ytilde, coefs.X0, hyper.eta, hyper.admm_rho, hyper.admm_iters
                )
                cand = DictionaryBundle(class_dicts=dicts.class_dicts, shared_dict=shared)
                after = objective_terms(data, cand, coefs, hyper).total
                # the unit-norm cap can push the fit back up; keep the old
                # shared dictionary when that happens
                if after <= before:
                    dicts = cand
            terms = objective_terms(data, dicts, coefs, hyper)
        except NumericalError as exc:
            log.warning("aborting at iteration %d: %s", it, exc)
            dicts, coefs = prev
            aborted = True
            break
        if it % config.trace_every == 0 or it == hyper.outer_iters:
            records.append(
                IterationRecord(
                    iteration=it,
                    objective=terms.total,
                    fidelity=terms.fidelity,
                    l1=terms.l1,
                    fisher=terms.fisher,
                    nuclear=terms.nuclear,
                    seconds=perf_counter() - start,
                )
            )
        if iteration_callback is not None:
            iteration_callback(it, data, dicts, coefs)

    means = mean_stats(coefs, data.labels)
    return LearnedModel(
        dict_bundle=dicts,
        mean_stats=means,
        hyper=hyper,
        trace=tuple(records),
        aborted=aborted,
    )


@dataclass(frozen=True)
class BenchResult:
    joint_trace: tuple
    sequential_trace: tuple
    joint_model: LearnedModel
    sequential_model: LearnedModel


def bench_joint_vs_sequential(data, config, force_identical=False):
    """Train twice, once per coder, under the same config and budget.

    The sequential run gets the same total inner-iteration budget as the
    joint one (see sparse_code_sequential). force_identical swaps the
    sequential run for a second joint run; it exists to sanity-check the
    harness itself.
    """
    if config.k0 != 0:
        raise ParameterError("coder benchmark requires k0=0")
    joint = fit(data, config, coder="joint")
    other = fit(data, config, coder="joint" if force_identical else "sequential")
    return BenchResult(
        joint_trace=joint.trace,
        sequential_trace=other.trace,
        joint_model=joint,
        sequential_model=other,
    )
