"""Dictionary updates: per-class quadratic problems solved by ODL column
sweeps, and the shared dictionary solved by nuclear-norm ADMM.

The class-c subproblem collects every fidelity term containing D_c into

    min_D  tr(D^T D A) - 2 tr(D^T B)   s.t. column norms <= 1

with A the code Gram and B the data correlation (QuadDictProblem). The
shared dictionary fits the averaged residual (Ybar + Ytilde) / 2 with a
nuclear-norm penalty.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, NumericalError, ParameterError
from .gradients import _check_shapes
from .prox import admm_nuclear

DEAD_ATOM_TOL = 1e-10


@dataclass(frozen=True)
class QuadDictProblem:
    """Quadratic dictionary subproblem min tr(D^T D A) - 2 tr(D^T B)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[1] != A.shape[0]:
            raise DimensionError(f"B shape {B.shape} does not match A {A.shape}")
        if (A.size and not np.isfinite(A).all()) or (
            B.size and not np.isfinite(B).all()
        ):
            raise DataError("subproblem matrices contain NaN or Inf")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    def objective(self, D):
        return float(np.sum((D @ self.A) * D) - 2.0 * np.sum(D * self.B))


def _class_problem(c, shifted, full_residual, Dc, coefs):
    """Build the class-c QuadDictProblem given the maintained residual
    full_residual = shifted - D X and the current class dictionary Dc
    (keeping the residual up to date is the caller's job)."""
    Xc_rows = coefs.rows(c)
    Xcc = coefs.block(c, c)
    cols = coefs.class_columns(c)
    E1 = full_residual + Dc @ Xc_rows
    E2 = shifted[:, cols]
    A = Xc_rows @ Xc_rows.T + Xcc @ Xcc.T
    for cp in range(1, coefs.C + 1):
        if cp == c:
            continue
        blk = coefs.block(c, cp)
        A += blk @ blk.T
    B = E1 @ Xc_rows.T + E2 @ Xcc.T
    return QuadDictProblem(A=0.5 * (A + A.T), B=B)


def assemble_class_problem(c, data, dicts, coefs):
    """Collect the fidelity terms containing D_c into a QuadDictProblem.

    The derivative of the summed fidelity with respect to D_c is
    2 (D_c A - B).
    """
    _check_shapes(data, dicts, coefs)
    if not 1 <= c <= dicts.C:
        raise DimensionError(f"class {c} outside 1..{dicts.C}")
    shifted = data.Y - dicts.shared_dict @ coefs.X0
    full_residual = shifted - dicts.D @ coefs.X
    return _class_problem(c, shifted, full_residual, dicts.class_dict(c), coefs)


def count_dead_atoms(problem):
    """Atoms whose code energy is too small to update."""
    return int(np.sum(np.diag(problem.A) <= DEAD_ATOM_TOL))


def odl_update(problem, D_init, sweeps=2):
    """Block-coordinate column sweeps for the quadratic subproblem.

    Each column j with code energy A_jj above DEAD_ATOM_TOL moves to

        u = (B_j - D A_j) / A_jj + d_j,   d_j = u / max(||u||, 1)

    dead atoms are left untouched. The inner objective must not increase
    across sweeps (checked, since the update is exact per column).
    """
    if sweeps < 1:
        raise ParameterError("sweeps must be positive")
    D = np.array(D_init, dtype=float)
    A, B = problem.A, problem.B
    if D.shape != B.shape:
        raise DimensionError(f"dictionary shape {D.shape} != B {B.shape}")
    if D.size and not np.isfinite(D).all():
        raise NumericalError("initial dictionary contains NaN or Inf")
    prev = problem.objective(D)
    for _ in range(sweeps):
        for j in range(D.shape[1]):
            ajj = A[j, j]
            if ajj <= DEAD_ATOM_TOL:
                continue
            u = (B[:, j] - D @ A[:, j]) / ajj + D[:, j]
            nu = np.linalg.norm(u)
            if nu == 0:
                continue
            D[:, j] = u / max(nu, 1.0)
        cur = problem.objective(D)
        if cur > prev + 1e-10 * max(1.0, abs(prev)):
            raise NumericalError("dictionary sweep increased its objective")
        prev = cur
    return D


def update_shared_dict(Ybar, Ytilde, X0, eta, rho, iters):
    """Refit the shared dictionary to the averaged residual target
    (Ybar + Ytilde) / 2 under a nuclear-norm penalty, then rescale any
    column with norm above 1 back to the unit sphere (rank preserving)."""
    Ybar = np.asarray(Ybar, dtype=float)
    Ytilde = np.asarray(Ytilde, dtype=float)
    if Ybar.shape != Ytilde.shape:
        raise DimensionError(
            f"residual shapes differ: {Ybar.shape} vs {Ytilde.shape}"
        )
    V = 0.5 * (Ybar + Ytilde)
    D0 = admm_nuclear(V, X0, eta, rho, iters)
    if D0.shape[1]:
        norms = np.linalg.norm(D0, axis=0)
        scale = np.where(norms > 1.0, norms, 1.0)
        D0 = D0 / scale
    return D0
