"""Generalized eigenproblems ``A x = lambda B x`` with A symmetric indefinite
and B symmetric positive semidefinite, plus subspace diagnostics.

The pencil is solved through ``T = A^{-1} B`` whose nonzero eigenvalues are
``mu = 1/lambda``.  ``T`` is self-adjoint in the semi-inner product induced
by B, which is what the Lanczos iteration in shift-invert mode relies on.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .errors import (InsufficientSpectrumError, InvalidArgumentError,
                     InvalidBasisError, MaxIterationsError)
from .linsolve import factorize

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
CLUSTER_TOL = 1e-8


@dataclass
class EigenPair:
    lam: float
    vector: np.ndarray
    residual: float = np.nan

    @property
    def mu(self) -> float:
        return 1.0 / self.lam


def _as_dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


def _b_normalize(X, B, u_index=None):
    """Scale columns to unit B-norm; make the largest |u| entry positive."""
    BX = B @ X
    norms = np.sqrt(np.maximum(np.einsum("ij,ij->j", X, BX), 0.0))
    X = X / norms
    rows = X if u_index is None else X[u_index]
    big = np.argmax(np.abs(rows), axis=0)
    signs = np.sign(rows[big, np.arange(X.shape[1])])
    signs[signs == 0] = 1.0
    return X * signs


def _b_orthonormalize_clusters(lams, X, B):
    """Modified Gram-Schmidt in the B inner product within eigenvalue clusters."""
    X = X.copy()
    k = len(lams)
    start = 0
    while start < k:
        stop = start + 1
        while stop < k and abs(lams[stop] - lams[start]) <= CLUSTER_TOL * abs(lams[start]):
            stop += 1
        for j in range(start, stop):
            for i in range(start, j):
                X[:, j] -= (X[:, i] @ (B @ X[:, j])) * X[:, i]
            X[:, j] /= np.sqrt(X[:, j] @ (B @ X[:, j]))
        start = stop
    return X


def residuals(A, B, lams, X):
    out = np.empty(len(lams))
    for j, lam in enumerate(lams):
        Ax = A @ X[:, j]
        Bx = B @ X[:, j]
        out[j] = np.linalg.norm(Ax - lam * Bx) / (np.linalg.norm(Ax) + abs(lam) * np.linalg.norm(Bx))
    return out


def _finish(A, B, lams, X, u_index):
    order = np.argsort(lams)
    lams, X = lams[order], X[:, order]
    X = _b_normalize(X, B, u_index)
    X = _b_orthonormalize_clusters(lams, X, B)
    X = _b_normalize(X, B, u_index)
    res = residuals(A, B, lams, X)
    return [EigenPair(float(l), X[:, j].copy(), float(r)) for j, (l, r) in enumerate(zip(lams, res))]


def solve_dense(A, B, k, u_index=None, null_tol=1e-12):
    """Brute force: form ``T = A^{-1} B`` and take its largest positive eigenvalues.

    Only the columns of ``B`` that are not identically zero carry nonzero
    eigenvalues, so ``T`` is formed on those columns alone.
    """
    Ad, Bd = _as_dense(A), _as_dense(B)
    n = Ad.shape[0]
    if Ad.shape != (n, n) or Bd.shape != (n, n):
        raise InvalidArgumentError("A and B must be square and of equal size")
    cols = np.flatnonzero(np.abs(Bd).max(axis=0) > 0.0)
    if len(cols) < k:
        raise InsufficientSpectrumError(f"B has only {len(cols)} nonzero columns, k={k}")
    lu = sla.lu_factor(Ad)
    TC = sla.lu_solve(lu, Bd[:, cols])                 # columns of T = A^{-1} B
    mus, Y = sla.eig(TC[cols, :])
    good = np.isfinite(mus) & (np.abs(mus.imag) <= 1e-10 * np.abs(mus).max())
    mus, Y = mus[good].real, Y[:, good].real
    pos = mus > null_tol * max(np.abs(mus).max(), 1e-300)
    mus, Y = mus[pos], Y[:, pos]
    # map back: T x = mu x with x = T[:, cols] y / mu
    X = (TC @ Y) / mus
    bn = np.linalg.norm(Bd @ X, axis=0) / np.linalg.norm(X, axis=0)
    keep = bn >= null_tol
    mus, X = mus[keep], X[:, keep]
    if len(mus) < k:
        raise InsufficientSpectrumError(f"only {len(mus)} positive finite eigenvalues, k={k}")
    top = np.argsort(-mus)[:k]
    return _finish(Ad, Bd, 1.0 / mus[top], X[:, top], u_index)


def solve_sparse(A, B, k, factorization=None, u_index=None, tol=1e-12, maxiter=None,
                 ncv=None, v0=None):
    """Shift-invert Lanczos at zero in the B semi-inner product."""
    A = sp.csr_matrix(A)
    B = sp.csr_matrix(B)
    rank_bound = int(np.count_nonzero(np.abs(B).sum(axis=0)))
    if rank_bound < k:
        raise InsufficientSpectrumError(f"B has only {rank_bound} nonzero columns, k={k}")
    if rank_bound <= k + 1:
        # Krylov space cannot exceed the nonzero spectrum; nothing to iterate on
        return solve_dense(A, B, k, u_index=u_index)
    F = factorization if factorization is not None else factorize(A)
    op = spl.LinearOperator(A.shape, matvec=F.solve, dtype=float)
    n = A.shape[0]
    if v0 is None:
        v0 = np.random.default_rng(0).standard_normal(n)
        v0 = F.solve(B @ v0)           # start inside range(T): no infinite-mode content
    ncv = ncv or min(max(2 * k + 8, 24), rank_bound, n - 1)
    try:
        vals, X = spl.eigsh(A, k=k, M=B, sigma=0.0, OPinv=op, which="LM",
                            tol=tol, maxiter=maxiter, ncv=ncv, v0=v0)
    except spl.ArpackNoConvergence as exc:
        raise MaxIterationsError("shift-invert Lanczos did not converge",
                                 {"converged": len(exc.eigenvalues)}) from exc
    # one purifying inverse-iteration step removes null(B) drift
    X = np.column_stack([F.solve(B @ X[:, j]) * vals[j] for j in range(k)])
    pos = vals > 0
    if pos.sum() < k:
        raise InsufficientSpectrumError("non-positive eigenvalues among the requested pairs")
    return _finish(A, B, vals, X, u_index)


def solve_generalized(A, B, k, mode="sparse", factorization=None, u_index=None):
    """``k`` smallest positive eigenvalues of ``A x = lambda B x``, ascending."""
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    if mode == "dense":
        return solve_dense(A, B, k, u_index=u_index)
    if mode == "sparse":
        return solve_sparse(A, B, k, factorization=factorization, u_index=u_index)
    raise InvalidArgumentError(f"unknown mode {mode!r}")


def lambdas(pairs) -> np.ndarray:
    return np.array([p.lam for p in pairs])


def vectors(pairs) -> np.ndarray:
    return np.column_stack([p.vector for p in pairs])


# -- diagnostics ------------------------------------------------------------

def _orthonormal_basis(V, gram, name):
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    G = _as_dense(gram) if gram is not None else np.eye(V.shape[0])
    S = V.T @ G @ V
    w, Q = np.linalg.eigh(0.5 * (S + S.T))
    if w.min() <= 1e-12 * max(w.max(), np.finfo(float).tiny):
        raise InvalidBasisError(f"basis {name} is rank deficient")
    return V @ (Q / np.sqrt(w)), G


def subspace_gap(basis_M, basis_N, gram=None) -> float:
    """Symmetric gap ``max(delta(M, N), delta(N, M))`` under the inner product ``gram``.

    With orthonormal bases U, W, ``delta(M, N) = sqrt(1 - s_min^2)`` where
    s are the singular values of ``U^T G W`` (for dim M <= dim N).
    """
    U, G = _orthonormal_basis(basis_M, gram, "M")
    W, _ = _orthonormal_basis(basis_N, gram, "N")
    C = U.T @ G @ W
    s = np.linalg.svd(C, compute_uv=False)

    def one_sided(dim_from, dim_to):
        if dim_from > dim_to:
            return 1.0
        smin = s[:dim_from].min() if dim_from else 1.0
        return float(np.sqrt(max(0.0, 1.0 - min(smin, 1.0) ** 2)))

    return max(one_sided(U.shape[1], W.shape[1]), one_sided(W.shape[1], U.shape[1]))


def stability_constant(vectors_, gram=None) -> float:
    """Smallest eigenvalue of the Gram matrix of the vectors scaled to unit norm."""
    V = np.asarray(vectors_, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    G = _as_dense(gram) if gram is not None else np.eye(V.shape[0])
    S = V.T @ G @ V
    d = np.diag(S)
    if np.any(d <= 0.0):
        raise InvalidBasisError("zero vector in set")
    S = S / np.sqrt(np.outer(d, d))
    return float(max(np.linalg.eigvalsh(0.5 * (S + S.T)).min(), 0.0))
