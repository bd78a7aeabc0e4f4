"""Dense matrix primitives and small symmetric eigen/SVD routines.

Matrices and vectors are plain float64 numpy arrays. ``dense_sym_eig`` and
``dense_svd`` are Jacobi methods written out by hand: they are slow but
simple, and they double as oracles for the Krylov and streaming solvers,
which go through LAPACK instead.
"""

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ContractError, ShapeError

_EPS = np.finfo(np.float64).eps


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {v.shape}")
    return v


def matmul(a, b):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _small_tangent(diff, off):
    """Smaller-magnitude root of t**2 + 2 x t - 1 = 0 with x = diff / (2 off).

    For huge x the root is 1 / (2 x) = off / diff, evaluated directly so that
    x itself never overflows.
    """
    if abs(diff) > 1e150 * abs(off):
        return off / diff
    x = diff / (2.0 * off)
    return (1.0 if x >= 0 else -1.0) / (abs(x) + np.sqrt(1.0 + x * x))


def _sort_desc(values, vectors):
    # stable, so ties keep the order the solver produced them in
    order = np.argsort(-values, kind="stable")
    return values[order], vectors[:, order]


def check_symmetric(a, rtol=1e-10):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ContractError(f"matrix must be square, got {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > rtol * max(scale, np.finfo(np.float64).tiny):
        raise ContractError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")
    return a


def dense_sym_eig(a, max_sweeps=100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues in descending
    order and eigenvectors stored as columns.
    """
    a = check_symmetric(a)
    n = a.shape[0]
    A = 0.5 * (a + a.T)
    V = np.eye(n)
    if n == 0:
        return np.zeros(0), V
    frob = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= _EPS * frob or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # rotation annihilates A[p, q]; t is the smaller root
                t = _small_tangent(A[q, q] - A[p, p], apq)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Vp = V[:, p].copy()
                V[:, p] = c * Vp - s * V[:, q]
                V[:, q] = s * Vp + c * V[:, q]
    return _sort_desc(np.diag(A).copy(), V)


def tridiag_sym_eig(alpha, beta):
    """Eigenpairs of the symmetric tridiagonal matrix with diagonal ``alpha``
    and off-diagonal ``beta``, eigenvalues descending."""
    alpha = as_vector(alpha, "alpha")
    beta = as_vector(beta, "beta")
    if alpha.size == 0 or beta.size != alpha.size - 1:
        raise ShapeError(f"need len(beta) == len(alpha) - 1, got {beta.size} and {alpha.size}")
    if alpha.size == 1:
        return alpha.copy(), np.ones((1, 1))
    w, v = eigh_tridiagonal(alpha, beta)
    return _sort_desc(w, v)


def dense_svd(a, max_sweeps=100):
    """Singular values and right singular vectors by one-sided Jacobi.

    Column pairs of a working copy of ``a`` are rotated until mutually
    orthogonal; the accumulated rotations are the right singular vectors
    and the final column norms the singular values. Returns
    ``(sigma, V)`` with ``sigma`` descending (length ``a.shape[1]``) and
    ``V`` square with the vectors as columns.
    """
    a = as_matrix(a)
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix has non-finite entries")
    U = a.copy()
    n = U.shape[1]
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ui, uj = U[:, i], U[:, j]
                alpha = ui @ ui
                beta = uj @ uj
                gamma = ui @ uj
                if gamma == 0.0 or abs(gamma) <= _EPS * np.sqrt(alpha * beta):
                    continue
                rotated = True
                t = _small_tangent(beta - alpha, gamma)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                Ui = ui.copy()
                U[:, i] = c * Ui - s * uj
                U[:, j] = s * Ui + c * U[:, j]
                Vi = V[:, i].copy()
                V[:, i] = c * Vi - s * V[:, j]
                V[:, j] = s * Vi + c * V[:, j]
        if not rotated:
            break
    sigma = np.linalg.norm(U, axis=0)
    return _sort_desc(sigma, V)
