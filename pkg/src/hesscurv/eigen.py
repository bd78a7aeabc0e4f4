"""Matrix-free top-K eigendecompositions and the approximations built on them.

``lanczos_topk`` needs only ``v -> A v`` (typically an ``HvpOperator``).
``opg_eigs_incremental`` consumes per-example Jacobian blocks one at a time
and keeps a rank-K factorization of the rows seen so far. The low-rank and
full-rank helpers apply ``Q diag(lam) Q^T`` and
``Q diag(lam) Q^T + lt (I - Q Q^T)`` without ever forming a P x P matrix;
the ``*_materialize`` variants do form it and are capped in size.
"""

from dataclasses import dataclass, field
import json
import os

import numpy as np

from .curvature import DEFAULT_MAX_PARAMS, check_memory_cap
from .errors import ContractError, ConvergenceError, ShapeError
from .linalg import tridiag_sym_eig
from .matio import read_matrix, read_vector, write_matrix


@dataclass(frozen=True)
class EigenPairs:
    """Top-K eigenpairs: ``q`` is P x K with eigenvectors as columns and
    ``lam`` holds the eigenvalues in descending order."""
    q: np.ndarray
    lam: np.ndarray
    residuals: np.ndarray = field(default=None, compare=False)
    iterations: int = field(default=None, compare=False)

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=np.float64))
        lam = np.asarray(self.lam, dtype=np.float64).ravel()
        if q.shape[1] != lam.size:
            raise ShapeError(f"Q has {q.shape[1]} columns but there are {lam.size} eigenvalues")
        if np.any(np.diff(lam) > 0):
            raise ContractError("eigenvalues must be sorted in descending order")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "lam", lam)

    @property
    def n_params(self):
        return self.q.shape[0]

    @property
    def k(self):
        return self.lam.size

    def projector(self):
        return self.q @ self.q.T


@dataclass(frozen=True)
class LanczosConfig:
    k: int
    max_iterations: int = 300
    residual_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ContractError("k must be >= 1")
        if self.max_iterations < self.k:
            raise ContractError("max_iterations must be >= k")
        if not self.residual_tol > 0:
            raise ContractError("residual_tol must be positive")


def _orthogonalize(w, basis):
    # two rounds of classical Gram-Schmidt ("twice is enough")
    for _ in range(2):
        w = w - basis.T @ (basis @ w)
    return w


def lanczos_topk(op, p, cfg):
    """K algebraically largest eigenpairs of the symmetric operator ``op``.

    Lanczos iteration with full reorthogonalization of the Krylov basis.
    After at least K steps, each Ritz pair's residual is estimated as
    ``beta_m * |last component of the Ritz vector in T_m|`` and the
    iteration stops once every estimate is below
    ``residual_tol * max(1, |lambda|)``.

    Costs one ``op`` call per step plus O(m * P) reorthogonalization work at
    step m; the basis uses O(S * P) memory.
    """
    if not 1 <= cfg.k < p:
        raise ContractError(f"need 1 <= k < P, got k={cfg.k}, P={p}")
    rng = np.random.default_rng(cfg.seed)
    m_max = min(cfg.max_iterations, p)
    basis = np.zeros((m_max, p))
    q = rng.standard_normal(p)
    basis[0] = q / np.linalg.norm(q)
    alpha, beta = [], []
    anorm = 0.0
    best = None

    for j in range(m_max):
        w = np.asarray(op(basis[j]), dtype=np.float64)
        if w.shape != (p,):
            raise ShapeError(f"operator returned shape {w.shape}, expected ({p},)")
        a = float(w @ basis[j])
        w = w - a * basis[j]
        if j > 0:
            w = w - beta[j - 1] * basis[j - 1]
        w = _orthogonalize(w, basis[:j + 1])
        b = float(np.linalg.norm(w))
        alpha.append(a)
        anorm = max(anorm, abs(a), b)
        m = j + 1

        if m >= cfg.k:
            theta, S = tridiag_sym_eig(np.array(alpha), np.array(beta))
            res = b * np.abs(S[-1, :cfg.k])
            ratio = np.max(res / np.maximum(1.0, np.abs(theta[:cfg.k])))
            if best is None or ratio < best[0]:
                best = (ratio, res)
            if ratio <= cfg.residual_tol or m == p:
                q_out = basis[:m].T @ S[:, :cfg.k]
                return EigenPairs(q_out, theta[:cfg.k], residuals=res, iterations=m)

        if m == m_max:
            break
        if b <= 1e-13 * max(anorm, np.finfo(np.float64).tiny):
            # invariant subspace found: continue from a fresh direction
            w = _orthogonalize(rng.standard_normal(p), basis[:m])
            w = w / np.linalg.norm(w)
            beta.append(0.0)
        else:
            w = w / b
            beta.append(b)
        basis[m] = w

    residuals = None if best is None else best[1]
    raise ConvergenceError(
        f"Lanczos did not reach residual_tol={cfg.residual_tol:g} in {m_max} iterations"
        + ("" if best is None else f" (best relative residual {best[0]:.3e})"),
        residuals=residuals, iterations=m_max)


def lanczos_bottomk(op, p, cfg, shift):
    """Smallest-algebraic eigenpairs via Lanczos on ``shift * I - op``.

    Not part of the core method; ``shift`` must bound the spectrum from
    above for the result to be the bottom of the spectrum. Eigenvalues are
    returned in descending order like everywhere else.
    """
    shifted = lanczos_topk(lambda v: shift * v - op(v), p, cfg)
    lam = shift - shifted.lam[::-1]
    return EigenPairs(shifted.q[:, ::-1], lam,
                      residuals=shifted.residuals[::-1], iterations=shifted.iterations)


def opg_eigs_incremental(j_blocks, n_total, k):
    """Top-K eigenpairs of ``G = J^T J / N`` from a stream of row blocks of J.

    Blocks are buffered until at least K rows are available, then folded in:
    the current factorization ``diag(s) V^T`` is stacked on top of the new
    rows, the (K + b) x P result is re-factorized by a thin SVD and truncated
    back to rank K. Eigenvalues are ``s**2 / n_total``.
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    s = vt = None
    buffer = []
    buffered = seen = updates = 0

    def fold(rows):
        nonlocal s, vt, updates
        if rows.shape[0] < k:
            raise ContractError(
                f"update window holds {rows.shape[0]} rows, fewer than k={k}")
        if k > rows.shape[1]:
            raise ContractError(f"k={k} exceeds the number of parameters {rows.shape[1]}")
        stacked = rows if vt is None else np.vstack([s[:, None] * vt, rows])
        _, sv, vh = np.linalg.svd(stacked, full_matrices=False)
        s, vt = sv[:k], vh[:k]
        updates += 1

    for block in j_blocks:
        block = np.atleast_2d(np.asarray(block, dtype=np.float64))
        if block.shape[0] < 1:
            raise ContractError("Jacobian blocks must hold at least one row")
        if vt is not None and block.shape[1] != vt.shape[1]:
            raise ShapeError("Jacobian blocks disagree on the number of parameters")
        buffer.append(block)
        buffered += block.shape[0]
        seen += block.shape[0]
        if buffered >= k:
            fold(np.vstack(buffer))
            buffer, buffered = [], 0
    if buffer:
        fold(np.vstack(buffer))
    if seen != n_total:
        raise ContractError(f"stream held {seen} rows but n_total={n_total}")
    if vt is None:
        raise ContractError("empty Jacobian stream")
    return EigenPairs(vt.T.copy(), s ** 2 / n_total, iterations=updates)


def _check_x(pairs, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (pairs.n_params,):
        raise ShapeError(f"x has shape {x.shape}, expected ({pairs.n_params},)")
    return x


def default_lambda_tilde(pairs, lambda_tilde=None):
    lt = float(pairs.lam[-1]) if lambda_tilde is None else float(lambda_tilde)
    if not lt > 0:
        raise ContractError(
            f"full-rank approximation needs lambda_tilde > 0, got {lt:g}"
            + (" (defaulted to the smallest retained eigenvalue)" if lambda_tilde is None else ""))
    return lt


def low_rank_materialize(pairs, max_params=DEFAULT_MAX_PARAMS):
    check_memory_cap(pairs.n_params, max_params)
    return (pairs.q * pairs.lam) @ pairs.q.T


def low_rank_quadform(pairs, x):
    c = pairs.q.T @ _check_x(pairs, x)
    return float(c @ (pairs.lam * c))


def low_rank_apply(pairs, x):
    c = pairs.q.T @ _check_x(pairs, x)
    return pairs.q @ (pairs.lam * c)


def full_rank_materialize(pairs, lambda_tilde=None, max_params=DEFAULT_MAX_PARAMS):
    lt = default_lambda_tilde(pairs, lambda_tilde)
    check_memory_cap(pairs.n_params, max_params)
    Q = pairs.q
    return (Q * pairs.lam) @ Q.T + lt * (np.eye(pairs.n_params) - Q @ Q.T)


def full_rank_quadform(pairs, x, lambda_tilde=None):
    lt = default_lambda_tilde(pairs, lambda_tilde)
    x = _check_x(pairs, x)
    c = pairs.q.T @ x
    return float(c @ (pairs.lam * c) + lt * (x @ x) - lt * (c @ c))


def full_rank_apply(pairs, x, lambda_tilde=None):
    lt = default_lambda_tilde(pairs, lambda_tilde)
    x = _check_x(pairs, x)
    c = pairs.q.T @ x
    return pairs.q @ (pairs.lam * c) + lt * (x - pairs.q @ c)


def save_eigenpairs(directory, pairs, **meta):
    """Write ``Q.bin`` (P x K), ``lambda.bin`` (K x 1) and ``eigenpairs.json``."""
    os.makedirs(directory, exist_ok=True)
    write_matrix(os.path.join(directory, "Q.bin"), pairs.q)
    write_matrix(os.path.join(directory, "lambda.bin"), pairs.lam[:, None])
    side = {"k": pairs.k, "n_params": pairs.n_params,
            "iterations": pairs.iterations,
            "residuals": None if pairs.residuals is None else [float(r) for r in pairs.residuals]}
    side.update(meta)
    with open(os.path.join(directory, "eigenpairs.json"), "w") as f:
        json.dump(side, f, indent=2, sort_keys=True)
    return side


def load_eigenpairs(directory):
    q = read_matrix(os.path.join(directory, "Q.bin"))
    lam = read_vector(os.path.join(directory, "lambda.bin"))
    return EigenPairs(q, lam)
