"""Dense Hessian, per-example Jacobian and OPG matrix assembly.

Dataset-level matrices are averages of per-mini-batch matrices. The dataset
size must be a multiple of the batch size; trailing examples are never
silently dropped.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging

import numpy as np

from .autodiff import hvp, per_example_grads
from .errors import ContractError, MemoryCapError
from .model import param_count

log = logging.getLogger(__name__)

DEFAULT_MAX_PARAMS = 4096


@dataclass(frozen=True)
class CurvatureConfig:
    batch_size_h: int = 1
    batch_size_g: int = 1
    parallelism: int = 1
    max_params: int = DEFAULT_MAX_PARAMS

    def __post_init__(self):
        for name in ("batch_size_h", "batch_size_g", "parallelism", "max_params"):
            if int(getattr(self, name)) < 1:
                raise ContractError(f"{name} must be >= 1")


def check_memory_cap(p, max_params=DEFAULT_MAX_PARAMS):
    if p > max_params:
        raise MemoryCapError(
            f"P = {p} exceeds the dense-matrix cap of {max_params}; use the "
            "matrix-free eigensolvers and low/full-rank operators instead")


def _hessian_columns(spec, params, batch, lanes):
    p = param_count(spec)
    H = np.empty((p, p))

    def column(i):
        e = np.zeros(p)
        e[i] = 1.0
        H[:, i] = hvp(spec, params, batch, e)

    if lanes == 1:
        for i in range(p):
            column(i)
    else:
        # each worker writes disjoint columns, so the result does not depend
        # on scheduling
        with ThreadPoolExecutor(max_workers=lanes) as pool:
            list(pool.map(column, range(p)))
    return H


def assemble_H_unsymmetrized(spec, params, dataset, config=CurvatureConfig()):
    """Mini-batch-averaged Hessian built from P basis-vector HVPs per batch,
    before any symmetrization."""
    p = param_count(spec)
    check_memory_cap(p, config.max_params)
    batches = dataset.split(config.batch_size_h)
    H = np.zeros((p, p))
    for b in batches:
        H += _hessian_columns(spec, params, b, config.parallelism)
    return H / len(batches)


def asymmetry(a):
    return float(np.max(np.abs(a - a.T))) if a.size else 0.0


def assemble_H_with_asymmetry(spec, params, dataset, config=CurvatureConfig()):
    """Return ``(H, asym)`` where ``asym`` is ``max|H - H^T|`` before symmetrizing."""
    H = assemble_H_unsymmetrized(spec, params, dataset, config)
    asym = asymmetry(H)
    scale = float(np.max(np.abs(H))) if H.size else 0.0
    if asym > 1e-8 * scale:
        raise ContractError(
            f"assembled Hessian is asymmetric beyond tolerance ({asym:.3e} vs scale {scale:.3e})")
    log.debug("Hessian asymmetry before symmetrization: %.3e", asym)
    return 0.5 * (H + H.T), asym


def assemble_H(spec, params, dataset, config=CurvatureConfig()):
    return assemble_H_with_asymmetry(spec, params, dataset, config)[0]


def assemble_J(spec, params, batch):
    """N x P per-example Jacobian; row n is the gradient of C_n."""
    return per_example_grads(spec, params, batch)


def assemble_G(spec, params, dataset, config=CurvatureConfig()):
    """OPG matrix: mean over mini-batches of J_b^T J_b / |b|."""
    p = param_count(spec)
    check_memory_cap(p, config.max_params)
    batches = dataset.split(config.batch_size_g)
    G = np.zeros((p, p))
    for b in batches:
        J = per_example_grads(spec, params, b)
        G += (J.T @ J) / len(b)
    return G / len(batches)
