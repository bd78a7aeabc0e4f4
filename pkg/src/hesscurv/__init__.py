"""Exact Hessians, OPG matrices and matrix-free eigendecompositions for
dense feed-forward networks."""

from .autodiff import GradResult, HvpOperator, grad_batch, hvp, per_example_grad, per_example_grads
from .curvature import CurvatureConfig, assemble_G, assemble_H, assemble_J
from .eigen import (EigenPairs, LanczosConfig, full_rank_apply, full_rank_materialize,
                    full_rank_quadform, lanczos_topk, low_rank_apply, low_rank_materialize,
                    low_rank_quadform, opg_eigs_incremental)
from .errors import ContractError, ConvergenceError, MemoryCapError, ShapeError
from .model import Batch, ModelSpec, cost, flatten, forward, param_count, softmax, unflatten

__version__ = "0.1.0"
