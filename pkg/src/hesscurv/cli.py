"""Batch command-line front end.

Verbs: ``gen-data``, ``train``, ``hessian``, ``opg``, ``eigs``, ``quadform``.
Each run reads one JSON config (``--config``); ``--seed``, ``--out``,
``--threads`` and the verb-specific flags override values from the file.
Every output file gets a JSON sidecar carrying the hash of the effective
config.
"""

import argparse
from dataclasses import asdict, dataclass, field, replace
import hashlib
import json
import logging
import os
import sys

import numpy as np

from .autodiff import HvpOperator
from .curvature import CurvatureConfig, assemble_G, assemble_H_with_asymmetry, assemble_J
from .eigen import (LanczosConfig, full_rank_quadform, lanczos_bottomk, lanczos_topk,
                    load_eigenpairs, low_rank_quadform, opg_eigs_incremental, save_eigenpairs)
from .errors import ContractError, ConvergenceError, MemoryCapError, ShapeError
from .matio import read_vector, write_matrix
from .model import Batch, ModelSpec, param_count
from .training import TrainingError, sgd

log = logging.getLogger("hesscurv")


@dataclass(frozen=True)
class SGDConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 1

    def __post_init__(self):
        if self.learning_rate < 0 or not np.isfinite(self.learning_rate):
            raise ContractError("learning_rate must be a finite value >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    dataset_path: str = "dataset.csv"
    seed: int = 0
    sgd: SGDConfig = field(default_factory=SGDConfig)
    curvature: CurvatureConfig = field(default_factory=CurvatureConfig)
    lanczos: LanczosConfig = field(default_factory=lambda: LanczosConfig(k=1))
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, d):
        return cls(model=ModelSpec.from_dict(d["model"]),
                   dataset_path=d.get("dataset_path", "dataset.csv"),
                   seed=int(d.get("seed", 0)),
                   sgd=SGDConfig(**d.get("sgd", {})),
                   curvature=CurvatureConfig(**d.get("curvature", {})),
                   lanczos=LanczosConfig(**d.get("lanczos", {"k": 1})),
                   output_dir=d.get("output_dir", "out"))

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path):
    with open(path) as f:
        return RunConfig.from_dict(json.load(f))


# dataset CSV: header x1..xT1,y1..yTL, then one example per row

def write_dataset(path, x, y):
    t1, tl = x.shape[1], y.shape[1]
    header = ",".join([f"x{i + 1}" for i in range(t1)] + [f"y{i + 1}" for i in range(tl)])
    with open(path, "w", newline="\n") as f:
        f.write(header + "\n")
        for xr, yr in zip(x, y):
            f.write(",".join([f"{v:.17g}" for v in xr] + [str(int(v)) for v in yr]) + "\n")


def read_dataset(path):
    with open(path) as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    nx = sum(1 for h in header if h.startswith("x"))
    if nx == 0 or nx == len(header) or data.shape[1] != len(header):
        raise ShapeError(f"{path}: header must be x1..xT1,y1..yTL")
    return Batch(data[:, :nx], data[:, nx:])


def _write_sidecar(path, cfg_hash, **meta):
    meta["config_hash"] = cfg_hash
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def _hash_of(**kwargs):
    return hashlib.sha256(json.dumps(kwargs, sort_keys=True).encode()).hexdigest()


def cmd_gen_data(t1, tl, n, seed, out_dir):
    """Gaussian features with labels from a seeded random linear rule
    (argmax of ``x @ A``)."""
    if n < 1 or t1 < 1 or tl < 1:
        raise ContractError("t1, tl and n must be >= 1")
    rng = np.random.default_rng(seed)
    rule = rng.standard_normal((t1, tl))
    x = rng.standard_normal((n, t1))
    y = np.eye(tl)[np.argmax(x @ rule, axis=1)]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "dataset.csv")
    write_dataset(path, x, y)
    _write_sidecar(path + ".json", _hash_of(t1=t1, tl=tl, n=n, seed=seed),
                   t1=t1, tl=tl, n=n, seed=seed)
    return path


def _load_params(cfg, params_file):
    w = read_vector(params_file)
    if w.size != param_count(cfg.model):
        raise ShapeError(f"{params_file} holds {w.size} parameters, model needs {param_count(cfg.model)}")
    return w


def cmd_train(cfg):
    data = read_dataset(cfg.dataset_path)
    s = cfg.sgd
    w, history = sgd(cfg.model, data, s.learning_rate, s.epochs, s.batch_size, seed=cfg.seed)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "params.bin")
    write_matrix(path, w[:, None])
    h = cfg.digest()
    _write_sidecar(path + ".json", h, n_params=w.size, model=cfg.model.to_dict())
    with open(os.path.join(cfg.output_dir, "metrics.json"), "w") as f:
        json.dump({"config_hash": h, "cost_initial": history[0], "cost_per_epoch": history[1:]},
                  f, indent=2)
    return path


def cmd_hessian(cfg, params_file, dtype="f64"):
    data = read_dataset(cfg.dataset_path)
    w = _load_params(cfg, params_file)
    H, asym = assemble_H_with_asymmetry(cfg.model, w, data, cfg.curvature)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "H.bin")
    write_matrix(path, H, dtype=dtype)
    _write_sidecar(path + ".json", cfg.digest(), n=len(data), n_params=w.size,
                   batch_size_h=cfg.curvature.batch_size_h,
                   n_batches=len(data) // cfg.curvature.batch_size_h,
                   parallelism=cfg.curvature.parallelism, asymmetry=asym)
    return path


def cmd_opg(cfg, params_file, dtype="f64"):
    data = read_dataset(cfg.dataset_path)
    w = _load_params(cfg, params_file)
    G = assemble_G(cfg.model, w, data, cfg.curvature)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "G.bin")
    write_matrix(path, G, dtype=dtype)
    _write_sidecar(path + ".json", cfg.digest(), n=len(data), n_params=w.size,
                   batch_size_g=cfg.curvature.batch_size_g,
                   n_batches=len(data) // cfg.curvature.batch_size_g)
    return path


def cmd_eigs(cfg, params_file, method="lanczos_h", shift=None):
    """Top-k eigenpairs of H (Lanczos over HVPs) or G (incremental SVD of J).

    ``shift`` selects the bottom of the Hessian spectrum through Lanczos on
    ``shift * I - H``; an extension, only valid with ``lanczos_h``.
    """
    data = read_dataset(cfg.dataset_path)
    w = _load_params(cfg, params_file)
    p = w.size
    k = cfg.lanczos.k
    if not k < p:
        raise ContractError(f"k={k} must be smaller than P={p}")
    meta = {"method": method, "n": len(data)}
    if method == "lanczos_h":
        op = HvpOperator(cfg.model, w, data, cfg.curvature.batch_size_h)
        if shift is None:
            pairs = lanczos_topk(op, p, cfg.lanczos)
        else:
            pairs = lanczos_bottomk(op, p, cfg.lanczos, shift)
            meta["shift"] = shift
        meta["batch_size_h"] = cfg.curvature.batch_size_h
    elif method == "incremental_g":
        if shift is not None:
            raise ContractError("--shift only applies to lanczos_h")
        bs = cfg.curvature.batch_size_g
        blocks = (assemble_J(cfg.model, w, b) for b in data.split(bs))
        pairs = opg_eigs_incremental(blocks, len(data), k)
        meta["batch_size_g"] = bs
    else:
        raise ContractError(f"unknown method {method!r}")
    out = os.path.join(cfg.output_dir, "eigs")
    save_eigenpairs(out, pairs, config_hash=cfg.digest(), **meta)
    return out


def cmd_quadform(eigs_dir, x_file, mode="low_rank", lambda_tilde=None):
    pairs = load_eigenpairs(eigs_dir)
    x = read_vector(x_file)
    if mode == "low_rank":
        return low_rank_quadform(pairs, x)
    if mode == "full_rank":
        return full_rank_quadform(pairs, x, lambda_tilde)
    raise ContractError(f"unknown mode {mode!r}")


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker lanes for Hessian columns")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hesscurv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset CSV")
    g.add_argument("--t1", type=int, required=True)
    g.add_argument("--tl", type=int, required=True)
    g.add_argument("--n", type=int, required=True)

    t = sub.add_parser("train", parents=[common], help="SGD from a seeded initialization")
    t.add_argument("--data", help="dataset CSV (overrides dataset_path)")
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--epochs", type=int)

    for verb, what in (("hessian", "exact Hessian"), ("opg", "OPG matrix")):
        c = sub.add_parser(verb, parents=[common], help=f"write the dense {what}")
        c.add_argument("--data")
        c.add_argument("--params", required=True)
        c.add_argument("--f32", action="store_true", help="downcast the exported matrix")

    e = sub.add_parser("eigs", parents=[common], help="top-k eigenpairs of H or G")
    e.add_argument("--data")
    e.add_argument("--params", required=True)
    e.add_argument("--method", choices=["lanczos_h", "incremental_g"], default="lanczos_h")
    e.add_argument("--k", type=int)
    e.add_argument("--shift", type=float,
                   help="extension: eigenpairs at the bottom of the Hessian spectrum "
                        "via Lanczos on shift*I - H")

    q = sub.add_parser("quadform", parents=[common], help="x^T H x for a low/full-rank approximation")
    q.add_argument("--eigs", required=True, help="directory with Q.bin and lambda.bin")
    q.add_argument("--x", required=True, help="vector file")
    q.add_argument("--mode", choices=["low_rank", "full_rank"], default="low_rank")
    q.add_argument("--lambda-tilde", type=float)
    return parser


def _effective_config(args):
    if not args.config:
        raise ContractError(f"{args.verb} needs --config")
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if getattr(args, "data", None):
        changes["dataset_path"] = args.data
    if args.threads is not None:
        changes["curvature"] = replace(cfg.curvature, parallelism=args.threads)
    sgd_changes = {}
    if getattr(args, "learning_rate", None) is not None:
        sgd_changes["learning_rate"] = args.learning_rate
    if getattr(args, "epochs", None) is not None:
        sgd_changes["epochs"] = args.epochs
    if sgd_changes:
        changes["sgd"] = replace(cfg.sgd, **sgd_changes)
    if getattr(args, "k", None) is not None:
        lz = cfg.lanczos
        changes["lanczos"] = replace(lz, k=args.k, max_iterations=max(lz.max_iterations, args.k))
    return replace(cfg, **changes)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "gen-data":
            path = cmd_gen_data(args.t1, args.tl, args.n, args.seed or 0, args.out or ".")
        elif args.verb == "quadform":
            y = cmd_quadform(args.eigs, args.x, args.mode, args.lambda_tilde)
            print(f"{y:.17g}")
            return 0
        else:
            cfg = _effective_config(args)
            if args.verb == "train":
                path = cmd_train(cfg)
            elif args.verb == "hessian":
                path = cmd_hessian(cfg, args.params, "f32" if args.f32 else "f64")
            elif args.verb == "opg":
                path = cmd_opg(cfg, args.params, "f32" if args.f32 else "f64")
            else:
                path = cmd_eigs(cfg, args.params, args.method, args.shift)
    except (ContractError, ShapeError, MemoryCapError, ConvergenceError,
            TrainingError, OSError, KeyError) as exc:
        print(f"hesscurv {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
