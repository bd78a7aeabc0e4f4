"""Exit criteria for the package, one test per criterion.

Run ``pytest tests/test_acceptance.py`` to get a PASS/FAIL line per
criterion in the terminal summary. Tolerances and runtime budgets are fixed
here and never tuned to the observed results.
"""

import time
import tracemalloc

import numpy as np
import pytest

from hesscurv.autodiff import HvpOperator, grad_batch, hvp, per_example_grad
from hesscurv.curvature import (CurvatureConfig, assemble_G, assemble_H_unsymmetrized,
                                assemble_H_with_asymmetry, assemble_J)
from hesscurv.eigen import (EigenPairs, LanczosConfig, full_rank_apply, full_rank_materialize,
                            full_rank_quadform, lanczos_topk, low_rank_apply,
                            low_rank_materialize, low_rank_quadform, opg_eigs_incremental)
from hesscurv.linalg import dense_svd, dense_sym_eig
from hesscurv.model import RAW_MEAN, Batch, ModelSpec, cost, forward, layer_offsets, param_count
from oracles import fd_hessian, projector_distance

criterion = pytest.mark.criterion


def softmax_problem(widths, act="tanh", n=8, seed=0, scale=0.8):
    rng = np.random.default_rng(seed)
    spec = ModelSpec(widths, act)
    w = scale * rng.standard_normal(spec.n_params)
    x = rng.standard_normal((n, widths[0]))
    y = np.eye(widths[-1])[rng.integers(0, widths[-1], n)]
    return spec, w, Batch(x, y), rng


@pytest.fixture
def clock():
    start = time.perf_counter()
    return lambda: time.perf_counter() - start


@criterion("1 listing reproduction (forward, per-example and summed gradients)")
def test_listing_reproduction(clock, record_property):
    spec = ModelSpec((4, 1), "identity", RAW_MEAN)
    w = np.array([3.0, 4.0, 5.0, 2.0, 0.0])  # zero bias: the listing model has none
    X = np.array([[1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0]])
    outputs = [forward(spec, w, x)[0] for x in X]
    g1, g2 = (per_example_grad(spec, w, x)[:4] for x in X)
    total = grad_batch(spec, w, Batch(X)).grad_total[:4]
    elapsed = clock()
    record_property("elapsed_s", f"{elapsed:.3f}")
    assert outputs == [34.0, 48.0]
    assert g1.tolist() == [1, 2, 3, 4]
    assert g2.tolist() == [2, 3, 4, 5]
    assert total.tolist() == [3, 5, 7, 9]
    assert elapsed < 1.0


@criterion("2 parameter count of a 64x32 dense layer is 2080")
def test_parameter_count(clock):
    assert param_count(ModelSpec((64, 32))) == 2080
    assert clock() < 0.1


@criterion("3 assembled Hessian equals finite-difference Hessian (widths 3,5,2, tanh, N=8)")
def test_hessian_oracle(clock, record_property):
    spec, w, data, _ = softmax_problem((3, 5, 2), "tanh", n=8)
    assert spec.n_params == 32
    config = CurvatureConfig(batch_size_h=4)
    raw = assemble_H_unsymmetrized(spec, w, data, config)
    H, asym = assemble_H_with_asymmetry(spec, w, data, config)
    H_fd = fd_hessian(lambda u: cost(spec, u, data), w)
    err = np.max(np.abs(H - H_fd))
    elapsed = clock()
    record_property("max_abs_err", f"{err:.2e}")
    record_property("asymmetry", f"{asym:.2e}")
    record_property("elapsed_s", f"{elapsed:.2f}")
    assert err <= 1e-5
    assert np.max(np.abs(raw - raw.T)) <= 1e-8 * np.max(np.abs(raw))
    assert elapsed < 10.0


@criterion("4 OPG equals (1/N) J^T J, is PSD, and differs from the mean-gradient outer product")
def test_opg_identity(clock, record_property):
    spec, w, data, _ = softmax_problem((3, 5, 2), n=8, seed=1)
    J = assemble_J(spec, w, data)
    G = assemble_G(spec, w, data, CurvatureConfig(batch_size_g=8))
    gram_err = np.max(np.abs(G - J.T @ J / len(data)))
    min_eig = dense_sym_eig(G)[0].min()

    lin = ModelSpec((4, 1), "identity", RAW_MEAN)
    lw = np.array([3.0, 4.0, 5.0, 2.0, 0.0])
    pair = Batch(np.array([[1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0]]))
    G2 = assemble_G(lin, lw, pair, CurvatureConfig(batch_size_g=2))
    gbar = grad_batch(lin, lw, pair).mean
    gap = np.max(np.abs(G2 - np.outer(gbar, gbar)))
    elapsed = clock()
    record_property("gram_err", f"{gram_err:.1e}")
    record_property("min_eig", f"{min_eig:.1e}")
    record_property("opg_vs_outer_gap", f"{gap:.3f}")
    assert gram_err <= 1e-10
    assert min_eig >= -1e-10
    assert gap > 1e-3
    assert elapsed < 5.0


@criterion("5 weight-bias cross block of the logistic-model Hessian is present and correct")
def test_cross_block(clock, record_property):
    spec, w, data, _ = softmax_problem((4, 3), n=8, seed=2)
    H, _ = assemble_H_with_asymmetry(spec, w, data, CurvatureConfig(batch_size_h=8))
    (w0, b0), = layer_offsets(spec)
    cross = H[w0:b0, b0:]
    H_fd = fd_hessian(lambda u: cost(spec, u, data), w)
    err = np.max(np.abs(cross - H_fd[w0:b0, b0:]))
    elapsed = clock()
    record_property("max_cross_entry", f"{np.max(np.abs(cross)):.3f}")
    record_property("max_abs_err", f"{err:.1e}")
    assert np.max(np.abs(cross)) > 1e-3
    assert err <= 1e-5
    assert elapsed < 10.0


@criterion("6 Lanczos top-5 equals dense eigensolver; S <= 3K on a separated spectrum")
def test_lanczos_equivalence(clock, record_property):
    spec, w, data, _ = softmax_problem((4, 6, 2), n=16, seed=0, scale=1.0)
    p = spec.n_params
    assert p <= 64
    H, _ = assemble_H_with_asymmetry(spec, w, data, CurvatureConfig(batch_size_h=8))
    lam, V = dense_sym_eig(H)
    op = HvpOperator(spec, w, data, batch_size=8)
    pairs = lanczos_topk(op, p, LanczosConfig(5, max_iterations=p, residual_tol=1e-10))
    rel = np.max(np.abs(pairs.lam - lam[:5]) / np.abs(lam[:5]))
    dist = projector_distance(pairs.q, V[:, :5])

    rng = np.random.default_rng(3)
    spectrum = np.concatenate([[100.0, 90.0, 80.0, 70.0, 60.0], rng.uniform(0, 1, 59)])
    R, _ = np.linalg.qr(rng.standard_normal((64, 64)))
    A = (R * spectrum) @ R.T
    synth = lanczos_topk(lambda v: A @ v, 64, LanczosConfig(5, max_iterations=64,
                                                             residual_tol=1e-6))
    elapsed = clock()
    record_property("rel_err", f"{rel:.1e}")
    record_property("projector_dist", f"{dist:.1e}")
    record_property("S_separated", synth.iterations)
    assert rel <= 1e-6
    assert dist <= 1e-5
    assert synth.iterations <= 3 * 5
    np.testing.assert_allclose(synth.lam, spectrum[:5], rtol=1e-6)
    assert elapsed < 10.0


class TestIncrementalSVD:
    @staticmethod
    def dense_reference(J, k):
        s, V = dense_svd(J)
        return s[:k] ** 2 / J.shape[0], V[:, :k]

    @criterion("7a streamed incremental SVD (8-row blocks, K=4) on a random 64x12 Jacobian")
    def test_streamed(self, clock, record_property):
        J = np.random.default_rng(0).standard_normal((64, 12))
        pairs = opg_eigs_incremental((J[i:i + 8] for i in range(0, 64, 8)), 64, 4)
        lam, V = self.dense_reference(J, 4)
        rel = np.max(np.abs(pairs.lam - lam) / lam)
        dist = projector_distance(pairs.q, V)
        record_property("rel_err", f"{rel:.3f}")
        record_property("projector_dist", f"{dist:.3f}")
        assert clock() < 5.0
        assert rel <= 0.05
        assert dist <= 0.05

    @criterion("7b single-block incremental SVD is exact")
    def test_single_block(self, clock):
        J = np.random.default_rng(0).standard_normal((64, 12))
        pairs = opg_eigs_incremental([J], 64, 4)
        lam, V = self.dense_reference(J, 4)
        np.testing.assert_allclose(pairs.lam, lam, rtol=1e-8)
        assert projector_distance(pairs.q, V) <= 1e-8
        assert clock() < 5.0

    @criterion("7c eigenvalues sigma^2/N equal the dense eigenvalues of G")
    def test_scaling(self, clock, record_property):
        spec, w, data, _ = softmax_problem((3, 3), n=64, seed=4)
        J = assemble_J(spec, w, data)
        G = assemble_G(spec, w, data, CurvatureConfig(batch_size_g=64))
        pairs = opg_eigs_incremental([J], 64, 4)
        lam = dense_sym_eig(G)[0][:4]
        err = np.max(np.abs(pairs.lam - lam))
        record_property("abs_err", f"{err:.1e}")
        assert err <= 1e-8
        assert clock() < 5.0


@criterion("8 low/full-rank operators match their materialized forms; full-rank spectrum")
def test_approximation_algebra(clock, record_property):
    rng = np.random.default_rng(5)
    p, k, lt = 100, 7, 0.4
    Q, _ = np.linalg.qr(rng.standard_normal((p, k)))
    pairs = EigenPairs(Q, np.sort(rng.uniform(1.0, 10.0, k))[::-1])
    low = low_rank_materialize(pairs)
    full = full_rank_materialize(pairs, lt)
    worst = 0.0
    for _ in range(20):
        x = rng.standard_normal(p)
        for got, ref in ((low_rank_quadform(pairs, x), x @ low @ x),
                         (full_rank_quadform(pairs, x, lt), x @ full @ x)):
            worst = max(worst, abs(got - ref) / abs(ref))
        for got, ref in ((low_rank_apply(pairs, x), low @ x),
                         (full_rank_apply(pairs, x, lt), full @ x)):
            worst = max(worst, np.linalg.norm(got - ref) / np.linalg.norm(ref))
    spectrum = dense_sym_eig(full)[0]
    expected = np.sort(np.concatenate([pairs.lam, np.full(p - k, lt)]))[::-1]
    spec_err = np.max(np.abs(spectrum - expected))
    elapsed = clock()
    record_property("worst_rel_err", f"{worst:.1e}")
    record_property("spectrum_err", f"{spec_err:.1e}")
    assert worst <= 1e-10
    assert spec_err <= 1e-8
    assert elapsed < 5.0


@criterion("9 HVP symmetry, linearity, finite-difference agreement and O(P) memory")
def test_hvp_contract(clock, record_property):
    spec, w, data, rng = softmax_problem((5, 6, 3), "tanh", n=12, seed=6)
    p = spec.n_params
    worst_sym = worst_lin = 0.0
    for _ in range(100):
        u, v = rng.standard_normal((2, p))
        a, b = rng.standard_normal(2)
        hu, hv = hvp(spec, w, data, u), hvp(spec, w, data, v)
        s1, s2 = u @ hv, v @ hu
        worst_sym = max(worst_sym, abs(s1 - s2) / max(abs(s1), abs(s2)))
        lhs = hvp(spec, w, data, a * u + b * v)
        worst_lin = max(worst_lin, np.linalg.norm(lhs - a * hu - b * hv) / np.linalg.norm(lhs))

    v = rng.standard_normal(p)
    h = 1e-4 * np.linalg.norm(w) / np.linalg.norm(v)
    fd = (grad_batch(spec, w + h * v, data).mean - grad_batch(spec, w - h * v, data).mean) / (2 * h)
    hv = hvp(spec, w, data, v)
    fd_rel = np.linalg.norm(hv - fd) / np.linalg.norm(hv)

    # a P x P float64 matrix would need 8 P^2 bytes; the working set must stay O(P)
    big, bw, bdata, brng = softmax_problem((400, 50, 10), n=4, seed=7, scale=0.05)
    bp = big.n_params
    bv = brng.standard_normal(bp)
    tracemalloc.start()
    hvp(big, bw, bdata, bv)
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    elapsed = clock()
    record_property("sym_err", f"{worst_sym:.1e}")
    record_property("lin_err", f"{worst_lin:.1e}")
    record_property("fd_rel_err", f"{fd_rel:.1e}")
    record_property("peak_bytes_per_param", f"{peak / bp:.1f}")
    assert worst_sym <= 1e-9
    assert worst_lin <= 1e-9
    assert fd_rel <= 1e-5
    assert peak <= 32 * 8 * bp
    assert elapsed < 10.0
