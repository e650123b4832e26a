import math

import numpy as np
import pytest

from afdm_isac.channel import SceneConfig, Target, factor_matrices, synthesize_tensor
from afdm_isac.cpd import (CpdError, als_baseline, column_correlation, esprit_generators,
                           match_columns, rebuild_ar, rebuild_at, structured_cpd, refit_scales,
                           truncated_svd)
from afdm_isac.tensor import SmoothingPlan, cp_reconstruct, khatri_rao, smooth_tensor
from afdm_isac.waveform import AfdmConfig, gen_qam_frame

DEG = math.pi / 180


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="module")
def full_case():
    from afdm_isac.channel import default_scene
    sc, cfg = default_scene()
    x = gen_qam_frame(16, 21)
    y = synthesize_tensor(sc, x, cfg)[1]
    return sc, cfg, x, y, factor_matrices(sc, x, cfg)


def test_truncated_svd_basics(rng):
    u, s, v = truncated_svd(np.diag([3.0, 2.0, 1.0]), 2)
    assert np.allclose(s, [3, 2])
    a = crandn(rng, 60, 3) @ crandn(rng, 3, 80)
    u, s, v = truncated_svd(a, 3)
    assert np.linalg.norm(a - (u * s) @ v.conj().T) <= 1e-9 * np.linalg.norm(a)
    with pytest.raises(ValueError):
        truncated_svd(a, 61)


def test_truncated_svd_matches_full(rng):
    a = crandn(rng, 505, 1024)
    u, s, v = truncated_svd(a, 3)
    uf, sf, vhf = np.linalg.svd(a)
    assert np.allclose(s, sf[:3])
    for r in range(3):
        assert abs(abs(np.vdot(u[:, r], uf[:, r])) - 1) < 1e-9


def test_esprit_single_generator():
    g, k3 = 4, 3
    z = np.exp(-1j * np.pi / 2)
    col = np.kron(z ** np.arange(k3), np.exp(1j * np.arange(g)))
    u = (col / np.linalg.norm(col))[:, None] * np.exp(0.3j)
    gen, m = esprit_generators(u, g, k3)
    assert abs(np.angle(gen[0]) + np.pi / 2) < 1e-12


def test_esprit_input_checks():
    with pytest.raises(ValueError):
        esprit_generators(np.ones((6, 1)), 3, 1)
    with pytest.raises(ValueError):
        esprit_generators(np.ones((7, 1)), 3, 2)
    with pytest.raises(CpdError):
        esprit_generators(np.zeros((6, 1)), 3, 2)


def test_rebuild_at():
    assert np.allclose(rebuild_at([1.0], 5), 1)
    assert np.allclose(rebuild_at([np.exp(-1j * np.pi / 2)], 4)[:, 0], [1, -1j, -1, 1j])


def test_structured_recovers_full_scene(full_case):
    sc, cfg, x, y, (gamma, a_r, b_c, a_t) = full_case
    est = structured_cpd(y, 3)
    assert np.allclose(np.abs(est.generators), 1, atol=1e-15)
    assert np.all(np.diff(np.angle(est.generators)) > 0)
    perm = match_columns(a_t, est.a_t_hat)
    e = est.permuted(perm)
    true_z = np.exp(-1j * np.pi * np.sin([t.phi for t in sc.targets]))
    assert np.abs(np.angle(e.generators / true_z)).max() < 1e-8
    for true, got in ((a_t, e.a_t_hat), (a_r, e.a_r_hat), (b_c, e.b_c_hat)):
        assert column_correlation(true, got).min() >= 1 - 1e-9
    assert np.allclose(e.a_r_hat[sc.gx], 1)
    gam = refit_scales(y, est.a_r_hat, est.b_c_hat, est.a_t_hat)
    rec = cp_reconstruct(gam, est.a_r_hat, est.b_c_hat, est.a_t_hat)
    assert np.linalg.norm(rec - y) <= 1e-8 * np.linalg.norm(y)


def test_structured_uv_identity(full_case):
    # U M equals the smoothed transmit/receive Khatri-Rao product up to column scale
    sc, cfg, x, y, (gamma, a_r, b_c, a_t) = full_case
    est = structured_cpd(y, 3)
    u, s, v = truncated_svd(smooth_tensor(y, SmoothingPlan(5, 4)), 3)
    um = u @ est.mixing
    perm = match_columns(a_t, est.a_t_hat)
    ref = khatri_rao(a_t[:5], a_r)
    assert column_correlation(ref, um[:, perm]).min() > 1 - 1e-9


def test_wrong_mixing_permutation_degrades(full_case):
    sc, cfg, x, y, (gamma, a_r, b_c, a_t) = full_case
    est = structured_cpd(y, 3)
    u, s, v = truncated_svd(smooth_tensor(y, SmoothingPlan(5, 4)), 3)
    bad = rebuild_ar(u, est.mixing[:, [1, 2, 0]], est.a_t_hat, SmoothingPlan(5, 4), sc.g)
    perm = match_columns(a_t, est.a_t_hat)
    assert column_correlation(a_r, bad[:, perm]).min() < 0.9


@pytest.mark.parametrize("k3", [2, 4, 7])
def test_structured_other_plans(full_case, k3):
    sc, cfg, x, y, (gamma, a_r, b_c, a_t) = full_case
    est = structured_cpd(y, 3, SmoothingPlan.for_k(8, k3))
    perm = match_columns(a_t, est.a_t_hat)
    assert column_correlation(b_c, est.b_c_hat[:, perm]).min() >= 1 - 1e-9


def test_broadside_static_target():
    cfg = AfdmConfig(n_sub=32, ell_max=2, l_cpp=2)
    sc = SceneConfig(k_tx=4, gx=3, targets=(Target(0, 0, 0, 0, gamma=2 - 1j),))
    x = gen_qam_frame(16, 1, 32)
    est = structured_cpd(synthesize_tensor(sc, x, cfg)[1], 1)
    assert np.allclose(est.a_r_hat[:, 0], 1)
    assert column_correlation(x[:, None], est.b_c_hat).min() > 1 - 1e-12


def test_shared_aoa_targets_separated():
    cfg = AfdmConfig(n_sub=64, ell_max=6, l_cpp=6)
    targets = (
        Target.from_normalized(cfg, theta=15 * DEG, phi=-20 * DEG, beta=1.3, nu=0.4),
        Target.from_normalized(cfg, theta=15 * DEG, phi=35 * DEG, beta=4.6, nu=-0.8, gamma=0.7j),
    )
    sc = SceneConfig(k_tx=8, gx=16, targets=targets)
    x = gen_qam_frame(16, 2, 64)
    y = synthesize_tensor(sc, x, cfg)[1]
    _, a_r, b_c, a_t = factor_matrices(sc, x, cfg)
    est = structured_cpd(y, 2)
    perm = match_columns(a_t, est.a_t_hat)
    e = est.permuted(perm)
    assert column_correlation(b_c, e.b_c_hat).min() > 1 - 1e-9
    assert column_correlation(a_r, e.a_r_hat).min() > 1 - 1e-9


def test_rank_too_large_rejected(full_case):
    y = full_case[3]
    with pytest.raises(CpdError):
        structured_cpd(y[:2], 5, SmoothingPlan(2, 7))


def test_coincident_transmit_angles_fail():
    cfg = AfdmConfig(n_sub=32, ell_max=2, l_cpp=2)
    t1 = Target.from_normalized(cfg, theta=0.1, phi=0.3, beta=1.0, nu=0.2)
    sc = SceneConfig(k_tx=4, gx=0, targets=(t1, Target.from_normalized(cfg, theta=0.1, phi=0.3, beta=2.0, nu=-0.4)))
    y = synthesize_tensor(sc, gen_qam_frame(4, 0, 32), cfg)[1]
    # a single receive element and identical transmit responses give a rank-one subspace
    with pytest.raises(CpdError):
        structured_cpd(y, 2, SmoothingPlan(2, 3))


def test_als_rank_one(rng):
    a, b, c = crandn(rng, 5, 1), crandn(rng, 6, 1), crandn(rng, 4, 1)
    y = cp_reconstruct([1.0], a, b, c)
    est = als_baseline(y, 1, max_iter=50, seed=0)
    g = refit_scales(y, est.a_r_hat, est.b_c_hat, est.a_t_hat)
    rec = cp_reconstruct(g, est.a_r_hat, est.b_c_hat, est.a_t_hat)
    assert np.linalg.norm(rec - y) < 1e-8 * np.linalg.norm(y)
    assert est.iterations <= 50


def test_als_rejects_rank_zero():
    with pytest.raises(ValueError):
        als_baseline(np.ones((2, 2, 2)), 0)


def test_als_warm_start_from_structured(full_case):
    sc, cfg, x, y, (gamma, a_r, b_c, a_t) = full_case
    st = structured_cpd(y, 3)
    al = als_baseline(y, 3, init=st, max_iter=20)
    assert al.converged
    assert column_correlation(st.b_c_hat, al.b_c_hat).min() > 1 - 1e-9


def test_als_independent_agrees(small_scene):
    sc, cfg = small_scene
    x = gen_qam_frame(16, 5, cfg.n_sub)
    y = synthesize_tensor(sc, x, cfg)[1]
    st = structured_cpd(y, 3)
    al = als_baseline(y, 3, seed=11, n_starts=4)
    perm = match_columns(st.a_t_hat, al.a_t_hat)
    for a, b in ((st.a_r_hat, al.a_r_hat), (st.b_c_hat, al.b_c_hat), (st.a_t_hat, al.a_t_hat)):
        assert column_correlation(a, b[:, perm]).min() > 0.999


def test_als_flags_non_convergence(small_scene):
    sc, cfg = small_scene
    y = synthesize_tensor(sc, gen_qam_frame(16, 5, cfg.n_sub), cfg, 0.0, seed=1)[0]
    est = als_baseline(y, 3, max_iter=2, tol=0.0, seed=0)
    assert not est.converged and est.iterations == 2
