import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from afdm_isac.channel import SceneConfig, Target, daf_vector, rx_steering, synthesize_tensor, tx_steering
from afdm_isac.estimators import (GOLDEN, AoaSearchConfig, aoa_projector, aoa_spectrum, aoa_toeplitz,
                                  decode_integer, delay_doppler_candidates, estimate_all,
                                  estimate_aoa, estimate_aod, estimate_delay_doppler,
                                  golden_section_max, matched_objective, pulse_compress,
                                  refine_delay_doppler)
from afdm_isac.harness import match_targets, truth_params
from afdm_isac.waveform import AfdmConfig, gen_qam_frame, idaft

DEG = math.pi / 180
CFG = AfdmConfig()


# --- AoD ---------------------------------------------------------------------------

def test_aod_examples():
    assert estimate_aod(1.0) == 0.0
    assert abs(estimate_aod(np.exp(-1j * np.pi / 2)) - math.pi / 6) < 1e-15


def test_aod_round_trip_sweep():
    phis = np.random.default_rng(0).uniform(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3, 1000)
    err = max(abs(estimate_aod(tx_steering(p, 2)[1]) - p) for p in phis)
    assert err < 1e-12


# --- AoA -----------------------------------------------------------------------------

def test_toeplitz_broadside_is_ones():
    sc = SceneConfig(gx=6)
    for r in (math.inf, 0.5):
        t = aoa_toeplitz(rx_steering(0.0, r, sc))
        assert np.allclose(t, 1)
        assert np.linalg.matrix_rank(t) == 1


def test_toeplitz_cancels_range_term():
    sc = SceneConfig()
    theta = math.pi / 9
    rho = -2 * math.pi * sc.d_rx / sc.wavelength * math.sin(theta)
    a_tilde = np.exp(2j * rho * np.arange(sc.gx + 1))
    t_near = aoa_toeplitz(rx_steering(theta, 4.0, sc))
    assert np.abs(t_near - np.outer(a_tilde, a_tilde.conj())).max() < 1e-12
    assert np.abs(t_near - aoa_toeplitz(rx_steering(theta, math.inf, sc))).max() < 1e-12


def test_toeplitz_scaling():
    a = rx_steering(0.3, 2.0, SceneConfig(gx=8))
    s = 0.7 - 2.1j
    assert np.allclose(aoa_toeplitz(s * a), abs(s) ** 2 * aoa_toeplitz(a))
    with pytest.raises(ValueError):
        aoa_toeplitz(np.ones(4))


def test_projector_annihilates_signal():
    sc = SceneConfig(gx=10)
    a = rx_steering(0.4, 1.5, sc)
    proj = aoa_projector(a)
    assert np.allclose(proj, proj.conj().T)
    assert np.allclose(proj @ proj, proj)
    assert aoa_spectrum(proj, 0.4)[0] < 1e-12


def test_projector_degenerate():
    with pytest.raises(ValueError):
        aoa_projector(np.zeros(5, complex))


@pytest.mark.parametrize("theta,r0", [(math.pi / 6, math.inf), (math.pi / 9, 4.0), (-0.9, 2.5), (1.2, math.inf)])
def test_aoa_accuracy(theta, r0):
    sc = SceneConfig()
    a = rx_steering(theta, r0, sc) * (0.3 + 0.8j)
    cfg = AoaSearchConfig()
    est = estimate_aoa(a, cfg)
    assert abs(est - theta) < 1e-6
    # the coarse answer is the exhaustive fine-grid minimizer rounded to the search grid
    proj = aoa_projector(a)
    fine = np.linspace(theta - 0.01, theta + 0.01, 20001)
    assert abs(fine[np.argmin(aoa_spectrum(proj, fine))] - theta) < 2e-6
    coarse = estimate_aoa(a, AoaSearchConfig(refine=False))
    assert abs(coarse - theta) <= cfg.grid_step


def test_aoa_broadside_grid():
    cfg = AoaSearchConfig(refine=False)
    est = estimate_aoa(rx_steering(0.0, math.inf, SceneConfig()), cfg)
    grid = np.arange(cfg.lo + cfg.grid_step / 2, cfg.hi, cfg.grid_step)
    assert est == grid[np.argmin(np.abs(grid))]


@given(theta=st.floats(-1.4, 1.4), re=st.floats(0.1, 5), im=st.floats(-5, 5))
def test_aoa_scale_invariant_argmin(theta, re, im):
    sc = SceneConfig(gx=12)
    a = rx_steering(theta, 0.8, sc)
    cfg = AoaSearchConfig(refine=False)
    assert estimate_aoa(a, cfg) == estimate_aoa(complex(re, im) * a, cfg)


def test_aoa_config_checks():
    with pytest.raises(ValueError):
        AoaSearchConfig(grid_step=0)
    with pytest.raises(ValueError):
        AoaSearchConfig(lo=1, hi=0)


# --- pulse compression and integer decoding --------------------------------------------

def test_pulse_autocorrelation():
    x = gen_qam_frame(16, 1)
    mag, u = pulse_compress(x, x, CFG)
    assert np.argmax(mag) == 0
    assert abs(mag[0] - np.vdot(x, x).real) < 1e-9


@pytest.mark.parametrize("beta,nu", [(8, 1), (8, 0), (8, -1), (3, -1), (12, 1), (1, 0)])
def test_pulse_integer_peak(beta, nu):
    x = gen_qam_frame(16, beta * 10 + nu)
    mag, _ = pulse_compress(daf_vector(beta, nu, x, CFG), x, CFG)
    loc = (9 * beta - nu) % 256
    assert np.argmax(mag) == loc
    assert abs(mag[loc] - np.vdot(x, x).real) < 1e-8


@pytest.mark.parametrize("beta,nu", [(8, 2), (8, -4), (0, 1), (5, 3)])
def test_pulse_lattice_index_covers_guard_band(beta, nu):
    x = gen_qam_frame(16, 4)
    mag, _ = pulse_compress(daf_vector(beta, nu, x, CFG), x, CFG, delay_index="lattice")
    loc = (9 * beta - nu) % 256
    assert np.argmax(mag) == loc
    assert abs(mag[loc] - np.vdot(x, x).real) < 1e-8


def test_pulse_checks():
    with pytest.raises(ValueError):
        pulse_compress(np.ones(10), np.ones(256), CFG)
    with pytest.raises(ValueError):
        pulse_compress(np.ones(256), np.ones(256), CFG, delay_index="nearest")


@pytest.mark.parametrize("loc,want", [(0, (0, 0)), (70, (8, 2)), (71, (8, 1)), (72, (8, 0)),
                                      (255, (0, 1)), (28, (3, -1))])
def test_decode_integer(loc, want):
    assert decode_integer(loc, CFG) == want


def test_decode_fractional_within_window():
    ell, alpha = decode_integer(71.5, CFG)
    assert ell == 8 and alpha in (0, 1)
    # only the alpha = 1 neighbour brackets nu = 1.67; both bins are refined by the estimator
    assert decode_integer(71, CFG) == (8, 1)
    assert abs(8 - 8.13) <= 1 and abs(1 - 1.67) <= 1


@given(ell=st.integers(0, 12), alpha=st.integers(-4, 4))
def test_decode_inverts_lattice(ell, alpha):
    assert decode_integer((9 * ell - alpha) % 256, CFG) == (ell, alpha)


# --- golden section -------------------------------------------------------------------

@given(c=st.floats(-0.9, 0.9))
def test_golden_section_finds_max(c):
    x, n, width = golden_section_max(lambda v: -(v - c) ** 2, -1, 1)
    assert abs(x - c) < 1e-4
    assert width < 1e-4


@given(n_steps=st.integers(1, 30))
def test_golden_width_shrinks_by_eta(n_steps):
    _, n, width = golden_section_max(lambda v: -abs(v - 0.123), -1, 1, tol=0.0, max_iter=n_steps)
    assert n == n_steps
    assert math.isclose(width, 2 * GOLDEN**n_steps, rel_tol=1e-9)


def test_golden_iteration_cap():
    _, n, width = golden_section_max(lambda v: -v * v, -1, 1, tol=1e-30)
    assert n == 40 and width > 1e-30


# --- Algorithm 2 ------------------------------------------------------------------------

def grid_oracle(b, x, beta0, nu0, half=0.02, steps=201):
    s, y = idaft(x, CFG), idaft(b, CFG)
    best = (-1.0, None)
    for be in np.linspace(beta0 - half, beta0 + half, steps):
        for nu in np.linspace(nu0 - half, nu0 + half, steps):
            f = matched_objective(s, y, be, nu)
            if f > best[0]:
                best = (f, (be, nu))
    return best[1]


def test_refine_integer_fixed_point():
    x = gen_qam_frame(16, 2)
    # default stopping rule: bracket width 1e-4
    est = refine_delay_doppler(daf_vector(8, 2, x, CFG), x, CFG, (8, 2))
    assert abs(est.beta_hat - 8) < 1e-4 and abs(est.nu_hat - 2) < 1e-4


def test_refine_integer_exact_with_tight_tol():
    x = gen_qam_frame(16, 2)
    est = refine_delay_doppler(daf_vector(8, 2, x, CFG), x, CFG, (8, 2), tol=1e-9, max_inner=80)
    assert abs(est.beta_hat - 8) < 1e-6 and abs(est.nu_hat - 2) < 1e-6


def test_refine_fractional_against_grid():
    x = gen_qam_frame(16, 3)
    b = daf_vector(8.13, 1.67, x, CFG)
    est = refine_delay_doppler(b, x, CFG, (8, 1), t_outer=3)
    assert abs(est.beta_hat - 8.13) < 1e-3 and abs(est.nu_hat - 1.67) < 1e-3
    ob, on = grid_oracle(b, x, 8.13, 1.67)
    assert abs(est.beta_hat - ob) < 5e-4 and abs(est.nu_hat - on) < 5e-4


def test_refine_history_and_units():
    x = gen_qam_frame(16, 3)
    hist = []
    est = refine_delay_doppler(daf_vector(5.3, -0.4, x, CFG), x, CFG, (5, 0), t_outer=4, history=hist)
    assert len(hist) == 4
    assert est.tau_hat == est.beta_hat * CFG.ts and est.fd_hat == est.nu_hat * CFG.delta_f
    with pytest.raises(ValueError):
        refine_delay_doppler(x, x, CFG, (0, 0), t_outer=0)


def test_estimate_scale_invariant():
    x = gen_qam_frame(16, 8)
    b = daf_vector(6.4, 0.9, x, CFG)
    e1 = estimate_delay_doppler(b, x, CFG)
    e2 = estimate_delay_doppler(10 * np.exp(0.7j) * b, x, CFG)
    assert e1.beta_hat == pytest.approx(e2.beta_hat, abs=1e-12)
    assert e1.nu_hat == pytest.approx(e2.nu_hat, abs=1e-12)


def test_candidates_are_neighbours():
    x = gen_qam_frame(16, 3)
    p, cands = delay_doppler_candidates(daf_vector(8.13, 1.67, x, CFG), x, CFG)
    assert p in (71, 72)
    assert (8, 1) in cands


def test_alg2_monte_carlo_15db():
    rng = np.random.default_rng(5)
    ok, trials = 0, 60
    for t in range(trials):
        beta, nu = rng.uniform(1, 12), rng.uniform(-1.5, 1.5)
        x = gen_qam_frame(16, [15, t])
        b = daf_vector(beta, nu, x, CFG)
        w = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        w *= np.linalg.norm(b) / np.linalg.norm(w) / 10 ** (15 / 20)
        e = estimate_delay_doppler(b + w, x, CFG)
        ok += abs(e.beta_hat - beta) < 1e-2 and abs(e.nu_hat - nu) < 1e-2
    assert ok >= 0.9 * trials


# --- Algorithm 3 -------------------------------------------------------------------------

def test_pipeline_static_broadside():
    cfg = AfdmConfig(n_sub=32, ell_max=2, l_cpp=2)
    sc = SceneConfig(k_tx=4, gx=4, targets=(Target(0, 0, 0, 0),))
    x = gen_qam_frame(16, 1, 32)
    rep = estimate_all(synthesize_tensor(sc, x, cfg)[1], x, cfg, sc, rank=1)
    assert abs(rep.phi[0]) < 1e-12 and abs(rep.theta[0]) < 1e-6
    assert abs(rep.beta[0]) < 1e-4 and abs(rep.nu[0]) < 1e-4


def test_pipeline_shared_aoa():
    cfg = AfdmConfig(n_sub=64, ell_max=6, l_cpp=6)
    targets = (
        Target.from_normalized(cfg, theta=15 * DEG, phi=-20 * DEG, beta=1.3, nu=0.4, range=0.5),
        Target.from_normalized(cfg, theta=15 * DEG, phi=35 * DEG, beta=4.6, nu=-0.8, gamma=0.7j),
    )
    sc = SceneConfig(k_tx=8, gx=16, targets=targets)
    x = gen_qam_frame(16, 2, 64)
    rep = estimate_all(synthesize_tensor(sc, x, cfg)[1], x, cfg, sc, rank="auto", t_outer=8)
    assert rep.rank == 2 and rep.mdl_rank == 2
    truth = truth_params(sc, cfg)
    est = rep.params()[match_targets(truth, rep.params())]
    assert np.abs(est[:, :2] - truth[:, :2]).max() < 1e-6
    assert np.abs(est[:, 2:] - truth[:, 2:]).max() < 1e-3


def test_pipeline_shape_check(small_scene):
    sc, cfg = small_scene
    with pytest.raises(ValueError):
        estimate_all(np.zeros((3, 64, 8)), np.ones(64), cfg, sc, rank=1)


def test_report_permuted(small_scene):
    sc, cfg = small_scene
    x = gen_qam_frame(16, 0, cfg.n_sub)
    rep = estimate_all(synthesize_tensor(sc, x, cfg)[1], x, cfg, sc, rank=3)
    p = rep.permuted([2, 0, 1])
    assert np.array_equal(p.theta, rep.theta[[2, 0, 1]])
    assert np.array_equal(p.factors.b_c_hat, rep.factors.b_c_hat[:, [2, 0, 1]])
    assert p.iterations == [rep.iterations[i] for i in (2, 0, 1)]
