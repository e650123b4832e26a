"""Quick built-in oracle checks, run by ``afdm-isac selftest``.

Each check compares two independent routes to the same quantity at a small
scale and reports the discrepancy against a fixed tolerance.
"""

from __future__ import annotations

import time

import numpy as np

from .channel import desk_scene, synthesize_tensor, time_domain_cube, validation_scene
from .cpd import als_baseline, column_correlation, match_columns, structured_cpd
from .crlb import FimInput, analytic_jacobian, assemble_fim, fd_fim_oracle, fd_jacobian
from .estimators import estimate_all
from .harness import match_targets, truth_params
from .waveform import AfdmConfig, daft, gen_qam_frame, idaft, idaft_matrix


def _transform_roundtrip():
    cfg = AfdmConfig(n_sub=64, ell_max=6, l_cpp=6)
    x = gen_qam_frame(16, 11, 64)
    err = max(np.abs(daft(idaft(x, cfg), cfg) - x).max(),
              np.abs(idaft_matrix(cfg) @ x - idaft(x, cfg)).max())
    return err, 1e-10


def _dual_path():
    scene, cfg = desk_scene()
    x = gen_qam_frame(16, 12, cfg.n_sub)
    fac = synthesize_tensor(scene, x, cfg)[1]
    td = time_domain_cube(scene, x, cfg)
    return np.linalg.norm(fac - td) / np.linalg.norm(td), 1e-8


def _pipeline():
    scene, cfg = desk_scene()
    x = gen_qam_frame(16, 13, cfg.n_sub)
    y = synthesize_tensor(scene, x, cfg)[1]
    rep = estimate_all(y, x, cfg, scene, rank=len(scene.targets), t_outer=10)
    truth = truth_params(scene, cfg)
    est = rep.params()[match_targets(truth, rep.params())]
    return np.abs(est - truth).max(), 1e-3


def _als_vs_structured():
    scene, cfg = desk_scene()
    x = gen_qam_frame(16, 14, cfg.n_sub)
    y = synthesize_tensor(scene, x, cfg)[1]
    st = structured_cpd(y, 3)
    al = als_baseline(y, 3, seed=0, n_starts=4)
    worst = 1.0
    for a, b in ((st.a_r_hat, al.a_r_hat), (st.b_c_hat, al.b_c_hat), (st.a_t_hat, al.a_t_hat)):
        perm = match_columns(st.a_t_hat, al.a_t_hat)
        worst = min(worst, column_correlation(a, b[:, perm]).min())
    return 1.0 - worst, 1e-3


def _crlb_jacobian():
    scene, cfg = validation_scene()
    inp = FimInput(scene, cfg, gen_qam_frame(16, 3, cfg.n_sub), 0.01)
    ja, jf = analytic_jacobian(inp), fd_jacobian(inp)
    norms = np.maximum(np.linalg.norm(ja, axis=1), 1e-300)
    jac = (np.linalg.norm(ja - jf, axis=1) / norms)[np.linalg.norm(ja, axis=1) > 0].max()
    f, o = assemble_fim(inp), fd_fim_oracle(inp)
    return max(jac, np.linalg.norm(f - o) / np.linalg.norm(o)), 1e-6


CHECKS = {
    "transform round trip": _transform_roundtrip,
    "factor vs time-domain synthesis": _dual_path,
    "noise-free pipeline": _pipeline,
    "ALS vs structured CPD": _als_vs_structured,
    "CRLB derivatives vs finite differences": _crlb_jacobian,
}


def run_selftest(verbose: bool = False) -> bool:
    ok_all = True
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        err, tol = fn()
        ok = bool(err < tol)
        ok_all &= ok
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {err:.2e} (tol {tol:.0e}, "
                  f"{time.perf_counter() - t0:.1f} s)")
    return ok_all
