"""Monte Carlo experiment runner: target matching, NMSE and CRLB overlay."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import SceneConfig, default_scene, desk_scene, noise_variance, synthesize_tensor
from .cpd import CpdError
from .crlb import compute_crlb
from .estimators import estimate_all
from .io import load_scene
from .waveform import AfdmConfig, gen_qam_frame

SWEEP_PARAMS = ("theta", "phi", "tau", "f_d")
CSV_COLUMNS = ("snr_db", "param", "nmse_mean", "nmse_stderr", "crlb", "trials_ok", "trials_failed")
BUILTIN_SCENES = {"default": default_scene, "desk": desk_scene}


def truth_params(scene: SceneConfig, cfg: AfdmConfig) -> np.ndarray:
    """``R x 4`` array of ``(theta, phi, beta, nu)``."""
    return np.array([[t.theta, t.phi, t.beta(cfg), t.nu(cfg)] for t in scene.targets])


def match_targets(truth: np.ndarray, est: np.ndarray) -> np.ndarray:
    """Permutation ``perm`` such that ``est[perm[r]]`` is paired with ``truth[r]``.

    Cost between two targets is the sum over parameters of squared differences
    normalized by the parameter's spread in ``truth``.  A spread below
    ``1e-12 * max(1, max|truth|)`` counts as degenerate and is replaced by 1.
    """
    truth, est = np.atleast_2d(truth), np.atleast_2d(est)
    if truth.shape != est.shape:
        raise ValueError("truth and estimates need the same number of targets and parameters")
    scale = match_scale(truth)
    diff = (truth[:, None, :] - est[None, :, :]) / scale
    cost = np.sum(diff**2, axis=2)
    _, cols = linear_sum_assignment(cost)
    return cols


def match_scale(truth: np.ndarray) -> np.ndarray:
    spread = np.ptp(truth, axis=0)
    floor = 1e-12 * np.maximum(1.0, np.abs(truth).max(axis=0))
    return np.where(spread > floor, spread, 1.0)


def nmse(truth, est) -> float:
    truth = np.asarray(truth, dtype=float)
    est = np.asarray(est, dtype=float)
    if truth.shape != est.shape:
        raise ValueError("length mismatch")
    den = float(np.sum(truth**2))
    if den == 0:
        raise ValueError("truth has zero norm")
    return float(np.sum((truth - est) ** 2)) / den


def resolve_scene(name_or_path) -> tuple[SceneConfig, AfdmConfig, dict]:
    if str(name_or_path) in BUILTIN_SCENES:
        scene, cfg = BUILTIN_SCENES[str(name_or_path)]()
        return scene, cfg, {"qam_order": 16, "seed": 0}
    return load_scene(name_or_path)


@dataclass
class ExperimentPlan:
    """Monte Carlo sweep description.

    ``rank_mode`` is ``"mdl"`` or a fixed integer.  ``None`` in ``snr_grid_db``
    (or ``inf``) means noise-free.
    """

    scene_file: str
    snr_grid_db: list
    trials: int = 500
    seed: int = 0
    rank_mode: object = "mdl"
    t_outer: int = 3
    outputs: str | None = None
    workers: int = 1
    qam_order: int = 16

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not len(self.snr_grid_db):
            raise ValueError("SNR grid is empty")
        if self.rank_mode != "mdl":
            self.rank_mode = int(self.rank_mode)


@dataclass
class SweepRow:
    snr_db: float
    param: str
    nmse_mean: float
    nmse_stderr: float
    crlb: float
    trials_ok: int
    trials_failed: int


@dataclass
class SweepResult:
    rows: list[SweepRow]
    diagnostics: list[dict] = field(default_factory=list)

    def row(self, snr_db, param) -> SweepRow:
        for r in self.rows:
            if r.param == param and _same_snr(r.snr_db, snr_db):
                return r
        raise KeyError((snr_db, param))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r.snr_db), r.param, _fmt(r.nmse_mean), _fmt(r.nmse_stderr),
                        _fmt(r.crlb), r.trials_ok, r.trials_failed])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{c: (_json_num(getattr(r, c)) if isinstance(getattr(r, c), float) else getattr(r, c))
                 for c in CSV_COLUMNS} for r in self.rows]
        return json.dumps({"columns": list(CSV_COLUMNS), "rows": rows}, indent=2, sort_keys=True) + "\n"


def _same_snr(a, b) -> bool:
    a = math.inf if a is None else float(a)
    b = math.inf if b is None else float(b)
    return a == b


def _fmt(v) -> str:
    return repr(float(v))


def _json_num(v):
    v = float(v)
    return repr(v) if not math.isfinite(v) else v


def _snr_value(s):
    return math.inf if s is None else float(s)


def run_trial(scene: SceneConfig, cfg: AfdmConfig, snr_db, seed_seq: np.random.SeedSequence,
              rank, t_outer: int, qam_order: int = 16) -> dict:
    """One synthesize/estimate/match cycle; returns per-parameter NMSE or a failure flag."""
    frame_seed, noise_seed = seed_seq.spawn(2)
    frame = gen_qam_frame(qam_order, frame_seed, cfg.n_sub)
    snr = _snr_value(snr_db)
    y, _ = synthesize_tensor(scene, frame, cfg, None if math.isinf(snr) else snr, seed=noise_seed)
    truth = truth_params(scene, cfg)
    try:
        rep = estimate_all(y, frame, cfg, scene, rank=rank, t_outer=t_outer)
    except (CpdError, np.linalg.LinAlgError, ValueError) as exc:
        return {"ok": False, "reason": type(exc).__name__}
    if rep.rank != truth.shape[0]:
        return {"ok": False, "reason": "rank_mismatch", "mdl_rank": rep.mdl_rank}
    est = rep.params()
    perm = match_targets(truth, est)
    est = est[perm]
    out = {"ok": True, "mdl_rank": rep.mdl_rank, "cpd_residual": rep.cpd_residual,
           "iterations": [rep.iterations[i] for i in perm]}
    out["theta"] = nmse(truth[:, 0], est[:, 0])
    out["phi"] = nmse(truth[:, 1], est[:, 1])
    out["tau"] = nmse(truth[:, 2] * cfg.ts, est[:, 2] * cfg.ts)
    out["f_d"] = nmse(truth[:, 3] * cfg.delta_f, est[:, 3] * cfg.delta_f)
    return out


def _trial_job(args):
    scene, cfg, snr_db, entropy, rank, t_outer, qam = args
    return run_trial(scene, cfg, snr_db, np.random.SeedSequence(entropy), rank, t_outer, qam)


def crlb_floor(scene: SceneConfig, cfg: AfdmConfig, snr_db, seed: int = 0,
               qam_order: int = 16) -> dict[str, float]:
    """CRLB-derived NMSE floors (sum of per-target bounds over the truth norm)."""
    if math.isinf(_snr_value(snr_db)):
        return {p: 0.0 for p in SWEEP_PARAMS}
    frame = gen_qam_frame(qam_order, np.random.SeedSequence([seed, 0xC41B]), cfg.n_sub)
    x = synthesize_tensor(scene, frame, cfg)[1]
    rep = compute_crlb(scene, cfg, frame, noise_variance(x, float(snr_db)))
    truths = {"theta": [t.theta for t in scene.targets], "phi": [t.phi for t in scene.targets],
              "tau": [t.tau for t in scene.targets], "f_d": [t.f_d for t in scene.targets]}
    bounds = {"theta": rep.crlb_theta, "phi": rep.crlb_phi, "tau": rep.crlb_tau, "f_d": rep.crlb_fd}
    return {p: float(np.sum(bounds[p]) / np.sum(np.square(truths[p]))) for p in SWEEP_PARAMS}


def run_sweep(plan: ExperimentPlan, scene_data=None) -> SweepResult:
    """Run every (SNR, trial) cell and aggregate one row per (SNR, parameter).

    Trial ``t`` at grid index ``i`` is seeded by ``SeedSequence([seed, i, t])``,
    so results do not depend on ``workers``.
    """
    scene, cfg, _ = scene_data if scene_data is not None else resolve_scene(plan.scene_file)
    rank = plan.rank_mode
    rows, diags = [], []
    for i, snr in enumerate(plan.snr_grid_db):
        jobs = [(scene, cfg, snr, [plan.seed, i, t], rank, plan.t_outer, plan.qam_order)
                for t in range(plan.trials)]
        if plan.workers > 1:
            with ProcessPoolExecutor(plan.workers) as ex:
                results = list(ex.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * plan.workers))))
        else:
            results = [_trial_job(j) for j in jobs]
        ok = [r for r in results if r["ok"]]
        failed = len(results) - len(ok)
        floor = crlb_floor(scene, cfg, snr, plan.seed, plan.qam_order)
        for p in SWEEP_PARAMS:
            vals = np.array([r[p] for r in ok])
            mean = float(vals.mean()) if vals.size else math.nan
            se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
            rows.append(SweepRow(_snr_value(snr), p, mean, se, floor[p], len(ok), failed))
        diags.append({"snr_db": _snr_value(snr), "failed": failed,
                      "reasons": sorted({r.get("reason", "") for r in results if not r["ok"]})})
    result = SweepResult(rows, diags)
    if plan.outputs:
        write_results(result, plan.outputs)
    return result


def write_results(result: SweepResult, prefix, fmt: str | None = None) -> list[Path]:
    """Write ``<prefix>.csv`` and/or ``<prefix>.json``."""
    prefix = Path(prefix)
    out = []
    if fmt in (None, "csv"):
        p = prefix.with_suffix(".csv")
        p.write_text(result.to_csv())
        out.append(p)
    if fmt in (None, "json"):
        p = prefix.with_suffix(".json")
        p.write_text(result.to_json())
        out.append(p)
    return out


__all__ = [
    "SWEEP_PARAMS", "CSV_COLUMNS", "truth_params", "match_targets", "match_scale", "nmse", "resolve_scene",
    "ExperimentPlan", "SweepRow", "SweepResult", "run_trial", "crlb_floor", "run_sweep",
    "write_results",
]
