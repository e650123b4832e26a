"""Command-line entry point: ``afdm-isac {simulate,estimate,crlb,sweep,selftest}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .channel import noise_variance, synthesize_tensor
from .crlb import PARAM_NAMES, compute_crlb
from .cpd import CpdError
from .estimators import estimate_all
from .harness import ExperimentPlan, resolve_scene, run_sweep, write_results
from .io import SceneFormatError, load_scene, read_tensor, save_scene, write_tensor
from .waveform import gen_qam_frame

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def frame_for(frame_opts: dict, n_sub: int) -> np.ndarray:
    """Transmit frame described by a scene's ``[frame]`` section."""
    return gen_qam_frame(frame_opts["qam_order"], np.random.SeedSequence([frame_opts["seed"], 0]), n_sub)


def _parse_snr(text: str):
    t = text.strip().lower()
    if t in ("inf", "none", "clean"):
        return None
    return float(t)


def _parse_snr_list(values) -> list:
    out = []
    for v in values:
        out += [_parse_snr(p) for p in v.split(",") if p.strip()]
    return out


def _parse_rank(text: str):
    if text == "mdl":
        return "mdl"
    r = int(text)
    if r < 1:
        raise argparse.ArgumentTypeError("rank must be >= 1 or 'mdl'")
    return r


def _table(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: str | None, suffix: str) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        path = Path(out)
        if not path.suffix:
            path = path.with_suffix(suffix)
        path.write_text(text)
        print(f"wrote {path}", file=sys.stderr)


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def cmd_simulate(args) -> int:
    scene, cfg, fopts = resolve_scene(args.scene)
    if args.seed is not None:
        fopts = dict(fopts, seed=args.seed)
    frame = frame_for(fopts, cfg.n_sub)
    y, _ = synthesize_tensor(scene, frame, cfg, args.snr,
                             seed=np.random.SeedSequence([fopts["seed"], 1]))
    prefix = Path(args.out or "afdm_sim")
    write_tensor(prefix.with_suffix(".cube"), y)
    save_scene(prefix.with_suffix(".truth.scene"), scene, cfg, fopts)
    print(f"wrote {prefix.with_suffix('.cube')} {y.shape} and {prefix.with_suffix('.truth.scene')}",
          file=sys.stderr)
    return EXIT_OK


def estimate_stored(tensor_path, scene_path, rank="mdl", t_outer: int = 3):
    """Run the full estimator on a stored tensor using its truth sidecar."""
    y = read_tensor(tensor_path)
    scene, cfg, fopts = load_scene(scene_path)
    frame = frame_for(fopts, cfg.n_sub)
    return estimate_all(y, frame, cfg, scene, rank=rank, t_outer=t_outer), cfg


def cmd_estimate(args) -> int:
    tensor = Path(args.tensor)
    scene_path = args.scene or str(tensor.with_suffix(".truth.scene"))
    if not tensor.is_file():
        raise FileNotFoundError(f"tensor file not found: {tensor}")
    rep, cfg = estimate_stored(tensor, scene_path, args.rank, args.t_outer)
    rows = []
    for r in range(rep.rank):
        rows.append({"target": r + 1, "theta": _num(rep.theta[r]), "phi": _num(rep.phi[r]),
                     "beta": _num(rep.beta[r]), "nu": _num(rep.nu[r]),
                     "tau": _num(rep.tau[r]), "f_d": _num(rep.f_d[r]),
                     "iterations": int(rep.iterations[r])})
    print(f"rank {rep.rank} (mdl {rep.mdl_rank}), cpd residual {rep.cpd_residual:.3e}", file=sys.stderr)
    fmt = args.format or "csv"
    _emit(_table(rows, fmt), args.out, "." + fmt)
    return EXIT_OK


def cmd_crlb(args) -> int:
    scene, cfg, fopts = resolve_scene(args.scene)
    if args.seed is not None:
        fopts = dict(fopts, seed=args.seed)
    if args.snr is None:
        raise ValueError("crlb needs a finite --snr")
    frame = frame_for(fopts, cfg.n_sub)
    x = synthesize_tensor(scene, frame, cfg)[1]
    rep = compute_crlb(scene, cfg, frame, noise_variance(x, args.snr), split_gamma=args.split_gamma)
    bounds = rep.as_dict()
    rows = [{"target": r + 1, **{p: _num(bounds[p][r]) for p in PARAM_NAMES}}
            for r in range(len(scene.targets))]
    print(f"FIM condition number {rep.condition_number:.3e}", file=sys.stderr)
    fmt = args.format or "csv"
    _emit(_table(rows, fmt), args.out, "." + fmt)
    return EXIT_OK


def cmd_sweep(args) -> int:
    scene_data = resolve_scene(args.scene)
    qam = scene_data[2]["qam_order"]
    plan = ExperimentPlan(args.scene, _parse_snr_list(args.snr), trials=args.trials,
                          seed=args.seed or 0, rank_mode=args.rank, t_outer=args.t_outer,
                          outputs=None, workers=args.workers, qam_order=qam)
    t0 = time.perf_counter()
    result = run_sweep(plan, scene_data)
    for d in result.diagnostics:
        if d["failed"]:
            print(f"snr {d['snr_db']}: {d['failed']} failed trials ({', '.join(d['reasons'])})",
                  file=sys.stderr)
    if args.out:
        for p in write_results(result, args.out, args.format):
            print(f"wrote {p}", file=sys.stderr)
    else:
        sys.stdout.write(result.to_json() if args.format == "json" else result.to_csv())
    print(f"sweep finished in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest(verbose=True) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="afdm-isac",
                                 description="AFDM sensing: simulation, estimation, bounds and sweeps.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, snr=True, many_snr=False):
        p.add_argument("--scene", default="default",
                       help="scene file or built-in name (default, desk)")
        p.add_argument("--seed", type=int, default=None)
        if snr and many_snr:
            p.add_argument("--snr", action="append", default=None,
                           help="SNR grid in dB; comma separated and/or repeated; 'inf' = noise-free")
        elif snr:
            p.add_argument("--snr", type=_parse_snr, default=None, help="SNR in dB ('inf' = noise-free)")
        p.add_argument("--out", default=None, help="output path or prefix")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="result format (sweep with --out writes both when omitted)")

    p = sub.add_parser("simulate", help="write a received tensor and its truth sidecar")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate target parameters from a stored tensor")
    p.add_argument("tensor", help="tensor file written by 'simulate'")
    common(p, snr=False)
    p.set_defaults(scene=None)
    p.add_argument("--rank", type=_parse_rank, default="mdl")
    p.add_argument("--t-outer", type=int, default=3)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("crlb", help="Cramer-Rao bounds for a scene")
    common(p)
    p.add_argument("--split-gamma", action="store_true",
                   help="treat each path gain as two real parameters")
    p.set_defaults(func=cmd_crlb)

    p = sub.add_parser("sweep", help="Monte Carlo NMSE sweep with CRLB overlay")
    common(p, many_snr=True)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--rank", type=_parse_rank, default="mdl")
    p.add_argument("--t-outer", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "command", None) == "sweep" and not args.snr:
        args.snr = ["0,10,20,30"]
    if getattr(args, "trials", 1) < 1:
        ap.error("--trials must be >= 1")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"afdm-isac: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SceneFormatError, ValueError) as exc:
        print(f"afdm-isac: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CpdError as exc:
        print(f"afdm-isac: decomposition failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
