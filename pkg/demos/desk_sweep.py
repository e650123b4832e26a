"""Small NMSE sweep on the desk scene with the CRLB floor alongside."""

import sys

from afdm_isac.harness import ExperimentPlan, run_sweep

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 50
res = run_sweep(ExperimentPlan("desk", [0, 10, 20, 30], trials=trials, seed=0))
print(f"{'snr':>5s} {'param':>6s} {'nmse':>10s} {'crlb':>10s} {'failed':>6s}")
for r in res.rows:
    print(f"{r.snr_db:5.0f} {r.param:>6s} {r.nmse_mean:10.3e} {r.crlb:10.3e} {r.trials_failed:6d}")
