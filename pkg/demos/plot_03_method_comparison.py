"""
Comparing reduced models on the toy flow
========================================

The experiment driver simulates a small model under a decaying sinusoidal
input, fits every surrogate at reduced order 3, rolls it out on the training
input and reports the relative time-domain error.
"""

import tempfile

from opinf_nse import ExperimentConfig, run_experiment

with tempfile.TemporaryDirectory() as out:
    summary = run_experiment(ExperimentConfig(out=out))

print(f"snapshot rank: {summary.snapshot_rank}")
for res in sorted(summary.results, key=lambda r: r.error):
    tol = "" if res.tol is None else f"  (tol {res.tol:.0e})"
    print(f"{res.method:10s} r={res.order}  error {res.error:.3e}{tol}")

# Plain DMD has no input channel; starting from rest it never moves, so its
# error is exactly one.
