"""
Error decay with the number of stages
=====================================

A small Monte Carlo sweep over T with the total measurement count held
fixed, followed by the same sweep with a fixed number of rows per stage.
Each halving of the dither scale buys roughly one bit of accuracy.
"""

from adaptive_onebit.experiments import ExperimentConfig, fit_log2_slope, run_error_vs_T, summarize

base = dict(n=16, N=24, s=14, T_grid=(1, 2, 3, 4, 5, 6), m=3000, trials=10, master_seed=1)

for fixed_q in (False, True):
    cfg = ExperimentConfig(**base, fixed_block_size=fixed_q)
    rows = summarize(run_error_vs_T(cfg))
    label = "fixed rows per stage" if fixed_q else "fixed total m"
    print(label)
    for row in rows:
        print(f"  T={row.T}  m={row.m:5d}  median error {row.median_norm_error:.3e}")
    slope = fit_log2_slope([r.T for r in rows], [r.median_norm_error for r in rows])
    print(f"  log2 slope {slope:.2f} bits per stage\n")
