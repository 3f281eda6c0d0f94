"""Verify the inversion-map balance law on an evolving Maxwell field.

The density rho = B(x).E(-x) + B(-x).E(x) obeys

    d rho/dt + div [ E(x) x E(-x) - B(x) x B(-x) ] = -[B(x).J(-x) + B(-x).J(x)]

for any solution of the Maxwell system.  This script evolves random
band-limited fields with a uniform oscillating current, tracks the global
quantity Q(t), the accumulated current work, and the pointwise residual,
and shows that the defect Q(t) - Q(0) - work stays at the time-stepper's
error level even though Q itself moves by orders of magnitude more.
"""

import numpy as np

from twopoint import (
    GridSpec,
    UniformOscillating,
    law_inversion,
    random_band_limited,
    run_balance,
)

grid = GridSpec.cube(1.0, 32)
initial = random_band_limited(grid, seed=11, kmax=2, amplitude=1.0,
                              mean_b=(0.0, 0.2, 0.1))
current = UniformOscillating(amplitude=(0.05, 0.03, 0.04), omega=2 * np.pi)

dt, nsteps = 1e-3, 3000  # three box-crossing times
report = run_balance(initial, current, dt, nsteps, law_inversion(),
                     analysis_stride=150)

print(f"inversion law on {grid.dims} grid, {nsteps} steps of dt={dt}")
print(f"{'t':>7} {'Q':>14} {'work':>14} {'defect':>12} {'max|r|':>10}")
for i in range(len(report.t)):
    print(f"{report.t[i]:7.3f} {report.Q[i]:14.6e} {report.source_cum[i]:14.6e} "
          f"{report.defect[i]:12.2e} {report.r_max[i]:10.2e}")

rel = report.max_defect / report.norm_scale
print()
print(f"Q moved by {report.max_q_drift:.3e} while the defect stayed at {rel:.2e}")
print("of the field energy scale: the current work term balances the books.")

report.to_csv("inversion_balance.csv")
print("wrote inversion_balance.csv")
