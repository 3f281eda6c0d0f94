"""Rediscover two-point conservation laws from trajectory data alone.

For a fixed point map, every quadratic law is a vector of coefficients
(W, K).  Sampling the balance residual at collocation points of many short
source-free runs gives a linear system whose near-nullspace IS the space
of conservation laws.  The singular spectrum separates cleanly: law
directions sit at the time differencing noise floor, everything else
orders of magnitude above.
"""

from twopoint import (
    AffineMap,
    GridSpec,
    ZeroCurrent,
    discover_laws,
    evolve,
    law_inversion,
    law_local_energy,
    random_band_limited,
)

grid = GridSpec.cube(1.0, 16)
ensemble = [
    evolve(random_band_limited(grid, seed=100 + i, kmax=2), ZeroCurrent(), 1.5e-5, 4)
    for i in range(24)
]
print(f"ensemble: {len(ensemble)} source-free trajectories on {grid.dims}")

for name, amap, known in (
    ("identity", AffineMap.identity(), law_local_energy()),
    ("inversion", AffineMap.inversion(), law_inversion()),
):
    result = discover_laws(ensemble, amap, seed=7)
    s = result.singular_values
    kept = s[s <= 1e-6 * s[0]]
    print(f"\nmap = {name}")
    print(f"  nullspace dimension : {len(result.candidates)}")
    print(f"  sigma gap           : kept <= {kept.max():.2e}, "
          f"next = {s[s > 1e-6 * s[0]].min():.2e} (of sigma_max {s[0]:.2e})")
    print(f"  projection of the hand-coded {known.label} law: "
          f"{result.projection_of(known):.6f}")
    worst = max(c.holdout_max_r for c in result.candidates)
    print(f"  held-out max residual of candidates: {worst:.2e} "
          f"(reference {result.reference_max_r:.2e})")

print("\nBoth nullspaces are larger than the single hand-coded law.  For the")
print("identity map the extra directions are degenerate (antisymmetric W or K")
print("give identically zero density and flux).  For the inversion map they")
print("are genuine: besides the symmetrized law above there is a companion")
print("with rho = E.E~ - B.B~, plus six antisymmetric-W laws whose densities")
print("are odd under x -> -x, so their global charge vanishes identically")
print("while the pointwise balance still holds.")
