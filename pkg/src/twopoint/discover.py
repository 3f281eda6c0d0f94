"""Numerical discovery of quadratic two-point conservation laws.

For a fixed map and time shift, every candidate law is a point in the
144-dimensional space (W, K).  Demanding that the pointwise residual

    r = d/dt [W_ab P_ab] + d/dx_i [K_iab P_ab] = 0,
    P_ab(x, t) = F_a(x, t) F_b(A x, t + m dt),

vanish at sampled collocation points of an ensemble of source-free
trajectories gives a linear system A v = 0 over v = (W, K).  Laws appear
as the near-nullspace of A: singular values at the time-differencing noise
floor, separated by orders of magnitude from the rest of the spectrum.
Returned candidates are unit Frobenius norm, ranked by singular value, and
post-verified on a held-out trajectory against the matching hand-coded law.

For the identity map the products P_ab are symmetric in (a, b), so the
antisymmetric parts of W and K are exactly unobservable and enlarge the
nullspace with pointwise-trivial directions (zero density, zero flux);
they are genuine if degenerate laws and are kept, since projections onto
the recovered subspace are unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData
from .grid import AffineMap, GridSpec, spectral_wavevectors
from .laws import (
    TwoPointLawSpec,
    law_inversion,
    law_local_energy,
    law_rotation,
    law_translation,
    residual,
    _stack6,
    _pulled6,
)


@dataclass(eq=False)
class Candidate:
    """One recovered law with its diagnostics."""

    law: TwoPointLawSpec
    singular_value: float
    holdout_max_r: float

    @property
    def W(self):
        return self.law.W

    @property
    def K(self):
        return self.law.K

    @property
    def source(self):
        return self.law.source


@dataclass(eq=False)
class DiscoveryResult:
    candidates: list
    singular_values: np.ndarray
    rows: int
    reference_max_r: float

    def basis(self) -> np.ndarray:
        """(n_candidates, 144) orthonormal rows spanning the recovered space."""
        return np.array([c.law.as_vector() for c in self.candidates])

    def projection_of(self, law: TwoPointLawSpec) -> float:
        """Norm of the law's (W, K) projection onto the recovered subspace."""
        if not self.candidates:
            return 0.0
        v = law.as_vector()
        v = v / np.linalg.norm(v)
        basis = self.basis()
        return float(np.linalg.norm(basis @ v))


def matching_reference_law(amap: AffineMap, dt_shift_steps: int,
                           grid: GridSpec):
    """Shipped law for this map, if one exists (used as the holdout yardstick)."""
    a = amap.alpha_matrix
    b = amap.beta_vector
    try:
        if np.array_equal(a, np.eye(3)):
            if np.max(np.abs(b)) == 0.0 and dt_shift_steps == 0:
                return law_local_energy()
            nodes = [bi / h for bi, h in zip(b, grid.spacing)]
            if all(abs(n - round(n)) < 1e-9 for n in nodes):
                return law_translation(
                    grid, tuple(int(round(n)) for n in nodes), dt_shift_steps
                )
        if dt_shift_steps == 0 and np.array_equal(a, -np.eye(3)) and np.max(np.abs(b)) == 0.0:
            return law_inversion()
        if dt_shift_steps == 0 and np.max(np.abs(b)) == 0.0:
            return law_rotation(amap)
    except Exception:
        return None
    return None


def _unpack(v: np.ndarray):
    w = v[:36].reshape(6, 6)
    k = v[36:].reshape(3, 6, 6)
    return w, k


def _rows_for_step(traj, amap, m, n, points, kvecs):
    """Collocation rows at interior step n: [D_t P_ab | grad_i P_ab]."""
    grid = traj.grid
    dt = traj.dt

    def products(i):
        f = _stack6(traj.states[i])
        g = _pulled6(traj.states[i + m], amap)
        return np.einsum("a...,b...->ab...", f, g).reshape(36, *grid.dims)

    p_now = products(n)
    dp = (products(n + 1) - products(n - 1)) / (2.0 * dt)
    ph = np.fft.rfftn(p_now, axes=(-3, -2, -1))
    kx, ky, kz = kvecs
    grad = np.empty((3, 36, *grid.dims))
    grad[0] = np.fft.irfftn(1j * kx * ph, s=grid.dims, axes=(-3, -2, -1))
    grad[1] = np.fft.irfftn(1j * ky * ph, s=grid.dims, axes=(-3, -2, -1))
    grad[2] = np.fft.irfftn(1j * kz * ph, s=grid.dims, axes=(-3, -2, -1))
    dp_flat = dp.reshape(36, -1)[:, points]
    grad_flat = grad.reshape(108, -1)[:, points]
    return np.concatenate([dp_flat.T, grad_flat.T], axis=1)


def discover_laws(
    ensemble,
    amap: AffineMap,
    dt_shift_steps: int = 0,
    svd_rel_tol: float = 1e-6,
    points_per_time: int = 8,
    times_per_traj: int = 3,
    seed: int = 0,
    reference_law: TwoPointLawSpec | None = None,
    min_ensemble: int = 20,
) -> DiscoveryResult:
    """Recover (W, K) candidates for one map from source-free trajectories.

    The last ensemble member is held out of the fit and used to verify each
    candidate: its pointwise residual there must stay within 10x that of
    the matching shipped law (when one exists for this map).  Raises
    InsufficientData for undersized ensembles or rank-deficient sampling.
    """
    ensemble = list(ensemble)
    if len(ensemble) < min_ensemble:
        raise InsufficientData(
            f"need at least {min_ensemble} trajectories, got {len(ensemble)}"
        )
    m = int(dt_shift_steps)
    for traj in ensemble:
        if not traj.source.is_zero:
            raise InsufficientData("discovery ensembles must be source free")
        if len(traj) < m + 3:
            raise InsufficientData("trajectory too short for the requested shift")
    holdout = ensemble[-1]
    fit = ensemble[:-1]
    grid = fit[0].grid
    kvecs = spectral_wavevectors(grid)
    rng = np.random.Generator(np.random.PCG64(seed))
    blocks = []
    for traj in fit:
        interior = np.arange(1, len(traj) - 1 - m)
        take = interior[np.linspace(0, len(interior) - 1, min(times_per_traj, len(interior))).astype(int)]
        points = rng.choice(grid.num_nodes, size=points_per_time, replace=False)
        for n in np.unique(take):
            blocks.append(_rows_for_step(traj, amap, m, int(n), points, kvecs))
    a = np.concatenate(blocks, axis=0)
    if a.shape[0] < 144:
        raise InsufficientData(f"only {a.shape[0]} collocation rows for 144 unknowns")
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    s_full = np.zeros(144)
    s_full[: len(s)] = s
    if s_full[0] == 0.0:
        raise InsufficientData("collocation matrix is identically zero")
    near_null = s_full <= svd_rel_tol * s_full[0]
    if reference_law is None:
        reference_law = matching_reference_law(amap, m, grid)
    ref_max_r = (
        residual(holdout, reference_law).max_r if reference_law is not None else np.nan
    )
    candidates = []
    for idx in np.flatnonzero(near_null)[::-1]:  # smallest singular values first
        w, k = _unpack(vh[idx])
        law = TwoPointLawSpec(
            amap, m, w, k, np.zeros((6, 6)), label=f"discovered-{len(candidates)}"
        )
        hold_r = residual(holdout, law).max_r
        if np.isfinite(ref_max_r) and hold_r > 10.0 * ref_max_r:
            continue
        candidates.append(Candidate(law, float(s_full[idx]), float(hold_r)))
    return DiscoveryResult(
        candidates=candidates,
        singular_values=s_full,
        rows=a.shape[0],
        reference_max_r=float(ref_max_r),
    )
