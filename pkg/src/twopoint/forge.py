"""Solution-dependent nonlocal invariants for 1D first-order-in-time PDEs.

Given a solution f of df/dt + O_x f = 0 on a periodic interval and a finite
set of sample points x_i, the matrix M[k][i] = (d^k f / dt^k)(x_i, 0) of
time derivatives up to order N has a (numerical) nullspace; each null
vector alpha defines g(t) = sum_i alpha_i f(x_i, t) whose first N time
derivatives vanish at t = 0, so g drifts like t^(N+1).  For linear dynamics
confined to few Fourier modes the truncated construction is already exact.

Time derivatives are measured, not derived: short high-resolution
evolutions around t = 0 are centrally differenced on a 7-point stencil and
Richardson extrapolated, which treats nonlinear operators and linear ones
identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Diverged, StepTooLarge

_PDE_KINDS = ("advection", "burgers", "kdv")

# 7-point central difference stencils for d^k/dt^k and their leading error
# orders; Richardson over (tau, tau/2) doubles down on these.
_STENCILS = {
    1: (np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60]), 6),
    2: (np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90]), 6),
    3: (np.array([1 / 8, -1.0, 13 / 8, 0.0, -13 / 8, 1.0, -1 / 8]), 4),
    4: (np.array([-1 / 6, 2.0, -13 / 2, 28 / 3, -13 / 2, 2.0, -1 / 6]), 4),
    5: (np.array([-1 / 2, 2.0, -5 / 2, 0.0, 5 / 2, -2.0, 1 / 2]), 2),
    6: (np.array([1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0]), 2),
}

MAX_ORDER = 6


@dataclass(frozen=True)
class Pde1D:
    """Periodic 1D PDE: advection (c), viscous Burgers (nu), or KdV."""

    kind: str
    length: float = 2.0 * np.pi
    n: int = 128
    c: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        if self.kind not in _PDE_KINDS:
            raise ValueError(f"unknown pde kind {self.kind!r}")
        if self.n < 32:
            raise ValueError("resolution must be >= 32")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ValueError("length must be positive")
        if not (np.isfinite(self.c) and np.isfinite(self.nu)) or self.nu < 0:
            raise ValueError("parameters must be finite with nu >= 0")

    @property
    def dx(self) -> float:
        return self.length / self.n

    def nodes(self) -> np.ndarray:
        return self.dx * np.arange(self.n)

    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.rfftfreq(self.n, d=self.dx)


def _rhs(pde: Pde1D, f: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Spectral right-hand side, conservative forms so the mean is exact."""
    fh = np.fft.rfft(f)
    if pde.kind == "advection":
        return np.fft.irfft(-1j * k * pde.c * fh, n=pde.n)
    if pde.kind == "burgers":
        flux_h = np.fft.rfft(0.5 * f * f)
        out = np.fft.irfft(-1j * k * flux_h, n=pde.n)
        if pde.nu > 0.0:
            out += np.fft.irfft(-pde.nu * k * k * fh, n=pde.n)
        return out
    # kdv: df/dt + 6 f f_x + f_xxx = 0
    flux_h = np.fft.rfft(3.0 * f * f)
    return np.fft.irfft(-1j * k * flux_h + 1j * k**3 * fh, n=pde.n)


def suggested_max_dt(pde: Pde1D, f0: np.ndarray) -> float:
    """RK4 stability-based step bound (documented constants).

    Advective spectral eigenvalues reach |c| k_max, diffusive nu k_max^2,
    dispersive k_max^3; the RK4 stability radius is ~2.8 on both axes and
    a 0.8 safety factor is applied.
    """
    kmax = np.pi / pde.dx
    speed = abs(pde.c) if pde.kind == "advection" else max(np.max(np.abs(f0)), 1e-12)
    if pde.kind == "kdv":
        speed = 6.0 * max(np.max(np.abs(f0)), 1e-12)
        limit = 2.8 / (speed * kmax + kmax**3)
    elif pde.kind == "burgers" and pde.nu > 0.0:
        limit = 2.8 / (speed * kmax + pde.nu * kmax**2)
    else:
        limit = 2.8 / (speed * kmax)
    return 0.8 * limit


def _rk4_step(pde: Pde1D, f: np.ndarray, dt: float, k: np.ndarray) -> np.ndarray:
    k1 = _rhs(pde, f, k)
    k2 = _rhs(pde, f + 0.5 * dt * k1, k)
    k3 = _rhs(pde, f + 0.5 * dt * k2, k)
    k4 = _rhs(pde, f + dt * k3, k)
    return f + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def evolve_1d(pde: Pde1D, f0, dt: float, nsteps: int):
    """RK4 + spectral derivatives; returns (times, series[nsteps+1, n]).

    Raises StepTooLarge above the documented stability bound and Diverged
    if the solution grows past 1e6 times its initial amplitude.
    """
    f0 = np.asarray(f0, dtype=float)
    if f0.shape != (pde.n,):
        raise ValueError(f"f0 must have shape ({pde.n},)")
    limit = suggested_max_dt(pde, f0)
    if abs(dt) > limit * (1.0 + 1e-12):
        raise StepTooLarge(f"|dt|={abs(dt)} exceeds suggested bound {limit}")
    k = pde.wavenumbers()
    scale = max(np.max(np.abs(f0)), 1.0)
    series = np.empty((nsteps + 1, pde.n))
    series[0] = f0
    f = f0
    for i in range(1, nsteps + 1):
        f = _rk4_step(pde, f, dt, k)
        if not np.isfinite(f).all() or np.max(np.abs(f)) > 1e6 * scale:
            raise Diverged(f"solution blew up at step {i}")
        series[i] = f
    times = dt * np.arange(nsteps + 1)
    return times, series


def sample_values(pde: Pde1D, f: np.ndarray, points) -> np.ndarray:
    """Evaluate the trigonometric interpolant of f at arbitrary points."""
    points = np.asarray(points, dtype=float)
    fh = np.fft.rfft(f) / pde.n
    k = pde.wavenumbers()
    out = np.empty(points.shape)
    for i, x in enumerate(points.ravel()):
        phases = np.exp(1j * k * x)
        # rfft halves: double every mode except DC and (even n) Nyquist
        weights = np.full(len(k), 2.0)
        weights[0] = 1.0
        if pde.n % 2 == 0:
            weights[-1] = 1.0
        out.ravel()[i] = np.real(np.sum(weights * fh * phases))
    return out


@dataclass(eq=False)
class PointSampleSet:
    """Distinct sample locations and the field values there."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.points.ndim != 1 or len(self.points) < 2:
            raise ValueError("need at least two sample points")
        if len(np.unique(self.points)) != len(self.points):
            raise ValueError("sample points must be distinct")
        if self.points.shape != self.values.shape:
            raise ValueError("points and values must align")


@dataclass(eq=False)
class MomentMatrix:
    """matrix[k-1][i] = (d^k f/dt^k)(x_i) at t = 0, k = 1..order."""

    matrix: np.ndarray
    points: np.ndarray
    order: int
    dt_probe: float
    extrapolation_suspect: bool = False

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.matrix.shape != (self.order, len(self.points)):
            raise ValueError("moment matrix shape mismatch")
        if not np.isfinite(self.matrix).all():
            raise ValueError("moment matrix must be finite")


def time_derivative_samples(
    pde: Pde1D, f0, points, n_order: int, dt_probe: float = 0.01
) -> MomentMatrix:
    """Richardson-extrapolated central differencing of short evolutions.

    f is advanced to the 13 times j*dt_probe/2, j = -6..6 (backward probes
    use a negative RK4 step; for diffusive operators the anti-diffusive
    amplification over these few fine steps is harmless at the probe sizes
    used here).  Each derivative order k = 1..n_order is evaluated on the
    7-point stencil at spacings dt_probe and dt_probe/2 and extrapolated at
    its known leading order.  No symbolic differentiation anywhere.
    """
    if not 1 <= n_order <= MAX_ORDER:
        raise ValueError(f"n_order must be in 1..{MAX_ORDER}")
    f0 = np.asarray(f0, dtype=float)
    points = np.asarray(points, dtype=float)
    half = dt_probe / 2.0
    k = pde.wavenumbers()
    ladder = {0: f0}
    fwd = bwd = f0
    scale = max(np.max(np.abs(f0)), 1.0)
    for j in range(1, 7):
        fwd = _rk4_step(pde, fwd, half, k)
        bwd = _rk4_step(pde, bwd, -half, k)
        for f in (fwd, bwd):
            if not np.isfinite(f).all() or np.max(np.abs(f)) > 1e6 * scale:
                raise Diverged("probe evolution blew up; reduce dt_probe")
        ladder[j] = fwd
        ladder[-j] = bwd
    samples = np.array([sample_values(pde, ladder[j], points) for j in range(-6, 7)])
    amp = max(np.max(np.abs(samples)), 1e-300)
    rows = np.empty((n_order, len(points)))
    suspect = False
    for order in range(1, n_order + 1):
        coeffs, p = _STENCILS[order]
        # elementwise multiply-sum keeps each point's column arithmetic
        # independent of the others (bit-level permutation equivariance)
        coarse = (coeffs[:, None] * samples[::2]).sum(axis=0) / dt_probe**order
        fine = (coeffs[:, None] * samples[3:10]).sum(axis=0) / half**order
        rows[order - 1] = (2.0**p * fine - coarse) / (2.0**p - 1.0)
        sig = max(np.max(np.abs(fine)), np.max(np.abs(coarse)))
        noise_floor = 64.0 * np.finfo(float).eps * amp * np.sum(np.abs(coeffs)) / half**order
        if sig > 10.0 * noise_floor and np.max(np.abs(fine - coarse)) > 0.25 * sig:
            suspect = True
    return MomentMatrix(rows, points, n_order, dt_probe, suspect)


@dataclass(eq=False)
class InvariantCoefficients:
    """Orthonormal nullspace basis of a moment matrix."""

    alphas: np.ndarray  # (n_invariants, P), unit rows
    points: np.ndarray
    order: int
    tol: float

    def __len__(self):
        return len(self.alphas)


def nullspace_invariants(m: MomentMatrix, tol: float = 1e-8) -> InvariantCoefficients:
    """Right singular vectors with sigma <= tol * sigma_max.

    Rows are equilibrated to unit max-magnitude first (the kernel is
    unchanged, but high-order rows stop drowning the relative accuracy of
    low-order ones), so the tolerance and the reported numerical rank refer
    to the equilibrated matrix.  The basis size equals P minus that rank,
    exactly.  Points are sorted internally before the decomposition and the
    coefficients mapped back, so reordering the input points permutes the
    output entries bit for bit.
    """
    p = len(m.points)
    perm = np.argsort(m.points, kind="stable")
    sorted_matrix = np.ascontiguousarray(m.matrix[:, perm])
    row_scale = np.max(np.abs(sorted_matrix), axis=1, keepdims=True)
    smax = float(np.max(row_scale)) if sorted_matrix.size else 0.0
    if smax == 0.0:
        alphas_sorted = np.eye(p)
    else:
        scaled = sorted_matrix / np.where(row_scale == 0.0, 1.0, row_scale)
        _, s, vh = np.linalg.svd(scaled, full_matrices=True)
        s_full = np.zeros(p)
        s_full[: len(s)] = s
        keep = s_full <= tol * s_full[0]
        alphas_sorted = vh[keep]
    inv = np.empty_like(perm)
    inv[perm] = np.arange(p)
    return InvariantCoefficients(alphas_sorted[:, inv], m.points, m.order, tol)


@dataclass(eq=False)
class DriftResult:
    """|g(t) - g(0)| along an evolution, with a fitted early-time exponent."""

    times: np.ndarray
    values: np.ndarray
    drift: np.ndarray
    exponent: float


def verify_invariant_drift(
    pde: Pde1D,
    f0,
    coeffs: InvariantCoefficients,
    horizon: float,
    nsamples: int = 64,
    fit_window=None,
    drift_floor: float = 1e-12,
):
    """Measure g(t) = sum_i alpha_i f(x_i, t) for every basis vector.

    Returns a list of DriftResult aligned with coeffs.alphas.  The exponent
    is the log-log least-squares slope of the drift over fit_window
    (default [horizon/20, horizon/2]), restricted to samples above
    drift_floor; NaN when fewer than three samples qualify (e.g. exact
    invariants sitting at the noise floor).
    """
    f0 = np.asarray(f0, dtype=float)
    dt_max = suggested_max_dt(pde, f0)
    nsteps = max(int(np.ceil(horizon / dt_max)), nsamples)
    per_sample = max(1, int(np.ceil(nsteps / nsamples)))
    nsteps = per_sample * nsamples
    dt = horizon / nsteps
    _, series = evolve_1d(pde, f0, dt, nsteps)
    idx = np.arange(0, nsteps + 1, per_sample)
    times = dt * idx
    sampled = np.array([sample_values(pde, series[i], coeffs.points) for i in idx])
    lo, hi = fit_window if fit_window is not None else (horizon / 20.0, horizon / 2.0)
    out = []
    for alpha in coeffs.alphas:
        g = sampled @ alpha
        drift = np.abs(g - g[0])
        mask = (times >= lo) & (times <= hi) & (drift > drift_floor)
        if mask.sum() >= 3:
            slope = np.polyfit(np.log(times[mask]), np.log(drift[mask]), 1)[0]
        else:
            slope = float("nan")
        out.append(DriftResult(times, g, drift, float(slope)))
    return out
