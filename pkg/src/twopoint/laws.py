"""Quadratic two-point conservation laws and their balance verification.

A law couples the stacked field F = (E, B) at x to its value at a mapped
point (and possibly a later time) through constant tensors:

    density   rho(x)  = W_ab   F_a(x) F_b(A x, t + m dt)
    flux      J_i(x)  = K_iab  F_a(x) F_b(A x, t + m dt)
    source    S(x)    = G_ab [ F_a(x) Js_b(A x, t+m dt) + Js_a(x) F_b(A x, t+m dt) ]

where Js is the driving current copied into both slots of a stacked
6-vector, so the block position inside G selects whether J couples to E or
to B.  Every law is normalized to the single balance form

    d rho / dt + div J = S,

and the pointwise residual is r = D_t rho + div J - S with a centered
2nd-order D_t on the stored trajectory.  The global defect is
D(t) = Q(t) - Q(0) - integral of the source power, which vanishes for an
exact law.  Fluxes and sources of the shipped laws therefore carry a fixed
overall sign relative to forms written with the divergence on the left.

Shipped laws (unit normalization, no extra factors):

    local energy   rho = E.E + B.B              J = 2 E x B
    inversion      rho = B.E~ + B~.E            J = E x E~ - B x B~
    rotation R     rho = E.R'E~ + B.R'B~        J = E x (R'B~) + (R'E~) x B
    translation    rho = E.E~ + B.B~            J = E x B~ + E~ x B

(R' = R^T, the inverse rotation applied to the components of the field
evaluated at the rotated point)

with F~ the field at the mapped (and time-shifted) point.  Translation at
zero shift and rotation at R = I reduce to the local energy law exactly,
tensor for tensor.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GridMismatch, HistoryUnderflow, NotARotation
from .grid import (
    SPECTRAL,
    AffineMap,
    FieldState,
    GridSpec,
    ScalarField,
    _pull_array,
    divergence,
    volume_integral,
)
from .maxwell import (
    CurrentSpec,
    SpectralEngine,
    Trajectory,
    UniformOscillating,
    YeeEngine,
    _check_dt,
)

_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_i, _k, _j] = -1.0


def _frozen(a: np.ndarray, shape) -> np.ndarray:
    out = np.array(a, dtype=float).reshape(shape)
    if not np.all(np.isfinite(out)):
        raise ValueError("law tensors must be finite")
    out.flags.writeable = False
    return out


@dataclass(eq=False)
class TwoPointLawSpec:
    """One candidate balance law: (map, time shift, W, K, source tensor)."""

    map: AffineMap
    time_shift_steps: int
    W: np.ndarray
    K: np.ndarray
    source: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        self.time_shift_steps = int(self.time_shift_steps)
        if self.time_shift_steps < 0:
            raise ValueError("time shift must be a non-negative step count")
        self.W = _frozen(self.W, (6, 6))
        self.K = _frozen(self.K, (3, 6, 6))
        self.source = _frozen(self.source, (6, 6))

    def is_involutive(self) -> bool:
        a = self.map.alpha_matrix
        return bool(
            np.allclose(a @ a, np.eye(3), atol=1e-12)
            and np.allclose((np.eye(3) + a) @ self.map.beta_vector, 0.0, atol=1e-12)
        )

    def swap_symmetry_defect(self) -> float:
        """Max |W - W^T|; zero for densities symmetric under x <-> A x.

        Only meaningful as an invariant when the map is an involution and
        the time shift vanishes, where the exchange is a pointwise statement.
        """
        return float(np.max(np.abs(self.W - self.W.T)))

    def as_vector(self) -> np.ndarray:
        """(W, K) flattened to the 144-vector used by discovery projections."""
        return np.concatenate([self.W.ravel(), self.K.ravel()])


# ---------------------------------------------------------------------------
# Shipped laws
# ---------------------------------------------------------------------------


def _symmetrized_poynting_k() -> np.ndarray:
    # J_i = eps_ijk [ E_j(x) B_k(~) + E_j(~) B_k(x) ]
    k = np.zeros((3, 6, 6))
    k[:, :3, 3:] = _LEVI
    k[:, 3:, :3] = np.transpose(_LEVI, (0, 2, 1))
    return k


def law_local_energy() -> TwoPointLawSpec:
    """d/dt (E.E + B.B) + div(2 E x B) = -2 J.E."""
    g = np.zeros((6, 6))
    g[:3, :3] = -np.eye(3)
    return TwoPointLawSpec(
        AffineMap.identity(), 0, np.eye(6), _symmetrized_poynting_k(), g,
        label="local-energy",
    )


def law_inversion() -> TwoPointLawSpec:
    """Two-point law of the inversion map x -> -x.

    rho = B(x).E(-x) + B(-x).E(x), flux E(x) x E(-x) - B(x) x B(-x),
    source -[B(x).J(-x) + B(-x).J(x)].
    """
    w = np.zeros((6, 6))
    w[:3, 3:] = np.eye(3)
    w[3:, :3] = np.eye(3)
    k = np.zeros((3, 6, 6))
    k[:, :3, :3] = _LEVI
    k[:, 3:, 3:] = -_LEVI
    g = np.zeros((6, 6))
    g[3:, 3:] = -np.eye(3)
    return TwoPointLawSpec(AffineMap.inversion(), 0, w, k, g, label="inversion")


def law_rotation(rotation: AffineMap) -> TwoPointLawSpec:
    """Two-point law of a proper rotation map x -> R x.

    The field evaluated at the rotated point must have its components
    rotated back for the pair to satisfy the same field equations, so the
    density is rho = E(x).R^T E(Rx) + B(x).R^T B(Rx) with flux
    E(x) x R^T B(Rx) + R^T E(Rx) x B(x); pairing the map R with the
    component matrix R itself closes only for R^2 = I.  The cross-product
    identity behind the flux needs det R = +1, so improper maps are
    rejected.
    """
    r = rotation.alpha_matrix
    if np.max(np.abs(rotation.beta_vector)) > 0.0:
        raise NotARotation("rotation law requires beta = 0")
    if not np.allclose(r.T @ r, np.eye(3), atol=1e-12):
        raise NotARotation("alpha is not orthogonal")
    if np.linalg.det(r) < 0.0:
        raise NotARotation("improper rotation (det = -1) has no two-point law here")
    rt = r.T
    w = np.zeros((6, 6))
    w[:3, :3] = rt
    w[3:, 3:] = rt
    k = np.zeros((3, 6, 6))
    k[:, :3, 3:] = np.einsum("ijk,kl->ijl", _LEVI, rt)
    k[:, 3:, :3] = np.einsum("ijk,jl->ikl", _LEVI, rt)
    g = np.zeros((6, 6))
    g[:3, :3] = -rt
    return TwoPointLawSpec(rotation, 0, w, k, g, label="rotation")


def law_translation(grid: GridSpec, nodes, dt_steps: int = 0) -> TwoPointLawSpec:
    """Two-point law pairing (x, t) with (x + dx, t + m dt), dx whole nodes.

    At nodes = (0,0,0) and m = 0 this is the local energy law, tensor for
    tensor (the zero-displacement limit).
    """
    g = np.zeros((6, 6))
    g[:3, :3] = -np.eye(3)
    amap = AffineMap.node_translation(grid, nodes)
    label = "translation-{}-{}-{}-m{}".format(*(int(n) for n in nodes), int(dt_steps))
    return TwoPointLawSpec(
        amap, dt_steps, np.eye(6), _symmetrized_poynting_k(), g, label=label
    )


# ---------------------------------------------------------------------------
# Pointwise evaluation
# ---------------------------------------------------------------------------


def _stack6(state: FieldState) -> np.ndarray:
    return np.concatenate([state.E.data, state.B.data], axis=0)


def _pulled6(state: FieldState, amap: AffineMap) -> np.ndarray:
    return _pull_array(_stack6(state), state.grid, amap)


def _check_pair(law, state_now, state_shifted):
    if state_now.grid != state_shifted.grid:
        raise GridMismatch("paired states live on different grids")


def density(law: TwoPointLawSpec, state_now: FieldState,
            state_shifted: Optional[FieldState] = None) -> ScalarField:
    """rho(x) = W_ab F_a(x) F_b(A x) with F_b drawn from the shifted state."""
    state_shifted = state_now if state_shifted is None else state_shifted
    _check_pair(law, state_now, state_shifted)
    f = _stack6(state_now)
    g = _pulled6(state_shifted, law.map)
    rho = np.einsum("ab,a...,b...->...", law.W, f, g)
    return ScalarField(state_now.grid, rho, copy=False)


def flux(law: TwoPointLawSpec, state_now: FieldState,
         state_shifted: Optional[FieldState] = None):
    """J_i(x) = K_iab F_a(x) F_b(A x)."""
    from .grid import VectorField

    state_shifted = state_now if state_shifted is None else state_shifted
    _check_pair(law, state_now, state_shifted)
    f = _stack6(state_now)
    g = _pulled6(state_shifted, law.map)
    j = np.einsum("iab,a...,b...->i...", law.K, f, g)
    return VectorField(state_now.grid, j, copy=False)


def source_power(law: TwoPointLawSpec, state_now: FieldState,
                 state_shifted: Optional[FieldState], j: CurrentSpec) -> ScalarField:
    """S(x) with J sampled from its closed form at both points and times."""
    state_shifted = state_now if state_shifted is None else state_shifted
    _check_pair(law, state_now, state_shifted)
    grid = state_now.grid
    if j.is_zero:
        return ScalarField(grid, np.zeros(grid.dims), copy=False)
    f = _stack6(state_now)
    g = _pulled6(state_shifted, law.map)
    jn = j.spatial_profile(grid) * j.time_factor(state_now.t)
    jm = j.profile_at(grid, law.map) * j.time_factor(state_shifted.t)
    jn6 = np.concatenate([jn, jn], axis=0)
    jm6 = np.concatenate([jm, jm], axis=0)
    s = np.einsum("ab,a...,b...->...", law.source, f, jm6)
    s += np.einsum("ab,a...,b...->...", law.source, jn6, g)
    return ScalarField(grid, s, copy=False)


# ---------------------------------------------------------------------------
# Balance bookkeeping
# ---------------------------------------------------------------------------


class HistoryBuffer:
    """Ring of the most recent stepped values, keyed by step index."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._items: OrderedDict = OrderedDict()

    def push(self, step: int, value):
        self._items[step] = value
        while len(self._items) > self.capacity:
            self._items.popitem(last=False)

    def get(self, step: int):
        try:
            return self._items[step]
        except KeyError:
            raise HistoryUnderflow(
                f"step {step} not in the retained window of {self.capacity}"
            ) from None

    def __contains__(self, step):
        return step in self._items

    def __len__(self):
        return len(self._items)


@dataclass(eq=False)
class BalanceReport:
    """Time series of one law's global balance on one trajectory.

    defect(t) = Q(t) - Q(0) - cumulative source power; r_l2 / r_max are norms
    of the pointwise residual D_t rho + div J - S (NaN at the window edges
    where the centered difference is unavailable).
    """

    label: str
    t: np.ndarray
    Q: np.ndarray
    source_cum: np.ndarray
    defect: np.ndarray
    r_l2: np.ndarray
    r_max: np.ndarray
    norm_scale: float

    @property
    def max_defect(self) -> float:
        return float(np.max(np.abs(self.defect)))

    @property
    def max_q_drift(self) -> float:
        return float(np.max(np.abs(self.Q - self.Q[0])))

    @property
    def max_r(self) -> float:
        vals = self.r_max[np.isfinite(self.r_max)]
        return float(np.max(vals)) if len(vals) else float("nan")

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            f.write("# schema=1\n")
            f.write("t,Q,source_cum,defect,r_l2,r_max\n")
            for row in zip(self.t, self.Q, self.source_cum, self.defect,
                           self.r_l2, self.r_max):
                f.write(",".join(repr(float(v)) for v in row) + "\n")


def cumulative_simpson(y: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative integral of evenly spaced samples, 4th order throughout:
    composite Simpson at even indices, a cubic (Adams-Moulton style)
    one-interval correction at odd ones."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    out = np.zeros(n)
    if n < 2:
        return out
    if n == 2:
        out[1] = 0.5 * dx * (y[0] + y[1])
        return out
    inc = (dx / 3.0) * (y[0:-2:2] + 4.0 * y[1:-1:2] + y[2::2])
    out[2::2] = np.cumsum(inc)
    if n >= 4:
        out[1] = (dx / 24.0) * (9.0 * y[0] + 19.0 * y[1] - 5.0 * y[2] + y[3])
    else:
        out[1] = (dx / 12.0) * (5.0 * y[0] + 8.0 * y[1] - y[2])
    if n > 4:
        out[5::2] = out[4:-1:2] + (dx / 24.0) * (
            y[2:-3:2] - 5.0 * y[3:-2:2] + 19.0 * y[4:-1:2] + 9.0 * y[5::2]
        )
    if n > 3:
        out[3] = out[2] + (dx / 24.0) * (y[0] - 5.0 * y[1] + 19.0 * y[2] + 9.0 * y[3])
    return out


def _analysis_row(law, j, dt, get_state, a, nsteps):
    """Q and residual norms of one law at analysis step a."""
    m = law.time_shift_steps
    s_now = get_state(a)
    s_sh = get_state(a + m)
    q = volume_integral(density(law, s_now, s_sh))
    if 1 <= a <= nsteps - m - 1:
        rho_next = density(law, get_state(a + 1), get_state(a + m + 1)).data
        rho_prev = density(law, get_state(a - 1), get_state(a + m - 1)).data
        r = (rho_next - rho_prev) / (2.0 * dt)
        r = r + divergence(flux(law, s_now, s_sh), SPECTRAL).data
        if not j.is_zero:
            r = r - source_power(law, s_now, s_sh, j).data
        grid = s_now.grid
        r_l2 = float(np.sqrt(volume_integral(ScalarField(grid, r * r, copy=False))))
        r_max = float(np.max(np.abs(r)))
    else:
        r_l2 = float("nan")
        r_max = float("nan")
    return q, r_l2, r_max


def _state_means(state: FieldState) -> np.ndarray:
    """Volume integral of each stacked component."""
    cv = state.grid.cell_volume
    return np.array(
        [np.sum(c) * cv for c in state.E.data] + [np.sum(c) * cv for c in state.B.data]
    )


def _uniform_work_series(law, j: UniformOscillating, mean6, dt, t0, nsteps):
    """Per-step source power for a uniform current, from the k=0 modes.

    A uniform J couples only to the volume means of the fields:
    integral S dV = G_ab [ M_a(t) Js_b(t~) + Js_a(t) M~_b(t~) ], and the
    mapped mean equals the plain mean for the volume-preserving maps used
    here.
    """
    m = law.time_shift_steps
    n_w = nsteps - m + 1
    t_now = t0 + dt * np.arange(n_w)
    amp = np.asarray(j.amplitude)

    def j6(tvals):
        j3 = np.outer(np.sin(j.omega * tvals + j.phase), amp)
        return np.concatenate([j3, j3], axis=1)

    m_now = mean6[:n_w]
    m_sh = mean6[m : m + n_w]
    w = np.einsum("ab,na,nb->n", law.source, m_now, j6(t_now + m * dt))
    w += np.einsum("ab,na,nb->n", law.source, j6(t_now), m_sh)
    return w


def _work_series_from_states(law, j, dt, get_state, nsteps):
    m = law.time_shift_steps
    n_w = nsteps - m + 1
    w = np.empty(n_w)
    for n in range(n_w):
        w[n] = volume_integral(source_power(law, get_state(n), get_state(n + m), j))
    return w


def _assemble(law, j, dt, t0, nsteps, analysis, get_state, w) -> BalanceReport:
    rows = [_analysis_row(law, j, dt, get_state, a, nsteps) for a in analysis]
    q = np.array([r[0] for r in rows])
    r_l2 = np.array([r[1] for r in rows])
    r_max = np.array([r[2] for r in rows])
    cum = cumulative_simpson(w, dt)
    idx = np.asarray(analysis)
    source_cum = cum[idx]
    defect = q - q[0] - source_cum
    s0 = get_state(0)
    scale = float(
        np.sum(s0.E.data**2 + s0.B.data**2) * s0.grid.cell_volume
    )
    return BalanceReport(
        label=law.label,
        t=t0 + dt * idx,
        Q=q,
        source_cum=source_cum,
        defect=defect,
        r_l2=r_l2,
        r_max=r_max,
        norm_scale=scale,
    )


def residual(traj: Trajectory, law: TwoPointLawSpec,
             analysis_stride: int = 1) -> BalanceReport:
    """Balance report of one law over a stored trajectory.

    The time derivative is a centered 2nd-order difference of the stored
    states, so the report measures the law against the trajectory the
    stepper actually produced.
    """
    nsteps = len(traj) - 1
    m = law.time_shift_steps
    if nsteps < m + 2:
        raise HistoryUnderflow(
            f"need at least {m + 3} states for shift {m}, have {len(traj)}"
        )
    last_q = nsteps - m
    analysis = sorted(set(range(0, last_q + 1, analysis_stride)) | {last_q})
    get_state = traj.states.__getitem__
    j = traj.source
    if j.is_zero:
        w = np.zeros(last_q + 1)
    elif isinstance(j, UniformOscillating):
        mean6 = np.array([_state_means(s) for s in traj.states])
        w = _uniform_work_series(law, j, mean6, traj.dt, traj.states[0].t, nsteps)
    else:
        w = _work_series_from_states(law, j, traj.dt, get_state, nsteps)
    return _assemble(law, j, traj.dt, traj.states[0].t, nsteps, analysis, get_state, w)


# ---------------------------------------------------------------------------
# Streaming verification (long runs without storing the trajectory)
# ---------------------------------------------------------------------------


def run_balance(
    initial: FieldState,
    j: CurrentSpec,
    dt: float,
    nsteps: int,
    laws,
    stepper: str = "spectral",
    analysis_stride: int = 1,
):
    """Evolve and verify several laws in one pass, storing only a window.

    Q, the residual norms, and (for non-uniform currents) the source power
    are evaluated at `analysis_stride` multiples; for uniform currents the
    source power is accumulated every step from the k = 0 field means, so
    the Simpson quadrature of the work integral keeps the stepper's order.
    """
    single = isinstance(laws, TwoPointLawSpec)
    laws = [laws] if single else list(laws)
    if not laws:
        raise ValueError("need at least one law")
    grid = initial.grid
    _check_dt(grid, dt, stepper)
    m_max = max(law.time_shift_steps for law in laws)
    if nsteps < m_max + 2:
        raise HistoryUnderflow(f"nsteps={nsteps} too short for shift {m_max}")
    last_q = nsteps - m_max
    analysis = sorted(set(range(0, last_q + 1, analysis_stride)) | {last_q})
    t0 = initial.t

    uniform_work = j.is_zero or isinstance(j, UniformOscillating)
    mean6 = np.zeros((nsteps + 1, 6))
    w_phys = {
        id(law): np.zeros(nsteps - law.time_shift_steps + 1) for law in laws
    } if not uniform_work else None

    window = HistoryBuffer(m_max + 3)
    snap_cache: OrderedDict = OrderedDict()

    if stepper == "spectral":
        engine = SpectralEngine(initial, j)

        def push_current(step):
            window.push(step, engine.u.copy())
            mean6[step] = _state_means(initial) if step == 0 else engine.mean_fields()

        def materialize(step) -> FieldState:
            if step == 0:
                return initial  # keep the exact data, not its FFT round trip
            if step in snap_cache:
                snap_cache.move_to_end(step)
                return snap_cache[step]
            u = window.get(step)
            dense = engine.dense_coefficients(u)
            data = np.fft.irfftn(dense, s=grid.dims, axes=(-3, -2, -1))
            from .grid import VectorField

            state = FieldState(
                VectorField(grid, data[:3], copy=False),
                VectorField(grid, data[3:], copy=False),
                t0 + step * dt,
            )
            snap_cache[step] = state
            while len(snap_cache) > m_max + 6:
                snap_cache.popitem(last=False)
            return state

        def advance():
            engine.advance(dt)

    elif stepper == "yee":
        engine = YeeEngine(initial, j, dt)

        def push_current(step):
            state = engine.state()
            window.push(step, state)
            mean6[step] = _state_means(state)

        def materialize(step) -> FieldState:
            return window.get(step)

        def advance():
            engine.advance()

    else:
        raise ValueError(f"unknown stepper {stepper!r}")

    per_law_rows = {id(law): [] for law in laws}

    def need(a: int) -> int:
        return a + m_max + (1 if 1 <= a <= nsteps - m_max - 1 else 0)

    ai = 0
    push_current(0)
    for n_sim in range(0, nsteps + 1):
        if n_sim > 0:
            advance()
            push_current(n_sim)
        if w_phys is not None:
            for law in laws:
                m = law.time_shift_steps
                n = n_sim - m
                if 0 <= n <= nsteps - m:
                    w_phys[id(law)][n] = volume_integral(
                        source_power(law, materialize(n), materialize(n_sim), j)
                    )
        while ai < len(analysis) and need(analysis[ai]) <= n_sim:
            a = analysis[ai]
            for law in laws:
                per_law_rows[id(law)].append(
                    _analysis_row(law, j, dt, materialize, a, nsteps)
                )
            ai += 1
    assert ai == len(analysis)

    scale = float(np.sum(initial.E.data**2 + initial.B.data**2) * grid.cell_volume)
    idx = np.asarray(analysis)
    reports = []
    for law in laws:
        rows = per_law_rows[id(law)]
        q = np.array([r[0] for r in rows])
        r_l2 = np.array([r[1] for r in rows])
        r_max = np.array([r[2] for r in rows])
        if j.is_zero:
            w = np.zeros(nsteps - law.time_shift_steps + 1)
        elif uniform_work:
            w = _uniform_work_series(law, j, mean6, dt, t0, nsteps)
        else:
            w = w_phys[id(law)]
        source_cum = cumulative_simpson(w, dt)[idx]
        defect = q - q[0] - source_cum
        reports.append(
            BalanceReport(
                label=law.label,
                t=t0 + dt * idx,
                Q=q,
                source_cum=source_cum,
                defect=defect,
                r_l2=r_l2,
                r_max=r_max,
                norm_scale=scale,
            )
        )
    return reports[0] if single else reports


# ---------------------------------------------------------------------------
# Law files (structured text, row-major number lists)
# ---------------------------------------------------------------------------


def save_law(law: TwoPointLawSpec, path):
    def fmt(arr):
        return " ".join(repr(float(v)) for v in np.asarray(arr).ravel())

    with open(path, "w") as f:
        f.write(f"label = {law.label}\n")
        f.write(f"map.alpha = {fmt(law.map.alpha)}\n")
        f.write(f"map.beta = {fmt(law.map.beta)}\n")
        f.write(f"map.exactness = {law.map.exactness}\n")
        f.write(f"dt_shift_steps = {law.time_shift_steps}\n")
        f.write(f"W = {fmt(law.W)}\n")
        f.write(f"K = {fmt(law.K)}\n")
        f.write(f"source = {fmt(law.source)}\n")


def load_law(path) -> TwoPointLawSpec:
    fields = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    amap = AffineMap(
        tuple(float(v) for v in fields["map.alpha"].split()),
        tuple(float(v) for v in fields["map.beta"].split()),
        fields.get("map.exactness", "grid_exact"),
    )
    def arr(key, shape):
        return np.array([float(v) for v in fields[key].split()]).reshape(shape)

    return TwoPointLawSpec(
        amap,
        int(fields.get("dt_shift_steps", "0")),
        arr("W", (6, 6)),
        arr("K", (3, 6, 6)),
        arr("source", (6, 6)),
        label=fields.get("label", "custom"),
    )
