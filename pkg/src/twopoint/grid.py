"""Periodic rectangular grids, sampled fields, and affine point-maps.

Everything downstream (steppers, conservation laws, discovery) is built on the
types here: a collocated periodic grid, scalar/vector fields sampled on its
nodes, and invertible affine maps x -> alpha x + beta of the torus used to
pull a field back to mapped evaluation points.  Differential operators come
in a spectral flavour (exact on band-limited data) and a 2nd-order centered
flavour, both with periodic wrap.

Fields are immutable values: construction freezes the underlying array, and
all operations return new fields.  Reductions use a fixed traversal order so
results are reproducible across runs and thread counts.
"""

from __future__ import annotations

import functools
from dataclasses import InitVar, dataclass

import numpy as np

from .errors import GridMismatch, InvalidMap

GRID_EXACT = "grid_exact"
INTERPOLATED = "interpolated"

SPECTRAL = "spectral"
CENTERED2 = "centered2"

# Hard cap for the O(modes * nodes) general affine evaluation path.
_TRIG_EVAL_MAX_NODES = 64**3


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid: node i sits at (i_x*hx, i_y*hy, i_z*hz).

    dims    -- node counts (Nx, Ny, Nz), each >= 4
    spacing -- node spacings (hx, hy, hz), each > 0
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        spacing = tuple(float(h) for h in self.spacing)
        if len(dims) != 3 or len(spacing) != 3:
            raise ValueError("GridSpec needs three dims and three spacings")
        if any(n < 4 for n in dims):
            raise ValueError(f"grid dims must be >= 4, got {dims}")
        if any(not np.isfinite(h) or h <= 0.0 for h in spacing):
            raise ValueError(f"grid spacings must be positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)

    @property
    def lengths(self) -> tuple[float, float, float]:
        return tuple(n * h for n, h in zip(self.dims, self.spacing))

    @property
    def cell_volume(self) -> float:
        hx, hy, hz = self.spacing
        return hx * hy * hz

    @property
    def volume(self) -> float:
        lx, ly, lz = self.lengths
        return lx * ly * lz

    @property
    def num_nodes(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """1D node coordinate arrays along each axis."""
        return tuple(h * np.arange(n) for n, h in zip(self.dims, self.spacing))

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    @staticmethod
    def cube(length: float, n: int) -> "GridSpec":
        """Cubic box of side `length` with n nodes per axis."""
        h = float(length) / int(n)
        return GridSpec((n, n, n), (h, h, h))


@functools.lru_cache(maxsize=64)
def _wavenumbers(dims, spacing):
    """Angular wavenumbers for rfftn layout: full kx, ky and half kz."""
    kx = 2.0 * np.pi * np.fft.fftfreq(dims[0], d=spacing[0])
    ky = 2.0 * np.pi * np.fft.fftfreq(dims[1], d=spacing[1])
    kz = 2.0 * np.pi * np.fft.rfftfreq(dims[2], d=spacing[2])
    return kx, ky, kz


def spectral_wavevectors(grid: GridSpec):
    """Broadcastable (KX, KY, KZ) arrays matching the rfftn coefficient layout."""
    kx, ky, kz = _wavenumbers(grid.dims, grid.spacing)
    return kx[:, None, None], ky[None, :, None], kz[None, None, :]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _prep(data, shape, copy: bool) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"field data has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field data contains non-finite values")
    if copy:
        arr = np.array(arr, order="C")
    elif not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    return _freeze(arr)


@dataclass(eq=False)
class ScalarField:
    """One real value per grid node, shape (Nx, Ny, Nz)."""

    grid: GridSpec
    data: np.ndarray
    copy: InitVar[bool] = True

    def __post_init__(self, copy):
        self.data = _prep(self.data, self.grid.dims, copy)


@dataclass(eq=False)
class VectorField:
    """Three collocated real components per node, shape (3, Nx, Ny, Nz)."""

    grid: GridSpec
    data: np.ndarray
    copy: InitVar[bool] = True

    def __post_init__(self, copy):
        self.data = _prep(self.data, (3, *self.grid.dims), copy)

    @staticmethod
    def zeros(grid: GridSpec) -> "VectorField":
        return VectorField(grid, np.zeros((3, *grid.dims)), copy=False)


@dataclass(eq=False)
class FieldState:
    """The pair (E, B) on one grid at one instant t."""

    E: VectorField
    B: VectorField
    t: float

    def __post_init__(self):
        if self.E.grid != self.B.grid:
            raise GridMismatch("E and B live on different grids")
        self.t = float(self.t)
        if not np.isfinite(self.t):
            raise ValueError("state time must be finite")

    @property
    def grid(self) -> GridSpec:
        return self.E.grid


@dataclass(frozen=True)
class AffineMap:
    """Spatial automorphism x -> alpha x + beta, taken modulo the periodic box.

    alpha and beta are stored as flat tuples so maps are hashable (they key
    several internal caches).  `exactness` declares how pullbacks evaluate:

    grid_exact   -- alpha is a signed permutation and beta lands on nodes, so
                    the pullback is a pure index permutation (bit-exact).
    interpolated -- pullback evaluates the trigonometric interpolant of the
                    field at the mapped points (exact for band-limited data).
    """

    alpha: tuple  # 9 floats, row-major 3x3
    beta: tuple  # 3 floats
    exactness: str = GRID_EXACT

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float).reshape(3, 3)
        b = np.asarray(self.beta, dtype=float).reshape(3)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidMap("map coefficients must be finite")
        if abs(np.linalg.det(a)) < 1e-12:
            raise InvalidMap("alpha is not invertible")
        if self.exactness not in (GRID_EXACT, INTERPOLATED):
            raise InvalidMap(f"unknown exactness {self.exactness!r}")
        if self.exactness == GRID_EXACT and not _is_signed_permutation(a):
            raise InvalidMap("grid_exact maps require a signed permutation alpha")
        object.__setattr__(self, "alpha", tuple(float(x) for x in a.ravel()))
        object.__setattr__(self, "beta", tuple(float(x) for x in b))

    @property
    def alpha_matrix(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float).reshape(3, 3)

    @property
    def beta_vector(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=float)

    def inverse(self) -> "AffineMap":
        a = self.alpha_matrix
        ainv = np.linalg.inv(a)
        if self.exactness == GRID_EXACT:
            ainv = np.round(ainv)
        binv = -ainv @ self.beta_vector
        return AffineMap(tuple(ainv.ravel()), tuple(binv), self.exactness)

    def is_identity(self, tol: float = 0.0) -> bool:
        return (
            np.max(np.abs(self.alpha_matrix - np.eye(3))) <= tol
            and np.max(np.abs(self.beta_vector)) <= tol
        )

    # -- common constructors -------------------------------------------------

    @staticmethod
    def identity() -> "AffineMap":
        return AffineMap(tuple(np.eye(3).ravel()), (0.0, 0.0, 0.0), GRID_EXACT)

    @staticmethod
    def inversion() -> "AffineMap":
        return AffineMap(tuple((-np.eye(3)).ravel()), (0.0, 0.0, 0.0), GRID_EXACT)

    @staticmethod
    def translation(beta, exactness: str = GRID_EXACT) -> "AffineMap":
        return AffineMap(tuple(np.eye(3).ravel()), tuple(np.asarray(beta, float)), exactness)

    @staticmethod
    def node_translation(grid: GridSpec, nodes) -> "AffineMap":
        """Translation by an integer number of nodes along each axis."""
        nodes = np.asarray(nodes)
        beta = tuple(int(n) * h for n, h in zip(nodes, grid.spacing))
        return AffineMap.translation(beta, GRID_EXACT)

    @staticmethod
    def quarter_turn(axis: int, quarters: int = 1) -> "AffineMap":
        """Proper rotation by quarters*90 degrees about a coordinate axis."""
        c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][quarters % 4]
        i, j = [(1, 2), (2, 0), (0, 1)][axis]
        r = np.eye(3)
        r[i, i] = c
        r[j, j] = c
        r[i, j] = -s
        r[j, i] = s
        return AffineMap(tuple(r.ravel()), (0.0, 0.0, 0.0), GRID_EXACT)


def _is_signed_permutation(a: np.ndarray) -> bool:
    aa = np.abs(a)
    if not np.allclose(aa, np.round(aa), atol=1e-12):
        return False
    aa = np.round(aa)
    return bool(np.all(aa.sum(axis=0) == 1) and np.all(aa.sum(axis=1) == 1)
                and np.all((aa == 0) | (aa == 1)))


# ---------------------------------------------------------------------------
# Pullback: result(x) = field(alpha x + beta mod L), componentwise.
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=128)
def _gather_open_indices(grid: GridSpec, amap: AffineMap):
    """Open index arrays (I0, I1, I2) with result[m] = data[I0, I1, I2][m].

    Output axis i draws from input axis j(i) (the nonzero column of row i of
    alpha); the map must pair axes of equal extent and spacing, and beta must
    be a whole number of nodes, otherwise the map is not grid-exact here.
    """
    a = amap.alpha_matrix
    b = amap.beta_vector
    out = []
    for i in range(3):
        j = int(np.argmax(np.abs(a[i])))
        s = int(round(a[i, j]))
        if grid.dims[j] != grid.dims[i] or grid.spacing[j] != grid.spacing[i]:
            raise InvalidMap(
                f"map pairs axis {j} with axis {i} but their extents differ"
            )
        shift = b[i] / grid.spacing[i]
        if abs(shift - round(shift)) > 1e-9:
            raise InvalidMap(f"beta[{i}]={b[i]} is not a whole number of nodes")
        lookup = (s * np.arange(grid.dims[j]) + int(round(shift))) % grid.dims[i]
        shape = [1, 1, 1]
        shape[j] = grid.dims[j]
        out.append(lookup.reshape(shape))
    return tuple(out)


def _pull_array(data: np.ndarray, grid: GridSpec, amap: AffineMap) -> np.ndarray:
    """Pull back an (..., Nx, Ny, Nz) array under the map."""
    if amap.exactness == GRID_EXACT:
        i0, i1, i2 = _gather_open_indices(grid, amap)
        return data[..., i0, i1, i2]
    if np.allclose(amap.alpha_matrix, np.eye(3), atol=1e-14):
        return _shift_fourier(data, grid, amap.beta_vector)
    return _trig_eval(data, grid, amap)


def _shift_fourier(data: np.ndarray, grid: GridSpec, beta: np.ndarray) -> np.ndarray:
    """Evaluate f(x + beta) through the band-limited interpolant."""
    kx, ky, kz = spectral_wavevectors(grid)
    phase = np.exp(1j * (kx * beta[0] + ky * beta[1] + kz * beta[2]))
    fh = np.fft.rfftn(data, axes=(-3, -2, -1))
    return np.fft.irfftn(fh * phase, s=grid.dims, axes=(-3, -2, -1))


def _trig_eval(data: np.ndarray, grid: GridSpec, amap: AffineMap) -> np.ndarray:
    """Direct trigonometric evaluation at alpha x + beta for general alpha.

    Cost is O(active modes x nodes); intended for band-limited fields on
    small grids (general rotations in tests), not for production stepping.
    """
    if grid.num_nodes > _TRIG_EVAL_MAX_NODES:
        raise InvalidMap("general interpolated pullback is limited to small grids")
    lead = data.shape[:-3]
    flat = data.reshape(-1, *grid.dims)
    coeff = np.fft.fftn(flat, axes=(-3, -2, -1)) / grid.num_nodes
    kx = 2.0 * np.pi * np.fft.fftfreq(grid.dims[0], d=grid.spacing[0])
    ky = 2.0 * np.pi * np.fft.fftfreq(grid.dims[1], d=grid.spacing[1])
    kz = 2.0 * np.pi * np.fft.fftfreq(grid.dims[2], d=grid.spacing[2])
    kmesh = np.stack(np.meshgrid(kx, ky, kz, indexing="ij"), axis=-1).reshape(-1, 3)
    cflat = coeff.reshape(flat.shape[0], -1)
    active = np.any(np.abs(cflat) > 1e-15 * max(np.max(np.abs(cflat)), 1e-300), axis=0)
    kact = kmesh[active]
    cact = cflat[:, active]
    x = np.stack(grid.meshgrid(), axis=0).reshape(3, -1)
    y = amap.alpha_matrix @ x + amap.beta_vector[:, None]
    out = np.empty((flat.shape[0], x.shape[1]))
    chunk = max(1, 2_000_000 // max(len(kact), 1))
    for lo in range(0, x.shape[1], chunk):
        phases = np.exp(1j * (kact @ y[:, lo:lo + chunk]))
        out[:, lo:lo + chunk] = np.real(cact @ phases)
    return out.reshape(*lead, *grid.dims)


def pullback(field, amap: AffineMap):
    """Resample a field at mapped points: result(x) = field(alpha x + beta).

    Grid-exact maps are index permutations and therefore bit-exact; other
    maps evaluate the trigonometric interpolant.  Components are moved, not
    mixed: use `rotate_components` for the matrix acting on vector components.
    """
    out = _pull_array(field.data, field.grid, amap)
    cls = VectorField if isinstance(field, VectorField) else ScalarField
    return cls(field.grid, out, copy=amap.exactness == GRID_EXACT)


def rotate_components(field: VectorField, alpha) -> VectorField:
    """Apply a 3x3 matrix to the vector components at every node."""
    a = np.asarray(alpha, dtype=float)
    if a.shape != (3, 3):
        raise ValueError("component matrix must be 3x3")
    return VectorField(field.grid, np.einsum("ij,j...->i...", a, field.data), copy=False)


# ---------------------------------------------------------------------------
# Differential operators and reductions
# ---------------------------------------------------------------------------


def _check_scheme(scheme: str):
    if scheme not in (SPECTRAL, CENTERED2):
        raise ValueError(f"unknown scheme {scheme!r}")


def divergence(v: VectorField, scheme: str = SPECTRAL) -> ScalarField:
    """Discrete divergence of a vector field with periodic wrap."""
    _check_scheme(scheme)
    g = v.grid
    if scheme == SPECTRAL:
        kx, ky, kz = spectral_wavevectors(g)
        vh = np.fft.rfftn(v.data, axes=(-3, -2, -1))
        dh = 1j * (kx * vh[0] + ky * vh[1] + kz * vh[2])
        out = np.fft.irfftn(dh, s=g.dims, axes=(-3, -2, -1))
    else:
        out = np.zeros(g.dims)
        for i in range(3):
            out += (np.roll(v.data[i], -1, axis=i) - np.roll(v.data[i], 1, axis=i)) / (
                2.0 * g.spacing[i]
            )
    return ScalarField(g, out, copy=False)


def curl(v: VectorField, scheme: str = SPECTRAL) -> VectorField:
    """Discrete curl of a vector field with periodic wrap."""
    _check_scheme(scheme)
    g = v.grid
    if scheme == SPECTRAL:
        kx, ky, kz = spectral_wavevectors(g)
        vh = np.fft.rfftn(v.data, axes=(-3, -2, -1))
        ch = np.empty_like(vh)
        ch[0] = 1j * (ky * vh[2] - kz * vh[1])
        ch[1] = 1j * (kz * vh[0] - kx * vh[2])
        ch[2] = 1j * (kx * vh[1] - ky * vh[0])
        out = np.fft.irfftn(ch, s=g.dims, axes=(-3, -2, -1))
    else:

        def d(comp, axis):
            return (np.roll(comp, -1, axis=axis) - np.roll(comp, 1, axis=axis)) / (
                2.0 * g.spacing[axis]
            )

        out = np.empty((3, *g.dims))
        out[0] = d(v.data[2], 1) - d(v.data[1], 2)
        out[1] = d(v.data[0], 2) - d(v.data[2], 0)
        out[2] = d(v.data[1], 0) - d(v.data[0], 1)
    return VectorField(g, out, copy=False)


def volume_integral(s: ScalarField) -> float:
    """cell volume times the pairwise sum of all nodes, in fixed C order.

    numpy's pairwise summation over a contiguous buffer is deterministic for
    a given shape, which makes every reported integral reproducible across
    runs and thread counts.
    """
    return float(s.grid.cell_volume * np.sum(s.data.ravel(order="C")))


def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatch("fields live on different grids")


def dot_density(a: VectorField, b: VectorField) -> ScalarField:
    """Pointwise a . b."""
    _same_grid(a, b)
    return ScalarField(a.grid, np.einsum("i...,i...->...", a.data, b.data), copy=False)


def cross_density(a: VectorField, b: VectorField) -> VectorField:
    """Pointwise a x b."""
    _same_grid(a, b)
    out = np.empty_like(a.data)
    out[0] = a.data[1] * b.data[2] - a.data[2] * b.data[1]
    out[1] = a.data[2] * b.data[0] - a.data[0] * b.data[2]
    out[2] = a.data[0] * b.data[1] - a.data[1] * b.data[0]
    return VectorField(a.grid, out, copy=False)
