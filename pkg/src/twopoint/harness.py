"""Config-driven experiment runner.

One experiment per invocation:

    twopoint verify    config.txt [key=value ...]
    twopoint converge  config.txt [key=value ...]
    twopoint discover  config.txt [key=value ...]
    twopoint forge     config.txt [key=value ...]
    twopoint planewave config.txt [key=value ...]

Configs are flat `key = value` text (number lists are space separated, '#'
starts a comment); command-line overrides are applied after the file.  The
output directory comes from `output.dir`, overridable with the environment
variable TWOPOINT_OUTPUT_DIR.  All CSV files start with a `# schema=1`
comment line, and identical configs and seeds reproduce them byte for byte.

Exit codes: 0 success, 1 tolerance failure, 2 config error, 3 numerical
divergence, 4 insufficient data.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .discover import discover_laws, matching_reference_law
from .errors import Diverged, InsufficientData, StepTooLarge, TwoPointError
from .forge import (
    Pde1D,
    nullspace_invariants,
    time_derivative_samples,
    verify_invariant_drift,
)
from .grid import AffineMap, GridSpec, volume_integral
from .laws import (
    density,
    law_inversion,
    law_local_energy,
    law_rotation,
    law_translation,
    load_law,
    residual,
    run_balance,
    save_law,
)
from .maxwell import (
    GaussianPulseCurrent,
    PlaneWaveCurrent,
    UniformOscillating,
    ZeroCurrent,
    cfl_max_dt,
    evolve,
)
from .waves import (
    PlaneWaveSpec,
    plane_wave,
    random_band_limited,
    standing_wave,
    twopoint_energy_analytic,
)

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INSUFFICIENT = 4

OUTPUT_ENV_VAR = "TWOPOINT_OUTPUT_DIR"


class ConfigError(TwoPointError):
    pass


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


class Config:
    """Flat key/value store with typed accessors."""

    def __init__(self, entries: dict):
        self.entries = dict(entries)

    @staticmethod
    def load(path, overrides=()):
        entries = {}
        try:
            with open(path) as f:
                for lineno, line in enumerate(f, 1):
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ConfigError(f"{path}:{lineno}: expected key = value")
                    key, _, value = line.partition("=")
                    entries[key.strip()] = value.strip()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, _, value = item.partition("=")
            entries[key.strip()] = value.strip()
        return Config(entries)

    def has(self, key):
        return key in self.entries

    def str(self, key, default=None):
        if key in self.entries:
            return self.entries[key]
        if default is None:
            raise ConfigError(f"missing config key {key!r}")
        return default

    def int(self, key, default=None):
        try:
            return int(self.str(key, None if default is None else str(default)))
        except ValueError as exc:
            raise ConfigError(f"key {key!r} is not an integer") from exc

    def float(self, key, default=None):
        try:
            return float(self.str(key, None if default is None else repr(default)))
        except ValueError as exc:
            raise ConfigError(f"key {key!r} is not a number") from exc

    def floats(self, key, default=None):
        raw = self.str(key, default)
        try:
            return [float(v) for v in raw.split()]
        except ValueError as exc:
            raise ConfigError(f"key {key!r} is not a number list") from exc

    def ints(self, key, default=None):
        return [int(v) for v in self.floats(key, default)]


def output_dir(cfg: Config) -> str:
    out = os.environ.get(OUTPUT_ENV_VAR) or cfg.str("output.dir", "out")
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_grid(cfg: Config) -> GridSpec:
    dims = cfg.ints("grid.dims")
    spacing = cfg.floats("grid.spacing")
    if len(dims) != 3 or len(spacing) != 3:
        raise ConfigError("grid.dims and grid.spacing need three entries")
    try:
        return GridSpec(tuple(dims), tuple(spacing))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_initial(cfg: Config, grid: GridSpec):
    kind = cfg.str("initial.kind")
    t0 = cfg.float("initial.time", 0.0)
    if kind in ("planewave", "standingwave"):
        n = cfg.int("initial.k_mode", 1)
        spec = PlaneWaveSpec(
            amplitude=cfg.float("initial.amplitude", 1.0),
            k=2.0 * np.pi * n / grid.lengths[2],
        )
        maker = plane_wave if kind == "planewave" else standing_wave
        return maker(spec, grid, t0)
    if kind == "random":
        if not cfg.has("initial.seed"):
            raise ConfigError("random initial data requires initial.seed")
        mean_b = cfg.floats("initial.mean_b", "0 0 0")
        return random_band_limited(
            grid,
            seed=cfg.int("initial.seed"),
            kmax=cfg.int("initial.kmax", 2),
            amplitude=cfg.float("initial.amplitude", 1.0),
            mean_b=tuple(mean_b),
        )
    raise ConfigError(f"unknown initial.kind {kind!r}")


def build_source(cfg: Config, grid: GridSpec):
    kind = cfg.str("source.kind", "zero")
    if kind == "zero":
        return ZeroCurrent()
    if kind == "uniform":
        return UniformOscillating(
            amplitude=tuple(cfg.floats("source.amplitude")),
            omega=cfg.float("source.omega"),
            phase=cfg.float("source.phase", 0.0),
        )
    if kind == "planewave":
        return PlaneWaveCurrent(
            mode=tuple(cfg.ints("source.mode")),
            polarization=tuple(cfg.floats("source.polarization")),
            omega=cfg.float("source.omega"),
        )
    if kind == "gaussian":
        return GaussianPulseCurrent(
            center=tuple(cfg.floats("source.center")),
            width=cfg.float("source.width"),
            polarization=tuple(cfg.floats("source.polarization")),
            t0=cfg.float("source.t0", 0.0),
            tau=cfg.float("source.tau", 1.0),
        )
    raise ConfigError(f"unknown source.kind {kind!r}")


def build_law(descriptor: str, grid: GridSpec):
    parts = descriptor.split()
    name = parts[0]
    if name == "local-energy":
        return law_local_energy()
    if name == "inversion":
        return law_inversion()
    if name == "rotation":
        axis = {"x": 0, "y": 1, "z": 2}.get(parts[1] if len(parts) > 1 else "z")
        if axis is None:
            raise ConfigError(f"bad rotation axis in {descriptor!r}")
        quarters = int(parts[2]) if len(parts) > 2 else 1
        return law_rotation(AffineMap.quarter_turn(axis, quarters))
    if name == "translation":
        if len(parts) != 5:
            raise ConfigError("translation law needs: translation nx ny nz msteps")
        nodes = tuple(int(p) for p in parts[1:4])
        return law_translation(grid, nodes, int(parts[4]))
    if name == "custom":
        if len(parts) != 2:
            raise ConfigError("custom law needs a file path")
        return load_law(parts[1])
    raise ConfigError(f"unknown law descriptor {descriptor!r}")


def build_laws(cfg: Config, grid: GridSpec):
    laws = []
    i = 1
    while cfg.has(f"law.{i}"):
        laws.append(build_law(cfg.str(f"law.{i}"), grid))
        i += 1
    if not laws:
        raise ConfigError("no laws configured (law.1 = ...)")
    return laws


def resolve_dt(cfg: Config, grid: GridSpec, stepper: str) -> float:
    if cfg.has("dt"):
        return cfg.float("dt")
    if cfg.has("cfl_fraction"):
        return float(cfg.float("cfl_fraction") * cfl_max_dt(grid, stepper))
    raise ConfigError("set either dt or cfl_fraction")


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "-" for c in label)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(cfg: Config) -> int:
    out = output_dir(cfg)
    grid = build_grid(cfg)
    stepper = cfg.str("stepper", "spectral")
    initial = build_initial(cfg, grid)
    source = build_source(cfg, grid)
    laws = build_laws(cfg, grid)
    dt = resolve_dt(cfg, grid, stepper)
    nsteps = cfg.int("nsteps")
    stride = cfg.int("analysis.stride", 1)
    defect_tol = cfg.float("tolerance.defect_rel", 1e-7)
    r_tol = cfg.float("tolerance.residual_max", 0.0) or None

    reports = run_balance(initial, source, dt, nsteps, laws,
                          stepper=stepper, analysis_stride=stride)
    all_pass = True
    lines = [f"verify: stepper={stepper} dt={dt!r} nsteps={nsteps} grid={grid.dims}"]
    for law, rep in zip(laws, reports):
        rep.to_csv(os.path.join(out, f"balance_{_slug(rep.label)}.csv"))
        rel_defect = rep.max_defect / max(rep.norm_scale, 1e-300)
        ok = rel_defect <= defect_tol
        if r_tol is not None:
            ok = ok and rep.max_r <= r_tol
        all_pass = all_pass and ok
        lines.append(
            f"law={rep.label} max_defect_rel={rel_defect!r} max_r={rep.max_r!r} "
            f"tol={defect_tol!r} {'PASS' if ok else 'FAIL'}"
        )
    with open(os.path.join(out, "summary.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if all_pass else EXIT_TOLERANCE


# ---------------------------------------------------------------------------
# converge
# ---------------------------------------------------------------------------


def _fit_order(values):
    """Least-squares slope of log2(metric) against level index, negated."""
    levels = np.arange(len(values))
    logs = np.log2(np.maximum(np.asarray(values), 1e-300))
    return float(-np.polyfit(levels, logs, 1)[0])


def cmd_converge(cfg: Config) -> int:
    out = output_dir(cfg)
    levels = cfg.int("refinement.levels", 0)
    if levels < 3:
        raise ConfigError("refinement.levels must be >= 3")
    stepper = cfg.str("stepper", "spectral")
    base_grid = build_grid(cfg)
    base_dt = resolve_dt(cfg, base_grid, stepper)
    base_nsteps = cfg.int("nsteps")
    factor = cfg.int("refinement.factor", 2)
    metric = cfg.str("converge.metric", "residual" if stepper == "yee" else "defect")
    min_order = cfg.float(
        "converge.min_order", 1.8 if stepper == "yee" else 3.5
    )

    rows = []
    metrics = {}
    for level in range(levels):
        scale = factor**level
        if stepper == "yee":
            grid = GridSpec(
                tuple(n * scale for n in base_grid.dims),
                tuple(h / scale for h in base_grid.spacing),
            )
        else:
            grid = base_grid
        dt = base_dt / scale
        nsteps = base_nsteps * scale
        initial = build_initial(cfg, grid)
        source = build_source(cfg, grid)
        laws = build_laws(cfg, grid)
        stride = max(1, nsteps // 8)
        reports = run_balance(initial, source, dt, nsteps, laws,
                              stepper=stepper, analysis_stride=stride)
        for rep in reports:
            metrics.setdefault(rep.label, {"residual": [], "defect": []})
            metrics[rep.label]["residual"].append(rep.max_r)
            metrics[rep.label]["defect"].append(rep.max_defect)
            rows.append((rep.label, level, float(grid.spacing[0]), float(dt),
                         float(rep.max_r), float(rep.max_defect)))

    with open(os.path.join(out, "orders.csv"), "w", newline="") as f:
        f.write("# schema=1\n")
        f.write("law,level,h,dt,r_max,defect\n")
        for r in rows:
            f.write(f"{r[0]},{r[1]},{r[2]!r},{r[3]!r},{r[4]!r},{r[5]!r}\n")

    all_pass = True
    lines = [f"converge: stepper={stepper} levels={levels} metric={metric}"]
    for label, series in metrics.items():
        order = _fit_order(series[metric])
        ok = order >= min_order
        all_pass = all_pass and ok
        lines.append(
            f"law={label} fitted_order={order!r} min={min_order!r} "
            f"{'PASS' if ok else 'FAIL'}"
        )
    with open(os.path.join(out, "orders_summary.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if all_pass else EXIT_TOLERANCE


# ---------------------------------------------------------------------------
# discover
# ---------------------------------------------------------------------------


def _build_map(descriptor: str, grid: GridSpec) -> tuple:
    parts = descriptor.split()
    name = parts[0]
    if name == "identity":
        return AffineMap.identity(), 0
    if name == "inversion":
        return AffineMap.inversion(), 0
    if name == "rotation":
        axis = {"x": 0, "y": 1, "z": 2}[parts[1]]
        return AffineMap.quarter_turn(axis, int(parts[2])), 0
    if name == "translation":
        nodes = tuple(int(p) for p in parts[1:4])
        return AffineMap.node_translation(grid, nodes), int(parts[4])
    raise ConfigError(f"unknown map descriptor {descriptor!r}")


def cmd_discover(cfg: Config) -> int:
    out = output_dir(cfg)
    grid = build_grid(cfg)
    amap, m_steps = _build_map(cfg.str("discover.map"), grid)
    n_members = cfg.int("discover.ensemble")
    if n_members < 20:
        raise InsufficientData(f"discover.ensemble={n_members} is below 20")
    seed = cfg.int("discover.seed", 0)
    kmax = cfg.int("discover.kmax", 2)
    dt = cfg.float("discover.dt", 1.5e-5)
    nsteps = cfg.int("discover.nsteps", 4)
    top = cfg.int("discover.top", 8)
    ensemble = [
        evolve(random_band_limited(grid, seed=seed + i, kmax=kmax), ZeroCurrent(), dt, nsteps)
        for i in range(n_members)
    ]
    result = discover_laws(ensemble, amap, m_steps, seed=seed)
    for i, cand in enumerate(result.candidates[:top]):
        save_law(cand.law, os.path.join(out, f"candidate_{i:02d}.law"))

    ref = matching_reference_law(amap, m_steps, grid)
    lines = [
        f"discover: map={cfg.str('discover.map')} ensemble={n_members} "
        f"rows={result.rows}",
        f"nullspace_dim={len(result.candidates)}",
        "singular_values_kept=" + " ".join(
            repr(c.singular_value) for c in result.candidates
        ),
        f"reference_max_r={result.reference_max_r!r}",
    ]
    if ref is not None:
        lines.append(f"projection[{ref.label}]={result.projection_of(ref)!r}")
    with open(os.path.join(out, "discovery_report.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# forge
# ---------------------------------------------------------------------------


def _build_f0(cfg: Config, pde: Pde1D):
    triplets = cfg.floats("forge.f0", "1 1.0 0.0")
    if len(triplets) % 3:
        raise ConfigError("forge.f0 must be (mode, sin_amp, cos_amp) triplets")
    x = pde.nodes()
    f0 = np.zeros(pde.n)
    for i in range(0, len(triplets), 3):
        mode, a_sin, a_cos = triplets[i : i + 3]
        f0 += a_sin * np.sin(mode * x) + a_cos * np.cos(mode * x)
    return f0


def cmd_forge(cfg: Config) -> int:
    out = output_dir(cfg)
    pde = Pde1D(
        kind=cfg.str("forge.pde", "advection"),
        length=cfg.float("forge.length", 2.0 * np.pi),
        n=cfg.int("forge.resolution", 128),
        c=cfg.float("forge.c", 1.0),
        nu=cfg.float("forge.nu", 0.0),
    )
    points = np.array(cfg.floats("forge.points"))
    order = cfg.int("forge.order", 2)
    horizon = cfg.float("forge.horizon", 1.0)
    f0 = _build_f0(cfg, pde)
    moments = time_derivative_samples(
        pde, f0, points, order, dt_probe=cfg.float("forge.dt_probe", 0.01)
    )
    invariants = nullspace_invariants(moments, tol=cfg.float("forge.tol", 1e-8))
    window = None
    if cfg.has("forge.fit_lo"):
        window = (cfg.float("forge.fit_lo"), cfg.float("forge.fit_hi"))
    results = verify_invariant_drift(
        pde, f0, invariants, horizon,
        nsamples=cfg.int("forge.nsamples", 64), fit_window=window,
    )

    with open(os.path.join(out, "coefficients.csv"), "w", newline="") as f:
        f.write("# schema=1\n")
        f.write("invariant," + ",".join(f"alpha_{i}" for i in range(len(points))) + "\n")
        for i, alpha in enumerate(invariants.alphas):
            f.write(f"{i}," + ",".join(repr(float(a)) for a in alpha) + "\n")
    for i, res in enumerate(results):
        with open(os.path.join(out, f"drift_{i:02d}.csv"), "w", newline="") as f:
            f.write("# schema=1\n")
            f.write("t,g_value,drift\n")
            for t, g, d in zip(res.times, res.values, res.drift):
                f.write(f"{t!r},{g!r},{d!r}\n")

    lines = [
        f"forge: pde={pde.kind} P={len(points)} N_order={order} "
        f"nullspace_dim={len(invariants)}",
        f"extrapolation_suspect={moments.extrapolation_suspect}",
    ]
    for i, res in enumerate(results):
        lines.append(
            f"invariant={i} max_drift={float(np.max(res.drift))!r} "
            f"fitted_exponent={res.exponent!r}"
        )
    with open(os.path.join(out, "forge_summary.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# planewave
# ---------------------------------------------------------------------------


def cmd_planewave(cfg: Config) -> int:
    out = output_dir(cfg)
    grid = build_grid(cfg)
    n = cfg.int("initial.k_mode", 4)
    e0 = cfg.float("initial.amplitude", 1.0)
    t = cfg.float("initial.time", 0.0)
    spec = PlaneWaveSpec(amplitude=e0, k=2.0 * np.pi * n / grid.lengths[2])
    state = plane_wave(spec, grid, t)
    d_nodes = cfg.ints("planewave.d_nodes", "0")
    rel_tol = cfg.float("tolerance.planewave_rel", 1e-8)
    scale = grid.volume * e0 * e0
    rows = []
    all_pass = True
    for nodes in d_nodes:
        d = nodes * grid.spacing[2]
        law = law_translation(grid, (0, 0, nodes), 0)
        q = volume_integral(density(law, state, state))
        expected = twopoint_energy_analytic(e0, grid.volume, spec.k, d)
        err = abs(q - expected)
        if abs(expected) > 1e-12 * scale:
            ok = err <= rel_tol * abs(expected)
        else:
            ok = err <= 1e-10 * scale  # absolute branch where cos(kd) ~ 0
        all_pass = all_pass and ok
        rows.append((nodes, d, expected, q, err, ok))
    with open(os.path.join(out, "planewave.csv"), "w", newline="") as f:
        f.write("# schema=1\n")
        f.write("d_nodes,d,Q_analytic,Q_numeric,abs_err\n")
        for nodes, d, expected, q, err, _ in rows:
            f.write(f"{nodes},{d!r},{expected!r},{q!r},{err!r}\n")
    header = f"{'d_nodes':>8} {'d':>12} {'Q_analytic':>16} {'Q_numeric':>16} {'status':>8}"
    print(header)
    for nodes, d, expected, q, err, ok in rows:
        print(f"{nodes:8d} {d:12.6f} {expected:16.9e} {q:16.9e} "
              f"{'ok' if ok else 'FAIL':>8}")
    return EXIT_OK if all_pass else EXIT_TOLERANCE


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


_COMMANDS = {
    "verify": cmd_verify,
    "converge": cmd_converge,
    "discover": cmd_discover,
    "forge": cmd_forge,
    "planewave": cmd_planewave,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="twopoint",
        description="Maxwell two-point conservation-law experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the experiment config")
        p.add_argument("overrides", nargs="*", help="key=value overrides")
    args = parser.parse_args(argv)
    try:
        cfg = Config.load(args.config, args.overrides)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientData as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (Diverged, StepTooLarge) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
