"""Initial data, the main time loop, invariant monitoring and checkpoint/restart."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fluid as fl
from .config import SimulationConfig, loads
from .diagnostics import (
    CSV_COLUMNS,
    DiagnosticsRecord,
    RateFitError,
    fit_decay_rate,
    record_step,
    tail_window,
)
from .grid import GridSpec, SpectralInfo, lp_norm, neumann_lambda1
from .sensitivity import SmallnessReport, check_smallness
from .snapshot import FACE_KINDS, checkpoint_read, checkpoint_write, write_snapshot
from .solvers import SolverError
from .transport import advance_c, advance_n, chemotactic_velocity, stable_dt

log = logging.getLogger(__name__)

MASS_RTOL = 1e-10
MAX_PRINCIPLE_ATOL = 1e-12
POSITIVITY_ATOL = 1e-14
LYAPUNOV_RTOL = 1e-8
DIV_FACTOR = 10.0
NOISE_FLOOR = 1e-11  # relative to a series' peak, for rate fitting


@dataclass
class SimulationState:
    grid: GridSpec
    n: np.ndarray
    c: np.ndarray
    u: tuple
    P: np.ndarray
    t: float = 0.0
    step: int = 0
    n_mean: float = 0.0
    spectral: SpectralInfo | None = None


def _fluid_opts(config: SimulationConfig) -> fl.FluidSolverOptions:
    s = config.scheme
    return fl.FluidSolverOptions(s.solver_tol, s.solver_maxiter, s.preconditioner)


def vortex_velocity(grid: GridSpec, amplitude: float):
    """Solenoidal MAC field from psi = A (sin(pi x/Lx) sin(pi y/Ly))^2.

    psi is sampled on the z-parallel cell edges and differenced, so the
    discrete divergence vanishes identically; in 3D the third component is 0.
    """
    Lx, Ly = grid.extents[0], grid.extents[1]
    xs = grid.axis_nodes(0)
    ys = grid.axis_nodes(1)
    psi = amplitude * (np.sin(np.pi * xs / Lx)[:, None] * np.sin(np.pi * ys / Ly)[None, :]) ** 2
    hx, hy = grid.spacing[0], grid.spacing[1]
    ux = np.diff(psi, axis=1) / hy
    uy = -np.diff(psi, axis=0) / hx
    if grid.dim == 3:
        mz = grid.cells[2]
        ux = np.repeat(ux[:, :, None], mz, axis=2)
        uy = np.repeat(uy[:, :, None], mz, axis=2)
        return (ux, uy, np.zeros(grid.face_shape(2)))
    return (ux, uy)


def make_initial_data(config: SimulationConfig) -> SimulationState:
    grid = config.grid
    init = config.initial
    pts = grid.cell_points()

    if init.n_profile == "uniform" or init.n_mean == 0.0:
        n = np.full(grid.shape, init.n_mean)
    else:
        r2 = sum((x - f * L) ** 2 for x, f, L in zip(pts, init.n_center, grid.extents))
        bump = np.exp(-r2 / (2.0 * init.n_width**2))
        n = init.n_mean * (init.n_background + (1.0 - init.n_background) * bump / bump.mean())

    if init.c_profile == "uniform" or init.c_max == 0.0:
        c = np.full(grid.shape, init.c_max)
    else:
        shape = np.ones(grid.shape)
        for x, L in zip(pts, grid.extents):
            shape = shape * np.cos(np.pi * x / L)
        shape = 1.0 + init.c_perturbation * shape
        c = init.c_max * shape / shape.max()

    if init.u_profile == "vortex" and config.fluid_enabled:
        u = vortex_velocity(grid, init.u_amplitude)
        u, _ = fl.project(grid, u, 1.0, _fluid_opts(config))
    else:
        u = grid.zero_vector()

    return SimulationState(
        grid=grid,
        n=n,
        c=c,
        u=tuple(u),
        P=grid.zeros(),
        n_mean=float(np.sum(n) * grid.cell_volume / grid.volume),
        spectral=neumann_lambda1(grid),
    )


def default_t_end(config: SimulationConfig, state: SimulationState) -> float:
    rate = min(state.n_mean, state.spectral.lambda1_neumann_continuum)
    if rate <= 0:
        raise ValueError("default horizon needs a positive mean cell density; set run.t_end")
    return 10.0 / rate


@dataclass
class Monitor:
    """Reference values for the per-record invariant checks."""

    c0_max: float
    mass0: float
    enforce_lyapunov: bool
    last_lyapunov: float | None = None
    violations: list[str] = field(default_factory=list)

    def check(self, rec: DiagnosticsRecord, dt: float | None, tol: float) -> list[str]:
        found = []
        if rec.min_n < -POSITIVITY_ATOL:
            found.append(f"t={rec.t:.6g}: negative cell density {rec.min_n:.3e}")
        if rec.min_c < -POSITIVITY_ATOL:
            found.append(f"t={rec.t:.6g}: negative concentration {rec.min_c:.3e}")
        if rec.linf_c > self.c0_max + MAX_PRINCIPLE_ATOL:
            found.append(f"t={rec.t:.6g}: max(c)={rec.linf_c:.17g} exceeds max(c0)={self.c0_max:.17g}")
        if self.mass0 > 0 and abs(rec.mass_n - self.mass0) > MASS_RTOL * self.mass0:
            found.append(f"t={rec.t:.6g}: mass drift {abs(rec.mass_n - self.mass0) / self.mass0:.3e}")
        if dt is not None and rec.div_u_inf > DIV_FACTOR * tol / dt:
            found.append(f"t={rec.t:.6g}: divergence {rec.div_u_inf:.3e} above {DIV_FACTOR * tol / dt:.3e}")
        if self.enforce_lyapunov:
            if rec.lyapunov is None:
                found.append(f"t={rec.t:.6g}: weighted functional undefined (max c reached delta0)")
            elif self.last_lyapunov is not None and rec.lyapunov > self.last_lyapunov * (1 + LYAPUNOV_RTOL):
                rel = rec.lyapunov / self.last_lyapunov - 1
                found.append(f"t={rec.t:.6g}: weighted functional increased by {rel:.3e} (relative)")
        if rec.lyapunov is not None:
            self.last_lyapunov = rec.lyapunov
        self.violations.extend(found)
        return found


@dataclass
class RunSummary:
    steps: int
    wall_time: float
    final: DiagnosticsRecord
    rates: dict
    targets: dict
    admissibility: SmallnessReport
    violations: list[str]
    spectral: SpectralInfo
    solver_failure: str | None = None
    fit_errors: dict = field(default_factory=dict)
    records: list[DiagnosticsRecord] = field(default_factory=list, repr=False)

    @property
    def exit_code(self) -> int:
        if self.solver_failure:
            return 3
        return 2 if self.violations else 0


class CsvSink:
    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        self._fh = self.path.open("a" if append else "w")
        if not append:
            self._fh.write(",".join(CSV_COLUMNS) + "\n")

    def record(self, rec: DiagnosticsRecord) -> None:
        self._fh.write(rec.csv_row() + "\n")

    def snapshot(self, state: SimulationState) -> None:
        pass

    def close(self) -> None:
        self._fh.close()


class SnapshotSink:
    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    def record(self, rec) -> None:
        pass

    def snapshot(self, state: SimulationState) -> None:
        tag = f"{state.step:07d}"
        write_snapshot(self.dir / f"n_{tag}.cfsnap", state.grid, state.n, "cell")
        write_snapshot(self.dir / f"c_{tag}.cfsnap", state.grid, state.c, "cell")
        write_snapshot(self.dir / f"P_{tag}.cfsnap", state.grid, state.P, "cell")
        for k, comp in enumerate(state.u):
            write_snapshot(self.dir / f"u{k}_{tag}.cfsnap", state.grid, comp, FACE_KINDS[k])

    def close(self) -> None:
        pass


def _hex(x):
    return None if x is None else float(x).hex()


def _unhex(s):
    return None if s is None else float.fromhex(s)


def save_checkpoint(path, state: SimulationState, config: SimulationConfig, monitor: Monitor) -> None:
    fields = {"n": (state.n, "cell"), "c": (state.c, "cell"), "P": (state.P, "cell")}
    for k, comp in enumerate(state.u):
        fields[f"u{k}"] = (comp, FACE_KINDS[k])
    meta = {
        "t": _hex(state.t),
        "step": state.step,
        "n_mean": _hex(state.n_mean),
        "c0_max": _hex(monitor.c0_max),
        "mass0": _hex(monitor.mass0),
        "last_lyapunov": _hex(monitor.last_lyapunov),
        "config": config.to_text(),
    }
    checkpoint_write(path, state.grid, fields, meta)


def load_checkpoint(path) -> tuple[SimulationState, SimulationConfig, Monitor]:
    grid, fields, meta = checkpoint_read(path)
    config = loads(meta["config"], f"{path}/meta.json")
    if config.grid != grid:
        raise ValueError("checkpoint fields and stored config disagree on the grid")
    u = tuple(fields[f"u{k}"][0] for k in range(grid.dim))
    state = SimulationState(
        grid=grid,
        n=fields["n"][0],
        c=fields["c"][0],
        u=u,
        P=fields["P"][0],
        t=_unhex(meta["t"]),
        step=int(meta["step"]),
        n_mean=_unhex(meta["n_mean"]),
        spectral=neumann_lambda1(grid),
    )
    monitor = Monitor(
        c0_max=_unhex(meta["c0_max"]),
        mass0=_unhex(meta["mass0"]),
        enforce_lyapunov=config.enforce_smallness,
        last_lyapunov=_unhex(meta["last_lyapunov"]),
    )
    return state, config, monitor


def step_state(state: SimulationState, config: SimulationConfig) -> tuple[SimulationState, float]:
    """One split step: fluid, then c, then n, all from beginning-of-step fields."""
    grid = state.grid
    V = chemotactic_velocity(grid, state.n, state.c, config.sensitivity, config.regularizer)
    dt = stable_dt(grid, V, state.u, config.scheme)
    if config.t_end is not None:
        dt = min(dt, config.t_end - state.t)
    if config.fluid_enabled:
        u_new, P = fl.advance_u(grid, state.u, state.n, dt, config.fluid, _fluid_opts(config))
    else:
        u_new, P = state.u, state.P
    c_new = advance_c(grid, state.n, state.c, state.u, dt, config.scheme)
    n_new = advance_n(grid, state.n, state.c, state.u, dt, config.sensitivity, config.regularizer, config.scheme, V=V)
    new = replace(state, n=n_new, c=c_new, u=tuple(u_new), P=P, t=state.t + dt, step=state.step + 1)
    return new, dt


def _record(state: SimulationState, config: SimulationConfig) -> DiagnosticsRecord:
    return record_step(
        state.grid, state.t, state.n, state.c, state.u, state.n_mean,
        th=config.threshold,
        scalar_sensitivity=config.sensitivity.is_scalar,
        q=config.q,
        c_floor=config.c_floor,
    )


def fit_rates(records: list[DiagnosticsRecord], c0_max: float):
    """Tail fits for sup|c|, sup|n - mean| and ||u||_2.

    The window starts once sup|c| has dropped below a tenth of its initial
    value and covers the last half of what remains above round-off.
    """
    t = np.array([r.t for r in records])
    series = {
        "linf_c": np.array([r.linf_c for r in records]),
        "linf_n_dev": np.array([r.linf_n_dev for r in records]),
        "u_l2": np.sqrt(2.0 * np.array([r.kinetic for r in records])),
    }
    t_start = t[0]
    if c0_max > 0:
        below = np.nonzero(series["linf_c"] <= 0.1 * c0_max)[0]
        t_start = t[below[0]] if below.size else t[len(t) // 2]
    rates, errors = {}, {}
    for name, v in series.items():
        try:
            peak = float(np.max(v))
            if peak <= 0:
                raise RateFitError("series is identically zero")
            window = tail_window(t, v, t_start, NOISE_FLOOR * peak)
            rates[name] = fit_decay_rate(t, v, window)
        except RateFitError as exc:
            rates[name] = None
            errors[name] = str(exc)
    return rates, errors


def run_simulation(
    config: SimulationConfig,
    sinks=(),
    state: SimulationState | None = None,
    monitor: Monitor | None = None,
    checkpoint_dir=None,
    max_steps: int | None = None,
) -> RunSummary:
    """Advance until the horizon (or step budget) and summarise the run."""
    wall0 = time.perf_counter()
    resumed = state is not None
    if state is None:
        state = make_initial_data(config)
    if config.t_end is None:
        config = replace(config, t_end=default_t_end(config, state))
    if monitor is None:
        monitor = Monitor(
            c0_max=float(np.max(state.c)),
            mass0=lp_norm(state.grid, state.n, 1),
            enforce_lyapunov=config.enforce_smallness,
        )
    budget = max_steps if max_steps is not None else config.max_steps
    admissibility = check_smallness(state.c, config.threshold) if not resumed else SmallnessReport(
        monitor.c0_max < config.threshold.delta0, config.threshold.delta0 - monitor.c0_max
    )

    records = []
    if not resumed:
        rec = _record(state, config)
        monitor.check(rec, None, config.scheme.solver_tol)
        records.append(rec)
        for s in sinks:
            s.record(rec)
            if config.snapshot_every:
                s.snapshot(state)

    solver_failure = None
    steps_taken = 0
    t_stop = config.t_end * (1 - 1e-12)
    while state.t < t_stop and (not budget or steps_taken < budget):
        try:
            state, dt = step_state(state, config)
        except SolverError as exc:
            solver_failure = str(exc)
            log.error("solver failure at step %d: %s", state.step, exc)
            if checkpoint_dir is not None:
                save_checkpoint(Path(checkpoint_dir) / "failure", state, config, monitor)
            break
        steps_taken += 1
        if state.step % config.output_every == 0:
            rec = _record(state, config)
            found = monitor.check(rec, dt if config.fluid_enabled else None, config.scheme.solver_tol)
            records.append(rec)
            for s in sinks:
                s.record(rec)
            if found:
                for msg in found:
                    log.warning("invariant violation: %s", msg)
                if config.on_violation == "abort":
                    break
        if config.snapshot_every and state.step % config.snapshot_every == 0:
            for s in sinks:
                s.snapshot(state)
        if checkpoint_dir is not None and config.checkpoint_every and state.step % config.checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / "latest", state, config, monitor)

    if checkpoint_dir is not None and solver_failure is None:
        save_checkpoint(Path(checkpoint_dir) / "final", state, config, monitor)

    spectral = state.spectral
    if config.stokes_estimate and config.fluid_enabled:
        try:
            lam_s = fl.estimate_lambda1_stokes(state.grid, _fluid_opts(config), seed=config.seed)
            spectral = replace(spectral, lambda1_stokes=lam_s)
        except (fl.FitError, SolverError) as exc:
            log.warning("Stokes eigenvalue estimate failed: %s", exc)

    rates, fit_errors = fit_rates(records, monitor.c0_max) if len(records) >= 10 else ({}, {"all": "too few records"})
    base = min(state.n_mean, spectral.lambda1_neumann_continuum)
    targets = {"linf_c": 0.9 * base, "linf_n_dev": 0.9 * base}
    n_fit = rates.get("linf_n_dev")
    if n_fit is not None and spectral.lambda1_stokes is not None:
        targets["u_l2"] = 0.9 * min(n_fit.rate, spectral.lambda1_stokes)

    final = records[-1] if records else _record(state, config)
    return RunSummary(
        steps=steps_taken,
        wall_time=time.perf_counter() - wall0,
        final=final,
        rates=rates,
        targets=targets,
        admissibility=admissibility,
        violations=list(monitor.violations),
        spectral=spectral,
        solver_failure=solver_failure,
        fit_errors=fit_errors,
        records=records,
    )


def resume_simulation(checkpoint, sinks=(), checkpoint_dir=None, max_steps: int | None = None) -> tuple[RunSummary, SimulationState]:
    state, config, monitor = load_checkpoint(checkpoint)
    summary = run_simulation(config, sinks, state=state, monitor=monitor, checkpoint_dir=checkpoint_dir, max_steps=max_steps)
    return summary, state
