"""Flat ``section.key = value`` configuration files and named presets.

Lines are ``key = value``; ``#`` starts a comment.  ``run.preset = NAME``
loads a bundled preset first and lets the remaining lines override it.
Unknown keys are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .fluid import FluidParams
from .grid import GridSpec, make_grid
from .sensitivity import (
    Envelope,
    ModulatedSensitivity,
    RegularizerParams,
    RotationalSensitivity,
    ScalarSensitivity,
    SensitivityModel,
    ThresholdParams,
    cosine_modulation,
    smallness_threshold,
)
from .transport import TransportScheme


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float(s: str) -> float:
    v = s.strip().lower().replace(" ", "")
    # allow simple multiples of pi for angles, e.g. "pi/4", "0.25*pi"
    if "pi" in v:
        num, _, den = v.partition("/")
        factor = num.replace("*pi", "").replace("pi*", "").replace("pi", "")
        factor = {"": "1", "-": "-1", "+": "1"}.get(factor, factor)
        value = float(factor) * math.pi
        return value / float(den) if den else value
    # and simple fractions such as "1/96"
    num, sep, den = v.partition("/")
    if sep:
        return float(num) / float(den)
    return float(v)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace("x", ",").split(",") if x.strip())


def _choice(*options):
    def parse(s: str) -> str:
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v

    return parse


REQUIRED = object()

# key -> (parser, default); REQUIRED has no default, None means "derived"
SCHEMA = {
    "grid.dim": (int, REQUIRED),
    "grid.extents": (_floats, REQUIRED),
    "grid.cells": (_ints, REQUIRED),
    "fluid.enabled": (_bool, True),
    "fluid.kappa": (int, 1),
    "fluid.gravity": (_float, 1.0),
    "fluid.phi": (_choice("zero", "vertical"), "vertical"),
    "sensitivity.kind": (_choice("scalar", "rotational", "modulated"), REQUIRED),
    "sensitivity.chi": (_float, 1.0),
    "sensitivity.s0": (_float, 1.0),
    "sensitivity.s0_slope": (_float, 0.0),
    "sensitivity.theta": (_float, math.pi / 4),
    "sensitivity.modulation": (_float, 0.5),
    "sensitivity.modulated_base": (_choice("scalar", "rotational"), "rotational"),
    "regularizer.enabled": (_bool, True),
    "regularizer.epsilon": (_float, 0.05),
    "threshold.p": (_float, 2.0),
    "threshold.h": (_float, 1.0 / 96.0),
    "threshold.enforce_smallness": (_bool, False),
    "scheme.cfl": (_float, 0.4),
    "scheme.dt_max": (_float, 5e-3),
    "scheme.solver_tol": (_float, 1e-12),
    "scheme.solver_maxiter": (int, 2000),
    "scheme.preconditioner": (_choice("spectral", "jacobi", "none"), "spectral"),
    "initial.n_profile": (_choice("uniform", "gaussian"), "gaussian"),
    "initial.n_mean": (_float, 1.0),
    "initial.n_width": (_float, 0.15),
    "initial.n_background": (_float, 0.5),
    "initial.n_center": (_floats, None),
    "initial.c_profile": (_choice("uniform", "cosine"), "cosine"),
    "initial.c_fraction": (_float, 0.5),
    "initial.c_max": (_float, None),
    "initial.c_perturbation": (_float, 0.5),
    "initial.u_profile": (_choice("zero", "vortex"), "zero"),
    "initial.u_amplitude": (_float, 0.1),
    "run.preset": (str, None),
    "run.t_end": (_float, None),
    "run.max_steps": (int, 0),
    "run.output_every": (int, 1),
    "run.snapshot_every": (int, 0),
    "run.checkpoint_every": (int, 0),
    "run.seed": (int, 0),
    "run.on_violation": (_choice("abort", "record"), "abort"),
    "diagnostics.q": (_float, 4.0),
    "diagnostics.c_floor": (_float, 1e-8),
    "diagnostics.stokes_estimate": (_bool, True),
}


@dataclass(frozen=True)
class InitialDataSpec:
    n_profile: str
    n_mean: float
    n_width: float
    n_background: float
    n_center: tuple[float, ...]
    c_profile: str
    c_max: float
    c_perturbation: float
    u_profile: str
    u_amplitude: float


@dataclass(frozen=True)
class SimulationConfig:
    grid: GridSpec
    fluid: FluidParams
    fluid_enabled: bool
    sensitivity: SensitivityModel
    regularizer: RegularizerParams
    threshold: ThresholdParams
    enforce_smallness: bool
    scheme: TransportScheme
    initial: InitialDataSpec
    t_end: float | None
    max_steps: int
    output_every: int
    snapshot_every: int
    checkpoint_every: int
    seed: int
    on_violation: str
    q: float
    c_floor: float
    stokes_estimate: bool
    source: tuple[tuple[str, str], ...]  # resolved raw key/value pairs

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.source)


def preset_names() -> list[str]:
    root = resources.files("chemflux") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    res = resources.files("chemflux") / "presets" / f"{name}.cfg"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return res.read_text()


def parse_pairs(text: str, origin: str = "<config>") -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{origin}:{lineno}: expected 'section.key = value', got {raw.strip()!r}")
        if key not in SCHEMA:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        pairs[key] = value
    return pairs


def _resolve(pairs: dict[str, str], origin: str, depth: int = 0) -> dict[str, str]:
    name = pairs.get("run.preset")
    if name is None:
        return pairs
    if depth > 4:
        raise ConfigError("preset chain too deep")
    base = parse_pairs(preset_text(name), f"preset:{name}")
    base = _resolve(base, f"preset:{name}", depth + 1)
    merged = dict(base)
    merged.update(pairs)
    return merged


def _build_sensitivity(v: dict, grid: GridSpec) -> SensitivityModel:
    kind = v["sensitivity.kind"]
    env = Envelope(v["sensitivity.s0"], v["sensitivity.s0_slope"])
    scalar = ScalarSensitivity(v["sensitivity.chi"])
    rot = RotationalSensitivity(env, v["sensitivity.theta"])
    if kind == "scalar":
        return scalar
    if kind == "rotational":
        return rot
    base = scalar if v["sensitivity.modulated_base"] == "scalar" else rot
    amp = v["sensitivity.modulation"]
    return ModulatedSensitivity(base, cosine_modulation(grid.extents, amp), f"cosine({amp})")


def build_config(pairs: dict[str, str], origin: str = "<config>") -> SimulationConfig:
    pairs = _resolve(pairs, origin)
    v = {}
    for key, (parse, default) in SCHEMA.items():
        if key in pairs:
            try:
                v[key] = parse(pairs[key])
            except ValueError as exc:
                raise ConfigError(f"{origin}: bad value for {key}: {exc}") from exc
        elif default is REQUIRED:
            raise ConfigError(f"{origin}: missing required key {key}")
        else:
            v[key] = default

    try:
        grid = make_grid(v["grid.dim"], v["grid.extents"], v["grid.cells"])
    except ValueError as exc:
        raise ConfigError(f"{origin}: invalid grid: {exc}") from exc

    kappa = v["fluid.kappa"]
    if kappa not in (0, 1):
        raise ConfigError(f"{origin}: fluid.kappa must be 0 or 1, got {kappa}")
    if kappa == 1 and grid.dim == 3 and v["fluid.enabled"]:
        raise ConfigError(
            f"{origin}: Navier-Stokes convection (fluid.kappa = 1) is only covered in two dimensions; "
            "use fluid.kappa = 0 (Stokes) for dim = 3"
        )
    fluid = FluidParams(kappa, v["fluid.gravity"], v["fluid.phi"])

    try:
        model = _build_sensitivity(v, grid)
        reg = RegularizerParams(v["regularizer.epsilon"], v["regularizer.enabled"])
        reg.validate(grid)
        th = smallness_threshold(v["threshold.p"], v["threshold.h"], model.envelope)
        scheme = TransportScheme(
            cfl=v["scheme.cfl"],
            dt_max=v["scheme.dt_max"],
            solver_tol=v["scheme.solver_tol"],
            solver_maxiter=v["scheme.solver_maxiter"],
            preconditioner=None if v["scheme.preconditioner"] == "none" else v["scheme.preconditioner"],
        )
    except ValueError as exc:
        raise ConfigError(f"{origin}: {exc}") from exc

    c_max = v["initial.c_max"]
    if c_max is None:
        c_max = v["initial.c_fraction"] * th.delta0
    if c_max < 0:
        raise ConfigError(f"{origin}: initial concentration must be non-negative (got max {c_max})")
    if v["initial.n_mean"] < 0:
        raise ConfigError(f"{origin}: initial cell density must be non-negative (got mean {v['initial.n_mean']})")
    if not 0.0 <= v["initial.n_background"] <= 1.0:
        raise ConfigError(f"{origin}: initial.n_background must lie in [0, 1]")
    if not 0.0 <= v["initial.c_perturbation"] <= 1.0:
        raise ConfigError(f"{origin}: initial.c_perturbation must lie in [0, 1] to keep c0 >= 0")
    if v["threshold.enforce_smallness"] and not c_max < th.delta0:
        raise ConfigError(
            f"{origin}: sup-norm of the initial concentration ({c_max:.6g}) must stay below the "
            f"smallness threshold delta0 = {th.delta0:.6g} (threshold.enforce_smallness = true)"
        )
    center = v["initial.n_center"]
    if center is None:
        center = (0.35, 0.6, 0.5)[: grid.dim]
    if len(center) != grid.dim:
        raise ConfigError(f"{origin}: initial.n_center needs {grid.dim} fractions")
    initial = InitialDataSpec(
        v["initial.n_profile"], v["initial.n_mean"], v["initial.n_width"], v["initial.n_background"],
        tuple(center), v["initial.c_profile"], c_max, v["initial.c_perturbation"],
        v["initial.u_profile"], v["initial.u_amplitude"],
    )
    if v["run.output_every"] < 1:
        raise ConfigError(f"{origin}: run.output_every must be >= 1")
    if v["run.t_end"] is not None and not v["run.t_end"] > 0:
        raise ConfigError(f"{origin}: run.t_end must be positive")

    return SimulationConfig(
        grid=grid,
        fluid=fluid,
        fluid_enabled=v["fluid.enabled"],
        sensitivity=model,
        regularizer=reg,
        threshold=th,
        enforce_smallness=v["threshold.enforce_smallness"],
        scheme=scheme,
        initial=initial,
        t_end=v["run.t_end"],
        max_steps=v["run.max_steps"],
        output_every=v["run.output_every"],
        snapshot_every=v["run.snapshot_every"],
        checkpoint_every=v["run.checkpoint_every"],
        seed=v["run.seed"],
        on_violation=v["run.on_violation"],
        q=v["diagnostics.q"],
        c_floor=v["diagnostics.c_floor"],
        stokes_estimate=v["diagnostics.stokes_estimate"],
        source=tuple(sorted(pairs.items())),
    )


def loads(text: str, origin: str = "<config>", **overrides) -> SimulationConfig:
    pairs = parse_pairs(text, origin)
    for k, val in overrides.items():
        key = k.replace("__", ".")
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        pairs[key] = str(val)
    return build_config(pairs, origin)


def load_config(path_or_preset, **overrides) -> SimulationConfig:
    """Load a config file, or a bundled preset when no such file exists.

    Keyword overrides use ``section__key=value``.
    """
    p = Path(path_or_preset)
    if p.is_file():
        return loads(p.read_text(), str(p), **overrides)
    name = str(path_or_preset)
    if name in preset_names():
        return loads(f"run.preset = {name}\n", f"preset:{name}", **overrides)
    raise ConfigError(f"no config file or preset named {name!r}")
