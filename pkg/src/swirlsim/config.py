"""Run configuration: YAML parsing with strict validation and echoed defaults.

Every run is described by one YAML document of sections (geometry, resolution,
fluid, flow, closure, time, particles, stations, output, seed). Unknown keys
are rejected with their path; syntax errors carry the YAML line number.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .geometry import DeviceSpec, GridVariant
from .state import BoundaryConditions
from .turbulence import (
    ClosureConfig,
    ClosureModel,
    CurvatureCorrectionConstants,
    KEpsilonConstants,
    ShieldingConstants,
    SSTConstants,
    WALEConstants,
)


@dataclass(frozen=True)
class ParticlePhaseConfig:
    count: int
    diameter: float
    density: float = 1540.0


@dataclass(frozen=True)
class ParticlesConfig:
    carrier: ParticlePhaseConfig = ParticlePhaseConfig(count=1000, diameter=280e-6)
    fine: ParticlePhaseConfig = ParticlePhaseConfig(count=10000, diameter=1.24e-6)
    restitution_normal: float = 0.7
    restitution_tangential: float = 0.9
    gravity: bool = False


@dataclass(frozen=True)
class TimeConfig:
    cfl: float = 0.8
    max_steps: int = 200000
    init_max_iters: int = 300
    discard_flow_throughs: float = 5.0
    stats_flow_throughs: float = 20.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs/out"
    checkpoint_every: int = 0
    snapshot_every: int = 0


@dataclass(frozen=True)
class RunConfig:
    geometry: DeviceSpec = field(default_factory=DeviceSpec)
    h: float = 0.0008
    bc: BoundaryConditions = field(default_factory=lambda: BoundaryConditions(re_target=8400.0))
    closure: ClosureConfig = field(default_factory=ClosureConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    particles: ParticlesConfig = field(default_factory=ParticlesConfig)
    stations: tuple = (0.0, 1.0, 2.0, 3.0, 5.0)
    min_profile_samples: int = 1000
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    label: str = ""

    def run_label(self) -> str:
        if self.label:
            return self.label
        return f"{self.geometry.grid_variant.value}_{self.closure.model.value}"


def _path(prefix, key):
    return f"{prefix}.{key}" if prefix else str(key)


class _Section:
    """Mapping view that rejects unknown keys and tracks its path."""

    def __init__(self, data, path=""):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected a mapping, got "
                              f"{type(data).__name__}")
        self.data = dict(data)
        self.path = path
        self.seen = set()

    def get(self, key, default=None, kind=None, required=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{_path(self.path, key)}: required key missing")
            return default
        value = self.data[key]
        if kind is float:
            if isinstance(value, str):
                # YAML 1.1 reads "1e-6" (no dot) as a string; accept it anyway
                try:
                    return float(value)
                except ValueError:
                    raise ConfigError(
                        f"{_path(self.path, key)}: expected a number") from None
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{_path(self.path, key)}: expected a number")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{_path(self.path, key)}: expected an integer")
            return int(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{_path(self.path, key)}: expected a boolean")
            return value
        if kind is str:
            if not isinstance(value, str):
                raise ConfigError(f"{_path(self.path, key)}: expected a string")
            return value
        return value

    def sub(self, key):
        self.seen.add(key)
        return _Section(self.data.get(key), _path(self.path, key))

    def finish(self):
        unknown = sorted(set(self.data) - self.seen)
        if unknown:
            raise ConfigError(
                f"{self.path or 'config'}: unknown key(s) {', '.join(map(repr, unknown))}"
            )


def _enum_value(section, key, enum_cls, default):
    raw = section.get(key, default=None, kind=str)
    if raw is None:
        return default
    try:
        return enum_cls(raw.lower())
    except ValueError:
        options = ", ".join(e.value for e in enum_cls)
        raise ConfigError(
            f"{_path(section.path, key)}: {raw!r} is not one of ({options})"
        ) from None


def _geometry(section) -> DeviceSpec:
    base = DeviceSpec()
    box = section.get("discharge_box")
    if box is not None:
        if (not isinstance(box, (list, tuple)) or len(box) != 3
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in box)):
            raise ConfigError(f"{_path(section.path, 'discharge_box')}: expected "
                              "a list of three lengths [m]")
        box = tuple(float(v) for v in box)
    spec = DeviceSpec(
        chamber_diameter=section.get("chamber_diameter", base.chamber_diameter, float),
        chamber_height=section.get("chamber_height", base.chamber_height, float),
        mouthpiece_diameter=section.get("mouthpiece_diameter", base.mouthpiece_diameter, float),
        mouthpiece_length=section.get("mouthpiece_length", base.mouthpiece_length, float),
        inlet_width=section.get("inlet_width", base.inlet_width, float),
        inlet_height=section.get("inlet_height", base.inlet_height, float),
        inlet_tangential_offset=section.get("inlet_tangential_offset", None, float),
        grid_variant=_enum_value(section, "grid_variant", GridVariant, base.grid_variant),
        grid_bar_width=section.get("grid_bar_width", base.grid_bar_width, float),
        grid_opening=section.get("grid_opening", base.grid_opening, float),
        grid_axial_position=section.get("grid_axial_position", None, float),
        discharge_box_dimensions=box or base.discharge_box_dimensions,
        plenum_radius=section.get("plenum_radius", base.plenum_radius, float),
        wall_thickness=section.get("wall_thickness", base.wall_thickness, float),
    )
    section.finish()
    try:
        spec.validate()
    except Exception as err:
        raise ConfigError(f"{section.path or 'geometry'}: {err}") from err
    return spec


def _constants_group(section, key, cls):
    sub = section.sub(key)
    kwargs = {}
    for fld in dataclasses.fields(cls):
        val = sub.get(fld.name, None, float)
        if val is not None:
            kwargs[fld.name] = val
    sub.finish()
    try:
        return cls(**kwargs) if kwargs else cls()
    except Exception as err:
        raise ConfigError(f"{_path(section.path, key)}: {err}") from err


def _closure(section) -> ClosureConfig:
    model = _enum_value(section, "model", ClosureModel, ClosureModel.SBES)
    cfg = dict(
        model=model,
        curvature_correction=section.get("curvature_correction", False, bool),
        wall_functions=section.get("wall_functions", True, bool),
        ke=_constants_group(section, "ke_constants", KEpsilonConstants),
        sst=_constants_group(section, "sst_constants", SSTConstants),
        cc=_constants_group(section, "cc_constants", CurvatureCorrectionConstants),
        wale=_constants_group(section, "wale_constants", WALEConstants),
        shielding=_constants_group(section, "shielding_constants", ShieldingConstants),
    )
    section.finish()
    try:
        return ClosureConfig(**cfg)
    except Exception as err:
        raise ConfigError(f"{section.path or 'closure'}: {err}") from err


def _phase(section, key, default: ParticlePhaseConfig) -> ParticlePhaseConfig:
    sub = section.sub(key)
    out = ParticlePhaseConfig(
        count=sub.get("count", default.count, int),
        diameter=sub.get("diameter", default.diameter, float),
        density=sub.get("density", default.density, float),
    )
    sub.finish()
    if out.count <= 0:
        raise ConfigError(f"{_path(section.path, key)}.count: must be positive")
    if out.diameter <= 0 or out.density <= 0:
        raise ConfigError(f"{_path(section.path, key)}: diameter and density "
                          "must be positive")
    return out


def parse_config(text: str) -> RunConfig:
    """Parse and validate one YAML run configuration.

    Raises ConfigError with a line number for syntax errors and with the field
    path for semantic violations; returns a fully validated RunConfig with
    defaults applied.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" (line {mark.line + 1})" if mark is not None else ""
        raise ConfigError(f"config syntax error{where}: {err}") from err
    root = _Section(data, "")

    geometry = _geometry(root.sub("geometry"))

    res = root.sub("resolution")
    h = res.get("h", RunConfig().h, float)
    res.finish()
    if h <= 0.0:
        raise ConfigError("resolution.h: must be positive")

    fluid = root.sub("fluid")
    rho = fluid.get("rho", 1.204, float)
    nu = fluid.get("nu", 1.5e-5, float)
    fluid.finish()

    flow = root.sub("flow")
    re_target = flow.get("re_target", 8400.0, float)
    intensity = flow.get("inlet_turbulence_intensity", 0.01, float)
    p_total = flow.get("inlet_total_pressure", 0.0, float)
    flow.finish()
    try:
        bc = BoundaryConditions(re_target=re_target, inlet_total_pressure=p_total,
                                turbulence_intensity=intensity, rho=rho, nu=nu)
    except ValueError as err:
        raise ConfigError(f"flow.re_target/fluid: {err}") from err

    closure = _closure(root.sub("closure"))

    tsec = root.sub("time")
    time_cfg = TimeConfig(
        cfl=tsec.get("cfl", 0.8, float),
        max_steps=tsec.get("max_steps", 200000, int),
        init_max_iters=tsec.get("init_max_iters", 300, int),
        discard_flow_throughs=tsec.get("discard_flow_throughs", 5.0, float),
        stats_flow_throughs=tsec.get("stats_flow_throughs", 20.0, float),
    )
    tsec.finish()
    if not 0.0 < time_cfg.cfl <= 1.0:
        raise ConfigError("time.cfl: must lie in (0, 1]")

    psec = root.sub("particles")
    particles = ParticlesConfig(
        carrier=_phase(psec, "carrier", ParticlesConfig().carrier),
        fine=_phase(psec, "fine", ParticlesConfig().fine),
        restitution_normal=psec.get("restitution_normal", 0.7, float),
        restitution_tangential=psec.get("restitution_tangential", 0.9, float),
        gravity=psec.get("gravity", False, bool),
    )
    psec.finish()
    for name, e in (("restitution_normal", particles.restitution_normal),
                    ("restitution_tangential", particles.restitution_tangential)):
        if not 0.0 < e <= 1.0:
            raise ConfigError(f"particles.{name}: must lie in (0, 1]")

    stations = root.get("stations", list(RunConfig().stations))
    if (not isinstance(stations, (list, tuple)) or not stations
            or not all(isinstance(s, (int, float)) and not isinstance(s, bool)
                       for s in stations)):
        raise ConfigError("stations: expected a non-empty list of x/Da values")
    stations = tuple(float(s) for s in stations)
    if any(s < 0.0 for s in stations):
        raise ConfigError("stations: x/Da values must be non-negative")

    osec = root.sub("output")
    output = OutputConfig(
        directory=osec.get("directory", "runs/out", str),
        checkpoint_every=osec.get("checkpoint_every", 0, int),
        snapshot_every=osec.get("snapshot_every", 0, int),
    )
    osec.finish()

    seed = root.get("seed", 0, int)
    min_samples = root.get("min_profile_samples", 1000, int)
    label = root.get("label", "", str)
    root.finish()

    if h > geometry.inlet_width / 3.0 + 1e-12:
        raise ConfigError(
            f"resolution.h: {h:g} m is too coarse for geometry.inlet_width "
            f"= {geometry.inlet_width:g} m (needs h <= inlet_width/3)"
        )

    return RunConfig(
        geometry=geometry, h=h, bc=bc, closure=closure, time=time_cfg,
        particles=particles, stations=stations, min_profile_samples=min_samples,
        output=output, seed=seed, label=label,
    )


def load_config(path) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read())


def effective_config(cfg: RunConfig) -> dict:
    """Fully resolved configuration (defaults applied) for echoing."""
    g = cfg.geometry
    return {
        "geometry": {
            "chamber_diameter": g.chamber_diameter,
            "chamber_height": g.chamber_height,
            "mouthpiece_diameter": g.mouthpiece_diameter,
            "mouthpiece_length": g.mouthpiece_length,
            "inlet_width": g.inlet_width,
            "inlet_height": g.inlet_height,
            "inlet_tangential_offset": g.tangential_offset,
            "grid_variant": g.grid_variant.value,
            "grid_bar_width": g.grid_bar_width,
            "grid_opening": g.grid_opening,
            "grid_axial_position": g.grid_axial_position,
            "discharge_box": list(g.discharge_box_dimensions),
            "plenum_radius": g.plenum_radius,
            "wall_thickness": g.wall_thickness,
        },
        "resolution": {"h": cfg.h},
        "fluid": {"rho": cfg.bc.rho, "nu": cfg.bc.nu},
        "flow": {
            "re_target": cfg.bc.re_target,
            "inlet_turbulence_intensity": cfg.bc.turbulence_intensity,
            "inlet_total_pressure": cfg.bc.inlet_total_pressure,
        },
        "closure": {
            "model": cfg.closure.model.value,
            "curvature_correction": cfg.closure.curvature_correction,
            "wall_functions": cfg.closure.wall_functions,
        },
        "time": dataclasses.asdict(cfg.time),
        "particles": {
            "carrier": dataclasses.asdict(cfg.particles.carrier),
            "fine": dataclasses.asdict(cfg.particles.fine),
            "restitution_normal": cfg.particles.restitution_normal,
            "restitution_tangential": cfg.particles.restitution_tangential,
            "gravity": cfg.particles.gravity,
        },
        "stations": list(cfg.stations),
        "min_profile_samples": cfg.min_profile_samples,
        "output": dataclasses.asdict(cfg.output),
        "seed": cfg.seed,
        "label": cfg.run_label(),
    }


def effective_config_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(effective_config(cfg), sort_keys=False)
