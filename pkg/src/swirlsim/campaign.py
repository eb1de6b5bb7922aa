"""Single-run pipeline and multi-run campaign orchestration.

A run: build mesh -> pseudo-steady init -> transient with statistics windows
and particle tracking -> CSV/VTK artifacts. A campaign executes the device x
closure matrix and emits a comparison table with the qualitative ordering
checks (impacts, fine-particle spread, pressure drop, centreline deficit).
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import particles as P
from . import solver as S
from . import statistics as ST
from . import turbulence as T
from .checkpoint import write_checkpoint
from .config import RunConfig, effective_config_yaml
from .errors import SwirlsimError
from .geometry import GridVariant, build_device_mesh, station_sampling_lines
from .vtkio import write_mesh_vtk, write_snapshot_vtk


@dataclass
class RunResult:
    label: str
    status: str = "ok"
    error: str = ""
    directory: str = ""
    grid_variant: str = ""
    closure: str = ""
    pressure_drop_pa: float = float("nan")
    carrier_median_impacts: float = float("nan")
    carrier_median_impact_ke: float = float("nan")
    fine_spread_r90: dict = field(default_factory=dict)  # station -> r90 [Da]
    centerline_u_over_peak: float = float("nan")
    centerline_backflow: bool = False
    steps: int = 0
    sim_time: float = 0.0
    wall_time: float = 0.0
    stokes_numbers: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = {
            "label": self.label,
            "status": self.status,
            "grid_variant": self.grid_variant,
            "closure": self.closure,
            "pressure_drop_pa": self.pressure_drop_pa,
            "carrier_median_impacts": self.carrier_median_impacts,
            "carrier_median_impact_ke": self.carrier_median_impact_ke,
            "centerline_u_over_peak": self.centerline_u_over_peak,
            "centerline_backflow": int(self.centerline_backflow),
            "steps": self.steps,
        }
        for s, r in sorted(self.fine_spread_r90.items()):
            row[f"fine_r90_x{s:g}"] = r
        return row


def run_single(cfg: RunConfig, quiet: bool = False) -> RunResult:
    """Execute one configured run and write its artifacts."""
    t_wall = time.perf_counter()
    label = cfg.run_label()
    out_dir = os.path.join(cfg.output.directory, label)
    os.makedirs(out_dir, exist_ok=True)
    result = RunResult(label=label, directory=out_dir,
                       grid_variant=cfg.geometry.grid_variant.value,
                       closure=cfg.closure.model.value)

    def log(msg):
        if not quiet:
            print(f"[{label}] {msg}", flush=True)

    with open(os.path.join(out_dir, "effective_config.yaml"), "w") as f:
        f.write(effective_config_yaml(cfg))

    mesh = build_device_mesh(cfg.geometry, cfg.h)
    write_mesh_vtk(mesh, os.path.join(out_dir, "mesh.vtk"))
    jet = cfg.bc.jet_reference(mesh)
    mu = cfg.bc.rho * cfg.bc.nu
    result.stokes_numbers = {
        "carrier": P.stokes_number(cfg.particles.carrier.diameter,
                                   cfg.particles.carrier.density, jet),
        "fine": P.stokes_number(cfg.particles.fine.diameter,
                                cfg.particles.fine.density, jet),
    }
    log(f"mesh {mesh.dims}, {int(np.count_nonzero(mesh.fluid_mask))} fluid cells, "
        f"Ua = {jet.Ua:.3g} m/s")

    opts = S.SolverOptions(cfl_target=cfg.time.cfl)
    state = S.initialize_state(mesh, cfg.bc, cfg.closure, opts,
                               max_iters=cfg.time.init_max_iters)
    log(f"initialized in {len(state.diag.get('init_residuals', []))} pseudo-steps")

    ftt = mesh.dims[0] * mesh.h / jet.Ua
    t_discard = cfg.time.discard_flow_throughs * ftt
    t_end = t_discard + cfg.time.stats_flow_throughs * ftt

    lines = station_sampling_lines(mesh, cfg.stations)
    stats = [ST.StationStatistics(line, jet) for line in lines]
    dp_acc = S.PressureDropAccumulator(mesh, cfg.bc)
    restitution = P.RestitutionModel(
        tangential=cfg.particles.restitution_tangential,
        normal=cfg.particles.restitution_normal,
    )
    gravity = (0.0, -9.81, 0.0) if cfg.particles.gravity else (0.0, 0.0, 0.0)
    trackers = {}

    window_started = False
    step = 0
    next_report = time.perf_counter() + 30.0
    while state.t < t_end and step < cfg.time.max_steps:
        dt = min(S.stable_dt(state, mesh, cfg.time.cfl, floor_speed=jet.Ua),
                 t_end - state.t)
        S.advance_timestep(state, mesh, cfg.bc, cfg.closure, dt, opts)
        step += 1
        if cfg.output.checkpoint_every and step % cfg.output.checkpoint_every == 0:
            write_checkpoint(state, os.path.join(out_dir, f"checkpoint_{step:08d}.bin"),
                             h=mesh.h)
        if cfg.output.snapshot_every and step % cfg.output.snapshot_every == 0:
            write_snapshot_vtk(mesh, state, os.path.join(out_dir, f"snapshot_{step:08d}.vtk"))
        if state.t >= t_discard:
            if not window_started:
                window_started = True
                for kind, phase in (("carrier", cfg.particles.carrier),
                                    ("fine", cfg.particles.fine)):
                    release = P.ReleaseSpec(
                        kind=P.ReleaseKind(kind), count=phase.count,
                        seed=cfg.seed + (0 if kind == "carrier" else 1),
                        diameter=phase.diameter, density=phase.density,
                    )
                    cloud = P.seed_particles(release, mesh, state)
                    trackers[kind] = P.PopulationTracker(
                        cloud, mesh, stations=cfg.stations,
                        restitution=restitution, nu=cfg.bc.nu, rho_f=cfg.bc.rho,
                        gravity=gravity,
                    )
                log("statistics window opened, particles released")
            ST.accumulate(stats, state, mesh)
            dp_acc.add(state)
            for tracker in trackers.values():
                tracker.step(state, dt)
        if not quiet and time.perf_counter() > next_report:
            log(f"step {step}, t = {state.t:.4g}/{t_end:.4g} s, "
                f"div = {state.diag['max_divergence']:.2e}")
            next_report = time.perf_counter() + 30.0

    result.steps = step
    result.sim_time = state.t

    profiles = ST.finalize_profiles(stats, min_samples=cfg.min_profile_samples)
    ST.profiles_to_csv(profiles, os.path.join(out_dir, "profiles.csv"))

    diag = T.wall_yplus(state, mesh, cfg.bc.nu, cfg.closure)
    diag.to_csv(os.path.join(out_dir, "yplus_report.csv"))

    try:
        # window bounded by the configured stats span (one step of slack)
        result.pressure_drop_pa = dp_acc.value(
            min_flow_throughs=min(10.0, 0.95 * cfg.time.stats_flow_throughs))
    except SwirlsimError:
        result.pressure_drop_pa = float("nan")
    with open(os.path.join(out_dir, "pressure_drop.csv"), "w") as f:
        f.write("pressure_drop_pa,window_s,flow_through_s\n")
        f.write(f"{result.pressure_drop_pa:.17g},"
                f"{(dp_acc.t_last or 0) - (dp_acc.t_first or 0):.17g},"
                f"{dp_acc.flow_through_time():.17g}\n")

    for kind, tracker in trackers.items():
        P.particles_to_csv(tracker.cloud, os.path.join(out_dir, f"particles_{kind}.csv"))
        P.crossings_to_csv(tracker.crossings,
                           os.path.join(out_dir, f"crossings_{kind}.csv"))
        cdfs = ST.particle_cdfs(tracker.crossings, tracker.cloud)
        for name, cdf in cdfs.items():
            cdf.to_csv(os.path.join(out_dir, f"cdf_{kind}_{name}.csv"))
        if kind == "carrier":
            result.carrier_median_impacts = float(np.median(tracker.cloud.impact_count))
            result.carrier_median_impact_ke = float(
                np.median(tracker.cloud.mean_impact_ke()))
        else:
            for s in cfg.stations:
                samples = tracker.crossings.radial_samples(s)
                if samples.size:
                    result.fine_spread_r90[float(s)] = float(
                        np.percentile(samples, 90.0))

    # centreline deficit / back-flow signature at x/Da = 0
    p0 = next((p for p in profiles if abs(p.station) < 1e-9), None)
    if p0 is not None:
        i_c = int(np.argmin(np.abs(p0.y_over_Da)))
        u_c = p0.u_mean[i_c]
        u_peak = float(p0.u_mean.max())
        result.centerline_u_over_peak = float(u_c / u_peak) if u_peak > 0 else float("nan")
        result.centerline_backflow = bool(u_c < 0.0)

    with open(os.path.join(out_dir, "run_result.json"), "w") as f:
        json.dump(dataclasses.asdict(result), f, indent=2, sort_keys=True)
    result.wall_time = time.perf_counter() - t_wall
    log(f"done: {step} steps, dP = {result.pressure_drop_pa:.4g} Pa, "
        f"{result.wall_time:.0f} s wall time")
    return result


def track_from_checkpoints(cfg: RunConfig, flow_dir, release: str) -> str:
    """Replay stored checkpoints as frozen snapshots and track one release."""
    import glob

    from .checkpoint import read_checkpoint

    paths = sorted(glob.glob(os.path.join(flow_dir, "checkpoint_*.bin")))
    if not paths:
        raise SwirlsimError(f"no checkpoint_*.bin files under {flow_dir}")
    mesh = build_device_mesh(cfg.geometry, cfg.h)
    phase = getattr(cfg.particles, release)
    spec = P.ReleaseSpec(kind=P.ReleaseKind(release), count=phase.count,
                         seed=cfg.seed, diameter=phase.diameter,
                         density=phase.density)
    first = read_checkpoint(paths[0], expected_dims=mesh.dims)
    cloud = P.seed_particles(spec, mesh, first)
    restitution = P.RestitutionModel(
        tangential=cfg.particles.restitution_tangential,
        normal=cfg.particles.restitution_normal)
    states = (read_checkpoint(p, expected_dims=mesh.dims) for p in paths)
    cloud, summary, crossings = P.track_population(
        cloud, states, mesh, stations=cfg.stations, restitution=restitution,
        nu=cfg.bc.nu, rho_f=cfg.bc.rho)
    out_dir = os.path.join(cfg.output.directory,
                           f"{cfg.run_label()}_{release}_replay")
    os.makedirs(out_dir, exist_ok=True)
    P.particles_to_csv(cloud, os.path.join(out_dir, f"particles_{release}.csv"))
    P.crossings_to_csv(crossings, os.path.join(out_dir, f"crossings_{release}.csv"))
    for name, cdf in ST.particle_cdfs(crossings, cloud).items():
        cdf.to_csv(os.path.join(out_dir, f"cdf_{release}_{name}.csv"))
    return out_dir


# ---------------------------------------------------------------------------
# campaigns


def expand_campaign(base: RunConfig, variants=None, closures=None) -> list:
    """Device x closure matrix of run configs derived from one base config."""
    variants = variants or [GridVariant.NO_GRID, GridVariant.ENTRY_GRID,
                            GridVariant.EXIT_GRID]
    closures = closures or [base.closure.model]
    out = []
    for variant in variants:
        for model in closures:
            geometry = dataclasses.replace(base.geometry, grid_variant=GridVariant(variant))
            closure = dataclasses.replace(base.closure, model=T.ClosureModel(model))
            out.append(dataclasses.replace(
                base, geometry=geometry, closure=closure,
                label=f"{geometry.grid_variant.value}_{closure.model.value}"))
    return out


@dataclass
class CampaignReport:
    results: list = field(default_factory=list)
    orderings: dict = field(default_factory=dict)

    @property
    def failed(self) -> list:
        return [r for r in self.results if r.status != "ok"]

    def ordering_checks(self) -> dict:
        """Paper-ordering verdicts over the gridded-device triple (per closure)."""
        checks = {}
        by_variant = {}
        for r in self.results:
            if r.status == "ok":
                by_variant.setdefault(r.closure, {})[r.grid_variant] = r
        for closure, group in by_variant.items():
            if set(group) < {"no_grid", "entry_grid", "exit_grid"}:
                continue
            ng, eg, xg = group["no_grid"], group["entry_grid"], group["exit_grid"]
            checks[f"{closure}:impacts_entry>exit>no"] = bool(
                eg.carrier_median_impacts > xg.carrier_median_impacts
                > ng.carrier_median_impacts)
            s5 = 5.0
            if all(s5 in r.fine_spread_r90 for r in (ng, eg, xg)):
                checks[f"{closure}:fine_spread_no>entry>exit"] = bool(
                    ng.fine_spread_r90[s5] > eg.fine_spread_r90[s5]
                    > xg.fine_spread_r90[s5])
            checks[f"{closure}:dp_grids>no_grid"] = bool(
                eg.pressure_drop_pa > ng.pressure_drop_pa
                and xg.pressure_drop_pa > ng.pressure_drop_pa)
            checks[f"{closure}:no_grid_centerline_deficit"] = bool(
                ng.centerline_backflow or ng.centerline_u_over_peak < 0.9)
            checks[f"{closure}:entry_ke_about_2x"] = bool(
                ng.carrier_median_impact_ke > 0
                and xg.carrier_median_impact_ke > 0
                and eg.carrier_median_impact_ke
                > max(ng.carrier_median_impact_ke, xg.carrier_median_impact_ke))
        return checks


def _run_guarded(cfg: RunConfig) -> RunResult:
    try:
        return run_single(cfg)
    except Exception as err:  # individual failure recorded, campaign continues
        result = RunResult(label=cfg.run_label(), status="failed",
                           error=f"{err}\n{traceback.format_exc()}",
                           grid_variant=cfg.geometry.grid_variant.value,
                           closure=cfg.closure.model.value)
        return result


def run_campaign(configs, workers: int = 1, out_dir: str | None = None) -> CampaignReport:
    """Execute runs (sequentially by default), then write the comparison table.

    Individual failures are recorded and the campaign continues; the report
    carries the ordering checks against the reference behaviour.
    """
    report = CampaignReport()
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            report.results = list(pool.map(_run_guarded, configs))
    else:
        report.results = [_run_guarded(cfg) for cfg in configs]
    report.orderings = report.ordering_checks()

    if out_dir is None and configs:
        out_dir = configs[0].output.directory
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_campaign_summary(report, out_dir)
    return report


def write_campaign_summary(report: CampaignReport, out_dir) -> None:
    rows = [r.to_row() for r in report.results]
    keys = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with open(os.path.join(out_dir, "campaign_summary.csv"), "w") as f:
        f.write(",".join(keys) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row.get(k, "")) for k in keys) + "\n")
    with open(os.path.join(out_dir, "campaign_report.txt"), "w") as f:
        f.write("swirlsim campaign report\n")
        f.write("========================\n\n")
        for r in report.results:
            f.write(f"{r.label}: {r.status}")
            if r.status == "ok":
                f.write(f"  dP = {r.pressure_drop_pa:.4g} Pa, "
                        f"median impacts = {r.carrier_median_impacts:g}, "
                        f"median impact KE = {r.carrier_median_impact_ke:.4g} J")
                spread = ", ".join(f"x{s:g}: {v:.3g}"
                                   for s, v in sorted(r.fine_spread_r90.items()))
                if spread:
                    f.write(f", fine r90 [Da] ({spread})")
                f.write(f", carrier St = {r.stokes_numbers.get('carrier', float('nan')):.3g}")
            else:
                f.write(f"  error: {r.error.splitlines()[0] if r.error else 'unknown'}")
            f.write("\n")
        f.write("\nordering checks (reference: impacts 16/11/8 entry/exit/no-grid;\n")
        f.write("fine spread 5/2/1.5 Da no/entry/exit-grid at x/Da = 5):\n")
        for name, ok in sorted(report.orderings.items()):
            f.write(f"  {name}: {'PASS' if ok else 'FAIL'}\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)
