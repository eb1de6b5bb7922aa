"""swirlsim command line: mesh | run | particles | stats | campaign | report.

Exit codes: 0 success, 1 run failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .errors import ConfigError, SwirlsimError

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG = 2


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("SWIRLSIM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SWIRLSIM_WORKERS={env!r} is not an integer") from None
    return 1


def _load(args):
    from .config import load_config

    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "out", None):
        from .config import OutputConfig

        cfg = dataclasses.replace(
            cfg, output=dataclasses.replace(cfg.output, directory=args.out))
    return cfg


def cmd_mesh(args) -> int:
    from .geometry import build_device_mesh
    from .vtkio import write_mesh_vtk

    cfg = _load(args)
    mesh = build_device_mesh(cfg.geometry, cfg.h)
    out = args.out or "mesh.vtk"
    if os.path.isdir(out):
        out = os.path.join(out, "mesh.vtk")
    write_mesh_vtk(mesh, out)
    import numpy as np

    print(f"mesh {mesh.dims}: {int(np.count_nonzero(mesh.fluid_mask))} fluid cells "
          f"-> {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .campaign import run_single
    from .config import RunConfig, TimeConfig, OutputConfig

    cfg = _load(args)
    if args.steps is not None:
        cfg = dataclasses.replace(
            cfg, time=dataclasses.replace(cfg.time, max_steps=args.steps))
    if args.checkpoint_every is not None:
        cfg = dataclasses.replace(
            cfg, output=dataclasses.replace(cfg.output,
                                            checkpoint_every=args.checkpoint_every))
    result = run_single(cfg)
    return EXIT_OK if result.status == "ok" else EXIT_RUN_FAILURE


def cmd_particles(args) -> int:
    from .campaign import run_single, track_from_checkpoints
    from .config import ParticlePhaseConfig

    cfg = _load(args)
    if args.flow:
        # stored-field mode: replay checkpoints as frozen snapshots
        out = track_from_checkpoints(cfg, args.flow, args.release)
        print(f"tracked {args.release} particles through stored fields -> {out}")
        return EXIT_OK
    # live mode: a flow run that only releases the requested phase
    tiny = ParticlePhaseConfig(count=1, diameter=1e-6)
    particles = cfg.particles
    if args.release == "carrier":
        particles = dataclasses.replace(particles, fine=tiny)
    else:
        particles = dataclasses.replace(particles, carrier=tiny)
    cfg = dataclasses.replace(cfg, particles=particles,
                              label=(cfg.label or cfg.run_label()) + f"_{args.release}")
    result = run_single(cfg)
    return EXIT_OK if result.status == "ok" else EXIT_RUN_FAILURE


def cmd_stats(args) -> int:
    from .statistics import compare_profiles, profiles_from_csv, reference_from_csv

    profile_path = os.path.join(args.run, "profiles.csv")
    if not os.path.exists(profile_path):
        print(f"no profiles.csv under {args.run}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    profiles = profiles_from_csv(profile_path)
    references = reference_from_csv(args.reference)
    report = compare_profiles(profiles, references)
    text = report.to_text()
    out = os.path.join(args.run, "discrepancy_report.txt")
    with open(out, "w") as f:
        f.write(text)
    print(text, end="")
    print(f"written to {out}")
    return EXIT_OK


def cmd_campaign(args) -> int:
    from .campaign import expand_campaign, run_campaign
    from .geometry import GridVariant
    from .turbulence import ClosureModel

    cfg = _load(args)
    variants = [GridVariant(v) for v in args.devices.split(",")] if args.devices \
        else None
    closures = [ClosureModel(m) for m in args.closures.split(",")] if args.closures \
        else None
    configs = expand_campaign(cfg, variants=variants, closures=closures)
    report = run_campaign(configs, workers=_workers(args),
                          out_dir=cfg.output.directory)
    for name, ok in sorted(report.orderings.items()):
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    return EXIT_RUN_FAILURE if report.failed else EXIT_OK


def cmd_report(args) -> int:
    from .report import render_all

    written = render_all(args.run, args.out)
    for path in written:
        print(path)
    if not written:
        print(f"no renderable artifacts under {args.run}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swirlsim",
        description="Finite-volume simulator for swirling inhaler flows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel runs (default 1; env SWIRLSIM_WORKERS)")

    p = sub.add_parser("mesh", help="voxelize the device and write a VTK mesh")
    add_common(p)
    p.add_argument("--out", default=None, help="output VTK path")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("run", help="execute one configured run")
    add_common(p)
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--steps", type=int, default=None, help="cap on time steps")
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("particles", help="run flow with one particle release")
    add_common(p)
    p.add_argument("--release", choices=("carrier", "fine"), required=True)
    p.add_argument("--flow", default=None,
                   help="directory of checkpoints to replay instead of a live run")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_particles)

    p = sub.add_parser("stats", help="compare stored profiles with reference CSV")
    p.add_argument("--run", required=True, help="run directory with profiles.csv")
    p.add_argument("--reference", required=True, help="reference profile CSV")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("campaign", help="device x closure comparison matrix")
    add_common(p)
    p.add_argument("--out", default=None)
    p.add_argument("--devices", default=None,
                   help="comma list: no_grid,entry_grid,exit_grid")
    p.add_argument("--closures", default=None,
                   help="comma list: realizable_ke,sst,sbes")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("report", help="render figures from run/campaign artifacts")
    p.add_argument("--run", required=True, help="run or campaign directory")
    p.add_argument("--out", default=None, help="figure output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SwirlsimError as err:
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
