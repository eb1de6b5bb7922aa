"""swirlsim: desk-scale finite-volume simulator for swirling inhaler flows."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    DeviceSpec,
    GridVariant,
    VoxelMesh,
    build_device_mesh,
    compute_wall_distance,
    station_sampling_lines,
)
