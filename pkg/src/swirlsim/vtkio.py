"""VTK legacy-ASCII writers (structured points) for meshes and field snapshots."""

from __future__ import annotations

import numpy as np

from .geometry import VoxelMesh


def _header(f, mesh: VoxelMesh, title: str) -> None:
    nx, ny, nz = mesh.dims
    f.write("# vtk DataFile Version 3.0\n")
    f.write(f"{title}\n")
    f.write("ASCII\n")
    f.write("DATASET STRUCTURED_POINTS\n")
    # point dims = cell dims + 1 so arrays attach as CELL_DATA
    f.write(f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}\n")
    f.write(f"ORIGIN {mesh.origin[0]:.9g} {mesh.origin[1]:.9g} {mesh.origin[2]:.9g}\n")
    f.write(f"SPACING {mesh.h:.9g} {mesh.h:.9g} {mesh.h:.9g}\n")
    f.write(f"CELL_DATA {nx * ny * nz}\n")


def _write_scalar(f, name: str, data: np.ndarray, kind: str) -> None:
    f.write(f"SCALARS {name} {kind} 1\n")
    f.write("LOOKUP_TABLE default\n")
    flat = np.asarray(data).transpose(2, 1, 0).ravel()  # VTK expects x fastest
    if kind == "int":
        np.savetxt(f, flat.reshape(-1, 1), fmt="%d")
    else:
        np.savetxt(f, flat.reshape(-1, 1), fmt="%.9g")


def _write_vector(f, name: str, u, v, w) -> None:
    f.write(f"VECTORS {name} double\n")
    stacked = np.stack(
        [np.asarray(a).transpose(2, 1, 0).ravel() for a in (u, v, w)], axis=1
    )
    np.savetxt(f, stacked, fmt="%.9g")


def write_mesh_vtk(mesh: VoxelMesh, path) -> None:
    """Mesh classification and wall distance as a structured-points file."""
    with open(path, "w") as f:
        _header(f, mesh, "swirlsim voxel mesh")
        _write_scalar(f, "cell_class", mesh.cell_class.astype(np.int32), "int")
        if mesh.wall_distance is not None:
            _write_scalar(f, "wall_distance", mesh.wall_distance, "double")


def write_snapshot_vtk(mesh: VoxelMesh, state, path) -> None:
    """Velocity, pressure and turbulence fields of one FlowState."""
    with open(path, "w") as f:
        _header(f, mesh, f"swirlsim snapshot t={state.t:.9g}")
        _write_vector(f, "velocity", state.u, state.v, state.w)
        _write_scalar(f, "pressure", state.p, "double")
        _write_scalar(f, "tke", state.k, "double")
        _write_scalar(f, "dissipation", state.eo, "double")
        _write_scalar(f, "eddy_viscosity", state.nu_t, "double")
