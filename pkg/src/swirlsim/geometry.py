"""Parametric inhaler geometry and its voxelization onto a uniform Cartesian mesh.

The device is laid out along +x: ambient plenum box -> two tangential inlet
channels -> swirl chamber with a spherical dosing-cup end cap -> mouthpiece
(optionally with an entry or exit grid) -> discharge box. Cells are classified
Fluid / Solid / InletFace / OutletFace; walls are stair-stepped shells one
wall-thickness thick around the analytic device solids.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import GeometryError, OutOfDomainError, PreconditionError

# cell classification codes
FLUID = 0
SOLID = 1
INLET = 2
OUTLET = 3

# wall patch codes (on solid cells; 0 = generic enclosure)
PATCH_NONE = 0
PATCH_ENCLOSURE = 1
PATCH_CAP = 2
PATCH_CHAMBER = 3
PATCH_MOUTHPIECE = 4
PATCH_CHANNEL = 5
PATCH_GRID = 6

PATCH_NAMES = {
    PATCH_NONE: "none",
    PATCH_ENCLOSURE: "enclosure",
    PATCH_CAP: "dosing_cup",
    PATCH_CHAMBER: "chamber",
    PATCH_MOUTHPIECE: "mouthpiece",
    PATCH_CHANNEL: "inlet_channel",
    PATCH_GRID: "grid",
}

# inlet inflow direction codes: index into DIR_VECTORS
DIR_VECTORS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=np.int8,
)


class GridVariant(str, enum.Enum):
    NO_GRID = "no_grid"
    ENTRY_GRID = "entry_grid"
    EXIT_GRID = "exit_grid"


@dataclass(frozen=True)
class DeviceSpec:
    """Parametric two-tangential-inlet swirl device. Lengths in metres."""

    chamber_diameter: float = 0.020
    chamber_height: float = 0.020
    mouthpiece_diameter: float = 0.010
    mouthpiece_length: float = 0.015
    inlet_count: int = 2
    inlet_width: float = 0.0024
    inlet_height: float = 0.006
    inlet_tangential_offset: float | None = None  # None -> R_chamber - width/2
    grid_variant: GridVariant = GridVariant.NO_GRID
    grid_bar_width: float = 0.0008
    grid_opening: float = 0.0012
    grid_axial_position: float | None = None  # None -> variant default
    discharge_box_dimensions: tuple[float, float, float] = (0.060, 0.056, 0.056)
    plenum_radius: float = 0.020
    wall_thickness: float = 0.0016

    @property
    def jet_diameter(self) -> float:
        return self.mouthpiece_diameter

    @property
    def tangential_offset(self) -> float:
        if self.inlet_tangential_offset is not None:
            return self.inlet_tangential_offset
        return 0.5 * self.chamber_diameter - 0.5 * self.inlet_width

    def validate(self) -> None:
        lengths = {
            "chamber_diameter": self.chamber_diameter,
            "chamber_height": self.chamber_height,
            "mouthpiece_diameter": self.mouthpiece_diameter,
            "mouthpiece_length": self.mouthpiece_length,
            "inlet_width": self.inlet_width,
            "inlet_height": self.inlet_height,
            "grid_bar_width": self.grid_bar_width,
            "grid_opening": self.grid_opening,
            "plenum_radius": self.plenum_radius,
            "wall_thickness": self.wall_thickness,
        }
        for name, value in lengths.items():
            if not value > 0.0:
                raise GeometryError(f"{name} must be strictly positive, got {value}")
        for i, value in enumerate(self.discharge_box_dimensions):
            if not value > 0.0:
                raise GeometryError(f"discharge_box_dimensions[{i}] must be positive")
        if self.inlet_count != 2:
            raise GeometryError("inlet_count is fixed at 2")
        if not self.mouthpiece_diameter < self.chamber_diameter:
            raise GeometryError("mouthpiece_diameter must be smaller than chamber_diameter")
        if self.discharge_box_dimensions[0] < 5.0 * self.jet_diameter:
            raise GeometryError(
                "discharge box must extend at least 5 jet diameters downstream "
                f"({self.discharge_box_dimensions[0]:.4g} < {5 * self.jet_diameter:.4g})"
            )
        r_ch = 0.5 * self.chamber_diameter
        if self.tangential_offset + 0.5 * self.inlet_width > r_ch + 1e-12:
            raise GeometryError("tangential inlet lies outside the chamber bore")
        if self.plenum_radius <= r_ch + self.wall_thickness:
            raise GeometryError("plenum_radius leaves no ambient gap around the chamber")


@dataclass(frozen=True)
class DeviceLandmarks:
    """Geometric reference positions the solver and particle tracker need."""

    axis_y: float
    axis_z: float
    jet_diameter: float
    exit_x: float                # mouthpiece exit plane
    box_end_x: float             # downstream end of the discharge box
    chamber_exit_x: float        # chamber -> mouthpiece junction
    cup_center_x: float          # centre of the dosing-cup sphere
    cup_radius: float
    reference_plane_x: float     # bore plane one Da upstream of exit (grid-free)
    plenum_x1: float


@dataclass
class VoxelMesh:
    """Uniform Cartesian voxel mesh with per-cell classification."""

    h: float
    origin: tuple[float, float, float]
    cell_class: np.ndarray                      # uint8 (nx, ny, nz)
    periodic: tuple[bool, bool, bool] = (False, False, False)
    wall_distance: np.ndarray | None = None     # float64, NaN outside fluid
    patch: np.ndarray | None = None             # uint8, wall patch on solid cells
    inlet_dir: np.ndarray | None = None         # int8, DIR_VECTORS row or -1
    device: DeviceLandmarks | None = None
    station_planes: list[float] = field(default_factory=list)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.cell_class.shape

    @property
    def fluid_mask(self) -> np.ndarray:
        return self.cell_class == FLUID

    @property
    def solid_mask(self) -> np.ndarray:
        return self.cell_class == SOLID

    @property
    def inlet_mask(self) -> np.ndarray:
        return self.cell_class == INLET

    @property
    def outlet_mask(self) -> np.ndarray:
        return self.cell_class == OUTLET

    @property
    def open_mask(self) -> np.ndarray:
        """Cells that carry field values (fluid plus boundary-value cells)."""
        return self.cell_class != SOLID

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.h

    def cell_centers(self):
        x = self.axis_coords(0)[:, None, None]
        y = self.axis_coords(1)[None, :, None]
        z = self.axis_coords(2)[None, None, :]
        return x, y, z

    def fluid_volume(self) -> float:
        return float(np.count_nonzero(self.fluid_mask)) * self.h**3

    def cell_index(self, point) -> tuple[int, int, int]:
        idx = tuple(int(np.floor((point[a] - self.origin[a]) / self.h)) for a in range(3))
        for a in range(3):
            if not 0 <= idx[a] < self.dims[a]:
                raise OutOfDomainError(f"point {tuple(point)} outside mesh along axis {a}")
        return idx


@dataclass(frozen=True)
class StationLine:
    """Radial sampling line through the jet axis at a fixed x/Da station."""

    station: float                # x/Da downstream of the mouthpiece exit
    x: float                      # absolute axial position [m]
    points: np.ndarray            # (M, 3) sample coordinates
    y_over_Da: np.ndarray         # (M,) radial coordinate, signed
    cell_idx: np.ndarray          # (M, 3) containing-cell indices


# ---------------------------------------------------------------------------
# analytic primitives (volume diagnostics reused by tests)

def voxel_volume_cylinder(radius: float, length: float, h: float,
                          offset: float = 0.0) -> float:
    """Cell-centre voxelized volume of an x-aligned cylinder.

    `offset` shifts the lattice along the axis; averaging the error over a
    stratified set of offsets gives the expected voxelization error.
    """
    nx = int(np.ceil((length + 2 * h) / h)) + 2
    nr = int(np.ceil(2 * radius / h)) + 6
    x = (np.arange(nx) + 0.5) * h - offset
    y = (np.arange(nr) + 0.5) * h - 0.5 * nr * h
    z = y.copy()
    inside = (
        (x[:, None, None] >= 0.0)
        & (x[:, None, None] <= length)
        & (y[None, :, None] ** 2 + z[None, None, :] ** 2 <= radius**2)
    )
    return float(np.count_nonzero(inside)) * h**3


def voxel_volume_sphere(radius: float, h: float) -> float:
    """Cell-centre voxelized volume of a sphere."""
    n = int(np.ceil(2 * radius / h)) + 4
    c = (np.arange(n) + 0.5) * h - 0.5 * n * h
    r2 = c[:, None, None] ** 2 + c[None, :, None] ** 2 + c[None, None, :] ** 2
    return float(np.count_nonzero(r2 <= radius**2)) * h**3


# ---------------------------------------------------------------------------
# synthetic meshes for verification cases

def make_box_mesh(dims, h, periodic=(True, True, True)) -> VoxelMesh:
    """All-fluid box, periodic by default (Taylor-Green style domains)."""
    cls = np.full(tuple(dims), FLUID, dtype=np.uint8)
    return VoxelMesh(h=h, origin=(0.0, 0.0, 0.0), cell_class=cls, periodic=tuple(periodic))


def make_channel_mesh(nx, ny_fluid, h, nz=1, wall_layers=1) -> VoxelMesh:
    """Plane channel: solid slabs at y extremes, periodic in x and z."""
    ny = ny_fluid + 2 * wall_layers
    cls = np.full((nx, ny, nz), FLUID, dtype=np.uint8)
    cls[:, :wall_layers, :] = SOLID
    cls[:, ny - wall_layers:, :] = SOLID
    mesh = VoxelMesh(h=h, origin=(0.0, 0.0, 0.0), cell_class=cls, periodic=(True, False, True))
    return compute_wall_distance(mesh)


def make_pipe_mesh(nx, diameter_cells, h, periodic_x=True, wall_layers=1) -> VoxelMesh:
    """x-aligned circular pipe voxelized in a square box."""
    n = diameter_cells + 2 * wall_layers + 1
    cls = np.full((nx, n, n), SOLID, dtype=np.uint8)
    c = (np.arange(n) + 0.5) * h
    yc = zc = 0.5 * n * h
    r2 = (c[:, None] - yc) ** 2 + (c[None, :] - zc) ** 2
    bore = r2 <= (0.5 * diameter_cells * h) ** 2
    cls[:, bore] = FLUID
    mesh = VoxelMesh(h=h, origin=(0.0, 0.0, 0.0), cell_class=cls,
                     periodic=(periodic_x, False, False))
    return compute_wall_distance(mesh)


# ---------------------------------------------------------------------------
# device voxelization

def _device_masks(spec: DeviceSpec, h: float, X, Y, Z, yc, zc, lay, margin: float):
    """Inside-masks of the grown device primitives at a given margin."""
    r_ch = 0.5 * spec.chamber_diameter + margin
    r_a = 0.5 * spec.mouthpiece_diameter + margin
    r_cap = 0.5 * spec.chamber_diameter + margin
    ryz2 = (Y - yc) ** 2 + (Z - zc) ** 2

    cap = (
        ((X - lay["x_cyl0"]) ** 2 + ryz2 <= r_cap**2)
        & (X <= lay["x_cyl0"])
    )
    chamber = (ryz2 <= r_ch**2) & (X >= lay["x_cyl0"] - margin) & (X <= lay["x_cyl1"] + margin)
    mouth = (ryz2 <= r_a**2) & (X >= lay["x_cyl1"] - margin) & (X <= lay["x_exit"] + margin)

    s = spec.tangential_offset
    w2 = 0.5 * spec.inlet_width + margin
    chan_a = (
        (np.abs(Z - (zc + s)) <= w2)
        & (X >= lay["inlet_x0"] - margin)
        & (X <= lay["inlet_x1"] + margin)
        & (Y >= lay["chan_a_yend"] - margin)
        & (Y <= yc)
    )
    chan_b = (
        (np.abs(Z - (zc - s)) <= w2)
        & (X >= lay["inlet_x0"] - margin)
        & (X <= lay["inlet_x1"] + margin)
        & (Y <= lay["chan_b_yend"] + margin)
        & (Y >= yc)
    )
    return cap, chamber, mouth, chan_a, chan_b


def _grid_bar_mask(spec: DeviceSpec, X, Y, Z, yc, zc, x0, x1):
    """Square-lattice grid bars across the mouthpiece bore in [x0, x1]."""
    pitch = spec.grid_opening + spec.grid_bar_width
    open_y = np.mod(Y - yc + 0.5 * spec.grid_opening, pitch) < spec.grid_opening
    open_z = np.mod(Z - zc + 0.5 * spec.grid_opening, pitch) < spec.grid_opening
    bore = (Y - yc) ** 2 + (Z - zc) ** 2 <= (0.5 * spec.mouthpiece_diameter) ** 2
    return bore & (X >= x0) & (X <= x1) & ~(open_y & open_z)


def build_device_mesh(spec: DeviceSpec, h: float) -> VoxelMesh:
    """Voxelize a device onto a uniform mesh of spacing h.

    Raises PreconditionError for under-resolving h and GeometryError when the
    voxelization seals the flow path (inlets, grid, or mouthpiece).
    """
    spec.validate()
    if h > spec.inlet_width / 3.0 + 1e-12:
        raise PreconditionError(
            f"h = {h:.4g} m too coarse: tangential inlets need h <= inlet_width/3 "
            f"= {spec.inlet_width / 3.0:.4g} m"
        )

    t = max(spec.wall_thickness, 1.5 * h)
    gap = max(0.004, 4.0 * h)
    r_ch = 0.5 * spec.chamber_diameter

    lay = {}
    lay["x_cyl0"] = gap + t + r_ch                     # cap sphere centre / cap-cylinder junction
    lay["inlet_x0"] = lay["x_cyl0"] + max(h, 0.001)
    lay["inlet_x1"] = lay["inlet_x0"] + spec.inlet_height
    lay["x_pl1"] = lay["inlet_x1"] + gap
    lay["x_cyl1"] = lay["x_cyl0"] + spec.chamber_height
    lay["x_exit"] = lay["x_cyl1"] + spec.mouthpiece_length
    lay["x_box1"] = lay["x_exit"] + spec.discharge_box_dimensions[0]
    if lay["x_pl1"] >= lay["x_cyl1"]:
        raise GeometryError("inlet channels extend past the chamber exit; lengthen chamber_height")

    box_hy = 0.5 * spec.discharge_box_dimensions[1]
    box_hz = 0.5 * spec.discharge_box_dimensions[2]
    half_w = max(spec.plenum_radius, box_hy, box_hz)
    # channel outer end: just past where the channel clears the grown chamber
    # wall across its full width, so the opening carve lands in plenum fluid
    s_off = spec.tangential_offset
    w_half = 0.5 * spec.inlet_width
    pierce = np.sqrt(max((r_ch + t) ** 2 - (s_off - w_half) ** 2, 0.0))
    reach = pierce + 2.0 * h
    if reach + t + 3.0 * h > spec.plenum_radius - 2.0 * h:
        raise GeometryError(
            "plenum_radius too small to fit the tangential inlet channels at "
            f"this resolution (need > {reach + t + 5 * h:.4g} m)"
        )

    nx = int(np.ceil(lay["x_box1"] / h))
    nyz = 2 * int(np.round(half_w / h)) + 1           # odd: jet axis on a cell-centre line
    if min(nx, nyz) < 32:
        raise PreconditionError(
            f"domain must span >= 32 cells per axis, got dims ({nx}, {nyz}, {nyz})"
        )
    yc = zc = 0.5 * nyz * h
    lay["chan_a_yend"] = yc - reach
    lay["chan_b_yend"] = yc + reach

    origin = (0.0, 0.0, 0.0)
    x = (np.arange(nx) + 0.5) * h
    yz = (np.arange(nyz) + 0.5) * h
    X = x[:, None, None]
    Y = yz[None, :, None]
    Z = yz[None, None, :]

    dev0 = _device_masks(spec, h, X, Y, Z, yc, zc, lay, margin=0.0)
    devt = _device_masks(spec, h, X, Y, Z, yc, zc, lay, margin=t)
    device0 = dev0[0] | dev0[1] | dev0[2] | dev0[3] | dev0[4]
    devicet = devt[0] | devt[1] | devt[2] | devt[3] | devt[4]
    shell = devicet & ~device0

    plenum = (
        (np.abs(Y - yc) <= spec.plenum_radius)
        & (np.abs(Z - zc) <= spec.plenum_radius)
        & (X >= 0.0)
        & (X <= lay["x_pl1"])
    )
    box = (
        (np.abs(Y - yc) <= box_hy)
        & (np.abs(Z - zc) <= box_hz)
        & (X >= lay["x_exit"])
        & (X <= lay["x_box1"])
    )

    # openings: channel outer ends into the plenum (side rims removed so the
    # bore opens flush), mouthpiece exit into the box
    s = spec.tangential_offset
    w2 = 0.5 * spec.inlet_width
    wide_x = (X >= lay["inlet_x0"] - t - h) & (X <= lay["inlet_x1"] + t + h)
    open_a = (
        wide_x
        & (np.abs(Z - (zc + s)) <= w2 + t + h)
        & (Y >= lay["chan_a_yend"] - t - 2 * h)
        & (Y <= lay["chan_a_yend"] + t)
    )
    open_b = (
        wide_x
        & (np.abs(Z - (zc - s)) <= w2 + t + h)
        & (Y <= lay["chan_b_yend"] + t + 2 * h)
        & (Y >= lay["chan_b_yend"] - t)
    )
    bore = (Y - yc) ** 2 + (Z - zc) ** 2 <= (0.5 * spec.mouthpiece_diameter) ** 2
    open_exit = bore & (X >= lay["x_exit"]) & (X <= lay["x_exit"] + t + 2 * h)
    openings = open_a | open_b | open_exit

    cls = np.full((nx, nyz, nyz), SOLID, dtype=np.uint8)
    cls[device0 | plenum | box] = FLUID
    cls[shell] = SOLID
    cls[openings] = FLUID

    patch = np.full_like(cls, PATCH_NONE)
    patch[cls == SOLID] = PATCH_ENCLOSURE
    for mask, code in ((devt[4], PATCH_CHANNEL), (devt[3], PATCH_CHANNEL),
                       (devt[2], PATCH_MOUTHPIECE), (devt[1], PATCH_CHAMBER),
                       (devt[0], PATCH_CAP)):
        patch[(cls == SOLID) & mask] = code

    # grid bars override fluid inside the bore
    if spec.grid_variant is not GridVariant.NO_GRID:
        if spec.grid_axial_position is not None:
            xg0 = spec.grid_axial_position
        elif spec.grid_variant is GridVariant.ENTRY_GRID:
            xg0 = lay["x_cyl1"]
        else:
            xg0 = lay["x_exit"] - spec.grid_bar_width
        xg1 = xg0 + spec.grid_bar_width
        if xg0 < lay["x_cyl1"] - 1e-12 or xg1 > lay["x_exit"] + 1e-12:
            raise GeometryError("grid_axial_position must lie within the mouthpiece bore")
        bars = _grid_bar_mask(spec, X, Y, Z, yc, zc, xg0, xg1)
        # guarantee at least one solid cell axially even when bars are thinner than h
        if not bars.any():
            i_g = min(int(np.floor(0.5 * (xg0 + xg1) / h)), nx - 1)
            bars = _grid_bar_mask(spec, X, Y, Z, yc, zc, x[i_g] - 0.51 * h, x[i_g] + 0.51 * h)
            bars[np.arange(nx) != i_g, :, :] = False
        solid_bars = bars & (cls == FLUID)
        cls[solid_bars] = SOLID
        patch[solid_bars] = PATCH_GRID

    # connectivity: keep the component joining plenum to box, demote stray pockets
    labels, _ = ndimage.label(cls == FLUID)
    probe_plenum = labels[(cls == FLUID) & plenum & ~device0]
    probe_box = labels[(cls == FLUID) & box & (X >= lay["x_box1"] - 2 * h)]
    probe_chamber = labels[(cls == FLUID) & dev0[1]]
    if probe_plenum.size == 0 or probe_box.size == 0:
        raise GeometryError("voxelization produced no plenum or discharge-box fluid")
    main = np.bincount(probe_box).argmax()
    if not (probe_plenum == main).any():
        if probe_chamber.size and (probe_chamber == main).any():
            raise GeometryError(
                "tangential inlet channels sealed by voxelization; refine h or widen inlets"
            )
        raise GeometryError(
            "grid or mouthpiece sealed by voxelization; refine h or widen grid_opening"
        )
    if probe_chamber.size and not (probe_chamber == main).any():
        raise GeometryError("swirl chamber disconnected from the outlet; refine h")
    stray = (labels != main) & (cls == FLUID)
    cls[stray] = SOLID
    patch[stray] = PATCH_ENCLOSURE

    # inlet tagging: outer hull of the plenum box (x-min slab and lateral slabs)
    inlet_dir = np.full_like(cls, -1, dtype=np.int8)
    in_plenum_range = (X <= lay["x_pl1"]) & np.broadcast_to(cls == FLUID, cls.shape)
    hull_x = in_plenum_range & (X < h)
    hull_yl = in_plenum_range & ((Y - yc) < -(spec.plenum_radius - h))
    hull_yh = in_plenum_range & ((Y - yc) > (spec.plenum_radius - h))
    hull_zl = in_plenum_range & ((Z - zc) < -(spec.plenum_radius - h))
    hull_zh = in_plenum_range & ((Z - zc) > (spec.plenum_radius - h))
    for mask, code in ((hull_x, 0), (hull_yl, 2), (hull_yh, 3), (hull_zl, 4), (hull_zh, 5)):
        sel = mask & (cls == FLUID)
        cls[sel] = INLET
        inlet_dir[sel] = code

    # outlet tagging: last axial slab of box fluid
    out_sel = (cls == FLUID) & (X > lay["x_box1"] - h) & box
    cls[out_sel] = OUTLET
    inlet_dir[out_sel] = 0  # outflow along +x

    if not (cls == INLET).any():
        raise GeometryError("no inlet faces tagged; plenum hull missing")
    if not (cls == OUTLET).any():
        raise GeometryError("no outlet faces tagged; discharge box end missing")

    # pressure coupling runs over Fluid-Fluid faces only: every fluid cell must
    # reach the outlet without passing through boundary-value cells
    labels, n_comp = ndimage.label(cls == FLUID)
    if n_comp > 1:
        out_adjacent = np.zeros_like(labels)
        sel = np.argwhere(cls == OUTLET)
        for (i, j, k) in sel:
            if i > 0 and cls[i - 1, j, k] == FLUID:
                out_adjacent[i - 1, j, k] = 1
        main = np.bincount(labels[out_adjacent == 1]).argmax()
        stray = (labels != main) & (cls == FLUID)
        n_stray = int(np.count_nonzero(stray))
        if n_stray > 0.01 * np.count_nonzero(cls == FLUID):
            raise GeometryError(
                f"{n_stray} fluid cells are walled off from the outlet "
                "(inlet channels or plenum sealed); refine h or enlarge the plenum"
            )
        cls[stray] = SOLID
        patch[stray] = PATCH_ENCLOSURE
        # inlet cells left without a live fluid neighbour become walls
        for (i, j, k) in np.argwhere(cls == INLET):
            d = DIR_VECTORS[inlet_dir[i, j, k]]
            ni, nj, nk = i + d[0], j + d[1], k + d[2]
            if not (0 <= ni < nx and 0 <= nj < nyz and 0 <= nk < nyz) \
                    or cls[ni, nj, nk] != FLUID:
                cls[i, j, k] = SOLID
                patch[i, j, k] = PATCH_ENCLOSURE

    landmarks = DeviceLandmarks(
        axis_y=yc,
        axis_z=zc,
        jet_diameter=spec.jet_diameter,
        exit_x=lay["x_exit"],
        box_end_x=lay["x_box1"],
        chamber_exit_x=lay["x_cyl1"],
        cup_center_x=lay["x_cyl0"],
        cup_radius=r_ch,
        reference_plane_x=lay["x_exit"] - spec.jet_diameter,
        plenum_x1=lay["x_pl1"],
    )
    mesh = VoxelMesh(
        h=h,
        origin=origin,
        cell_class=cls,
        periodic=(False, False, False),
        patch=patch,
        inlet_dir=inlet_dir,
        device=landmarks,
        station_planes=[0.0, 1.0, 2.0, 3.0, 5.0],
    )
    return compute_wall_distance(mesh)


def compute_wall_distance(mesh: VoxelMesh) -> VoxelMesh:
    """Fill wall_distance with the Euclidean distance to the nearest solid face.

    Exact EDT to solid cell centres shifted by h/2; accurate to within h/2 of
    the true face distance per the mesh contract.
    """
    if not mesh.solid_mask.any():
        raise GeometryError("wall distance undefined: mesh contains no Solid cells")
    dist = ndimage.distance_transform_edt(mesh.open_mask, sampling=mesh.h)
    dist = np.maximum(dist - 0.5 * mesh.h, 0.5 * mesh.h)
    dist[~mesh.open_mask] = 0.0
    mesh.wall_distance = dist
    return mesh


def station_sampling_lines(mesh: VoxelMesh, stations) -> list[StationLine]:
    """Radial sampling lines through the jet axis at the given x/Da stations."""
    if mesh.device is None:
        raise GeometryError("station lines require a device mesh with landmarks")
    dev = mesh.device
    lines = []
    for s in stations:
        x_st = dev.exit_x + s * dev.jet_diameter
        if x_st > dev.box_end_x + 1e-12 or x_st < mesh.origin[0]:
            raise OutOfDomainError(
                f"station x/Da = {s} lies at x = {x_st:.4g} m, beyond the "
                f"discharge box end at {dev.box_end_x:.4g} m"
            )
        i = min(int((x_st - mesh.origin[0]) / mesh.h), mesh.dims[0] - 1)
        k = int((dev.axis_z - mesh.origin[2]) / mesh.h)
        ys = mesh.axis_coords(1)
        open_row = mesh.open_mask[i, :, k]
        j_idx = np.nonzero(open_row)[0]
        if j_idx.size == 0:
            raise OutOfDomainError(f"station x/Da = {s} intersects no fluid cells")
        pts = np.column_stack(
            [np.full(j_idx.size, x_st), ys[j_idx], np.full(j_idx.size, dev.axis_z + 0.0)]
        )
        cell_idx = np.column_stack(
            [np.full(j_idx.size, i), j_idx, np.full(j_idx.size, k)]
        ).astype(np.int64)
        lines.append(
            StationLine(
                station=float(s),
                x=float(x_st),
                points=pts,
                y_over_Da=(ys[j_idx] - dev.axis_y) / dev.jet_diameter,
                cell_idx=cell_idx,
            )
        )
    return lines


def grid_open_area_fraction(mesh: VoxelMesh, spec: DeviceSpec) -> float:
    """Measured open-area fraction of the grid plane inside the mouthpiece bore."""
    if spec.grid_variant is GridVariant.NO_GRID or mesh.device is None:
        raise GeometryError("open-area fraction defined only for gridded device meshes")
    dev = mesh.device
    if spec.grid_axial_position is not None:
        xg = spec.grid_axial_position + 0.5 * spec.grid_bar_width
    elif spec.grid_variant is GridVariant.ENTRY_GRID:
        xg = dev.chamber_exit_x + 0.5 * spec.grid_bar_width
    else:
        xg = dev.exit_x - 0.5 * spec.grid_bar_width
    i = min(int((xg - mesh.origin[0]) / mesh.h), mesh.dims[0] - 1)
    y = mesh.axis_coords(1)[None, :, None]
    z = mesh.axis_coords(2)[None, None, :]
    bore = ((y - dev.axis_y) ** 2 + (z - dev.axis_z) ** 2
            <= (0.5 * spec.mouthpiece_diameter) ** 2)[0]
    n_bore = np.count_nonzero(bore)
    n_open = np.count_nonzero(bore & (mesh.cell_class[i] == FLUID))
    return n_open / n_bore


def scaled_spec(spec: DeviceSpec, factor: float) -> DeviceSpec:
    """Uniformly scale every length of a device spec (test/mini presets)."""
    box = tuple(v * factor for v in spec.discharge_box_dimensions)
    return replace(
        spec,
        chamber_diameter=spec.chamber_diameter * factor,
        chamber_height=spec.chamber_height * factor,
        mouthpiece_diameter=spec.mouthpiece_diameter * factor,
        mouthpiece_length=spec.mouthpiece_length * factor,
        inlet_width=spec.inlet_width * factor,
        inlet_height=spec.inlet_height * factor,
        inlet_tangential_offset=None if spec.inlet_tangential_offset is None
        else spec.inlet_tangential_offset * factor,
        grid_bar_width=spec.grid_bar_width * factor,
        grid_opening=spec.grid_opening * factor,
        grid_axial_position=None if spec.grid_axial_position is None
        else spec.grid_axial_position * factor,
        discharge_box_dimensions=box,
        plenum_radius=spec.plenum_radius * factor,
        wall_thickness=spec.wall_thickness * factor,
    )
