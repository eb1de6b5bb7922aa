"""Flow state containers and boundary-condition descriptors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import VoxelMesh


@dataclass(frozen=True)
class JetReference:
    """Jet-exit scales used for normalization and Re control."""

    Da: float   # jet-exit diameter [m]
    Ua: float   # bulk mean exit velocity [m/s]
    nu: float   # kinematic viscosity [m^2/s]
    rho: float  # density [kg/m^3]

    def __post_init__(self):
        if min(self.Da, self.nu, self.rho) <= 0.0 or self.Ua < 0.0:
            raise ValueError("jet reference scales must be positive")

    @property
    def reynolds(self) -> float:
        return self.Ua * self.Da / self.nu


@dataclass(frozen=True)
class BoundaryConditions:
    """Total-pressure inlet, fixed-mass-flow outlet, smooth no-slip walls."""

    re_target: float
    inlet_total_pressure: float = 0.0      # gauge [Pa]
    turbulence_intensity: float = 0.01
    rho: float = 1.204                     # air at ambient conditions
    nu: float = 1.5e-5

    def __post_init__(self):
        if self.re_target < 0.0:
            raise ValueError("re_target must be >= 0")
        if not 0.0 < self.turbulence_intensity < 1.0:
            raise ValueError("turbulence intensity must lie in (0, 1)")
        if self.rho <= 0.0 or self.nu <= 0.0:
            raise ValueError("fluid properties must be positive")

    def jet_reference(self, mesh: VoxelMesh) -> JetReference:
        if mesh.device is None:
            raise ValueError("jet reference requires a device mesh")
        da = mesh.device.jet_diameter
        return JetReference(Da=da, Ua=self.re_target * self.nu / da,
                            nu=self.nu, rho=self.rho)


class FlowState:
    """Collocated fields plus the face fluxes and old level BDF2 needs.

    Velocity components are zero in Solid cells at all times; InletFace and
    OutletFace cells carry their boundary values in the same arrays.
    """

    FIELD_NAMES = (
        "u", "v", "w", "p", "k", "eo", "nu_t",
        "u_prev", "v_prev", "w_prev",
        "fx", "fy", "fz", "fx_prev", "fy_prev", "fz_prev",
    )

    def __init__(self, dims, t: float = 0.0):
        for name in self.FIELD_NAMES:
            setattr(self, name, np.zeros(dims, dtype=np.float64))
        self.t = float(t)
        self.dt_prev = 0.0
        self.step = 0
        # transient (not checkpointed): convection at the previous level,
        # recomputed from *_prev on restart
        self.conv_prev = None
        self.diag = {}

    @classmethod
    def zeros(cls, mesh: VoxelMesh) -> "FlowState":
        return cls(mesh.dims)

    @property
    def dims(self):
        return self.u.shape

    def copy(self) -> "FlowState":
        out = FlowState(self.dims, t=self.t)
        for name in self.FIELD_NAMES:
            getattr(out, name)[...] = getattr(self, name)
        out.dt_prev = self.dt_prev
        out.step = self.step
        if self.conv_prev is not None:
            out.conv_prev = tuple(c.copy() for c in self.conv_prev)
        return out

    def velocity_magnitude(self) -> np.ndarray:
        return np.sqrt(self.u**2 + self.v**2 + self.w**2)

    def kinetic_energy(self, fluid_mask, h) -> float:
        ke = 0.5 * (self.u**2 + self.v**2 + self.w**2)
        return float(np.sum(ke[fluid_mask])) * h**3
