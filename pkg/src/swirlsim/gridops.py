"""Discrete operators on the masked voxel grid.

Face convention: for axis a, a face array has cell shape and entry [c] refers
to the face between cell c and its +a neighbour (wrapping on periodic axes).
All operators act on full-box arrays; values are zero in Solid cells and
boundary-condition values live in InletFace / OutletFace cells, so a single
stencil formula covers interior and boundaries.
"""

from __future__ import annotations

import numpy as np

from .errors import LinearSolverError
from .geometry import FLUID, INLET, OUTLET, SOLID, VoxelMesh

BETA_M = 0.25  # NVD blend ramp of the bounded-central scheme


def shift_p(a: np.ndarray, axis: int) -> np.ndarray:
    """Value of the +axis neighbour at each cell (periodic wrap)."""
    return np.roll(a, -1, axis=axis)


def shift_m(a: np.ndarray, axis: int) -> np.ndarray:
    """Value of the -axis neighbour at each cell (periodic wrap)."""
    return np.roll(a, 1, axis=axis)


def _edge_slice(shape, axis, last=True):
    sl = [slice(None)] * len(shape)
    sl[axis] = -1 if last else 0
    return tuple(sl)


class GridContext:
    """Precomputed masks and face classifications for one mesh."""

    def __init__(self, mesh: VoxelMesh):
        self.mesh = mesh
        self.h = mesh.h
        cls = mesh.cell_class
        self.fluid = cls == FLUID
        self.solid = cls == SOLID
        self.open = cls != SOLID
        self.n_fluid = int(np.count_nonzero(self.fluid))

        # neighbour classes (out-of-domain counts as solid on non-periodic axes)
        self.ncls_p = []
        self.ncls_m = []
        for a in range(3):
            cp = shift_p(cls, a).copy()
            cm = shift_m(cls, a).copy()
            if not mesh.periodic[a]:
                cp[_edge_slice(cls.shape, a, last=True)] = SOLID
                cm[_edge_slice(cls.shape, a, last=False)] = SOLID
            self.ncls_p.append(cp)
            self.ncls_m.append(cm)

        # face masks per axis (face between c and c+1)
        self.face_ff = []    # fluid | fluid
        self.face_fi = []    # fluid | inlet (either order)
        self.face_fo = []    # fluid | outlet (either order)
        self.face_fw = []    # fluid | solid (either order, incl. domain edge)
        self.face_bc_p = []  # on fi/fo faces: True when the bc cell is the + side
        for a in range(3):
            c = cls
            n = self.ncls_p[a]
            ff = (c == FLUID) & (n == FLUID)
            fi = ((c == FLUID) & (n == INLET)) | ((c == INLET) & (n == FLUID))
            fo = ((c == FLUID) & (n == OUTLET)) | ((c == OUTLET) & (n == FLUID))
            fw = ((c == FLUID) & (n == SOLID)) | ((c == SOLID) & (n == FLUID))
            self.face_ff.append(ff)
            self.face_fi.append(fi)
            self.face_fo.append(fo)
            self.face_fw.append(fw)
            self.face_bc_p.append((n == INLET) | (n == OUTLET))

        # far-upwind validity for the convection schemes: for the face (c, c+1)
        # the far-upwind cell is c-1 (positive flux) or c+2 (negative flux)
        self.open_p = [self.ncls_p[a] != SOLID for a in range(3)]
        self.open_m = [self.ncls_m[a] != SOLID for a in range(3)]
        self.u_ok_pos = [self.open_m[a] for a in range(3)]
        self.u_ok_neg = [shift_p(self.open_p[a], a) for a in range(3)]

        # wall-adjacency diagnostics
        self.wall_adjacent = np.zeros(cls.shape, dtype=bool)
        for a in range(3):
            self.wall_adjacent |= (cls == FLUID) & (
                (self.ncls_p[a] == SOLID) | (self.ncls_m[a] == SOLID)
            )

        # flattened numbering of fluid cells (Poisson assembly)
        self.fluid_index = np.full(cls.shape, -1, dtype=np.int64)
        self.fluid_index[self.fluid] = np.arange(self.n_fluid)

        # inlet bookkeeping
        self.inlet_cells = np.argwhere(cls == INLET)
        self.outlet_cells = np.argwhere(cls == OUTLET)

    # -- basic calculus -----------------------------------------------------

    def face_interp(self, phi: np.ndarray, axis: int) -> np.ndarray:
        return 0.5 * (phi + shift_p(phi, axis))

    def divergence(self, fx, fy, fz) -> np.ndarray:
        """Cell divergence of face-normal velocities; zero outside fluid."""
        div = (
            fx - shift_m(fx, 0)
            + fy - shift_m(fy, 1)
            + fz - shift_m(fz, 2)
        ) / self.h
        div[~self.fluid] = 0.0
        return div

    def grad(self, phi: np.ndarray, axis: int, kind: str = "scalar") -> np.ndarray:
        """Central cell gradient with mirrored (scalar) or reflected (velocity)
        ghost values at closed neighbours."""
        if kind == "velocity":
            ghost_p = -phi
            ghost_m = -phi
        else:
            ghost_p = phi
            ghost_m = phi
        vp = np.where(self.open_p[axis], shift_p(phi, axis), ghost_p)
        vm = np.where(self.open_m[axis], shift_m(phi, axis), ghost_m)
        g = (vp - vm) / (2.0 * self.h)
        g[~self.fluid] = 0.0
        return g

    def face_gradient(self, phi: np.ndarray, axis: int) -> np.ndarray:
        """(phi_nb - phi_c)/h on fluid-fluid faces, zero elsewhere."""
        g = (shift_p(phi, axis) - phi) / self.h
        return np.where(self.face_ff[axis], g, 0.0)

    # -- convection ---------------------------------------------------------

    def face_value_bounded_central(self, phi, flux, axis) -> np.ndarray:
        """NVD bounded-central face value: central/second-order-upwind blend in
        the monotone region, first-order upwind outside it."""
        phi_p = shift_p(phi, axis)
        phi_m = shift_m(phi, axis)
        phi_pp = shift_p(phi_p, axis)
        pos = flux >= 0.0
        phi_c = np.where(pos, phi, phi_p)
        phi_d = np.where(pos, phi_p, phi)
        phi_u = np.where(pos, phi_m, phi_pp)
        u_ok = np.where(pos, self.u_ok_pos[axis], self.u_ok_neg[axis])
        denom = phi_d - phi_u
        safe = denom != 0.0
        tilde = np.where(safe, (phi_c - phi_u) / np.where(safe, denom, 1.0), 2.0)
        bounded = u_ok & (tilde > 0.0) & (tilde < 1.0)
        gamma = np.clip(tilde / BETA_M, 0.0, 1.0)
        blended = gamma * 0.5 * (phi_c + phi_d) + (1.0 - gamma) * (1.5 * phi_c - 0.5 * phi_u)
        return np.where(bounded, blended, phi_c)

    def face_value_upwind2(self, phi, flux, axis) -> np.ndarray:
        """Second-order upwind face value, first-order where the far-upwind
        cell is closed."""
        phi_p = shift_p(phi, axis)
        phi_m = shift_m(phi, axis)
        phi_pp = shift_p(phi_p, axis)
        pos = flux >= 0.0
        phi_c = np.where(pos, phi, phi_p)
        phi_u = np.where(pos, phi_m, phi_pp)
        u_ok = np.where(pos, self.u_ok_pos[axis], self.u_ok_neg[axis])
        return np.where(u_ok, 1.5 * phi_c - 0.5 * phi_u, phi_c)

    def convective_divergence(self, phi, faces, scheme="bounded_central") -> np.ndarray:
        """div(flux * phi_face) with the requested face-value scheme.

        `faces` are the solenoidal face-normal velocities (fx, fy, fz); at
        fluid|inlet and fluid|outlet faces the transported value is taken from
        the boundary cell (inflow) or upwind (outflow) automatically because
        boundary cells carry their values.
        """
        out = np.zeros_like(phi)
        for a in range(3):
            flux = faces[a]
            if scheme == "bounded_central":
                fv = self.face_value_bounded_central(phi, flux, a)
            else:
                fv = self.face_value_upwind2(phi, flux, a)
            live = self.face_ff[a] | self.face_fi[a] | self.face_fo[a]
            f = np.where(live, flux * fv, 0.0)
            out += (f - shift_m(f, a)) / self.h
        out[~self.fluid] = 0.0
        return out

    # -- diffusion ----------------------------------------------------------

    def face_conductance(self, nu_cells, axis, wall: str = "noslip",
                         bc_dirichlet: bool = True):
        """Per-face conductance [1/s] for div(nu grad) on this axis.

        wall="noslip": solid faces conduct to zero at the face (2 nu / h^2);
        wall="zeroflux": solid faces do not conduct (scalar transport).
        bc_dirichlet: inlet faces conduct to the boundary-cell value.
        """
        h2 = self.h * self.h
        nu_face = 0.5 * (nu_cells + shift_p(nu_cells, axis))
        g = np.where(self.face_ff[axis], nu_face / h2, 0.0)
        if bc_dirichlet:
            g = np.where(self.face_fi[axis], nu_face / h2, g)
        if wall == "noslip":
            g = np.where(self.face_fw[axis], 2.0 * nu_cells / h2, g)
            # conductance must sit on the fluid side of the wall face
            g = np.where(self.face_fw[axis] & (self.mesh.cell_class == SOLID),
                         2.0 * shift_p(nu_cells, axis) / h2, g)
        return g

    def diffusion_apply(self, x, cond, extra_diag=None) -> np.ndarray:
        """div(nu grad x) given per-axis face conductances (zero outside fluid)."""
        out = np.zeros_like(x)
        for a in range(3):
            g = cond[a]
            gm = shift_m(g, a)
            out += g * (shift_p(x, a) - x) + gm * (shift_m(x, a) - x)
        if extra_diag is not None:
            out -= extra_diag * x
        out[~self.fluid] = 0.0
        return out

    def diffusion_diag(self, cond, extra_diag=None) -> np.ndarray:
        diag = np.zeros(self.mesh.dims, dtype=np.float64)
        for a in range(3):
            diag += cond[a] + shift_m(cond[a], a)
        if extra_diag is not None:
            diag += extra_diag
        return diag

    # -- linear solve -------------------------------------------------------

    def solve_helmholtz(self, alpha, cond, rhs, x0, extra_diag=None,
                        tol=1e-10, maxiter=500, label="helmholtz"):
        """CG on (alpha - div nu grad + extra_diag) x = rhs over fluid cells.

        x0 carries boundary values in Inlet/Outlet cells; they are held fixed
        and folded into the initial residual.
        """
        fluid = self.fluid

        def apply_full(v):
            return alpha * v - self.diffusion_apply(v, cond, extra_diag)

        x = x0.copy()
        r = np.where(fluid, rhs - apply_full(x), 0.0)
        b_norm = float(np.max(np.abs(r))) if r.size else 0.0
        scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
        target = tol * max(b_norm, scale, 1e-300)
        if b_norm <= target:
            return x, 0, b_norm
        diag = alpha + self.diffusion_diag(cond, extra_diag)
        inv_diag = np.where(fluid, 1.0 / np.where(fluid, diag, 1.0), 0.0)
        z = inv_diag * r
        p = z.copy()
        rz = float(np.sum(r * z))
        res = b_norm
        for it in range(1, maxiter + 1):
            ap = np.where(fluid, apply_full(p), 0.0)
            denom = float(np.sum(p * ap))
            if denom == 0.0:
                break
            alpha_cg = rz / denom
            x += alpha_cg * p
            r -= alpha_cg * ap
            res = float(np.max(np.abs(r)))
            if res <= target:
                return x, it, res
            z = inv_diag * r
            rz_new = float(np.sum(r * z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise LinearSolverError(
            f"{label} CG failed: residual {res:.3e} (target {target:.3e}) "
            f"after {maxiter} iterations",
            iterations=maxiter,
            residual=res,
        )


def get_context(mesh: VoxelMesh) -> GridContext:
    """Context cached on the mesh (meshes are immutable after construction)."""
    ctx = getattr(mesh, "_gridctx", None)
    if ctx is None:
        ctx = GridContext(mesh)
        mesh._gridctx = ctx
    return ctx
