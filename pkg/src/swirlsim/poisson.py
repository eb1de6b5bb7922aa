"""Pressure Poisson solve: 7-point Laplacian over fluid cells, AMG-PCG.

The operator is assembled from exactly the face set the projection uses
(fluid-fluid faces conduct, every boundary face is Neumann), so correcting
face velocities with the face gradient of the solution drives the discrete
divergence to the solve residual. All meshes here yield a singular
pure-Neumann system; the constant null space is projected out and the
solution is referenced to zero mean over outlet-adjacent cells when an
outlet exists ("Dirichlet reference at outlet"), else to zero global mean.
"""

from __future__ import annotations

import numpy as np
import pyamg
from scipy import sparse

from .errors import CompatibilityError, LinearSolverError
from .geometry import OUTLET, VoxelMesh
from .gridops import GridContext, get_context, shift_m, shift_p

COMPAT_REL = 1e-8  # allowed net/gross rhs imbalance


def assemble_laplacian(ctx: GridContext) -> sparse.csr_matrix:
    """Positive-definite form A = -div(grad) over fluid cells."""
    h2 = ctx.h * ctx.h
    idx = ctx.fluid_index
    rows, cols, vals = [], [], []
    diag = np.zeros(ctx.n_fluid)
    for a in range(3):
        ff = ctx.face_ff[a]
        c_idx = idx[ff]
        n_idx = shift_p(idx, a)[ff]
        rows.extend((c_idx, n_idx))
        cols.extend((n_idx, c_idx))
        vals.extend((np.full(c_idx.size, -1.0 / h2), np.full(c_idx.size, -1.0 / h2)))
        np.add.at(diag, c_idx, 1.0 / h2)
        np.add.at(diag, n_idx, 1.0 / h2)
    rows.append(np.arange(ctx.n_fluid))
    cols.append(np.arange(ctx.n_fluid))
    vals.append(diag)
    a_mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ctx.n_fluid, ctx.n_fluid),
    )
    return a_mat.tocsr()


class PoissonSolver:
    """AMG-preconditioned CG for the cell-centred pressure Poisson equation."""

    def __init__(self, mesh: VoxelMesh):
        self.ctx = get_context(mesh)
        self.mesh = mesh
        self.a_mat = assemble_laplacian(self.ctx)
        ones = np.ones((self.ctx.n_fluid, 1))
        # symmetric sweeps keep the V-cycle SPD so CG stays valid
        smoother = ("gauss_seidel", {"sweep": "symmetric"})
        self.ml = pyamg.smoothed_aggregation_solver(
            self.a_mat, B=ones, max_coarse=64, symmetry="symmetric",
            presmoother=smoother, postsmoother=smoother,
        )
        self.precond = self.ml.aspreconditioner(cycle="V")
        # constant null space per connected fluid component
        from scipy import ndimage as _ndi
        labels, n_comp = _ndi.label(self.ctx.fluid)
        self.comp = labels[self.ctx.fluid] - 1
        self.n_comp = n_comp
        # reference cells: fluid neighbours of the outlet slab, else all fluid
        ref = np.zeros(mesh.dims, dtype=bool)
        cls = mesh.cell_class
        for a in range(3):
            ref |= self.ctx.fluid & (
                (shift_p(cls, a) == OUTLET) | (shift_m(cls, a) == OUTLET)
            )
        if not ref.any():
            ref = self.ctx.fluid
        self.ref_flat = self.ctx.fluid_index[ref & self.ctx.fluid]
        self._warm = None

    def _project(self, v: np.ndarray) -> np.ndarray:
        """Remove the per-component constant modes (singular Neumann system)."""
        if self.n_comp == 1:
            return v - v.mean()
        means = np.bincount(self.comp, weights=v, minlength=self.n_comp)
        counts = np.bincount(self.comp, minlength=self.n_comp)
        return v - (means / counts)[self.comp]

    def check_compatibility(self, rhs_flat: np.ndarray) -> None:
        gross = float(np.sum(np.abs(rhs_flat)))
        net = abs(float(np.sum(rhs_flat)))
        if gross > 0.0 and net > COMPAT_REL * gross:
            raise CompatibilityError(
                f"Poisson rhs incompatible with all-Neumann boundaries: "
                f"net/gross imbalance {net / gross:.3e} exceeds {COMPAT_REL:.1e}"
            )

    def solve(self, rhs, tol: float = 1e-8, abs_target: float | None = None,
              warm_start=None, maxiter: int = 800):
        """Return phi with ||lap(phi) - rhs||_inf <= max(tol*||rhs||_inf, abs_target).

        rhs is a full-box field; the result is a full-box field, zero outside
        fluid cells. warm_start optionally carries the previous correction as
        a flat vector (returned in the third... stored back by the caller).
        """
        ctx = self.ctx
        rhs_flat = rhs[ctx.fluid]
        self.check_compatibility(rhs_flat)
        b = -rhs_flat  # A = -laplacian
        b = self._project(b)
        b_norm = float(np.max(np.abs(b))) if b.size else 0.0
        target = tol * b_norm
        if abs_target is not None:
            target = max(target, float(abs_target))
        out = np.zeros(self.mesh.dims)
        if b_norm == 0.0:
            return out, 0, 0.0

        x = np.zeros_like(b)
        if warm_start is not None and warm_start is not True:
            x = self._project(np.asarray(warm_start, dtype=np.float64).copy())
        elif warm_start is True and self._warm is not None:
            x = self._project(self._warm.copy())
        r = b - self.a_mat @ x
        res = float(np.max(np.abs(r)))
        it = 0
        if res > target:
            z = self._project(self.precond @ r)
            p = z.copy()
            rz = float(r @ z)
            for it in range(1, maxiter + 1):
                ap = self.a_mat @ p
                denom = float(p @ ap)
                if denom <= 0.0:
                    break
                alpha = rz / denom
                x += alpha * p
                r -= alpha * ap
                res = float(np.max(np.abs(r)))
                if res <= target:
                    break
                z = self._project(self.precond @ r)
                rz_new = float(r @ z)
                p = z + (rz_new / rz) * p
                rz = rz_new
            else:
                raise LinearSolverError(
                    f"pressure Poisson failed: residual {res:.3e} "
                    f"(target {target:.3e}) after {maxiter} iterations",
                    iterations=maxiter,
                    residual=res,
                )
            if res > target:
                raise LinearSolverError(
                    f"pressure Poisson stalled: residual {res:.3e} "
                    f"(target {target:.3e}) after {it} iterations",
                    iterations=it,
                    residual=res,
                )
        self._warm = x.copy()
        x = x - x[self.ref_flat].mean()
        out[ctx.fluid] = x
        return out, it, res

    def residual_inf(self, phi, rhs) -> float:
        """||div(grad phi) - rhs||_inf over fluid cells (contract check)."""
        lap = -(self.a_mat @ phi[self.ctx.fluid])
        return float(np.max(np.abs(lap - rhs[self.ctx.fluid])))


def get_poisson(mesh: VoxelMesh) -> PoissonSolver:
    solver = getattr(mesh, "_poisson", None)
    if solver is None:
        solver = PoissonSolver(mesh)
        mesh._poisson = solver
    return solver
