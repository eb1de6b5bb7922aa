"""Unsteady incompressible fractional-step solver on the voxel mesh.

One advance_timestep performs: (1) momentum predictor with bounded-central
convection (explicitly extrapolated), implicit variable-viscosity diffusion
and a three-level second-order implicit transient term; (2) pressure Poisson
on the face-flux divergence; (3) projection of face and cell velocities;
(4) turbulence-scalar transport with second-order upwind convection and an
eddy-viscosity refresh for the next step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import turbulence
from .errors import (
    InitializationError,
    InsufficientStatisticsError,
    NumericalBlowupError,
    PreconditionError,
)
from .geometry import DIR_VECTORS, FLUID, VoxelMesh
from .gridops import get_context, shift_m, shift_p
from .poisson import get_poisson
from .state import BoundaryConditions, FlowState, JetReference


@dataclass
class SolverOptions:
    cfl_target: float = 0.8
    poisson_tol: float = 1e-8
    div_tol: float | None = None        # absolute divergence target [1/s]
    momentum_tol: float = 1e-10
    inlet_relax: float = 0.3
    body_force: tuple = (0.0, 0.0, 0.0)
    include_transpose_stress: bool = True
    nu: float = 1.5e-5                  # used when no BoundaryConditions given


class BoundaryDriver:
    """Total-pressure inlet rescaled to the fixed outlet mass flow."""

    def __init__(self, mesh: VoxelMesh, bc: BoundaryConditions):
        ctx = get_context(mesh)
        self.bc = bc
        self.jet = bc.jet_reference(mesh)
        h = mesh.h
        dev = mesh.device

        # reference bore area one Da upstream of the exit (grid-free plane)
        i_ref = int((dev.reference_plane_x - mesh.origin[0]) / h)
        y = mesh.axis_coords(1)[:, None]
        z = mesh.axis_coords(2)[None, :]
        bore = (y - dev.axis_y) ** 2 + (z - dev.axis_z) ** 2 <= (0.5 * dev.jet_diameter) ** 2
        self.area_ref = float(np.count_nonzero(
            bore & (mesh.cell_class[i_ref] == FLUID))) * h * h
        self.q_target = self.jet.Ua * self.area_ref

        # exit-plane bore cells (pressure-drop probe)
        i_exit = max(int((dev.exit_x - mesh.origin[0]) / h) - 1, 0)
        self.exit_plane = np.zeros(mesh.dims, dtype=bool)
        self.exit_plane[i_exit] = bore & (mesh.cell_class[i_exit] == FLUID)

        # inlet cells that actually face fluid along their inflow direction
        cells = []
        dirs = []
        cls = mesh.cell_class
        for (i, j, k) in ctx.inlet_cells:
            code = mesh.inlet_dir[i, j, k]
            d = DIR_VECTORS[code]
            ni, nj, nk = i + d[0], j + d[1], k + d[2]
            if (0 <= ni < mesh.dims[0] and 0 <= nj < mesh.dims[1]
                    and 0 <= nk < mesh.dims[2] and cls[ni, nj, nk] == FLUID):
                cells.append((i, j, k))
                dirs.append(code)
        if not cells:
            raise PreconditionError("device mesh has no live inlet faces")
        self.in_cells = tuple(np.array([c[a] for c in cells]) for a in range(3))
        self.in_dirs = np.array(dirs)
        self.in_nb = tuple(
            self.in_cells[a] + DIR_VECTORS[self.in_dirs][:, a] for a in range(3)
        )
        self.in_area = h * h
        self._mag = np.zeros(len(dirs))

        # fluid neighbours of inlet cells (total-pressure probe)
        self.inlet_probe = np.zeros(mesh.dims, dtype=bool)
        self.inlet_probe[self.in_nb] = True

        # uniform outlet velocity fixing the target mass flow
        out_faces = 0
        for (i, j, k) in ctx.outlet_cells:
            if i > 0 and cls[i - 1, j, k] == FLUID:
                out_faces += 1
        if out_faces == 0:
            raise PreconditionError("device mesh has no live outlet faces")
        self.u_out = self.q_target / (out_faces * h * h)

    def apply_outlet(self, state: FlowState, mesh: VoxelMesh) -> None:
        m = mesh.outlet_mask
        state.u[m] = self.u_out
        state.v[m] = 0.0
        state.w[m] = 0.0

    def update_inlet(self, state: FlowState, mesh: VoxelMesh, relax: float) -> None:
        """Bernoulli inflow from the local pressure, rescaled to the target flow."""
        if self.q_target == 0.0:
            return
        p0 = self.bc.inlet_total_pressure / self.bc.rho  # kinematic
        p_nb = state.p[self.in_nb]
        bern = np.sqrt(np.maximum(0.0, 2.0 * (p0 - p_nb)))
        q_raw = float(np.sum(bern)) * self.in_area
        if q_raw < 0.05 * self.q_target:
            bern = bern + (0.05 * self.q_target - q_raw) / (bern.size * self.in_area)
            q_raw = float(np.sum(bern)) * self.in_area
        mag = (1.0 - relax) * self._mag + relax * bern * (self.q_target / q_raw)
        mag *= self.q_target / (float(np.sum(mag)) * self.in_area)
        self._mag = mag
        vec = DIR_VECTORS[self.in_dirs].astype(np.float64) * mag[:, None]
        state.u[self.in_cells] = vec[:, 0]
        state.v[self.in_cells] = vec[:, 1]
        state.w[self.in_cells] = vec[:, 2]

    def apply_turbulence_inlet(self, state: FlowState, mesh: VoxelMesh, closure) -> None:
        if closure is None or closure.model is turbulence.ClosureModel.NONE:
            return
        intensity = self.bc.turbulence_intensity
        speed = self._mag if self._mag.any() else np.full(self._mag.shape, self.jet.Ua)
        k_in = 1.5 * (intensity * speed) ** 2
        k_in = np.maximum(k_in, turbulence.K_FLOOR)
        ell = 0.07 * self.jet.Da
        cmu = 0.09
        cells = self.in_cells
        state.k[cells] = k_in
        if closure.uses_omega:
            state.eo[cells] = np.sqrt(k_in) / (cmu**0.25 * ell)
            state.nu_t[cells] = k_in / state.eo[cells]
        else:
            state.eo[cells] = cmu**0.75 * k_in**1.5 / ell
            state.nu_t[cells] = cmu * k_in**2 / state.eo[cells]


def get_boundary_driver(mesh: VoxelMesh, bc: BoundaryConditions) -> BoundaryDriver:
    cache = getattr(mesh, "_bdrivers", None)
    if cache is None:
        cache = {}
        mesh._bdrivers = cache
    if bc not in cache:
        cache[bc] = BoundaryDriver(mesh, bc)
    return cache[bc]


# ---------------------------------------------------------------------------


def compute_cfl(state: FlowState, mesh: VoxelMesh, dt: float) -> float:
    """Maximum advective CFL number (|u|+|v|+|w|) dt / h over fluid cells."""
    ctx = get_context(mesh)
    speed = np.abs(state.u) + np.abs(state.v) + np.abs(state.w)
    vmax = float(speed[ctx.open].max()) if ctx.open.any() else 0.0
    return vmax * dt / mesh.h


def stable_dt(state: FlowState, mesh: VoxelMesh, cfl: float,
              floor_speed: float = 0.0) -> float:
    """Largest dt meeting the advective CFL target for the current state."""
    ctx = get_context(mesh)
    speed = np.abs(state.u) + np.abs(state.v) + np.abs(state.w)
    vmax = float(speed[ctx.open].max()) if ctx.open.any() else 0.0
    return cfl * mesh.h / max(vmax, floor_speed, 1e-300)


def _check_finite(state: FlowState, mesh: VoxelMesh) -> None:
    for name in ("u", "v", "w", "p"):
        f = getattr(state, name)
        if not np.all(np.isfinite(f)):
            bad = np.argwhere(~np.isfinite(f))[0]
            raise NumericalBlowupError(
                f"non-finite {name} at cell {tuple(int(b) for b in bad)}, "
                f"t = {state.t:.6e} s"
            )


def _gradient_tensor(ctx, state):
    """dui/dxj as a 3x3 nested list of cell arrays (no-slip ghosts at walls)."""
    comps = (state.u, state.v, state.w)
    return [[ctx.grad(comps[i], j, kind="velocity") for j in range(3)] for i in range(3)]


def _transpose_stress(ctx, state, grad_u):
    """T_i = sum_j (d nu_t/dx_j)(d u_j/dx_i) (exact for solenoidal fields)."""
    dnut = [ctx.grad(state.nu_t, a, kind="scalar") for a in range(3)]
    return [
        sum(dnut[j] * grad_u[j][i] for j in range(3))
        for i in range(3)
    ]


def _pressure_gradient(ctx, p):
    return [ctx.grad(p, a, kind="scalar") for a in range(3)]


def _face_velocities(ctx, comps):
    """Face-normal velocities: linear interpolation on interior faces,
    prescribed boundary-cell values on inlet/outlet faces, zero at walls.

    Continuity is enforced on these face fluxes with the compact Poisson
    stencil, so no pressure-smoothing (Rhie-Chow) term is required to keep
    the pressure free of odd-even modes.
    """
    faces = []
    for a in range(3):
        q = comps[a]
        f = np.where(ctx.face_ff[a], ctx.face_interp(q, a), 0.0)
        bc_face = ctx.face_fi[a] | ctx.face_fo[a]
        bc_val = np.where(ctx.face_bc_p[a], shift_p(q, a), q)
        f = np.where(bc_face, bc_val, f)
        faces.append(f)
    return faces


def advance_timestep(
    state: FlowState,
    mesh: VoxelMesh,
    bc: BoundaryConditions | None,
    closure,
    dt: float,
    options: SolverOptions | None = None,
) -> FlowState:
    """Advance one fractional step of size dt (mutates and returns state)."""
    opts = options or SolverOptions()
    ctx = get_context(mesh)
    _check_finite(state, mesh)
    cfl = compute_cfl(state, mesh, dt)
    if cfl > 1.0 + 1e-9:
        raise PreconditionError(
            f"advective CFL {cfl:.3f} exceeds 1.0; reduce dt below "
            f"{dt / max(cfl, 1e-300):.3e} s"
        )

    driver = get_boundary_driver(mesh, bc) if bc is not None and mesh.device else None
    if driver is not None:
        driver.update_inlet(state, mesh, opts.inlet_relax)
        driver.apply_outlet(state, mesh)
        driver.apply_turbulence_inlet(state, mesh, closure)

    first = state.step == 0 or state.dt_prev == 0.0
    if first:
        a0, a1, a2 = 1.0, -1.0, 0.0
        rho_r = 0.0
    else:
        rho_r = dt / state.dt_prev
        a0 = (1.0 + 2.0 * rho_r) / (1.0 + rho_r)
        a1 = -(1.0 + rho_r)
        a2 = rho_r**2 / (1.0 + rho_r)
    dt_over_a0 = dt / a0

    comps = (state.u, state.v, state.w)
    prev = (state.u_prev, state.v_prev, state.w_prev)
    faces_n = (state.fx, state.fy, state.fz)

    conv_n = tuple(
        -ctx.convective_divergence(comps[i], faces_n, scheme="bounded_central")
        for i in range(3)
    )
    if first or state.conv_prev is None:
        conv_ext = conv_n
    else:
        conv_ext = tuple(
            (1.0 + rho_r) * conv_n[i] - rho_r * state.conv_prev[i] for i in range(3)
        )

    nu = bc.nu if bc is not None else opts.nu
    nu_eff = nu + state.nu_t
    gradp = _pressure_gradient(ctx, state.p)

    if opts.include_transpose_stress and closure is not None and \
            closure.model is not turbulence.ClosureModel.NONE:
        grad_u = _gradient_tensor(ctx, state)
        t_stress = _transpose_stress(ctx, state, grad_u)
    else:
        t_stress = (0.0, 0.0, 0.0)

    cond = [ctx.face_conductance(nu_eff, a, wall="noslip") for a in range(3)]
    extra_diag = None
    if closure is not None and closure.model is not turbulence.ClosureModel.NONE \
            and closure.wall_functions:
        cond, extra_diag = turbulence.wall_conductance_override(
            ctx, state, cond, nu, closure)

    star = []
    alpha = a0 / dt
    for i in range(3):
        rhs = (
            (-a1 * comps[i] - a2 * prev[i]) / dt
            + conv_ext[i]
            - gradp[i]
            + t_stress[i]
            + opts.body_force[i]
        )
        x0 = comps[i].copy()
        sol, _, _ = ctx.solve_helmholtz(
            alpha, cond, np.where(ctx.fluid, rhs, 0.0), x0,
            extra_diag=extra_diag, tol=opts.momentum_tol,
            label=f"momentum[{'uvw'[i]}]",
        )
        star.append(sol)

    # predictor face velocities and projection
    faces_star = _face_velocities(ctx, star)
    div_star = ctx.divergence(*faces_star)

    poisson = get_poisson(mesh)
    div_tol = opts.div_tol
    if div_tol is None and driver is not None and driver.jet.Ua > 0.0:
        div_tol = 0.5e-6 * driver.jet.Ua / driver.jet.Da
    abs_target = None if div_tol is None else div_tol / dt_over_a0
    phi, n_iter, _ = poisson.solve(
        div_star / dt_over_a0, tol=opts.poisson_tol,
        abs_target=abs_target,
        warm_start=getattr(state, "_poisson_warm", None),
    )
    state._poisson_warm = phi[ctx.fluid]

    new_faces = []
    for a in range(3):
        gf = ctx.face_gradient(phi, a)
        new_faces.append(faces_star[a] - dt_over_a0 * gf)
        gc = 0.5 * (gf + shift_m(gf, a))
        star[a] = star[a] - dt_over_a0 * np.where(ctx.fluid, gc, 0.0)
        star[a][ctx.solid] = 0.0

    # rotate time levels
    state.u_prev[...] = state.u
    state.v_prev[...] = state.v
    state.w_prev[...] = state.w
    state.fx_prev[...] = state.fx
    state.fy_prev[...] = state.fy
    state.fz_prev[...] = state.fz
    state.u[...] = star[0]
    state.v[...] = star[1]
    state.w[...] = star[2]
    state.fx[...] = new_faces[0]
    state.fy[...] = new_faces[1]
    state.fz[...] = new_faces[2]
    state.p[...] = state.p + phi
    state.conv_prev = conv_n
    state.dt_prev = dt
    state.t += dt
    state.step += 1
    _check_finite(state, mesh)

    # step diagnostics (divergence, boundary mass balance, solver effort)
    div_new = ctx.divergence(state.fx, state.fy, state.fz)
    state.diag["max_divergence"] = float(np.max(np.abs(div_new))) if div_new.size else 0.0
    state.diag["poisson_iterations"] = n_iter
    if driver is not None:
        q_in = float(np.sum(driver._mag)) * driver.in_area
        state.diag["q_in"] = q_in
        state.diag["q_out"] = driver.q_target
        state.diag["mass_imbalance"] = abs(q_in - driver.q_target) / max(
            driver.q_target, 1e-300)

    if closure is not None and closure.model is not turbulence.ClosureModel.NONE:
        turbulence.turbulence_scalar_step(state, mesh, closure, dt, nu=nu)
        turbulence.update_eddy_viscosity(state, mesh, closure, nu=nu)

    return state


def initialize_state(
    mesh: VoxelMesh,
    bc: BoundaryConditions,
    closure,
    options: SolverOptions | None = None,
    max_iters: int = 300,
    settle_tol: float = 1e-2,
) -> FlowState:
    """Pseudo-steady startup: heavily relaxed stepping until the normalized
    acceleration residual plateaus (or max_iters)."""
    opts = options or SolverOptions()
    state = FlowState.zeros(mesh)
    if bc.re_target == 0.0:
        return state
    driver = get_boundary_driver(mesh, bc)
    jet = driver.jet

    if closure is not None and closure.model is not turbulence.ClosureModel.NONE:
        intensity = bc.turbulence_intensity
        k0 = max(1.5 * (intensity * jet.Ua) ** 2, turbulence.K_FLOOR)
        ell = 0.07 * jet.Da
        cmu = 0.09
        state.k[...] = k0
        if closure.uses_omega:
            state.eo[...] = np.sqrt(k0) / (cmu**0.25 * ell)
            state.nu_t[...] = k0 / state.eo[0, 0, 0]
        else:
            state.eo[...] = cmu**0.75 * k0**1.5 / ell
            state.nu_t[...] = cmu * k0**2 / state.eo[0, 0, 0]
        for f in (state.k, state.eo, state.nu_t):
            f[~get_context(mesh).open] = 0.0

    driver.apply_outlet(state, mesh)
    history = []
    best = np.inf
    stall = 0
    scale = jet.Ua**2 / jet.Da
    for it in range(max_iters):
        dt = stable_dt(state, mesh, opts.cfl_target, floor_speed=jet.Ua)
        u_old = state.u.copy()
        v_old = state.v.copy()
        w_old = state.w.copy()
        # pseudo-steady: restart the multistep history every iteration
        state.dt_prev = 0.0
        state.step = 0
        state.conv_prev = None
        try:
            advance_timestep(state, mesh, bc, closure, dt, opts)
        except NumericalBlowupError as err:
            raise InitializationError(
                f"pseudo-steady startup blew up at iteration {it}: {err}",
                residual_history=history,
            ) from err
        res = float(
            max(
                np.max(np.abs(state.u - u_old)),
                np.max(np.abs(state.v - v_old)),
                np.max(np.abs(state.w - w_old)),
            )
        ) / (dt * scale)
        history.append(res)
        if res < best * 0.99:
            best = res
            stall = 0
        else:
            stall += 1
        if res < settle_tol or (stall >= 30 and it >= 50):
            break
        if history[0] > 0 and res > 1e4 * max(history[0], 1.0):
            raise InitializationError(
                f"pseudo-steady startup diverged: residual {res:.3e} "
                f"after {it} iterations",
                residual_history=history,
            )
    state.dt_prev = 0.0
    state.step = 0
    state.conv_prev = None
    state.t = 0.0
    state.diag["init_residuals"] = history
    return state


def solve_pressure_poisson(rhs: np.ndarray, mesh: VoxelMesh, tol: float = 1e-8):
    """Solve div(grad phi) = rhs on fluid cells (Neumann walls, outlet reference).

    Returns the correction field phi; raises CompatibilityError when the rhs
    violates the all-Neumann balance and LinearSolverError on non-convergence.
    """
    phi, _, _ = get_poisson(mesh).solve(rhs, tol=tol)
    return phi


# ---------------------------------------------------------------------------
# pressure drop


class PressureDropAccumulator:
    """Running time-mean of the inlet-to-mouthpiece total-pressure difference.

    The flow-through time is the axial domain extent over Ua; the accumulated
    window must span at least `min_flow_throughs` of it before a value is read.
    """

    def __init__(self, mesh: VoxelMesh, bc: BoundaryConditions,
                 upstream_mask=None, downstream_mask=None):
        self.mesh = mesh
        self.bc = bc
        if upstream_mask is None or downstream_mask is None:
            driver = get_boundary_driver(mesh, bc)
            upstream_mask = driver.inlet_probe
            downstream_mask = driver.exit_plane
            self.ua = driver.jet.Ua
        else:
            self.ua = bc.re_target * bc.nu / mesh.h if bc.re_target else 0.0
        self.up = upstream_mask
        self.dn = downstream_mask
        self.sum_dp = 0.0
        self.count = 0
        self.t_first = None
        self.t_last = None

    def add(self, state: FlowState) -> None:
        ptot = state.p + 0.5 * (state.u**2 + state.v**2 + state.w**2)
        dp = float(ptot[self.up].mean() - ptot[self.dn].mean())
        self.sum_dp += dp
        self.count += 1
        if self.t_first is None:
            self.t_first = state.t
        self.t_last = state.t

    def flow_through_time(self) -> float:
        if self.ua <= 0.0:
            return np.inf
        extent = self.mesh.dims[0] * self.mesh.h
        return extent / self.ua

    def value(self, min_flow_throughs: float = 10.0) -> float:
        """Time-mean pressure drop in Pa."""
        if self.count == 0:
            raise InsufficientStatisticsError("no samples accumulated")
        if self.ua == 0.0:
            return 0.0
        window = (self.t_last - self.t_first) if self.count > 1 else 0.0
        needed = min_flow_throughs * self.flow_through_time()
        if window < needed:
            raise InsufficientStatisticsError(
                f"statistics window {window:.4g} s shorter than "
                f"{min_flow_throughs} flow-through times ({needed:.4g} s)"
            )
        return self.bc.rho * self.sum_dp / self.count


def pressure_drop(history, mesh: VoxelMesh, bc: BoundaryConditions,
                  min_flow_throughs: float = 10.0,
                  upstream_mask=None, downstream_mask=None) -> float:
    """Time-mean area-averaged total-pressure drop [Pa] over a state history."""
    acc = PressureDropAccumulator(mesh, bc, upstream_mask, downstream_mask)
    for s in history:
        acc.add(s)
    return acc.value(min_flow_throughs)
