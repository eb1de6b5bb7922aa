"""Turbulence closures: realisable k-epsilon, k-omega SST, WALE subgrid
viscosity, curvature correction, and shielded RANS/LES blending.

Pointwise closure functions accept scalars or arrays; field-level drivers
(turbulence_scalar_step, update_eddy_viscosity, wall treatment) operate on
the voxel mesh through the shared grid context.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalBlowupError
from .geometry import SOLID, VoxelMesh
from .gridops import get_context

K_FLOOR = 1e-12
OMEGA_FLOOR = 1e-6
EPS_FLOOR = 1e-12
NUT_RATIO_CAP = 1e5  # cap on nu_t / nu


class ClosureModel(str, enum.Enum):
    NONE = "none"
    REALIZABLE_KE = "realizable_ke"
    SST = "sst"
    SBES = "sbes"


@dataclass(frozen=True)
class KEpsilonConstants:
    c2: float = 1.9
    sigma_k: float = 1.0
    sigma_eps: float = 1.2
    a0: float = 4.04


@dataclass(frozen=True)
class SSTConstants:
    a1: float = 0.31
    beta_star: float = 0.09
    kappa: float = 0.41
    sigma_k1: float = 0.85
    sigma_w1: float = 0.5
    beta_1: float = 0.075
    sigma_k2: float = 1.0
    sigma_w2: float = 0.856
    beta_2: float = 0.0828

    @property
    def gamma_1(self) -> float:
        return self.beta_1 / self.beta_star - self.sigma_w1 * self.kappa**2 / np.sqrt(self.beta_star)

    @property
    def gamma_2(self) -> float:
        return self.beta_2 / self.beta_star - self.sigma_w2 * self.kappa**2 / np.sqrt(self.beta_star)


@dataclass(frozen=True)
class CurvatureCorrectionConstants:
    c_r1: float = 1.0
    c_r2: float = 2.0
    c_r3: float = 1.0
    clip_min: float = 0.0
    clip_max: float = 1.25


@dataclass(frozen=True)
class WALEConstants:
    c_w: float = 0.325


@dataclass(frozen=True)
class ShieldingConstants:
    kappa: float = 0.41
    scale: float = 8.0
    power: float = 3.0
    grad_floor: float = 1e-10


@dataclass(frozen=True)
class ClosureConfig:
    model: ClosureModel = ClosureModel.SBES
    curvature_correction: bool = False
    wall_functions: bool = True
    ke: KEpsilonConstants = field(default_factory=KEpsilonConstants)
    sst: SSTConstants = field(default_factory=SSTConstants)
    cc: CurvatureCorrectionConstants = field(default_factory=CurvatureCorrectionConstants)
    wale: WALEConstants = field(default_factory=WALEConstants)
    shielding: ShieldingConstants = field(default_factory=ShieldingConstants)

    def __post_init__(self):
        for group in (self.ke, self.sst, self.wale, self.shielding):
            for name, value in vars(group).items():
                if not value > 0.0:
                    raise ValueError(f"closure constant {name} must be positive")
        if not self.cc.clip_min < self.cc.clip_max:
            raise ValueError("curvature-correction clip bounds must be ordered")

    @property
    def uses_omega(self) -> bool:
        return self.model in (ClosureModel.SST, ClosureModel.SBES)


LAMINAR = ClosureConfig(model=ClosureModel.NONE, wall_functions=False)


# ---------------------------------------------------------------------------
# pointwise closures


def sst_f2(k, omega, wall_distance, nu, c: SSTConstants = SSTConstants()):
    arg2 = np.maximum(
        2.0 * np.sqrt(np.maximum(k, 0.0)) / (c.beta_star * omega * wall_distance),
        500.0 * nu / (wall_distance**2 * omega),
    )
    return np.tanh(arg2**2)


def sst_f1(k, omega, wall_distance, nu, grad_k_dot_grad_w,
           c: SSTConstants = SSTConstants()):
    cd_kw = np.maximum(2.0 * c.sigma_w2 / omega * grad_k_dot_grad_w, 1e-10)
    sqrt_k = np.sqrt(np.maximum(k, 0.0))
    arg1 = np.minimum(
        np.maximum(
            sqrt_k / (c.beta_star * omega * wall_distance),
            500.0 * nu / (wall_distance**2 * omega),
        ),
        4.0 * c.sigma_w2 * k / (cd_kw * wall_distance**2),
    )
    return np.tanh(arg1**4)


def eddy_viscosity_sst(k, omega, strain, wall_distance, nu,
                       c: SSTConstants = SSTConstants()):
    """nu_t = a1 k / max(a1 omega, S F2); strain is S = sqrt(2 Sij Sij)."""
    if np.any(np.asarray(omega) <= 0.0):
        raise ValueError("SST eddy viscosity requires omega > 0")
    f2 = sst_f2(k, omega, wall_distance, nu, c)
    return c.a1 * np.maximum(k, 0.0) / np.maximum(c.a1 * omega, strain * f2)


def realizable_cmu(k, eps, sij_sij, sij_triple, oij_oij,
                   c: KEpsilonConstants = KEpsilonConstants()):
    """Variable C_mu of the realisable k-epsilon model."""
    s_tilde = np.sqrt(sij_sij)
    w = np.where(s_tilde > 0.0, sij_triple / np.where(s_tilde > 0.0, s_tilde, 1.0) ** 3, 0.0)
    phi = np.arccos(np.clip(np.sqrt(6.0) * w, -1.0, 1.0)) / 3.0
    a_s = np.sqrt(6.0) * np.cos(phi)
    u_star = np.sqrt(sij_sij + oij_oij)
    return 1.0 / (c.a0 + a_s * u_star * np.maximum(k, 0.0) / eps)


def eddy_viscosity_realizable_ke(k, eps, sij_sij, sij_triple, oij_oij,
                                 c: KEpsilonConstants = KEpsilonConstants()):
    """nu_t = C_mu(k, eps, invariants) k^2 / eps."""
    if np.any(np.asarray(eps) <= 0.0):
        raise ValueError("realisable k-epsilon eddy viscosity requires eps > 0")
    cmu = realizable_cmu(k, eps, sij_sij, sij_triple, oij_oij, c)
    return cmu * np.maximum(k, 0.0) ** 2 / eps


def curvature_correction_factor(strain, rotation, strain_rate_dt,
                                c: CurvatureCorrectionConstants = CurvatureCorrectionConstants()):
    """Rotation/curvature production multiplier, clipped to [clip_min, clip_max].

    strain, rotation, strain_rate_dt: (..., 3, 3) tensors (S_ij, Omega_ij,
    DS_ij/Dt); the pure-shear calibration point (r* = 1, r~ = 0) returns 1.
    """
    s2 = 2.0 * np.einsum("...ij,...ij->...", strain, strain)
    o2 = 2.0 * np.einsum("...ij,...ij->...", rotation, rotation)
    s_mag = np.sqrt(s2)
    o_mag = np.sqrt(o2)
    safe_o = np.where(o_mag > 0.0, o_mag, 1.0)
    r_star = np.where(o_mag > 0.0, s_mag / safe_o, 1e6)
    d2 = np.maximum(s2, 0.09 * o2)
    denom = np.maximum(safe_o * np.maximum(d2, 1e-300) ** 2, 1e-300)
    r_tilde_raw = 2.0 * np.einsum("...ik,...jk,...ij->...", rotation, strain, strain_rate_dt)
    r_tilde = np.where(o_mag > 0.0, r_tilde_raw / denom, 0.0)
    f_rot = (
        (1.0 + c.c_r1)
        * (2.0 * r_star / (1.0 + r_star))
        * (1.0 - c.c_r3 * np.arctan(c.c_r2 * r_tilde))
        - c.c_r1
    )
    return np.clip(f_rot, c.clip_min, c.clip_max)


def wale_subgrid_viscosity(grad, h, c: WALEConstants = WALEConstants()):
    """WALE subgrid viscosity from the velocity-gradient tensor (..., 3, 3).

    Vanishes identically for pure shear; zero-over-zero is defined as 0.
    """
    g = np.asarray(grad, dtype=np.float64)
    g2 = np.einsum("...ik,...kj->...ij", g, g)
    trace = np.einsum("...ii->...", g2)
    sd = 0.5 * (g2 + np.swapaxes(g2, -1, -2))
    for i in range(3):
        sd[..., i, i] -= trace / 3.0
    s = 0.5 * (g + np.swapaxes(g, -1, -2))
    sd2 = np.einsum("...ij,...ij->...", sd, sd)
    ss = np.einsum("...ij,...ij->...", s, s)
    denom = ss**2.5 + sd2**1.25
    num = sd2**1.5
    out = np.where(denom > 0.0, (c.c_w * h) ** 2 * num / np.where(denom > 0.0, denom, 1.0), 0.0)
    return out


def sbes_blend(nu_t_rans, nu_t_les, f_s):
    """Shield-weighted eddy viscosity: f_s nu_rans + (1 - f_s) nu_les."""
    fs = np.asarray(f_s, dtype=np.float64)
    if np.any(fs < 0.0) or np.any(fs > 1.0):
        raise ValueError("shielding function value must lie in [0, 1]")
    return fs * nu_t_rans + (1.0 - fs) * nu_t_les


def shielding_function(wall_distance, nu, nu_t, grad_mag,
                       c: ShieldingConstants = ShieldingConstants()):
    """DDES-class shielding: 1 deep in attached boundary layers, 0 far away.

    f_s = tanh((scale r_d)^power), r_d = (nu + nu_t)/(kappa^2 d^2 max(|G|, floor)).
    """
    g = np.maximum(grad_mag, c.grad_floor)
    r_d = (nu + nu_t) / (c.kappa**2 * np.asarray(wall_distance) ** 2 * g)
    return np.tanh((c.scale * r_d) ** c.power)


# ---------------------------------------------------------------------------
# wall treatment

_LOG_E = np.exp(0.41 * 5.2)  # E of the log law u+ = ln(E y+)/kappa


def u_tau_automatic(u_p, d, nu, k, c: SSTConstants = SSTConstants()):
    """Blended viscous/log friction velocity (k-based, non-iterative)."""
    u_tau_vis = np.sqrt(np.maximum(nu * u_p / d, 0.0))
    y_star = np.maximum(c.beta_star**0.25 * np.sqrt(np.maximum(k, 0.0)) * d / nu, 2.0)
    u_tau_log = c.kappa * u_p / np.log(_LOG_E * y_star)
    return (u_tau_vis**4 + u_tau_log**4) ** 0.25


def u_tau_scalable(u_p, d, nu, k, cmu: float = 0.09, y_star_floor: float = 11.06,
                   kappa: float = 0.41):
    """Scalable wall-function friction velocity: y* floored so the first cell
    always sits on the log law; wall shear is u_star * u_tau_profile."""
    u_star = cmu**0.25 * np.sqrt(np.maximum(k, K_FLOOR))
    y_star = np.maximum(u_star * d / nu, y_star_floor)
    tau_w = u_star * u_p * kappa / np.log(_LOG_E * y_star)
    return np.sqrt(np.maximum(tau_w, 0.0))


@dataclass
class PatchSummary:
    patch: str
    count: int
    y_min: float
    y_mean: float
    y_max: float
    violating: int


@dataclass
class WallDiagnostics:
    policy: str
    patches: list
    yplus: np.ndarray  # per-cell y+ (zero away from walls)

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("patch,count,yplus_min,yplus_mean,yplus_max,violating_cells\n")
            for p in self.patches:
                f.write(
                    f"{p.patch},{p.count},{p.y_min:.17g},{p.y_mean:.17g},"
                    f"{p.y_max:.17g},{p.violating}\n"
                )


def wall_yplus(state, mesh: VoxelMesh, nu: float,
               closure: ClosureConfig | None = None) -> WallDiagnostics:
    """y+ of wall-adjacent fluid cells with per-patch summaries."""
    ctx = get_context(mesh)
    adj = ctx.wall_adjacent
    yplus = np.zeros(mesh.dims)
    d = mesh.wall_distance if mesh.wall_distance is not None else np.full(mesh.dims, 0.5 * mesh.h)
    d = np.maximum(d, 0.25 * mesh.h)
    u_p = state.velocity_magnitude()
    model = closure.model if closure is not None else ClosureModel.NONE
    if closure is not None and closure.wall_functions and model is ClosureModel.REALIZABLE_KE:
        u_tau = u_tau_scalable(u_p[adj], d[adj], nu, state.k[adj])
    elif closure is not None and closure.wall_functions and model in (
            ClosureModel.SST, ClosureModel.SBES):
        u_tau = u_tau_automatic(u_p[adj], d[adj], nu, state.k[adj], closure.sst)
    else:
        u_tau = np.sqrt(np.maximum(nu * u_p[adj] / d[adj], 0.0))
    yplus[adj] = u_tau * d[adj] / nu

    if model in (ClosureModel.SST, ClosureModel.SBES):
        policy = "y+ <= 8"
        violates = yplus > 8.0
    elif model is ClosureModel.REALIZABLE_KE:
        policy = "11 <= y+ <= 200"
        violates = (yplus < 11.0) | (yplus > 200.0)
    else:
        policy = "none"
        violates = np.zeros(mesh.dims, dtype=bool)

    from .geometry import PATCH_NAMES
    patches = []
    patch_field = mesh.patch
    if patch_field is None:
        groups = {"wall": adj}
    else:
        # patch of a wall-adjacent cell: patch of any adjacent solid cell
        from .gridops import shift_m, shift_p
        cell_patch = np.zeros(mesh.dims, dtype=np.uint8)
        for a in range(3):
            for shifted in (shift_p(patch_field, a), shift_m(patch_field, a)):
                cell_patch = np.where(adj & (cell_patch == 0), shifted, cell_patch)
        groups = {}
        for code, name in PATCH_NAMES.items():
            if code == 0:
                continue
            sel = adj & (cell_patch == code)
            if sel.any():
                groups[name] = sel
    for name, sel in sorted(groups.items()):
        vals = yplus[sel]
        patches.append(
            PatchSummary(
                patch=name,
                count=int(vals.size),
                y_min=float(vals.min()),
                y_mean=float(vals.mean()),
                y_max=float(vals.max()),
                violating=int(np.count_nonzero(violates[sel])),
            )
        )
    return WallDiagnostics(policy=policy, patches=patches, yplus=yplus)


def wall_conductance_override(ctx, state, cond, nu, closure: ClosureConfig):
    """Replace wall-face conductances with wall-function effective viscosity."""
    mesh = ctx.mesh
    d = mesh.wall_distance if mesh.wall_distance is not None else None
    if d is None:
        return cond, None
    d = np.maximum(d, 0.25 * mesh.h)
    u_p = np.maximum(state.velocity_magnitude(), 1e-12)
    if closure.model is ClosureModel.REALIZABLE_KE:
        u_tau = u_tau_scalable(u_p, d, nu, state.k)
    else:
        u_tau = u_tau_automatic(u_p, d, nu, state.k, closure.sst)
    nu_wall = np.maximum(u_tau**2 * d / u_p, nu)
    h2 = mesh.h * mesh.h
    cls = mesh.cell_class
    from .gridops import shift_m, shift_p
    new_cond = []
    for a in range(3):
        g = cond[a]
        fw = ctx.face_fw[a]
        fluid_side_minus = fw & (cls != SOLID)
        g = np.where(fluid_side_minus, 2.0 * nu_wall / h2, g)
        fluid_side_plus = fw & (cls == SOLID)
        g = np.where(fluid_side_plus, 2.0 * shift_p(nu_wall, a) / h2, g)
        new_cond.append(g)
    return new_cond, None


# ---------------------------------------------------------------------------
# field-level drivers


def velocity_gradients(state, mesh: VoxelMesh):
    """Cached du_i/dx_j tensor (nx, ny, nz, 3, 3) at the current step."""
    cache = getattr(state, "_grad_cache", None)
    if cache is not None and cache[0] == state.step:
        return cache[1]
    ctx = get_context(mesh)
    comps = (state.u, state.v, state.w)
    g = np.empty(mesh.dims + (3, 3))
    for i in range(3):
        for j in range(3):
            g[..., i, j] = ctx.grad(comps[i], j, kind="velocity")
    state._grad_cache = (state.step, g)
    return g


def strain_rotation(grad):
    s = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    o = 0.5 * (grad - np.swapaxes(grad, -1, -2))
    return s, o


def _material_strain_rate(state, mesh, strain, dt):
    """DS/Dt: backward time difference plus advection (first order)."""
    ctx = get_context(mesh)
    prev = getattr(state, "_strain_prev", None)
    ds = np.zeros_like(strain)
    if prev is not None and dt > 0.0:
        ds += (strain - prev) / dt
    for a, comp in enumerate((state.u, state.v, state.w)):
        for i in range(3):
            for j in range(3):
                ds[..., i, j] += comp * ctx.grad(strain[..., i, j], a, kind="scalar")
    state._strain_prev = strain.copy()
    return ds


def _advect(ctx, phi, faces):
    return ctx.convective_divergence(phi, faces, scheme="upwind2")


def turbulence_scalar_step(state, mesh: VoxelMesh, closure: ClosureConfig,
                           dt: float, nu: float) -> None:
    """Advance (k, eps) or (k, omega): second-order-upwind advection, implicit
    diffusion, explicit production (optionally curvature-corrected) and
    linearized destruction; positivity enforced by floors."""
    if closure.model is ClosureModel.NONE:
        return
    ctx = get_context(mesh)
    fluid = ctx.fluid
    faces = (state.fx, state.fy, state.fz)
    grad = velocity_gradients(state, mesh)
    s_t, o_t = strain_rotation(grad)
    s2_tensor = np.einsum("...ij,...ij->...", s_t, s_t)
    strain = np.sqrt(2.0 * s2_tensor)

    k = np.maximum(state.k, K_FLOOR)
    c = closure
    if c.curvature_correction:
        ds_dt = _material_strain_rate(state, mesh, s_t, dt)
        f_r = curvature_correction_factor(s_t, o_t, ds_dt, c.cc)
    else:
        f_r = 1.0

    if np.any(~np.isfinite(strain[fluid])):
        raise NumericalBlowupError("non-finite strain rate in turbulence sources")

    if closure.uses_omega:
        sst = c.sst
        omega = np.maximum(state.eo, OMEGA_FLOOR)
        d = mesh.wall_distance
        if d is not None:
            d = np.maximum(d, 0.25 * mesh.h)
        gk = [ctx.grad(state.k, a) for a in range(3)]
        gw = [ctx.grad(state.eo, a) for a in range(3)]
        dot = gk[0] * gw[0] + gk[1] * gw[1] + gk[2] * gw[2]
        f1 = sst_f1(k, omega, d, nu, dot, sst)
        sigma_k = f1 * sst.sigma_k1 + (1 - f1) * sst.sigma_k2
        sigma_w = f1 * sst.sigma_w1 + (1 - f1) * sst.sigma_w2
        beta = f1 * sst.beta_1 + (1 - f1) * sst.beta_2
        gamma = f1 * sst.gamma_1 + (1 - f1) * sst.gamma_2

        p_k = np.minimum(state.nu_t * strain**2, 10.0 * sst.beta_star * k * omega) * f_r
        cross = 2.0 * (1.0 - f1) * sst.sigma_w2 / omega * dot

        # wall-law production where the first cell sits outside the sublayer
        if c.wall_functions and d is not None:
            adj = ctx.wall_adjacent
            u_p = np.maximum(state.velocity_magnitude(), 1e-12)
            u_tau = u_tau_automatic(u_p, d, nu, k, sst)
            y_star = sst.beta_star**0.25 * np.sqrt(k) * d / nu
            p_wall = u_tau**3 / (sst.kappa * d)
            use_wall = adj & (y_star > 11.06)
            p_k = np.where(use_wall, p_wall, p_k)

        # k equation
        cond_k = [ctx.face_conductance(nu + sigma_k * state.nu_t, a, wall="zeroflux")
                  for a in range(3)]
        rhs_k = k / dt - _advect(ctx, state.k, faces) + p_k
        destr_k = sst.beta_star * omega
        k_new, _, _ = ctx.solve_helmholtz(
            1.0 / dt, cond_k, np.where(fluid, rhs_k, 0.0), state.k.copy(),
            extra_diag=destr_k, tol=1e-8, label="tke",
        )
        # omega equation
        cond_w = [ctx.face_conductance(nu + sigma_w * state.nu_t, a, wall="zeroflux")
                  for a in range(3)]
        rhs_w = omega / dt - _advect(ctx, state.eo, faces) + gamma * strain**2 * f_r + cross
        destr_w = beta * omega
        w_new, _, _ = ctx.solve_helmholtz(
            1.0 / dt, cond_w, np.where(fluid, rhs_w, 0.0), state.eo.copy(),
            extra_diag=destr_w, tol=1e-8, label="omega",
        )
        state.k[fluid] = np.maximum(k_new[fluid], K_FLOOR)
        state.eo[fluid] = np.maximum(w_new[fluid], OMEGA_FLOOR)
        if c.wall_functions and d is not None:
            adj = ctx.wall_adjacent
            omega_vis = 6.0 * nu / (sst.beta_1 * d**2)
            u_star = sst.beta_star**0.25 * np.sqrt(np.maximum(state.k, K_FLOOR))
            omega_log = u_star / (np.sqrt(sst.beta_star) * sst.kappa * d)
            state.eo[adj] = np.sqrt(omega_vis**2 + omega_log**2)[adj]
    else:
        ke = c.ke
        eps = np.maximum(state.eo, EPS_FLOOR)
        p_k = state.nu_t * strain**2 * f_r
        d = mesh.wall_distance
        if d is not None:
            d = np.maximum(d, 0.25 * mesh.h)
        if c.wall_functions and d is not None:
            adj = ctx.wall_adjacent
            u_p = np.maximum(state.velocity_magnitude(), 1e-12)
            u_tau = u_tau_scalable(u_p, d, nu, k)
            p_wall = u_tau**2 * 0.09**0.25 * np.sqrt(k) / (0.41 * d)
            p_k = np.where(adj, p_wall, p_k)

        cond_k = [ctx.face_conductance(nu + state.nu_t / ke.sigma_k, a, wall="zeroflux")
                  for a in range(3)]
        rhs_k = k / dt - _advect(ctx, state.k, faces) + p_k
        destr_k = eps / k
        k_new, _, _ = ctx.solve_helmholtz(
            1.0 / dt, cond_k, np.where(fluid, rhs_k, 0.0), state.k.copy(),
            extra_diag=destr_k, tol=1e-8, label="tke",
        )
        eta = strain * k / eps
        c1 = np.maximum(0.43, eta / (eta + 5.0))
        cond_e = [ctx.face_conductance(nu + state.nu_t / ke.sigma_eps, a, wall="zeroflux")
                  for a in range(3)]
        rhs_e = eps / dt - _advect(ctx, state.eo, faces) + c1 * strain * eps
        destr_e = ke.c2 * eps / (k + np.sqrt(nu * eps))
        e_new, _, _ = ctx.solve_helmholtz(
            1.0 / dt, cond_e, np.where(fluid, rhs_e, 0.0), state.eo.copy(),
            extra_diag=destr_e, tol=1e-8, label="eps",
        )
        state.k[fluid] = np.maximum(k_new[fluid], K_FLOOR)
        state.eo[fluid] = np.maximum(e_new[fluid], EPS_FLOOR)
        if c.wall_functions and d is not None:
            adj = ctx.wall_adjacent
            eps_wall = 0.09**0.75 * np.maximum(state.k, K_FLOOR) ** 1.5 / (0.41 * d)
            state.eo[adj] = eps_wall[adj]

    if np.any(~np.isfinite(state.k[fluid])) or np.any(~np.isfinite(state.eo[fluid])):
        raise NumericalBlowupError("non-finite turbulence scalars after transport")


def update_eddy_viscosity(state, mesh: VoxelMesh, closure: ClosureConfig,
                          nu: float) -> None:
    """Refresh nu_t from the closure at the current time level."""
    if closure.model is ClosureModel.NONE:
        state.nu_t[...] = 0.0
        return
    ctx = get_context(mesh)
    fluid = ctx.fluid
    grad = velocity_gradients(state, mesh)
    s_t, o_t = strain_rotation(grad)
    s2 = np.einsum("...ij,...ij->...", s_t, s_t)
    strain = np.sqrt(2.0 * s2)
    k = np.maximum(state.k, K_FLOOR)

    if closure.model is ClosureModel.REALIZABLE_KE:
        eps = np.maximum(state.eo, EPS_FLOOR)
        triple = np.einsum("...ij,...jk,...ki->...", s_t, s_t, s_t)
        o2 = np.einsum("...ij,...ij->...", o_t, o_t)
        nu_t = eddy_viscosity_realizable_ke(k, eps, s2, triple, o2, closure.ke)
    else:
        omega = np.maximum(state.eo, OMEGA_FLOOR)
        d = np.maximum(mesh.wall_distance, 0.25 * mesh.h)
        nu_rans = eddy_viscosity_sst(k, omega, strain, d, nu, closure.sst)
        if closure.model is ClosureModel.SBES:
            nu_les = wale_subgrid_viscosity(grad, mesh.h, closure.wale)
            grad_mag = np.sqrt(np.einsum("...ij,...ij->...", grad, grad))
            f_s = shielding_function(d, nu, nu_rans, grad_mag, closure.shielding)
            nu_t = sbes_blend(nu_rans, nu_les, f_s)
            state.diag["sbes_shield_mean"] = float(f_s[fluid].mean()) if fluid.any() else 1.0
        else:
            nu_t = nu_rans
    nu_t = np.clip(nu_t, 0.0, NUT_RATIO_CAP * nu)
    state.nu_t[fluid] = nu_t[fluid]
    state.nu_t[ctx.solid] = 0.0
