"""Solver verification: projection, Taylor-Green, Poiseuille, conservation."""

import numpy as np
import pytest

import swirlsim.solver as S
from swirlsim import turbulence as T
from swirlsim.errors import (CompatibilityError, InsufficientStatisticsError,
                             NumericalBlowupError, PreconditionError)
from swirlsim.geometry import make_box_mesh, make_pipe_mesh
from swirlsim.poisson import get_poisson
from swirlsim.state import BoundaryConditions, FlowState
from conftest import run_poiseuille, run_tg


# ---------------------------------------------------------------------------
# pressure Poisson


def manufactured_error(n):
    L = 1.0
    h = L / n
    mesh = make_box_mesh((n, n, 1), h, periodic=(False, False, True))
    x = mesh.axis_coords(0)[:, None, None]
    y = mesh.axis_coords(1)[None, :, None]
    phi_ex = (np.cos(np.pi * x / L) * np.cos(np.pi * y / L)) * np.ones((1, 1, 1))
    rhs = -2.0 * (np.pi / L) ** 2 * phi_ex
    solver = get_poisson(mesh)
    phi, _, res = solver.solve(rhs, tol=1e-12)
    fluid = mesh.fluid_mask
    diff = (phi - phi[fluid].mean()) - (phi_ex - phi_ex[fluid].mean())
    return float(np.max(np.abs(diff))), res, float(np.max(np.abs(rhs)))


def test_poisson_manufactured_second_order():
    errs = []
    for n in (16, 32, 64):
        err, res, rhs_scale = manufactured_error(n)
        assert res <= 1e-8 * rhs_scale
        errs.append(err)
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) > 1.9


def test_poisson_zero_rhs():
    mesh = make_box_mesh((8, 8, 8), 0.1, periodic=(False, False, False))
    phi, iters, res = get_poisson(mesh).solve(np.zeros(mesh.dims), tol=1e-10)
    assert np.all(phi == 0.0) and iters == 0


def test_poisson_incompatible_rhs():
    mesh = make_box_mesh((8, 8, 8), 0.1, periodic=(False, False, False))
    rhs = np.ones(mesh.dims)  # 100% net imbalance
    with pytest.raises(CompatibilityError):
        get_poisson(mesh).solve(rhs, tol=1e-8)
    rhs = np.random.default_rng(0).normal(size=mesh.dims)
    rhs -= rhs.mean()
    rhs += 0.01 * np.abs(rhs).mean()  # deliberate 1% of gross
    with pytest.raises(CompatibilityError):
        get_poisson(mesh).solve(rhs, tol=1e-8)


def test_solve_pressure_poisson_contract():
    n = 32
    mesh = make_box_mesh((n, n, 1), 1.0 / n, periodic=(False, False, True))
    x = mesh.axis_coords(0)[:, None, None]
    y = mesh.axis_coords(1)[None, :, None]
    rhs = (np.cos(np.pi * x) * np.cos(np.pi * y)) * np.ones((1, 1, 1))
    rhs -= rhs[mesh.fluid_mask].mean()
    phi = S.solve_pressure_poisson(rhs, mesh, tol=1e-9)
    res = get_poisson(mesh).residual_inf(phi, rhs)
    assert res <= 1e-9 * np.max(np.abs(rhs))


# ---------------------------------------------------------------------------
# compute_cfl


def test_cfl_zero_velocity():
    mesh = make_box_mesh((8, 8, 1), 0.001)
    st = FlowState.zeros(mesh)
    assert S.compute_cfl(st, mesh, 1.0) == 0.0


def test_cfl_arithmetic():
    mesh = make_box_mesh((8, 8, 1), 0.001)
    st = FlowState.zeros(mesh)
    st.u[...] = 1.0
    assert S.compute_cfl(st, mesh, 0.5e-3) == pytest.approx(0.5)


def test_cfl_precondition_enforced():
    mesh = make_box_mesh((8, 8, 1), 0.001, periodic=(True, True, True))
    st = FlowState.zeros(mesh)
    st.u[...] = 1.0
    st.fx[...] = 1.0
    with pytest.raises(PreconditionError):
        S.advance_timestep(st, mesh, None, T.LAMINAR, 2e-3, S.SolverOptions())


# ---------------------------------------------------------------------------
# steadiness and Taylor-Green


def test_uniform_flow_is_steady():
    mesh = make_box_mesh((16, 12, 3), 0.01, periodic=(True, True, True))
    st = FlowState.zeros(mesh)
    st.u[...] = 1.0
    st.fx[...] = 1.0
    opts = S.SolverOptions(nu=1e-3)
    for _ in range(5):
        S.advance_timestep(st, mesh, None, T.LAMINAR, 0.8 * 0.01, opts)
    assert np.max(np.abs(st.u - 1.0)) < 1e-12
    assert np.max(np.abs(st.v)) < 1e-12
    assert st.t == pytest.approx(5 * 0.8 * 0.01)


def test_tg_kinetic_energy_decay(tg_decay):
    assert tg_decay["worst_ke_err"] < 0.01


def test_tg_spatial_order(tg_orders):
    assert min(tg_orders["slopes"]) >= 1.9


def test_tg_dt_halving_second_order(tg_dt_ratio):
    assert 3.0 <= tg_dt_ratio <= 5.0


def test_divergence_after_projection(tg_decay):
    mesh = tg_decay["mesh"]
    st = tg_decay["state"]
    from swirlsim.gridops import get_context
    div = get_context(mesh).divergence(st.fx, st.fy, st.fz)
    assert np.max(np.abs(div)) < 1e-6  # scale U = K = 1


def test_nan_detection():
    mesh = make_box_mesh((8, 8, 1), 0.01, periodic=(True, True, True))
    st = FlowState.zeros(mesh)
    st.u[3, 3, 0] = np.nan
    with pytest.raises(NumericalBlowupError) as err:
        S.advance_timestep(st, mesh, None, T.LAMINAR, 1e-4, S.SolverOptions())
    assert "(3, 3, 0)" in str(err.value) or "cell" in str(err.value)


# ---------------------------------------------------------------------------
# Poiseuille channel and Stokes symmetry


def test_poiseuille_profile(poiseuille):
    assert poiseuille["profile_err"] < 0.02


def test_poiseuille_pressure_gradient(poiseuille):
    rel = abs(poiseuille["gradient"] - poiseuille["gradient_exact"]) \
        / poiseuille["gradient_exact"]
    assert rel < 0.05


def test_stokes_duct_symmetry(stokes_duct):
    assert stokes_duct["asymmetry"] <= 1e-10


# ---------------------------------------------------------------------------
# pressure drop


def test_pressure_drop_zero_flow(coarse_device_mesh):
    mesh = coarse_device_mesh
    bc = BoundaryConditions(re_target=0.0)
    st = FlowState.zeros(mesh)
    up = np.zeros(mesh.dims, dtype=bool)
    dn = np.zeros(mesh.dims, dtype=bool)
    up[1][mesh.fluid_mask[1]] = True
    dn[-2][mesh.fluid_mask[-2]] = True
    dp = S.pressure_drop([st], mesh, bc, upstream_mask=up, downstream_mask=dn)
    assert dp == 0.0


def test_pressure_drop_window_too_short(coarse_device_mesh):
    mesh = coarse_device_mesh
    bc = BoundaryConditions(re_target=8400.0)
    st = FlowState.zeros(mesh)
    st2 = FlowState.zeros(mesh)
    st2.t = 1e-6
    with pytest.raises(InsufficientStatisticsError):
        S.pressure_drop([st, st2], mesh, bc)


def test_pipe_hagen_poiseuille():
    """Force-driven periodic pipe vs 128 mu L Q / (pi D^4) at the
    area-equivalent voxel diameter."""
    d_cells = 40
    h = 1.0 / d_cells
    mesh = make_pipe_mesh(nx=4, diameter_cells=d_cells, h=h)
    fluid = mesh.fluid_mask
    area = np.count_nonzero(fluid[0]) * h * h
    d_eff = 2.0 * np.sqrt(area / np.pi)
    nu, rho, u_bulk = 0.05, 1.0, 1.0
    st = FlowState.zeros(mesh)
    st.u[fluid] = u_bulk
    st.fx[fluid] = u_bulk
    opts = S.SolverOptions(nu=nu, poisson_tol=1e-10, momentum_tol=1e-12)
    dt = 0.35 * h
    shifts = []
    for it in range(4000):
        S.advance_timestep(st, mesh, None, T.LAMINAR, dt, opts)
        du = u_bulk - st.u[fluid].mean()
        st.u[fluid] += du
        st.fx[fluid] += du
        shifts.append(du / dt)
        if it > 400 and abs(du) < 1e-11:
            break
    grad = 1.5 * float(np.mean(shifts[-100:])) * rho  # dP/dx [Pa/m]
    q = u_bulk * area
    mu = rho * nu
    grad_hp = 128.0 * mu * q / (np.pi * d_eff**4)
    assert abs(grad - grad_hp) / grad_hp < 0.05
