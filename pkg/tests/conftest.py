"""Shared verification drivers, session-cached so the solver tests and the
acceptance gate reuse one computation."""

import dataclasses
import time

import numpy as np
import pytest

import swirlsim.solver as S
from swirlsim import turbulence as T
from swirlsim.geometry import DeviceSpec, build_device_mesh, make_box_mesh, make_channel_mesh
from swirlsim.state import FlowState


# ---------------------------------------------------------------------------
# Taylor-Green


def make_tg_state(n, nu):
    L = 2 * np.pi
    h = L / n
    mesh = make_box_mesh((n, n, 1), h, periodic=(True, True, True))
    st = FlowState.zeros(mesh)
    x = mesh.axis_coords(0)[:, None, None]
    y = mesh.axis_coords(1)[None, :, None]
    st.u[...] = np.sin(x) * np.cos(y)
    st.v[...] = -np.cos(x) * np.sin(y)
    st.fx[...] = np.sin(x + h / 2) * np.cos(y)
    st.fy[...] = -np.cos(x) * np.sin(y + h / 2)
    return mesh, st, x, y


def run_tg(n, t_end, dt=None, cfl=0.32, nu=0.01, track_ke=False):
    mesh, st, x, y = make_tg_state(n, nu)
    opts = S.SolverOptions(nu=nu, poisson_tol=1e-11, momentum_tol=1e-13)
    h = mesh.h
    if dt is None:
        dt = cfl * h
    n_steps = int(np.ceil(t_end / dt))
    dt = t_end / n_steps
    ke0 = st.kinetic_energy(mesh.fluid_mask, h)
    worst = 0.0
    for _ in range(n_steps):
        S.advance_timestep(st, mesh, None, T.LAMINAR, dt, opts)
        if track_ke:
            ke = st.kinetic_energy(mesh.fluid_mask, h)
            exact = ke0 * np.exp(-4.0 * nu * st.t)
            worst = max(worst, abs(ke - exact) / exact)
    return dict(mesh=mesh, state=st, x=x, y=y, worst_ke_err=worst,
                ke=st.kinetic_energy(mesh.fluid_mask, h))


def tg_velocity_error(result, nu=0.01):
    st = result["state"]
    decay = np.exp(-2.0 * nu * st.t)
    x, y = result["x"], result["y"]
    ue = np.sin(x) * np.cos(y) * decay * np.ones_like(st.u)
    ve = -np.cos(x) * np.sin(y) * decay * np.ones_like(st.u)
    return float(np.sqrt(np.mean((st.u - ue) ** 2 + (st.v - ve) ** 2)))


@pytest.fixture(scope="session")
def tg_decay():
    """64^2, Re = 100, one convective period (2 pi)."""
    t0 = time.perf_counter()
    out = run_tg(64, 2 * np.pi, track_ke=True)
    out["elapsed"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def tg_orders():
    t0 = time.perf_counter()
    errs = []
    for n in (16, 32, 64):
        errs.append(tg_velocity_error(run_tg(n, 2.0)))
    slopes = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    return dict(errors=errs, slopes=slopes, elapsed=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def tg_dt_ratio():
    """One-period KE under dt halving at fixed 64^2 grid, nu = 0.1."""
    n, nu = 64, 0.1
    t_end = 2 * np.pi
    dt0 = t_end / int(np.ceil(t_end / (0.8 * 2 * np.pi / n)))
    kes = [run_tg(n, t_end, dt=dt0 / f, nu=nu)["ke"] for f in (1, 2, 4)]
    return (kes[0] - kes[1]) / (kes[1] - kes[2])


# ---------------------------------------------------------------------------
# Poiseuille channel (bulk-velocity controlled)


def run_poiseuille(ny=64, nu=0.05, u_target=1.0, max_steps=6000, tol=1e-11):
    h = 1.0 / ny
    height = ny * h
    mesh = make_channel_mesh(nx=4, ny_fluid=ny, h=h)
    st = FlowState.zeros(mesh)
    fluid = mesh.fluid_mask
    y = mesh.axis_coords(1)[None, :, None] - h
    prof = 6.0 * u_target * (y / height) * (1.0 - y / height)
    st.u[...] = np.where(fluid, prof, 0.0)
    st.fx[...] = np.where(fluid, prof, 0.0)
    opts = S.SolverOptions(nu=nu, poisson_tol=1e-10, momentum_tol=1e-12)
    dt = 0.45 * h
    shifts = []
    alpha0 = 1.5  # steady BDF2 cycle: applied shift responds as alpha0 * du
    for it in range(max_steps):
        S.advance_timestep(st, mesh, None, T.LAMINAR, dt, opts)
        du = u_target - st.u[fluid].mean()
        st.u[fluid] += du
        st.fx[fluid] += du
        shifts.append(du / dt)
        if it > 300 and abs(du) < tol:
            break
    grad_equiv = alpha0 * float(np.mean(shifts[-100:]))
    yc = mesh.axis_coords(1) - h
    u_prof = st.u[2, 1:-1, 0]
    yy = yc[1:-1]
    exact = 6.0 * u_target * (yy / height) * (1.0 - yy / height)
    return dict(
        mesh=mesh, state=st,
        profile_err=float(np.max(np.abs(u_prof - exact)) / (1.5 * u_target)),
        gradient=grad_equiv,
        gradient_exact=12.0 * nu * u_target / height**2,
        asymmetry=float(np.max(np.abs(u_prof - u_prof[::-1]))
                        / np.max(np.abs(u_prof))),
    )


@pytest.fixture(scope="session")
def poiseuille():
    return run_poiseuille()


@pytest.fixture(scope="session")
def stokes_duct():
    """Same duct deep in the Stokes regime (Re ~ 0.3)."""
    return run_poiseuille(ny=32, nu=3.0, max_steps=3000, tol=1e-13)


# ---------------------------------------------------------------------------
# k-eps decay ODE limit


def run_ke_decay(dt=2e-3, t_end=2.5, k0=1.0, eps0=1.0):
    mesh = make_box_mesh((4, 4, 4), 0.01, periodic=(True, True, True))
    st = FlowState.zeros(mesh)
    st.k[...] = k0
    st.eo[...] = eps0
    st.nu_t[...] = 0.09 * k0**2 / eps0
    closure = T.ClosureConfig(model=T.ClosureModel.REALIZABLE_KE,
                              wall_functions=False)
    times = [0.0]
    ks = [k0]
    n_steps = int(round(t_end / dt))
    for _ in range(n_steps):
        T.turbulence_scalar_step(st, mesh, closure, dt, nu=0.0)
        st.step += 1  # invalidate the gradient cache
        times.append(times[-1] + dt)
        ks.append(float(st.k[0, 0, 0]))
    return np.array(times), np.array(ks), closure.ke.c2


@pytest.fixture(scope="session")
def ke_decay():
    return run_ke_decay()


# ---------------------------------------------------------------------------
# coarse device meshes


def coarse_device_spec(**kw):
    """Default device with inlets widened so coarse resolutions stay legal."""
    base = dict(inlet_width=0.005, inlet_height=0.008,
                inlet_tangential_offset=0.0072, plenum_radius=0.026)
    base.update(kw)
    return dataclasses.replace(DeviceSpec(), **base)


@pytest.fixture(scope="session")
def coarse_device_mesh():
    return build_device_mesh(coarse_device_spec(), 0.0016)
