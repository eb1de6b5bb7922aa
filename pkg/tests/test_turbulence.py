"""Closure oracles: SST, realisable k-epsilon, WALE, curvature correction,
shielded blending, wall treatment, and the transport-equation limits."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swirlsim import turbulence as T
from swirlsim.channel import solve_sst_channel
from swirlsim.geometry import make_box_mesh, make_channel_mesh
from swirlsim.state import FlowState

TOL = 1e-12


# ---------------------------------------------------------------------------
# SST eddy viscosity


def test_sst_low_strain_branch():
    # S -> 0: nu_t = k / omega
    nu_t = T.eddy_viscosity_sst(k=1.0, omega=100.0, strain=0.0,
                                wall_distance=0.01, nu=1.5e-5)
    assert abs(nu_t - 0.01) <= TOL


def test_sst_zero_k():
    assert T.eddy_viscosity_sst(0.0, 10.0, 5.0, 0.01, 1.5e-5) == 0.0


def test_sst_strain_limited_branch():
    # F2 saturates at 1 for this input; nu_t = a1 k / S = 0.031
    nu_t = T.eddy_viscosity_sst(k=1.0, omega=1.0, strain=10.0,
                                wall_distance=0.1, nu=1e-6)
    assert abs(nu_t - 0.31 / 10.0) <= TOL


def test_sst_rejects_nonpositive_omega():
    with pytest.raises(ValueError):
        T.eddy_viscosity_sst(1.0, 0.0, 1.0, 0.01, 1.5e-5)
    with pytest.raises(ValueError):
        T.eddy_viscosity_sst(1.0, -1.0, 1.0, 0.01, 1.5e-5)


@given(st.floats(0.0, 1e3), st.floats(1e-6, 1e6), st.floats(0.0, 1e6))
@settings(max_examples=50, deadline=None)
def test_sst_nut_nonnegative(k, omega, strain):
    assert T.eddy_viscosity_sst(k, omega, strain, 0.01, 1.5e-5) >= 0.0


# ---------------------------------------------------------------------------
# realisable k-epsilon


def test_rke_zero_strain_cmu():
    cmu = T.realizable_cmu(1.0, 1.0, 0.0, 0.0, 0.0)
    assert abs(cmu - 1.0 / 4.04) <= TOL
    nu_t = T.eddy_viscosity_realizable_ke(1.0, 1.0, 0.0, 0.0, 0.0)
    assert abs(nu_t - 1.0 / 4.04) <= TOL


def test_rke_zero_k():
    assert T.eddy_viscosity_realizable_ke(0.0, 1.0, 1.0, 0.0, 1.0) == 0.0


def test_rke_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        T.eddy_viscosity_realizable_ke(1.0, 0.0, 1.0, 0.0, 1.0)


def test_rke_cmu_decreases_with_strain():
    # pure-shear invariants at increasing magnitude: Sij Sij = s^2/2
    shears = np.linspace(0.1, 50.0, 40)
    cmus = []
    for s in shears:
        sij_sij = 0.5 * s**2
        oij_oij = 0.5 * s**2
        cmus.append(T.realizable_cmu(1.0, 1.0, sij_sij, 0.0, oij_oij))
    assert np.all(np.diff(cmus) < 0.0)


# ---------------------------------------------------------------------------
# curvature correction


def shear_tensors(rate):
    g = np.zeros((3, 3))
    g[0, 1] = rate
    s = 0.5 * (g + g.T)
    o = 0.5 * (g - g.T)
    return s, o


def test_cc_pure_shear_identity():
    s, o = shear_tensors(3.0)
    f = T.curvature_correction_factor(s, o, np.zeros((3, 3)))
    assert abs(f - 1.0) <= TOL


def test_cc_clip_bounds():
    s, o = shear_tensors(1.0)
    # destabilizing: large negative r~ drives f_rot above the cap
    ds = np.zeros((3, 3))
    ds[0, 0] = -1e6
    ds[1, 1] = 1e6
    f_hi = T.curvature_correction_factor(s, o, ds)
    f_lo = T.curvature_correction_factor(s, o, -ds)
    assert {round(float(f_hi), 12), round(float(f_lo), 12)} == {0.0, 1.25}


def test_cc_off_means_unit_production():
    mesh = make_box_mesh((4, 4, 4), 0.01, periodic=(True, True, True))
    st_a = FlowState.zeros(mesh)
    st_a.k[...] = 1.0
    st_a.eo[...] = 1.0
    st_a.nu_t[...] = 0.09
    st_b = st_a.copy()
    on = T.ClosureConfig(model=T.ClosureModel.REALIZABLE_KE,
                         curvature_correction=True, wall_functions=False)
    off = T.ClosureConfig(model=T.ClosureModel.REALIZABLE_KE,
                          curvature_correction=False, wall_functions=False)
    T.turbulence_scalar_step(st_a, mesh, off, 1e-3, nu=0.0)
    T.turbulence_scalar_step(st_b, mesh, on, 1e-3, nu=0.0)
    # zero velocity: f_r multiplies a zero production either way
    assert np.array_equal(st_a.k, st_b.k)


# ---------------------------------------------------------------------------
# WALE


def test_wale_zero_gradient():
    assert T.wale_subgrid_viscosity(np.zeros((3, 3)), 0.01) == 0.0


def test_wale_vanishes_for_pure_shear():
    g = np.zeros((3, 3))
    g[0, 1] = 7.3
    assert T.wale_subgrid_viscosity(g, 0.01) == 0.0


def test_wale_nonzero_for_pure_rotation():
    # symbolic: Sd:Sd = 2/3 Omega^4, S:S = 0 -> nu_t = (Cw h)^2 (2/3)^(1/4) Omega
    omega = 3.0
    g = np.array([[0.0, omega, 0.0], [-omega, 0.0, 0.0], [0.0, 0.0, 0.0]])
    expected = (0.325 * 0.01) ** 2 * (2.0 / 3.0) ** 0.25 * omega
    got = T.wale_subgrid_viscosity(g, 0.01)
    assert abs(got - expected) <= TOL * max(expected, 1.0)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_wale_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(3, 3))
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    g_rot = q @ g @ q.T
    a = T.wale_subgrid_viscosity(g, 0.01)
    b = T.wale_subgrid_viscosity(g_rot, 0.01)
    assert abs(a - b) <= 1e-12 * max(abs(a), 1e-30) + 1e-18


# ---------------------------------------------------------------------------
# SBES blending and shielding


def test_sbes_endpoints_and_linearity():
    assert T.sbes_blend(0.02, 0.004, 1.0) == 0.02
    assert T.sbes_blend(0.02, 0.004, 0.0) == 0.004
    assert abs(T.sbes_blend(0.02, 0.004, 0.5) - 0.012) <= TOL
    a, b = 0.37, 0.11
    for fs in (0.2, 0.7):
        lin = fs * a + (1 - fs) * b
        assert T.sbes_blend(a, b, fs) == lin


def test_sbes_rejects_out_of_range_shield():
    with pytest.raises(ValueError):
        T.sbes_blend(1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        T.sbes_blend(1.0, 1.0, -0.1)


def test_shielding_wall_limit():
    f = T.shielding_function(1e-9, 1.5e-5, 0.0, 100.0)
    assert f == pytest.approx(1.0, abs=1e-12)


def test_shielding_free_stream_limit():
    f = T.shielding_function(1.0, 1.5e-5, 1e-6, 1.0)
    assert f <= 0.01


def test_shielding_monotone_on_flat_plate_profile():
    # capped-mixing-length boundary layer: S = u_tau/(kappa y), nu_t capped
    u_tau, kappa, delta, nu = 1.0, 0.41, 0.1, 1.5e-5
    y = np.geomspace(nu / u_tau * 0.5, 50 * delta, 400)
    nu_t = np.minimum(kappa * u_tau * y, 0.2 * kappa * u_tau * delta)
    grad = u_tau / (kappa * y)
    f = T.shielding_function(y, nu, nu_t, grad)
    assert np.all(np.diff(f) <= 1e-12)
    assert f[0] > 0.99 and f[-1] < 0.01


# ---------------------------------------------------------------------------
# transport equation limits


def test_ke_decay_exponent(ke_decay):
    times, ks, c2 = ke_decay
    exact = (1.0 + (c2 - 1.0) * times) ** (-1.0 / (c2 - 1.0))
    assert np.max(np.abs(ks - exact) / exact) < 0.01
    # regression of ln k against ln(1 + (C2-1) t) recovers the exponent
    xs = np.log(1.0 + (c2 - 1.0) * times[1:])
    slope = np.polyfit(xs, np.log(ks[1:]), 1)[0]
    assert abs(-slope - 1.0 / (c2 - 1.0)) < 0.01 / (c2 - 1.0)


def test_k_floor_preserved():
    mesh = make_box_mesh((4, 4, 4), 0.01, periodic=(True, True, True))
    stt = FlowState.zeros(mesh)
    stt.k[...] = 0.0
    stt.eo[...] = 1.0
    closure = T.ClosureConfig(model=T.ClosureModel.REALIZABLE_KE,
                              wall_functions=False)
    for _ in range(5):
        T.turbulence_scalar_step(stt, mesh, closure, 1e-3, nu=0.0)
        stt.step += 1
    assert np.all(stt.k[mesh.fluid_mask] == T.K_FLOOR)


def test_sst_channel_log_law():
    yp, up, _, _ = solve_sst_channel(re_tau=395.0)
    sel = (yp >= 30.0) & (yp <= 100.0)
    log_law = np.log(yp[sel]) / 0.41 + 5.2
    assert np.max(np.abs(up[sel] - log_law) / log_law) < 0.05


# ---------------------------------------------------------------------------
# wall diagnostics


def test_wall_yplus_zero_flow():
    mesh = make_channel_mesh(nx=6, ny_fluid=12, h=0.01)
    stt = FlowState.zeros(mesh)
    diag = T.wall_yplus(stt, mesh, nu=1.5e-5)
    assert np.all(diag.yplus == 0.0)


def test_wall_yplus_couette_analytic():
    # linear shear du/dy = G: first-cell u_tau = sqrt(nu u_p / d), d = h/2
    h, nu, shear = 0.01, 1.5e-5, 40.0
    mesh = make_channel_mesh(nx=6, ny_fluid=12, h=h)
    stt = FlowState.zeros(mesh)
    y = mesh.axis_coords(1)[None, :, None] - h
    height = 12 * h
    stt.u[...] = np.where(mesh.fluid_mask,
                          shear * np.minimum(y, height - y), 0.0)
    diag = T.wall_yplus(stt, mesh, nu=nu)
    u_p = shear * 0.5 * h
    u_tau = np.sqrt(nu * u_p / (0.5 * h))
    expected = u_tau * 0.5 * h / nu
    got = diag.yplus[3, 1, 0]
    assert got == pytest.approx(expected, rel=1e-12)


def test_wall_yplus_flags_sst_policy():
    h, nu = 0.01, 1.5e-6
    mesh = make_channel_mesh(nx=6, ny_fluid=12, h=h)
    stt = FlowState.zeros(mesh)
    stt.u[...] = np.where(mesh.fluid_mask, 10.0, 0.0)
    stt.k[...] = np.where(mesh.fluid_mask, 1.0, 0.0)
    closure = T.ClosureConfig(model=T.ClosureModel.SST)
    diag = T.wall_yplus(stt, mesh, nu=nu, closure=closure)
    assert diag.policy == "y+ <= 8"
    assert sum(p.violating for p in diag.patches) > 0
    adj_max = diag.yplus.max()
    assert adj_max > 8.0


def test_scalable_wall_shear_invariant_below_floor():
    # below the y* = 11.06 floor the computed wall shear stays put (within 1%)
    nu, k, u_p = 1.5e-5, 0.5, 2.0
    d_floor = 11.06 * nu / (0.09**0.25 * np.sqrt(k))
    taus = [T.u_tau_scalable(u_p, d, nu, k) ** 2
            for d in np.linspace(0.05 * d_floor, 0.999 * d_floor, 20)]
    assert (max(taus) - min(taus)) / max(taus) < 0.01


def test_wall_diag_csv(tmp_path):
    mesh = make_channel_mesh(nx=6, ny_fluid=12, h=0.01)
    stt = FlowState.zeros(mesh)
    diag = T.wall_yplus(stt, mesh, nu=1.5e-5)
    out = tmp_path / "yplus.csv"
    diag.to_csv(out)
    header = out.read_text().splitlines()[0]
    assert header == "patch,count,yplus_min,yplus_mean,yplus_max,violating_cells"
