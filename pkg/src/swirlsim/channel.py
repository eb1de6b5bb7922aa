"""1-D fully developed turbulent channel driver for the SST closure.

Solves the wall-normal momentum / k / omega system of a half channel at a
prescribed friction Reynolds number on a stretched wall-resolved grid,
reusing the SST blending and eddy-viscosity functions of the 3-D closure.
Used to verify the mean profile against the log law.
"""

from __future__ import annotations

import numpy as np

from .errors import LinearSolverError
from .turbulence import SSTConstants, eddy_viscosity_sst, sst_f1

K_FLOOR = 1e-14
W_FLOOR = 1e-8


def channel_grid(n: int, delta: float, stretch: float = 3.0) -> np.ndarray:
    """Node positions clustered at the wall (tanh stretching), y in (0, delta]."""
    eta = np.linspace(0.0, 1.0, n + 1)[1:]
    y = delta * (1.0 + np.tanh(stretch * (eta - 1.0)) / np.tanh(stretch))
    return y


def _tridiag_solve(lower, diag, upper, rhs):
    n = diag.size
    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / m
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m
    x = np.zeros(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def _diffusion_matrix(y, gamma_face, wall_gamma):
    """Tridiagonal d/dy(gamma d/dy) on the non-uniform node set.

    Node 0 couples to the wall (value 0) through wall_gamma; the last node is
    a symmetry plane (zero flux).
    """
    n = y.size
    dy_w = np.empty(n)      # distance to the previous node (or wall)
    dy_w[0] = y[0]
    dy_w[1:] = y[1:] - y[:-1]
    dy_e = np.empty(n)
    dy_e[:-1] = y[1:] - y[:-1]
    dy_e[-1] = dy_w[-1]
    vol = 0.5 * (dy_w + dy_e)
    g_w = np.empty(n)       # west conductance (wall side)
    g_w[0] = wall_gamma
    g_w[1:] = gamma_face
    g_e = np.zeros(n)       # east conductance; symmetry plane carries none
    g_e[: n - 1] = gamma_face
    lower = np.zeros(n)
    upper = np.zeros(n)
    lower[1:] = -g_w[1:] / (dy_w[1:] * vol[1:])
    upper[:-1] = -g_e[:-1] / (dy_e[:-1] * vol[:-1])
    diag = g_w / (dy_w * vol) + g_e / (dy_e * vol)
    return lower, diag, upper, vol


def solve_sst_channel(re_tau: float = 395.0, n: int = 200, max_iters: int = 4000,
                      tol: float = 1e-9, relax: float = 0.5,
                      constants: SSTConstants = SSTConstants()):
    """Steady half-channel at friction Reynolds number re_tau (u_tau = delta = 1).

    Returns (y_plus, u_plus, k, omega) on the node set.
    """
    c = constants
    delta = 1.0
    u_tau = 1.0
    nu = u_tau * delta / re_tau
    y = channel_grid(n, delta)
    dy1 = y[0]
    force = u_tau**2 / delta

    # start on the physical branch: log-law velocity, equilibrium k and omega
    y_plus = y * u_tau / nu
    u = np.where(y_plus < 11.0, y_plus, np.log(np.maximum(y_plus, 1.0)) / c.kappa + 5.2)
    k = np.minimum(1.0, (y_plus / 20.0) ** 2) / np.sqrt(c.beta_star) + 1e-6
    w_log = u_tau / (np.sqrt(c.beta_star) * c.kappa * y)
    w_vis = 6.0 * nu / (c.beta_1 * np.maximum(y, dy1) ** 2)
    w = np.sqrt(w_vis**2 + w_log**2)

    # Menter wall condition: omega pinned at the first node
    sub = np.zeros(n, dtype=bool)
    sub[0] = True
    omega_pin = np.full(n, 10.0 * 6.0 * nu / (c.beta_1 * dy1**2))

    def faces(q):
        return 0.5 * (q[:-1] + q[1:])

    last = np.inf
    for it in range(max_iters):
        dudy = np.gradient(u, y, edge_order=2)
        dudy[0] = u[0] / y[0]  # one-sided at the wall side
        strain = np.abs(dudy)
        w = np.maximum(w, W_FLOOR)
        nu_t = eddy_viscosity_sst(np.maximum(k, 0.0), w, strain, y, nu, c)

        dkdy = np.gradient(k, y, edge_order=2)
        dwdy = np.gradient(w, y, edge_order=2)
        f1 = sst_f1(np.maximum(k, 0.0), w, y, nu, dkdy * dwdy, c)
        sigma_k = f1 * c.sigma_k1 + (1 - f1) * c.sigma_k2
        sigma_w = f1 * c.sigma_w1 + (1 - f1) * c.sigma_w2
        beta = f1 * c.beta_1 + (1 - f1) * c.beta_2
        gamma = f1 * c.gamma_1 + (1 - f1) * c.gamma_2

        # momentum: 0 = d/dy[(nu+nu_t) du/dy] + force
        g = nu + nu_t
        lo, di, up, vol = _diffusion_matrix(y, faces(g), nu + nu_t[0])
        rhs = np.full(n, force)
        u_new = _tridiag_solve(lo, di, up, rhs)

        # k: 0 = P - beta* k w + d/dy[(nu+sigma_k nu_t) dk/dy], P limited
        p_k = np.minimum(nu_t * strain**2, 10.0 * c.beta_star * k * w)
        g = nu + sigma_k * nu_t
        lo, di, up, vol = _diffusion_matrix(y, faces(g), nu)
        di = di + c.beta_star * w
        k_new = _tridiag_solve(lo, di, up, p_k)
        k_new = np.maximum(k_new, K_FLOOR)

        # omega: 0 = gamma S^2 - beta w^2 + CD + diffusion; wall value pinned
        cd = 2.0 * (1.0 - f1) * c.sigma_w2 / w * dkdy * dwdy
        g = nu + sigma_w * nu_t
        lo, di, up, vol = _diffusion_matrix(y, faces(g), nu)
        di = di + beta * w
        rhs = gamma * strain**2 + cd
        # pinned node is a Dirichlet row so its neighbour sees the wall value
        lo[sub] = 0.0
        up[sub] = 0.0
        di[sub] = 1.0
        rhs[sub] = omega_pin[sub]
        w_new = _tridiag_solve(lo, di, up, rhs)
        w_new = np.maximum(w_new, W_FLOOR)

        du = np.max(np.abs(u_new - u)) / max(np.max(np.abs(u_new)), 1e-30)
        u = (1 - relax) * u + relax * u_new
        k = (1 - relax) * k + relax * k_new
        w = (1 - relax) * w + relax * w_new
        if du < tol and it > 100:
            break
        last = du
    else:
        raise LinearSolverError(
            f"SST channel driver did not converge: last update {last:.3e}",
            iterations=max_iters, residual=last,
        )
    y_plus = y * u_tau / nu
    u_plus = u / u_tau
    return y_plus, u_plus, k, w
