"""Vector-field calculus on the unit cosphere bundle S*M.

Fields u(x, xi) live on unit covectors (|xi|_g = 1).  In 2D the fiber is
parametrized by the angle via xi(theta) = g^{1/2}(x) (cos theta, sin theta),
which is an arc-length parametrization for every metric; fiber derivatives
are spectral in theta.  In any dimension the vertical and horizontal
derivatives are computed from the degree-zero homogeneous extension
U0(x, xi) = u(x, xi / |xi|_g): finite differences through the cosphere
renormalization, with the radial component of the fiber gradient projected
out exactly, so the Euler relation sum g^{jk} theta_j V_k = 0 is an exact
identity of the discretization.

Periodic 2D isothermal charts additionally carry a fast tensor-grid path
(spectral in x and theta) used by the quadrature-heavy energy identities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (InvalidArgumentError, KindMismatchError,
                     NotClosedOrbitError, TransportViolationError)
from .fields import torus_grid
from .geometry import FLAT_TORUS, ISOTHERMAL

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# fields and samplers
# ---------------------------------------------------------------------------

@dataclass
class CosphereField:
    """Complex field on (a patch of) S*M: callable in (x, unit covector)."""

    chart: object
    fun: object
    kind: str = "scalar"

    def __call__(self, x, xi):
        return np.asarray(self.fun(x, xi), dtype=complex)


def pullback(chart, base_fun):
    """Lift a function on M to S*M (fiber-independent)."""
    return CosphereField(chart, lambda x, xi: base_fun(x) * np.ones(np.shape(xi)[1:]))


@dataclass
class AffineFiberFunction:
    """f(x, xi) = f0(x) + <f1(x), xi-sharp>: a function plus a one-form."""

    chart: object
    f0: object            # callable x -> real, or None for zero
    f1: tuple | None      # component callables (covector components), or None

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[1:], dtype=complex)
        if self.f0 is not None:
            out = out + self.f0(x)
        if self.f1 is not None:
            ginv = self.chart.metric_inv(x)
            f1v = np.stack([np.asarray(c(x), dtype=complex) for c in self.f1])
            out = out + np.einsum("j...,jk...,k...->...", f1v, ginv, xi)
        return out

    def oneform_part(self):
        return AffineFiberFunction(self.chart, None, self.f1)

    def function_part(self):
        return AffineFiberFunction(self.chart, self.f0, None)


def fiber_circle(chart, x, theta):
    """Unit covectors xi(theta) = g^{1/2}(x) (cos theta, sin theta) (2D)."""
    if chart.dim != 2:
        raise KindMismatchError("fiber_circle is 2D only")
    root = chart.sqrt_metric(x)
    omega = np.stack([np.cos(theta), np.sin(theta)])
    return np.einsum("jk...,k...->j...", root, omega)


def sphere_nodes(n_polar=6, n_azimuth=12):
    """Product Gauss-Legendre x trapezoid quadrature on S^2 (exact deg 11)."""
    t, wt = np.polynomial.legendre.leggauss(n_polar)
    phi = np.arange(n_azimuth) * TWO_PI / n_azimuth
    st = np.sqrt(1.0 - t ** 2)
    nodes = np.stack([
        np.outer(st, np.cos(phi)).ravel(),
        np.outer(st, np.sin(phi)).ravel(),
        np.outer(t, np.ones_like(phi)).ravel()])
    weights = np.outer(wt, np.full_like(phi, TWO_PI / n_azimuth)).ravel()
    return nodes, weights


def fiber_nodes(chart, n=None):
    """Euclidean unit-fiber nodes and weights for the chart dimension."""
    if chart.dim == 1:
        return np.array([[1.0, -1.0]]), np.array([1.0, 1.0])
    if chart.dim == 2:
        n = n or 4 * chart.resolution
        theta = np.arange(n) * TWO_PI / n
        return np.stack([np.cos(theta), np.sin(theta)]), np.full(n, TWO_PI / n)
    if chart.dim == 3:
        return sphere_nodes()
    raise KindMismatchError("fiber quadrature implemented for dim <= 3")


def liouville_nodes(chart, nx=None, fiber_n=None):
    """Quadrature nodes/weights for the Liouville measure on S*M (periodic).

    Returns (x nodes (d, N), xi nodes (d, N, F), weights (N, F)).
    """
    if not chart.periodic:
        raise InvalidArgumentError("Liouville quadrature needs a closed chart")
    nx = nx or 2 * chart.resolution
    xg, wx = torus_grid(chart.periods, nx)
    xs = xg.reshape(chart.dim, -1)
    omega, wf = fiber_nodes(chart, fiber_n)
    root = chart.sqrt_metric(xs)
    xi = np.einsum("jkN,kF->jNF", root, omega)
    dens = chart.sqrt_det(xs)
    weights = wx * dens[:, None] * wf[None, :]
    return xs, xi, weights


# ---------------------------------------------------------------------------
# derivative engines
# ---------------------------------------------------------------------------

def _xi_step(chart):
    return 0.125 / chart.resolution


def _x_steps(chart):
    return np.asarray(chart.fd_step, dtype=float)


def _renormalized_eval(chart, u, x, xi):
    ginv = chart.metric_inv(x)
    r = np.sqrt(np.einsum("j...,jk...,k...->...", xi, ginv, xi))
    return u(x, xi / r)


def _fiber_gradient(chart, u, x, xi):
    """FD gradient of the degree-0 extension, with the exact radial projection.

    Returns shape (dim, *batch).
    """
    h = _xi_step(chart)
    grads = []
    for k in range(chart.dim):
        e = np.zeros_like(xi)
        e[k] = h
        gk = (-_renormalized_eval(chart, u, x, xi + 2 * e)
              + 8 * _renormalized_eval(chart, u, x, xi + e)
              - 8 * _renormalized_eval(chart, u, x, xi - e)
              + _renormalized_eval(chart, u, x, xi - 2 * e)) / (12 * h)
        grads.append(gk)
    grad = np.stack(grads)
    # degree-0 homogeneity: the radial part vanishes identically; remove the
    # numerical remnant so the Euler relation holds exactly
    rad = np.einsum("j...,j...->...", xi, grad) / np.einsum("j...,j...->...", xi, xi)
    return grad - xi * rad


def apply_Vj(chart, u, j):
    """Vertical derivative V_j u = sum_k g_jk d U0 / d xi_k on S*M.

    On 2D isothermal/flat charts the fiber gradient is recovered exactly
    from the spectral angle derivative (the gradient of a degree-zero
    extension is tangent to the fiber); elsewhere it is a projected finite
    difference through the cosphere renormalization.
    """
    fun = _as_callable(u)
    if chart.dim == 2 and chart.kind in (FLAT_TORUS, ISOTHERMAL):

        def vj2(x, xi, _j=j):
            x = np.asarray(x, dtype=float)
            xi = np.asarray(xi, dtype=float)
            theta = _angle_of(chart, x, xi)
            vu = _fiber_spectral(chart, fun, x, theta)
            phi, _, _ = _phi_and_grad(chart, x)
            omega_prime = np.stack([-np.sin(theta), np.cos(theta)])
            return np.exp(phi) * omega_prime[_j] * vu

        return CosphereField(chart, vj2, kind="scalar")

    def vj(x, xi, _j=j):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        grad = _fiber_gradient(chart, fun, x, xi)
        g = chart.metric(x)
        return np.einsum("k...,k...->...", g[_j], grad)

    return CosphereField(chart, vj, kind="scalar")


def _x_line_derivative(chart, eval_at, x, axis, out_shape):
    """d/dx_axis of t -> eval_at(x + t e_axis): spectral on periodic charts,
    4th-order central differences on patches."""
    if chart.periodic:
        n = 4 * chart.resolution
        period = chart.periods[axis]
        offsets = np.arange(n) * period / n
        vals = np.empty(out_shape + (n,), dtype=complex)
        for i, off in enumerate(offsets):
            e = np.zeros_like(x)
            e[axis] = off
            vals[..., i] = eval_at(x + e)
        spec = np.fft.fft(vals, axis=-1) / n
        k = np.fft.fftfreq(n, d=1.0 / n) * (TWO_PI / period)
        return np.sum(spec * (1j * k), axis=-1)
    h = _x_steps(chart)[axis]
    e = np.zeros_like(x)
    e[axis] = h
    return (-eval_at(x + 2 * e) + 8 * eval_at(x + e)
            - 8 * eval_at(x - e) + eval_at(x - 2 * e)) / (12 * h)


def apply_nabla(chart, u, j):
    """Horizontal derivative nabla_j = d/dx_j + Gamma^l_{jk} xi_l d/dxi_k."""
    fun = _as_callable(u)

    def nab(x, xi, _j=j):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        dx = _x_line_derivative(
            chart, lambda x2: _renormalized_eval(chart, fun, x2, xi),
            x, _j, xi.shape[1:])
        grad = _fiber_gradient(chart, fun, x, xi)
        gamma = chart.christoffel(x)
        corr = np.einsum("lk...,l...,k...->...", gamma[:, _j], xi, grad)
        return dx + corr

    return CosphereField(chart, nab, kind="scalar")


def _as_callable(u):
    return u.fun if isinstance(u, CosphereField) else u


def apply_H(chart, u):
    """Generator of the cogeodesic flow applied to a scalar field."""
    if chart.dim == 2 and chart.kind in (FLAT_TORUS, ISOTHERMAL):
        return _apply_H_2d(chart, u)
    nabs = [apply_nabla(chart, u, j) for j in range(chart.dim)]

    def h(x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        ginv = chart.metric_inv(x)
        theta_up = np.einsum("jk...,k...->j...", ginv, xi)
        return sum(theta_up[j] * nabs[j](x, xi) for j in range(chart.dim))

    return CosphereField(chart, h, kind="scalar")


# -- 2D fast formulas (isothermal): H, Hperp, V in the angle parametrization --

def _phi_and_grad(chart, x):
    if chart.kind == FLAT_TORUS:
        z = np.zeros(np.shape(x)[1:])
        return z, z, z
    phi = chart._phi_d(x, (0, 0))
    return phi, chart._phi_d(x, (1, 0)), chart._phi_d(x, (0, 1))


def _angle_of(chart, x, xi):
    """Angle theta with xi = g^{1/2}(x) (cos theta, sin theta)."""
    phi, _, _ = _phi_and_grad(chart, x)
    om = xi * np.exp(-phi)
    return np.arctan2(om[1], om[0])


def _fiber_spectral(chart, u, x, theta, n=None, order=1):
    """Spectral d/dtheta of u along the fiber circle, vectorized."""
    n = n or max(16, 4 * chart.resolution)
    grid = np.arange(n) * TWO_PI / n
    th = np.asarray(theta, dtype=float)
    xb = np.asarray(x, dtype=float)[..., None]
    ring = grid.reshape((1,) * th.ndim + (n,)) + np.zeros(th.shape + (n,))
    xi_ring = fiber_circle(chart, xb, ring)
    vals = u(xb, xi_ring)
    spec = np.fft.fft(vals, axis=-1) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    shaped = k.reshape((1,) * th.ndim + (n,))
    coeff = spec * (1j * shaped) ** order
    phase = np.exp(1j * shaped * th[..., None])
    return np.einsum("...n,...n->...", coeff, phase)


def apply_V(chart, u):
    """Fiber rotation derivative V = d/dtheta (2D)."""
    if chart.dim != 2:
        raise KindMismatchError("apply_V is the 2D fiber derivative")
    fun = _as_callable(u)

    def v(x, xi):
        theta = _angle_of(chart, np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        return _fiber_spectral(chart, fun, x, theta)

    return CosphereField(chart, v, kind="scalar")


def _apply_H_2d(chart, u, perp=False):
    fun = _as_callable(u)

    def h(x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        theta = _angle_of(chart, x, xi)
        phi, px, py = _phi_and_grad(chart, x)
        ct, st = np.cos(theta), np.sin(theta)
        dx1 = _x_derivative(chart, fun, x, xi, 0)
        dx2 = _x_derivative(chart, fun, x, xi, 1)
        dth = _fiber_spectral(chart, fun, x, theta)
        if not perp:
            coeff = -st * px + ct * py          # a_phi
            return np.exp(-phi) * (ct * dx1 + st * dx2 + coeff * dth)
        coeff = ct * px + st * py               # b_phi
        return np.exp(-phi) * (st * dx1 - ct * dx2 + coeff * dth)

    return CosphereField(chart, h, kind="scalar")


def apply_Hperp(chart, u):
    """H_perp = [H, V] in the 2D angle parametrization."""
    if chart.dim != 2 or chart.kind not in (FLAT_TORUS, ISOTHERMAL):
        raise KindMismatchError("apply_Hperp needs a 2D isothermal or flat chart")
    return _apply_H_2d(chart, u, perp=True)


def _x_derivative(chart, fun, x, xi, axis):
    """d/dx_axis at constant fiber ANGLE (2D): the covector co-rotates."""
    theta = _angle_of(chart, x, xi)

    def at(x2):
        return fun(x2, fiber_circle(chart, x2, theta))

    return _x_line_derivative(chart, at, x, axis, np.shape(theta))


# ---------------------------------------------------------------------------
# identity residual suite
# ---------------------------------------------------------------------------

def default_nodes(chart, nx=4, nfiber=8, margin=0.15, seed=0):
    """A modest sample-node set (x batch, xi batch) on S*M."""
    rng = np.random.default_rng(seed)
    if chart.periodic:
        axes = [rng.uniform(0, p, nx) for p in chart.periods]
    else:
        axes = [rng.uniform(a + margin * (b - a), b - margin * (b - a), nx)
                for a, b in chart.domain]
    x = np.stack(axes)
    if chart.dim == 2:
        theta = rng.uniform(0, TWO_PI, (nx,))
        xi = fiber_circle(chart, x, theta)
        xs = [x]
        xis = [xi]
        for _ in range(nfiber - 1):
            theta = rng.uniform(0, TWO_PI, (nx,))
            xs.append(x)
            xis.append(fiber_circle(chart, x, theta))
        return np.concatenate(xs, axis=1), np.concatenate(xis, axis=1)
    om = rng.standard_normal((chart.dim, nx * nfiber))
    om /= np.linalg.norm(om, axis=0)
    xrep = np.repeat(x, nfiber, axis=1)
    root = chart.sqrt_metric(xrep)
    xi = np.einsum("jk...,k...->j...", root, om)
    return xrep, xi


def bracket_residuals(chart, test_fields, nodes=None):
    """Sup-norm residuals of the commutator identities over sample nodes.

    2D isothermal/flat charts: [V, Hperp] = H and [Hperp, H] = K V, plus the
    Euler relation.  Any dimension: the horizontal structure equation, the
    vertical commutators, and the Euler relation.
    """
    if nodes is None:
        nodes = default_nodes(chart)
    x, xi = nodes
    report = {}
    scale = max(max(np.max(np.abs(np.asarray(u(x, xi)))) for u in test_fields), 1.0)

    def sup(vals):
        return float(np.max(np.abs(vals)) / scale)

    for u in test_fields:
        if chart.dim == 2 and chart.kind in (FLAT_TORUS, ISOTHERMAL):
            Hu = apply_H(chart, u)
            Vu = apply_V(chart, u)
            Hperp_u = apply_Hperp(chart, u)
            lhs = apply_V(chart, Hperp_u)(x, xi) - apply_Hperp(chart, Vu)(x, xi)
            r = sup(lhs - Hu(x, xi))
            report["[V,Hperp]-H"] = max(report.get("[V,Hperp]-H", 0.0), r)
            K = chart.gauss_curvature(x)
            lhs2 = apply_Hperp(chart, Hu)(x, xi) - apply_H(chart, Hperp_u)(x, xi)
            r2 = sup(lhs2 - K * Vu(x, xi))
            report["[Hperp,H]-KV"] = max(report.get("[Hperp,H]-KV", 0.0), r2)
        else:
            riem = chart.riemann(x)
            ginv = chart.metric_inv(x)
            vs = [apply_Vj(chart, u, p)(x, xi) for p in range(chart.dim)]
            worst = 0.0
            for j in range(chart.dim):
                nab_j = apply_nabla(chart, u, j)
                for k in range(j + 1, chart.dim):
                    nab_k = apply_nabla(chart, u, k)
                    lhs = (apply_nabla(chart, nab_k, j)(x, xi)
                           - apply_nabla(chart, nab_j, k)(x, xi))
                    rhs = np.zeros_like(lhs)
                    for ell in range(chart.dim):
                        for m in range(chart.dim):
                            for p in range(chart.dim):
                                rhs = rhs + (riem[ell, m, j, k] * xi[ell]
                                             * ginv[m, p] * vs[p])
                    worst = max(worst, sup(lhs - rhs))
            report["structure_eq"] = max(report.get("structure_eq", 0.0), worst)
            worst_vv = 0.0
            worst_vt = 0.0
            g = chart.metric(x)
            for j in range(chart.dim):
                vj = apply_Vj(chart, u, j)
                for k in range(chart.dim):
                    vk = apply_Vj(chart, u, k)
                    lhs = (apply_Vj(chart, vk, j)(x, xi)
                           - apply_Vj(chart, vj, k)(x, xi))
                    rhs = xi[j] * vk(x, xi) - xi[k] * vj(x, xi)
                    worst_vv = max(worst_vv, sup(lhs - rhs))
                    # [V_j, theta_k] as multiplication-operator commutator
                    mult = CosphereField(chart, lambda xx, xxi, _u=u, _k=k:
                                         xxi[_k] * _u(xx, xxi))
                    lhs2 = (apply_Vj(chart, mult, j)(x, xi)
                            - xi[k] * vj(x, xi))
                    rhs2 = (g[j, k] - xi[j] * xi[k]) * u(x, xi)
                    worst_vt = max(worst_vt, sup(lhs2 - rhs2))
            report["[Vj,Vk]"] = max(report.get("[Vj,Vk]", 0.0), worst_vv)
            report["[Vj,theta_k]"] = max(report.get("[Vj,theta_k]", 0.0), worst_vt)
        # Euler relation (exact by the radial projection)
        ginv = chart.metric_inv(x)
        theta_up = np.einsum("jk...,k...->j...", ginv, xi)
        euler = sum(theta_up[j] * apply_Vj(chart, u, j)(x, xi)
                    for j in range(chart.dim))
        report["euler"] = max(report.get("euler", 0.0), sup(euler))
    return report


def hamiltonian_split_residual(chart, u, degree, nodes=None, step=2e-3):
    """Residual of the cosphere restriction of the half-Hamiltonian field (2D).

    The Hamiltonian field of p = |xi|_g^2 preserves p, so its radial
    component vanishes on metric-homogeneous extensions and (1/2) H_p
    restricted to S*M acts as the generator H, for every extension degree:
    (1/2) H_p (r^d u)|_{S*M} = H u.  The ambient derivatives on the left are
    taken with small independent steps; the right-hand side is the chart H.
    """
    if chart.dim != 2 or chart.kind not in (FLAT_TORUS, ISOTHERMAL):
        raise KindMismatchError("2D isothermal charts only")
    if nodes is None:
        nodes = default_nodes(chart)
    x, xi = nodes
    fun = u.fun if isinstance(u, CosphereField) else u

    def extension(xa, xia):
        ginv = chart.metric_inv(xa)
        r = np.sqrt(np.einsum("j...,jk...,k...->...", xia, ginv, xia))
        return r ** degree * fun(xa, xia / r)

    hx = np.array([step, step])
    hxi = step
    ginv = chart.metric_inv(x)
    dg = chart.dmetric(x)
    dginv = -np.einsum("jp...,lpq...,qk...->ljk...", ginv, dg, ginv)
    lhs = np.zeros(x.shape[1:], dtype=complex)
    for k in range(2):
        dpdxi_k = np.einsum("m...,m...->...", ginv[k], xi)        # (1/2) dp/dxi_k
        dpdx_k = 0.5 * np.einsum("jm...,j...,m...->...", dginv[k], xi, xi)
        e = np.zeros_like(x)
        e[k] = hx[k]
        dFx = (-extension(x + 2 * e, xi) + 8 * extension(x + e, xi)
               - 8 * extension(x - e, xi) + extension(x - 2 * e, xi)) / (12 * hx[k])
        exi = np.zeros_like(xi)
        exi[k] = hxi
        dFxi = (-extension(x, xi + 2 * exi) + 8 * extension(x, xi + exi)
                - 8 * extension(x, xi - exi) + extension(x, xi - 2 * exi)) / (12 * hxi)
        lhs = lhs + dpdxi_k * dFx - dpdx_k * dFxi
    rhs = apply_H(chart, u)(x, xi)
    return float(np.max(np.abs(lhs - rhs)))


def vertical_adjoint_residual(chart, phi_field, psi_field, j, nx=None, fiber_n=None):
    """| (V_j phi, psi) + (phi, V_j psi) - (n-1)(theta_j phi, psi) | on S*M."""
    xs, xi, w = liouville_nodes(chart, nx, fiber_n)
    xrep = np.repeat(xs[:, :, None], xi.shape[2], axis=2)
    phi_v = phi_field(xrep, xi)
    psi_v = psi_field(xrep, xi)
    vphi = apply_Vj(chart, phi_field, j)(xrep, xi)
    vpsi = apply_Vj(chart, psi_field, j)(xrep, xi)
    n = chart.dim
    total = np.sum(w * (vphi * np.conj(psi_v) + phi_v * np.conj(vpsi)
                        - (n - 1) * xi[j] * phi_v * np.conj(psi_v)))
    return float(abs(total))


def special_form_norms(chart, f, nx=None, fiber_n=None):
    """(||f||^2, ||f0||^2, ||f1||^2, ||Vf||^2) for an affine fiber function."""
    if not isinstance(f, AffineFiberFunction):
        raise InvalidArgumentError("special_form_norms needs an affine function")
    xs, xi, w = liouville_nodes(chart, nx, fiber_n)
    xrep = np.repeat(xs[:, :, None], xi.shape[2], axis=2)
    fv = f(xrep, xi)
    f0v = f.function_part()(xrep, xi)
    f1v = f.oneform_part()(xrep, xi)
    norm2 = float(np.sum(w * np.abs(fv) ** 2))
    norm0 = float(np.sum(w * np.abs(f0v) ** 2))
    norm1 = float(np.sum(w * np.abs(f1v) ** 2))
    if chart.dim == 2 and chart.kind in (FLAT_TORUS, ISOTHERMAL):
        theta = _angle_of(chart, xrep, xi)
        vf = _fiber_spectral(chart, f, xrep, theta)
        vnorm = float(np.sum(w * np.abs(vf) ** 2))
    else:
        vnorm = _vertical_norm2(chart, f, xrep, xi, w)
    return norm2, norm0, norm1, vnorm


def _vertical_norm2(chart, field, xrep, xi, w):
    # |Vf|^2 = sum g^{jm} V_j f conj(V_m f) = grad . g . conj(grad) with the
    # projected fiber gradient (V_j = g_{jk} grad_k)
    grad = _fiber_gradient(chart, _as_callable(field), xrep, xi)
    g = chart.metric(xrep)
    dens = np.einsum("k...,km...,m...->...", grad, g, np.conj(grad))
    return float(np.real(np.sum(w * dens)))


# ---------------------------------------------------------------------------
# transport along closed orbits
# ---------------------------------------------------------------------------

@dataclass
class TransportSolution:
    ts: np.ndarray
    u: np.ndarray
    line_integral: float
    periodicity_defect: float


def solve_transport_along_orbit(geodesic, f, n_steps=2048, u0=1.0 + 0.0j):
    """u(t) = u(0) exp(-i int_0^t f) along a closed orbit (midpoint Magnus).

    The periodicity defect is the distance of the closed-loop line integral
    of f to 2 pi Z; it vanishes exactly when the holonomy is trivial.
    """
    period = getattr(geodesic, "length", None) or getattr(geodesic, "period", None)
    if period is None:
        raise NotClosedOrbitError("transport needs a closed orbit with a period")
    ts = np.linspace(0.0, period, n_steps + 1)
    mids = 0.5 * (ts[1:] + ts[:-1])
    x_mid = geodesic.point(mids)
    xi_mid = geodesic.covector(mids)
    f_mid = np.real(np.asarray(f(x_mid, xi_mid), dtype=complex))
    dt = period / n_steps
    increments = f_mid * dt
    phases = -np.concatenate([[0.0], np.cumsum(increments)])
    u = u0 * np.exp(1j * phases)
    total = float(np.sum(increments))
    defect = abs(math.remainder(total, TWO_PI))
    return TransportSolution(ts=ts, u=u, line_integral=total,
                             periodicity_defect=defect)


# ---------------------------------------------------------------------------
# alpha/beta construction and the Pestov identity (2D grid pipeline)
# ---------------------------------------------------------------------------

class _Grid2D:
    """Tensor-product sampling of S*M over a periodic 2D chart."""

    def __init__(self, chart, nx=None, ntheta=None):
        if not chart.periodic or chart.dim != 2:
            raise InvalidArgumentError("grid pipeline needs a periodic 2D chart")
        self.chart = chart
        self.nx = nx or 2 * chart.resolution
        self.ntheta = ntheta or 2 * chart.resolution
        xg, self.wx = torus_grid(chart.periods, self.nx)
        self.x = xg                                   # (2, n1, n2)
        self.theta = np.arange(self.ntheta) * TWO_PI / self.ntheta
        self.wtheta = TWO_PI / self.ntheta
        phi, px, py = _phi_and_grad(chart, self.x)
        self.phi, self.phix, self.phiy = phi, px, py
        self.K = chart.gauss_curvature(self.x)
        self.kappa = np.array([TWO_PI / p for p in chart.periods])
        xb = self.x[..., None]
        ring = self.theta.reshape(1, 1, -1)
        self.xi = fiber_circle(chart, xb, ring + np.zeros(phi.shape + (self.ntheta,)))
        self.weight = (self.wx * np.exp(2 * self.phi))[..., None] * self.wtheta

    def sample(self, field):
        xb = self.x[..., None] + np.zeros((1,) + self.phi.shape + (self.ntheta,))
        return np.asarray(field(xb, self.xi), dtype=complex)

    def dx(self, vals, axis):
        n = vals.shape[axis]
        k = np.fft.fftfreq(n, d=1.0 / n) * self.kappa[axis]
        shape = [1, 1, 1]
        shape[axis] = n
        return np.fft.ifft(np.fft.fft(vals, axis=axis) * (1j * k).reshape(shape),
                           axis=axis)

    def dtheta(self, vals):
        n = vals.shape[2]
        k = np.fft.fftfreq(n, d=1.0 / n)
        return np.fft.ifft(np.fft.fft(vals, axis=2) * (1j * k).reshape(1, 1, n),
                           axis=2)

    def H(self, vals):
        ct = np.cos(self.theta).reshape(1, 1, -1)
        st = np.sin(self.theta).reshape(1, 1, -1)
        a_phi = -st * self.phix[..., None] + ct * self.phiy[..., None]
        return np.exp(-self.phi)[..., None] * (
            ct * self.dx(vals, 0) + st * self.dx(vals, 1)
            + a_phi * self.dtheta(vals))

    def Hperp(self, vals):
        ct = np.cos(self.theta).reshape(1, 1, -1)
        st = np.sin(self.theta).reshape(1, 1, -1)
        b_phi = ct * self.phix[..., None] + st * self.phiy[..., None]
        return np.exp(-self.phi)[..., None] * (
            st * self.dx(vals, 0) - ct * self.dx(vals, 1)
            + b_phi * self.dtheta(vals))

    def integral(self, vals):
        return complex(np.sum(self.weight * vals))

    def norm2(self, vals):
        return float(np.real(self.integral(np.abs(vals) ** 2)))


@dataclass
class AlphaBetaResult:
    alpha: np.ndarray
    beta: np.ndarray
    f: np.ndarray
    grid: _Grid2D
    max_imag_alpha: float
    max_imag_beta: float
    contraction_residual: float


def build_alpha_beta(chart, u, nx=None, ntheta=None, unimodular_tol=1e-10):
    """alpha = i conj(u) Hperp u, beta = i conj(u) V u, f = i conj(u) H u (2D).

    Requires |u| = 1; the outputs are real up to discretization noise, and
    the fiber contraction of the horizontal component reproduces -f.
    """
    grid = _Grid2D(chart, nx, ntheta)
    uv = grid.sample(u)
    mod = np.abs(np.abs(uv) - 1.0).max()
    if mod > unimodular_tol:
        raise InvalidArgumentError(f"field not circle-valued: | |u|-1 | = {mod:.2e}")
    alpha = 1j * np.conj(uv) * grid.Hperp(uv)
    beta = 1j * np.conj(uv) * grid.dtheta(uv)
    f = 1j * np.conj(uv) * grid.H(uv)
    # contraction check <theta, alpha_vec> = -f, with alpha_vec from the
    # horizontal-derivative route (independent of the grid H): subsample
    sub = (slice(None, None, 4), slice(None, None, 4), slice(None, None, 4))
    xs = grid.x[..., None] + np.zeros((1,) + grid.phi.shape + (grid.ntheta,))
    xsub, xisub = xs[(slice(None),) + sub], grid.xi[(slice(None),) + sub]
    ufield = CosphereField(chart, u if callable(u) else u.fun)
    _, _, f_nd, contraction = build_alpha_beta_nd(chart, ufield, (xsub, xisub))
    contraction = max(contraction,
                      float(np.max(np.abs(f_nd - f[sub]))))
    return AlphaBetaResult(alpha=np.real(alpha), beta=np.real(beta),
                           f=np.real(f), grid=grid,
                           max_imag_alpha=float(np.max(np.abs(alpha.imag))),
                           max_imag_beta=float(np.max(np.abs(beta.imag))),
                           contraction_residual=contraction)


def build_alpha_beta_nd(chart, u, nodes):
    """alpha_j = -i conj(u) nabla_j u, beta_j = i conj(u) V_j u at nodes.

    Returns (alpha (d, N), beta (d, N), f (N,), contraction residual).
    """
    x, xi = nodes
    uv = np.asarray(u(x, xi), dtype=complex)
    alpha = np.stack([-1j * np.conj(uv) * apply_nabla(chart, u, j)(x, xi)
                      for j in range(chart.dim)])
    beta = np.stack([1j * np.conj(uv) * apply_Vj(chart, u, j)(x, xi)
                     for j in range(chart.dim)])
    Hu = apply_H(chart, u)(x, xi)
    f = 1j * np.conj(uv) * Hu
    ginv = chart.metric_inv(x)
    contr = np.einsum("jk...,j...,k...->...", ginv, xi, alpha)
    resid = float(np.max(np.abs(contr + f)))
    return alpha, beta, f, resid


@dataclass
class PestovReport:
    identity_residual: float
    rearranged_residual: float
    beta_norm: float
    f0_norm: float
    transport_violation: float
    terms: dict


def pestov_residual(chart, u, f, nx=None, ntheta=None, transport_tol=1e-8,
                    check_transport=True):
    """Residual of the cosphere energy identity for a transport solution (2D).

    Checks -||H beta||^2 + (K beta | beta) + ||Vf||^2 = ||f||^2 and the
    rearranged form -||H beta||^2 + (K beta | beta) = (n-1) ||f0||^2 with
    f0 the fiber-average of f.  The pair (u, f) must satisfy the transport
    equation; the measured violation is reported (or raised).
    """
    grid = _Grid2D(chart, nx, ntheta)
    uv = grid.sample(u)
    fv = np.real(grid.sample(f))
    violation = float(np.max(np.abs(grid.H(uv) + 1j * fv * uv)))
    if check_transport and violation > transport_tol:
        raise TransportViolationError(
            f"Hu + i f u sup-norm {violation:.3e} exceeds {transport_tol:.1e}",
            violation=violation)
    beta = np.real(1j * np.conj(uv) * grid.dtheta(uv))
    hbeta2 = grid.norm2(grid.H(beta))
    kbeta = float(np.real(grid.integral(grid.K[..., None] * beta * beta)))
    vf2 = grid.norm2(grid.dtheta(fv))
    f2 = grid.norm2(fv)
    f0 = np.mean(fv, axis=2)
    f0_2 = float(np.sum(grid.wx * np.exp(2 * grid.phi) * f0 ** 2) * TWO_PI)
    scale = max(f2, 1.0)
    identity = abs(-hbeta2 + kbeta + vf2 - f2) / scale
    rearranged = abs(-hbeta2 + kbeta - f0_2) / scale
    return PestovReport(identity_residual=identity,
                        rearranged_residual=rearranged,
                        beta_norm=math.sqrt(grid.norm2(beta)),
                        f0_norm=math.sqrt(f0_2),
                        transport_violation=violation,
                        terms={"hbeta2": hbeta2, "kbeta": kbeta, "vf2": vf2,
                               "f2": f2, "f0_2": f0_2})


def _covariant_H_oneform(chart, comps, x, xi):
    """(H beta)_k = theta^j (nabla_j beta_k - Gamma^l_{jk} beta_l) at nodes."""
    d = chart.dim
    ginv = chart.metric_inv(x)
    theta_up = np.einsum("jk...,k...->j...", ginv, xi)
    gamma = chart.christoffel(x)
    beta_vals = np.stack([np.asarray(c(x, xi), dtype=complex) for c in comps])
    out = np.zeros_like(beta_vals)
    for k in range(d):
        acc = np.zeros(beta_vals.shape[1:], dtype=complex)
        for j in range(d):
            nab = apply_nabla(chart, comps[k], j)(x, xi)
            conn = np.einsum("l...,l...->...", gamma[:, j, k], beta_vals)
            acc = acc + theta_up[j] * (nab - conn)
        out[k] = acc
    return out


def pestov_residual_nd(chart, u, f, nx=None, fiber_n=None, transport_tol=1e-7,
                       check_transport=True):
    """Energy-identity residual on S*M in any dimension (quadrature nodes).

    Checks -||H beta||^2 + (R-hat beta | beta) = (n-1) ||f||^2 - ||Vf||^2
    for a circle-valued transport solution, plus the rearranged form with
    (n-1) ||f0||^2, and the pointwise covariant identity
    H beta = alpha + (V + theta) f.  Heavier than the 2D grid pipeline;
    meant for desk-scale node counts.
    """
    xs, xi_all, w = liouville_nodes(chart, nx, fiber_n)
    x = np.repeat(xs[:, :, None], xi_all.shape[2], axis=2)
    xi = xi_all
    n = chart.dim
    ufield = u if isinstance(u, CosphereField) else CosphereField(chart, u)
    uv = ufield(x, xi)
    fv = np.real(np.asarray(f(x, xi), dtype=complex))
    Hu = apply_H(chart, ufield)(x, xi)
    violation = float(np.max(np.abs(Hu + 1j * fv * uv)))
    if check_transport and violation > transport_tol:
        raise TransportViolationError(
            f"Hu + i f u sup-norm {violation:.3e} exceeds {transport_tol:.1e}",
            violation=violation)
    beta_comps = [apply_Vj(chart, ufield, j) for j in range(n)]
    beta_fields = [CosphereField(chart, lambda xx, xxi, _b=b:
                                 1j * np.conj(ufield(xx, xxi)) * _b(xx, xxi))
                   for b in beta_comps]
    beta = np.real(np.stack([bf(x, xi) for bf in beta_fields]))
    g = chart.metric(x)
    ginv = chart.metric_inv(x)
    hbeta = np.real(_covariant_H_oneform(chart, beta_fields, x, xi))
    hbeta2 = float(np.sum(w * np.einsum("k...,km...,m...->...",
                                        hbeta, ginv, hbeta)))
    # curvature form (R-hat beta)_j = R^l_{mkj} theta^k theta_l g^{mp} beta_p
    riem = chart.riemann(x)
    theta_up = np.einsum("jk...,k...->j...", ginv, xi)
    rhat = np.einsum("lmkj...,k...,l...,mp...,p...->j...",
                     riem, theta_up, xi, ginv, beta)
    rbeta = float(np.sum(w * np.einsum("j...,jm...,m...->...",
                                       rhat, ginv, beta)))
    f2 = float(np.sum(w * fv ** 2))
    vf2 = _vertical_norm2(chart, f, x, xi, w)
    lhs = -hbeta2 + rbeta
    identity = abs(lhs - ((n - 1) * f2 - vf2))
    f0 = None
    if isinstance(f, AffineFiberFunction):
        f0v = np.real(np.asarray(f.function_part()(x, xi), dtype=complex))
        f0_2 = float(np.sum(w * f0v ** 2))
    else:
        f0_2 = float("nan")
    rearranged = abs(lhs - (n - 1) * f0_2)
    # pointwise covariant identity: H beta = alpha + (V + theta) f
    alpha = np.real(np.stack([-1j * np.conj(uv) * apply_nabla(chart, ufield, j)(x, xi)
                              for j in range(n)]))
    vf = np.real(np.stack([apply_Vj(chart, f, j)(x, xi) for j in range(n)]))
    pointwise = float(np.max(np.abs(hbeta - alpha - vf - xi * fv)))
    beta_norm = math.sqrt(float(np.sum(w * np.einsum(
        "k...,km...,m...->...", beta, ginv, beta))))
    return PestovReport(identity_residual=identity,
                        rearranged_residual=rearranged,
                        beta_norm=beta_norm, f0_norm=math.sqrt(max(f0_2, 0.0)),
                        transport_violation=violation,
                        terms={"hbeta2": hbeta2, "rbeta": rbeta, "f2": f2,
                               "vf2": vf2, "pointwise_transport": pointwise})
