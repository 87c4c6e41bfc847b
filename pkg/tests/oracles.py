"""Independent oracles used to freeze expected values in the test suite.

Each oracle takes a route independent of the implementation it checks:
symbolic differentiation (sympy), brute-force finite differences, direct
eigen-decomposition, quadrature, or explicit series.
"""

import numpy as np
import sympy as sp


def sympy_gauss_curvature(phi_expr, x_sym, y_sym):
    """K = -exp(-2 phi) (phi_xx + phi_yy) by symbolic differentiation."""
    lap = sp.diff(phi_expr, x_sym, 2) + sp.diff(phi_expr, y_sym, 2)
    K = -sp.exp(-2 * phi_expr) * lap
    return sp.lambdify((x_sym, y_sym), sp.simplify(K), "numpy")


def fd_laplacian(fun, x, y, h=1e-4):
    """4th-order finite-difference Laplacian of a callable fun(x, y)."""
    def d2(axis):
        if axis == 0:
            vals = [fun(x + s * h, y) for s in (-2, -1, 0, 1, 2)]
        else:
            vals = [fun(x, y + s * h) for s in (-2, -1, 0, 1, 2)]
        return (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * h * h)
    return d2(0) + d2(1)


def eig_length(mat):
    """Geodesic length from eigenvalues: ell = log(lambda_max^2)."""
    lam = np.linalg.eigvals(np.asarray(mat, dtype=float))
    lam_max = max(abs(lam))
    return 2.0 * np.log(lam_max)


def jacobi_poincare_det(length, n_steps=20000):
    """|det(I - P)| for a closed orbit on a K = -1 surface.

    Integrates the transverse Jacobi system y'' = y over one period with RK4
    and evaluates |det(I - monodromy)|.
    """
    def rhs(state):
        y, p = state
        return np.array([p, y])

    h = length / n_steps
    M = np.eye(2)
    cols = []
    for col in range(2):
        state = M[:, col].astype(float)
        for _ in range(n_steps):
            k1 = rhs(state)
            k2 = rhs(state + 0.5 * h * k1)
            k3 = rhs(state + 0.5 * h * k2)
            k4 = rhs(state + h * k3)
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        cols.append(state)
    mono = np.stack(cols, axis=1)
    return abs(np.linalg.det(np.eye(2) - mono))


def brute_force_trace_set(generators, max_len):
    """All |traces| > 2 over reduced words up to max_len, with word lists.

    No conjugacy reduction at all: a raw oracle for systole and counting
    sanity checks.
    """
    letters = list("abcd") + list("ABCD")
    mats = {}
    for name, g in zip("abcd", generators):
        mats[name] = np.asarray(g, dtype=float)
        mats[name.upper()] = np.linalg.inv(mats[name])
    found = {}

    def rec(word, mat):
        if word:
            t = abs(np.trace(mat))
            if t > 2.0 + 1e-9:
                found.setdefault(round(t, 9), []).append(word)
        if len(word) == max_len:
            return
        for ch in letters:
            if word and word[-1] == ch.swapcase():
                continue
            rec(word + ch, mat @ mats[ch])

    rec("", np.eye(2))
    return found


def brute_force_min_trace(generators, max_len):
    """Exact minimal |trace| > 2 over reduced words up to max_len."""
    letters = list("abcd") + list("ABCD")
    mats = {}
    for name, g in zip("abcd", generators):
        mats[name] = np.asarray(g, dtype=float)
        mats[name.upper()] = np.linalg.inv(mats[name])
    best = [np.inf]

    def rec(word, mat):
        if word:
            t = abs(np.trace(mat))
            if 2.0 + 1e-9 < t < best[0]:
                best[0] = t
        if len(word) == max_len:
            return
        for ch in letters:
            if word and word[-1] == ch.swapcase():
                continue
            rec(word + ch, mat @ mats[ch])

    rec("", np.eye(2))
    return best[0]


def halfspace_dn_coefficients(q, n_terms=3):
    """Series sqrt(xi^2 + q) = |xi| + q/(2|xi|) - q^2/(8 |xi|^3) + ...

    Returns the coefficients of |xi|^{1-2j}, j = 0..n_terms-1.
    """
    out = [1.0]
    if n_terms > 1:
        out.append(q / 2.0)
    if n_terms > 2:
        out.append(-q * q / 8.0)
    return out[:n_terms]


def circle_landau_levels(c, kmax):
    """Sorted magnetic circle spectrum {(k + c)^2 : |k| <= kmax}."""
    ks = np.arange(-kmax, kmax + 1)
    return np.sort((ks + c) ** 2)


def sphere_quadrature(n_polar=6, n_azimuth=12):
    """Product Gauss-Legendre x trapezoid nodes on S^2, exact to degree 11.

    Returns (nodes (3, N), weights (N,)) with sum(weights) = 4 pi.
    """
    t, wt = np.polynomial.legendre.leggauss(n_polar)
    phi = np.arange(n_azimuth) * 2 * np.pi / n_azimuth
    wphi = 2 * np.pi / n_azimuth
    ct = t
    st = np.sqrt(1 - t ** 2)
    nodes = []
    weights = []
    for i in range(n_polar):
        for j in range(n_azimuth):
            nodes.append([st[i] * np.cos(phi[j]), st[i] * np.sin(phi[j]), ct[i]])
            weights.append(wt[i] * wphi)
    return np.array(nodes).T, np.array(weights)


def circle_quadrature(n=64):
    theta = np.arange(n) * 2 * np.pi / n
    nodes = np.stack([np.cos(theta), np.sin(theta)])
    weights = np.full(n, 2 * np.pi / n)
    return nodes, weights
