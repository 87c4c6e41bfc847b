"""DN symbol factorization, disk oracle, gauge shift, and jet recovery."""

import numpy as np
import pytest

from magspec.errors import (InvalidArgumentError, ResonanceError,
                            StructureViolationError)
from magspec.steklov import (BoundaryGauge, BoundaryGrid, BoundaryJets,
                             LOWER_ORDER_SIGN, asymptotic_match,
                             boundary_hodge_split, disk_dn_oracle, disk_jets,
                             flat_jets, gauge_shift_subprincipal,
                             jet_recovery, kill_normal_component,
                             subprincipal_symbol, symbol_difference_structure,
                             symbol_factorize, _grid_dx)

from oracles import halfspace_dn_coefficients

TWOPI = 2 * np.pi


def torus_grid2(n=24, n_fiber=24):
    return BoundaryGrid((TWOPI, TWOPI), n=n, n_fiber=n_fiber)


def trig(grid, mode, amp, phase=0.0):
    """Real trigonometric grid field amp*cos(<mode, x> + phase)."""
    arg = sum(mode[j] * grid.x[j] for j in range(grid.m)) + phase
    return amp * np.cos(arg)


def curved_jets(grid, J, seed=0, with_potentials=True):
    rng = np.random.default_rng(seed)
    m = grid.m
    g = np.zeros((J + 1, m, m) + grid.shape)
    for a in range(m):
        g[0, a, a] = 1.0
    g[0, 0, 0] += trig(grid, (1, 0)[:m], 0.15)
    if m == 2:
        g[0, 1, 1] += trig(grid, (0, 1), 0.1, 0.3)
        g[0, 0, 1] = g[0, 1, 0] = trig(grid, (1, 1), 0.05)
    for ell in range(1, J + 1):
        scale = 0.1 / ell
        for a in range(m):
            g[ell, a, a] = trig(grid, (1,) * m, scale, 0.1 * ell + a)
        if m == 2:
            g[ell, 0, 1] = g[ell, 1, 0] = trig(grid, (1, 0), 0.5 * scale, ell)
    a_t = np.zeros((J + 1, m) + grid.shape, dtype=complex)
    q = np.zeros((J + 1,) + grid.shape, dtype=complex)
    if with_potentials:
        for ell in range(J + 1):
            for comp in range(m):
                a_t[ell, comp] = trig(grid, (0, 1)[:m] if m == 2 else (1,),
                                      0.2 / (1 + ell), 0.7 * ell + comp)
            q[ell] = trig(grid, (1,) * m, 0.3 / (1 + ell), 0.2 * ell)
    a_n = np.zeros((J + 1,) + grid.shape, dtype=complex)
    return BoundaryJets(grid, J, g, a_t, a_n, q)


# -- factorization basics ------------------------------------------------------

def test_flat_halfspace_trivial():
    for periods in [(TWOPI,), (TWOPI, TWOPI)]:
        grid = BoundaryGrid(periods, n=8)
        jets = flat_jets(grid, J=4)
        sym = symbol_factorize(jets, 4)
        assert np.allclose(sym.terms[1], 1.0)   # |xi| at unit directions
        for deg in (0, -1, -2, -3):
            assert np.max(np.abs(sym.terms[deg])) < 1e-12


def test_constant_q_halfspace_series():
    # oracle first: sqrt(xi^2 + q) = |xi| + q/(2|xi|) - q^2/(8|xi|^3) + ...
    q = 0.8
    coeffs = halfspace_dn_coefficients(q, 3)
    assert np.allclose(coeffs, [1.0, 0.4, -0.08])
    grid = BoundaryGrid((TWOPI,), n=8)
    jets = flat_jets(grid, J=4, q_profile=[q])
    sym = symbol_factorize(jets, 4)
    # the expansion carries only odd degrees |xi|^{1-2j}
    assert np.max(np.abs(sym.terms[1] - coeffs[0])) < 1e-12
    assert np.max(np.abs(sym.terms[0])) < 1e-13
    assert np.max(np.abs(sym.terms[-1] - coeffs[1])) < 1e-12
    assert np.max(np.abs(sym.terms[-2])) < 1e-13
    assert np.max(np.abs(sym.terms[-3] - coeffs[2])) < 1e-12


def test_disk_symbol_vanishes_without_potentials():
    jets = disk_jets(J=4, a_theta=[0.0], q_radial=[0.0])
    sym = symbol_factorize(jets, 4)
    assert np.max(np.abs(sym.cosphere_term(1) - 1.0)) < 1e-12
    for deg in (0, -1, -2, -3):
        assert np.max(np.abs(sym.terms[deg])) < 1e-11


def test_subprincipal_real_for_selfadjoint_data():
    grid = torus_grid2()
    jets = curved_jets(grid, J=3, seed=1)
    sym = symbol_factorize(jets, 3)
    sub = subprincipal_symbol(sym)
    assert np.max(np.abs(sub.imag)) < 1e-7


def test_degree0_is_tangential_potential():
    grid = torus_grid2()
    jets = curved_jets(grid, J=3, seed=1)
    sym = symbol_factorize(jets, 3)
    sub = subprincipal_symbol(sym)
    # fiber-odd part of sub equals pi_1* a|_boundary; fiber-even part ~ 0
    cos_vals = sym.cosphere_term(0)
    g0 = np.moveaxis(jets.g[0], (0, 1), (-2, -1))
    w, v = np.linalg.eigh(g0)
    root = np.einsum("...jk,...k,...lk->...jl", v, np.sqrt(w), v)
    xi = np.einsum("...ab,bF->...aF", root, grid.omega)
    ginv0 = np.linalg.inv(g0)
    a0 = np.real(np.stack([jets.a_t[0, 0], jets.a_t[0, 1]], axis=-1))
    pi1a = np.einsum("...a,...ab,...bF->...F", a0, ginv0, xi)
    odd = 0.5 * (cos_vals - np.roll(cos_vals, grid.n_fiber // 2, axis=-1))
    assert np.max(np.abs(np.real(odd) - pi1a)) < 1e-8
    even = 0.5 * (cos_vals + np.roll(cos_vals, grid.n_fiber // 2, axis=-1))
    # even part carries metric curvature terms but is independent of q:
    jets2 = jets.copy()
    jets2.q = jets2.q + 0.5
    sym2 = symbol_factorize(jets2, 3)
    assert np.max(np.abs(sym2.cosphere_term(0) - cos_vals)) < 1e-10


def test_degree0_difference_is_potential_difference():
    grid = torus_grid2()
    jets_a = curved_jets(grid, J=3, seed=2)
    jets_b = jets_a.copy()
    shift = np.stack([trig(grid, (1, 0), 0.25, 0.4),
                      trig(grid, (0, 1), 0.2, 1.1)])
    jets_b.a_t[0] += shift
    jets_b.q = jets_b.q + trig(grid, (1, 1), 0.3)[None]
    sym_a = symbol_factorize(jets_a, 3)
    sym_b = symbol_factorize(jets_b, 3)
    split = symbol_difference_structure(sym_a, sym_b, 0)
    assert np.max(np.abs(split.da - shift)) < 1e-9
    assert np.max(np.abs(split.dq)) < 1e-9
    assert split.residual < 5e-8


def test_gauge_shift_subprincipal_identity():
    grid = torus_grid2(n=32, n_fiber=32)
    jets = curved_jets(grid, J=3, seed=3)
    sym = symbol_factorize(jets, 3)
    # identity gauge: nothing moves
    ident = BoundaryGauge(grid, (0, 0), np.zeros(grid.shape))
    shifted0 = gauge_shift_subprincipal(sym, ident)
    for deg in sym.degrees:
        assert np.max(np.abs(shifted0.terms[deg] - sym.terms[deg])) < 1e-12

    # single-valued gauge: degree-0 shift by pi_1* d psi; dual route through
    # the factorization of the shifted potential must agree at every degree
    psi = trig(grid, (1, 0), 0.3, 0.2)
    gauge = BoundaryGauge(grid, (0, 0), psi)
    shifted = gauge_shift_subprincipal(sym, gauge)
    jets_b = jets.copy()
    jets_b.a_t[0] += np.stack([_grid_dx(grid, psi[None].astype(complex), a)[0]
                               for a in range(2)]).real
    sym_b = symbol_factorize(jets_b, 3)
    assert np.max(np.abs(shifted.terms[1] - sym.terms[1])) < 1e-10
    assert np.max(np.abs(shifted.terms[0] - sym_b.terms[0])) < 1e-9
    assert np.max(np.abs(shifted.terms[-1] - sym_b.terms[-1])) < 1e-8
    assert np.max(np.abs(shifted.terms[-2] - sym_b.terms[-2])) < 1e-7

    # winding gauge: the degree-0 shift is closed with 2 pi Z fluxes
    wind = BoundaryGauge(grid, (1, -2), np.zeros(grid.shape))
    shifted_w = gauge_shift_subprincipal(sym, wind)
    dsub = shifted_w.terms[0] - sym.terms[0]
    split = symbol_difference_structure(
        sym, type(sym)(engine=sym.engine, jets=sym.jets, J=sym.J,
                       terms={**sym.terms, 0: shifted_w.terms[0]}), 0)
    flux0 = np.mean(np.real(split.da[0])) * TWOPI
    flux1 = np.mean(np.real(split.da[1])) * TWOPI
    assert abs(flux0 - TWOPI * 1) < 1e-8
    assert abs(flux1 - TWOPI * (-2)) < 1e-8


def test_normal_gauge_kill_is_dn_invariant():
    grid = torus_grid2()
    jets = curved_jets(grid, J=3, seed=4)
    jets_dirty = jets.copy()
    # inject nonzero a_n jets (orders >= 0) plus matching tangential garbage
    jets_dirty.a_n[0] = trig(grid, (1, 0), 0.2)
    jets_dirty.a_n[1] = trig(grid, (0, 1), 0.15)
    clean, eta = kill_normal_component(jets_dirty)
    assert clean.normal_jets_vanish()
    # eta has no boundary value, so exp(i eta)|_M = 1: same DN symbol as the
    # naive factorization that simply ignores a_n... which is exactly the
    # normalized-data factorization of `clean`; compare against re-deriving
    # with an independently chosen eta' = eta + flat higher-order jets
    clean2 = clean.copy()
    extra = np.zeros_like(eta)
    extra[3] = trig(grid, (1, 1), 0.1)     # change jets above the used order
    for alpha in range(grid.m):
        clean2.a_t[:, alpha] += _grid_dx(grid, extra, alpha)
    clean2.a_n[:] = 0.0
    clean2.a_n[2] = 3 * extra[3]
    clean3, _ = kill_normal_component(clean2)
    sym1 = symbol_factorize(clean, 2)
    sym3 = symbol_factorize(clean3, 2)
    for deg in (1, 0, -1):
        assert np.max(np.abs(sym1.terms[deg] - sym3.terms[deg])) < 1e-9


# -- lower-order difference structure --------------------------------------------

def test_difference_structure_roundtrip():
    import math as _m
    grid = torus_grid2()
    for j in (1, 2, 3):
        jets_a = curved_jets(grid, J=4, seed=10 + j)
        jets_b = jets_a.copy()
        da = np.stack([trig(grid, (1, 0), 0.3, 0.1 * j),
                       trig(grid, (0, 1), 0.25, 0.5)])
        dq = trig(grid, (1, 1), 0.4, 0.3)
        jets_b.a_t[j] += da / _m.factorial(j)
        jets_b.q[j - 1] += dq / _m.factorial(j - 1)
        sym_a = symbol_factorize(jets_a, 4)
        sym_b = symbol_factorize(jets_b, 4)
        split = symbol_difference_structure(sym_a, sym_b, j, structure_tol=1e-7)
        assert np.max(np.abs(split.da - da)) < 1e-7
        assert np.max(np.abs(split.dq - dq)) < 1e-7
        assert split.residual < 1e-7


def test_difference_structure_negative_control():
    # lower-order jets disagree: T_j != 0 contaminates the extraction
    grid = torus_grid2()
    jets_a = curved_jets(grid, J=3, seed=20)
    jets_b = jets_a.copy()
    jets_b.q[0] += trig(grid, (1, 0), 0.5)      # order-0 electric difference
    sym_a = symbol_factorize(jets_a, 3)
    sym_b = symbol_factorize(jets_b, 3)
    split2 = symbol_difference_structure(sym_a, sym_b, 2)
    # nothing was injected at order j=2, yet the extraction is polluted
    pollution = max(np.max(np.abs(split2.dq)), np.max(np.abs(split2.da)),
                    split2.residual)
    assert pollution > 1e-4


def test_structure_tol_raises():
    # a metric mismatch is outside the two-mode difference structure and
    # must trip the parity-decomposition guard
    grid = torus_grid2()
    jets_a = curved_jets(grid, J=3, seed=21)
    jets_b = jets_a.copy()
    jets_b.g[0, 0, 0] = jets_b.g[0, 0, 0] + trig(grid, (1, 0), 0.1)
    sym_a = symbol_factorize(jets_a, 3)
    sym_b = symbol_factorize(jets_b, 3)
    with pytest.raises(StructureViolationError):
        symbol_difference_structure(sym_a, sym_b, 1, structure_tol=1e-9)


# -- disk oracle and asymptotics ---------------------------------------------------

def test_disk_oracle_harmonic():
    for k in (1, 2, 5, 16, 64):
        _, _, sigma = disk_dn_oracle([0.0], [0.0], k, n_steps=600)
        assert abs(sigma - abs(k)) < 1e-10


def test_disk_oracle_bessel_vs_q():
    # independent check against scipy-free Bessel recursion: sigma_k for
    # -Laplace u + q u = 0 is sqrt(q) I_k'(sqrt q)/I_k(sqrt q)
    from math import factorial

    def bessel_ratio(k, z, terms=60):
        # I_k(z) series; returns z * I_k'(z) / I_k(z)
        num = 0.0
        den = 0.0
        for m in range(terms):
            c = (z / 2) ** (2 * m + k) / (factorial(m) * factorial(m + k))
            den += c
            num += (2 * m + k) * c
        return num / den

    q = 1.3
    for k in (3, 8):
        _, _, sigma = disk_dn_oracle([0.0], [q], k, n_steps=1500)
        want = bessel_ratio(k, np.sqrt(q))
        assert abs(sigma - want) < 1e-8


def test_disk_oracle_resonance_and_regularity():
    with pytest.raises(InvalidArgumentError):
        disk_dn_oracle([0.5], [0.0], 3)      # a_theta(0) != 0
    with pytest.raises(ResonanceError):
        # q = -lambda with lambda a Dirichlet eigenvalue of mode 0:
        # first zero of J_0 at ~2.405 -> lambda = 2.405^2
        disk_dn_oracle([0.0], [-5.783185962946785], 0, n_steps=3000)


def test_disk_oracle_gauge_asymmetry():
    # a_theta = c r^2: sigma_k - sigma_{-k} approaches 2 c sign(k)
    c = 0.35
    for k in (24, 48):
        _, _, sp = disk_dn_oracle([0.0, 0.0, c], [0.0], k, n_steps=1200)
        _, _, sm = disk_dn_oracle([0.0, 0.0, c], [0.0], -k, n_steps=1200)
        assert abs((sp - sm) - 2 * c) < 0.05 * abs(2 * c)


def test_asymptotic_match_constant_q():
    for q in (0.5, 1.0):
        jets = disk_jets(J=2, a_theta=[0.0], q_radial=[q])
        sym = symbol_factorize(jets, 2)
        ks = list(range(16, 65, 4))
        oracle = [(k, disk_dn_oracle([0.0], [q], k, n_steps=900)[2]) for k in ks]
        fit = asymptotic_match(oracle, sym)
        assert fit.relative_error < 0.02
        assert abs(fit.predicted_inverse_coeff - q / 2) < 1e-9
        assert fit.residual_order > 1.9


def test_asymptotic_match_sign_calibration():
    # flipping the sign of p_{-1} destroys the fit: residual order drops to 1
    q = 1.0
    jets = disk_jets(J=2, a_theta=[0.0], q_radial=[q])
    sym = symbol_factorize(jets, 2)
    sym.terms[-1] = -sym.terms[-1]
    ks = list(range(16, 65, 4))
    oracle = [(k, disk_dn_oracle([0.0], [q], k, n_steps=900)[2]) for k in ks]
    fit = asymptotic_match(oracle, sym)
    assert fit.prediction_order < 1.5
    assert fit.relative_error > 1.5       # fitted coefficient disowns the flip
    assert LOWER_ORDER_SIGN == 1.0


def test_asymptotic_match_needs_modes():
    jets = disk_jets(J=2, a_theta=[0.0], q_radial=[0.0])
    sym = symbol_factorize(jets, 2)
    with pytest.raises(InvalidArgumentError):
        asymptotic_match([(5, 5.0)], sym)


# -- boundary Hodge split and jet recovery ---------------------------------------

def test_boundary_hodge_split():
    grid = torus_grid2()
    beta_in = trig(grid, (1, 1), 0.4, 0.2)
    w = np.stack([_grid_dx(grid, beta_in[None].astype(complex), a)[0].real
                  for a in range(2)])
    w[0] += 3.0
    beta, harmonic, coexact, closed = boundary_hodge_split(grid, w)
    assert np.allclose(harmonic, [3.0, 0.0], atol=1e-12)
    assert coexact < 1e-12 and closed < 1e-12
    assert np.max(np.abs((beta - beta.mean()) - (beta_in - beta_in.mean()))) < 1e-10


def test_jet_recovery_gauge_pair():
    grid = torus_grid2()
    import math as _m
    jets_a = curved_jets(grid, J=5, seed=30)
    jets_b = jets_a.copy()
    winding = (1, -1)
    betas = {0: trig(grid, (1, 0), 0.3, 0.1)}
    jets_b.a_t[0, 0] += TWOPI * winding[0] / TWOPI   # 2 pi w / L with L = 2 pi
    jets_b.a_t[0, 1] += TWOPI * winding[1] / TWOPI
    for j in range(0, 4):
        if j > 0:
            betas[j] = trig(grid, (1, 1) if j % 2 else (0, 1), 0.25 / j, 0.3 * j)
        db = np.stack([_grid_dx(grid, betas[j][None].astype(complex), a)[0].real
                       for a in range(2)])
        jets_b.a_t[j] += db / _m.factorial(j)
    sym_a = symbol_factorize(jets_a, 5)
    sym_b = symbol_factorize(jets_b, 5)
    state = jet_recovery(sym_a, sym_b, order=4)
    assert state.winding == winding
    assert state.obstructions == []
    for j in range(0, 4):
        got = state.betas[j] - state.betas[j].mean()
        want = betas[j] - betas[j].mean()
        assert np.max(np.abs(got - want / (_m.factorial(j) / _m.factorial(j)))) < 1e-6
    for j in range(0, 4):
        assert state.dq_jets.get(j, np.zeros(1)).max() < 1e-7 if j in state.dq_jets \
            else True
        assert state.d_da_sup[j] < 1e-7
        assert state.degree_drop[j] < 1e-8
    assert state.final_gap < 1e-7


def test_jet_recovery_genuine_q_difference():
    grid = torus_grid2()
    import math as _m
    jets_a = curved_jets(grid, J=5, seed=31)
    jets_b = jets_a.copy()
    dq2 = trig(grid, (1, 0), 0.4, 0.9)       # genuine d_n^2 q difference
    jets_b.q[2] += dq2 / _m.factorial(2)
    sym_a = symbol_factorize(jets_a, 5)
    sym_b = symbol_factorize(jets_b, 5)
    state = jet_recovery(sym_a, sym_b, order=4)
    assert np.max(np.abs(state.dq_jets[2] - dq2)) < 1e-6
    for j in (0, 1):
        assert np.max(np.abs(state.dq_jets.get(j, np.zeros(1)))) < 1e-7
    assert state.final_gap < 1e-7


def test_jet_recovery_trivial():
    grid = torus_grid2()
    jets = curved_jets(grid, J=4, seed=32)
    sym = symbol_factorize(jets, 4)
    state = jet_recovery(sym, sym, order=3)
    assert state.winding == (0, 0)
    assert state.final_gap < 1e-12
    for j, beta in state.betas.items():
        assert np.max(np.abs(beta - beta.mean())) < 1e-10


def test_asymptotic_match_flat_trivial():
    jets = disk_jets(J=2, a_theta=[0.0], q_radial=[0.0])
    sym = symbol_factorize(jets, 2)
    ks = list(range(16, 65, 6))
    oracle = [(k, disk_dn_oracle([0.0], [0.0], k, n_steps=600)[2]) for k in ks]
    fit = asymptotic_match(oracle, sym)
    assert abs(fit.fitted_inverse_coeff) < 1e-8
    assert abs(fit.predicted_inverse_coeff) < 1e-11


def test_jet_recovery_reports_obstructions():
    # a non-quantized harmonic flux at order 0 cannot come from a gauge;
    # the recovery still converges but records the obstruction
    grid = torus_grid2()
    jets_a = curved_jets(grid, J=3, seed=33)
    jets_b = jets_a.copy()
    jets_b.a_t[0, 0] += 0.3      # flux 0.6 pi over the first loop
    sym_a = symbol_factorize(jets_a, 3)
    sym_b = symbol_factorize(jets_b, 3)
    state = jet_recovery(sym_a, sym_b, order=2)
    kinds = {o[0] for o in state.obstructions}
    assert "non_quantized_flux" in kinds
    assert state.final_gap < 1e-7     # full absorption still reproduces symB
