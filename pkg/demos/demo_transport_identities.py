"""Cosphere-bundle machinery: bracket algebra, transport, Pestov identity."""

import numpy as np

from magspec.cosphere import (AffineFiberFunction, bracket_residuals,
                              pestov_residual, solve_transport_along_orbit,
                              special_form_norms)
from magspec.dynamics import torus_geodesic
from magspec.geometry import hyperbolic_halfplane_chart, make_isothermal_chart
from magspec.schrodinger import random_real_field

TWO_PI = 2 * np.pi

curved = make_isothermal_chart({(1, 0): 0.15, (-1, 0): 0.15},
                               periods=(TWO_PI, TWO_PI))
hyper = hyperbolic_halfplane_chart()


def field(x, xi):
    return np.exp(0.8 * np.sin(x[0])) * (1 + 0.5 * np.real((xi[0] + 1j * xi[1]) ** 2))


print("bracket residuals on the curved torus:")
for name, resid in bracket_residuals(curved, [field]).items():
    print(f"  {name:<14} {resid:.3e}")
print("bracket residuals on the hyperbolic patch:")
for name, resid in bracket_residuals(hyper, [field]).items():
    print(f"  {name:<14} {resid:.3e}")

# transport holonomy along a closed torus geodesic
from magspec.geometry import make_flat_torus

flat = make_flat_torus((TWO_PI, TWO_PI))
geo = torus_geodesic(flat, (1, 0))
f = AffineFiberFunction(flat, lambda x: 0.3 * np.ones(x.shape[1:]), None)
sol = solve_transport_along_orbit(geo, f)
print(f"transport defect for f = 0.3: {sol.periodicity_defect:.6f} "
      f"(expected {abs(np.remainder(0.3 * geo.length + np.pi, TWO_PI) - np.pi):.6f})")

# manufactured Pestov solution u = exp(i psi), f = -<d psi, xi#>
rng = np.random.default_rng(1)
psi = random_real_field(curved.periods, rng, degree=2, amplitude=0.25)
u = lambda x, xi: np.exp(1j * np.real(psi(x))) * np.ones(np.shape(xi)[1:])
f = AffineFiberFunction(curved, None, tuple(
    (lambda x, j=j: -np.real(psi.deriv(j)(x))) for j in range(2)))
rep = pestov_residual(curved, u, f, nx=64, ntheta=24)
print(f"Pestov: identity residual {rep.identity_residual:.2e}, "
      f"beta norm {rep.beta_norm:.2e}")

fa = AffineFiberFunction(curved, None, tuple(
    (lambda x, j=j: np.real(psi.deriv(j)(x))) for j in range(2)))
n2, n0, n1, v2 = special_form_norms(curved, fa)
print(f"special-form norms: |Vf|^2 / |f1|^2 = {v2 / n1:.9f} (n - 1 = 1)")
