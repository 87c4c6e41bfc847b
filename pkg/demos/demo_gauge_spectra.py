"""Aharonov-Bohm phenomenology: gauge-invariant spectra and flux decisions."""

import numpy as np

from magspec.fields import FourierField
from magspec.geometry import make_flat_torus
from magspec.schrodinger import (GaugeFunction, PotentialData,
                                 assemble_schrodinger, eigenvalues,
                                 gauge_conjugate, isospectrality_check,
                                 random_real_field)
from magspec.dynamics import torus_geodesic
from magspec.xray import gauge_equivalence_decision

TWO_PI = 2 * np.pi
rng = np.random.default_rng(0)

circle = make_flat_torus((TWO_PI,))
pot = PotentialData(circle, (FourierField.constant(circle.periods, 0.25),),
                    FourierField.zero(circle.periods))
vals, _ = eigenvalues(assemble_schrodinger(circle, pot, 8), 5)
print("circle spectrum with flux 0.25:", np.round(vals, 6))

torus = make_flat_torus((TWO_PI, TWO_PI))
pot2 = PotentialData(torus, (random_real_field(torus.periods, rng, 2, 0.2),
                             random_real_field(torus.periods, rng, 2, 0.2)),
                     random_real_field(torus.periods, rng, 2, 0.2))
gauge = GaugeFunction(torus, (1, -1), random_real_field(torus.periods, rng, 1, 0.2))
for cutoff in (6, 10, 14):
    gap = isospectrality_check(pot2, gauge, cutoff, count=12)
    print(f"isospectrality gap at cutoff {cutoff}: {gap:.2e}")

geos = [torus_geodesic(torus, w) for w in [(1, 0), (0, 1), (1, 1)]]
conj = gauge_conjugate(pot2, gauge)
print("gauge pair verdict:",
      gauge_equivalence_decision(pot2, conj, geos).verdict)
bad = PotentialData(torus, (pot2.a[0] + FourierField.constant(torus.periods, 0.3),
                            pot2.a[1]), pot2.q)
print("0.3-flux shift verdict:",
      gauge_equivalence_decision(pot2, bad, geos).verdict)
