"""magspec: a numerical laboratory for magnetic spectral inverse problems.

Subpackages cover coordinate charts and curvature (:mod:`magspec.geometry`),
closed geodesics and length spectra of hyperbolic surfaces
(:mod:`magspec.dynamics`), transport and energy identities on the unit
cosphere bundle (:mod:`magspec.cosphere`), magnetic Schrodinger spectra and
gauge conjugation (:mod:`magspec.schrodinger`), X-ray transforms and flux
criteria (:mod:`magspec.xray`), and the polyhomogeneous symbol engine for the
magnetic Dirichlet-to-Neumann map (:mod:`magspec.steklov`).
"""

__version__ = "0.1.0"
