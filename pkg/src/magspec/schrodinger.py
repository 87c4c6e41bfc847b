"""Magnetic Schrodinger operators on flat tori: assembly, spectra, gauge.

The operator (in coordinates, flat metric)

    P = sum_j (D_j + a_j)^2 + q,     D_j = -i d/dx_j,

is discretized as a Fourier-Galerkin quadratic form on the modes
|k|_inf <= cutoff.  Each factor D_j + a_j is truncated before squaring, so
the assembled matrix is exactly Hermitian and bounded below by min q; for
trigonometric-polynomial coefficients the spectrum converges spectrally.

Gauge functions are stored as an integer winding vector plus a single-valued
phase, which makes the gauge one-form -i conj(theta) d theta exact
coefficient arithmetic: no branch cuts are ever differentiated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UnderResolvedWarning
from .fields import FourierField, torus_grid
from .geometry import FLAT_TORUS, MetricChart


@dataclass(frozen=True)
class PotentialData:
    """Magnetic one-form a = sum a_j dx_j and electric potential q."""

    chart: MetricChart
    a: tuple
    q: FourierField

    def __post_init__(self):
        if len(self.a) != self.chart.dim:
            raise InvalidArgumentError("one-form component count != chart dim")
        for comp in self.a:
            if not comp.is_real():
                raise InvalidArgumentError("magnetic potential must be real")
        if not self.q.is_real():
            raise InvalidArgumentError("electric potential must be real")

    def magnetic_field(self):
        """Components b_{jk} = d_j a_k - d_k a_j of b = da."""
        d = self.chart.dim
        return {(j, k): self.a[k].deriv(j) - self.a[j].deriv(k)
                for j in range(d) for k in range(j + 1, d)}


def zero_potential(chart):
    zero = FourierField.zero(chart.periods)
    return PotentialData(chart, tuple(zero for _ in range(chart.dim)), zero)


@dataclass(frozen=True)
class GaugeFunction:
    """Circle-valued gauge theta = exp(i (2 pi <w, x / L> + psi(x))).

    ``winding`` is the integer vector w; ``psi`` a real single-valued phase.
    """

    chart: MetricChart
    winding: tuple
    psi: FourierField

    def __post_init__(self):
        if len(self.winding) != self.chart.dim:
            raise InvalidArgumentError("winding length != chart dim")
        if any(w != int(w) for w in self.winding):
            raise InvalidArgumentError("winding must be integral")
        if not self.psi.is_real():
            raise InvalidArgumentError("gauge phase must be real")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        lin = sum(2 * np.pi * w / p * x[j]
                  for j, (w, p) in enumerate(zip(self.winding, self.chart.periods)))
        return np.exp(1j * (lin + np.real(self.psi(x))))

    def one_form(self):
        """The real closed one-form -i conj(theta) d theta, component-wise."""
        comps = []
        for j, (w, p) in enumerate(zip(self.winding, self.chart.periods)):
            const = FourierField.constant(self.chart.periods, 2 * np.pi * w / p)
            comps.append(const + self.psi.deriv(j))
        return tuple(comps)


def gauge_conjugate(pot, gauge):
    """Potential of conj(theta) P theta: a -> a - i conj(theta) d theta, q fixed."""
    if gauge.chart is not pot.chart and gauge.chart.periods != pot.chart.periods:
        raise InvalidArgumentError("gauge and potential live on different charts")
    shift = gauge.one_form()
    new_a = tuple(aj + sj for aj, sj in zip(pot.a, shift))
    return PotentialData(pot.chart, new_a, pot.q)


# ---------------------------------------------------------------------------
# Fourier-Galerkin assembly
# ---------------------------------------------------------------------------

@dataclass
class SchrodingerMatrix:
    chart: MetricChart
    cutoff: int
    modes: np.ndarray          # (N, dim) integer mode vectors
    matrix: np.ndarray         # (N, N) Hermitian

    @property
    def dim(self):
        return self.matrix.shape[0]


def _mode_lattice(dim, cutoff):
    axes = [np.arange(-cutoff, cutoff + 1)] * dim
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _convolution_matrix(field, modes):
    """Matrix of multiplication by the field in the truncated Fourier basis."""
    table = field.coeffs
    if not table:
        return np.zeros((len(modes), len(modes)), dtype=complex)
    diff = modes[:, None, :] - modes[None, :, :]
    out = np.zeros((len(modes), len(modes)), dtype=complex)
    for mode, c in table.items():
        mask = np.all(diff == np.asarray(mode), axis=-1)
        out[mask] += c
    return out


def assemble_schrodinger(chart, pot, cutoff):
    """Fourier-Galerkin matrix of the magnetic Schrodinger quadratic form."""
    if chart.kind != FLAT_TORUS:
        raise InvalidArgumentError("assembly implemented on flat tori only")
    if cutoff < 1:
        raise InvalidArgumentError("cutoff must be >= 1")
    max_deg = max([f.max_mode for f in pot.a] + [pot.q.max_mode])
    if max_deg > cutoff:
        warnings.warn(f"coefficient degree {max_deg} exceeds cutoff {cutoff}",
                      UnderResolvedWarning)
    modes = _mode_lattice(chart.dim, cutoff)
    kappa = 2 * np.pi / np.asarray(chart.periods)
    H = np.zeros((len(modes), len(modes)), dtype=complex)
    for j in range(chart.dim):
        mj = np.diag((modes[:, j] * kappa[j]).astype(complex))
        mj = mj + _convolution_matrix(pot.a[j], modes)
        H += mj @ mj
    H += _convolution_matrix(pot.q, modes)
    herm = np.max(np.abs(H - H.conj().T))
    scale = max(1.0, np.max(np.abs(H)))
    if herm > 1e-12 * scale:
        raise InvalidArgumentError(f"assembled matrix not Hermitian: {herm:.2e}")
    H = 0.5 * (H + H.conj().T)
    return SchrodingerMatrix(chart=chart, cutoff=cutoff, modes=modes, matrix=H)


def eigenvalues(operator, count):
    """Lowest ``count`` eigenvalues with relative residuals.

    Returns (values, residuals); residuals are ||H v - lambda v|| / ||H||.
    """
    H = operator.matrix if isinstance(operator, SchrodingerMatrix) else np.asarray(operator)
    if count < 1 or count > H.shape[0]:
        raise InvalidArgumentError(f"count must be in [1, {H.shape[0]}]")
    try:
        vals, vecs = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:   # pragma: no cover - defensive
        raise InvalidArgumentError(f"eigensolver failed: {exc}") from exc
    scale = max(np.max(np.abs(vals)), 1e-300)
    resid = np.linalg.norm(H @ vecs[:, :count] - vecs[:, :count] * vals[:count],
                           axis=0) / scale
    return vals[:count], resid


def min_electric(pot, n=64):
    pts, _ = torus_grid(pot.chart.periods, n)
    return float(np.min(np.real(pot.q(pts))))


def isospectrality_check(pot, gauge, cutoff, count):
    """Max gap between the spectra of P_{a,q} and of the gauge conjugate."""
    conj = gauge_conjugate(pot, gauge)
    v1, _ = eigenvalues(assemble_schrodinger(pot.chart, pot, cutoff), count)
    v2, _ = eigenvalues(assemble_schrodinger(pot.chart, conj, cutoff), count)
    return float(np.max(np.abs(v1 - v2)))


def subprincipal(pot, point, covector):
    """sub(P) = 2 <a(x), xi> with the index raised by the chart metric."""
    point = np.asarray(point, dtype=float).reshape(pot.chart.dim, 1)
    xi = np.asarray(covector, dtype=float)
    ginv = pot.chart.metric_inv(point)[..., 0]
    avals = np.array([np.real(comp(point))[0] for comp in pot.a])
    return 2.0 * float(avals @ ginv @ xi)


def potential_to_json(pot):
    """Serialize a potential together with its chart document."""
    import json

    def coeffs_doc(field):
        return {",".join(map(str, k)): [c.real, c.imag]
                for k, c in field.coeffs.items()}

    return json.dumps({"chart": json.loads(pot.chart.to_json()),
                       "a": [coeffs_doc(c) for c in pot.a],
                       "q": coeffs_doc(pot.q)})


def potential_from_json(text):
    import json

    from .geometry import MetricChart

    doc = json.loads(text)
    chart = MetricChart.from_json(json.dumps(doc["chart"]))

    def from_doc(sub):
        return FourierField(chart.periods,
                            {tuple(int(s) for s in key.split(",")): complex(re, im)
                             for key, (re, im) in sub.items()})

    return PotentialData(chart, tuple(from_doc(c) for c in doc["a"]),
                         from_doc(doc["q"]))


def random_real_field(periods, rng, degree=2, amplitude=0.3):
    """Random real trigonometric polynomial of the given max degree."""
    dim = len(periods)
    coeffs = {}
    for mode in _mode_lattice(dim, degree):
        mode = tuple(int(m) for m in mode)
        if mode <= tuple([0] * dim):
            continue
        c = amplitude * (rng.standard_normal() + 1j * rng.standard_normal()) / 2
        coeffs[mode] = coeffs.get(mode, 0) + c
        coeffs[tuple(-m for m in mode)] = np.conj(c)
    return FourierField(periods, coeffs)
