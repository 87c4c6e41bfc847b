"""Coordinate charts, metrics, Christoffel symbols and curvature.

A :class:`MetricChart` is a single chart: either a flat torus, a 2D
isothermal chart (``g = exp(2 phi) (dx1^2 + dx2^2)``), or a general chart
with an explicit symmetric metric field.  Charts are periodic (torus) or
live on a rectangular patch.  Derived tensors are computed from exact
derivative chains where the underlying fields support them (Fourier data,
closed-form derivative callables) and by 4th-order differences otherwise.

All chart data is immutable after construction; derivative fields are cached
lazily, and a chart shared across workers should call :meth:`MetricChart.warm_cache`
first (cache fills are idempotent either way).
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import (ChartDomainError, DegenerateMetricError,
                     InvalidArgumentError)
from .fields import AnalyticField, FourierField

FLAT_TORUS = "flat_torus"
ISOTHERMAL = "isothermal_2d"
GENERAL = "general_nd"


class MetricChart:
    """A coordinate chart with metric data and derived curvature tensors."""

    def __init__(self, kind, dim, resolution, periods=None, domain=None,
                 phi=None, metric_entries=None, preset=None):
        if resolution < 1:
            raise InvalidArgumentError("resolution must be a positive integer")
        self.kind = kind
        self.dim = int(dim)
        self.resolution = int(resolution)
        self.periods = tuple(float(p) for p in periods) if periods else None
        self.domain = tuple((float(a), float(b)) for a, b in domain) if domain else None
        self.phi = phi
        self.metric_entries = metric_entries
        self.preset = preset
        self._cache = {}
        if self.periods is None and self.domain is None:
            raise InvalidArgumentError("chart needs either periods or a domain box")

    # -- basic chart geometry -------------------------------------------------

    @property
    def periodic(self):
        return self.periods is not None

    @property
    def extents(self):
        if self.periodic:
            return np.array(self.periods)
        return np.array([b - a for a, b in self.domain])

    @property
    def fd_step(self):
        """Per-axis finite-difference step tied to the chart resolution."""
        return self.extents / (8.0 * self.resolution)

    def contains(self, x, margin=0.0):
        if self.periodic:
            return True
        x = np.asarray(x)
        for j, (a, b) in enumerate(self.domain):
            if np.any(x[j] < a + margin) or np.any(x[j] > b - margin):
                return False
        return True

    def require_inside(self, x, margin=0.0):
        if not self.contains(x, margin):
            raise ChartDomainError(f"point outside chart domain {self.domain}")

    def warm_cache(self, max_phi_order=3):
        """Populate derivative-field caches eagerly (for read-only sharing)."""
        if self.kind == ISOTHERMAL:
            for order in _multi_indices(2, max_phi_order):
                self._phi_field(order)
        elif self.kind == GENERAL:
            for j in range(self.dim):
                for k in range(self.dim):
                    for order in _multi_indices(self.dim, 2):
                        self._g_field(j, k, order)
        return self

    # -- field derivative plumbing --------------------------------------------

    def _phi_field(self, order):
        key = ("phi", order)
        if key not in self._cache:
            f = self.phi
            for axis, rep in enumerate(order):
                for _ in range(rep):
                    f = f.deriv(axis)
            self._cache[key] = f
        return self._cache[key]

    def _phi_d(self, x, order):
        return np.real(self._phi_field(order)(x))

    def _g_field(self, j, k, order):
        key = ("g", j, k, order)
        if key not in self._cache:
            f = self.metric_entries[j][k]
            for axis, rep in enumerate(order):
                for _ in range(rep):
                    f = f.deriv(axis)
            self._cache[key] = f
        return self._cache[key]

    def _g_d(self, x, j, k, order):
        return np.real(self._g_field(j, k, order)(x))

    # -- metric and derivatives -----------------------------------------------

    def metric(self, x):
        """g_{jk}(x); shape (dim, dim, *batch)."""
        x = np.asarray(x, dtype=float)
        batch = x.shape[1:]
        d = self.dim
        if self.kind == FLAT_TORUS:
            return np.broadcast_to(np.eye(d).reshape((d, d) + (1,) * len(batch)),
                                   (d, d) + batch).copy()
        if self.kind == ISOTHERMAL:
            conf = np.exp(2.0 * self._phi_d(x, (0, 0)))
            return np.einsum("jk,...->jk...", np.eye(2), conf)
        g = np.empty((d, d) + batch)
        for j in range(d):
            for k in range(j, d):
                v = self._g_d(x, j, k, (0,) * d)
                g[j, k] = v
                g[k, j] = v
        return g

    def dmetric(self, x):
        """partial_l g_{jk}; shape (dim, dim, dim, *batch), index order (l, j, k)."""
        x = np.asarray(x, dtype=float)
        batch = x.shape[1:]
        d = self.dim
        if self.kind == FLAT_TORUS:
            return np.zeros((d, d, d) + batch)
        if self.kind == ISOTHERMAL:
            conf = np.exp(2.0 * self._phi_d(x, (0, 0)))
            dphi = np.stack([self._phi_d(x, (1, 0)), self._phi_d(x, (0, 1))])
            return np.einsum("l...,jk,...->ljk...", 2.0 * dphi, np.eye(2), conf)
        out = np.empty((d, d, d) + batch)
        for ell in range(d):
            order = tuple(1 if m == ell else 0 for m in range(d))
            for j in range(d):
                for k in range(j, d):
                    v = self._g_d(x, j, k, order)
                    out[ell, j, k] = v
                    out[ell, k, j] = v
        return out

    def d2metric(self, x):
        """partial_m partial_l g_{jk}; shape (dim, dim, dim, dim, *batch)."""
        x = np.asarray(x, dtype=float)
        batch = x.shape[1:]
        d = self.dim
        if self.kind == FLAT_TORUS:
            return np.zeros((d, d, d, d) + batch)
        if self.kind == ISOTHERMAL:
            conf = np.exp(2.0 * self._phi_d(x, (0, 0)))
            dphi = np.stack([self._phi_d(x, (1, 0)), self._phi_d(x, (0, 1))])
            hess = np.empty((2, 2) + batch)
            hess[0, 0] = self._phi_d(x, (2, 0))
            hess[0, 1] = hess[1, 0] = self._phi_d(x, (1, 1))
            hess[1, 1] = self._phi_d(x, (0, 2))
            coef = 2.0 * hess + 4.0 * np.einsum("m...,l...->ml...", dphi, dphi)
            return np.einsum("ml...,jk,...->mljk...", coef, np.eye(2), conf)
        out = np.empty((d, d, d, d) + batch)
        for m in range(d):
            for ell in range(m, d):
                order = tuple((1 if i == m else 0) + (1 if i == ell else 0)
                              for i in range(d))
                for j in range(d):
                    for k in range(j, d):
                        v = self._g_d(x, j, k, order)
                        out[m, ell, j, k] = out[m, ell, k, j] = v
                        out[ell, m, j, k] = out[ell, m, k, j] = v
        return out

    def metric_inv(self, x):
        if self.kind == FLAT_TORUS:
            return self.metric(x)
        if self.kind == ISOTHERMAL:
            conf = np.exp(-2.0 * self._phi_d(np.asarray(x, dtype=float), (0, 0)))
            return np.einsum("jk,...->jk...", np.eye(2), conf)
        g = self.metric(x)
        gm = np.moveaxis(g, (0, 1), (-2, -1))
        det = np.linalg.det(gm)
        if np.any(np.abs(det) < 1e-12):
            raise DegenerateMetricError("metric numerically degenerate")
        return np.moveaxis(np.linalg.inv(gm), (-2, -1), (0, 1))

    def sqrt_det(self, x):
        g = self.metric(x)
        gm = np.moveaxis(g, (0, 1), (-2, -1))
        det = np.linalg.det(gm)
        if np.any(det <= 0):
            raise DegenerateMetricError("metric not positive definite")
        return np.sqrt(det)

    def sqrt_metric(self, x):
        """Symmetric square root g^{1/2}(x) used to parametrize the cosphere."""
        if self.kind == FLAT_TORUS:
            return self.metric(x)
        if self.kind == ISOTHERMAL:
            conf = np.exp(self._phi_d(np.asarray(x, dtype=float), (0, 0)))
            return np.einsum("jk,...->jk...", np.eye(2), conf)
        g = np.moveaxis(self.metric(x), (0, 1), (-2, -1))
        w, v = np.linalg.eigh(g)
        if np.any(w <= 0):
            raise DegenerateMetricError("metric not positive definite")
        root = np.einsum("...jk,...k,...lk->...jl", v, np.sqrt(w), v)
        return np.moveaxis(root, (-2, -1), (0, 1))

    # -- connection and curvature ----------------------------------------------

    def christoffel(self, x):
        """Gamma^l_{jk}(x); shape (dim, dim, dim, *batch)."""
        if self.kind == FLAT_TORUS:
            x = np.asarray(x, dtype=float)
            d = self.dim
            return np.zeros((d, d, d) + x.shape[1:])
        ginv = self.metric_inv(x)
        dg = self.dmetric(x)
        # Gamma^l_{jk} = 1/2 g^{lm} (d_j g_mk + d_k g_mj - d_m g_jk)
        sym = np.einsum("jmk...->mjk...", dg) + np.einsum("kmj...->mjk...", dg) - dg
        return 0.5 * np.einsum("lm...,mjk...->ljk...", ginv, sym)

    def dchristoffel(self, x):
        """partial_n Gamma^l_{jk}; shape (dim, dim, dim, dim, *batch), order (n, l, j, k)."""
        if self.kind == FLAT_TORUS:
            x = np.asarray(x, dtype=float)
            d = self.dim
            return np.zeros((d, d, d, d) + x.shape[1:])
        ginv = self.metric_inv(x)
        dg = self.dmetric(x)
        d2g = self.d2metric(x)
        sym = np.einsum("jmk...->mjk...", dg) + np.einsum("kmj...->mjk...", dg) - dg
        dsym = (np.einsum("njmk...->nmjk...", d2g)
                + np.einsum("nkmj...->nmjk...", d2g)
                - d2g)
        dginv = -np.einsum("lp...,npq...,qm...->nlm...", ginv, dg, ginv)
        return 0.5 * (np.einsum("nlm...,mjk...->nljk...", dginv, sym)
                      + np.einsum("lm...,nmjk...->nljk...", ginv, dsym))

    def riemann(self, x):
        """Curvature tensor R^l_{mjk}(x); shape (dim, dim, dim, dim, *batch).

        Sign convention fixed by the horizontal-derivative structure equation:
        [nabla_j, nabla_k] = R^l_{mjk} xi_l d/dxi_m.
        """
        if self.kind == FLAT_TORUS:
            x = np.asarray(x, dtype=float)
            d = self.dim
            return np.zeros((d, d, d, d) + x.shape[1:])
        x = np.asarray(x, dtype=float)
        gm = np.moveaxis(self.metric(x), (0, 1), (-2, -1))
        if np.any(np.abs(np.linalg.det(gm)) < 1e-12):
            raise DegenerateMetricError("metric numerically degenerate")
        G = self.christoffel(x)
        dG = self.dchristoffel(x)
        r = (np.einsum("jlkm...->lmjk...", dG) - np.einsum("kljm...->lmjk...", dG)
             + np.einsum("ljc...,ckm...->lmjk...", G, G)
             - np.einsum("lkc...,cjm...->lmjk...", G, G))
        return r

    def gauss_curvature(self, x):
        """Gauss curvature of a 2D chart."""
        if self.dim != 2:
            raise InvalidArgumentError("gauss_curvature requires a 2D chart")
        x = np.asarray(x, dtype=float)
        self.require_inside(x)
        if self.kind == FLAT_TORUS:
            return np.zeros(x.shape[1:])
        if self.kind == ISOTHERMAL:
            lap = self._phi_d(x, (2, 0)) + self._phi_d(x, (0, 2))
            return -np.exp(-2.0 * self._phi_d(x, (0, 0))) * lap
        riem = self.riemann(x)
        g = self.metric(x)
        # R_{1212} = g_{1l} R^l_{212}; K = R_{1212} / det g
        r1212 = np.einsum("l...,l...->...", g[0], riem[:, 1, 0, 1])
        det = g[0, 0] * g[1, 1] - g[0, 1] ** 2
        return r1212 / det

    # -- serialization ----------------------------------------------------------

    def to_json(self):
        doc = {"dim": self.dim, "kind": self.kind, "resolution": self.resolution,
               "periods": list(self.periods) if self.periods else None}
        if self.preset is not None:
            doc["preset"] = {"name": self.preset[0], "params": self.preset[1]}
            doc["field_coefficients"] = None
            return json.dumps(doc)
        if self.kind == FLAT_TORUS:
            doc["field_coefficients"] = None
        elif self.kind == ISOTHERMAL and isinstance(self.phi, FourierField):
            doc["field_coefficients"] = {"phi": _coeffs_doc(self.phi)}
        elif self.kind == GENERAL and self.metric_entries is not None \
                and isinstance(self.metric_entries[0][0], FourierField):
            entries = {}
            for j in range(self.dim):
                for k in range(j, self.dim):
                    entries[f"g_{j}{k}"] = _coeffs_doc(self.metric_entries[j][k])
            doc["field_coefficients"] = entries
        else:
            raise InvalidArgumentError(
                "only periodic Fourier-backed or preset charts are serializable")
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        kind, dim = doc["kind"], doc["dim"]
        periods = tuple(doc["periods"]) if doc.get("periods") else None
        res = doc["resolution"]
        if doc.get("preset"):
            name = doc["preset"]["name"]
            params = doc["preset"]["params"]
            if name == "hyperbolic_halfplane":
                return hyperbolic_halfplane_chart(tuple(map(tuple, params["domain"])), res)
            raise InvalidArgumentError(f"unknown chart preset {name!r}")
        if kind == FLAT_TORUS:
            return make_flat_torus(periods, res)
        if kind == ISOTHERMAL:
            phi = _coeffs_from_doc(doc["field_coefficients"]["phi"], periods)
            return make_isothermal_chart(phi, res, periods=periods)
        if kind == GENERAL:
            entries = {}
            for key, sub in doc["field_coefficients"].items():
                j, k = int(key[2]), int(key[3])
                entries[(j, k)] = _coeffs_from_doc(sub, periods)
            return make_general_chart(dim, entries, res, periods=periods)
        raise InvalidArgumentError(f"unknown chart kind {kind!r}")


def _coeffs_doc(field):
    return {",".join(map(str, k)): [c.real, c.imag] for k, c in field.coeffs.items()}


def _coeffs_from_doc(doc, periods):
    coeffs = {tuple(int(s) for s in key.split(",")): complex(re, im)
              for key, (re, im) in doc.items()}
    return FourierField(periods, coeffs)


def _multi_indices(dim, total_max):
    out = []

    def rec(prefix, remaining):
        if len(prefix) == dim:
            out.append(tuple(prefix))
            return
        for r in range(remaining + 1):
            rec(prefix + [r], remaining - r)

    rec([], total_max)
    return out


# -- constructors ----------------------------------------------------------------


def make_flat_torus(periods, resolution=8):
    """Flat torus with the stated periods; dim 1 gives a circle chart."""
    periods = tuple(periods)
    if len(periods) < 1:
        raise InvalidArgumentError("need at least one period")
    for p in periods:
        if not (p > 0):
            raise InvalidArgumentError(f"periods must be positive, got {p}")
    return MetricChart(FLAT_TORUS, len(periods), resolution, periods=periods)


def make_isothermal_chart(phi, resolution=8, periods=None, domain=None,
                          phi_derivs=None, sample_n=None):
    """2D isothermal chart g = exp(2 phi) (dx1^2 + dx2^2).

    ``phi`` may be a FourierField, an AnalyticField, a coefficient dict
    (periodic case) or a plain callable.  Callables on periodic charts are
    sampled onto a grid and carried as exact Fourier data; on patches they
    become AnalyticFields with optional exact derivatives ``phi_derivs``
    keyed by multi-index, e.g. {(0, 1): dphi_dy}.
    """
    if periods is not None:
        if isinstance(phi, dict):
            phi = FourierField(periods, phi)
        elif callable(phi) and not isinstance(phi, FourierField):
            phi = FourierField.from_callable(phi, periods, sample_n or 4 * resolution)
        chart = MetricChart(ISOTHERMAL, 2, resolution, periods=periods, phi=phi)
    else:
        if domain is None:
            raise InvalidArgumentError("patch chart needs a domain box")
        if not isinstance(phi, AnalyticField):
            step = min((b - a) for a, b in domain) / (4.0 * resolution)
            phi = AnalyticField(phi, 2, step=step, derivs=phi_derivs)
        chart = MetricChart(ISOTHERMAL, 2, resolution, domain=domain, phi=phi)
    _check_finite_phi(chart)
    return chart


def _check_finite_phi(chart):
    if chart.periodic:
        pts, _ = _probe_points(chart)
    else:
        pts, _ = _probe_points(chart)
    vals = chart._phi_d(pts, (0, 0))
    if not np.all(np.isfinite(vals)):
        raise InvalidArgumentError("conformal factor has non-finite samples")


def _probe_points(chart, n=5):
    if chart.periodic:
        axes = [np.linspace(0, p, n, endpoint=False) for p in chart.periods]
    else:
        axes = [np.linspace(a, b, n + 2)[1:-1] for a, b in chart.domain]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid]), n


def make_general_chart(dim, metric, resolution=8, periods=None, domain=None,
                       metric_step=None, sample_n=None):
    """General chart from explicit metric entries.

    ``metric`` is either a dict {(j, k): field-or-callable-or-coeff-dict} for
    the independent entries, or a callable x -> (dim, dim, *batch) array (patch
    charts; differentiated by finite differences with step ``metric_step``).
    """
    entries = [[None] * dim for _ in range(dim)]
    if callable(metric) and not isinstance(metric, dict):
        if domain is None and periods is None:
            raise InvalidArgumentError("chart needs periods or a domain box")
        extent = min(b - a for a, b in domain) if domain else min(periods)
        step = metric_step or extent / (8.0 * resolution)
        for j in range(dim):
            for k in range(j, dim):
                fun = _entry_picker(metric, j, k)
                entries[j][k] = entries[k][j] = AnalyticField(fun, dim, step=step)
    else:
        for (j, k), val in metric.items():
            if isinstance(val, dict):
                val = FourierField(periods, val)
            elif callable(val) and not isinstance(val, (FourierField, AnalyticField)):
                if periods is not None:
                    val = FourierField.from_callable(val, periods,
                                                     sample_n or 4 * resolution)
                else:
                    extent = min(b - a for a, b in domain)
                    val = AnalyticField(val, dim, step=extent / (8.0 * resolution))
            entries[j][k] = entries[k][j] = val
        for j in range(dim):
            for k in range(dim):
                if entries[j][k] is None:
                    zero = (FourierField.zero(periods) if periods is not None
                            else AnalyticField(lambda x: np.zeros(np.shape(x)[1:]), dim))
                    entries[j][k] = zero
    chart = MetricChart(GENERAL, dim, resolution, periods=periods, domain=domain,
                        metric_entries=entries)
    pts, _ = _probe_points(chart)
    chart.sqrt_det(pts)  # raises if not positive definite
    return chart


def _entry_picker(metric, j, k):
    def fun(x):
        return np.asarray(metric(x))[j, k]
    return fun


def hyperbolic_halfplane_chart(domain=((-1.0, 1.0), (0.5, 2.5)), resolution=8):
    """Upper half-plane patch with phi = -log y, so K = -1 identically."""
    derivs = {}

    def d_phi(p, q):
        # phi = -log y: only pure y-derivatives are nonzero
        if p > 0:
            return lambda x: np.zeros(np.shape(x)[1:])
        if q == 0:
            return lambda x: -np.log(x[1])
        sign = -1.0 if q % 2 == 1 else 1.0
        fact = float(math.factorial(q - 1))
        return lambda x, s=sign, f=fact, qq=q: s * f / x[1] ** qq

    for p in range(0, 5):
        for q in range(0, 5):
            if p + q <= 4:
                derivs[(p, q)] = d_phi(p, q)
    phi = AnalyticField(derivs[(0, 0)], 2,
                        step=min(b - a for a, b in domain) / (4.0 * resolution),
                        derivs=derivs)
    chart = MetricChart(ISOTHERMAL, 2, resolution, domain=domain, phi=phi,
                        preset=("hyperbolic_halfplane", {"domain": [list(d) for d in domain]}))
    return chart
