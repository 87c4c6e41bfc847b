"""Scalar fields on periodic charts and coordinate patches.

Two representations are used throughout the package:

* :class:`FourierField` stores a truncated Fourier series on a torus and
  differentiates exactly (coefficient-wise), so pointwise identities built
  from chart data hold to machine precision for trigonometric data.
* :class:`AnalyticField` wraps a closed-form evaluator on a patch.  Exact
  derivative callables may be attached; otherwise differentiation falls back
  to 4th-order central differences with a step tied to the chart resolution.

All evaluators are vectorized: ``x`` has shape ``(dim,)`` or ``(dim, ...)``
and values are returned with the trailing batch shape.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError

TWO_PI = 2.0 * np.pi


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != dim:
        raise InvalidArgumentError(f"expected leading axis {dim}, got shape {x.shape}")
    return x


class FourierField:
    """Truncated Fourier series sum_k c_k exp(i k . kappa x) on a torus."""

    def __init__(self, periods, coeffs):
        """``coeffs`` maps integer mode tuples to complex coefficients."""
        self.periods = tuple(float(p) for p in periods)
        self.dim = len(self.periods)
        self.kappa = np.array([TWO_PI / p for p in self.periods])
        items = [(tuple(int(m) for m in k), complex(c)) for k, c in coeffs.items()
                 if c != 0]
        items.sort()
        self._modes = np.array([k for k, _ in items], dtype=int).reshape(-1, self.dim)
        self._c = np.array([c for _, c in items], dtype=complex)

    @classmethod
    def zero(cls, periods):
        return cls(periods, {})

    @classmethod
    def constant(cls, periods, value):
        dim = len(periods)
        return cls(periods, {(0,) * dim: value})

    @classmethod
    def from_callable(cls, fun, periods, n):
        """Sample ``fun`` on an n-per-axis grid and take the FFT.

        Exact for trigonometric polynomials resolved by the grid.
        """
        dim = len(periods)
        axes = [np.arange(n) * p / n for p in periods]
        grid = np.meshgrid(*axes, indexing="ij")
        vals = np.asarray(fun(np.stack(grid)), dtype=complex)
        spec = np.fft.fftn(vals) / vals.size
        coeffs = {}
        freqs = [np.fft.fftfreq(n, d=1.0 / n).astype(int) for _ in range(dim)]
        it = np.ndindex(*vals.shape)
        for idx in it:
            c = spec[idx]
            if abs(c) > 1e-13:
                coeffs[tuple(freqs[j][idx[j]] for j in range(dim))] = c
        return cls(periods, coeffs)

    @property
    def coeffs(self):
        return {tuple(k): c for k, c in zip(self._modes, self._c)}

    @property
    def max_mode(self):
        if len(self._c) == 0:
            return 0
        return int(np.abs(self._modes).max())

    def is_real(self, tol=1e-12):
        table = self.coeffs
        for k, c in table.items():
            mk = tuple(-m for m in k)
            if abs(np.conj(c) - table.get(mk, 0.0)) > tol:
                return False
        return True

    def __call__(self, x):
        x = _as_points(x, self.dim)
        if len(self._c) == 0:
            return np.zeros(x.shape[1:], dtype=complex)
        # phase[j, ...] for each stored mode
        phase = np.tensordot(self._modes * self.kappa, x, axes=(1, 0))
        return np.tensordot(self._c, np.exp(1j * phase), axes=(0, 0))

    def deriv(self, axis):
        coeffs = {tuple(k): c * 1j * k[axis] * self.kappa[axis]
                  for k, c in zip(self._modes, self._c)}
        return FourierField(self.periods, coeffs)

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = FourierField.constant(self.periods, other)
        coeffs = self.coeffs
        for k, c in other.coeffs.items():
            coeffs[k] = coeffs.get(k, 0.0) + c
        return FourierField(self.periods, coeffs)

    __radd__ = __add__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (other * (-1.0) if isinstance(other, FourierField) else -other)

    def __mul__(self, s):
        if not isinstance(s, (int, float, complex)):
            raise InvalidArgumentError("FourierField only supports scalar products")
        return FourierField(self.periods, {tuple(k): c * s
                                           for k, c in zip(self._modes, self._c)})

    __rmul__ = __mul__


class AnalyticField:
    """Closed-form field on a patch, differentiated by 4th-order differences.

    ``derivs`` may supply exact derivative callables keyed by multi-index
    tuples, e.g. ``{(0, 1): dphi_dy}``; missing orders fall back to finite
    differences of the closest available ancestor.
    """

    def __init__(self, fun, dim, step=1e-2, derivs=None, order=()):
        self.fun = fun
        self.dim = dim
        self.step = float(step)
        self.derivs = dict(derivs or {})
        self.order = tuple(order)  # differentiation history, for exact lookup

    def __call__(self, x):
        x = _as_points(x, self.dim)
        return np.asarray(self.fun(x))

    def deriv(self, axis):
        target = list(self.order)
        target = tuple(sorted(target + [axis]))
        key = tuple(np.bincount(target, minlength=self.dim))
        if key in self.derivs:
            return AnalyticField(self.derivs[key], self.dim, self.step,
                                 self.derivs, order=target)
        h = self.step
        parent = self

        def fd(x, _p=parent, _a=axis, _h=h):
            x = np.asarray(x, dtype=float)
            e = np.zeros_like(x)
            e[_a] = _h
            return (-_p(x + 2 * e) + 8 * _p(x + e)
                    - 8 * _p(x - e) + _p(x - 2 * e)) / (12 * _h)

        return AnalyticField(fd, self.dim, self.step, self.derivs, order=target)


def central_diff(fun, x, axis, h, order=4):
    """4th-order central difference of a vectorized callable at points x."""
    x = np.asarray(x, dtype=float)
    e = np.zeros_like(x)
    e[axis] = h
    if order == 2:
        return (fun(x + e) - fun(x - e)) / (2 * h)
    return (-fun(x + 2 * e) + 8 * fun(x + e) - 8 * fun(x - e) + fun(x - 2 * e)) / (12 * h)


def torus_grid(periods, n):
    """Uniform tensor grid on the torus: returns (points, weight-per-node).

    ``points`` has shape (dim, n, n, ...); the trapezoid weight is exact for
    resolved trigonometric polynomials.
    """
    if np.isscalar(n):
        n = [int(n)] * len(periods)
    axes = [np.arange(m) * p / m for p, m in zip(periods, n)]
    grid = np.meshgrid(*axes, indexing="ij")
    weight = float(np.prod([p / m for p, m in zip(periods, n)]))
    return np.stack(grid), weight


def real_part_field(values, tol, what):
    """Strip an imaginary part expected to vanish; raise if it does not."""
    values = np.asarray(values)
    worst = float(np.abs(values.imag).max()) if values.size else 0.0
    if worst > tol:
        raise InvalidArgumentError(f"{what}: imaginary part {worst:.3e} exceeds {tol:.1e}")
    return values.real
