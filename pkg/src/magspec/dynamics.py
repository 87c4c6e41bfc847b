"""Closed geodesics, length spectra, and cogeodesic flow integration.

Hyperbolic surfaces are presented by Fuchsian groups in SL(2, R) acting on
the upper half-plane; the genus-2 preset is the regular hyperbolic octagon
with the canonical commutator side pairing.  Conjugacy classes of group
elements (= closed geodesics) are enumerated by cyclic words and
deduplicated exactly at desk scale: cyclic rotation, inversion, and
half-relator rewriting generate the full conjugacy relation for short
cyclically reduced words in this one-relator small-cancellation group.

Flat-torus closed geodesics (straight lines with integer winding) share the
:class:`ClosedGeodesic` container so that X-ray and transport code can treat
both models uniformly.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateLimitWarning, DegenerateOrbitError,
                     FlowTruncationError, IncompleteEnumerationError,
                     InvalidArgumentError, MissingRepresentativeError,
                     NearParabolicWarning, NotHyperbolicError)
from .geometry import FLAT_TORUS

LETTERS = "abcd"
ALPHABET = "aAbBcCdD"          # lex order used for canonical words
_ORD = {ch: i for i, ch in enumerate(ALPHABET)}


# ---------------------------------------------------------------------------
# group construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FuchsianGroup:
    """Generators in SL(2, R) with an optional surface relator word."""

    generators: tuple
    relator: str | None = "abABcdCD"

    def __post_init__(self):
        mats = tuple(np.asarray(g, dtype=float) for g in self.generators)
        object.__setattr__(self, "generators", mats)
        for g in mats:
            if abs(np.linalg.det(g) - 1.0) > 1e-9:
                raise InvalidArgumentError("generators must have determinant 1")

    def letter_matrix(self, ch):
        idx = LETTERS.index(ch.lower())
        g = self.generators[idx]
        return _inv2(g) if ch.isupper() else g

    def word_matrix(self, word):
        m = np.eye(2)
        for ch in word:
            m = m @ self.letter_matrix(ch)
        return m

    def relator_residual(self):
        if self.relator is None:
            return 0.0
        m = self.word_matrix(self.relator)
        return min(np.abs(m - np.eye(2)).max(), np.abs(m + np.eye(2)).max())


def _inv2(m):
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


def _su11_move_to_origin(z0):
    s = 1.0 / math.sqrt(1.0 - abs(z0) ** 2)
    return np.array([[s, -s * z0], [-s * np.conj(z0), s]], dtype=complex)


def _su11_rotation(alpha):
    return np.array([[np.exp(1j * alpha / 2), 0], [0, np.exp(-1j * alpha / 2)]],
                    dtype=complex)


def _mobius(m, z):
    return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])


def _disk_isometry(p1, p2, q1, q2):
    """Unique orientation-preserving disk isometry with p1 -> q1, p2 -> q2."""
    tp = _su11_move_to_origin(p1)
    rp = _su11_rotation(-np.angle(_mobius(tp, p2)))
    tq = _su11_move_to_origin(q1)
    rq = _su11_rotation(-np.angle(_mobius(tq, q2)))
    a = np.linalg.inv(rq @ tq) @ (rp @ tp)
    return a / np.sqrt(np.linalg.det(a) + 0j)


def build_genus2_group():
    """Regular-octagon genus-2 surface group with relator a b a- b- c d c- d-.

    The octagon has vertex angle pi/4 (circumradius arccosh(cot^2 pi/8)); the
    four side pairings are assembled in the disk model and conjugated into
    SL(2, R).  The relator residual is checked at construction.
    """
    rh = np.arccosh(1.0 / np.tan(np.pi / 8) ** 2)
    re = np.tanh(rh / 2)
    verts = [re * np.exp(1j * (2 * k + 1) * np.pi / 8) for k in range(8)]

    def edge(k):
        return verts[k % 8], verts[(k + 1) % 8]

    raw = {}
    for name, (e_fwd, e_bwd) in {"a": (0, 2), "b": (1, 3),
                                 "c": (4, 6), "d": (5, 7)}.items():
        p, q = edge(e_bwd)
        t, u = edge(e_fwd)
        raw[name] = _disk_isometry(p, q, u, t)

    # the octagon vertex relation for these pairings reads b- a b a- d- c d c-;
    # relabel so the canonical commutator relator holds
    disk_gens = [np.linalg.inv(raw["b"]), raw["a"], np.linalg.inv(raw["d"]), raw["c"]]

    cay = np.array([[1.0, -1j], [1.0, 1j]], dtype=complex)
    cay = cay / np.sqrt(np.linalg.det(cay))
    gens = []
    for m in disk_gens:
        mr = np.linalg.inv(cay) @ m @ cay
        if np.abs(mr.imag).max() > 1e-10:
            raise InvalidArgumentError("octagon conversion lost realness")
        g = mr.real
        g = g / math.copysign(math.sqrt(abs(np.linalg.det(g))), 1.0)
        gens.append(g)
    group = FuchsianGroup(tuple(gens))
    resid = group.relator_residual()
    if resid > 1e-9:
        raise InvalidArgumentError(f"octagon relator residual {resid:.2e}")
    return group


def geodesic_length(element):
    """Translation length 2 arccosh(|trace| / 2) of a hyperbolic element."""
    element = np.asarray(element, dtype=float)
    t = abs(float(np.trace(element)))
    if t <= 2.0:
        raise NotHyperbolicError(f"|trace| = {t:.12g} <= 2")
    if t < 2.0 + 1e-9:
        warnings.warn("element is numerically near-parabolic", NearParabolicWarning)
    return 2.0 * float(np.arccosh(t / 2.0))


# ---------------------------------------------------------------------------
# cyclic-word machinery
# ---------------------------------------------------------------------------

def invert_word(word):
    return word[::-1].swapcase()


def free_reduce(word):
    out = []
    for ch in word:
        if out and out[-1] == ch.swapcase():
            out.pop()
        else:
            out.append(ch)
    return "".join(out)


def cyclic_reduce(word):
    word = free_reduce(word)
    while len(word) >= 2 and word[0] == word[-1].swapcase():
        word = free_reduce(word[1:-1])
    return word


def _word_key(word):
    return tuple(_ORD[ch] for ch in word)


def _rotations(word):
    return {word[i:] + word[:i] for i in range(len(word))}


class _RelatorTables:
    """Substring tables for Dehn reduction over a fixed relator."""

    def __init__(self, relator):
        shifts = set()
        for base in (relator, invert_word(relator)):
            shifts |= _rotations(base)
        self.length = len(relator)
        self.shifts = shifts
        # map: subword u (len >= half+1) -> replacement inverse(v) with uv a shift
        self.reductions = {}
        self.swaps = {}
        half = self.length // 2
        for rho in shifts:
            for lu in range(half + 1, self.length + 1):
                u, v = rho[:lu], rho[lu:]
                self.reductions.setdefault(u, invert_word(v))
            u, v = rho[:half], rho[half:]
            self.swaps.setdefault(u, invert_word(v))


def _find_reduction(cyc, tables):
    """Return a strictly shorter equal word if a long relator piece occurs."""
    n = len(cyc)
    doubled = cyc + cyc
    max_l = min(tables.length, n)
    for lu in range(tables.length, tables.length // 2, -1):
        if lu > max_l:
            continue
        for start in range(n):
            u = doubled[start:start + lu]
            rep = tables.reductions.get(u)
            if rep is not None:
                rest = doubled[start + lu:start + n]
                return cyclic_reduce(rep + rest)
    return None


def _swap_neighbors(cyc, tables):
    n = len(cyc)
    doubled = cyc + cyc
    half = tables.length // 2
    out = []
    if n < half:
        return out
    for start in range(n):
        u = doubled[start:start + half]
        rep = tables.swaps.get(u)
        if rep is not None:
            rest = doubled[start + half:start + n]
            out.append(rep + rest)
    return out


def conjugacy_normal_form(word, relator="abABcdCD", max_orbit=4096):
    """Canonical representative of the conjugacy class of ``word`` (+- inverse).

    Closure under cyclic rotation, inversion, and half-relator rewriting;
    returns None when a shorter representative exists (the input was not of
    minimal length in its class).  With ``relator=None`` only the free-group
    moves are used.
    """
    word = cyclic_reduce(word)
    if word == "":
        return ""
    tables = _RelatorTables(relator) if relator else None
    seen = set()
    frontier = [word, invert_word(word)]
    best = None
    while frontier:
        w = frontier.pop()
        for rot in _rotations(w):
            if rot in seen:
                continue
            seen.add(rot)
            if len(seen) > max_orbit:
                raise InvalidArgumentError("conjugacy orbit exceeded the cap")
            if best is None or _word_key(rot) < _word_key(best):
                best = rot
            if tables is not None:
                shorter = _find_reduction(rot, tables)
                if shorter is not None and len(shorter) < len(w):
                    return None
                for swap in _swap_neighbors(rot, tables):
                    swap = cyclic_reduce(swap)
                    if len(swap) < len(w):
                        return None
                    if swap not in seen:
                        frontier.append(swap)
                        frontier.append(invert_word(swap))
    return best


def _is_cyclically_power(word):
    n = len(word)
    for d in range(1, n):
        if n % d == 0 and word == word[d:] + word[:d]:
            return True
    return False


def _cyclically_reduced_words(length):
    """Yield cyclically reduced words that are lex-minimal rotations."""
    def rec(prefix):
        if len(prefix) == length:
            if prefix[-1] != prefix[0].swapcase():
                yield "".join(prefix)
            return
        for ch in ALPHABET:
            if prefix and prefix[-1] == ch.swapcase():
                continue
            if prefix and _ORD[ch] < _ORD[prefix[0]]:
                continue  # a rotation starting at ch would be lex-smaller
            yield from rec(prefix + [ch])

    for first in ALPHABET:
        yield from rec([first])


def abelianization(word):
    vec = np.zeros(len(LETTERS), dtype=int)
    for ch in word:
        vec[LETTERS.index(ch.lower())] += -1 if ch.isupper() else 1
    return vec


# ---------------------------------------------------------------------------
# closed geodesics and length spectra
# ---------------------------------------------------------------------------

@dataclass
class ClosedGeodesic:
    """A closed geodesic: hyperbolic word class or flat-torus line."""

    kind: str                      # "hyperbolic" | "torus_line"
    length: float
    primitive_period: float
    iterate: int = 1
    word: str | None = None
    matrix: np.ndarray | None = None
    group: FuchsianGroup | None = None
    chart: object | None = None
    winding: tuple | None = None
    base: tuple | None = None
    _axis: object | None = field(default=None, repr=False)

    @property
    def poincare_det(self):
        """|det(I - P)| = 4 sinh^2(length / 2) on curvature -1 surfaces."""
        if self.kind != "hyperbolic":
            return None
        return 4.0 * math.sinh(self.length / 2.0) ** 2

    def axis(self):
        if self.kind != "hyperbolic":
            raise MissingRepresentativeError("axis only exists for hyperbolic classes")
        if self._axis is None:
            if self.matrix is None:
                raise MissingRepresentativeError("no matrix representative")
            self._axis = AxisParametrization(self.matrix)
        return self._axis

    def point(self, t):
        if self.kind == "hyperbolic":
            return self.axis().point(t)
        t = np.asarray(t, dtype=float)
        direction, _ = self._torus_direction()
        return (np.asarray(self.base)[:, None] * np.ones_like(t)
                + direction[:, None] * t).reshape((len(self.base),) + t.shape)

    def velocity(self, t):
        if self.kind == "hyperbolic":
            return self.axis().velocity(t)
        t = np.asarray(t, dtype=float)
        direction, _ = self._torus_direction()
        return np.broadcast_to(direction[:, None], (len(direction),) + t.shape).copy()

    def covector(self, t):
        if self.kind == "hyperbolic":
            return self.axis().covector(t)
        return self.velocity(t)  # flat metric: flat index lowering is trivial

    def _torus_direction(self):
        if self.chart is None or self.winding is None:
            raise MissingRepresentativeError("torus line needs chart and winding")
        vec = np.array([w * p for w, p in zip(self.winding, self.chart.periods)])
        ell = float(np.linalg.norm(vec))
        return vec / ell, ell


def torus_geodesic(chart, winding, base=None):
    """Closed straight-line geodesic of a flat torus with integer winding."""
    if chart.kind != FLAT_TORUS:
        raise InvalidArgumentError("torus geodesics require a flat torus chart")
    winding = tuple(int(w) for w in winding)
    if all(w == 0 for w in winding):
        raise InvalidArgumentError("winding must be nonzero")
    g = math.gcd(*[abs(w) for w in winding]) if len(winding) > 1 else abs(winding[0])
    vec = np.array([w * p for w, p in zip(winding, chart.periods)])
    ell = float(np.linalg.norm(vec))
    base = tuple(base) if base is not None else (0.0,) * chart.dim
    return ClosedGeodesic(kind="torus_line", length=ell, primitive_period=ell / g,
                          iterate=g, chart=chart, winding=winding, base=base)


def hyperbolic_geodesic(group, word, iterate=1):
    word = cyclic_reduce(word)
    mat = group.word_matrix(word)
    ell = geodesic_length(mat)
    prim = ell
    if iterate > 1:
        mat = np.linalg.matrix_power(mat, iterate)
        ell = geodesic_length(mat)
    return ClosedGeodesic(kind="hyperbolic", length=ell, primitive_period=prim,
                          iterate=iterate, word=word, matrix=mat, group=group)


def poincare_det(geodesic):
    """|det(I - P_gamma)| for a geodesic on a curvature -1 surface."""
    if geodesic.kind != "hyperbolic":
        raise InvalidArgumentError("poincare_det requires a hyperbolic geodesic")
    val = geodesic.poincare_det
    if val < 1e-12:
        warnings.warn("orbit length near zero: Poincare determinant degenerates",
                      DegenerateLimitWarning)
    return val


def trace_invariant(geodesic, sub_integral, maslov=0):
    """Principal wave-trace coefficient of a nondegenerate closed orbit.

    c = |T#| exp(i sub_integral) exp(i maslov pi / 2) / |det(I - P)|^{1/2}.
    The modulus is independent of the subprincipal line integral.
    """
    det = geodesic.poincare_det
    if det is None or det <= 1e-14:
        raise DegenerateOrbitError("zero Poincare determinant")
    phase = np.exp(1j * (float(sub_integral) + maslov * np.pi / 2.0))
    return abs(geodesic.primitive_period) * phase / math.sqrt(det)


@dataclass
class LengthSpectrum:
    entries: list
    simple: bool
    min_gap: float
    cutoff: float
    meta: dict

    def lengths(self):
        return np.array([g.length for g in self.entries])

    def export_csv(self, path):
        with open(path, "w") as fh:
            fh.write("length,word,primitive_period,poincare_det,iterate\n")
            for g in self.entries:
                fh.write(f"{g.length:.17g},{g.word or ''},"
                         f"{g.primitive_period:.17g},{g.poincare_det:.17g},"
                         f"{g.iterate}\n")


def enumerate_closed_geodesics(group, l_max, word_budget=12, gap_tol=1e-9,
                               require_complete=True):
    """All closed geodesics (with iterates) of length <= l_max.

    Primitive conjugacy classes are collected level by level in word length;
    enumeration stops once two consecutive levels contribute no new class at
    or below the cutoff.  If the word budget runs out first an
    IncompleteEnumerationError carrying the achieved radius is raised.
    """
    if l_max <= 0:
        raise InvalidArgumentError("l_max must be positive")
    classes = {}
    empty_streak = 0
    complete = False
    last_new = []
    for level in range(1, word_budget + 1):
        new_this_level = []
        for word in _cyclically_reduced_words(level):
            canon = conjugacy_normal_form(word, group.relator)
            if canon is None or canon != word:
                continue
            if _is_cyclically_power(word):
                continue
            mat = group.word_matrix(word)
            tr = abs(float(np.trace(mat)))
            if tr <= 2.0:
                continue
            ell = 2.0 * float(np.arccosh(tr / 2.0))
            if ell <= l_max + 1e-12:
                classes[word] = hyperbolic_geodesic(group, word)
                new_this_level.append(ell)
        last_new = new_this_level
        if level >= 2 and not new_this_level:
            empty_streak += 1
            if empty_streak >= 2:
                complete = True
                break
        elif new_this_level:
            empty_streak = 0
    if not complete and require_complete:
        achieved = min(last_new) if last_new else l_max
        raise IncompleteEnumerationError(
            f"word budget {word_budget} reached before certifying cutoff {l_max}",
            achieved_radius=achieved)

    entries = list(classes.values())
    for prim in list(entries):
        m = 2
        while m * prim.primitive_period <= l_max + 1e-12:
            entries.append(hyperbolic_geodesic(group, prim.word, iterate=m))
            m += 1
    entries.sort(key=lambda g: g.length)
    lengths = np.array([g.length for g in entries])
    if len(lengths) >= 2:
        min_gap = float(np.min(np.diff(lengths)))
    else:
        min_gap = float("inf")
    return LengthSpectrum(entries=entries, simple=min_gap > gap_tol,
                          min_gap=min_gap, cutoff=l_max,
                          meta={"word_budget": word_budget,
                                "classes": len(classes),
                                "complete": complete})


def perturb_group_lengths(group, rng, scale=0.05):
    """Replace each generator by a fractional power; breaks the relator.

    Used as a generic-length-spectrum model; the result carries no relator,
    so enumeration falls back to free-group conjugacy moves.
    """
    gens = []
    for g in group.generators:
        t = 1.0 + scale * rng.uniform(-1.0, 1.0)
        w, v = np.linalg.eig(g)
        powed = (v * np.sign(w.real) * np.abs(w) ** t) @ np.linalg.inv(v)
        powed = powed.real
        powed /= math.sqrt(abs(np.linalg.det(powed)))
        gens.append(powed)
    return FuchsianGroup(tuple(gens), relator=None)


# ---------------------------------------------------------------------------
# axis parametrization and half-plane helpers
# ---------------------------------------------------------------------------

def mobius_point(m, z):
    return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])


def mobius_jacobian(m, z):
    """Complex derivative of the Mobius map (det 1)."""
    return 1.0 / (m[1, 0] * z + m[1, 1]) ** 2


def push_covector(m, z, xi):
    """Transform a covector at z under the Mobius map: xi' = J^{-T} xi."""
    dz = mobius_jacobian(m, z)
    a, b = dz.real, dz.imag
    jac = np.array([[a, -b], [b, a]])
    return np.linalg.solve(jac.T, np.asarray(xi, dtype=float))


def hyperbolic_distance(z, w):
    z, w = complex(z), complex(w)
    u = 1.0 + abs(z - w) ** 2 / (2.0 * z.imag * w.imag)
    return math.acosh(max(u, 1.0))


class AxisParametrization:
    """Unit-speed parametrization of the axis of a hyperbolic element.

    point(t) runs from the repelling to the attracting fixed point; the deck
    transformation shifts t by the translation length.
    """

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=float)
        if float(np.trace(m)) < 0:
            m = -m
        t = float(np.trace(m))
        if t <= 2.0:
            raise NotHyperbolicError("axis requires a hyperbolic element")
        self.matrix = m
        self.length = 2.0 * float(np.arccosh(t / 2.0))
        # a fixed point at infinity (vertical axis) is moved by a rotation
        pre = np.eye(2)
        work = m
        for angle in (0.0, 0.4, 0.9):
            rot = np.array([[math.cos(angle), -math.sin(angle)],
                            [math.sin(angle), math.cos(angle)]])
            work = rot.T @ m @ rot
            w, v = np.linalg.eig(work)
            order = np.argsort(w.real)
            vec_rep = v[:, order[0]].real
            vec_att = v[:, order[1]].real
            if abs(vec_rep[1]) > 1e-8 and abs(vec_att[1]) > 1e-8:
                pre = rot
                break
        else:
            raise InvalidArgumentError("could not regularize the axis endpoints")
        p_rep = self._fixed_from_vec(vec_rep)
        p_att = self._fixed_from_vec(vec_att)
        self.p_repelling, self.p_attracting = p_rep, p_att
        if p_att > p_rep:
            conj = np.array([[p_att, p_rep], [1.0, 1.0]])
        else:
            conj = np.array([[p_att, -p_rep], [1.0, -1.0]])
        conj = conj / math.sqrt(abs(np.linalg.det(conj)))
        self.conj = pre @ conj

    @staticmethod
    def _fixed_from_vec(vec):
        if abs(vec[1]) < 1e-14:
            return np.inf
        return float(vec[0] / vec[1])

    def _z(self, t):
        return mobius_point(self.conj, 1j * np.exp(np.asarray(t, dtype=float)))

    def point(self, t):
        z = self._z(t)
        return np.stack([np.real(z), np.imag(z)])

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        z0 = 1j * np.exp(t)
        dz = mobius_jacobian(self.conj, z0) * (1j * np.exp(t))
        return np.stack([np.real(dz), np.imag(dz)])

    def covector(self, t):
        v = self.velocity(t)
        y = self.point(t)[1]
        return v / y ** 2


# ---------------------------------------------------------------------------
# cogeodesic flow
# ---------------------------------------------------------------------------

@dataclass
class Orbit:
    chart: object
    ts: np.ndarray
    xs: np.ndarray          # (dim, n)
    xis: np.ndarray         # (dim, n)
    energy_drift: float
    period: float | None = None

    @property
    def closed(self):
        return self.period is not None

    def point(self, t):
        idx = np.searchsorted(self.ts, np.asarray(t, dtype=float))
        idx = np.clip(idx, 0, len(self.ts) - 1)
        return self.xs[:, idx]


def integrate_cogeodesic_flow(chart, x0, xi0, T, n_steps=None):
    """RK4 integration of the unit-speed cogeodesic flow on S*M.

    The Hamiltonian is p(x, xi) = |xi|_g^2; the half-Hamiltonian field is
    integrated and xi is renormalized to the cosphere after every step.  The
    maximal pre-renormalization drift of |xi|_g - 1 is reported.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    xi0 = np.asarray(xi0, dtype=float).copy()
    norm0 = _xi_norm(chart, x0, xi0)
    if abs(norm0 - 1.0) > 1e-10:
        raise InvalidArgumentError(f"initial covector not unit: |xi|_g = {norm0:.12f}")
    if n_steps is None:
        n_steps = max(256, int(64 * abs(T) * chart.resolution / 8))
    h = T / n_steps
    ts = np.linspace(0.0, T, n_steps + 1)
    xs = np.empty((chart.dim, n_steps + 1))
    xis = np.empty((chart.dim, n_steps + 1))
    xs[:, 0], xis[:, 0] = x0, xi0
    x, xi = x0, xi0
    drift = 0.0

    def rhs(x, xi):
        col = x[:, None]
        ginv = chart.metric_inv(col)[..., 0]
        dg = chart.dmetric(col)[..., 0]
        dginv = -np.einsum("jp,lpq,qk->ljk", ginv, dg, ginv)
        xdot = ginv @ xi
        xidot = -0.5 * np.einsum("ljk,j,k->l", dginv, xi, xi)
        return xdot, xidot

    for i in range(n_steps):
        if not chart.contains(x):
            raise FlowTruncationError(
                "orbit left the chart domain",
                Orbit(chart, ts[:i + 1], xs[:, :i + 1], xis[:, :i + 1], drift))
        k1x, k1p = rhs(x, xi)
        k2x, k2p = rhs(x + 0.5 * h * k1x, xi + 0.5 * h * k1p)
        k3x, k3p = rhs(x + 0.5 * h * k2x, xi + 0.5 * h * k2p)
        k4x, k4p = rhs(x + h * k3x, xi + h * k3p)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        xi = xi + (h / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
        norm = _xi_norm(chart, x, xi)
        drift = max(drift, abs(norm - 1.0))
        xi = xi / norm
        xs[:, i + 1], xis[:, i + 1] = x, xi
    return Orbit(chart, ts, xs, xis, drift)


def _xi_norm(chart, x, xi):
    ginv = chart.metric_inv(x[:, None])[..., 0]
    return float(np.sqrt(xi @ ginv @ xi))


# ---------------------------------------------------------------------------
# group balls and invariant one-forms with prescribed periods
# ---------------------------------------------------------------------------

class _MatrixSet:
    """Dedup set of SL(2, R) matrices modulo sign, robust to fp jitter.

    Matrices are bucketed on a coarse entry grid with neighbor probing so
    recomputations of the same element through different word paths always
    land in a probed bucket; candidate equality is then decided in group
    terms (m1 m2^{-1} = +-Id), which discreteness makes unambiguous even
    for large-norm matrices.
    """

    def __init__(self, scale=1e3, group_tol=1e-6):
        self.scale = scale
        self.tol = group_tol
        self.buckets = {}

    @staticmethod
    def _normalize(m):
        return m if m[0, 0] + m[1, 1] >= 0 else -m

    def _same_element(self, a, b):
        prod = a @ _inv2(b)
        return (abs(prod[0, 0] - 1) < self.tol and abs(prod[1, 1] - 1) < self.tol
                and abs(prod[0, 1]) < self.tol and abs(prod[1, 0]) < self.tol)

    def add_if_new(self, m):
        m = self._normalize(m)
        q = np.floor(m.ravel() * self.scale).astype(np.int64)
        for d0 in (-1, 0, 1):
            for d1 in (-1, 0, 1):
                for d2 in (-1, 0, 1):
                    for d3 in (-1, 0, 1):
                        key = (q[0] + d0, q[1] + d1, q[2] + d2, q[3] + d3)
                        for other in self.buckets.get(key, ()):
                            if self._same_element(other, m):
                                return False
        self.buckets.setdefault((q[0], q[1], q[2], q[3]), []).append(m.copy())
        return True


def group_ball(group, radius, base=1j):
    """All elements with displacement d(base, g base) <= radius (BFS).

    Returns a list of (word, matrix).  The BFS frontier is allowed one
    generator-step of slack beyond the radius so no element is missed.
    """
    gen_len = max(geodesic_length(g) for g in group.generators)
    slack = radius + gen_len + 0.1
    seen = _MatrixSet()
    seen.add_if_new(np.eye(2))
    members = [("", np.eye(2))]
    # breadth-first: elements are discovered through (near-)shortest words,
    # keeping matrix products short and accumulated roundoff negligible
    frontier = deque([("", np.eye(2))])
    while frontier:
        word, mat = frontier.popleft()
        for ch in ALPHABET:
            if word and word[-1] == ch.swapcase():
                continue
            m2 = mat @ group.letter_matrix(ch)
            z = mobius_point(m2.astype(complex), base)
            if hyperbolic_distance(base, z) > slack:
                continue
            if not seen.add_if_new(m2):
                continue
            members.append((word + ch, m2))
            frontier.append((word + ch, m2))
    out = []
    for word, mat in members:
        z = mobius_point(mat.astype(complex), base)
        if hyperbolic_distance(base, z) <= radius:
            out.append((word, mat))
    return out


class CharacterOneForm:
    """Closed invariant one-form on the surface with prescribed periods.

    Built from a partition of unity over the orbit of a base point: the
    primitive F satisfies F(g z) = F(z) + charge(g), so the differential is a
    closed group-invariant form whose period over the class of a word w is
    the pairing of the charge vector with the abelianization of w.
    """

    def __init__(self, group, charge, radius=8.0, support=3.0, base=1j):
        self.group = group
        self.charge = np.asarray(charge, dtype=float)
        self.support = float(support)
        ball = group_ball(group, radius, base)
        self.centers = np.array([mobius_point(m.astype(complex), base)
                                 for _, m in ball])
        self.values = np.array([float(self.charge @ abelianization(w))
                                for w, _ in ball])

    def _eta_terms(self, z):
        """eta(d(z, center)) and its gradient, vectorized over centers."""
        z = complex(z)
        dx = z.real - self.centers.real
        dy = z.imag - self.centers.imag
        yy = z.imag * self.centers.imag
        u = 1.0 + (dx ** 2 + dy ** 2) / (2.0 * yy)
        d = np.arccosh(np.maximum(u, 1.0))
        s = (d / self.support) ** 2
        inside = s < 1.0
        eta = np.zeros_like(d)
        eta[inside] = np.exp(-1.0 / (1.0 - s[inside]))
        # d eta / d(d^2) for the chain rule
        deta_dt = np.zeros_like(d)
        t = s[inside]
        deta_dt[inside] = eta[inside] * (-1.0 / (1.0 - t) ** 2) / self.support ** 2
        # d(d^2)/dz via d^2 = arccosh(u)^2: 2 arccosh(u)/sqrt(u^2-1) * du
        ratio = np.ones_like(d)
        big = u > 1.0 + 1e-10
        ratio[big] = d[big] / np.sqrt(u[big] ** 2 - 1.0)
        ratio[~big] = 1.0 - (u[~big] - 1.0) / 3.0
        du_dx = dx / yy
        du_dy = (2.0 * z.imag * dy - (dx ** 2 + dy ** 2)) / (2.0 * z.imag * yy)
        fac = 2.0 * ratio * deta_dt
        return eta, fac * du_dx, fac * du_dy

    def primitive(self, z):
        eta, _, _ = self._eta_terms(z)
        den = eta.sum()
        if den < 1e-12:
            raise ChartCoverageError("partition of unity not covering the point")
        return float((self.values * eta).sum() / den)

    def one_form(self, z):
        """(omega_x, omega_y) = dF at the point z."""
        eta, gx, gy = self._eta_terms(z)
        den = eta.sum()
        if den < 1e-12:
            raise ChartCoverageError("partition of unity not covering the point")
        num = (self.values * eta).sum()
        numx = (self.values * gx).sum()
        numy = (self.values * gy).sum()
        denx = gx.sum()
        deny = gy.sum()
        fx = (numx * den - num * denx) / den ** 2
        fy = (numy * den - num * deny) / den ** 2
        return np.array([fx, fy])


class ChartCoverageError(InvalidArgumentError):
    pass
