"""Horizontal and vertical foliations of a quadratic differential.

Leaves are integral curves of ``dz/dt = exp(i alpha) / sqrt(q(z))`` with
``alpha = 0`` (horizontal) or ``pi/2`` (vertical); ``t`` is flat length.
The square root is continued from step to step by nearest-branch
selection, which is safe because every step is clamped to a fraction of the
distance to the nearest zero or pole.

For rational differentials on the sphere with simple zeros and poles of
order >= 3, :func:`strip_decomposition` traces all separatrices and splits
the sphere into half-planes and horizontal strips.
"""

from __future__ import annotations

import cmath
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from folia._numerics import adaptive_gl, gauss_legendre, nearest_root, poly_taylor_shift, track_sqrt
from folia.qdiff import (
    INF,
    LaurentModel,
    PoleRef,
    QuadraticDifferential,
    RationalSphere,
    chart_apply,
    pole_ref_to_json,
    standard_chart,
)


class FoliationError(ValueError):
    pass


class SaddleConnectionError(FoliationError):
    """Raised when a separatrix runs into a zero; ``pairs`` lists the offenders."""

    def __init__(self, pairs, skeleton=None):
        self.pairs = list(pairs)
        self.skeleton = skeleton
        desc = ", ".join(f"zeros #{a} and #{b} (prong {k})" for a, k, b in self.pairs)
        super().__init__(f"non-generic: saddle connection between {desc}")


HORIZONTAL = "horizontal"
VERTICAL = "vertical"
_ALPHA = {HORIZONTAL: 0.0, VERTICAL: 0.5 * math.pi}

ZERO_HIT_FLAT = 1e-5  # flat distance at which a leaf is declared to hit a zero


# ---------------------------------------------------------------- geometry --

def _horner(coeffs_desc):
    def f(z):
        acc = 0j
        for c in coeffs_desc:
            acc = acc * z + c
        return acc
    return f


@dataclass
class _Singularity:
    loc: complex
    order: int       # > 0 zero order, < 0 pole order
    lead: complex    # q ~ lead * (z - loc)**order


class FlatGeometry:
    """Cached singular data of a differential used by the tracer."""

    def __init__(self, q: QuadraticDifferential):
        self.q = q
        if isinstance(q, RationalSphere):
            num = _horner(q.numerator[::-1])
            den = _horner(q.denominator[::-1])
            self.qs = lambda z: num(z) / den(z)
        else:
            self.qs = lambda z: complex(q(z))
        self.zeros: list[_Singularity] = []
        for p in q.zeros:
            if p.at_infinity:
                continue
            self.zeros.append(_Singularity(complex(p.location), p.order,
                                           _zero_lead(q, complex(p.location), p.order)))
        self.finite_poles: list[_Singularity] = []
        self.inf_order = 0
        self.inf_lead = 0j
        for p in q.poles:
            _, u = q.local_series(p.location, 1)
            if p.at_infinity:
                self.inf_order, self.inf_lead = p.order, complex(u[0])
            else:
                self.finite_poles.append(_Singularity(complex(p.location), -p.order, complex(u[0])))
        locs = [s.loc for s in self.zeros + self.finite_poles]
        self.sing = np.array(locs, dtype=complex)
        self.scale = max([1.0] + [abs(z) for z in locs])
        self.esc_radius = {}
        for p in q.poles:
            if p.order < 3:
                continue
            if p.at_infinity:
                self.esc_radius[INF] = 4.0 * self.scale
            else:
                others = [abs(z - p.location) for z in locs if z != complex(p.location)]
                self.esc_radius[complex(p.location)] = 1.0 / (0.25 * min([1.0] + others))
        self.horizon = 10.0 * self._zero_diameter()

    def pole_refs(self):
        return list(self.esc_radius)

    def pole_order(self, ref) -> int:
        if ref == INF:
            return self.inf_order
        for s in self.finite_poles:
            if s.loc == ref:
                return -s.order
        raise KeyError(ref)

    def chart_radius(self, ref, z):
        if ref == INF:
            return abs(z)
        return 1.0 / max(abs(z - ref), 1e-300)

    def chart_angle(self, ref, z):
        w = z if ref == INF else z - ref
        return math.atan2(w.imag, w.real) % (2 * math.pi)

    def end_directions(self, ref, alpha=0.0) -> np.ndarray:
        """Sorted asymptotic directions at a pole; labels are the indices."""
        n = self.pole_order(ref)
        if ref == INF:
            c = self.inf_lead
            th = [(2 * math.pi * k + 2 * alpha - cmath.phase(c)) / (n - 2) for k in range(n - 2)]
        else:
            c = next(s.lead for s in self.finite_poles if s.loc == ref)
            th = [(cmath.phase(c) - 2 * alpha + 2 * math.pi * k) / (n - 2) for k in range(n - 2)]
        return np.sort(np.mod(th, 2 * math.pi))

    def clamp(self, z) -> float:
        """Largest admissible Euclidean step from ``z``."""
        lim = math.inf
        for s in self.zeros:
            lim = min(lim, 0.25 * abs(z - s.loc))
        for s in self.finite_poles:
            lim = min(lim, 0.1 * abs(z - s.loc))
        # also bounds the phase change of sqrt(q) per step at a pole at infinity
        lim = min(lim, 0.1 * max(abs(z), self.scale))
        return lim

    def length_scale(self, z) -> float:
        s = max(1.0, abs(z))
        for p in self.finite_poles:
            s = min(s, abs(z - p.loc))
        return s

    def zero_flat_distance(self, k: int, z) -> float:
        s = self.zeros[k]
        m = s.order
        return 2.0 / (m + 2) * math.sqrt(abs(s.lead)) * abs(z - s.loc) ** (0.5 * (m + 2))

    def _zero_diameter(self) -> float:
        if len(self.zeros) < 2:
            return 1.0
        best = 0.0
        for i in range(len(self.zeros)):
            for j in range(i + 1, len(self.zeros)):
                try:
                    d = abs(integral_between_zeros(self, i, j))
                except FoliationError:
                    continue
                best = max(best, d)
        return best if best > 0 else 1.0


def _zero_lead(q, z0: complex, m: int) -> complex:
    if isinstance(q, RationalSphere):
        num = poly_taylor_shift(q.numerator, z0)
        den = complex(np.polynomial.polynomial.polyval(z0, q.denominator))
        return complex(num[m]) / den
    if isinstance(q, LaurentModel):
        s = poly_taylor_shift(q.shifted_sqrt_poly(), z0)
        return complex(s[m // 2]) ** 2 / z0**q.order
    eps = 1e-4 * max(1.0, abs(z0))
    vals = [q(z0 + eps * cmath.exp(1j * a)) / (eps * cmath.exp(1j * a)) ** m
            for a in np.linspace(0, 2 * math.pi, 8, endpoint=False)]
    return complex(np.mean(vals))


@lru_cache(maxsize=64)
def geometry(q: QuadraticDifferential) -> FlatGeometry:
    return FlatGeometry(q)


# -------------------------------------------------------------- integrals --

_GL_ORDER = 12


def _vec_q(geom: FlatGeometry, z: np.ndarray) -> np.ndarray:
    return np.asarray(geom.q(z), dtype=complex)


def chord_integral(geom: FlatGeometry, z0: complex, z1: complex, b0: complex):
    """``int sqrt(q) dz`` on the segment ``[z0, z1]``, branch ``b0`` at ``z0``.

    The segment is split so that each panel is short compared with its
    distance to the singular set.  Returns ``(integral, branch at z1)``.
    """
    total = 0j
    b = b0
    a = z0
    while True:
        rem = z1 - a
        lim = geom.clamp(a)
        if abs(rem) <= lim:
            piece, b = _panel(geom, a, z1, b)
            return total + piece, b
        nxt = a + rem / abs(rem) * lim
        piece, b = _panel(geom, a, nxt, b)
        total += piece
        a = nxt


def _panel(geom, z0, z1, b0):
    x, w = gauss_legendre(_GL_ORDER)
    dz = z1 - z0
    nodes = z0 + x * dz
    vals = _vec_q(geom, np.concatenate((nodes, [z1])))
    roots = np.sqrt(vals)
    ref = b0
    for i in range(len(roots)):
        r = roots[i]
        if abs(r - ref) > abs(r + ref):
            r = -r
        roots[i] = r
        ref = r
    return complex(np.dot(w, roots[:-1]) * dz), complex(roots[-1])


def integral_from_zero(geom: FlatGeometry, k: int, z1: complex, b1: Optional[complex] = None):
    """``int sqrt(q) dz`` from zero ``k`` to ``z1`` along a segment.

    Uses ``z = z0 + u**2 (z1 - z0)`` so the integrand is smooth at the zero.
    The branch is the one equal to ``b1`` at ``z1`` (principal if omitted).
    Returns ``(integral, branch at z1)``.
    """
    s = geom.zeros[k]
    m = s.order
    delta = z1 - s.loc
    if geom.clamp(s.loc + 0.5 * delta) <= 0 or not _segment_clear(geom, s.loc, z1, exclude=k):
        raise FoliationError("segment from zero passes through a singularity")
    x, w = gauss_legendre(2 * _GL_ORDER)
    u = x[::-1]  # track from the u = 1 end
    z = s.loc + u * u * delta
    h = _vec_q(geom, z) / u ** (2 * m)
    root_h = track_sqrt(h)
    b_end = root_h[0]  # u closest to 1; u**m ~ 1 there
    q1 = geom.qs(z1)
    r1 = cmath.sqrt(q1)
    ref = r1 if b1 is None else nearest_root(q1, b1)
    # align the tracked branch with the requested branch at z1
    if abs(b_end * u[0] ** m - ref) > abs(b_end * u[0] ** m + ref):
        root_h = -root_h
    vals = u**m * root_h * 2 * u * delta
    return complex(np.dot(w[::-1], vals)), ref


def _segment_clear(geom, a, b, exclude=None, frac=1e-9):
    for idx, s in enumerate(geom.zeros + geom.finite_poles):
        if idx == exclude:
            continue
        d = b - a
        t = 0.0 if d == 0 else max(0.0, min(1.0, ((s.loc - a) * d.conjugate()).real / abs(d) ** 2))
        if abs(a + t * d - s.loc) <= frac * max(1.0, abs(s.loc)):
            return False
    return True


def integral_between_zeros(geom: FlatGeometry, i: int, j: int) -> complex:
    """``int sqrt(q) dz`` along the straight segment between two zeros."""
    zi, zj = geom.zeros[i].loc, geom.zeros[j].loc
    mid = 0.5 * (zi + zj)
    if geom.clamp(mid) == 0:
        raise FoliationError("segment midpoint is singular")
    a, ba = integral_from_zero(geom, i, mid)
    b, _ = integral_from_zero(geom, j, mid, ba)
    return a - b


def path_integral(geom: FlatGeometry, points: Sequence[complex], b0: complex):
    """Integral along a polyline with continuous branch; returns ``(I, end branch)``."""
    total = 0j
    b = b0
    for a, c in zip(points[:-1], points[1:]):
        piece, b = chord_integral(geom, complex(a), complex(c), b)
        total += piece
    return total, b


def zero_to_zero_integral(q: QuadraticDifferential, points: Sequence[complex]) -> complex:
    """``int sqrt(q) dz`` along a polyline whose endpoints are zeros of ``q``.

    Interior vertices must avoid the singular set.  The first and last
    segments are integrated with the square-root substitution at the zero.
    """
    geom = geometry(q)
    pts = [complex(p) for p in points]
    if len(pts) < 3:
        pts = [pts[0], 0.5 * (pts[0] + pts[-1]), pts[-1]]

    def zero_index(z):
        for k, s in enumerate(geom.zeros):
            if abs(s.loc - z) <= 1e-9 * max(1.0, abs(z)):
                return k
        raise FoliationError(f"{z} is not a zero")

    ka, kb = zero_index(pts[0]), zero_index(pts[-1])
    first, b = integral_from_zero(geom, ka, pts[1])
    mid, b = path_integral(geom, pts[1:-1], b)
    last, _ = integral_from_zero(geom, kb, pts[-2], b)
    return first + mid - last


# ------------------------------------------------------------- trajectories --

@dataclass(frozen=True)
class Termination:
    kind: str                      # escaped_to_pole | hit_zero | max_length | closed
    ref: object = None             # pole reference or zero index
    label: Optional[int] = None    # asymptotic direction at the pole

    def to_json(self):
        ref = self.ref
        if self.kind == "escaped_to_pole":
            ref = pole_ref_to_json(ref)
        return {"kind": self.kind, "ref": ref, "label": self.label}


@dataclass
class Trajectory:
    points: np.ndarray             # complex samples
    kind: str
    termination: Termination
    natural_parameter: np.ndarray  # flat length from the start point
    flat: np.ndarray               # exp(-i alpha) * int sqrt(q) dz along the polyline
    branch: np.ndarray             # sqrt(q) branch used at each sample
    offset: float = 0.0            # flat length already covered before points[0]
    origin: Optional[tuple] = None  # (zero index, prong) for separatrices

    @property
    def length(self) -> float:
        return float(self.natural_parameter[-1])

    @property
    def drift(self) -> float:
        """Largest transverse drift ``|Im flat|`` along the trajectory."""
        return float(np.max(np.abs(self.flat.imag)))

    def to_json(self):
        return {"kind": self.kind,
                "termination": self.termination.to_json(),
                "origin": list(self.origin) if self.origin else None,
                "points": [[float(z.real), float(z.imag)] for z in self.points]}


@dataclass(frozen=True)
class TraceLimits:
    max_length: float = 1e8
    max_steps: int = 20000
    rtol: float = 1e-10
    atol: float = 1e-14
    monotone_steps: int = 100
    horizon: Optional[float] = None  # default: geometry horizon


# Dormand-Prince 5(4)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = _A[6] + (0.0,)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(a - b for a, b in zip(_B5, _B4))


def trace_trajectory(q: QuadraticDifferential, start: complex, kind: str = HORIZONTAL,
                     orientation: int = 1, limits: TraceLimits = TraceLimits(),
                     branch: Optional[complex] = None, *, _skip_zero: Optional[int] = None,
                     _offset: float = 0.0, _origin=None) -> Trajectory:
    """Trace the leaf of the given kind through ``start``.

    ``orientation`` selects the direction (the principal root of ``q(start)``
    is the positive branch).  ``branch`` overrides it with an explicit root.
    """
    if kind not in _ALPHA:
        raise ValueError(f"kind must be {HORIZONTAL!r} or {VERTICAL!r}")
    geom = geometry(q)
    start = complex(start)
    try:
        q0 = geom.qs(start)
    except ZeroDivisionError:
        q0 = complex("inf")
    if q0 == 0 or not np.isfinite(q0) or geom.clamp(start) <= 0:
        raise FoliationError("started at singularity")
    b = nearest_root(q0, branch) if branch is not None else cmath.sqrt(q0) * (1 if orientation >= 0 else -1)
    rot = cmath.exp(1j * _ALPHA[kind])
    horizon = geom.horizon if limits.horizon is None else limits.horizon
    qs = geom.qs

    def f(z, ref):
        return rot / nearest_root(qs(z), ref)

    z = start
    t = 0.0
    W = 0j
    pts, ts, Ws, bs = [z], [0.0], [0j], [b]
    k1 = f(z, b)
    v0 = k1
    h = 0.05 * geom.clamp(z) * abs(b)
    left_start = _skip_zero is None
    termination = None
    steps = 0
    while termination is None:
        if steps >= limits.max_steps or t >= limits.max_length:
            termination = Termination("max_length")
            break
        clamp = geom.clamp(z)
        h = min(h, clamp * abs(b))
        if h <= 1e-15 * max(1.0, t):
            k = _nearest_zero(geom, z)
            termination = Termination("hit_zero", k)
            break
        ks = [k1]
        for i in range(1, 7):
            zi = z + h * sum(a * kk for a, kk in zip(_A[i], ks))
            ks.append(f(zi, b))
        znew = z + h * sum(c * kk for c, kk in zip(_B5, ks))
        err = abs(h * sum(e * kk for e, kk in zip(_E, ks)))
        tol = limits.atol + limits.rtol * geom.length_scale(z)
        if err > tol or abs(znew - z) > 1.001 * clamp:
            h *= max(0.2, 0.9 * (tol / max(err, 1e-300)) ** 0.2) if err > tol else 0.5
            continue
        dW, bnew = chord_integral(geom, z, znew, b)
        steps += 1
        t += h
        W += dW / rot
        k_prev, h_acc = k1, h
        z, b, k1 = znew, bnew, ks[6]
        pts.append(z)
        ts.append(t)
        Ws.append(W)
        bs.append(b)
        h *= min(5.0, 0.9 * (tol / max(err, 1e-300)) ** 0.2)

        # termination checks
        for kz in range(len(geom.zeros)):
            d = geom.zero_flat_distance(kz, z)
            if kz == _skip_zero and not left_start:
                if d > 4 * max(_offset, ZERO_HIT_FLAT):
                    left_start = True
                continue
            if d < ZERO_HIT_FLAT:
                termination = Termination("hit_zero", kz)
                break
        if termination:
            break
        if not cmath.isfinite(z) or abs(z) > 1e150:
            # leaf leaves through a regular point at infinity
            termination = Termination("max_length")
            break
        if steps > 10 and _returns(start, v0, pts[-2], z, k_prev, k1, h_acc,
                                   1e-6 * geom.length_scale(start)):
            termination = Termination("closed")
            break
        if _offset + t >= horizon:
            termination = _escape_check(geom, pts, limits.monotone_steps, _ALPHA[kind])
    return Trajectory(np.array(pts), kind, termination, np.array(ts), np.array(Ws),
                      np.array(bs), _offset, _origin)


def _returns(p, v, a, b, da, db, h, tol):
    """Does the step ``a -> b`` cross the transversal through ``p`` close to ``p``?

    The step is interpolated by the cubic Hermite polynomial built from the
    endpoint derivatives, so chord sagitta does not mask a closed leaf.
    """
    u = v / abs(v)
    if not (((a - p) * u.conjugate()).real < 0 <= ((b - p) * u.conjugate()).real):
        return False
    s = np.linspace(0.0, 1.0, 33)
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    z = h00 * a + h10 * h * da + h01 * b + h11 * h * db
    sig = ((z - p) * u.conjugate()).real
    i = int(np.argmax(sig >= 0))
    if i == 0:
        return abs(z[0] - p) <= tol
    lam = -sig[i - 1] / (sig[i] - sig[i - 1])
    x = z[i - 1] + lam * (z[i] - z[i - 1])
    return abs(x - p) <= tol


def _nearest_zero(geom, z):
    if not geom.zeros:
        return None
    return int(np.argmin([abs(z - s.loc) for s in geom.zeros]))


def _angle_gap(a, b):
    d = (a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def _escape_check(geom, pts, window, alpha):
    z = pts[-1]
    for ref in geom.pole_refs():
        rho = geom.chart_radius(ref, z)
        if rho < geom.esc_radius[ref]:
            continue
        if len(pts) > window:
            tail = np.array([geom.chart_radius(ref, p) for p in pts[-window - 1:]])
            if np.any(np.diff(tail) < 0):
                continue
        elif len(pts) < 3:
            continue
        n = geom.pole_order(ref)
        dirs = geom.end_directions(ref, alpha)
        ang = geom.chart_angle(ref, z)
        gaps = [_angle_gap(ang, d) for d in dirs]
        k = int(np.argmin(gaps))
        if gaps[k] < math.pi / (4 * (n - 2)):
            return Termination("escaped_to_pole", ref, k)
    return None


# ---------------------------------------------------------------- measures --

@dataclass(frozen=True)
class Arc:
    """Parametrised curve ``gamma`` on ``[t0, t1]`` with derivative ``dgamma``."""

    gamma: Callable
    dgamma: Callable
    t0: float = 0.0
    t1: float = 1.0

    @classmethod
    def segment(cls, a: complex, b: complex) -> "Arc":
        a, b = complex(a), complex(b)
        return cls(lambda t: a + (b - a) * np.asarray(t), lambda t: (b - a) * np.ones_like(np.asarray(t, float)))

    @classmethod
    def circle(cls, center: complex, radius: float, theta0: float = 0.0,
               theta1: float = 2 * math.pi) -> "Arc":
        c = complex(center)
        return cls(lambda t: c + radius * np.exp(1j * np.asarray(t)),
                   lambda t: 1j * radius * np.exp(1j * np.asarray(t)), theta0, theta1)

    def reparametrized(self, phi: Callable, dphi: Callable, s0: float, s1: float) -> "Arc":
        """Same curve traced as ``gamma(phi(s))`` for ``s`` in ``[s0, s1]``."""
        g, dg = self.gamma, self.dgamma
        return Arc(lambda s: g(phi(s)), lambda s: dg(phi(s)) * dphi(s), s0, s1)


def _as_arcs(arc):
    if isinstance(arc, Arc):
        return [arc]
    return list(arc)


def transverse_measure(q: QuadraticDifferential, arc, chart=None, tol: float = 1e-12,
                       samples: int = 512) -> float:
    """``int |Im(sqrt(q(gamma)) gamma')| dt`` over an arc or a list of arcs.

    With ``chart`` the arc lives in that Moebius coordinate and ``q`` is
    transformed accordingly.  The integrand is split at its sign changes so
    every Gauss-Legendre panel sees a smooth function.
    """
    if chart is None:
        qfun = q

        def image(p):
            return None if p.at_infinity else complex(p.location)
    else:
        qfun = lambda w: q.in_chart(chart, w)  # noqa: E731

        def image(p):
            w = complex(chart_apply(chart, 1e300 if p.at_infinity else p.location))
            return w if np.isfinite(w) and abs(w) < 1e200 else None
    zeros = [w for w in map(image, q.zeros) if w is not None]
    poles = [w for w in map(image, q.poles) if w is not None]
    return sum(_arc_measure(qfun, a, zeros, poles, tol, samples) for a in _as_arcs(arc))


def _arc_measure(qfun, arc: Arc, zeros, poles, tol, samples):
    # zeros may sit at the arc's endpoints (the integrand still vanishes there)
    t = np.linspace(arc.t0, arc.t1, samples + 1)
    z = arc.gamma(t)
    for s in zeros + poles:
        tol_s = 1e-9 * max(1.0, abs(s))
        inner = z[1:-1] if s in zeros else z
        if inner.size and np.min(np.abs(inner - s)) <= tol_s:
            raise FoliationError("singular point on arc")
    dz = arc.dgamma(t)
    root = track_sqrt(qfun(z))
    g = (root * dz).imag
    if not np.all(np.isfinite(g)):
        raise FoliationError("singular point on arc")
    cuts = [arc.t0]
    for i in range(samples):
        if g[i] == 0.0 and 0 < i:
            cuts.append(t[i])
        elif g[i] * g[i + 1] < 0:
            ref = root[i]
            phi = lambda s, ref=ref: (nearest_root(complex(qfun(arc.gamma(s))), ref)  # noqa: E731
                                      * complex(arc.dgamma(s))).imag
            cuts.append(brentq(phi, t[i], t[i + 1], xtol=1e-15, rtol=1e-15))
    cuts.append(arc.t1)

    def integrand(s):
        return np.abs((np.sqrt(qfun(arc.gamma(s))) * arc.dgamma(s)).imag)

    scale = float(np.mean(np.abs(g))) * abs(arc.t1 - arc.t0)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a:
            total += adaptive_gl(integrand, a, b, tol=max(tol * scale, 1e-300) / len(cuts))
    return float(total)


@dataclass(frozen=True)
class DistinguishedPoints:
    pole: PoleRef
    radius: float
    angles: tuple
    arc_measures: tuple

    def alternating_sum(self) -> float:
        return float(sum((-1) ** j * m for j, m in enumerate(self.arc_measures)))


def distinguished_points(q: QuadraticDifferential, pole: PoleRef, radius: float,
                         samples: Optional[int] = None, tol: float = 1e-12) -> DistinguishedPoints:
    """Tangency points of the horizontal foliation with a chart circle at a pole.

    At ``w = r exp(i theta)`` the horizontal direction is tangent to the
    circle exactly when ``q(w) w**2`` is real and negative.
    """
    p = q.pole(pole)
    n = p.order
    if n < 3:
        raise FoliationError("distinguished points need pole order >= 3")
    chart = standard_chart(p.location)
    for zr in q.zeros:
        if zr.at_infinity:
            if not p.at_infinity:
                continue
            raise FoliationError("zeros inside disk")
        w = abs(complex(chart_apply(chart, zr.location)))
        if w <= radius * (1 + 1e-9):
            raise FoliationError("zeros inside disk")
    for pl in q.poles:
        if pl is p or pl.at_infinity:
            continue
        if abs(complex(chart_apply(chart, pl.location))) <= radius * (1 + 1e-9):
            raise FoliationError("another pole inside disk")

    def tangency(theta):
        w = radius * np.exp(1j * np.asarray(theta))
        return q.in_chart(chart, w) * w * w

    N = samples or max(2048, 64 * (n + 2))
    th = np.linspace(0.0, 2 * math.pi, N + 1)
    val = tangency(th)
    angles = []
    for i in range(N):
        a, b = val[i].imag, val[i + 1].imag
        if a == 0.0 and val[i].real < 0:
            angles.append(th[i])
        elif a * b < 0:
            r = brentq(lambda s: complex(tangency(s)).imag, th[i], th[i + 1], xtol=1e-15)
            if complex(tangency(r)).real < 0:
                angles.append(r)
    angles = sorted({round(a % (2 * math.pi), 13) for a in angles})
    if len(angles) != n - 2:
        raise FoliationError(f"tangency count {len(angles)} != n - 2 = {n - 2}")
    measures = []
    for j, a in enumerate(angles):
        b = angles[(j + 1) % len(angles)]
        if b <= a:
            b += 2 * math.pi
        measures.append(transverse_measure(q, Arc.circle(0j, radius, a, b), chart=chart, tol=tol))
    return DistinguishedPoints(p.location, float(radius), tuple(angles), tuple(measures))


def sink_radius(q: LaurentModel, fraction: float = 0.5) -> float:
    """A radius safely inside the zero-free disk of a Laurent model."""
    if not q.zeros:
        return 1.0
    return fraction * min(abs(z.location) for z in q.zeros)


def collapsing_value(a: complex, w: complex) -> float:
    """Local collapsing function ``Im(1/w**2 + a/w)`` of the normal-form model."""
    w = complex(w)
    if w == 0:
        raise FoliationError("collapsing map is undefined at w = 0")
    return (1 / (w * w) + complex(a) / w).imag


# ------------------------------------------------------------ separatrices --

def launch_separatrices(q: QuadraticDifferential, zero: int, limits: TraceLimits = TraceLimits(),
                        rho: Optional[float] = None) -> list[Trajectory]:
    """Trace the ``m + 2`` horizontal separatrices of zero ``zero`` in ccw order."""
    geom = geometry(q)
    s = geom.zeros[zero]
    m = s.order
    dist = min([abs(s.loc - o.loc) for o in geom.zeros + geom.finite_poles if o is not s] + [geom.scale])
    rho = 1e-3 * dist if rho is None else rho
    out = []
    for k in range(m + 2):
        theta = (2 * math.pi * k - cmath.phase(s.lead)) / (m + 2)
        z1, W, b1 = _refine_launch(geom, zero, theta, rho)
        tr = trace_trajectory(q, z1, HORIZONTAL, branch=b1, limits=limits,
                              _skip_zero=zero, _offset=W, _origin=(zero, k))
        out.append(tr)
    return out


def _launch_integral(geom, zero, theta, rho):
    s = geom.zeros[zero]
    m = s.order
    z1 = s.loc + rho * cmath.exp(1j * theta)
    # branch continuous in theta: sqrt(lead) * (rho e^{i theta})**(m/2)
    ref = cmath.sqrt(s.lead) * rho ** (0.5 * m) * cmath.exp(0.5j * m * theta)
    W, b1 = integral_from_zero(geom, zero, z1, ref)
    return z1, W, b1


def _refine_launch(geom, zero, theta, rho):
    m = geom.zeros[zero].order
    half = 0.5 * math.pi / (m + 2)
    g = lambda th: _launch_integral(geom, zero, th, rho)[1].imag  # noqa: E731
    th = brentq(g, theta - half, theta + half, xtol=1e-15, rtol=1e-15)
    z1, W, b1 = _launch_integral(geom, zero, th, rho)
    if W.real < 0:
        W, b1 = -W, -b1
    return z1, W.real, b1


# ------------------------------------------------------------ decomposition --

@dataclass
class HalfPlane:
    pole: PoleRef
    sector: int      # lies between directions sector and sector + 1
    zero: int        # boundary zero
    prongs: tuple    # bounding separatrices (prong indices at the zero)

    def to_json(self):
        return {"pole": pole_ref_to_json(self.pole), "sector": self.sector,
                "zero": self.zero, "prongs": list(self.prongs)}


@dataclass
class Strip:
    zeros: tuple              # boundary zero indices
    period: complex           # Im > 0
    width: float
    ends: tuple               # ((pole, label), (pole, label))
    transverse_arc: np.ndarray

    def to_json(self):
        return {"zeros": list(self.zeros),
                "period": [self.period.real, self.period.imag],
                "width": self.width,
                "ends": [[pole_ref_to_json(p), k] for p, k in self.ends],
                "transverse_arc": [[float(z.real), float(z.imag)] for z in self.transverse_arc]}


@dataclass
class FoliationSkeleton:
    zeros: tuple              # locations (complex, or INF)
    poles: tuple              # (location, order) pairs
    separatrices: list
    half_planes: list = field(default_factory=list)
    strips: list = field(default_factory=list)
    saddle_connections: list = field(default_factory=list)

    def euler_count(self) -> int:
        """Expected strip count ``-6 + sum(n_i + 1)`` for the sphere."""
        return strip_count_formula([n for _, n in self.poles])

    def to_json(self):
        return {"zeros": [pole_ref_to_json(z) for z in self.zeros],
                "poles": [{"at": pole_ref_to_json(p), "order": n} for p, n in self.poles],
                "half_planes": [h.to_json() for h in self.half_planes],
                "strips": [s.to_json() for s in self.strips],
                "saddle_connections": [list(s) for s in self.saddle_connections],
                "separatrices": [t.to_json() for t in self.separatrices]}


def strip_count_formula(pole_orders: Sequence[int], g: int = 0) -> int:
    return 6 * g - 6 + sum(n + 1 for n in pole_orders)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FOLIA_NUM_THREADS", "1")))
    except ValueError:
        return 1


def strip_decomposition(q: RationalSphere, limits: TraceLimits = TraceLimits(),
                        consistency_tol: float = 1e-6) -> FoliationSkeleton:
    """Half-plane and strip decomposition of a generic rational differential.

    Each zero sector (the region between two consecutive separatrices) is
    recorded by the ordered pair of pole ends of its bounding separatrices.
    A half-plane is a single sector whose ends are consecutive directions at
    one pole; a strip glues a sector ``(x, y)`` at one zero to a sector
    ``(y, x)`` at another.  Candidate strips are accepted only when the
    period computed through end ``x`` agrees with the one through end ``y``.

    When infinity is not a pole the work is done in the coordinate
    ``w = 1/(z - p)`` for a finite pole ``p`` and mapped back, since the
    tracer cannot follow leaves through a regular point at infinity.
    """
    if not isinstance(q, RationalSphere):
        raise FoliationError("strip decomposition needs a RationalSphere differential")
    if any(p.order < 3 for p in q.poles):
        raise FoliationError("pole orders must be >= 3")
    if any(p.at_infinity for p in q.poles):
        return _decompose(q, limits, consistency_tol)
    p = complex(q.poles[0].location)
    qw = RationalSphere(*q.chart_polynomials((0.0, 1.0, 1.0, -p)))
    try:
        sk = _decompose(qw, limits, consistency_tol)
    except SaddleConnectionError as err:
        raise SaddleConnectionError(err.pairs, _pull_back(err.skeleton, q, qw, p)) from None
    return _pull_back(sk, q, qw, p)


def _pull_back(sk: FoliationSkeleton, q, qw, p: complex) -> FoliationSkeleton:
    """Map a skeleton computed in ``w = 1/(z - p)`` back to ``z``."""
    gz, gw = geometry(q), geometry(qw)

    def zpt(w):
        w = np.asarray(w, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(w == 0, complex(np.inf), p + 1 / np.where(w == 0, 1, w))

    def ref_z(ref):
        return p if ref == INF else complex(p + 1 / ref)

    def end_z(ref, label):
        ang = gw.end_directions(ref)[label]
        if ref == INF:
            angz = -ang
        else:
            angz = math.pi + ang - 2 * cmath.phase(ref)
        rz = ref_z(ref)
        dirs = gz.end_directions(rz)
        return rz, int(np.argmin([_angle_gap(angz, d) for d in dirs]))

    seps = []
    by_origin = {}
    for tr in sk.separatrices:
        term = tr.termination
        if term.kind == "escaped_to_pole":
            term = Termination(term.kind, *end_z(term.ref, term.label))
        w = tr.points
        new = Trajectory(zpt(w), tr.kind, term, tr.natural_parameter, tr.flat,
                         tr.branch * (-w * w), tr.offset, tr.origin)
        seps.append(new)
        by_origin[tr.origin] = new
    halves = []
    for h in sk.half_planes:
        kb = by_origin[(h.zero, h.prongs[1])].termination.label
        halves.append(HalfPlane(ref_z(h.pole), kb, h.zero, h.prongs))
    strips = [Strip(s.zeros, s.period, s.width, tuple(end_z(*e) for e in s.ends),
                    zpt(s.transverse_arc)) for s in sk.strips]
    zeros = tuple(INF if z == 0 else complex(p + 1 / z) for z in sk.zeros)
    poles = tuple((ref_z(r), n) for r, n in sk.poles)
    return FoliationSkeleton(zeros, poles, seps, halves, strips, list(sk.saddle_connections))


def _decompose(q: RationalSphere, limits, consistency_tol) -> FoliationSkeleton:
    geom = geometry(q)
    zeros = tuple(s.loc for s in geom.zeros)
    workers = _workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            seps = list(ex.map(lambda k: launch_separatrices(q, k, limits), range(len(zeros))))
    else:
        seps = [launch_separatrices(q, k, limits) for k in range(len(zeros))]
    flat_seps = [t for group in seps for t in group]

    saddles = []
    for k, group in enumerate(seps):
        for j, tr in enumerate(group):
            if tr.termination.kind == "hit_zero":
                saddles.append((k, j, tr.termination.ref))
            elif tr.termination.kind != "escaped_to_pole":
                raise FoliationError(f"separatrix {k}/{j} did not escape: {tr.termination.kind}")
    poles = tuple((INF if p.at_infinity else complex(p.location), p.order) for p in q.poles)
    skeleton = FoliationSkeleton(zeros, poles, flat_seps, saddle_connections=saddles)
    if saddles:
        raise SaddleConnectionError(saddles, skeleton)

    def end(tr):
        return (tr.termination.ref, tr.termination.label)

    sectors = []  # (zero, prong_a, prong_b, end_a, end_b)
    for k, group in enumerate(seps):
        for j in range(len(group)):
            a, b = group[j], group[(j + 1) % len(group)]
            sectors.append((k, j, (j + 1) % len(group), end(a), end(b)))

    slots = []
    for p in q.poles:
        ref = INF if p.at_infinity else complex(p.location)
        for s in range(p.order - 2):
            slots.append((ref, s))

    def fits(sector, slot):
        ref, s = slot
        (pa, ka), (pb, kb) = sector[3], sector[4]
        if pa != ref or pb != ref:
            return False
        n = geom.pole_order(ref) - 2
        if ref == INF:
            return ka == s and kb == (s + 1) % n
        return kb == s and ka == (s + 1) % n

    period_cache = {}

    def strip_period(i, j):
        key = (i, j)
        if key not in period_cache:
            period_cache[key] = _pair_period(geom, seps, sectors[i], sectors[j], consistency_tol)
        return period_cache[key]

    def pair_up(free):
        if not free:
            return []
        i = free[0]
        x, y = sectors[i][3], sectors[i][4]
        for j in free[1:]:
            if sectors[j][3] == y and sectors[j][4] == x:
                per = strip_period(i, j)
                if per is None:
                    continue
                rest = pair_up([f for f in free if f not in (i, j)])
                if rest is not None:
                    return [(i, j, per)] + rest
        return None

    def assign(si, used):
        if si == len(slots):
            free = [i for i in range(len(sectors)) if i not in used]
            pairs = pair_up(free)
            return None if pairs is None else ([], pairs)
        for i, sec in enumerate(sectors):
            if i in used or not fits(sec, slots[si]):
                continue
            res = assign(si + 1, used | {i})
            if res is not None:
                return [(slots[si], i)] + res[0], res[1]
        return None

    found = assign(0, frozenset())
    if found is None:
        raise FoliationError("no consistent strip/half-plane assignment")
    halves, pairs = found
    for (ref, s), i in halves:
        sec = sectors[i]
        skeleton.half_planes.append(HalfPlane(ref, s, sec[0], (sec[1], sec[2])))
    for i, j, (per, arc) in pairs:
        si, sj = sectors[i], sectors[j]
        skeleton.strips.append(Strip((si[0], sj[0]), per, float(per.imag), (si[3], si[4]), arc))
    return skeleton


def _crossing(geom, tr, ref, alpha=0.0):
    """First sample beyond the escape radius that points along an end direction."""
    R = geom.esc_radius[ref]
    n = geom.pole_order(ref)
    dirs = geom.end_directions(ref, alpha)
    tol = math.pi / (4 * (n - 2))
    for i, z in enumerate(tr.points):
        if geom.chart_radius(ref, z) >= R:
            ang = geom.chart_angle(ref, z)
            if min(_angle_gap(ang, d) for d in dirs) < tol:
                return i
    return len(tr.points) - 1


def _period_via_end(geom, sa: Trajectory, sb: Trajectory):
    ref = sa.termination.ref
    ia, ib = _crossing(geom, sa, ref), _crossing(geom, sb, ref)
    pa, pb = complex(sa.points[ia]), complex(sb.points[ib])
    wa = sa.offset + complex(sa.flat[ia])
    wb = sb.offset + complex(sb.flat[ib])
    chord, b_end = chord_integral(geom, pa, pb, complex(sa.branch[ia]))
    bb = complex(sb.branch[ib])
    eps = 1.0 if abs(b_end - bb) <= abs(b_end + bb) else -1.0
    zero_a = geom.zeros[sa.origin[0]].loc
    zero_b = geom.zeros[sb.origin[0]].loc
    arc = np.concatenate(([zero_a], sa.points[: ia + 1], sb.points[ib::-1], [zero_b]))
    return wa + chord - eps * wb, arc


def _pair_period(geom, seps, sec_a, sec_b, tol):
    """Strip period for sectors ``(x, y)`` and ``(y, x)``, or ``None`` if inconsistent."""
    za, a0, a1 = sec_a[0], sec_a[1], sec_a[2]
    zb, b0, b1 = sec_b[0], sec_b[1], sec_b[2]
    px, arc = _period_via_end(geom, seps[za][a0], seps[zb][b1])
    py, _ = _period_via_end(geom, seps[za][a1], seps[zb][b0])
    scale = max(1.0, abs(px), abs(py))
    if min(abs(px - py), abs(px + py)) > tol * scale:
        return None
    if abs(px.imag) <= tol * scale:
        return None
    per = px if px.imag > 0 else -px
    return per, arc
