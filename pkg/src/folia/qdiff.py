"""Meromorphic quadratic differentials and their pole-local invariants.

Two concrete representations are supported:

``RationalSphere``
    ``q(z) dz^2`` with ``q = N/D`` a ratio of polynomials on the Riemann
    sphere.  Coefficients are stored in ascending order of degree.
``LaurentModel``
    A finite Laurent expansion of ``sqrt(q)`` about a pole at ``z = 0``.

Poles are referenced either by their complex location or by ``INF``.
Local work at a pole happens in a Moebius chart ``w = (a z + b)/(c z + d)``
vanishing at the pole; the standard chart is ``w = z - p`` for a finite pole
and ``w = 1/z`` at infinity.

Residue convention: the coefficient of ``w**-1`` in a branch of ``sqrt(q)``,
so the loop integral of ``sqrt(q)`` around the pole is ``2*pi*i`` times the
residue.  Both are defined only up to sign.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numpy.polynomial import polynomial as npoly

from folia._numerics import (
    series_div,
    series_sqrt,
    strip_low_zeros,
    track_sqrt,
)

INF = "inf"

PoleRef = Union[complex, str]
Chart = tuple  # (a, b, c, d) for w = (a z + b) / (c z + d)


class QDiffError(ValueError):
    """Domain error raised for ill-posed pole-local computations."""


# ------------------------------------------------------------------ types --

@dataclass(frozen=True)
class Point:
    """A zero or pole: location (complex or ``INF``) and positive order."""

    location: PoleRef
    order: int

    @property
    def at_infinity(self) -> bool:
        return isinstance(self.location, str)


def _trim(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=complex).ravel()
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        raise QDiffError("zero polynomial")
    return c[: nz[-1] + 1]


def _cluster_roots(coeffs, tol=1e-6):
    """Roots of an ascending-coefficient polynomial grouped by multiplicity."""
    c = _trim(coeffs)
    if len(c) == 1:
        return []
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        roots = np.roots(c[::-1])
    if not np.all(np.isfinite(roots)):
        raise QDiffError("coefficient underflow: roots are not representable")
    groups: list[list[complex]] = []
    for r in sorted(roots, key=lambda x: (round(x.real, 6), round(x.imag, 6))):
        for g in groups:
            m = np.mean(g)
            if abs(m - r) < tol * max(1.0, abs(m), abs(r)):
                g.append(r)
                break
        else:
            groups.append([r])
    out = []
    for g in groups:
        loc = complex(np.mean(g))
        # tidy tiny real/imag noise from the eigenvalue solver
        scale = max(1.0, abs(loc))
        if abs(loc.imag) < 1e-14 * scale:
            loc = complex(loc.real, 0.0)
        if abs(loc.real) < 1e-14 * scale:
            loc = complex(0.0, loc.imag)
        out.append(Point(loc, len(g)))
    return out


def standard_chart(pole: PoleRef) -> Chart:
    if isinstance(pole, str):
        if pole != INF:
            raise QDiffError(f"unknown pole reference {pole!r}")
        return (0.0, 1.0, 1.0, 0.0)
    return (1.0, -complex(pole), 0.0, 1.0)


def chart_apply(chart: Chart, z):
    a, b, c, d = chart
    z = np.asarray(z, dtype=complex)
    return (a * z + b) / (c * z + d)


def chart_inverse(chart: Chart, w):
    a, b, c, d = chart
    w = np.asarray(w, dtype=complex)
    return (d * w - b) / (-c * w + a)


def _same_pole(p: PoleRef, r: PoleRef, tol=1e-9) -> bool:
    if isinstance(p, str) or isinstance(r, str):
        return p == r
    return abs(complex(p) - complex(r)) <= tol * max(1.0, abs(complex(p)))


class QuadraticDifferential:
    """Common interface; see :class:`RationalSphere` and :class:`LaurentModel`."""

    zeros: tuple
    poles: tuple

    def __call__(self, z):
        raise NotImplementedError

    def pole(self, ref: PoleRef) -> Point:
        for p in self.poles:
            if _same_pole(p.location, ref):
                return p
        raise QDiffError(f"no pole at {ref!r}")

    def in_chart(self, chart: Chart, w):
        """Coefficient of ``dw^2`` at chart points ``w``."""
        a, b, c, d = chart
        w = np.asarray(w, dtype=complex)
        z = chart_inverse(chart, w)
        dzdw = (a * d - b * c) / (-c * w + a) ** 2
        return self(z) * dzdw**2

    def local_sqrt_series(self, pole: PoleRef, nterms: int, chart: Chart | None = None):
        """Pole order ``n`` and Taylor coefficients of ``sqrt(w**n q(w))``."""
        n, u = self.local_series(pole, nterms, chart)
        s = series_sqrt(u, nterms)
        if not np.all(np.isfinite(s)):
            raise QDiffError("insufficient expansion order: coefficients overflowed")
        return n, s


@dataclass(frozen=True, eq=False)
class RationalSphere(QuadraticDifferential):
    """``q(z) dz^2`` with ``q = numerator/denominator`` (ascending coefficients)."""

    numerator: tuple
    denominator: tuple = (1.0,)
    zeros: tuple = field(init=False)
    poles: tuple = field(init=False)

    def __post_init__(self):
        num = _trim(self.numerator)
        den = _trim(self.denominator)
        object.__setattr__(self, "numerator", tuple(complex(c) for c in num))
        object.__setattr__(self, "denominator", tuple(complex(c) for c in den))
        zeros = _cluster_roots(num)
        poles = _cluster_roots(den)
        for zr in zeros:
            for pl in poles:
                if abs(zr.location - pl.location) < 1e-9 * max(1.0, abs(pl.location)):
                    raise QDiffError("numerator and denominator share a root")
        inf_order = 4 + (len(num) - 1) - (len(den) - 1)
        if inf_order > 0:
            poles.append(Point(INF, inf_order))
        elif inf_order < 0:
            zeros.append(Point(INF, -inf_order))
        object.__setattr__(self, "zeros", tuple(zeros))
        object.__setattr__(self, "poles", tuple(poles))
        deg = sum(p.order for p in zeros) - sum(p.order for p in poles)
        assert deg == -4, "degree bookkeeping violated"

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return npoly.polyval(z, self.numerator) / npoly.polyval(z, self.denominator)

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        n = np.asarray(self.numerator)
        d = np.asarray(self.denominator)
        nv, dv = npoly.polyval(z, n), npoly.polyval(z, d)
        dn = npoly.polyval(z, npoly.polyder(n)) if len(n) > 1 else 0.0
        dd = npoly.polyval(z, npoly.polyder(d)) if len(d) > 1 else 0.0
        return (dn * dv - nv * dd) / dv**2

    @property
    def finite_zeros(self):
        return tuple(p for p in self.zeros if not p.at_infinity)

    @property
    def finite_poles(self):
        return tuple(p for p in self.poles if not p.at_infinity)

    def chart_polynomials(self, chart: Chart):
        """Numerator and denominator (ascending in ``w``) of ``q`` in ``chart``."""
        a, b, c, d = (complex(x) for x in chart)
        det = a * d - b * c
        if det == 0:
            raise QDiffError("degenerate Moebius chart")
        alpha = np.array([-b, d])     # d w - b
        beta = np.array([a, -c])      # -c w + a

        def compose(poly):
            deg = len(poly) - 1
            out = np.zeros(1, dtype=complex)
            for k, ck in enumerate(poly):
                term = npoly.polymul(npoly.polypow(alpha, k), npoly.polypow(beta, deg - k))
                out = npoly.polyadd(out, ck * term)
            return out

        num = compose(self.numerator) * det**2
        den = compose(self.denominator)
        e = (len(self.denominator) - 1) - (len(self.numerator) - 1) - 4
        if e >= 0:
            num = npoly.polymul(num, npoly.polypow(beta, e))
        else:
            den = npoly.polymul(den, npoly.polypow(beta, -e))
        return np.asarray(num, dtype=complex), np.asarray(den, dtype=complex)

    def local_series(self, pole: PoleRef, nterms: int, chart: Chart | None = None):
        p = self.pole(pole)
        chart = standard_chart(p.location) if chart is None else chart
        w0 = chart_apply(chart, complex(1e300) if p.at_infinity else p.location)
        if not p.at_infinity and abs(complex(w0)) > 1e-9:
            raise QDiffError("chart does not vanish at the pole")
        num, den = self.chart_polynomials(chart)
        vn, num = strip_low_zeros(num)
        vd, den = strip_low_zeros(den)
        if vn > 0 and vd == 0:
            raise QDiffError("zero at pole")
        n = vd - vn
        if n != p.order:
            raise QDiffError(f"chart pole order {n} disagrees with pole order {p.order}")
        return n, series_div(num, den, nterms)


@dataclass(frozen=True, eq=False)
class LaurentModel(QuadraticDifferential):
    """Finite Laurent model ``sqrt(q) = sum_k c_k z**k`` about a pole at 0.

    ``sqrt_coeffs`` maps exponents ``k`` (integers or half-integers, all
    congruent to ``-order/2`` mod 1) to coefficients.  The lowest exponent
    must be ``-order/2`` with nonzero coefficient.
    """

    order: int
    sqrt_coeffs: tuple  # sorted ((exponent: Fraction, coefficient: complex), ...)
    zeros: tuple = field(init=False)
    poles: tuple = field(init=False)

    def __post_init__(self):
        n = int(self.order)
        if n < 2:
            raise QDiffError("pole order < 2")
        items = dict(self.sqrt_coeffs) if not isinstance(self.sqrt_coeffs, dict) else self.sqrt_coeffs
        coeffs = {}
        lead = Fraction(-n, 2)
        for k, c in items.items():
            k = Fraction(k).limit_denominator(2)
            if (k - lead).denominator != 1 or k < lead:
                raise QDiffError(f"exponent {k} incompatible with pole order {n}")
            if complex(c) != 0:
                coeffs[k] = coeffs.get(k, 0) + complex(c)
        if coeffs.get(lead, 0) == 0:
            raise QDiffError("leading coefficient of sqrt(q) must be nonzero")
        object.__setattr__(self, "order", n)
        object.__setattr__(self, "sqrt_coeffs", tuple(sorted(coeffs.items())))
        s = self.shifted_sqrt_poly()
        zeros = [Point(p.location, 2 * p.order) for p in _cluster_roots(s)]
        object.__setattr__(self, "zeros", tuple(zeros))
        object.__setattr__(self, "poles", (Point(0j, n),))

    @classmethod
    def normal_form(cls, n: int, a: complex = 0.0) -> "LaurentModel":
        """Strebel normal form: ``z**(-n/2)`` (odd n) or ``z**(-n/2) + a/z`` (even n)."""
        if n % 2:
            return cls(n, ((Fraction(-n, 2), 1.0),))
        terms = {Fraction(-n, 2): 1.0}
        if a != 0:
            terms[Fraction(-1)] = terms.get(Fraction(-1), 0) + complex(a)
        return cls(n, tuple(terms.items()))

    def shifted_sqrt_poly(self) -> np.ndarray:
        """Ascending coefficients of ``z**(n/2) sqrt(q)`` (a polynomial)."""
        lead = Fraction(-self.order, 2)
        deg = int(max(k for k, _ in self.sqrt_coeffs) - lead)
        s = np.zeros(deg + 1, dtype=complex)
        for k, c in self.sqrt_coeffs:
            s[int(k - lead)] += c
        return s

    def sqrt(self, z):
        """A branch of ``sqrt(q)``; principal ``z**(1/2)`` for odd order."""
        z = np.asarray(z, dtype=complex)
        s = npoly.polyval(z, self.shifted_sqrt_poly())
        half = self.order // 2
        out = s / z**half
        if self.order % 2:
            out = out / np.sqrt(z)
        return out

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        s = npoly.polyval(z, self.shifted_sqrt_poly())
        return s * s / z**self.order

    def local_series(self, pole: PoleRef, nterms: int, chart: Chart | None = None):
        if not _same_pole(pole, 0j):
            raise QDiffError("a LaurentModel has its pole at 0")
        if chart is not None and not np.allclose(chart, standard_chart(0j)):
            raise QDiffError("LaurentModel supports only its own coordinate")
        s = self.shifted_sqrt_poly()
        u = np.convolve(s, s)
        out = np.zeros(nterms, dtype=complex)
        out[: min(nterms, len(u))] = u[:nterms]
        return self.order, out

    def local_sqrt_series(self, pole: PoleRef, nterms: int, chart: Chart | None = None):
        self.local_series(pole, 1, chart)  # validates pole and chart
        s = self.shifted_sqrt_poly()
        out = np.zeros(nterms, dtype=complex)
        out[: min(nterms, len(s))] = s[:nterms]
        return self.order, out


# --------------------------------------------------------- invariants ----

@dataclass(frozen=True)
class Residue:
    """Residue of ``sqrt(q)``, defined up to sign."""

    value: complex

    def canonical(self) -> complex:
        """Sign representative used for serialisation: Re > 0, else Im >= 0."""
        v = complex(self.value)
        if v.real < 0 or (v.real == 0 and v.imag < 0):
            v = -v
        return v + 0.0  # normalise -0.0

    def isclose(self, other, tol=1e-9) -> bool:
        o = complex(other.value if isinstance(other, Residue) else other)
        v = complex(self.value)
        scale = max(abs(v), abs(o), 1e-300)
        return min(abs(v - o), abs(v + o)) <= tol * max(scale, 1.0)

    def __eq__(self, other):
        if not isinstance(other, Residue):
            return NotImplemented
        return self.value == other.value or self.value == -other.value

    def __hash__(self):
        return hash(self.canonical())


@dataclass(frozen=True, eq=False)
class PrincipalPart:
    """Polynomial ``P`` of the expansion of ``sqrt(q)`` at a pole, up to sign."""

    pole_order: int
    coefficients: tuple
    sign_class: bool = True  # P and -P are identified

    def __post_init__(self):
        n = int(self.pole_order)
        if n < 3:
            raise QDiffError("principal parts are defined for pole order >= 3")
        coeffs = tuple(complex(c) for c in self.coefficients)
        if len(coeffs) != principal_degree(n) + 1:
            raise QDiffError(
                f"order {n} needs a degree {principal_degree(n)} polynomial, got {len(coeffs) - 1}")
        if coeffs[0] == 0:
            raise QDiffError("constant term of a principal part must be nonzero")
        object.__setattr__(self, "pole_order", n)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def residue(self) -> Residue:
        if self.pole_order % 2:
            return Residue(0j)
        return Residue(self.coefficients[-1])

    def __neg__(self):
        return PrincipalPart(self.pole_order, tuple(-c for c in self.coefficients))

    def __eq__(self, other):
        if not isinstance(other, PrincipalPart):
            return NotImplemented
        if self.pole_order != other.pole_order:
            return False
        a, b = self.coefficients, other.coefficients
        return a == b or a == tuple(-c for c in b)

    def __hash__(self):
        c = self.coefficients
        if c[0].real < 0 or (c[0].real == 0 and c[0].imag < 0):
            c = tuple(-x for x in c)
        return hash((self.pole_order, c))

    def isclose(self, other: "PrincipalPart", tol=1e-9) -> bool:
        if self.pole_order != other.pole_order:
            return False
        a = np.array(self.coefficients)
        b = np.array(other.coefficients)
        scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
        return min(np.max(np.abs(a - b)), np.max(np.abs(a + b))) <= tol * scale


def principal_degree(n: int) -> int:
    """Degree of the principal part at a pole of order ``n``."""
    return (n - 2) // 2 if n % 2 == 0 else (n - 3) // 2


# --------------------------------------------------------- operations ----

def residue(q: QuadraticDifferential, pole: PoleRef, method: str = "series",
            radius: float | None = None, npts: int = 4096) -> Residue:
    """Residue of ``sqrt(q)`` at ``pole``.

    ``method="series"`` reads the ``w**-1`` coefficient off the truncated
    Laurent expansion; ``method="contour"`` integrates ``sqrt(q)`` around a
    circle of the given chart radius with continuous branch tracking.
    Odd-order poles return exactly zero.
    """
    n = q.pole(pole).order
    if n < 2:
        raise QDiffError("pole order < 2")
    if n % 2:
        return Residue(0j)
    if method == "series":
        _, s = q.local_sqrt_series(pole, n // 2)
        return Residue(complex(s[n // 2 - 1]))
    if method == "contour":
        if radius is None:
            radius = default_radius(q, pole)
        return Residue(loop_integral(q, pole, radius, npts) / (2j * math.pi))
    raise ValueError(f"unknown method {method!r}")


def default_radius(q: QuadraticDifferential, pole: PoleRef, fraction: float = 0.5) -> float:
    """Chart radius at ``fraction`` of the distance to the nearest other singularity."""
    chart = standard_chart(q.pole(pole).location)
    dists = []
    for p in tuple(q.zeros) + tuple(q.poles):
        if _same_pole(p.location, pole):
            continue
        if isinstance(p.location, str):
            continue  # infinity maps far from a finite pole in the z - p chart
        w = complex(chart_apply(chart, p.location))
        dists.append(abs(w))
    return fraction * min(dists) if dists else 1.0


def loop_integral(q: QuadraticDifferential, pole: PoleRef, radius: float,
                  npts: int = 4096) -> complex:
    """Counter-clockwise chart-circle integral of ``sqrt(q)`` about ``pole``.

    The branch is seeded by the principal root at ``theta = 0`` and continued
    along the circle; the trapezoid rule is spectrally accurate for this
    periodic analytic integrand.
    """
    p = q.pole(pole)
    chart = standard_chart(p.location)
    for zr in q.zeros:
        if zr.at_infinity:
            continue
        w = abs(complex(chart_apply(chart, zr.location)))
        if abs(w - radius) <= 1e-6 * radius:
            raise QDiffError("zero on contour: shrink the radius")
    theta = 2 * math.pi * np.arange(npts + 1) / npts
    w = radius * np.exp(1j * theta)
    qw = q.in_chart(chart, w)
    # oversample until consecutive roots are unambiguous
    root = track_sqrt(qw)
    if abs(root[-1] - root[0]) > abs(root[-1] + root[0]):
        raise QDiffError("sqrt(q) is not single-valued on the contour (zeros enclosed?)")
    integrand = root[:-1] * 1j * w[:-1]
    return complex(np.sum(integrand) * (2 * math.pi / npts))


def principal_part(q: QuadraticDifferential, pole: PoleRef,
                   chart: Chart | None = None) -> PrincipalPart:
    """Principal part of ``sqrt(q)`` at ``pole`` in the given Moebius chart."""
    n = q.pole(pole).order
    if n < 3:
        raise QDiffError("principal part needs pole order >= 3")
    deg = principal_degree(n)
    # two extra terms as a guard against silent truncation
    n_chart, s = q.local_sqrt_series(pole, deg + 3, chart)
    if n_chart != n:
        raise QDiffError("chart disagrees with pole order")
    if not np.all(np.isfinite(s[: deg + 1])):
        raise QDiffError("insufficient expansion order")
    if s[0] == 0:
        raise QDiffError("zero at pole")
    return PrincipalPart(n, tuple(complex(c) for c in s[: deg + 1]))


def check_compatibility(P: PrincipalPart, local_params: Sequence[float],
                        tol: float = 1e-2) -> tuple[bool, float]:
    """Alternating-sum compatibility of transverse measures with ``Re(residue)``.

    ``local_params`` are the transverse measures of the ``n - 2``
    distinguished arcs in cyclic order.  For even ``n`` the residual is
    ``| sum_j (-1)**j mu_j - 2 pi Re(a) |`` minimised over the sign and
    starting-arc ambiguity; compatibility means the residual is within
    ``tol`` relative to the larger of ``2 pi |Re a|`` and the largest
    measure.  Odd orders are always compatible.
    """
    n = P.pole_order
    mu = np.asarray(local_params, dtype=float)
    if mu.shape != (n - 2,):
        raise QDiffError(f"expected {n - 2} local parameters, got {mu.size}")
    if np.any(mu < 0):
        raise QDiffError("transverse measures are nonnegative")
    if n % 2:
        return True, 0.0
    signs = (-1.0) ** np.arange(1, n - 1)
    alt = float(np.dot(signs, mu))
    target = 2 * math.pi * complex(P.residue.value).real
    residual = min(abs(alt - target), abs(-alt - target))
    scale = max(abs(target), float(mu.max(initial=0.0)))
    return residual <= tol * scale + 1e-12, residual


def compat_space_dimension(pole_orders: Sequence[int]) -> int:
    """Real dimension of the compatible principal parts, ``sum(n_i - 1)``."""
    orders = list(pole_orders)
    if not orders:
        raise QDiffError("empty pole order list")
    if any(n < 3 for n in orders):
        raise QDiffError("pole orders must be >= 3")
    return sum(n - 1 for n in orders)


def total_parameter_count(g: int, pole_orders: Sequence[int]) -> int:
    """Foliation plus principal-part parameters, ``6g - 6 + 2 sum(n_i)``."""
    compat_space_dimension(pole_orders)
    return 6 * g - 6 + 2 * sum(pole_orders)


# ------------------------------------------------------- serialisation ----

def _cpx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _pair(c: complex) -> list:
    return [float(complex(c).real), float(complex(c).imag)]


def pole_ref_from_json(v) -> PoleRef:
    return INF if v == INF else _cpx(v)


def pole_ref_to_json(ref: PoleRef):
    return INF if isinstance(ref, str) else _pair(ref)


def from_manifest(data) -> QuadraticDifferential:
    """Build a differential from a manifest dict or a path to a JSON file.

    Rational form: ``{"numerator": [[re, im], ...], "denominator": [...],
    "poles": [{"at": "inf" | [re, im], "order": n}, ...]}`` with ascending
    coefficients; the optional pole list is checked against the computed
    one.  Laurent form: ``{"order": n, "sqrt_coeffs": [[k, re, im], ...]}``.
    Normal form: ``{"normal_form": {"n": n, "a": [re, im]}}``.
    """
    if isinstance(data, (str, Path)):
        data = json.loads(Path(data).read_text(encoding="utf-8"))
    if "normal_form" in data:
        nf = data["normal_form"]
        return LaurentModel.normal_form(int(nf["n"]), _cpx(nf.get("a", 0.0)))
    if "sqrt_coeffs" in data:
        terms = {}
        for k, re, im in data["sqrt_coeffs"]:
            key = Fraction(k).limit_denominator(2)
            terms[key] = terms.get(key, 0) + complex(re, im)
        return LaurentModel(int(data["order"]), tuple(terms.items()))
    q = RationalSphere(tuple(_cpx(c) for c in data["numerator"]),
                       tuple(_cpx(c) for c in data.get("denominator", [[1.0, 0.0]])))
    for entry in data.get("poles", []):
        ref = pole_ref_from_json(entry["at"])
        if q.pole(ref).order != int(entry["order"]):
            raise QDiffError(f"declared pole order {entry['order']} at {entry['at']} "
                             f"disagrees with computed {q.pole(ref).order}")
    return q


def to_manifest(q: QuadraticDifferential) -> dict:
    if isinstance(q, LaurentModel):
        return {"order": q.order,
                "sqrt_coeffs": [[float(k), c.real, c.imag] for k, c in q.sqrt_coeffs]}
    return {"numerator": [_pair(c) for c in q.numerator],
            "denominator": [_pair(c) for c in q.denominator],
            "poles": [{"at": pole_ref_to_json(p.location), "order": p.order} for p in q.poles]}
