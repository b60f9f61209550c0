import cmath
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from folia.qdiff import (
    INF,
    LaurentModel,
    PrincipalPart,
    QDiffError,
    RationalSphere,
    Residue,
    check_compatibility,
    compat_space_dimension,
    from_manifest,
    loop_integral,
    principal_degree,
    principal_part,
    residue,
    to_manifest,
    total_parameter_count,
)

finite = st.floats(-2, 2, allow_nan=False)
cplx = st.builds(complex, finite, finite)


def poly(*coeffs):
    return RationalSphere(tuple(complex(c) for c in coeffs), (1.0,))


# residues

def test_normal_form_even_residue():
    q = LaurentModel.normal_form(6, 0.3 + 0.1j)
    assert residue(q, 0j).isclose(0.3 + 0.1j)
    assert residue(q, 0j, "contour", radius=0.5).isclose(0.3 + 0.1j, tol=1e-10)


def test_normal_form_odd_residue_is_zero():
    assert residue(LaurentModel.normal_form(5), 0j).value == 0


def test_residue_at_infinity_of_z2_minus_1():
    q = poly(-1, 0, 1)
    assert q.pole(INF).order == 6
    r = residue(q, INF)
    assert r.isclose(0.5)
    assert residue(q, INF, "contour", radius=0.1).isclose(0.5, tol=1e-10)


def test_residue_frozen_series_oracles():
    # sqrt(w**4 p(1/w)) = 1 + w - w**2/2 + 2 w**3 + ..., so the w**-1 term of sqrt(q_w) is 2
    q = poly(1, 3, 0, 2, 1)
    assert q.pole(INF).order == 8
    assert residue(q, INF).isclose(2.0)
    assert residue(q, INF, "contour", radius=0.2).isclose(2.0, tol=1e-9)
    # (z + 2)/z**4 at 0: sqrt(2 + z) = sqrt2 + sqrt2 z/4 + ...
    q2 = RationalSphere((2, 1), (0, 0, 0, 0, 1))
    assert residue(q2, 0j).isclose(math.sqrt(2) / 4)
    assert residue(q2, 0j, "contour", radius=0.5).isclose(math.sqrt(2) / 4, tol=1e-9)


def test_residue_sign_convention():
    assert Residue(-0.5) == Residue(0.5)
    assert Residue(-0.5 - 1j).canonical() == 0.5 + 1j
    assert Residue(-2j).canonical() == 2j


@given(st.sampled_from([3, 5, 7, 9]), cplx)
def test_odd_order_residue_exactly_zero(n, c):
    q = LaurentModel(n, {-n / 2: 1.0, -n / 2 + 1: c, -0.5: c})
    assert residue(q, 0j).value == 0
    assert residue(q, 0j, "contour").value == 0


residues = st.builds(cmath.rect, st.floats(0.05, 1.0), st.floats(-math.pi, math.pi))


@given(st.sampled_from([4, 6, 8]), residues, cplx)
def test_loop_integral_matches_series_residue(n, a, b):
    q = LaurentModel(n, {-n // 2: 1.0, -n // 2 + 1: b, -1: a})
    r = residue(q, 0j)
    assert r.isclose(a, tol=1e-12)
    rad = 0.5 * min([abs(z.location) for z in q.zeros] + [1.0])
    I = loop_integral(q, 0j, rad)
    assert abs(abs(I) - 2 * math.pi * abs(a)) <= 1e-8 * max(1, abs(I))


def test_residue_errors():
    q = RationalSphere((1,), (0, 1))  # order-1 pole at 0
    with pytest.raises(QDiffError, match="pole order < 2"):
        residue(q, 0j)
    q2 = RationalSphere((-0.25, 0, 1), (0, 0, 0, 0, 1))  # zeros at +-1/2, order-4 pole at 0
    with pytest.raises(QDiffError, match="zero on contour"):
        residue(q2, 0j, "contour", radius=0.5)


# principal parts

@pytest.mark.parametrize("n", [4, 6, 8, 10])
def test_principal_part_even_normal_form(n):
    a = 0.3 - 0.2j
    P = principal_part(LaurentModel.normal_form(n, a), 0j)
    expected = [1.0] + [0.0] * ((n - 2) // 2 - 1) + [a]
    assert P.degree == principal_degree(n) == (n - 2) // 2
    assert np.allclose(P.coefficients, expected, atol=1e-14)
    assert P.residue.isclose(a)


@pytest.mark.parametrize("n", [3, 5, 7])
def test_principal_part_odd_normal_form(n):
    P = principal_part(LaurentModel.normal_form(n), 0j)
    assert np.allclose(P.coefficients, [1.0] + [0.0] * principal_degree(n))


def test_principal_part_at_infinity_against_circle_fit():
    q = poly(-1, 0, 1)
    P = principal_part(q, INF)
    assert np.allclose(P.coefficients, [1, 0, -0.5], atol=1e-14)
    # numeric Taylor fit of w**3 sqrt(q_w) on a small circle
    N, r = 64, 0.1
    w = r * np.exp(2j * np.pi * np.arange(N) / N)
    vals = np.sqrt(1 - w**2)  # w**3 sqrt((1 - w**2)/w**6), principal branch is analytic here
    fit = np.fft.fft(vals) / N / r ** np.arange(N)
    assert np.allclose(fit[:3], P.coefficients, atol=1e-10)


def test_principal_part_sign_class():
    P = principal_part(poly(1, 3, 0, 2, 1), INF)
    assert -P == P
    assert (-P).isclose(P)
    assert P.residue == (-P).residue
    assert PrincipalPart(6, (1, 0, 0.5)) != PrincipalPart(6, (1, 0, 0.25))


def test_principal_part_errors():
    with pytest.raises(QDiffError):
        PrincipalPart(6, (0, 1, 2))  # zero constant term
    with pytest.raises(QDiffError):
        PrincipalPart(6, (1, 2))  # wrong degree
    with pytest.raises(QDiffError):
        principal_part(RationalSphere((1,), (0, 0, 1)), 0j)  # order 2


# compatibility

def test_compatibility_trivial_cases():
    P = PrincipalPart(6, (1, 0, 1j))
    assert check_compatibility(P, [0, 0, 0, 0]) == (True, 0.0)
    assert check_compatibility(PrincipalPart(5, (1, 2)), [3.0, 0.1, 7.0])[0]
    with pytest.raises(QDiffError):
        check_compatibility(P, [0, 0, 0])


def test_compatibility_detects_mismatch():
    P = PrincipalPart(4, (1, 0.5))
    target = 2 * math.pi * 0.5
    assert check_compatibility(P, [target + 1.0, 1.0])[0]
    assert check_compatibility(P, [1.0, target + 1.0])[0]  # other starting arc
    ok, res = check_compatibility(P, [target + 2.0, 1.0])
    assert not ok and res == pytest.approx(1.0)


def test_dimension_counts():
    assert compat_space_dimension([3]) == 2
    assert compat_space_dimension([6]) == 5
    assert compat_space_dimension([3, 4, 5]) == 9
    assert total_parameter_count(2, [3, 4, 5]) == 30
    with pytest.raises(QDiffError):
        compat_space_dimension([])


# rational differentials

@given(st.lists(cplx, min_size=1, max_size=6), st.lists(cplx, min_size=0, max_size=4))
def test_degree_bookkeeping(num, den):
    num = num + [1.0]
    den = den + [1.0]
    try:
        q = RationalSphere(tuple(num), tuple(den))
    except QDiffError:
        assume(False)  # common root
    zeros = sum(p.order for p in q.zeros)
    poles = sum(p.order for p in q.poles)
    assert zeros - poles == -4


def test_zero_and_pole_listing():
    q = RationalSphere((-1, 0, 1), (0, 0, 0, 1))  # (z**2 - 1)/z**3
    assert sorted(round(p.location.real) for p in q.zeros) == [-1, 1]
    orders = {(p.location if p.location == INF else round(abs(p.location))): p.order for p in q.poles}
    assert orders == {0: 3, INF: 3}


def test_manifest_round_trip(tmp_path):
    q = poly(-1, 0, 1)
    data = to_manifest(q)
    path = tmp_path / "q.json"
    path.write_text(json.dumps(data))
    q2 = from_manifest(path)
    assert q2.numerator == q.numerator
    assert from_manifest({"normal_form": {"n": 6, "a": [0.3, 0.1]}}).sqrt_coeffs == \
        LaurentModel.normal_form(6, 0.3 + 0.1j).sqrt_coeffs
    L = from_manifest({"order": 5, "sqrt_coeffs": [[-2.5, 1, 0], [-0.5, 0, 2]]})
    assert L.order == 5 and L.sqrt_coeffs[-1][1] == 2j
    assert to_manifest(L)["order"] == 5


def test_manifest_pole_order_checked():
    with pytest.raises(QDiffError, match="disagrees"):
        from_manifest({"numerator": [[-1, 0], [0, 0], [1, 0]], "poles": [{"at": "inf", "order": 5}]})


def test_laurent_model_validation():
    with pytest.raises(QDiffError):
        LaurentModel(6, {-3: 0.0, -1: 1.0})
    with pytest.raises(QDiffError):
        LaurentModel(6, {-2.5: 1.0})
    with pytest.raises(QDiffError):
        LaurentModel(1, {-0.5: 1.0})


def test_laurent_model_values_are_squares():
    q = LaurentModel.normal_form(6, 0.3)
    z = 0.4 * cmath.exp(0.3j)
    assert q(z) == pytest.approx((z**-3 + 0.3 / z) ** 2)
