import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from folia.harmonic import (
    ConvergenceError,
    CylinderGrid,
    HarmonicError,
    decay_experiment,
    energy,
    exhaustion_boundary,
    exhaustion_experiment,
    fitted_slope,
    fourier_solution,
    free_boundary_oracle,
    hopf,
    hopf_annulus_check,
    hopf_patch,
    patch_energy,
    read_folh,
    solve_dirichlet,
    solve_partially_free,
    verify_doubling,
    write_field_csv,
    write_folh,
)

GRID = CylinderGrid(4.0, 65, 64)


def fourier_data(coeffs):
    def f(th):
        return sum(a * np.cos((k + 1) * th) + b * np.sin((k + 1) * th) for k, (a, b) in enumerate(coeffs))
    return f


coeff_lists = st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=5)


def test_grid_validation():
    with pytest.raises(HarmonicError):
        CylinderGrid(1.0, 7, 16)
    with pytest.raises(HarmonicError):
        CylinderGrid(1.0, 8, 15)
    with pytest.raises(HarmonicError):
        CylinderGrid(0.0, 8, 16)
    with pytest.raises(HarmonicError, match="samples"):
        GRID.sample(np.zeros(10))
    g = CylinderGrid(2.0, 9, 16)
    assert g.hx == 0.25 and g.doubled().nx == 17 and g.doubled().hx == g.hx


@pytest.mark.parametrize("method", ["cg", "spectral"])
def test_constants_are_harmonic(method):
    assert np.allclose(solve_dirichlet(GRID, 2.5, 2.5, method).values, 2.5, atol=1e-9)
    fld = solve_partially_free(GRID, -1.25, method)
    assert np.allclose(fld.values, -1.25, atol=1e-9)
    assert np.allclose(fld.free_boundary(), -1.25, atol=1e-9)


def test_fourier_oracle_values():
    assert fourier_solution(1, 1, 4, 2, 0) == pytest.approx(1 / math.cosh(2))
    assert fourier_solution(1, 1, 4, 2, 0) == pytest.approx(0.2658, abs=1e-4)
    assert fourier_solution(3, 1, 6, 3, 0) == pytest.approx(2.47e-4, rel=1e-3)
    th = np.linspace(0, 6, 7)
    assert np.allclose(fourier_solution(2, 1.5, 3, 0, th), 1.5 * np.cos(2 * th))
    # large nL uses the log-domain ratio
    big = fourier_solution(50, 1, 30, np.array([0.0, 15.0, 30.0]), 0.0)
    assert np.all(np.isfinite(big))
    assert big[0] == pytest.approx(1.0) and big[2] == pytest.approx(1.0)
    assert big[1] == pytest.approx(2 * math.exp(-750), rel=1e-10)
    with pytest.raises(HarmonicError):
        fourier_solution(0, 1, 1, 0, 0)


@given(st.integers(1, 6), st.floats(0.5, 10), st.floats(0, 1))
def test_fourier_midline_bound(n, L, M):
    mid = abs(fourier_solution(n, M, L, L / 2, 0.0))
    assert mid <= 2 * M * math.exp(-n * L / 2) + 1e-15


def test_dirichlet_matches_fourier_second_order():
    errs = []
    for res in (64, 128):
        g = CylinderGrid(4.0, res + 1, res)
        fld = solve_dirichlet(g, np.cos, np.cos)
        exact = fourier_solution(1, 1, 4.0, g.x[:, None], g.theta[None, :])
        errs.append(np.max(np.abs(fld.values - exact)))
        assert fld.residual <= 1e-10
    assert errs[0] / errs[1] >= 3.5


def test_midline_and_free_boundary_values():
    g = CylinderGrid(4.0, 257, 256)
    d = solve_dirichlet(g, np.cos, np.cos)
    assert np.max(d.midline()) == pytest.approx(1 / math.cosh(2), abs=1e-4)
    f = solve_partially_free(g, np.cos)
    assert np.max(f.free_boundary()) == pytest.approx(free_boundary_oracle(1, 1, 4.0), abs=1e-4)
    assert np.max(f.free_boundary()) == pytest.approx(0.0366, abs=1e-4)


def test_normal_derivative_is_second_order_small():
    vals = []
    for res in (32, 64, 128):
        g = CylinderGrid(2.0, res + 1, 64)
        vals.append(np.max(np.abs(solve_partially_free(g, np.cos, "spectral").normal_derivative())))
    assert vals[0] / vals[1] >= 3.5 and vals[1] / vals[2] >= 3.5


@given(coeff_lists)
def test_free_boundary_mean_transport(coeffs):
    f = fourier_data(coeffs)
    mean = 0.7
    fld = solve_partially_free(GRID, lambda th: f(th) + mean)
    assert np.mean(fld.free_boundary()) == pytest.approx(mean, abs=1e-8)


@given(coeff_lists, st.floats(-2, 2))
def test_doubling_identity(coeffs, mean):
    f = fourier_data(coeffs)
    assert verify_doubling(GRID, lambda th: f(th) + mean) <= 1e-8


def test_doubling_grid_mismatch():
    with pytest.raises(HarmonicError, match="grid mismatch"):
        verify_doubling(GRID, np.cos, doubled=CylinderGrid(8.0, 128, 64))


@given(coeff_lists, coeff_lists)
def test_maximum_principle(top, bottom):
    ft, fb = GRID.sample(fourier_data(top)), GRID.sample(fourier_data(bottom))
    u = solve_dirichlet(GRID, ft, fb, "spectral").values
    lo, hi = min(ft.min(), fb.min()), max(ft.max(), fb.max())
    assert u.min() >= lo - 1e-10 and u.max() <= hi + 1e-10


@pytest.mark.parametrize("mode", ["dirichlet", "free"])
def test_energy_minimality(mode):
    rng = np.random.default_rng(7)
    g = CylinderGrid(2.0, 33, 32)
    f = fourier_data([(1.0, 0.2), (0.0, -0.5)])
    fld = solve_dirichlet(g, f, np.sin) if mode == "dirichlet" else solve_partially_free(g, f)
    e0 = energy(fld)
    for _ in range(20):
        v = fld.values.copy()
        stop = -1 if mode == "dirichlet" else None
        v[1:stop] += 1e-3 * rng.standard_normal(v[1:stop].shape)
        assert patch_energy(v, g.hx, g.htheta, periodic=True) > e0


def test_energy_and_hopf_calibration():
    x = np.linspace(0, 1, 33)
    X, Y = np.meshgrid(x, x, indexing="ij")
    h = x[1] - x[0]
    assert patch_energy(Y, h, h) == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(hopf_patch(Y, h, h).values, 1.0, atol=1e-12)
    assert np.allclose(hopf_patch(X, h, h).values, -1.0, atol=1e-12)


def test_hopf_annulus():
    res = hopf_annulus_check(96, 96)
    assert res.max_relative_error <= 0.02
    exact = hopf_annulus_check(96, 96, solve=False)
    assert exact.max_relative_error <= 0.02


def test_holomorphy_defect_second_order():
    defects = []
    for res in (32, 64, 128):
        g = CylinderGrid(2.0, res + 1, res)
        fld = solve_dirichlet(g, np.cos, lambda th: 0.5 * np.sin(2 * th), "spectral")
        defects.append(np.max(hopf(fld).defect))
    assert defects[0] / defects[1] >= 3.0 and defects[1] / defects[2] >= 3.0


def test_decay_experiment_cos():
    rows = decay_experiment(np.cos, [2, 4, 6, 8], nx_per_unit=32, ntheta=128)
    for r in rows:
        assert r.midline_max == pytest.approx(1 / math.cosh(r.L / 2), rel=1e-3)
    ratios = [r.ratio for r in rows]
    assert ratios == sorted(ratios) and ratios[-1] == pytest.approx(2.0, rel=1e-3)


def test_decay_experiment_mode_two_slope():
    rows = decay_experiment(lambda th: np.cos(2 * th), [2, 4, 6, 8], nx_per_unit=32, ntheta=128,
                            method="spectral")
    assert fitted_slope([r.L for r in rows], [r.midline_max for r in rows]) == pytest.approx(-1.0, abs=0.03)


def test_decay_rejects_nonzero_mean():
    with pytest.raises(HarmonicError, match="zero mean"):
        decay_experiment(lambda th: 1 + np.cos(th), [2, 4])


def test_exhaustion_experiment_small():
    rows = exhaustion_experiment(0.3, 6, 0.5, (2, 4, 8), ntheta=64, hx=0.05)
    for r in rows:
        assert r.modulus == pytest.approx(3 * math.log(r.i))
        assert r.boundary_max == pytest.approx((r.i / 0.5) ** 6, rel=0.05)
    sups = [r.free_sup for r in rows]
    assert max(sups) / min(sups) < 1.2
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    f = exhaustion_boundary(0, 6, 0.5, 2, th)
    assert np.allclose(f, -np.sin(2 * th) / (0.25 ** 3) ** 2)
    with pytest.raises(HarmonicError, match="i_max"):
        exhaustion_experiment(0.3, 6, 0.5, (2, 3))
    with pytest.raises(HarmonicError):
        exhaustion_experiment(0.3, 5, 0.5)


def test_cg_iteration_cap():
    from folia import harmonic
    A, m = harmonic._assemble(GRID, False)
    b = np.ones(A.shape[0])
    with pytest.raises(ConvergenceError):
        harmonic._solve_cg(A, b, 1e-14, 2)


def test_field_dumps(tmp_path):
    g = CylinderGrid(1.0, 9, 16)
    fld = solve_partially_free(g, np.cos)
    write_folh(tmp_path / "f.folh", fld.values)
    raw = (tmp_path / "f.folh").read_bytes()
    assert raw[:4] == b"FOLH" and len(raw) == 16 + 8 * 9 * 16
    assert np.array_equal(read_folh(tmp_path / "f.folh"), fld.values)
    write_field_csv(tmp_path / "f.csv", fld)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x,theta,value" and len(lines) == 1 + 9 * 16
    x, t, v = (float(s) for s in lines[17].split(","))
    assert (x, t, v) == (g.x[1], g.theta[0], fld.values[1, 0])
    (tmp_path / "bad.folh").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(HarmonicError):
        read_folh(tmp_path / "bad.folh")
    (tmp_path / "short.folh").write_bytes(raw[:-8])
    with pytest.raises(HarmonicError):
        read_folh(tmp_path / "short.folh")
