import numpy as np
import pytest

from branchlab.spectral import (CoverFourierBasis, CoverFunction,
                                remainder_decay_check, fourier_coefficients,
                                half_case_boundary_term, l_span_elements,
                                project_L, profile_plane_gradient_lift,
                                spectral_decompose)

from conftest import C_NULL


@pytest.fixture(scope="module")
def basis():
    return CoverFourierBasis()


def test_orthonormality(basis):
    M = basis.orthonormality_matrix()
    assert np.max(np.abs(M - np.eye(len(basis)))) < 1e-12


def test_eigen_residual(basis):
    assert basis.eigen_residual() <= 1e-8


def test_eigenvalue_ordering_and_l0(basis):
    lams = [el.lam for el in basis.elements]
    assert all(lams[i] <= lams[i + 1] for i in range(len(lams) - 1))
    # alpha = 1/2: (alpha-1)^2 = 1/4 is the first half-frequency pair
    assert basis.elements[basis.l0(0.5)].lam == pytest.approx(0.25)
    # alpha = 1: (alpha-1)^2 = 0 is the constant mode
    assert basis.l0(1.0) == 0


def _mode(alpha, vec, kind="cos"):
    def fn(r, theta, y=None):
        ang = np.cos(alpha * np.asarray(theta)) if kind == "cos" else np.sin(alpha * np.asarray(theta))
        return (np.asarray(r) ** alpha * ang)[..., None] * vec

    return CoverFunction(fn, n=2, m=len(vec))


def test_fourier_single_mode(basis):
    w = _mode(0.5, np.array([2.0, 0.0]))
    coeffs, parseval = fourier_coefficients(w, 0.7, None, basis)
    nz = np.argwhere(np.abs(coeffs) > 1e-12)
    assert nz.shape[0] == 1
    el = basis.elements[nz[0][0]]
    assert el.kind == "cos" and el.freq == 0.5
    assert parseval < 1e-10


def test_fourier_tilt_mode_support(basis):
    # w = D1 phi0 . y1: coefficients live on the (alpha-1)-frequency modes,
    # linear in y1
    alpha = 0.5

    def fn(r, theta, y):
        d1, _ = profile_plane_gradient_lift(C_NULL, alpha, np.asarray(r), np.asarray(theta))
        return d1 * np.asarray(y)[..., 0][..., None]

    w = CoverFunction(fn, n=3, m=2)
    for yv, scale in ((0.2, 1.0), (0.4, 2.0)):
        coeffs, _ = fourier_coefficients(w, 0.5, np.array([yv]), basis)
        nz = sorted({basis.elements[i].freq for i in np.argwhere(np.abs(coeffs) > 1e-10)[:, 0]})
        assert nz == [0.5]  # |alpha - 1| = 1/2 modes only
        if yv == 0.2:
            base = coeffs.copy()
        else:
            assert np.allclose(coeffs, scale * base, atol=1e-12)


def test_parseval_random_trig(basis):
    rng = np.random.default_rng(3)
    coef = rng.standard_normal(8)

    def fn(r, theta, y=None):
        th = np.asarray(theta)
        vals = sum(c * np.cos((j + 1) / 2.0 * th + 0.3 * j) for j, c in enumerate(coef))
        return vals[..., None]

    w = CoverFunction(fn, n=2, m=1)
    _, parseval = fourier_coefficients(w, 0.5, None, basis)
    assert parseval < 1e-10


def test_l_span_dimension():
    for n, m in ((2, 1), (2, 3), (3, 2)):
        elems = l_span_elements(C_NULL[:m] if m <= 2 else np.ones(m) + 0j, 0.5, n, m)
        assert len(elems) == 2 * m + 2 * (n - 2)


def test_project_member_and_orthogonal():
    alpha = 0.5
    w_in = _mode(alpha, np.array([1.0, -0.5]))
    proj = project_L(w_in, 1.0, C_NULL, alpha)
    assert proj.norm_sq_remainder <= 1e-10 * max(proj.norm_sq_w, 1.0)
    w_perp = _mode(alpha + 2, np.array([1.0, 0.0]))
    proj2 = project_L(w_perp, 1.0, C_NULL, alpha)
    assert np.max(np.abs(proj2.coefficients)) < 1e-12


def test_projection_pythagoras_and_contraction():
    alpha = 0.5
    mix = CoverFunction(
        lambda r, th, y=None: _mode(alpha, np.array([1.0, 0.0]))(r, th, y)
        + 0.4 * _mode(alpha + 2, np.array([0.0, 1.0]))(r, th, y),
        n=2, m=2)
    proj = project_L(mix, 1.0, C_NULL, alpha)
    assert proj.pythagoras_residual < 1e-10
    assert proj.norm_sq_remainder <= proj.norm_sq_w
    # idempotence: projecting the projection returns itself
    again = project_L(proj.psi, 1.0, C_NULL, alpha)
    assert again.norm_sq_remainder <= 1e-12 * max(proj.norm_sq_psi, 1.0)


def test_projection_singular_gram_rejected():
    # zero profile coefficient degenerates the tilt modes of L in n = 3
    from branchlab.errors import FitError

    w = CoverFunction(lambda r, th, y: (np.asarray(r) * 0.0)[..., None] * np.zeros(2),
                      n=3, m=2)
    with pytest.raises(FitError):
        project_L(w, 1.0, np.zeros(2, dtype=complex), 0.5)


def test_projection_n3_tilt_member():
    alpha = 0.5

    def fn(r, theta, y):
        d1, d2 = profile_plane_gradient_lift(C_NULL, alpha, np.asarray(r), np.asarray(theta))
        return 0.7 * d1 * np.asarray(y)[..., 0][..., None] - 0.2 * d2 * np.asarray(y)[..., 0][..., None]

    w = CoverFunction(fn, n=3, m=2)
    proj = project_L(w, 1.0, C_NULL, alpha)
    assert proj.norm_sq_remainder <= 1e-10 * max(proj.norm_sq_w, 1e-30)


def test_half_case_boundary_term_zero_cases():
    alpha = 0.5
    # y-independent mode: exactly zero
    def fn_pure(r, theta, y):
        return (np.asarray(r) ** 0.5 * np.cos(0.5 * np.asarray(theta)))[..., None] * np.array([1.0, 0.0])

    w = CoverFunction(fn_pure, n=3, m=2)
    limit, unc, info = half_case_boundary_term(w, 0, c0=C_NULL, alpha=alpha)
    assert np.max(np.abs(limit)) < 1e-10


def test_half_case_adversarial_detected():
    alpha = 0.5

    def fn_bad(r, theta, y):
        d1, _ = profile_plane_gradient_lift(C_NULL, alpha, np.asarray(r), np.asarray(theta))
        return np.asarray(r)[..., None] * d1 * np.asarray(y)[..., 0][..., None]

    w = CoverFunction(fn_bad, n=3, m=2)
    limit, unc, info = half_case_boundary_term(w, 0, c0=C_NULL, alpha=alpha)
    assert np.max(np.abs(limit)) > 10 * max(unc, 1e-12)


def test_decay_check_family():
    alpha = 0.5
    mix = CoverFunction(
        lambda r, th, y=None: _mode(alpha, np.array([1.0, 0.0]))(r, th, y)
        + 0.3 * _mode(alpha + 2, np.array([1.0, 0.0]))(r, th, y),
        n=2, m=2)
    rep = remainder_decay_check(mix, theta=0.125, scales=(0.5, 0.25, 0.125),
                          c0=C_NULL, alpha=alpha)
    assert rep.hypotheses_ok
    contr = rep.contractions
    assert all(c < 1.0 for c in contr)
    assert max(contr) / min(contr) < 1.5  # roughly constant per scale
    # pure (alpha+2)-mode perturbation: normalized remainder ~ rho^4
    assert rep.exponent_estimate == pytest.approx(4.0, abs=0.1)
    # w in L: left side vanishes at all scales
    member = _mode(alpha, np.array([0.3, 0.7]))
    rep0 = remainder_decay_check(member, theta=0.125, scales=(0.25,), c0=C_NULL, alpha=alpha)
    assert rep0.lhs <= 1e-12


def test_classification_consistency():
    # manufactured homogeneous degree-alpha harmonic cover functions built
    # from the allowed modes have zero remainder, for k = 1..4
    for k in range(1, 5):
        alpha = k / 2.0
        w = CoverFunction(
            lambda r, th, y=None, a=alpha: (
                np.asarray(r) ** a
                * (0.6 * np.cos(a * np.asarray(th)) - 0.8 * np.sin(a * np.asarray(th)))
            )[..., None] * np.array([1.0, 0.4]),
            n=2, m=2)
        proj = project_L(w, 1.0, C_NULL, alpha)
        assert proj.norm_sq_remainder <= 1e-10 * max(proj.norm_sq_w, 1e-30)


def test_spectral_decomp_exports(tmp_path, basis):
    w = _mode(0.5, np.array([1.0, 0.0]))
    decomp = spectral_decompose(w, rs=np.array([0.3, 0.6]), basis=basis,
                                scales=(0.5,), c0=C_NULL, alpha=0.5)
    csv_path = tmp_path / "decomp.csv"
    decomp.to_csv(csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("l,r,y,")
    assert len(lines) == 1 + len(basis) * 2
    json_path = tmp_path / "proj.json"
    decomp.projections_to_json(json_path)
    assert "0.5" in json_path.read_text()
