import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisolab import anisotropy as aniso
from anisolab.errors import InputDomainError, ModelValidityError

E1 = np.array([1.0, 0.0, 0.0])


def test_eval_F_isotropic_is_one(iso_model):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    assert np.allclose(aniso.eval_F(iso_model, x), 1.0, atol=1e-14)


def test_eval_F_quadric_axis(quadric3):
    # closed form sqrt(x Q x) at the long axis
    assert aniso.eval_F(quadric3, E1) == pytest.approx(2.0, abs=1e-14)


def test_eval_F_pnorm_axis(pnorm4_model):
    assert aniso.eval_F(pnorm4_model, E1) == pytest.approx(1.0, abs=1e-14)


def test_eval_F_rejects_non_unit(iso_model):
    with pytest.raises(InputDomainError):
        aniso.eval_F(iso_model, np.array([1.1, 0.0, 0.0]))


def test_eval_F_rejects_nonpositive_model():
    bad = aniso.custom(lambda y: y[..., 0])  # vanishes off-axis
    with pytest.raises(ModelValidityError):
        aniso.eval_F(bad, np.array([0.0, 1.0, 0.0]))


def test_a_f_isotropic_identity(iso_model):
    frame = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    a = aniso.a_f_operator(iso_model, E1, frame)
    assert np.allclose(a, np.eye(2), atol=1e-14)


def test_a_f_quadric_closed_form(quadric3):
    # Hessian Q/F - Q y y^T Q / F^3 at e1 restricted to (e2, e3) is diag(1/2, 1/2)
    frame = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    a = aniso.a_f_operator(quadric3, E1, frame)
    assert np.allclose(a, np.diag([0.5, 0.5]), atol=1e-12)


@pytest.mark.parametrize("model_name", ["quadric3", "pnorm4_model"])
def test_a_f_matches_great_circle_differences(model_name, request):
    # intrinsic oracle: second differences of F along great circles plus F
    model = request.getfixturevalue(model_name)
    rng = np.random.default_rng(1)
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    frame = aniso.tangent_frame_at(x)
    a = aniso.a_f_operator(model, x, frame)
    h = 1e-3

    def quad_form(direction):
        plus = np.cos(h) * x + np.sin(h) * direction
        minus = np.cos(h) * x - np.sin(h) * direction
        second = (model.value(plus) - 2.0 * model.value(x) + model.value(minus)) / h**2
        return second + model.value(x)

    for i in range(2):
        assert quad_form(frame[i]) == pytest.approx(a[i, i], abs=5e-5)
    mixed = quad_form((frame[0] + frame[1]) / np.sqrt(2.0))
    assert mixed == pytest.approx(a[0, 0] / 2 + a[1, 1] / 2 + a[0, 1], abs=5e-5)


def test_a_f_rejects_bad_frame(quadric3):
    with pytest.raises(InputDomainError):
        aniso.a_f_operator(quadric3, E1, np.array([[0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]))
    with pytest.raises(InputDomainError):
        aniso.a_f_operator(quadric3, E1, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))


def test_a_f_frame_covariance(quadric4):
    # two frames related by R give matrices related by conjugation with R
    rng = np.random.default_rng(5)
    x = rng.normal(size=4)
    x /= np.linalg.norm(x)
    frame = aniso.tangent_frame_at(x)
    rot, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    frame2 = rot @ frame
    a1 = aniso.a_f_operator(quadric4, x, frame)
    a2 = aniso.a_f_operator(quadric4, x, frame2)
    assert np.max(np.abs(a2 - rot @ a1 @ rot.T)) < 1e-10


@pytest.mark.parametrize("factory", [aniso.isotropic, lambda: aniso.quadric(np.diag([4.0, 1.0, 1.0])), lambda: aniso.pnorm(4)])
def test_model_invariants_analytic(factory):
    report = aniso.validate_model(factory())
    assert report["ok"], report
    assert report["homogeneity"] <= 1e-10
    assert report["euler"] <= 1e-10
    assert report["radial"] <= 1e-10


def test_model_invariants_fd_custom():
    # evaluator-only custom models carry documented O(step^2) derivative error
    report = aniso.validate_model(aniso.ripple(0.3, 4))
    assert report["euler"] <= 1e-4
    assert report["radial"] <= 1e-4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.3, 3.0))
def test_quadric_homogeneity_and_euler(seed, lam):
    rng = np.random.default_rng(seed)
    model = aniso.quadric(np.diag([4.0, 1.0, 1.0]))
    y = rng.normal(size=3)
    if np.linalg.norm(y) < 1e-3:
        y = np.array([1.0, 0.2, -0.4])
    f = model.value(y)
    assert model.value(lam * y) == pytest.approx(lam * f, rel=1e-12)
    assert float(model.gradient(y) @ y) == pytest.approx(f, rel=1e-12)
    assert np.max(np.abs(model.hessian(y) @ y)) <= 1e-12 * max(1.0, f)


def test_convexity_scan_isotropic(iso_model):
    report = aniso.convexity_scan(iso_model, resolution=16, dim=3)
    assert report.accepted
    assert report.min_eigenvalue == pytest.approx(1.0, abs=1e-10)


def test_convexity_scan_quadric(quadric3):
    report = aniso.convexity_scan(quadric3, resolution=32, dim=3)
    assert report.accepted
    assert report.min_eigenvalue > 0.0


def test_convexity_scan_rejects_ripple():
    # deep sectoral-harmonic ripple makes A_F indefinite
    report = aniso.convexity_scan(aniso.ripple(0.9, 6), resolution=32, dim=3)
    assert not report.accepted
    assert report.min_eigenvalue < 0.0


def test_convexity_scan_resolution_floor(iso_model):
    with pytest.raises(InputDomainError):
        aniso.convexity_scan(iso_model, resolution=4)


def test_cahn_hoffman_isotropic(iso_model):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(10, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    assert np.max(np.abs(aniso.cahn_hoffman(iso_model, x) - x)) < 1e-14


def test_cahn_hoffman_quadric_axis(quadric3):
    assert np.allclose(aniso.cahn_hoffman(quadric3, E1), [2.0, 0.0, 0.0], atol=1e-14)


def test_cahn_hoffman_quadric_membership(quadric3):
    # image lies on z Q^{-1} z = 1
    q_inv = np.linalg.inv(np.diag([4.0, 1.0, 1.0]))
    pts = aniso.sphere_grid(3, 16)
    z = aniso.cahn_hoffman(quadric3, pts)
    member = np.einsum("mi,ij,mj->m", z, q_inv, z)
    assert np.max(np.abs(member - 1.0)) < 1e-10


def test_from_config_round_trip():
    m = aniso.from_config({"kind": "quadric", "Q": [[4, 0, 0], [0, 1, 0], [0, 0, 1]]})
    assert m.kind == "quadric"
    m = aniso.from_config({"kind": "pnorm", "p": 4})
    assert m.kind == "pnorm"
    with pytest.raises(InputDomainError):
        aniso.from_config({"kind": "quadric", "Q": [[1]], "extra": 1})
    with pytest.raises(InputDomainError):
        aniso.from_config({"kind": "mystery"})
