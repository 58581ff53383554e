import numpy as np
import pytest
from scipy import integrate as sci_integrate

from anisolab import anisotropy as aniso
from anisolab import geometry as geom
from anisolab.errors import BuildError, InputDomainError


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_sphere_calibration_n2(rho):
    s = geom.build_sphere(rho, 2, 32)
    assert s.area() == pytest.approx(4 * np.pi * rho**2, rel=1e-7)
    assert np.max(np.abs(s.shape_ops - np.eye(2) / rho)) < 1e-7 / rho
    support, tangential = geom.support_and_tangent(s)
    assert np.max(np.abs(support + rho)) < 1e-12 * rho
    assert np.max(np.abs(tangential)) < 1e-11 * rho


def test_sphere_area_resolution64():
    s = geom.build_sphere(1.0, 2, 64)
    assert abs(s.area() - 4 * np.pi) < 1e-6


def test_sphere_n3_calibration(sphere3):
    assert sphere3.area() == pytest.approx(2 * np.pi**2, rel=1e-5)
    assert np.max(np.abs(sphere3.shape_ops - np.eye(3))) < 1e-6
    support, _ = geom.support_and_tangent(sphere3)
    assert np.max(np.abs(support + 1.0)) < 1e-12


def test_node_invariants(sphere2, wulff_q2, torus2):
    for imm in (sphere2, wulff_q2, torus2):
        norms = np.linalg.norm(imm.normals, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12
        tangency = np.einsum("mad,md->ma", imm.frames, imm.normals)
        assert np.max(np.abs(tangency)) < 1e-10
        gram = np.einsum("mad,mbd->mab", imm.frames, imm.frames)
        assert np.max(np.abs(gram - np.eye(imm.n))) < 1e-10
        assert np.max(np.abs(imm.shape_ops - np.swapaxes(imm.shape_ops, 1, 2))) == 0.0
        assert np.min(imm.weights) > 0.0


def test_ellipsoid_area_against_quadrature_oracle(ellipsoid2):
    # surface of revolution: S = int 2 pi r(x) sqrt(1 + r'(x)^2) dx for r(x) = b sqrt(1 - x^2/a^2)
    a, b = 2.0, 1.0

    def integrand(x):
        r = b * np.sqrt(max(1 - (x / a) ** 2, 0.0))
        if r == 0.0:
            return 0.0
        dr = -b * x / (a**2 * np.sqrt(1 - (x / a) ** 2))
        return 2 * np.pi * r * np.sqrt(1 + dr**2)

    oracle, err = sci_integrate.quad(integrand, -a, a, limit=200)
    assert err < 1e-8
    assert ellipsoid2.area() == pytest.approx(oracle, abs=1e-6)


def test_wulff_membership(wulff_q2):
    q_inv = np.linalg.inv(np.diag([4.0, 1.0, 1.0]))
    member = np.einsum("mi,ij,mj->m", wulff_q2.positions, q_inv, wulff_q2.positions)
    assert np.max(np.abs(member - 1.0)) < 1e-8


def test_wulff_cahn_hoffman_chart_membership(pnorm4_model):
    # non-quadric models sample the Cahn-Hoffman image: dual-norm ball boundary
    w = geom.build_wulff(pnorm4_model, 1.0, 2, 16)
    dual = np.sum(np.abs(w.positions) ** (4 / 3), axis=1) ** (3 / 4)
    assert np.max(np.abs(dual - 1.0)) < 1e-12


def test_torus_area_volume(torus2):
    assert torus2.area() == pytest.approx(4 * np.pi**2 * 2.0 * 0.5, rel=1e-8)
    support = np.einsum("md,md->m", torus2.positions, torus2.normals)
    volume = -geom.integrate(torus2, support) / 3.0
    assert volume == pytest.approx(2 * np.pi**2 * 2.0 * 0.5**2, rel=1e-8)


def test_degenerate_build_raises(sphere2):
    # inward speed 1 at t = 1 collapses the unit sphere to the focal point
    with pytest.raises(BuildError):
        geom.build_normal_graph(sphere2, np.ones(sphere2.node_count), 1.0)


def test_resolution_floor():
    with pytest.raises(InputDomainError):
        geom.build_sphere(1.0, 2, 8)


def test_surface_gradient_constant_is_zero(sphere2):
    g = geom.surface_gradient(sphere2, np.ones(sphere2.node_count))
    assert np.max(np.abs(g)) == 0.0


def test_surface_gradient_height_field(sphere2):
    z = sphere2.positions[:, 2]
    g = geom.surface_gradient(sphere2, z)
    assert np.max(np.abs(np.sum(g**2, axis=1) - (1 - z**2))) < 1e-6


def test_surface_gradient_linear_field(wulff_q2):
    # gradient of <X, c> is the tangential part of c
    c = np.array([0.3, -1.1, 0.7])
    g = geom.surface_gradient(wulff_q2, wulff_q2.positions @ c)
    expected = np.einsum("mad,d->ma", wulff_q2.frames, c)
    assert np.max(np.abs(g - expected)) < 1e-6


def test_surface_divergence_zero_field(sphere2):
    d = geom.surface_divergence(sphere2, np.zeros((sphere2.node_count, 2)))
    assert np.max(np.abs(d)) == 0.0


def test_surface_divergence_eigenfunction(sphere2):
    z = sphere2.positions[:, 2]
    d = geom.surface_divergence(sphere2, geom.surface_gradient(sphere2, z))
    assert np.max(np.abs(d + 2 * z)) < 1e-5


def test_divergence_theorem(sphere2, torus2):
    for imm in (sphere2, torus2):
        f = imm.positions[:, 0] * imm.positions[:, 2] + 0.5 * imm.positions[:, 1]
        w = geom.surface_gradient(imm, f)
        total = geom.integrate(imm, geom.surface_divergence(imm, w))
        assert abs(total) < 1e-6


def test_integrate_basics(sphere2, sphere3):
    ones2 = np.ones(sphere2.node_count)
    assert geom.integrate(sphere2, ones2) == pytest.approx(4 * np.pi, abs=1e-6)
    assert geom.integrate(sphere3, np.ones(sphere3.node_count)) == pytest.approx(
        2 * np.pi**2, rel=1e-5
    )
    z = sphere2.positions[:, 2]
    assert abs(geom.integrate(sphere2, z)) < 1e-10


def test_support_pythagoras(wulff_q2, torus2):
    for imm in (wulff_q2, torus2):
        support, tangential = geom.support_and_tangent(imm)
        lhs = np.einsum("md,md->m", imm.positions, imm.positions)
        rhs = support**2 + np.sum(tangential**2, axis=1)
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_translated_sphere_support():
    c = np.array([0.3, -0.2, 0.5])
    base = geom.build_sphere(1.0, 2, 32)
    moved = geom.transformed_immersion(base, shift=c)
    support, _ = geom.support_and_tangent(moved)
    expected = -1.0 + moved.normals @ c
    assert np.max(np.abs(support - expected)) < 1e-10


def test_make_variation_zero_speed(sphere2):
    fam = geom.make_variation(sphere2, np.zeros(sphere2.node_count))
    assert fam.evaluate_at(0.37) is sphere2
    assert fam.evaluate_at(0.0) is sphere2


def test_make_variation_outward_growth(sphere2):
    # inward-normal convention: speed -1 grows the sphere
    fam = geom.make_variation(sphere2, -np.ones(sphere2.node_count))
    grown = fam.evaluate_at(0.2)
    radii = np.linalg.norm(grown.positions, axis=1)
    assert np.max(np.abs(radii - 1.2)) < 1e-12
    assert np.max(np.abs(grown.shape_ops - np.eye(2) / 1.2)) < 1e-8


def test_refinement_convergence_order():
    # shape-operator max error against the closed form drops at order >= 2
    errs = []
    for res in (16, 32):
        s = geom.build_sphere(1.0, 2, res)
        errs.append(np.max(np.abs(s.shape_ops - np.eye(2))))
    assert errs[0] / errs[1] >= 3.5
    errs3 = []
    for res in (16, 32):
        s = geom.build_sphere(1.0, 3, res)
        errs3.append(np.max(np.abs(s.shape_ops - np.eye(3))))
    assert errs3[0] / errs3[1] >= 3.5


def test_frame_independence_of_scalars(wulff_q2, quadric3):
    # conjugating frames and shape operators by random rotations leaves the
    # curvature scalars untouched
    from anisolab.curvalg import curvature_fields
    import copy

    rng = np.random.default_rng(11)
    rots = rng.normal(size=(wulff_q2.node_count, 2, 2))
    q, _ = np.linalg.qr(rots)
    twisted = copy.copy(wulff_q2)
    twisted.frames = np.einsum("mab,mbd->mad", q, wulff_q2.frames)
    twisted.shape_ops = np.einsum("mab,mbc,mdc->mad", q, wulff_q2.shape_ops, q)
    twisted._cache = {}
    f0 = curvature_fields(wulff_q2, quadric3)
    f1 = curvature_fields(twisted, quadric3)
    assert np.max(np.abs(f0.sigma - f1.sigma)) < 1e-10


def test_rigid_motion_covariance(iso_model):
    from anisolab.curvalg import curvature_fields

    rng = np.random.default_rng(4)
    rot, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(rot) < 0:
        rot[:, 0] = -rot[:, 0]
    c = np.array([0.4, -1.0, 0.2])
    base = geom.build_ellipsoid([2.0, 1.0, 1.0], 32)
    moved = geom.transformed_immersion(base, rotation=rot, shift=c)
    assert moved.area() == pytest.approx(base.area(), rel=1e-8)
    f0 = curvature_fields(base, iso_model)
    f1 = curvature_fields(moved, iso_model)
    assert np.max(np.abs(f0.sigma - f1.sigma)) < 1e-8
    s0, _ = geom.support_and_tangent(base)
    s1, _ = geom.support_and_tangent(moved)
    shift_term = moved.normals @ c
    rot_only = geom.transformed_immersion(base, rotation=rot)
    sr, _ = geom.support_and_tangent(rot_only)
    assert np.max(np.abs(s1 - (sr + shift_term))) < 1e-10
    assert np.max(np.abs(sr - s0)) < 1e-10


def test_build_parametric_dispatch(quadric3):
    imm = geom.build_parametric({"builder": "sphere", "radius": 2.0, "resolution": 16})
    assert imm.n == 2
    imm = geom.build_parametric(
        {"builder": "wulff", "scale": 1.0, "dimension": 2, "resolution": 16}, model=quadric3
    )
    assert imm.n == 2
    with pytest.raises(InputDomainError):
        geom.build_parametric({"builder": "nope"})
    with pytest.raises(InputDomainError):
        geom.build_parametric({"builder": "sphere", "junk": 1})
    with pytest.raises(InputDomainError):
        geom.build_parametric({"builder": "wulff"})
