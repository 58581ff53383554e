import numpy as np
import pytest

from anisolab import functionals as fn
from anisolab import geometry as geom
from anisolab.errors import InputDomainError


def test_area_r_sphere(sphere2, iso_model):
    assert fn.area_r(sphere2, iso_model, 0) == pytest.approx(4 * np.pi, abs=1e-6)
    # sigma_1 = 2 on the unit sphere
    assert fn.area_r(sphere2, iso_model, 1) == pytest.approx(8 * np.pi, abs=1e-6)
    with pytest.raises(InputDomainError):
        fn.area_r(sphere2, iso_model, 3)


def test_area_r_wulff_self_convergence(quadric3):
    # int F(nu) dv cross-checked at two resolutions: order-6 error decay
    coarse = fn.area_r(geom.build_wulff(quadric3, 1.0, 2, 24), quadric3, 0)
    mid = fn.area_r(geom.build_wulff(quadric3, 1.0, 2, 48), quadric3, 0)
    fine = fn.area_r(geom.build_wulff(quadric3, 1.0, 2, 96), quadric3, 0)
    assert abs(coarse - mid) / abs(mid - fine) > 4.0


def test_area_rs_single_term_and_linearity(sphere3, iso_model):
    a0 = fn.area_rs(sphere3, iso_model, 0, 0, [1.0])
    assert a0 == pytest.approx(fn.area_r(sphere3, iso_model, 0), rel=1e-14)
    # unit 3-sphere: sigma_1 = 3, so area_0 + area_1 = 2 pi^2 (1 + 3)
    both = fn.area_rs(sphere3, iso_model, 0, 1, [1.0, 1.0])
    assert both == pytest.approx(2 * np.pi**2 * 4, rel=1e-5)
    assert fn.area_rs(sphere3, iso_model, 0, 1, [2.0, 2.0]) == pytest.approx(
        2 * both, rel=1e-14
    )


def test_area_rs_validation(sphere3, iso_model):
    with pytest.raises(InputDomainError):
        fn.area_rs(sphere3, iso_model, 1, 0, [1.0])
    with pytest.raises(InputDomainError):
        fn.area_rs(sphere3, iso_model, 0, 2, [1.0, 1.0, 1.0])  # s > n-2
    with pytest.raises(InputDomainError):
        fn.area_rs(sphere3, iso_model, 0, 1, [0.0, 0.0])
    with pytest.raises(InputDomainError):
        fn.area_rs(sphere3, iso_model, 0, 1, [1.0, -1.0])


def test_enclosed_volume(sphere2, ellipsoid2):
    assert fn.enclosed_volume(sphere2) == pytest.approx(4 * np.pi / 3, abs=1e-6)
    assert fn.enclosed_volume(ellipsoid2) == pytest.approx(
        4 * np.pi * 2.0 / 3.0, abs=1e-6
    )


def test_enclosed_volume_translation_invariance():
    base = geom.build_sphere(1.0, 2, 32)
    moved = geom.transformed_immersion(base, shift=np.array([5.0, -2.0, 1.0]))
    assert fn.enclosed_volume(moved) == pytest.approx(
        fn.enclosed_volume(base), abs=1e-10
    )


def test_minkowski_sphere_pointwise_cancellation(sphere2, iso_model):
    for r in (0, 1):
        residual, scale = fn.minkowski_relative(sphere2, iso_model, r)
        assert abs(residual) / scale < 1e-8


def test_minkowski_wulff(wulff_q2, quadric3):
    for r in (0, 1):
        residual, scale = fn.minkowski_relative(wulff_q2, quadric3, r)
        assert abs(residual) / scale < 1e-6


def test_minkowski_mismatched_model(ellipsoid2, quadric3):
    # the identity holds for every closed immersion, matched model or not
    for r in (0, 1):
        residual, scale = fn.minkowski_relative(ellipsoid2, quadric3, r)
        assert abs(residual) / scale < 1e-6


def test_minkowski_convergence_order(quadric3):
    res_c, scale_c = fn.minkowski_relative(
        geom.build_ellipsoid([1.5, 1.0, 0.8], 24), quadric3, 1
    )
    res_f, scale_f = fn.minkowski_relative(
        geom.build_ellipsoid([1.5, 1.0, 0.8], 48), quadric3, 1
    )
    assert abs(res_c / scale_c) / max(abs(res_f / scale_f), 1e-16) > 3.5


def test_minkowski_range_validation(sphere2, iso_model):
    with pytest.raises(InputDomainError):
        fn.minkowski_residual(sphere2, iso_model, 2)


def test_first_variation_sphere_outward(sphere2, iso_model):
    fam = geom.make_variation(sphere2, -np.ones(sphere2.node_count))
    for r in (0, 1):
        chk = fn.first_variation_check(fam, iso_model, r)
        # dA_r/0drho of 4 pi rho^(2-r) sigma-scaling lands at 8 pi for both r
        assert chk.formula_value == pytest.approx(8 * np.pi, rel=1e-6)
        assert chk.fd_derivative == pytest.approx(8 * np.pi, rel=1e-5)
        assert chk.relative_gap < 1e-7


def test_first_variation_random_speed(wulff_q2, quadric3):
    rng = np.random.default_rng(17)
    x = wulff_q2.positions
    speed = x @ rng.normal(size=3) + 0.4 * x[:, 0] * x[:, 1]
    fam = geom.make_variation(wulff_q2, speed)
    for r in (0, 1):
        chk = fn.first_variation_check(fam, quadric3, r)
        assert chk.gap <= max(1e-4 * abs(chk.formula_value), 1e-6)


def test_volume_derivative_rider(sphere2):
    fam = geom.make_variation(sphere2, -np.ones(sphere2.node_count))
    chk = fn.volume_derivative_check(fam)
    assert chk.expected == pytest.approx(4 * np.pi, rel=1e-7)
    assert chk.gap < 1e-6


def test_volume_preserved_for_mean_zero_speed(sphere2):
    z = sphere2.positions[:, 2]
    fam = geom.make_variation(sphere2, z)
    chk = fn.volume_derivative_check(fam)
    assert abs(chk.expected) < 1e-10
    assert abs(chk.fd_derivative) < 1e-8


def test_homothety_scaling(iso_model, quadric3):
    # area_r(lam X) = lam^(n-r) area_r(X)
    lam = 1.7
    base = geom.build_sphere(1.0, 2, 32)
    scaled = geom.build_sphere(lam, 2, 32)
    for model in (iso_model, quadric3):
        for r in (0, 1, 2):
            expected = lam ** (2 - r) * fn.area_r(base, model, r)
            assert fn.area_r(scaled, model, r) == pytest.approx(expected, rel=1e-8)
