"""anisolab: numerical laboratory for anisotropic curvature identities and
Wulff-shape stability on sampled closed hypersurfaces."""

__version__ = "0.1.0"

from .anisotropy import (
    AnisotropyModel,
    a_f_operator,
    cahn_hoffman,
    convexity_scan,
    custom,
    eval_F,
    isotropic,
    pnorm,
    quadric,
    ripple,
)
from .curvalg import (
    CurvaturePoint,
    anisotropic_curvatures,
    curvature_fields,
    discriminant_p,
    maclaurin_check,
    make_curvature_point,
    newton_eps,
    newton_ops,
    sf_operator,
    sigma_charpoly,
    sigma_eps,
    trace_checks,
)
from .errors import (
    AnisolabError,
    BuildError,
    ConditioningError,
    ConsistencyError,
    ConvexityError,
    InputDomainError,
    ModelValidityError,
)
from .functionals import (
    area_r,
    area_rs,
    enclosed_volume,
    first_variation_check,
    minkowski_residual,
    volume_derivative_check,
)
from .geometry import (
    SampledImmersion,
    VariationFamily,
    build_ellipsoid,
    build_normal_graph,
    build_parametric,
    build_sphere,
    build_torus,
    build_wulff,
    integrate,
    make_variation,
    support_and_tangent,
    surface_divergence,
    surface_gradient,
    transformed_immersion,
)
from .stability import (
    StabilityProblem,
    StabilityReport,
    build_test_function,
    jacobi_qform_fd,
    jacobi_qform_operator,
    lemma26_residuals,
    op_Ij,
    op_Lj,
    theorem_pipeline,
)
