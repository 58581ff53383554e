"""Second-variation apparatus: divergence-form operators, the closed-form
identities they satisfy, the Jacobi quadratic form by three independent
routes, and the Wulff equality-case verification pipeline.

Route inventory for J''(0)[f]:
  * operator route:  -integral( f * sum_j (j+1) a_j (L_j f + q_j f) ),
    with L_j f = div(T_j grad f) and q_j = tr(T_j S^2); the integration-by-
    parts twin sum_j (j+1) a_j ( int <T_j grad f, grad f> - int q_j f^2 )
    is computed alongside;
  * closed-form route: the grouped-term expression obtained by substituting
    the I_j identities for F(nu) and <X, nu> and eliminating the mixed term
    with the Minkowski identity (requires constant beta);
  * finite-difference route: 5-point second derivative in t of
    area_rs(X_t) + Lambda * enclosed_volume(X_t) with Lambda = -beta, the
    multiplier killing the first variation for arbitrary (not mean-zero)
    speeds under the inward-speed sign conventions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curvalg import b_coefficient, curvature_fields
from .errors import ConditioningError, InputDomainError
from .functionals import area_rs, enclosed_volume
from .geometry import integrate, support_and_tangent, surface_divergence, surface_gradient, make_variation
from .numerics import derivative_plateau

DEFAULT_TOLS = {
    "beta_rel": 1e-3,  # allowed relative deviation of the beta field
    "degenerate_rel": 1e-3,  # |f|_L2 below this fraction of the f scale -> degenerate
    "route_rel": 1e-3,  # relative route agreement
    "route_abs_scale": 1e-4,  # absolute agreement floor, times the f^2 scale
    "gap_rel": 1e-6,  # equality-gap tolerance relative to the H1*H_{j+1} scale
    "j2_rel": 1e-4,  # |J''| below this fraction of the f^2 scale counts as zero
}


@dataclass
class StabilityProblem:
    """An (r, s, F) stability instance on a sampled immersion."""

    immersion: object
    model: object
    r: int
    s: int
    a: np.ndarray
    workers: int = 1

    def __post_init__(self):
        n = self.immersion.n
        self.a = np.asarray(self.a, dtype=float)
        if not 0 <= self.r <= self.s <= n - 2:
            raise InputDomainError(
                f"(r, s) = ({self.r}, {self.s}) violates 0 <= r <= s <= n-2 for n={n}"
            )
        if self.a.shape != (self.s - self.r + 1,):
            raise InputDomainError(
                f"need {self.s - self.r + 1} coefficients a_r..a_s, got shape {self.a.shape}"
            )
        if np.any(self.a < 0.0) or not np.any(self.a > 0.0):
            raise InputDomainError("coefficients must be nonnegative, not all zero")
        self.b = [b_coefficient(n, j) for j in range(self.r, self.s + 1)]

    @property
    def n(self):
        return self.immersion.n

    @property
    def fields(self):
        return curvature_fields(self.immersion, self.model, workers=self.workers)

    def a_of(self, j):
        return float(self.a[j - self.r])

    def b_of(self, j):
        return float(self.b[j - self.r])


def op_Lj(problem, j, f):
    """Divergence-form operator L_j f = div(T_j grad f)."""
    imm = problem.immersion
    grad = surface_gradient(imm, f)
    flux = np.einsum("mab,mb->ma", problem.fields.t[j], grad)
    return surface_divergence(imm, flux)


def q_coefficients(problem, j):
    """Zeroth-order coefficients: primary tr(T_j S^2) and the alternative
    reading tr(P_j S_F^2); they differ whenever A_F and S do not commute."""
    flds = problem.fields
    s2 = flds.s @ flds.s
    q_primary = np.einsum("mab,mba->m", flds.t[j], s2)
    sf2 = flds.s_f @ flds.s_f
    q_alt = np.einsum("mab,mba->m", flds.p[j], sf2)
    return q_primary, q_alt


def op_Ij(problem, j, f, use_alt_q=False):
    """I_j[f] = L_j f + q_j f with the primary (or alternative) q reading."""
    q_primary, q_alt = q_coefficients(problem, j)
    q = q_alt if use_alt_q else q_primary
    return op_Lj(problem, j, f) + q * f


@dataclass
class Lemma26Result:
    j: int
    res1: np.ndarray  # I_j[<X, nu>] + <grad sigma_{j+1}, X^T> + (j+1) sigma_{j+1}
    res2: np.ndarray  # I_j[F(nu)] - <grad sigma_{j+1}, gradF o nu> - (s1 s_{j+1} - (j+2) s_{j+2})
    max1: float
    max2: float
    scale: float


def lemma26_residuals(problem, j):
    """Residual fields of the two closed-form identities for I_j.

    With the orientation conventions of this package (inward nu stored,
    anisotropy evaluated at the outward normal) the identities read

      I_j[<X, nu>]  = -<grad sigma_{j+1}, X^T> - (j+1) sigma_{j+1}
      I_j[F(nu_out)] = +<grad sigma_{j+1}, (grad_S F) o nu_out>
                         + sigma_1 sigma_{j+1} - (j+2) sigma_{j+2}

    both with plain elementary-symmetric sigma.
    """
    imm = problem.immersion
    flds = problem.fields
    support, x_tan = support_and_tangent(imm)
    grad_sigma = surface_gradient(imm, flds.sigma[:, j + 1])

    lhs1 = op_Ij(problem, j, support)
    rhs1 = -np.einsum("ma,ma->m", grad_sigma, x_tan) - (j + 1) * flds.sigma[:, j + 1]
    res1 = lhs1 - rhs1

    s_j2 = flds.sigma[:, j + 2] if j + 2 <= problem.n else np.zeros(imm.node_count)
    lhs2 = op_Ij(problem, j, flds.f_nu)
    rhs2 = (
        np.einsum("ma,ma->m", grad_sigma, flds.grad_sn_f)
        + flds.sigma[:, 1] * flds.sigma[:, j + 1]
        - (j + 2) * s_j2
    )
    res2 = lhs2 - rhs2

    scale = float(np.max(np.abs(flds.sigma[:, 1] * flds.sigma[:, j + 1])) + 1.0)
    return Lemma26Result(
        j=j,
        res1=res1,
        res2=res2,
        max1=float(np.max(np.abs(res1))),
        max2=float(np.max(np.abs(res2))),
        scale=scale,
    )


@dataclass
class TestFunction:
    f: np.ndarray
    alpha: float
    beta: float
    beta_deviation: float  # max |beta field - beta|
    mean_zero_residual: float
    f_scale: float  # L2 norm of |alpha| F + |beta| |support|
    f_norm: float  # L2 norm of f
    degenerate: bool
    h_next_min: float  # min over nodes of H_{s+1}
    hypothesis_ok: bool


def beta_field(problem):
    """The field sum_j a_j b_j H_{j+1}; constant under the theorem hypothesis."""
    flds = problem.fields
    total = np.zeros(problem.immersion.node_count)
    for j in range(problem.r, problem.s + 1):
        total += problem.a_of(j) * problem.b_of(j) * flds.h[:, j + 1]
    return total


def build_test_function(problem, tols=None):
    """Assemble f = alpha F(nu) + beta <X, nu> and the hypothesis diagnostics.

    alpha integrates sum a_j b_j F H_j against the volume form and divides by
    the integral of F; beta is the area mean of the beta field.  On matched
    Wulff samples (and round spheres) f vanishes identically: this degenerate
    case is detected by comparing |f|_L2 against the scale of its two parts.
    """
    tols = {**DEFAULT_TOLS, **(tols or {})}
    imm = problem.immersion
    flds = problem.fields
    support, _ = support_and_tangent(imm)
    area = integrate(imm, np.ones(imm.node_count))

    bfield = beta_field(problem)
    beta = integrate(imm, bfield) / area
    beta_dev = float(np.max(np.abs(bfield - beta)))

    numer = np.zeros(imm.node_count)
    for j in range(problem.r, problem.s + 1):
        numer += problem.a_of(j) * problem.b_of(j) * flds.f_nu * flds.h[:, j]
    alpha = integrate(imm, numer) / integrate(imm, flds.f_nu)

    f = alpha * flds.f_nu + beta * support
    mean_zero = abs(integrate(imm, f))
    f_norm = float(np.sqrt(integrate(imm, f**2)))
    scale_field = abs(alpha) * flds.f_nu + abs(beta) * np.abs(support)
    f_scale = float(np.sqrt(integrate(imm, scale_field**2)))

    h_next_min = float(np.min(flds.h[:, problem.s + 1]))
    hypothesis_ok = bool(
        h_next_min > 0.0 and beta_dev <= tols["beta_rel"] * max(abs(beta), 1e-30)
    )
    degenerate = bool(f_norm <= tols["degenerate_rel"] * max(f_scale, 1e-30))
    if degenerate:
        f = np.zeros_like(f)
    return TestFunction(
        f=f,
        alpha=float(alpha),
        beta=float(beta),
        beta_deviation=beta_dev,
        mean_zero_residual=mean_zero,
        f_scale=f_scale,
        f_norm=f_norm,
        degenerate=degenerate,
        h_next_min=h_next_min,
        hypothesis_ok=hypothesis_ok,
    )


def _require_mean_zero(imm, f):
    total = abs(integrate(imm, f))
    scale = integrate(imm, np.abs(f))
    if total > 1e-8 * max(scale, 1e-30):
        raise InputDomainError(
            f"test function is not mean-zero (integral {total:.3e} vs scale {scale:.3e})"
        )


@dataclass
class JacobiOperatorResult:
    value: float  # -int f R[f]
    by_parts: float  # sum (j+1) a_j ( int <T_j grad f, grad f> - int q_j f^2 )
    mismatch: float
    value_alt_q: float  # same with the alternative q reading


def jacobi_qform_operator(problem, f):
    """Second-variation quadratic form by the operator route."""
    f = np.asarray(f, dtype=float)
    imm = problem.immersion
    _require_mean_zero(imm, f)
    if not np.any(f):
        return JacobiOperatorResult(0.0, 0.0, 0.0, 0.0)
    grad = surface_gradient(imm, f)
    direct = 0.0
    direct_alt = 0.0
    parts = 0.0
    for j in range(problem.r, problem.s + 1):
        w = (j + 1) * problem.a_of(j)
        q_primary, q_alt = q_coefficients(problem, j)
        lj = op_Lj(problem, j, f)
        direct += -w * integrate(imm, f * (lj + q_primary * f))
        direct_alt += -w * integrate(imm, f * (lj + q_alt * f))
        flux = np.einsum("mab,mb->ma", problem.fields.t[j], grad)
        parts += w * (
            integrate(imm, np.einsum("ma,ma->m", flux, grad))
            - integrate(imm, q_primary * f**2)
        )
    return JacobiOperatorResult(
        value=direct,
        by_parts=parts,
        mismatch=abs(direct - parts),
        value_alt_q=direct_alt,
    )


@dataclass
class JacobiFDResult:
    value: float
    first_derivative: float
    step: float
    estimate: float
    lam: float


def jacobi_qform_fd(problem, f, beta=None, base_step=0.1, n_steps=3):
    """FD second derivative of t -> area_rs + Lambda * volume along X + t f nu.

    Lambda = -beta makes the first variation vanish identically (not just on
    mean-zero speeds) at a critical immersion, so the quadratic term equals
    the constrained second variation regardless of the family's acceleration.
    """
    f = np.asarray(f, dtype=float)
    imm = problem.immersion
    _require_mean_zero(imm, f)
    if beta is None:
        area = integrate(imm, np.ones(imm.node_count))
        beta = integrate(imm, beta_field(problem)) / area
    lam = -float(beta)
    if not np.any(f):
        return JacobiFDResult(0.0, 0.0, 0.0, 0.0, lam)
    family = make_variation(imm, f)

    def j_of_t(t):
        imm_t = family.evaluate_at(t)
        return (
            area_rs(imm_t, problem.model, problem.r, problem.s, problem.a)
            + lam * enclosed_volume(imm_t)
        )

    speed_scale = max(1.0, float(np.max(np.abs(f))))
    second, step, est = derivative_plateau(
        j_of_t, order=2, base_step=base_step / speed_scale, n_steps=n_steps
    )
    first, _, _ = derivative_plateau(
        j_of_t, order=1, base_step=base_step / speed_scale, n_steps=n_steps
    )
    return JacobiFDResult(value=second, first_derivative=first, step=step, estimate=est, lam=lam)


@dataclass
class Eq13Term:
    j: int
    gap_term: float  # -a_j b_j (n-j-1) alpha^2 int F (H1 H_{j+1} - H_{j+2})
    poly_term: float  # -a_j b_j (j+1) int F (H1 H_{j+1} a^2 - 2 H_{j+1} a b + H_j b^2)
    gap_scale: float
    poly_scale: float
    gap_max: float  # max |H1 H_{j+1} - H_{j+2}| over nodes
    gap_min: float  # min of the gap field (sign diagnostic)
    poly_at_alpha_max: float
    poly_at_alpha_min: float


def eq13_terms(problem, alpha, beta, restrict=None):
    """Grouped second-variation terms and their pointwise sign diagnostics.

    `restrict` optionally masks the pointwise sign diagnostics (used in
    exploratory mode to look only where H_{s+1} > 0).
    """
    imm = problem.immersion
    flds = problem.fields
    n = problem.n
    out = []
    for j in range(problem.r, problem.s + 1):
        ab = problem.a_of(j) * problem.b_of(j)
        h1 = flds.h[:, 1]
        hj = flds.h[:, j]
        hj1 = flds.h[:, j + 1]
        hj2 = flds.h[:, j + 2]
        gap = h1 * hj1 - hj2
        poly = h1 * hj1 * alpha**2 - 2.0 * hj1 * alpha * beta + hj * beta**2
        gap_term = -ab * (n - j - 1) * alpha**2 * integrate(imm, flds.f_nu * gap)
        poly_term = -ab * (j + 1) * integrate(imm, flds.f_nu * poly)
        gap_scale = abs(ab * (n - j - 1) * alpha**2) * integrate(
            imm, flds.f_nu * np.abs(h1 * hj1)
        )
        poly_scale = abs(ab * (j + 1)) * integrate(
            imm,
            flds.f_nu
            * (
                np.abs(h1 * hj1) * alpha**2
                + 2.0 * np.abs(hj1 * alpha * beta)
                + np.abs(hj) * beta**2
            ),
        )
        mask = slice(None) if restrict is None else restrict
        gap_view = gap[mask]
        poly_view = (flds.f_nu * poly)[mask]
        out.append(
            Eq13Term(
                j=j,
                gap_term=float(gap_term),
                poly_term=float(poly_term),
                gap_scale=float(max(gap_scale, 1e-30)),
                poly_scale=float(max(poly_scale, 1e-30)),
                gap_max=float(np.max(np.abs(gap_view))) if gap_view.size else float("nan"),
                gap_min=float(np.min(gap_view)) if gap_view.size else float("nan"),
                poly_at_alpha_max=float(np.max(np.abs(poly_view))) if poly_view.size else float("nan"),
                poly_at_alpha_min=float(np.min(poly_view)) if poly_view.size else float("nan"),
            )
        )
    return out


@dataclass
class StabilityReport:
    n: int
    r: int
    s: int
    a: list
    alpha: float
    beta: float
    beta_deviation: float
    mean_zero_residual: float
    h_next_min: float
    degenerate: bool
    hypothesis_ok: bool
    j2_operator: float
    j2_by_parts: float
    j2_operator_alt_q: float
    j2_lemma26: float
    j2_fd: float
    fd_first_derivative: float
    lam: float
    route_gap: float
    f_scale: float
    f_norm: float
    eq13: list
    kappa_spread: float
    a_f_min_eig: float
    verdict: str

    def to_dict(self):
        d = {
            "n": self.n,
            "r": self.r,
            "s": self.s,
            "a": list(map(float, self.a)),
            "alpha": self.alpha,
            "beta": self.beta,
            "beta_deviation": self.beta_deviation,
            "mean_zero_residual": self.mean_zero_residual,
            "h_next_min": self.h_next_min,
            "degenerate_test_function": self.degenerate,
            "hypothesis_ok": self.hypothesis_ok,
            "j2_operator": self.j2_operator,
            "j2_by_parts": self.j2_by_parts,
            "j2_operator_alt_q": self.j2_operator_alt_q,
            "j2_lemma26": self.j2_lemma26,
            "j2_fd": self.j2_fd,
            "fd_first_derivative": self.fd_first_derivative,
            "lambda": self.lam,
            "route_gap": self.route_gap,
            "f_scale": self.f_scale,
            "f_norm": self.f_norm,
            "kappa_spread": self.kappa_spread,
            "a_f_min_eig": self.a_f_min_eig,
            "verdict": self.verdict,
            "eq13_terms": [
                {
                    "j": t.j,
                    "gap_term": t.gap_term,
                    "poly_term": t.poly_term,
                    "gap_term_relative": t.gap_term / t.gap_scale,
                    "poly_term_relative": t.poly_term / t.poly_scale,
                    "gap_max": t.gap_max,
                    "gap_min": t.gap_min,
                    "poly_at_alpha_max": t.poly_at_alpha_max,
                    "poly_at_alpha_min": t.poly_at_alpha_min,
                }
                for t in self.eq13
            ],
        }
        return d


def theorem_pipeline(problem, tols=None):
    """Run the full equality-case verification and return a StabilityReport.

    Verdicts: "wulff-equality" when the hypotheses hold and either the test
    function degenerates (matched Wulff data) or every equality gap vanishes
    within tolerance with all J'' routes at zero; "stable-consistent" when the
    hypotheses hold and J'' <= 0 within tolerance but the equality case is not
    resolved; "hypothesis-violated" otherwise (exploratory diagnostics still
    reported, restricted to nodes with positive H_{s+1}).
    """
    tols = {**DEFAULT_TOLS, **(tols or {})}
    imm = problem.immersion
    flds = problem.fields
    tf = build_test_function(problem, tols=tols)

    kappa = flds.with_kappa()
    kappa_spread = float(np.max(np.max(kappa, axis=-1) - np.min(kappa, axis=-1)))

    restrict = None
    if not tf.hypothesis_ok:
        restrict = flds.h[:, problem.s + 1] > 0.0
    terms = eq13_terms(problem, tf.alpha, tf.beta, restrict=restrict)
    j2_lemma26 = float(sum(t.gap_term + t.poly_term for t in terms))

    # exploratory mode: f misses mean-zero exactly because beta is not
    # constant; project so the quadratic-form routes stay well defined
    f_route = tf.f
    if not tf.hypothesis_ok and np.any(f_route):
        area = integrate(imm, np.ones(imm.node_count))
        f_route = f_route - integrate(imm, f_route) / area

    op = jacobi_qform_operator(problem, f_route)
    try:
        fd = jacobi_qform_fd(problem, f_route, beta=tf.beta)
    except ConditioningError:
        # degenerate anisotropies can leave the displaced geometry too rough
        # for a stable FD plateau; report the failure instead of aborting
        fd = JacobiFDResult(
            value=float("nan"),
            first_derivative=float("nan"),
            step=float("nan"),
            estimate=float("nan"),
            lam=-tf.beta,
        )
    route_gap = abs(op.value - fd.value)

    f2_scale = max(tf.f_scale**2, 1e-30)
    j2_zero = max(abs(op.value), abs(fd.value), abs(j2_lemma26)) <= tols["j2_rel"] * f2_scale
    gaps_zero = all(
        t.gap_max <= tols["gap_rel"] * max(1.0, np.max(np.abs(flds.h[:, 1] * flds.h[:, t.j + 1])))
        for t in terms
    )
    routes_agree = route_gap <= max(
        tols["route_rel"] * abs(fd.value), tols["route_abs_scale"] * f2_scale
    )

    if not tf.hypothesis_ok:
        verdict = "hypothesis-violated"
    elif tf.degenerate and gaps_zero:
        verdict = "wulff-equality"
    elif gaps_zero and j2_zero and routes_agree:
        verdict = "wulff-equality"
    elif routes_agree and op.value <= tols["j2_rel"] * f2_scale:
        verdict = "stable-consistent"
    else:
        verdict = "route-disagreement" if not routes_agree else "stable-consistent"

    return StabilityReport(
        n=problem.n,
        r=problem.r,
        s=problem.s,
        a=list(map(float, problem.a)),
        alpha=tf.alpha,
        beta=tf.beta,
        beta_deviation=tf.beta_deviation,
        mean_zero_residual=tf.mean_zero_residual,
        h_next_min=tf.h_next_min,
        degenerate=tf.degenerate,
        hypothesis_ok=tf.hypothesis_ok,
        j2_operator=op.value,
        j2_by_parts=op.by_parts,
        j2_operator_alt_q=op.value_alt_q,
        j2_lemma26=j2_lemma26,
        j2_fd=fd.value,
        fd_first_derivative=fd.first_derivative,
        lam=fd.lam,
        route_gap=route_gap,
        f_scale=tf.f_scale,
        f_norm=tf.f_norm,
        eq13=terms,
        kappa_spread=kappa_spread,
        a_f_min_eig=float(flds.a_f_min_eig),
        verdict=verdict,
    )
