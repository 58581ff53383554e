"""Anisotropy functions F on the unit sphere and the operator A_F.

A model stores the degree-1 homogeneous extension of F to ambient space; all
derivatives are taken on that extension.  For unit x the ambient Hessian
restricted to the tangent space of the sphere equals the tangential-Hessian
operator A_F, and the ambient gradient is the Cahn-Hoffman map whose image is
the Wulff boundary.  Evaluators broadcast over leading axes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConvexityError, InputDomainError, ModelValidityError

UNIT_TOL = 1e-12
# central-difference steps for evaluator-only custom models; the Hessian step is
# larger because second differences lose ~eps/h**2 to roundoff
FD_GRAD_STEP = 1e-5
FD_HESS_STEP = 1.2e-4


@dataclass(frozen=True)
class AnisotropyModel:
    """Bundle of evaluators for the 1-homogeneous extension of F."""

    kind: str
    extension_eval: Callable
    extension_grad: Callable
    extension_hess: Callable
    analytic: bool = True
    params: dict = field(default_factory=dict)
    key: str = ""

    def value(self, y):
        return self.extension_eval(np.asarray(y, dtype=float))

    def gradient(self, y):
        return self.extension_grad(np.asarray(y, dtype=float))

    def hessian(self, y):
        return self.extension_hess(np.asarray(y, dtype=float))


def _model_key(kind, params):
    blob = repr(sorted(params.items())).encode()
    return kind + ":" + hashlib.sha256(blob).hexdigest()[:12]


def _fd_gradient(func, y, step_scale=FD_GRAD_STEP):
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    h = step_scale * np.linalg.norm(y, axis=-1, keepdims=True)
    out = np.empty(y.shape, dtype=float)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        out[..., i] = (func(y + h * e) - func(y - h * e)) / (2.0 * h[..., 0])
    return out


def _fd_hessian(func, y, step_scale=FD_HESS_STEP):
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    h = step_scale * np.linalg.norm(y, axis=-1, keepdims=True)
    f0 = func(y)
    out = np.empty(y.shape + (d,), dtype=float)
    eye = np.eye(d)
    for i in range(d):
        hi = h * eye[i]
        out[..., i, i] = (func(y + hi) - 2.0 * f0 + func(y - hi)) / (h[..., 0] ** 2)
        for j in range(i + 1, d):
            hj = h * eye[j]
            mixed = (
                func(y + hi + hj) - func(y + hi - hj) - func(y - hi + hj) + func(y - hi - hj)
            ) / (4.0 * h[..., 0] ** 2)
            out[..., i, j] = mixed
            out[..., j, i] = mixed
    return out


def isotropic():
    """F identically 1 on the sphere; extension is the Euclidean norm."""

    def val(y):
        return np.linalg.norm(y, axis=-1)

    def grad(y):
        return y / np.linalg.norm(y, axis=-1, keepdims=True)

    def hess(y):
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        u = y / r
        eye = np.eye(y.shape[-1])
        return (eye - u[..., :, None] * u[..., None, :]) / r[..., None]

    return AnisotropyModel("isotropic", val, grad, hess, key=_model_key("isotropic", {}))


def quadric(Q):
    """F(x) = sqrt(x.Q.x) for symmetric positive-definite Q."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise InputDomainError("quadric matrix must be square")
    if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
        raise InputDomainError("quadric matrix must be symmetric")
    if np.min(np.linalg.eigvalsh(Q)) <= 0:
        raise ModelValidityError("quadric matrix must be positive definite")

    def val(y):
        return np.sqrt(np.einsum("...i,ij,...j->...", y, Q, y))

    def grad(y):
        return np.einsum("ij,...j->...i", Q, y) / val(y)[..., None]

    def hess(y):
        f = val(y)
        qy = np.einsum("ij,...j->...i", Q, y)
        return Q / f[..., None, None] - qy[..., :, None] * qy[..., None, :] / f[..., None, None] ** 3

    params = {"Q": Q.tobytes(), "shape": Q.shape}
    return AnisotropyModel("quadric", val, grad, hess, params={"Q": Q}, key=_model_key("quadric", params))


def pnorm(p):
    """F(x) = p-norm of x, p an even integer >= 2 so F is smooth on the sphere."""
    p = int(p)
    if p < 2 or p % 2 != 0:
        raise InputDomainError("p-norm models require an even integer p >= 2")
    if p == 2:
        return isotropic()

    def val(y):
        return np.sum(y**p, axis=-1) ** (1.0 / p)

    def grad(y):
        f = val(y)
        return y ** (p - 1) * f[..., None] ** (1 - p)

    def hess(y):
        f = val(y)
        g = y ** (p - 1) * f[..., None] ** (1 - p)
        diag = y ** (p - 2) * f[..., None] ** (1 - p)
        d = y.shape[-1]
        out = -(p - 1) / f[..., None, None] * g[..., :, None] * g[..., None, :]
        idx = np.arange(d)
        out[..., idx, idx] += (p - 1) * diag
        return out

    return AnisotropyModel("pnorm", val, grad, hess, params={"p": p}, key=_model_key("pnorm", {"p": p}))


def custom(evaluator, gradient=None, hessian=None, name="custom"):
    """Wrap a user 1-homogeneous evaluator; missing derivatives fall back to
    central finite differences (gradient step 1e-5|y|, Hessian step 1.2e-4|y|)."""
    analytic = gradient is not None and hessian is not None
    grad = gradient if gradient is not None else (lambda y: _fd_gradient(evaluator, y))
    hess = hessian if hessian is not None else (lambda y: _fd_hessian(evaluator, y))
    key = _model_key(name, {"id": id(evaluator)})
    return AnisotropyModel(name, evaluator, grad, hess, analytic=analytic, key=key)


def ripple(amplitude=0.9, frequency=6):
    """Sectoral-harmonic ripple 1 + a*Re((y1+i y2)^m)/|y|^m; non-convex for large a*m^2.

    Exposed as a ready-made custom model (evaluator only, FD derivatives) so the
    convexity scan has a rejected example to chew on.
    """
    a = float(amplitude)
    m = int(frequency)

    def val(y):
        r = np.linalg.norm(y, axis=-1)
        z = y[..., 0] + 1j * y[..., 1]
        return r * (1.0 + a * np.real(z**m) / r**m)

    model = custom(val, name="ripple")
    return AnisotropyModel(
        model.kind,
        model.extension_eval,
        model.extension_grad,
        model.extension_hess,
        analytic=False,
        params={"amplitude": a, "frequency": m},
        key=_model_key("ripple", {"a": a, "m": m}),
    )


def from_config(spec):
    """Build a model from a config mapping: {kind: isotropic|quadric|pnorm|ripple, ...}."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InputDomainError("anisotropy config must be a mapping with a 'kind' entry")
    kind = spec["kind"]
    known = {
        "isotropic": (),
        "quadric": ("Q",),
        "pnorm": ("p",),
        "ripple": ("amplitude", "frequency"),
    }
    if kind not in known:
        raise InputDomainError(f"unknown anisotropy kind {kind!r}")
    extra = set(spec) - {"kind"} - set(known[kind])
    if extra:
        raise InputDomainError(f"unknown anisotropy keys {sorted(extra)} for kind {kind!r}")
    if kind == "isotropic":
        return isotropic()
    if kind == "quadric":
        if "Q" not in spec:
            raise InputDomainError("quadric anisotropy requires 'Q'")
        return quadric(np.asarray(spec["Q"], dtype=float))
    if kind == "pnorm":
        if "p" not in spec:
            raise InputDomainError("pnorm anisotropy requires 'p'")
        return pnorm(spec["p"])
    return ripple(spec.get("amplitude", 0.9), spec.get("frequency", 6))


def _check_unit(x):
    norms = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
        raise InputDomainError(
            f"input must be a unit vector (|x|-1 up to {np.max(np.abs(norms - 1.0)):.2e})"
        )


def eval_F(model, x):
    """F at unit direction(s) x; raises if x is off the sphere or F not positive."""
    _check_unit(x)
    f = model.value(x)
    if np.min(f) <= 0.0:
        raise ModelValidityError(f"anisotropy is not positive (min {np.min(f):.3e})")
    return f


def a_f_operator(model, x, frame, validate=True):
    """Matrix of A_F at x in an orthonormal tangent frame (rows of `frame`).

    Equals the ambient Hessian of the 1-homogeneous extension restricted to the
    frame, which coincides with the tangential Hessian plus F times identity.
    """
    x = np.asarray(x, dtype=float)
    frame = np.asarray(frame, dtype=float)
    if validate:
        _check_unit(x)
        gram = np.einsum("...ak,...bk->...ab", frame, frame)
        eye = np.eye(frame.shape[-2])
        if np.max(np.abs(gram - eye)) > UNIT_TOL:
            raise InputDomainError("tangent frame is not orthonormal")
        tang = np.einsum("...ak,...k->...a", frame, x)
        if np.max(np.abs(tang)) > UNIT_TOL:
            raise InputDomainError("tangent frame is not orthogonal to x")
    hess = model.hessian(x)
    a = np.einsum("...ai,...ij,...bj->...ab", frame, hess, frame)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def cahn_hoffman(model, x):
    """Cahn-Hoffman point F(x) x + grad_S F(x) = ambient gradient of the extension."""
    _check_unit(x)
    return model.gradient(x)


def sphere_grid(dim, resolution):
    """Offset lat-long style grid of unit vectors on S^(dim-1), dim in {3, 4}."""
    if dim not in (3, 4):
        raise InputDomainError("sphere_grid supports ambient dimension 3 or 4")
    n_col = int(resolution)
    n_phi = 2 * n_col
    theta = (np.arange(n_col) + 0.5) * np.pi / n_col
    phi = np.arange(n_phi) * 2.0 * np.pi / n_phi
    if dim == 3:
        t, p = np.meshgrid(theta, phi, indexing="ij")
        pts = np.stack(
            [np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1
        )
    else:
        t, s, p = np.meshgrid(theta, theta, phi, indexing="ij")
        pts = np.stack(
            [
                np.sin(t) * np.sin(s) * np.cos(p),
                np.sin(t) * np.sin(s) * np.sin(p),
                np.sin(t) * np.cos(s),
                np.cos(t),
            ],
            axis=-1,
        )
    return pts.reshape(-1, dim)


def tangent_frame_at(x):
    """Deterministic orthonormal basis of the tangent space at unit x (rows)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    proj = np.eye(d) - x[..., :, None] * x[..., None, :]
    w, v = np.linalg.eigh(proj)
    # eigenvalues ~ {0, 1, ..., 1}; drop the radial eigenvector (smallest)
    frame = np.swapaxes(v[..., :, 1:], -1, -2)
    return frame


@dataclass
class ConvexityReport:
    min_eigenvalue: float
    argmin_point: np.ndarray
    resolution: int
    accepted: bool


def convexity_scan(model, resolution=64, dim=3):
    """Minimum eigenvalue of A_F over an offset sphere grid; accepted iff > 0."""
    if resolution < 8:
        raise InputDomainError("convexity scan needs resolution >= 8")
    pts = sphere_grid(dim, resolution)
    frames = tangent_frame_at(pts)
    a = a_f_operator(model, pts, frames, validate=False)
    eigs = np.linalg.eigvalsh(a)
    mins = eigs[..., 0]
    k = int(np.argmin(mins))
    return ConvexityReport(
        min_eigenvalue=float(mins[k]),
        argmin_point=pts[k],
        resolution=int(resolution),
        accepted=bool(mins[k] > 0.0),
    )


def require_spd(a, tol=1e-10):
    """Raise ConvexityError unless every stacked matrix in `a` is SPD."""
    a = np.asarray(a, dtype=float)
    if np.max(np.abs(a - np.swapaxes(a, -1, -2))) > tol * max(1.0, np.max(np.abs(a))):
        raise ConvexityError("A_F matrix is not symmetric")
    w = np.linalg.eigvalsh(a)
    if np.min(w) <= 0.0:
        raise ConvexityError(f"A_F is not positive definite (min eigenvalue {np.min(w):.3e})")


def validate_model(model, n_samples=200, seed=7):
    """Positivity / homogeneity / Euler / radial-annihilation residuals at random points.

    Analytic models are held to 1e-10 relative; evaluator-only customs carry
    O(step^2) finite-difference error and are held to 1e-4.
    """
    rng = np.random.default_rng(seed)
    d = None
    for probe in (3, 4):
        try:
            model.value(np.ones(probe) / np.sqrt(probe))
            d = probe
            break
        except Exception:
            continue
    if d is None:
        raise ModelValidityError("model evaluator rejected 3d and 4d probes")
    y = rng.normal(size=(n_samples, d))
    y /= np.linalg.norm(y, axis=-1, keepdims=True)
    f = model.value(y)
    lam = rng.uniform(0.5, 2.0, size=n_samples)
    hom = np.abs(model.value(lam[:, None] * y) - lam * f) / np.abs(f)
    grad = model.gradient(y)
    euler = np.abs(np.einsum("ki,ki->k", grad, y) - f) / np.abs(f)
    hess = model.hessian(y)
    radial = np.max(np.abs(np.einsum("kij,kj->ki", hess, y)), axis=-1) / np.abs(f)
    tol = 1e-10 if model.analytic else 1e-4
    report = {
        "min_F": float(np.min(f)),
        "homogeneity": float(np.max(hom)),
        "euler": float(np.max(euler)),
        "radial": float(np.max(radial)),
        "tolerance": tol,
    }
    report["ok"] = bool(
        report["min_F"] > 0.0
        and report["homogeneity"] <= tol
        and report["euler"] <= tol
        and report["radial"] <= tol
    )
    return report
