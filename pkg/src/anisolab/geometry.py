"""Closed hypersurfaces sampled on structured chart grids.

Surfaces live on lat-long style grids with pole-offset colatitude nodes, so
every node is interior.  Ghost cells across the poles come from the exact
chart symmetries (theta -> -theta corresponds to a half-turn in phi, plus a
psi flip in the n=3 chart), which keeps the order-4 central stencils uniform
over the whole grid.  The same assembly pipeline serves the analytic builders
and displaced surfaces from variation families.

Conventions fixed here and relied on everywhere else:
  * stored normals point INWARD (toward the enclosed body),
  * the shape operator S is the derivative of the OUTWARD normal, so the
    round sphere of radius rho has S = +Id/rho and <X, nu> = -rho.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .errors import BuildError, InputDomainError
from .numerics import D1_COEFFS, D2_COEFFS, STENCIL_PAD, apply_stencil, deterministic_sum

MIN_RESOLUTION = 16

# End-correction factors for the offset-midpoint rule on a colatitude axis
# whose metric density has an odd-order zero at the pole (|sin| corner in the
# periodic extension): they cancel the Euler-Maclaurin boundary terms h^2/24 f'
# and 7h^4/5760 f''' with a vanishing fourth moment, giving order 7 with
# moderate coefficients (exact rationals 101/640, -2213/5760, 143/384,
# -349/1920, 103/2880; deeper stencils overshoot on integrands with large
# high derivatives at practical resolutions).
# Axes with even-order pole zeros (the first colatitude of the n=3 chart,
# density ~ sin^2) extend smoothly through the pole: the plain midpoint rule
# is already spectral there and gets no correction.
COLAT_END_CORRECTION = np.array(
    [101.0 / 640.0, -2213.0 / 5760.0, 143.0 / 384.0, -349.0 / 1920.0, 103.0 / 2880.0]
)


def _levi_civita(d):
    eps = np.zeros((d,) * d)
    for perm in permutations(range(d)):
        p = list(perm)
        sign, seen = 1, [False] * d
        for i in range(d):
            if seen[i]:
                continue
            j, ln = i, 0
            while not seen[j]:
                seen[j] = True
                j = p[j]
                ln += 1
            if ln % 2 == 0:
                sign = -sign
        eps[perm] = sign
    return eps


_EPS4 = _levi_civita(4)


@dataclass(frozen=True)
class GridMeta:
    """Structured-grid layout: axis kinds, sizes, spacings, pole-ghost family."""

    family: str  # "spherelike" | "torus"
    n: int
    shape: tuple
    kinds: tuple  # "colat" | "periodic" per axis
    spacings: tuple

    @property
    def phi_axis(self):
        return self.n - 1

    @property
    def half_turn(self):
        return self.shape[self.phi_axis] // 2


def _companion(meta, axis):
    """Index transform applied to rows reflected across a colatitude axis."""

    def transform(block):
        if meta.family != "spherelike":
            return block
        out = block
        if axis == 0 and meta.n == 3:
            out = np.flip(out, axis=1)
        out = np.roll(out, meta.half_turn, axis=meta.phi_axis)
        return out

    return transform


def pad_grid(arr, meta, width, signs=None):
    """Pad grid axes of `arr` (trailing axes untouched) by `width` ghost cells.

    Colatitude axes reflect through the pole with the chart companion transform;
    periodic axes wrap.  `signs` maps a colatitude axis index to the factor
    (+-1) applied to its reflected blocks, used for coordinate-vector
    components which flip under the pole reflection.
    """
    signs = signs or {}
    out = arr
    for a in range(meta.n):
        if meta.kinds[a] != "colat":
            continue
        comp = _companion(meta, a)
        sgn = signs.get(a, 1.0)
        take = [slice(None)] * out.ndim
        take[a] = slice(0, width)
        bottom = sgn * np.flip(comp(out[tuple(take)]), axis=a)
        take[a] = slice(out.shape[a] - width, out.shape[a])
        top = sgn * np.flip(comp(out[tuple(take)]), axis=a)
        out = np.concatenate([bottom, out, top], axis=a)
    for a in range(meta.n):
        if meta.kinds[a] != "periodic":
            continue
        take = [slice(None)] * out.ndim
        take[a] = slice(out.shape[a] - width, out.shape[a])
        before = out[tuple(take)]
        take[a] = slice(0, width)
        after = out[tuple(take)]
        out = np.concatenate([before, out, after], axis=a)
    return out


@dataclass
class SampledImmersion:
    """Quadrature-node discretization of a closed hypersurface in R^(n+1)."""

    n: int
    meta: GridMeta
    positions: np.ndarray  # (M, n+1)
    normals: np.ndarray  # (M, n+1), inward
    frames: np.ndarray  # (M, n, n+1), orthonormal tangent rows
    shape_ops: np.ndarray  # (M, n, n), symmetric, frame components
    weights: np.ndarray  # (M,)
    chol: np.ndarray  # (M, n, n), lower Cholesky factor of the metric
    sqrt_det_g: np.ndarray  # (M,)
    flipped: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def node_count(self):
        return self.positions.shape[0]

    def grid(self, flat_field):
        """Reshape a per-node array back onto the chart grid."""
        flat_field = np.asarray(flat_field)
        return flat_field.reshape(self.meta.shape + flat_field.shape[1:])

    def area(self):
        return deterministic_sum(self.weights)


def _axis_needs_correction(meta, axis):
    """True when the signed density flips under this axis' pole reflection
    (det dR = -1), leaving a |sin|-type corner in the periodic extension."""
    if meta.kinds[axis] != "colat":
        return False
    signs = _density_signs(meta)
    return signs.get(axis, 1.0) < 0.0


def _grid_weights(meta):
    """Tensor-product chart-coordinate weights: spacing per axis, with the
    end-correction factors on odd-parity colatitude axes."""
    total = np.ones(meta.shape)
    for a in range(meta.n):
        w = np.full(meta.shape[a], meta.spacings[a])
        if _axis_needs_correction(meta, a):
            q = COLAT_END_CORRECTION.shape[0]
            w[:q] += meta.spacings[a] * COLAT_END_CORRECTION
            w[-q:] += meta.spacings[a] * COLAT_END_CORRECTION[::-1]
        shape = [1] * meta.n
        shape[a] = meta.shape[a]
        total = total * w.reshape(shape)
    return total


def _coordinate_partials(field_grid, meta, signs_for=None):
    """Order-6 first partial derivatives of a nodal field along every grid axis.

    `signs_for(axis)` may supply pole-reflection sign rules per axis (used for
    coordinate-vector components); scalar fields pad plainly.
    """
    width = STENCIL_PAD
    outs = []
    for a in range(meta.n):
        signs = signs_for(a) if signs_for is not None else None
        padded = pad_grid(field_grid, meta, width, signs=signs)
        da = apply_stencil(padded, a, D1_COEFFS, meta.spacings[a])
        sl = tuple(
            slice(width, -width) if b != a else slice(None) for b in range(meta.n)
        )
        outs.append(da[sl])
    return outs


def _assemble(positions_grid, meta):
    """Build an immersion from sampled positions: order-6 FD derivatives in chart
    coordinates, metric, inward normal, symmetrized shape operator, weights."""
    n, d = meta.n, meta.n + 1
    shape = meta.shape
    w = STENCIL_PAD
    core = tuple(slice(w, -w) for _ in range(n))

    xp = pad_grid(positions_grid, meta, 2 * w)

    d1 = []
    for a in range(n):
        da = apply_stencil(xp, a, D1_COEFFS, meta.spacings[a])
        sl = tuple(slice(w, -w) if b != a else slice(None) for b in range(n))
        d1.append(da[sl])  # uniformly padded by STENCIL_PAD grid cells

    d2 = {}
    for a in range(n):
        daa = apply_stencil(xp, a, D2_COEFFS, meta.spacings[a], power=2)
        sl = tuple(slice(w, -w) if b != a else slice(None) for b in range(n))
        d2[(a, a)] = daa[sl][core]
        for b in range(a + 1, n):
            dab = apply_stencil(d1[a], b, D1_COEFFS, meta.spacings[b])
            sl2 = tuple(slice(w, -w) if c != b else slice(None) for c in range(n))
            d2[(a, b)] = dab[sl2]
            d2[(b, a)] = d2[(a, b)]

    m = int(np.prod(shape))
    tang = np.empty((m, n, d))
    for a in range(n):
        tang[:, a, :] = d1[a][core].reshape(m, d)
    positions = positions_grid.reshape(m, d)

    g = np.einsum("mad,mbd->mab", tang, tang)
    detg = np.linalg.det(g)
    # a collapsed chart leaves cancellation noise with accidentally positive
    # determinants: also require tangents resolvable above float roundoff
    tang_scale = float(np.max(np.abs(tang))) * float(min(meta.spacings))
    pos_scale = float(np.max(np.abs(positions_grid)))
    if np.min(detg) <= 0.0 or tang_scale <= 1e-12 * (pos_scale + 1.0):
        bad = int(np.argmin(detg))
        raise BuildError(
            f"degenerate metric (det g = {detg[bad]:.3e}) at node "
            f"{np.unravel_index(bad, shape)}"
        )
    chol = np.linalg.cholesky(g)
    sqrt_detg = np.prod(np.diagonal(chol, axis1=-2, axis2=-1), axis=-1)

    if n == 2:
        raw_normal = np.cross(tang[:, 0], tang[:, 1])
    else:
        raw_normal = np.einsum(
            "abcd,mb,mc,md->ma", _EPS4, tang[:, 0], tang[:, 1], tang[:, 2]
        )
    nu = raw_normal / np.linalg.norm(raw_normal, axis=-1, keepdims=True)

    weights = sqrt_detg * _grid_weights(meta).reshape(m)

    # orient inward: enclosed volume -1/(n+1) * integral of <X, nu> must be positive
    vol = -deterministic_sum(weights * np.einsum("md,md->m", positions, nu)) / (n + 1)
    flipped = bool(vol < 0.0)
    if flipped:
        nu = -nu

    b2 = np.empty((m, n, n))
    for a in range(n):
        for b in range(a, n):
            proj = np.einsum("md,md->m", d2[(a, b)].reshape(m, d), nu)
            b2[:, a, b] = proj
            b2[:, b, a] = proj

    # S in the orthonormal frame rows e_a = (L^-1 T)_a:  S = L^-1 b L^-T
    w1 = np.linalg.solve(chol, b2)
    s_frame = np.linalg.solve(chol, np.swapaxes(w1, -1, -2))
    s_frame = 0.5 * (s_frame + np.swapaxes(s_frame, -1, -2))
    frames = np.linalg.solve(chol, tang)

    return SampledImmersion(
        n=n,
        meta=meta,
        positions=positions,
        normals=nu,
        frames=frames,
        shape_ops=s_frame,
        weights=weights,
        chol=chol,
        sqrt_det_g=sqrt_detg,
        flipped=flipped,
    )


# ---------------------------------------------------------------------------
# chart builders
# ---------------------------------------------------------------------------


def _check_resolution(resolution):
    if int(resolution) < MIN_RESOLUTION:
        raise InputDomainError(f"resolution must be >= {MIN_RESOLUTION} per coordinate")
    return int(resolution)


def _sphere_chart(n, resolution):
    """Unit-sphere chart samples on the offset grid; returns (meta, x_grid)."""
    nres = _check_resolution(resolution)
    nphi = 2 * nres
    theta = (np.arange(nres) + 0.5) * np.pi / nres
    phi = np.arange(nphi) * 2.0 * np.pi / nphi
    if n == 2:
        t, p = np.meshgrid(theta, phi, indexing="ij")
        x = np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)
        meta = GridMeta(
            "spherelike", 2, (nres, nphi), ("colat", "periodic"), (np.pi / nres, 2.0 * np.pi / nphi)
        )
    elif n == 3:
        t, s, p = np.meshgrid(theta, theta, phi, indexing="ij")
        x = np.stack(
            [
                np.sin(t) * np.sin(s) * np.cos(p),
                np.sin(t) * np.sin(s) * np.sin(p),
                np.sin(t) * np.cos(s),
                np.cos(t),
            ],
            axis=-1,
        )
        meta = GridMeta(
            "spherelike",
            3,
            (nres, nres, nphi),
            ("colat", "colat", "periodic"),
            (np.pi / nres, np.pi / nres, 2.0 * np.pi / nphi),
        )
    else:
        raise InputDomainError("supported hypersurface dimensions are n = 2 and n = 3")
    return meta, x


def build_sphere(radius=1.0, n=2, resolution=64):
    if radius <= 0:
        raise InputDomainError("sphere radius must be positive")
    meta, x = _sphere_chart(n, resolution)
    return _assemble(radius * x, meta)


def build_ellipsoid(semi_axes, resolution=64):
    axes = np.asarray(semi_axes, dtype=float)
    if axes.ndim != 1 or axes.shape[0] not in (3, 4):
        raise InputDomainError("semi_axes must list 3 (n=2) or 4 (n=3) positive lengths")
    if np.min(axes) <= 0:
        raise InputDomainError("semi-axes must be positive")
    meta, x = _sphere_chart(axes.shape[0] - 1, resolution)
    return _assemble(x * axes, meta)


def build_wulff(model, scale=1.0, n=2, resolution=64):
    """Sample the Wulff boundary of the model on the standard chart grid.

    Quadric models use the affine chart scale * Q^(1/2) x(u), which covers the
    same boundary ellipsoid as the Cahn-Hoffman image but with far smaller
    stencil constants (the Gauss-map chart crowds nodes near high-curvature
    zones).  Other models sample the Cahn-Hoffman map directly.
    """
    if scale <= 0:
        raise InputDomainError("wulff scale must be positive")
    meta, x = _sphere_chart(n, resolution)
    if model.kind == "isotropic":
        return _assemble(scale * x, meta)
    if model.kind == "quadric":
        q = model.params["Q"]
        if q.shape[0] != n + 1:
            raise InputDomainError(
                f"quadric model is {q.shape[0]}x{q.shape[0]} but the chart needs {n + 1}"
            )
        w, v = np.linalg.eigh(q)
        root = v @ np.diag(np.sqrt(w)) @ v.T
        return _assemble(scale * (x @ root.T), meta)
    return _assemble(scale * model.gradient(x), meta)


def build_torus(ring_radius=2.0, tube_radius=0.5, resolution=64):
    if not 0 < tube_radius < ring_radius:
        raise InputDomainError("torus requires 0 < tube_radius < ring_radius")
    nres = _check_resolution(resolution)
    nu_ = 2 * nres
    u = np.arange(nu_) * 2.0 * np.pi / nu_
    v = np.arange(nres) * 2.0 * np.pi / nres
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = np.stack(
        [
            (ring_radius + tube_radius * np.cos(vv)) * np.cos(uu),
            (ring_radius + tube_radius * np.cos(vv)) * np.sin(uu),
            tube_radius * np.sin(vv),
        ],
        axis=-1,
    )
    meta = GridMeta(
        "torus", 2, (nu_, nres), ("periodic", "periodic"), (2.0 * np.pi / nu_, 2.0 * np.pi / nres)
    )
    return _assemble(x, meta)


def build_normal_graph(base, speed, t):
    """Displaced surface X + t f nu rebuilt through the standard pipeline."""
    speed = np.asarray(speed, dtype=float)
    if speed.shape != (base.node_count,):
        raise InputDomainError("speed field must be defined at all nodes of the base")
    displaced = base.positions + t * speed[:, None] * base.normals
    return _assemble(base.grid(displaced), base.meta)


def build_parametric(spec, model=None):
    """Dispatch a config mapping to a builder.  Known builders: sphere, ellipsoid,
    wulff (needs the anisotropy model), torus."""
    if not isinstance(spec, dict) or "builder" not in spec:
        raise InputDomainError("surface config must be a mapping with a 'builder' entry")
    known = {
        "sphere": {"radius", "dimension", "resolution"},
        "ellipsoid": {"semi_axes", "resolution"},
        "wulff": {"scale", "dimension", "resolution"},
        "torus": {"ring_radius", "tube_radius", "resolution"},
    }
    builder = spec["builder"]
    if builder not in known:
        raise InputDomainError(f"unknown builder {builder!r}")
    extra = set(spec) - {"builder"} - known[builder]
    if extra:
        raise InputDomainError(f"unknown surface keys {sorted(extra)} for builder {builder!r}")
    res = spec.get("resolution", 64)
    if builder == "sphere":
        return build_sphere(spec.get("radius", 1.0), spec.get("dimension", 2), res)
    if builder == "ellipsoid":
        return build_ellipsoid(spec.get("semi_axes", [2.0, 1.0, 1.0]), res)
    if builder == "wulff":
        if model is None:
            raise InputDomainError("wulff builder requires an anisotropy model")
        return build_wulff(model, spec.get("scale", 1.0), spec.get("dimension", 2), res)
    return build_torus(spec.get("ring_radius", 2.0), spec.get("tube_radius", 0.5), res)


def transformed_immersion(imm, rotation=None, shift=None):
    """Rebuild after an ambient rigid motion X -> R X + c (same chart grid)."""
    pos = imm.positions
    if rotation is not None:
        rotation = np.asarray(rotation, dtype=float)
        pos = pos @ rotation.T
    if shift is not None:
        pos = pos + np.asarray(shift, dtype=float)
    return _assemble(imm.grid(pos), imm.meta)


# ---------------------------------------------------------------------------
# field operators
# ---------------------------------------------------------------------------


def surface_gradient(imm, fld):
    """Tangential gradient of a nodal scalar field, components in the frame rows."""
    fld = np.asarray(fld, dtype=float)
    if fld.shape != (imm.node_count,):
        raise InputDomainError("field must be defined at all nodes")
    partials = _coordinate_partials(imm.grid(fld), imm.meta)
    df = np.stack([p.reshape(imm.node_count) for p in partials], axis=-1)
    return np.linalg.solve(imm.chol, df[..., None])[..., 0]


def _component_signs(meta, comp):
    """Pole-reflection parity of coordinate-vector component `comp`: the deck
    map Jacobian entry (dR)_cc, per colatitude axis."""
    if meta.family != "spherelike":
        return None
    if meta.n == 2:
        # theta deck map dR = diag(-1, +1)
        return {0: -1.0} if comp == 0 else {0: 1.0}
    # n = 3: theta deck map diag(-1,-1,+1); psi deck map diag(+1,-1,+1)
    table = {
        0: {0: -1.0, 1: 1.0},
        1: {0: -1.0, 1: -1.0},
        2: {0: 1.0, 1: 1.0},
    }
    return table[comp]


def _density_signs(meta):
    """Pole-reflection parity det(dR) of the SMOOTH signed continuation of
    sqrt(det g); the positive Cholesky root has a |sin| corner at the pole."""
    if meta.family != "spherelike":
        return None
    if meta.n == 2:
        return {0: -1.0}
    return {0: 1.0, 1: -1.0}


def surface_divergence(imm, vec_frame):
    """Divergence of a tangent field given in frame components.

    Evaluated as sum_a [d_a W^a + W^a (d_a s)/s] with s the signed metric
    density; differencing s W^a directly and dividing by s would amplify the
    stencil truncation error by 1/s near the chart poles.
    """
    vec_frame = np.asarray(vec_frame, dtype=float)
    if vec_frame.shape != (imm.node_count, imm.n):
        raise InputDomainError("vector field must give frame components per node")
    lt = np.swapaxes(imm.chol, -1, -2)
    w_coord = np.linalg.solve(lt, vec_frame[..., None])[..., 0]
    meta = imm.meta
    width = STENCIL_PAD
    padded_s = pad_grid(imm.grid(imm.sqrt_det_g), meta, width, signs=_density_signs(meta))
    total = np.zeros(imm.node_count)
    for a in range(meta.n):
        comp_grid = imm.grid(w_coord[:, a])
        padded = pad_grid(comp_grid, meta, width, signs=_component_signs(meta, a))
        dwa = apply_stencil(padded, a, D1_COEFFS, meta.spacings[a])
        sl = tuple(slice(width, -width) if b != a else slice(None) for b in range(meta.n))
        total += dwa[sl].reshape(imm.node_count)

        dsa = apply_stencil(padded_s, a, D1_COEFFS, meta.spacings[a])
        log_term = dsa[sl].reshape(imm.node_count) / imm.sqrt_det_g
        total += w_coord[:, a] * log_term
    return total


def integrate(imm, fld):
    """Quadrature sum w * field in a fixed deterministic order."""
    fld = np.asarray(fld, dtype=float)
    if fld.shape != (imm.node_count,):
        raise InputDomainError("field must be defined at all nodes")
    return deterministic_sum(imm.weights * fld)


def support_and_tangent(imm):
    """Support function <X, nu> (inward nu) and tangential part of X in the frame."""
    support = np.einsum("md,md->m", imm.positions, imm.normals)
    tangential = np.einsum("mad,md->ma", imm.frames, imm.positions)
    return support, tangential


# ---------------------------------------------------------------------------
# variations
# ---------------------------------------------------------------------------


@dataclass
class VariationFamily:
    """Normal-graph family X_t = X + t f nu with geometry rebuilt per t."""

    base: SampledImmersion
    speed: np.ndarray
    _built: dict = field(default_factory=dict, repr=False)

    def evaluate_at(self, t):
        t = float(t)
        if t == 0.0 or not np.any(self.speed):
            return self.base
        if t not in self._built:
            self._built[t] = build_normal_graph(self.base, self.speed, t)
        return self._built[t]


def make_variation(base, speed):
    speed = np.asarray(speed, dtype=float)
    if speed.shape != (base.node_count,):
        raise InputDomainError("speed field must be defined at all nodes of the base")
    return VariationFamily(base=base, speed=speed)
