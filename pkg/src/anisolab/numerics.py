"""Finite-difference stencils, step-plateau search and deterministic reductions."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import ndimage

from .errors import ConditioningError

# order-6 central stencils on offsets [-3 .. +3]
D1_COEFFS = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
D2_COEFFS = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0
STENCIL_PAD = 3


def deterministic_sum(values):
    """Sum in a fixed order (numpy pairwise summation over the C-order flat array)."""
    return float(np.sum(np.ascontiguousarray(values, dtype=float)))


def apply_stencil(padded, axis, coeffs, spacing, power=1):
    """Apply a centered stencil along `axis` of an array padded accordingly.

    Returns an array shrunk by (len(coeffs)-1)/2 cells at each end of `axis`;
    other axes untouched.
    """
    half = (len(coeffs) - 1) // 2
    out = ndimage.correlate1d(padded, coeffs, axis=axis, mode="nearest")
    sl = [slice(None)] * padded.ndim
    sl[axis] = slice(half, padded.shape[axis] - half)
    return out[tuple(sl)] / spacing**power


def fd_first(values, step):
    """5-point first derivative from values at t = -2h, -h, 0, +h, +2h."""
    vm2, vm1, _, vp1, vp2 = values
    return (vm2 - 8.0 * vm1 + 8.0 * vp1 - vp2) / (12.0 * step)


def fd_second(values, step):
    """5-point second derivative from values at t = -2h, -h, 0, +h, +2h."""
    vm2, vm1, v0, vp1, vp2 = values
    return (-vm2 + 16.0 * vm1 - 30.0 * v0 + 16.0 * vp1 - vp2) / (12.0 * step**2)


def derivative_plateau(func, order=1, base_step=0.05, n_steps=5, rel_tol=1e-2):
    """Differentiate t -> func(t) at t = 0 with an automatic dyadic step sweep.

    Runs the 5-point stencil at steps base_step / 2**k, k = 0..n_steps, and picks
    the step minimizing the Richardson-style estimate |D(h) - D(h/2)|.  The dyadic
    ladder lets +-2h evaluations be shared between neighbouring steps; func(t)
    results are memoized so geometry rebuilds are not repeated.

    Returns (value, step, error_estimate).  Raises ConditioningError when no pair
    of neighbouring steps agrees to rel_tol of the derivative scale.
    """
    cache = {}

    def f(t):
        if t not in cache:
            cache[t] = func(t)
        return cache[t]

    stencil = fd_first if order == 1 else fd_second
    estimates = []
    for k in range(n_steps + 1):
        h = base_step / 2.0**k
        d = stencil([f(-2.0 * h), f(-h), f(0.0), f(h), f(2.0 * h)], h)
        estimates.append((h, d))
    best = None
    for (h, d), (_, d_next) in zip(estimates[:-1], estimates[1:]):
        err = abs(d - d_next)
        if best is None or err < best[2]:
            best = (d_next, h / 2.0, err)
    value, step, err = best
    scale = max(abs(value), max(abs(d) for _, d in estimates), 1e-30)
    if err > rel_tol * scale and err > 1e-9:
        raise ConditioningError(
            f"no stable FD plateau: best estimate {err:.3e} at step {step:.3e} "
            f"for derivative of magnitude {scale:.3e}"
        )
    return value, step, err


def chunked_map(fn, n_items, workers=1, chunk=None):
    """Evaluate fn(start, stop) over [0, n_items) in contiguous chunks.

    With workers > 1 the chunks run on a thread pool (numpy kernels release the
    GIL).  Results are concatenated in index order, so the output is bit-identical
    for any worker count: every chunk computes its rows independently and no
    reduction crosses a chunk boundary.
    """
    if n_items == 0:
        return []
    workers = max(1, int(workers))
    if chunk is None:
        chunk = max(1, -(-n_items // workers))
    spans = [(i, min(i + chunk, n_items)) for i in range(0, n_items, chunk)]
    if workers == 1 or len(spans) == 1:
        return [fn(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, a, b) for a, b in spans]
        return [fut.result() for fut in futures]
