"""Deterministic BFGS with strong Wolfe line search, plus affine curve fitting.

Everything here is pure and seed-free: identical inputs give bit-identical
results, which the grid-search harness relies on for reproducible sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidArgumentError,
    LengthMismatchError,
    NoValidCandidateError,
    NonFiniteObjectiveError,
)

STATUS_CONVERGED_GRAD = "converged-grad"
STATUS_CONVERGED_F = "converged-f"
STATUS_MAX_ITERS = "max-iters"
STATUS_LINE_SEARCH_FAILURE = "line-search-failure"

ZERO_VARIANCE_TOL = 1e-12


@dataclass(frozen=True)
class OptimOptions:
    max_iters: int = 200
    grad_tol: float = 1e-8
    f_rel_tol: float = 1e-12
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_search_steps: int = 40

    def __post_init__(self):
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise InvalidArgumentError("need 0 < c1 < c2 < 1")
        if self.grad_tol <= 0 or self.f_rel_tol <= 0:
            raise InvalidArgumentError("tolerances must be positive")


@dataclass
class OptimResult:
    x_star: np.ndarray
    f_star: float
    iterations: int
    status: str


def _interpolate(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi=None):
    """Cubic (or quadratic) interpolation of the line function minimum."""
    span = a_hi - a_lo
    if d_hi is not None:
        # cubic through (f_lo, d_lo) and (f_hi, d_hi)
        d1 = d_lo + d_hi - 3.0 * (f_lo - f_hi) / (a_lo - a_hi)
        disc = d1 * d1 - d_lo * d_hi
        if disc >= 0.0:
            d2 = np.sign(span) * np.sqrt(disc)
            denom = d_hi - d_lo + 2.0 * d2
            if denom != 0.0:
                cand = a_hi - (a_hi - a_lo) * (d_hi + d2 - d1) / denom
                if np.isfinite(cand):
                    return cand
    denom = f_hi - f_lo - d_lo * span
    if denom != 0.0:
        cand = a_lo - 0.5 * d_lo * span * span / denom
        if np.isfinite(cand):
            return cand
    return a_lo + 0.5 * span


def _zoom(phi, dphi, a_lo, a_hi, f_lo, d_lo, f_hi, d_hi, f0, d0, opts):
    """Nocedal-Wright zoom; returns (alpha, f, grad_dot) or None."""
    c1, c2 = opts.wolfe_c1, opts.wolfe_c2
    for _ in range(opts.max_line_search_steps):
        lo, hi = (a_lo, a_hi) if a_lo < a_hi else (a_hi, a_lo)
        width = hi - lo
        a = _interpolate(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
        if not (lo + 0.1 * width <= a <= hi - 0.1 * width):
            a = 0.5 * (a_lo + a_hi)
        fa = phi(a)
        if not np.isfinite(fa) or fa > f0 + c1 * a * d0 or fa >= f_lo:
            a_hi, f_hi, d_hi = a, fa, None
        else:
            da = dphi(a)
            if abs(da) <= -c2 * d0:
                return a, fa, da
            if da * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
            a_lo, f_lo, d_lo = a, fa, da
        if abs(a_hi - a_lo) < 1e-16 * max(1.0, abs(a_lo)):
            break
    if f_lo < f0 and a_lo > 0.0:
        return a_lo, f_lo, d_lo
    return None


def _line_search_wolfe(phi, dphi, f0, d0, opts):
    """Strong Wolfe line search. Returns (alpha, f, grad_dot) or None."""
    c1, c2 = opts.wolfe_c1, opts.wolfe_c2
    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = 1.0
    for it in range(opts.max_line_search_steps):
        fa = phi(a)
        if not np.isfinite(fa):
            a = 0.5 * (a_prev + a)
            continue
        if fa > f0 + c1 * a * d0 or (it > 0 and fa >= f_prev):
            return _zoom(phi, dphi, a_prev, a, f_prev, d_prev, fa, None,
                         f0, d0, opts)
        da = dphi(a)
        if abs(da) <= -c2 * d0:
            return a, fa, da
        if da >= 0.0:
            return _zoom(phi, dphi, a, a_prev, fa, da, f_prev, d_prev,
                         f0, d0, opts)
        a_prev, f_prev, d_prev = a, fa, da
        a = 2.0 * a
    return None


def bfgs_minimize(objective, gradient, x0, opts: OptimOptions | None = None) -> OptimResult:
    """Minimize with BFGS; accepted iterates never increase the objective."""
    opts = opts or OptimOptions()
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    f = float(objective(x))
    if not np.isfinite(f):
        raise NonFiniteObjectiveError(f"objective is {f} at x0")
    g = np.asarray(gradient(x), dtype=float)
    h_inv = np.eye(n)
    status = STATUS_MAX_ITERS
    iterations = 0
    for it in range(opts.max_iters):
        if np.max(np.abs(g)) <= opts.grad_tol:
            status = STATUS_CONVERGED_GRAD
            break
        p = -h_inv @ g
        d0 = float(p @ g)
        if d0 >= 0.0:  # lost positive definiteness numerically; restart
            h_inv = np.eye(n)
            p = -g
            d0 = float(p @ g)
            if d0 >= 0.0:
                status = STATUS_CONVERGED_GRAD
                break

        # line search along p; gradient at the accepted point is recomputed
        # once more below only if needed
        g_cache = {}

        def phi(a):
            return float(objective(x + a * p))

        def dphi(a):
            ga = np.asarray(gradient(x + a * p), dtype=float)
            g_cache[a] = ga
            return float(ga @ p)

        res = _line_search_wolfe(phi, dphi, f, d0, opts)
        if res is None:
            status = STATUS_LINE_SEARCH_FAILURE
            break
        alpha, f_new, _ = res
        g_new = g_cache.get(alpha)
        if g_new is None:
            g_new = np.asarray(gradient(x + alpha * p), dtype=float)
        s = alpha * p
        y = g_new - g
        x = x + s
        iterations = it + 1
        sy = float(s @ y)
        if it == 0 and sy > 0.0:
            h_inv *= sy / float(y @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            hy = h_inv @ y
            h_inv -= rho * (np.outer(s, hy) + np.outer(hy, s))
            h_inv += rho * (1.0 + rho * float(y @ hy)) * np.outer(s, s)
        f_drop = f - f_new
        f, g = f_new, g_new
        if 0.0 <= f_drop <= opts.f_rel_tol * max(1.0, abs(f + f_drop)):
            status = STATUS_CONVERGED_F
            break
    else:
        status = STATUS_MAX_ITERS
    if np.max(np.abs(g)) <= opts.grad_tol and status == STATUS_MAX_ITERS:
        status = STATUS_CONVERGED_GRAD
    return OptimResult(x_star=x, f_star=f, iterations=iterations, status=status)


@dataclass(frozen=True)
class AffineSearchGrid:
    """Coarse (a, b) search specification for fit_affine_wrap."""

    a_magnitudes: np.ndarray = field(
        default_factory=lambda: np.geomspace(0.1, 10.0, 41))
    b_values: np.ndarray = field(
        default_factory=lambda: np.linspace(-10.0, 10.0, 41))
    both_signs: bool = True
    max_samples: int | None = None  # subsample the coarse pass, not the polish
    polish: "OptimOptions | None" = None  # overrides the default polish options


def _solve_cd(z, ys):
    """Closed-form (c, d) for min ||c z + d - y||^2, plus the SSE."""
    m = ys.size
    sz, sy = z.sum(), ys.sum()
    szz, szy = float(z @ z), float(z @ ys)
    denom = m * szz - sz * sz
    if abs(denom) < 1e-12:
        c, d = 0.0, sy / m
    else:
        c = (m * szy - sz * sy) / denom
        d = (sy - c * sz) / m
    r = c * z + d - ys
    return c, d, float(r @ r)


def fit_affine_wrap(f, xs, ys, ab_grid: AffineSearchGrid | None = None, *,
                    domain=None, deriv=None,
                    opts: OptimOptions | None = None):
    """Fit y = c*f(a*x + b) + d; returns (a, b, c, d, r2).

    A coarse (a, b) grid with closed-form (c, d) seeds a joint BFGS polish of
    all four parameters. R^2 is 1 - SSres/SStot of the polished fit; constant
    targets use the zero-variance convention (R^2 = 1 iff the fit is exact).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise LengthMismatchError("xs and ys must have equal length")
    if xs.size < 4:
        raise InvalidArgumentError("need at least 4 samples")
    grid = ab_grid or AffineSearchGrid()
    if domain is None:
        domain = lambda u: np.ones_like(u, dtype=bool)

    xs_c, ys_c = xs, ys
    if grid.max_samples is not None and xs.size > grid.max_samples:
        idx = np.linspace(0, xs.size - 1, grid.max_samples).astype(int)
        xs_c, ys_c = xs[idx], ys[idx]

    a_vals = np.asarray(grid.a_magnitudes, dtype=float)
    if grid.both_signs:
        a_vals = np.concatenate([a_vals, -a_vals])
    b_vals = np.asarray(grid.b_values, dtype=float)

    m = xs_c.size
    u = a_vals[:, None, None] * xs_c[None, None, :] + b_vals[None, :, None]
    feas = domain(u).all(axis=2)
    if not feas.any():
        raise NoValidCandidateError("no feasible (a, b) grid point")
    with np.errstate(all="ignore"):
        z = f(u)
    finite = np.isfinite(z).all(axis=2)
    feas &= finite
    if not feas.any():
        raise NoValidCandidateError("f not finite at any feasible grid point")

    # centered sums keep the closed-form SSE stable when z is near-constant
    z = np.where(np.isfinite(z), z, 0.0)
    yc = ys_c - ys_c.mean()
    zc = z - z.mean(axis=2, keepdims=True)
    szz = (zc * zc).sum(axis=2)
    szy = zc @ yc
    syy = float(yc @ yc)
    # guard against near-constant z per grid point; a global threshold would
    # let one overflowing (a, b) point mask every reasonable candidate
    scale = (z * z).sum(axis=2)
    safe = szz > 1e-24 * scale + 1e-300
    c = np.where(safe, szy / np.where(safe, szz, 1.0), 0.0)
    sse = np.maximum(syy - c * szy, 0.0)
    sse = np.where(feas, sse, np.inf)
    best_flat = int(np.argmin(sse))
    ia, ib = np.unravel_index(best_flat, sse.shape)
    a0, b0 = float(a_vals[ia]), float(b_vals[ib])
    u0 = a0 * xs + b0
    if not domain(u0).all():
        # coarse subsample was feasible but the full set is not; fall back to
        # scanning feasible grid points against the full data
        order = np.argsort(sse, axis=None)
        for flat in order:
            ia, ib = np.unravel_index(int(flat), sse.shape)
            if not np.isfinite(sse[ia, ib]):
                raise NoValidCandidateError("no grid point feasible on full data")
            a0, b0 = float(a_vals[ia]), float(b_vals[ib])
            if domain(a0 * xs + b0).all():
                break
        u0 = a0 * xs + b0
    c0, d0, _ = _solve_cd(f(u0), ys)

    n = xs.size

    def objective(p):
        a, b, cc, dd = p
        uu = a * xs + b
        if not domain(uu).all():
            return np.inf
        with np.errstate(all="ignore"):
            fu = f(uu)
        if not np.all(np.isfinite(fu)):
            return np.inf
        r = cc * fu + dd - ys
        return float(r @ r) / n

    def grad(p):
        a, b, cc, dd = p
        uu = a * xs + b
        with np.errstate(all="ignore"):
            fu = f(uu)
            if deriv is not None:
                fpu = deriv(uu)
            else:
                h = 1e-6
                fpu = (f(uu + h) - f(uu - h)) / (2 * h)
        fu = np.where(np.isfinite(fu), fu, 0.0)
        fpu = np.where(np.isfinite(fpu), fpu, 0.0)
        r = cc * fu + dd - ys
        return np.array([
            2.0 * float(r @ (cc * fpu * xs)) / n,
            2.0 * float(r @ (cc * fpu)) / n,
            2.0 * float(r @ fu) / n,
            2.0 * float(r.sum()) / n,
        ])

    p0 = np.array([a0, b0, c0, d0])
    a, b, cc, dd = p0
    best_sse = objective(p0) * n
    try:
        res = bfgs_minimize(objective, grad, p0,
                            opts or grid.polish
                            or OptimOptions(max_iters=100, grad_tol=1e-10))
        if np.isfinite(res.f_star) and res.f_star * n <= best_sse:
            a, b, cc, dd = res.x_star
            best_sse = res.f_star * n
    except NonFiniteObjectiveError:
        pass

    sstot = float(np.sum((ys - ys.mean()) ** 2))
    if sstot < ZERO_VARIANCE_TOL:
        r2 = 1.0 if best_sse < ZERO_VARIANCE_TOL else -np.inf
    else:
        r2 = 1.0 - best_sse / sstot
    return float(a), float(b), float(cc), float(dd), float(r2)
