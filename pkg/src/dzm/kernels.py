"""Closed-form kernels and off-grid quadrature.

Kernels take points ``x``, ``y`` with trailing length 3 and broadcast over
leading axes. The Hilbert-Schmidt machinery integrates

    I = int int <x>^(-2s') |k(|x - y|)|^2 <y>^(-2s) dx dy

for k(rho) = exp(i sqrt(z) rho) / (4 pi rho) (or a difference of two such
kernels) either by 6D importance-sampled Monte Carlo or by tensor
Gauss-Legendre after integrating out the directions exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, ndimage, special

from dzm import _backend
from dzm._pure import smooth_step
from dzm.algebra import alpha_dot, alpha_matrix, I4
from dzm.errors import CoincidentPointsError, ConstraintError, ConvergenceError
from dzm.fields import MatrixPotential, SpinorField
from dzm.spectral import SheetPoint, as_sheet_point

KINDS = ("gamma0", "r0", "a_op", "k_weighted")


def check_weights(s: float, sprime: float) -> None:
    if not (s > 0.5 and sprime > 0.5 and s + sprime > 2.0):
        raise ConstraintError(
            f"weights need s, s' > 1/2 and s + s' > 2 (Hilbert-Schmidt condition); got s={s}, s'={sprime}"
        )


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    z: SheetPoint | None = None
    s: float | None = None
    sprime: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConstraintError(f"kernel kind must be one of {KINDS}")
        if self.kind in ("gamma0", "r0", "k_weighted") and self.z is None:
            raise ConstraintError(f"kernel {self.kind} needs a spectral parameter")
        if self.kind == "k_weighted":
            check_weights(self.s, self.sprime)

    def evaluate(self, x, y):
        if self.kind == "gamma0":
            return gamma0_kernel(self.z, x, y)
        if self.kind == "r0":
            return r0_kernel(self.z, x, y)
        if self.kind == "a_op":
            return a_kernel(x, y)
        wx = (1.0 + np.sum(np.asarray(x, float) ** 2, axis=-1)) ** (-0.5 * self.sprime)
        wy = (1.0 + np.sum(np.asarray(y, float) ** 2, axis=-1)) ** (-0.5 * self.s)
        return wx * gamma0_kernel(self.z, x, y) * wy


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = "monte_carlo"
    samples: int = 10**6
    order: int = 16
    delta: float = 1e-3
    tol: float = 1e-2
    seed: int = 0
    radius: float | None = None
    batch: int = 100_000

    def __post_init__(self):
        if self.scheme not in ("monte_carlo", "gauss_legendre"):
            raise ConstraintError(f"unknown quadrature scheme {self.scheme!r}")
        if not self.delta > 0:
            raise ConstraintError("diagonal exclusion radius delta must be positive")


@dataclass
class QuadResult:
    value: float
    error: float
    scheme: str
    radius: float
    tail: float = 0.0
    diagonal: float = 0.0
    samples: int = 0
    extra: dict = field(default_factory=dict)


# -- pointwise kernels ------------------------------------------------------


def _separation(x, y):
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.sqrt(np.sum(d * d, axis=-1))
    if np.any(r == 0.0):
        raise CoincidentPointsError("kernel evaluated at coincident points x == y")
    return d, r


def gamma0_kernel(z, x, y):
    """exp(i sqrt(z) |x-y|) / (4 pi |x-y|) with Im sqrt(z) >= 0."""
    p = as_sheet_point(z)
    _, r = _separation(x, y)
    k = p.sqrt()
    if p.rim != "interior":
        # rim phases from sqrt(lambda) directly
        k = float(k.real)
        return (np.cos(k * r) + 1j * np.sin(k * r)) / (4.0 * np.pi * r)
    return np.exp(1j * k * r) / (4.0 * np.pi * r)


def a_kernel(x, y):
    """i alpha.(x-y) / (4 pi |x-y|^3) as a 4x4 matrix."""
    d, r = _separation(x, y)
    return 1j * alpha_matrix(d) / (4.0 * np.pi * np.asarray(r)[..., None, None] ** 3)


def r0_kernel(z, x, y):
    """Kernel of the free Dirac resolvent R0(z), z in the closed half plane C+ or C-.

    [i a.(x-y)/r^2 +- z a.(x-y)/r + z I] exp(+-i z r) / (4 pi r); the sign is
    that of Im z (or of the rim).
    """
    p = as_sheet_point(z)
    if p.rim == "interior" and p.z.imag == 0.0 and p.z != 0:
        raise ConstraintError(f"interior Dirac parameter needs Im z != 0, got {p.z}")
    sign = p.dirac_sign()
    zz = p.z if p.rim == "interior" else complex(p.lam)
    d, r = _separation(x, y)
    r = np.asarray(r)
    ad = alpha_matrix(d)
    rr = r[..., None, None]
    mat = 1j * ad / rr**2 + sign * zz * ad / rr + zz * I4
    phase = np.exp(sign * 1j * zz * r)[..., None, None]
    return mat * phase / (4.0 * np.pi * rr)


# -- Gauss-Legendre helpers -------------------------------------------------


def _gl_panels(edges, order):
    """Nodes and weights of composite Gauss-Legendre on consecutive edges."""
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * t + 0.5 * (b + a)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def _radial_edges(lo, hi, ratio=2.0, marks=(), max_width=None):
    """Geometric breakpoints on [0, hi] with extra marks and optional width cap."""
    pts = [0.0]
    x = lo
    while x < hi:
        pts.append(x)
        step = x * (ratio - 1.0)
        if max_width is not None and step > max_width:
            step = max_width
        x = x + step
    pts.append(hi)
    pts.extend(m for m in marks if 0.0 < m < hi)
    return np.unique(np.asarray(pts))


def _bracket_pow(r2, p):
    return (1.0 + r2) ** p


def _shell_weight(r, rho, s):
    """int_{|r-rho|}^{r+rho} t (1+t^2)^-s dt, stable for small r*rho."""
    a = 1.0 + (r - rho) ** 2
    lg = np.log1p(4.0 * r * rho / a)
    if abs(s - 1.0) < 1e-14:
        return 0.5 * lg
    return a ** (1.0 - s) * np.expm1((1.0 - s) * lg) / (2.0 * (1.0 - s))


def _phase_sq(k1, k2, rho, smooth_from=np.inf):
    """|exp(i k1 rho) - exp(i k2 rho)|^2 (k2 None: |exp(i k1 rho)|^2).

    Beyond ``smooth_from`` the beat factor sin^2 is replaced by its mean 1/2.
    """
    if k2 is None:
        return np.exp(-2.0 * k1.imag * rho)
    a = np.exp(-k1.imag * rho)
    b = np.exp(-k2.imag * rho)
    # a^2 + b^2 - 2ab cos(dk rho), written to avoid cancellation when k1 ~ k2
    dk = k1.real - k2.real
    beat = np.where(rho < smooth_from, np.sin(0.5 * dk * rho) ** 2, 0.5)
    return (a - b) ** 2 + 4.0 * a * b * beat


def _oscillation(k1, k2):
    return 0.0 if k2 is None else abs(k1.real - k2.real)


def _hs_gl(k1, k2, s, sprime, order, r_range=(0.0, np.inf), rmax=1e8):
    """Tensor Gauss-Legendre value of I restricted to r_range of |x|."""
    osc = _oscillation(k1, k2)
    # resolve the beat up to rho_c, average it beyond
    rho_c = np.inf if osc == 0.0 else 2000.0 / osc
    lo = max(r_range[0], 0.0)
    hi = min(r_range[1], rmax)
    r_edges = _radial_edges(1e-4, rmax, marks=(1.0,))
    r_edges = np.unique(np.clip(np.concatenate([r_edges, [lo, hi]]), lo, hi))
    rho_edges = _radial_edges(1e-4, 2.0 * rmax, marks=(1.0,))
    if np.isfinite(rho_c):
        fine = np.arange(0.0, rho_c, 0.5 / osc)
        rho_edges = np.unique(np.concatenate([rho_edges, fine, [rho_c]]))
    r, wr = _gl_panels(r_edges, order)
    # the shell weight has a unit-width ridge at rho = r; cluster panels there
    offsets = _radial_edges(1e-3, 2.0 * rmax)[1:]
    total = 0.0
    for ri, wi in zip(r, wr):
        ridge = np.concatenate([ri - offsets[offsets < ri], ri + offsets])
        edges = np.unique(np.concatenate([rho_edges, ridge[ridge < 2.0 * rmax], [ri]]))
        rho, wrho = _gl_panels(edges, order)
        G = _shell_weight(ri, rho, s)
        f = 0.5 * ri / rho * _bracket_pow(ri**2, -sprime) * _phase_sq(k1, k2, rho, rho_c) * G
        total += wi * float(np.dot(f, wrho))
    return total


def _wavenumbers(z1, z2):
    p1 = as_sheet_point(z1)
    k1 = p1.sqrt()
    k2 = None if z2 is None else as_sheet_point(z2).sqrt()
    return k1, k2


def _diagonal_ball(k1, k2, s, sprime, delta):
    """Contribution of |x - y| < delta: 4 pi delta |k-phase(0)|^2/(16 pi^2) int <x>^-2(s+s')."""
    g0 = float(_phase_sq(k1, k2, np.array(0.0)))
    if g0 == 0.0:
        return 0.0
    a = s + sprime
    wint = np.pi**1.5 * special.gamma(a - 1.5) / special.gamma(a)
    return 4.0 * np.pi * delta * g0 / (16.0 * np.pi**2) * wint


def _tail_mass(k1, k2, s, sprime, R, order=12):
    """Mass of {|x| > R} plus {|y| > R}; bounds everything a radius-R sampler misses."""
    tx = _hs_gl(k1, k2, s, sprime, order, r_range=(R, np.inf))
    ty = _hs_gl(k1, k2, sprime, s, order, r_range=(R, np.inf))
    return tx + ty


def _auto_radius(k1, k2, s, sprime, tol, scale):
    R = 32.0
    while R < 1e7:
        if _tail_mass(k1, k2, s, sprime, R) <= 0.1 * tol * scale:
            return R
        R *= 4.0
    return R


def hs_integral(z1, z2, s, sprime, quad: QuadratureSpec | None = None, check: bool = True) -> QuadResult:
    """Squared HS norm of K(z1) (or of K(z1) - K(z2)) with an error estimate."""
    if check:
        check_weights(s, sprime)
    quad = quad or QuadratureSpec()
    k1, k2 = _wavenumbers(z1, z2)
    if k2 is not None and k1 == k2:
        return QuadResult(0.0, 0.0, quad.scheme, 0.0)
    if quad.scheme == "gauss_legendre":
        fine = _hs_gl(k1, k2, s, sprime, quad.order)
        coarse = _hs_gl(k1, k2, s, sprime, max(quad.order - 4, 4))
        tail = _tail_mass(k1, k2, s, sprime, 1e8, order=8)
        return QuadResult(fine, abs(fine - coarse) + tail, "gauss_legendre", 1e8, tail=tail)
    return _hs_monte_carlo(k1, k2, s, sprime, quad)


def _sample_sphere(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]


def _hs_monte_carlo(k1, k2, s, sprime, quad: QuadratureSpec) -> QuadResult:
    scale = _hs_gl(k1, k2, s, sprime, 8)
    R = quad.radius or _auto_radius(k1, k2, s, sprime, quad.tol, scale)
    r_lo = 1e-3
    rho_lo, rho_hi = quad.delta, 2.0 * R
    tail = _tail_mass(k1, k2, s, sprime, R) + _hs_gl(k1, k2, s, sprime, 8, r_range=(0.0, r_lo))
    diag = _diagonal_ball(k1, k2, s, sprime, quad.delta)

    seeds = np.random.SeedSequence(quad.seed)
    nbatch = max(1, -(-quad.samples // quad.batch))
    acc = acc2 = 0.0
    done = 0
    for child in seeds.spawn(nbatch):
        rng = np.random.default_rng(child)
        m = min(quad.batch, quad.samples - done)
        rad = np.exp(rng.uniform(np.log(r_lo), np.log(R), m))
        rho = np.exp(rng.uniform(np.log(rho_lo), np.log(rho_hi), m))
        base = rad[:, None] * _sample_sphere(rng, m)
        u = rho[:, None] * _sample_sphere(rng, m)
        flip = rng.random(m) < 0.5
        # half the pairs anchor y on the radial sampler instead of x
        x = np.where(flip[:, None], base - u, base)
        a, b = _backend.hs_mc_moments(
            np.ascontiguousarray(x), np.ascontiguousarray(u), float(s), float(sprime),
            complex(k1), complex(0 if k2 is None else k2), k2 is not None,
            r_lo, R, rho_lo, rho_hi,
        )
        acc += a
        acc2 += b
        done += m
    mean = acc / done
    var = max(acc2 / done - mean**2, 0.0)
    stderr = math.sqrt(var / done)
    value = mean + diag
    return QuadResult(value, stderr + tail, "monte_carlo", R, tail=tail, diagonal=diag,
                      samples=done, extra={"stderr": stderr, "seed": quad.seed})


def hs_norm_k(z, s: float, sprime: float, quad: QuadratureSpec | None = None, z2=None) -> QuadResult:
    """||K(z)||_HS (or ||K(z) - K(z2)||_HS) for K = <x>^-s' Gamma0(z) <x>^-s."""
    quad = quad or QuadratureSpec()
    sq = hs_integral(z, z2, s, sprime, quad)
    value = math.sqrt(max(sq.value, 0.0))
    err = sq.error / (2.0 * value) if value > 0 else math.sqrt(sq.error)
    res = replace(sq, value=value, error=err)
    if value > 0 and err > quad.tol * value:
        raise ConvergenceError(
            f"HS norm error estimate {err:.3e} exceeds tolerance {quad.tol:g} x value {value:.3e}",
            achieved=res,
        )
    return res


def lap_scan(lam: float, s: float, sprime: float, eps_list, rim: str = "plus",
             quad: QuadratureSpec | None = None) -> list:
    """Rows (lambda, eps, rim, s, sprime, hs_norm, hs_err) of ||K(lam +- i eps) - K^{+-}(lam)||."""
    check_weights(s, sprime)
    if rim not in ("plus", "minus"):
        raise ConstraintError("rim must be 'plus' or 'minus'")
    quad = quad or QuadratureSpec()
    sign = 1.0 if rim == "plus" else -1.0
    boundary = SheetPoint(complex(lam), rim)
    rows = []
    if lam == 0:
        other = SheetPoint(0j, "minus" if rim == "plus" else "plus")
        d = hs_integral(boundary, other, s, sprime, quad)
        rows.append(dict(**{"lambda": lam}, eps=0.0, rim="plus-minus", s=s, sprime=sprime,
                         hs_norm=math.sqrt(d.value), hs_err=d.error))
    for eps in eps_list:
        zi = SheetPoint(complex(lam, sign * eps))
        r = hs_integral(zi, boundary, s, sprime, quad)
        v = math.sqrt(max(r.value, 0.0))
        e = r.error / (2.0 * v) if v > 0 else math.sqrt(r.error)
        rows.append(dict(**{"lambda": lam}, eps=float(eps), rim=rim, s=s, sprime=sprime,
                         hs_norm=v, hs_err=e))
    return rows


def scan_is_monotone(rows) -> bool:
    """Strict decrease in eps order, separated by the combined error bars."""
    seq = [r for r in rows if r["eps"] > 0]
    seq.sort(key=lambda r: -r["eps"])
    return all(b["hs_norm"] + b["hs_err"] < a["hs_norm"] - a["hs_err"] for a, b in zip(seq, seq[1:]))


# -- weight integrals ------------------------------------------------------


def ekku_branch(gamma: float) -> str:
    if gamma < 3:
        return "power"
    if gamma == 3:
        return "log"
    return "saturated"


def ekku_scaled(gamma: float, x_norm: float, J: float) -> float:
    b = math.sqrt(1.0 + x_norm**2)
    branch = ekku_branch(gamma)
    if branch == "power":
        return J * b ** (gamma - 1.0)
    if branch == "log":
        return J * b**2 / math.log(1.0 + b)
    return J * b**2


def ekku_integral(gamma: float, x, quad: QuadratureSpec | None = None) -> QuadResult:
    """J(x) = int dy / (|x - y|^2 <y>^gamma), gamma > 1.

    Spherical coordinates about x remove the |x-y|^-2 singularity; the polar
    variable is replaced by log(1 + |y|^2). Tensor Gauss-Legendre up to the
    truncation radius, hypergeometric tail beyond it.
    """
    if not gamma > 1:
        raise ConstraintError(f"gamma must exceed 1 (integral diverges), got {gamma}")
    quad = quad or QuadratureSpec(scheme="gauss_legendre")
    r = float(np.linalg.norm(np.asarray(x, dtype=float)))
    R = quad.radius or 64.0 * max(1.0, r)
    if R <= 2.0 * r:
        raise ConstraintError(f"truncation radius {R} must exceed 2|x| = {2 * r}")

    def body(order):
        edges = _radial_edges(1e-3, R, ratio=1.5, marks=(r, max(r - 1, 0), r + 1, 1.0),
                              max_width=max(1.0, 0.25 * r))
        rho, wrho = _gl_panels(edges, order)
        t, wt = np.polynomial.legendre.leggauss(order)
        a = np.log1p((r - rho) ** 2)
        b = np.log1p((r + rho) ** 2)
        u = 0.5 * (b - a)[:, None] * t[None, :] + 0.5 * (b + a)[:, None]
        wu = 0.5 * (b - a)[:, None] * wt[None, :]
        # dc = e^u du / (2 r rho); integrand (e^u)^(-gamma/2)
        if r == 0.0:
            inner = 4.0 * np.pi * (1.0 + rho**2) ** (-0.5 * gamma)
        else:
            inner = 2.0 * np.pi * np.sum(wu * np.exp((1.0 - 0.5 * gamma) * u), axis=1) / (2.0 * r * rho)
        return float(np.sum(wrho * inner))

    fine = body(quad.order)
    coarse = body(max(quad.order - 6, 4))
    c = 1.0 + r * r
    tail = 4.0 * np.pi * R ** (1.0 - gamma) / (gamma - 1.0) * special.hyp2f1(
        0.5 * gamma, 0.5 * (gamma - 1.0), 0.5 * (gamma + 1.0), -c / R**2)
    # angular average of (A + B c)^-p: 1 + p(p+1) B^2 / (6 A^2) + O((B/A)^4)
    p = 0.5 * gamma
    tail += 4.0 * np.pi * (2.0 / 3.0) * p * (p + 1.0) * r * r * R ** (-2.0 * p - 1.0) / (2.0 * p + 1.0)
    tail_err = tail * p * (p + 1.0) * (p + 2.0) * (p + 3.0) / 7.5 * (r / R) ** 4
    return QuadResult(fine + tail, abs(fine - coarse) + tail_err, "gauss_legendre", R, tail=tail)


def ekku_table(gammas, x_norms, quad: QuadratureSpec | None = None) -> list:
    rows = []
    for gamma in gammas:
        for xn in x_norms:
            J = ekku_integral(gamma, (xn, 0.0, 0.0), quad).value
            rows.append(dict(gamma=float(gamma), x_norm=float(xn), J=float(J),
                             J_scaled=float(ekku_scaled(gamma, xn, J)), branch=ekku_branch(gamma)))
    return rows


# -- L-infinity split constants ------------------------------------------


def bound_constants_linf(p: float, q: float) -> tuple:
    """Hoelder constants (near, far) of the split I1 = h0 * u + h1 * u.

    near = (1/2pi^2) (int_{|y|<=1} |y|^(-2q'))^(1/q'),
    far  = (1/2pi^2) (int_{|y|>=1} |y|^(-2p'))^(1/p').
    """
    if not (1.0 < p < 3.0 < q < math.inf):
        raise ConstraintError(f"need 1 < p < 3 < q < inf (integrals diverge otherwise), got p={p}, q={q}")
    qc = q / (q - 1.0)
    pc = p / (p - 1.0)
    near = (4.0 * np.pi / (3.0 - 2.0 * qc)) ** (1.0 / qc) / (2.0 * np.pi**2)
    far = (4.0 * np.pi / (2.0 * pc - 3.0)) ** (1.0 / pc) / (2.0 * np.pi**2)
    return near, far


# -- direct application of A ---------------------------------------------


def _sphere_rule(n_theta: int, n_phi: int):
    c, wc = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - c**2)
    dirs = np.stack(
        [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(c, np.ones(n_phi))], axis=-1
    ).reshape(-1, 3)
    w = np.outer(wc, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    return dirs, w


class _Interpolant:
    """Periodic quintic-spline interpolation of a 4-component grid field."""

    def __init__(self, grid, values):
        self.grid = grid
        self.coeffs = [
            ndimage.spline_filter(part, order=5, mode="grid-wrap")
            for c in range(values.shape[-1])
            for part in (np.ascontiguousarray(values[..., c].real), np.ascontiguousarray(values[..., c].imag))
        ]

    def __call__(self, pts):
        g = self.grid
        idx = ((np.asarray(pts) + g.L) / g.h).T
        out = np.empty((idx.shape[1], len(self.coeffs) // 2), dtype=complex)
        for c in range(out.shape[1]):
            re = ndimage.map_coordinates(self.coeffs[2 * c], idx, order=5, mode="grid-wrap", prefilter=False)
            im = ndimage.map_coordinates(self.coeffs[2 * c + 1], idx, order=5, mode="grid-wrap", prefilter=False)
            out[:, c] = re + 1j * im
        return out


def _ball_part(source, x0, r_a, r_b, order=16, n_theta=24, n_phi=48, taper=None):
    """(i/4pi) int_{r_a}^{r_b} drho int dw (alpha.w) [taper(rho)] g(x0 - rho w)."""
    dirs, wdir = _sphere_rule(n_theta, n_phi)
    edges = np.linspace(r_a, r_b, 3)
    rho, wrho = _gl_panels(edges, order)
    acc = np.zeros(4, dtype=complex)
    for rr, wr in zip(rho, wrho):
        vals = source(x0[None, :] - rr * dirs)
        t = 1.0 if taper is None else taper(rr)
        acc += wr * t * np.sum(wdir[:, None] * alpha_dot(dirs, vals), axis=0)
    return 1j * acc / (4.0 * np.pi)


@dataclass
class PointwiseResult:
    value: np.ndarray
    near: np.ndarray
    far: np.ndarray
    near_bound: float
    tail_estimate: float


def apply_a_quadrature(g: SpinorField, x0, r: float, source=None):
    """(A g)(x0) split into the ball B(x0, 2r) and its exterior.

    The exterior uses a grid sum with a smooth cutoff (compiled core) plus a
    spherical correction on the cutoff shell; the ball uses spherical
    Gauss-Legendre with g interpolated off-grid (or the callable ``source``).
    Returns (near, far) 4-spinors.
    """
    grid = g.grid
    if r < 2.0 * grid.h:
        raise ConstraintError(f"ball radius r = {r} must be at least 2h = {2 * grid.h}")
    x0 = np.asarray(x0, dtype=float)
    src = source or _Interpolant(grid, g.values)
    r_in = 2.0 * r
    r_out = r_in + max(2.0 * r, 8.0 * grid.h)
    width = r_out - r_in

    def chi(rho):
        return smooth_step((r_out - rho) / width)

    near = _ball_part(src, x0, 0.0, r_in)
    shell = _ball_part(src, x0, r_in, r_out, taper=lambda rr: float(chi(np.array([rr]))[0]))
    bulk = _backend.a_kernel_far_sum(
        np.ascontiguousarray(x0[None, :]), float(grid.L), float(grid.h), int(grid.n),
        np.array(g.values, dtype=complex, order="C"), float(r_in), float(r_out),
    )[0]
    return near, bulk + shell


def evaluate_pointwise(f: SpinorField, Q: MatrixPotential, x0, r: float,
                       C_q: float | None = None, C_f: float | None = None) -> PointwiseResult:
    """-(A Q f)(x0) = f_b + f_e with the near part over B(x0, 2r)."""
    if f.grid != Q.grid:
        raise ConstraintError("field and potential live on different grids")
    g = Q.apply(f)
    near, far = apply_a_quadrature(g, x0, r)
    grid = f.grid
    C_q = Q.C if C_q is None else C_q
    if C_f is None:
        C_f = float(np.max(f.pointwise_abs() * grid.bracket(2.0)))
    bound = 3.0 / (4.0 * np.pi) * (C_q or 0.0) * C_f * near_ball_measure(r)
    return PointwiseResult(-(near + far), -near, -far, bound, _box_tail(g, x0, Q.rho))


def near_ball_measure(r: float) -> float:
    """int_{|y| <= 2r} |y|^-2 dy = 8 pi r."""
    return 8.0 * np.pi * r


def _box_tail(g: SpinorField, x0, rho):
    """Estimate of the part of the R^3 integral lying outside the box."""
    grid = g.grid
    L = grid.L
    a = float(np.linalg.norm(x0))
    if a >= 0.9 * L:
        return math.inf
    shell = grid.radius >= 0.9 * L
    G = float(np.max(g.pointwise_abs()[shell]))
    p = 2.0 + (rho if rho is not None and np.isfinite(rho) else 2.0)
    val, _ = integrate.quad(lambda t: t**2 / (t - a) ** 2 * (0.9 * L / t) ** p, L, np.inf)
    return G * val


def far_difference_bound(g: SpinorField, x0, r: float) -> float:
    """Integrable majorant of |f_e(x) - f_e(x0)| valid for |x - x0| < r.

    (3 / 4pi) (1 + (3/2)^2) int_{|x0 - y| > r} |x0 - y|^-2 |g(y)| dy as a grid sum.
    """
    grid = g.grid
    dist = np.linalg.norm(grid.positions - np.asarray(x0, dtype=float), axis=-1)
    keep = dist > r
    total = grid.cell_volume * np.sum(g.pointwise_abs()[keep] / dist[keep] ** 2)
    return float(3.0 / (4.0 * np.pi) * (1.0 + 2.25) * total)
