import math

import numpy as np
import pytest
from scipy import integrate

from dzm.algebra import alpha_dot
from dzm.errors import ConstraintError, ResonantShellError
from dzm.fields import Grid, ScalarField, SpinorField, lp_norm, weighted_norm
from dzm.spectral import (
    SheetPoint,
    apply_A,
    apply_bracket_d_sq,
    apply_gamma0,
    apply_h0,
    apply_h0_after_A,
    apply_neg_laplacian,
    apply_r0,
    apply_riesz1,
    lattice_wavevector,
    plane_wave,
)


def band_limited(grid, rng, ncomp=4, kmax=None, mean_free=True):
    """Random field whose modes satisfy |m_j| <= kmax (no Nyquist content)."""
    kmax = kmax or grid.n // 4
    shape = grid.shape + ((ncomp,) if ncomp > 1 else ())
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    m = np.fft.fftfreq(grid.n, 1.0 / grid.n)
    keep = (np.abs(m)[:, None, None] <= kmax) & (np.abs(m)[None, :, None] <= kmax) & (np.abs(m)[None, None, :] <= kmax)
    if ncomp > 1:
        keep = keep[..., None]
    coef = np.where(keep, coef, 0)
    if mean_free:
        coef[0, 0, 0] = 0
    vals = np.fft.ifftn(coef, axes=(0, 1, 2))
    cls = SpinorField if ncomp > 1 else ScalarField
    return cls(grid, vals / np.abs(vals).max())


def rel(a, b):
    return (a - b).norm() / b.norm()


def test_sheet_point_validation():
    with pytest.raises(ConstraintError):
        SheetPoint(2.0)
    with pytest.raises(ConstraintError):
        SheetPoint(1 + 1j, "plus")
    with pytest.raises(ConstraintError):
        SheetPoint(-1.0, "minus")
    with pytest.raises(ConstraintError):
        SheetPoint(1.0, "side")
    assert SheetPoint(0).sqrt() == 0


@pytest.mark.parametrize("z", [-1.0, 1j, -1j, -3 + 0.5j, 4 - 1e-3j, 1e-6j])
def test_sqrt_branch(z):
    w = SheetPoint(z).sqrt()
    assert w.imag >= 0 and abs(w * w - z) < 1e-14 * max(1, abs(z))


def test_rims_from_real_root():
    assert SheetPoint.plus(4.0).sqrt() == 2.0
    assert SheetPoint.minus(4.0).sqrt() == -2.0
    # interior points approach the rims from above and below
    assert abs(SheetPoint(4 + 1e-12j).sqrt() - 2) < 1e-12
    assert abs(SheetPoint(4 - 1e-12j).sqrt() + 2) < 1e-12


def test_plane_wave_symbols(grid32):
    k = lattice_wavevector(grid32, (3, -2, 1))
    u0 = np.array([1, 2j, -1, 0.5])
    f = plane_wave(grid32, k, u0)
    assert np.max(np.abs(apply_h0(f).values - alpha_dot(k, f.values))) < 1e-12
    assert np.max(np.abs(apply_A(f).values - alpha_dot(k, f.values) / (k @ k))) < 1e-12
    u = plane_wave(grid32, k)
    assert np.max(np.abs(apply_riesz1(u).values - u.values / np.linalg.norm(k))) < 1e-12
    z = -2 + 1j
    assert np.max(np.abs(apply_gamma0(z, u).values - u.values / (k @ k - z))) < 1e-12
    # residual of a plane wave with Q = 0 is |k|
    assert math.isclose(apply_h0(f).norm() / f.norm(), np.linalg.norm(k), rel_tol=1e-12)


def test_nyquist_and_dc_policy(grid32):
    ny = plane_wave(grid32, lattice_wavevector(grid32, (16, 0, 0)), np.array([1, 0, 0, 0]))
    assert apply_h0(ny).norm() < 1e-12 and apply_A(ny).norm() < 1e-12
    const = SpinorField(grid32, np.ones(grid32.shape + (4,)))
    assert apply_h0(const).norm() < 1e-12 and apply_A(const).norm() < 1e-12
    assert apply_riesz1(ScalarField(grid32, np.ones(grid32.shape))).norm() < 1e-12


def test_h0_squared_is_neg_laplacian(grid32, rng):
    f = band_limited(grid32, rng, mean_free=False)
    assert rel(apply_h0(apply_h0(f)), apply_neg_laplacian(f)) < 1e-12


def test_a_inverts_h0(grid32, rng):
    f = band_limited(grid32, rng)
    assert rel(apply_A(apply_h0(f)), f) < 1e-12
    assert rel(apply_h0_after_A(f), f) < 1e-12


def test_h0_norm_equals_gradient_symbol(grid32, rng):
    from dzm.fields import gradient_norm

    f = band_limited(grid32, rng)
    assert math.isclose(apply_h0(f).norm(), gradient_norm(f), rel_tol=1e-12)


def test_gamma0_zero_after_h0_is_A(grid32, rng):
    g = band_limited(grid32, rng, kmax=15, mean_free=False)
    assert rel(apply_gamma0(0, apply_h0(g)), apply_A(g)) < 1e-12


@pytest.mark.parametrize("z", [-1.0, 1j, -4 - 2j])
def test_bracket_identity(grid32, rng, z):
    u = band_limited(grid32, rng, ncomp=1, mean_free=False)
    gu = apply_gamma0(z, u)
    assert rel(apply_bracket_d_sq(gu), u + (z + 1) * gu) < 1e-12


@pytest.mark.parametrize("z", [0.5j, -1 - 1j, 2 + 0.1j])
def test_r0_is_dirac_resolvent(grid32, rng, z):
    f = band_limited(grid32, rng, mean_free=False)
    out = apply_r0(z, f)
    assert rel(apply_h0(out) - z * out, f) < 1e-12


def test_r0_at_zero_is_A(grid32, rng):
    f = band_limited(grid32, rng)
    assert rel(apply_r0(0, f), apply_A(f)) < 1e-14
    with pytest.raises(ConstraintError):
        apply_r0(SheetPoint(-2.0), f)


def test_rim_shell_refused_and_accepted(grid32, rng):
    u = band_limited(grid32, rng, ncomp=1)
    lam_on = float(lattice_wavevector(grid32, (1, 0, 0)) @ lattice_wavevector(grid32, (1, 0, 0)))
    with pytest.raises(ResonantShellError):
        apply_gamma0(SheetPoint.plus(lam_on), u)
    lam = 0.37 * lam_on
    plus = apply_gamma0(SheetPoint.plus(lam), u)
    minus = apply_gamma0(SheetPoint.minus(lam), u)
    assert rel(plus, minus) < 1e-14
    near = apply_gamma0(lam + 1e-9j, u)
    assert rel(near, plus) < 1e-6


def test_rim_dirac_resolvent(grid32, rng):
    f = band_limited(grid32, rng)
    lam = 0.3
    out = apply_r0(SheetPoint.plus(lam), f)
    assert rel(apply_h0(out) - lam * out, f) < 1e-10


def test_riesz_normalisation_matches_kernel():
    # int e^{-r^2/2} / (2 pi^2 r^2) d^3r  ==  (2 pi)^{-3/2} int |xi|^{-1} e^{-xi^2/2} d^3xi
    kernel_side = integrate.quad(lambda r: 4 * np.pi * math.exp(-r * r / 2) / (2 * np.pi**2), 0, np.inf)[0]
    symbol_side = (2 * np.pi) ** -1.5 * integrate.quad(lambda k: 4 * np.pi * k * math.exp(-k * k / 2), 0, np.inf)[0]
    assert math.isclose(kernel_side, symbol_side, rel_tol=1e-12)
    assert math.isclose(kernel_side, math.sqrt(2 / np.pi), rel_tol=1e-12)


def test_riesz_of_gaussian_near_kernel_value():
    g = Grid(64, 16.0)
    u = ScalarField(g, np.exp(-0.5 * g.radius**2))
    # the lattice drops the DC mode; the remaining periodisation error is O(1/L)
    assert abs(apply_riesz1(u).values[g.origin_index].real - math.sqrt(2 / np.pi)) < 0.02


def test_sobolev_embedding_l6(grid32, rng):
    # ||A f||_6 <= K ||grad A f||_2 = K ||f||_2 with the sharp Sobolev constant K in 3D
    K = (4 / math.sqrt(np.pi)) ** (1 / 3) / math.sqrt(3 * np.pi)
    for _ in range(5):
        f = band_limited(grid32, rng)
        assert lp_norm(apply_A(f), 6) <= K * f.norm()


def test_weighted_bound_sharp_constant(rng):
    # ||A f|| <= 2 ||x f|| <= 2 ||<x> f|| (Hardy, kernel-consistent normalisation)
    g = Grid(32, 8.0)
    for _ in range(20):
        c = rng.uniform(-3, 3, 3)
        rad = rng.uniform(1, 4)
        s = np.sum((g.positions - c) ** 2, axis=-1) / rad**2
        bump = np.where(s < 1, np.exp(-1 / np.maximum(1 - s, 1e-300)), 0.0)
        f = SpinorField(g, bump[..., None] * (rng.standard_normal(4) + 1j * rng.standard_normal(4)))
        assert apply_A(f).norm() <= 2 * weighted_norm(f, 1.0)
